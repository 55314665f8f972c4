use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::Context;
use chrono::{DateTime, Utc};
use discussion_dynamics::identify::{self, predict_count_at, FitMethod, FitReport};
use discussion_dynamics::ingest::{
    build_step_response, detect_steady_state, group_threads, parse_posts, parse_timestamp, write_posts_csv,
    DiscussionThread, InputFormat,
};
use discussion_dynamics::response::{FopdtModel, LogisticModel, ResponseModel, MAX_DECIMALS};
use discussion_dynamics::simulate::{
    default_start, sample_response, simulate_size_corpus, simulate_thread, SimulationConfig,
};
use discussion_dynamics::zipf::{self, CountMode, PowerLawSizes};
use discussion_dynamics::TimeUnit;
use serde_json::json;

use crate::args::{
    Command, CountModeArg, FitArgs, InputArgs, InputFormatArg, MethodArg, ModelArgs, OutputFormat, PredictArgs,
    ResponseArgs, SimulateArgs, UnitArg, ZipfArgs,
};
use crate::{usage, CliError};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(args) => run_fit(args),
        Command::Predict(args) => run_predict(args),
        Command::Zipf(args) => run_zipf(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Response(args) => run_response(args),
    }
}

impl From<UnitArg> for TimeUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Hour => TimeUnit::Hour,
            UnitArg::Day => TimeUnit::Day,
        }
    }
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::TwoPoint => FitMethod::TwoPoint,
            MethodArg::Area => FitMethod::Area,
            MethodArg::LeastSquares => FitMethod::LeastSquares,
            MethodArg::Logistic => FitMethod::Logistic,
        }
    }
}

impl From<CountModeArg> for CountMode {
    fn from(m: CountModeArg) -> Self {
        match m {
            CountModeArg::Replies => CountMode::Replies,
            CountModeArg::AllPosts => CountMode::AllPosts,
        }
    }
}

fn check_decimals(decimals: usize) -> Result<(), CliError> {
    if decimals > MAX_DECIMALS {
        return Err(usage(format!("--decimals must be at most {MAX_DECIMALS}")));
    }
    Ok(())
}

fn timestamp_flag(name: &str, raw: &str) -> Result<DateTime<Utc>, CliError> {
    parse_timestamp(raw).ok_or_else(|| usage(format!("--{name}: cannot parse timestamp `{raw}`")))
}

fn read_threads(input: &InputArgs) -> Result<Vec<DiscussionThread>, CliError> {
    let format = match input.input_format {
        Some(InputFormatArg::Csv) => InputFormat::Csv,
        Some(InputFormatArg::Jsonl) => InputFormat::JsonLines,
        None => InputFormat::from_path(&input.input),
    };
    let file = File::open(&input.input).with_context(|| format!("cannot open {}", input.input.display()))?;
    let parsed = parse_posts(BufReader::new(file), format)
        .with_context(|| format!("reading {}", input.input.display()))?;
    if parsed.skipped > 0 {
        eprintln!("warning: skipped {} malformed record(s)", parsed.skipped);
    }
    Ok(group_threads(parsed.records))
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Builds the model named by the flags. FOPDT needs `-K -T -L`; logistic
/// needs `-K --rate --n0`.
fn model_from_flags(p: &ModelArgs) -> Result<ResponseModel, CliError> {
    let unit = TimeUnit::from(p.time_unit);
    let gain = p.gain.ok_or_else(|| usage("missing --gain"))?;
    if p.logistic {
        let rate = p.rate.ok_or_else(|| usage("logistic model needs --rate"))?;
        let n0 = p.n0.ok_or_else(|| usage("logistic model needs --n0"))?;
        let model = LogisticModel::new(gain, rate, n0, unit).map_err(|e| usage(e.to_string()))?;
        Ok(model.into())
    } else {
        let tc = p.time_constant.ok_or_else(|| usage("missing --time-constant"))?;
        let dead = p.dead_time.ok_or_else(|| usage("missing --dead-time"))?;
        let model = FopdtModel::new(gain, tc, dead, unit).map_err(|e| usage(e.to_string()))?;
        Ok(model.into())
    }
}

fn default_horizon(model: &ResponseModel, horizon: Option<f64>) -> Result<f64, CliError> {
    match (horizon, model) {
        (Some(h), _) if h.is_finite() && h > 0.0 => Ok(h),
        (Some(h), _) => Err(usage(format!("--horizon must be positive, got {h}"))),
        (None, ResponseModel::Fopdt(m)) => Ok(m.dead_time() + 10.0 * m.time_constant()),
        (None, ResponseModel::Logistic(_)) => Err(usage("logistic models need an explicit --horizon")),
    }
}

fn run_fit(args: FitArgs) -> Result<(), CliError> {
    if !(args.quiet_window.is_finite() && args.quiet_window > 0.0) {
        return Err(usage("--quiet-window must be a positive number of hours"));
    }
    check_decimals(args.decimals)?;
    let archive_end = args
        .archive_end
        .as_deref()
        .map(|raw| timestamp_flag("archive-end", raw))
        .transpose()?;
    let unit = TimeUnit::from(args.time_unit);
    let method = FitMethod::from(args.method);
    let quiet_window = TimeUnit::Hour.convert(args.quiet_window, unit);

    let threads = read_threads(&args.input)?;
    let archive_end = archive_end.unwrap_or_else(|| {
        threads
            .iter()
            .filter_map(|t| t.posts().last().map(|p| p.timestamp))
            .max()
            .expect("parse_posts never returns an empty set")
    });

    let mut rows = Vec::with_capacity(threads.len());
    let mut plot = String::from("thread_id\tt\tobserved\tfitted\n");
    let mut succeeded = 0usize;
    for thread in &threads {
        let mut series = build_step_response(thread, unit);
        series.observe_until(thread.elapsed(&archive_end, unit));
        let complete = detect_steady_state(&mut series, quiet_window);
        let result = identify::fit(&series, method);
        if let Ok(report) = &result {
            succeeded += 1;
            append_plot(&mut plot, thread.thread_id(), report);
        }
        rows.push((thread.thread_id().to_owned(), thread.reply_count(), complete, result));
    }

    let text = match args.output.format {
        OutputFormat::Json => fit_rows_json(&rows, method, args.decimals),
        OutputFormat::Tsv => fit_rows_tsv(&rows, method, args.decimals),
    };
    emit(args.output.out.as_deref(), &text)?;
    if let Some(path) = &args.plot_out {
        emit(Some(path), &plot)?;
    }
    if succeeded == 0 {
        return Err(CliError::Data(anyhow::anyhow!("no thread could be fitted")));
    }
    Ok(())
}

type FitRow = (String, usize, bool, Result<FitReport, identify::FitError>);

fn fit_rows_json(rows: &[FitRow], method: FitMethod, decimals: usize) -> String {
    let mut out = String::new();
    for (id, replies, complete, result) in rows {
        let mut obj = serde_json::Map::new();
        obj.insert("thread_id".into(), id.as_str().into());
        obj.insert("replies".into(), (*replies).into());
        obj.insert("complete".into(), (*complete).into());
        match result {
            Ok(report) => {
                if let serde_json::Value::Object(summary) = report.summary_json(decimals) {
                    obj.extend(summary);
                }
            }
            Err(err) => {
                obj.insert("method".into(), method.as_str().into());
                obj.insert("error".into(), err.to_string().into());
            }
        }
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

fn fit_rows_tsv(rows: &[FitRow], method: FitMethod, decimals: usize) -> String {
    let mut out = String::from("thread_id\treplies\tcomplete\tmethod\tK\tT\tL\tb\tn0\ttime_unit\trmse\ttransfer_function\terror\n");
    for (id, replies, complete, result) in rows {
        let _ = write!(out, "{id}\t{replies}\t{complete}\t{}\t", method.as_str());
        match result {
            Ok(report) => {
                let unit = report.model.time_unit();
                match &report.model {
                    ResponseModel::Fopdt(m) => {
                        let _ = write!(
                            out,
                            "{}\t{}\t{}\t\t\t{unit}\t{}\t{}\t",
                            m.gain(),
                            m.time_constant(),
                            m.dead_time(),
                            report.rmse,
                            m.transfer_function(decimals)
                        );
                    }
                    ResponseModel::Logistic(m) => {
                        let _ = write!(
                            out,
                            "{}\t\t\t{}\t{}\t{unit}\t{}\t\t",
                            m.scale(),
                            m.rate(),
                            m.initial_fraction(),
                            report.rmse
                        );
                    }
                }
            }
            Err(err) => {
                let _ = write!(out, "\t\t\t\t\t\t\t\t{err}");
            }
        }
        out.push('\n');
    }
    out
}

fn append_plot(plot: &mut String, id: &str, report: &FitReport) {
    for r in &report.residuals {
        let fitted = report.model.evaluate(r.t);
        let _ = writeln!(plot, "{id}\t{}\t{}\t{}", r.t, r.residual + fitted, fitted);
    }
}

fn model_from_json(path: &Path) -> Result<ResponseModel, CliError> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| usage(format!("{} holds no model", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| usage(format!("invalid model JSON: {e}")))?;
    if value.get("error").is_some() {
        return Err(usage("model file holds a failed fit"));
    }
    serde_json::from_value(value).map_err(|e| usage(format!("invalid model: {e}")))
}

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    check_decimals(args.decimals)?;
    if !(args.at.is_finite() && args.at >= 0.0) {
        return Err(usage("--at must be a finite time >= 0"));
    }
    let model = match &args.model {
        Some(path) => model_from_json(path)?,
        None => model_from_flags(&args.params)?,
    };
    let (value, rounded) = match &model {
        ResponseModel::Fopdt(m) => {
            let p = predict_count_at(m, args.at);
            (p.value, p.rounded)
        }
        ResponseModel::Logistic(m) => {
            let v = m.value(args.at);
            (v, v.round() as i64)
        }
    };
    let text = match args.output.format {
        OutputFormat::Json => {
            let mut s = json!({
                "t": args.at,
                "value": value,
                "rounded": rounded,
                "time_unit": model.time_unit().as_str(),
            })
            .to_string();
            s.push('\n');
            s
        }
        OutputFormat::Tsv => {
            let d = args.decimals;
            format!("t\tvalue\trounded\n{}\t{value:.d$}\t{rounded}\n", args.at)
        }
    };
    emit(args.output.out.as_deref(), &text)
}

fn run_zipf(args: ZipfArgs) -> Result<(), CliError> {
    if args.k_min == 0 {
        return Err(usage("--k-min must be at least 1"));
    }
    if args.prior.contains(&0) {
        return Err(usage("--prior sizes must be at least 1"));
    }
    let mode = CountMode::from(args.count_mode);
    let threads = read_threads(&args.input)?;
    let hist = zipf::histogram_from_threads(&threads, mode);
    if hist.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("no thread has a nonzero size")));
    }
    let fit = zipf::fit_power_law(&hist, args.k_min);

    let text = match args.output.format {
        OutputFormat::Tsv => zipf::plot_tsv(&hist, fit.as_ref().ok()),
        OutputFormat::Json => {
            let histogram: Vec<[u64; 2]> = hist.counts().iter().map(|(&k, &f)| [k, f]).collect();
            let prior: Vec<serde_json::Value> = args
                .prior
                .iter()
                .map(|&k| json!({"k": k, "p": zipf::gain_prior(&hist, k)}))
                .collect();
            let mut obj = json!({
                "count_mode": mode,
                "total": hist.total(),
                "histogram": histogram,
                "fit": fit.as_ref().ok(),
                "prior": prior,
            });
            if let Err(e) = &fit {
                obj["fit_error"] = e.to_string().into();
            }
            let mut s = obj.to_string();
            s.push('\n');
            s
        }
    };
    emit(args.output.out.as_deref(), &text)?;
    if let Some(path) = &args.plot_out {
        emit(Some(path), &zipf::plot_tsv(&hist, fit.as_ref().ok()))?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let start = args
        .start
        .as_deref()
        .map(|raw| timestamp_flag("start", raw))
        .transpose()?
        .unwrap_or_else(default_start);

    let threads = if let Some(count) = args.corpus_size {
        let sizes = PowerLawSizes::new(args.exponent, args.k_max).map_err(|e| usage(e.to_string()))?;
        simulate_size_corpus(&sizes, count, args.seed, start).0
    } else {
        if args.threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        let model = model_from_flags(&args.params)?;
        let horizon = default_horizon(&model, args.horizon)?;
        let mut config = SimulationConfig::new(model, args.seed, horizon).map_err(|e| usage(e.to_string()))?;
        if let (Some(a), Some(b)) = (args.gap_start, args.gap_end) {
            config = config.with_gap(a, b).map_err(|e| usage(e.to_string()))?;
        }
        let config = config.with_start(start);
        (0..args.threads as u64)
            .map(|i| {
                let seed = args.seed.wrapping_add(i);
                simulate_thread(&config.clone().with_seed(seed).with_thread_id(format!("sim-{seed}")))
            })
            .collect()
    };

    let mut buf = Vec::new();
    write_posts_csv(&threads, &mut buf).context("writing CSV")?;
    let text = String::from_utf8(buf).context("CSV output is UTF-8")?;
    emit(args.out.as_deref(), &text)
}

fn run_response(args: ResponseArgs) -> Result<(), CliError> {
    check_decimals(args.decimals)?;
    let model = model_from_flags(&args.params)?;
    let horizon = default_horizon(&model, args.horizon)?;
    if !(args.grid.is_finite() && args.grid > 0.0 && args.grid <= horizon) {
        return Err(usage("--grid must be positive and no larger than the horizon"));
    }
    let series = sample_response(&model, args.grid, horizon).map_err(|e| usage(e.to_string()))?;
    let d = args.decimals;
    let text = match args.format {
        OutputFormat::Tsv => {
            let mut s = String::from("t\ty\n");
            for p in series.points() {
                let _ = writeln!(s, "{:.d$}\t{:.d$}", p.t, p.y);
            }
            s
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string(series.points()).context("serializing points")?;
            s.push('\n');
            s
        }
    };
    emit(args.out.as_deref(), &text)
}
