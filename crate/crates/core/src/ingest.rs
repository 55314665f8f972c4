//! Post archives to step-response series.
//!
//! Each thread's initial post is the input step (t = 0) and every later post is
//! one unit of output, so the cumulative reply count is the step response.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::TimeUnit;

/// Default quiet period after the last reply before a thread counts as settled.
pub const DEFAULT_QUIET_WINDOW_HOURS: f64 = 72.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("input header is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("no parseable post records in input ({skipped} malformed lines skipped)")]
    Empty { skipped: usize },
    #[error("a thread needs at least one post")]
    EmptyThread,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl InputFormat {
    /// Guess from a file name: `.jsonl`, `.ndjson` and `.json` are JSON lines,
    /// anything else is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => InputFormat::JsonLines,
            _ => InputFormat::Csv,
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "json-lines" | "jsonlines" | "ndjson" => Ok(InputFormat::JsonLines),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

/// One timestamped post of a thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub thread_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

impl PostRecord {
    /// Builds a record, returning `None` for an empty thread id or an
    /// unparseable timestamp.
    pub fn parse(thread_id: &str, timestamp: &str, author: Option<&str>) -> Option<Self> {
        let thread_id = thread_id.trim();
        if thread_id.is_empty() {
            return None;
        }
        Some(PostRecord {
            thread_id: thread_id.to_owned(),
            timestamp: parse_timestamp(timestamp)?,
            author: author
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(str::to_owned),
        })
    }
}

/// Parses RFC 3339 / ISO-8601 with offset, or integer epoch seconds.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if raw.bytes().all(|b| b.is_ascii_digit()) || (raw.starts_with('-') && raw.len() > 1 && raw[1..].bytes().all(|b| b.is_ascii_digit())) {
        let secs: i64 = raw.parse().ok()?;
        return DateTime::from_timestamp(secs, 0);
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

/// Formats an instant the way [`parse_timestamp`] reads it back.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPosts {
    pub records: Vec<PostRecord>,
    /// Malformed rows or lines that were dropped.
    pub skipped: usize,
}

/// Reads post records. Malformed rows are skipped and counted, never fatal.
pub fn parse_posts<R: Read>(source: R, format: InputFormat) -> Result<ParsedPosts, IngestError> {
    let parsed = match format {
        InputFormat::Csv => parse_csv(source)?,
        InputFormat::JsonLines => parse_json_lines(source)?,
    };
    if parsed.records.is_empty() {
        return Err(IngestError::Empty {
            skipped: parsed.skipped,
        });
    }
    Ok(parsed)
}

fn parse_csv<R: Read>(source: R) -> Result<ParsedPosts, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(csv_to_ingest)?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(IngestError::MissingColumn(name))
    };
    let id_col = column("thread_id")?;
    let ts_col = column("timestamp")?;
    let author_col = column("author").ok();

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_to_ingest(e)),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let parsed = match (row.get(id_col), row.get(ts_col)) {
            (Some(id), Some(ts)) => PostRecord::parse(id, ts, author_col.and_then(|c| row.get(c))),
            _ => None,
        };
        match parsed {
            Some(record) => records.push(record),
            None => skipped += 1,
        }
    }
    Ok(ParsedPosts { records, skipped })
}

fn csv_to_ingest(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{other:?}"),
        )),
    }
}

fn parse_json_lines<R: Read>(source: R) -> Result<ParsedPosts, IngestError> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(source).split(b'\n') {
        let line = line?;
        let Ok(text) = std::str::from_utf8(&line) else {
            skipped += 1;
            continue;
        };
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        match json_record(text) {
            Some(record) => records.push(record),
            None => skipped += 1,
        }
    }
    Ok(ParsedPosts { records, skipped })
}

fn json_record(line: &str) -> Option<PostRecord> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let thread_id = obj.get("thread_id")?.as_str()?;
    let timestamp = match obj.get("timestamp")? {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) if n.is_i64() => n.to_string(),
        _ => return None,
    };
    let author = match obj.get("author") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s.as_str()),
        Some(_) => return None,
    };
    PostRecord::parse(thread_id, &timestamp, author)
}

/// Writes threads in the CSV layout [`parse_posts`] reads.
pub fn write_posts_csv<W: std::io::Write>(threads: &[DiscussionThread], out: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| csv_to_ingest(e);
    writer.write_record(["thread_id", "timestamp", "author"]).map_err(io)?;
    for thread in threads {
        for post in thread.posts() {
            writer
                .write_record([
                    post.thread_id.as_str(),
                    &format_timestamp(&post.timestamp),
                    post.author.as_deref().unwrap_or(""),
                ])
                .map_err(io)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Posts of one thread in timestamp order; the first post is the step input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscussionThread {
    thread_id: String,
    posts: Vec<PostRecord>,
}

impl DiscussionThread {
    /// Sorts `posts` by timestamp, keeping input order among equal timestamps.
    pub fn new(thread_id: impl Into<String>, mut posts: Vec<PostRecord>) -> Result<Self, IngestError> {
        if posts.is_empty() {
            return Err(IngestError::EmptyThread);
        }
        posts.sort_by_key(|p| p.timestamp);
        Ok(DiscussionThread {
            thread_id: thread_id.into(),
            posts,
        })
    }

    pub fn thread_id(&self) -> &str {
        &self.thread_id
    }

    pub fn posts(&self) -> &[PostRecord] {
        &self.posts
    }

    pub fn initial_post(&self) -> &PostRecord {
        &self.posts[0]
    }

    pub fn replies(&self) -> &[PostRecord] {
        &self.posts[1..]
    }

    pub fn reply_count(&self) -> usize {
        self.posts.len() - 1
    }

    /// Time from the initial post to `instant`, in `unit`.
    pub fn elapsed(&self, instant: &DateTime<Utc>, unit: TimeUnit) -> f64 {
        let delta = *instant - self.initial_post().timestamp;
        let secs = delta.num_seconds() as f64 + f64::from(delta.subsec_nanos()) * 1e-9;
        secs / unit.seconds()
    }
}

/// Groups records into threads ordered by thread id.
pub fn group_threads(records: impl IntoIterator<Item = PostRecord>) -> Vec<DiscussionThread> {
    let mut groups: BTreeMap<String, Vec<PostRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(record.thread_id.clone()).or_default().push(record);
    }
    groups
        .into_iter()
        .map(|(id, posts)| DiscussionThread::new(id, posts).expect("groups are non-empty"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub y: f64,
}

/// How a series' points are joined between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// Reply events: the count jumps at each point and stays flat until the next.
    Events,
    /// Samples of a continuous curve: linear between points.
    Sampled,
}

/// Cumulative reply count versus time since the initial post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponseSeries {
    time_unit: TimeUnit,
    points: Vec<SeriesPoint>,
    final_count: f64,
    complete: bool,
    observed_until: f64,
    kind: SeriesKind,
}

impl StepResponseSeries {
    /// Validated constructor. `observed_until` is clamped up to the last point.
    pub fn new(
        time_unit: TimeUnit,
        points: Vec<SeriesPoint>,
        kind: SeriesKind,
        observed_until: f64,
        complete: bool,
    ) -> Result<Self, IngestError> {
        let last = *points
            .last()
            .ok_or_else(|| IngestError::InvalidSeries("no points".into()))?;
        if points.iter().any(|p| !p.t.is_finite() || !p.y.is_finite() || p.t < 0.0 || p.y < 0.0) {
            return Err(IngestError::InvalidSeries("points must be finite and nonnegative".into()));
        }
        if points.windows(2).any(|w| w[1].t < w[0].t || w[1].y < w[0].y) {
            return Err(IngestError::InvalidSeries(
                "points must be sorted by t with nondecreasing y".into(),
            ));
        }
        if !observed_until.is_finite() {
            return Err(IngestError::InvalidSeries("observation end must be finite".into()));
        }
        Ok(StepResponseSeries {
            time_unit,
            final_count: last.y,
            points,
            complete,
            observed_until: observed_until.max(last.t),
            kind,
        })
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    pub fn final_count(&self) -> f64 {
        self.final_count
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    /// End of the observation window; at least the time of the last point.
    pub fn observed_until(&self) -> f64 {
        self.observed_until
    }

    pub fn last_change(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t)
    }

    /// Extends the observation window, e.g. to the end of the archive.
    pub fn observe_until(&mut self, t: f64) {
        if t.is_finite() && t > self.observed_until {
            self.observed_until = t;
        }
    }

    pub fn set_complete(&mut self, complete: bool) {
        self.complete = complete;
    }

    /// Same series in another time unit; only t changes.
    pub fn to_unit(&self, unit: TimeUnit) -> Self {
        let from = self.time_unit;
        StepResponseSeries {
            time_unit: unit,
            points: self
                .points
                .iter()
                .map(|p| SeriesPoint {
                    t: from.convert(p.t, unit),
                    y: p.y,
                })
                .collect(),
            final_count: self.final_count,
            complete: self.complete,
            observed_until: from.convert(self.observed_until, unit),
            kind: self.kind,
        }
    }

    /// Multiplies every count by `factor`.
    pub fn scale_counts(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.y *= factor;
        }
        out.final_count *= factor;
        out
    }

    /// Value of the series' interpolant at `t` (step or linear per [`SeriesKind`]).
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.t <= t);
        if idx == 0 {
            return 0.0;
        }
        let left = pts[idx - 1];
        match (self.kind, pts.get(idx)) {
            (SeriesKind::Sampled, Some(right)) if right.t > left.t => {
                left.y + (right.y - left.y) * (t - left.t) / (right.t - left.t)
            }
            _ => left.y,
        }
    }
}

/// Reply staircase of `thread`, anchored at the initial post.
pub fn build_step_response(thread: &DiscussionThread, time_unit: TimeUnit) -> StepResponseSeries {
    let mut points = Vec::with_capacity(thread.posts().len());
    points.push(SeriesPoint { t: 0.0, y: 0.0 });
    for (i, reply) in thread.replies().iter().enumerate() {
        points.push(SeriesPoint {
            t: thread.elapsed(&reply.timestamp, time_unit),
            y: (i + 1) as f64,
        });
    }
    let last = points.last().map_or(0.0, |p| p.t);
    StepResponseSeries {
        time_unit,
        final_count: thread.reply_count() as f64,
        points,
        complete: false,
        observed_until: last,
        kind: SeriesKind::Events,
    }
}

/// Marks the series complete iff it was observed for at least `quiet_window`
/// (in the series' unit) past its last reply.
pub fn detect_steady_state(series: &mut StepResponseSeries, quiet_window: f64) -> bool {
    assert!(quiet_window > 0.0, "quiet window must be positive");
    let settled = series.observed_until - series.last_change() >= quiet_window;
    series.complete = settled;
    settled
}
