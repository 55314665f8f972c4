//! Synthetic discussions.
//!
//! Replies arrive as a nonhomogeneous Poisson process whose intensity is the
//! derivative of the model response, so the expected cumulative reply count
//! follows the model. Arrivals are drawn by thinning a homogeneous process at
//! the intensity's supremum (`K/T` for FOPDT, `K·b/4` for logistic).
//!
//! The random source is `ChaCha8Rng::seed_from_u64`, whose output stream is
//! fixed by the ChaCha specification, so a seed reproduces the same thread on
//! every platform and build.

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{DiscussionThread, PostRecord, SeriesKind, SeriesPoint, StepResponseSeries};
use crate::response::ResponseModel;
use crate::zipf::PowerLawSizes;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Start of simulated archives unless configured otherwise.
pub fn default_start() -> DateTime<Utc> {
    DateTime::from_timestamp(1_262_304_000, 0).expect("valid instant") // 2010-01-01T00:00:00Z
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    model: ResponseModel,
    seed: u64,
    horizon: f64,
    gap: Option<(f64, f64)>,
    thread_id: String,
    start: DateTime<Utc>,
}

impl SimulationConfig {
    pub fn new(model: impl Into<ResponseModel>, seed: u64, horizon: f64) -> Result<Self, SimulationError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SimulationError::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        Ok(SimulationConfig {
            model: model.into(),
            seed,
            horizon,
            gap: None,
            thread_id: format!("sim-{seed}"),
            start: default_start(),
        })
    }

    /// Suppresses all posting on `[start, end)`.
    pub fn with_gap(mut self, start: f64, end: f64) -> Result<Self, SimulationError> {
        if !(0.0 <= start && start <= end && end <= self.horizon) {
            return Err(SimulationError::InvalidConfig(format!(
                "gap ({start}, {end}) must lie within [0, {}]",
                self.horizon
            )));
        }
        self.gap = Some((start, end));
        Ok(self)
    }

    pub fn with_thread_id(mut self, id: impl Into<String>) -> Self {
        self.thread_id = id.into();
        self
    }

    pub fn with_start(mut self, start: DateTime<Utc>) -> Self {
        self.start = start;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gap(&self) -> Option<(f64, f64)> {
        self.gap
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    fn in_gap(&self, t: f64) -> bool {
        self.gap.is_some_and(|(a, b)| t >= a && t < b)
    }

    fn intensity(&self, t: f64) -> f64 {
        if self.in_gap(t) {
            0.0
        } else {
            self.model.intensity(t).max(0.0)
        }
    }

    fn majorant(&self) -> f64 {
        match self.model {
            ResponseModel::Fopdt(m) => m.gain() / m.time_constant(),
            ResponseModel::Logistic(m) => (m.scale() * m.rate() / 4.0).max(0.0),
        }
    }

    /// Expected reply count over `[0, horizon]` with the gap's mass removed.
    pub fn expected_replies(&self) -> f64 {
        let cumulative = |t: f64| self.model.evaluate(t) - self.model.evaluate(0.0);
        let mut mean = cumulative(self.horizon);
        if let Some((a, b)) = self.gap {
            mean -= cumulative(b) - cumulative(a);
        }
        mean
    }
}

/// Reply times in model units, ascending.
pub fn simulate_arrivals(config: &SimulationConfig) -> Vec<f64> {
    let majorant = config.majorant();
    let mut arrivals = Vec::new();
    if !(majorant > 0.0 && majorant.is_finite()) {
        return arrivals;
    }
    let mut rng = seeded_rng(config.seed);
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / majorant;
        if t > config.horizon {
            break;
        }
        let accept: f64 = rng.random();
        if accept * majorant < config.intensity(t) {
            arrivals.push(t);
        }
    }
    arrivals
}

/// One simulated thread: the initial post at the configured start, then one
/// post per arrival.
pub fn simulate_thread(config: &SimulationConfig) -> DiscussionThread {
    let unit_nanos = config.model.time_unit().seconds() * 1e9;
    let post_at = |t: f64| PostRecord {
        thread_id: config.thread_id.clone(),
        timestamp: config.start + Duration::nanoseconds((t * unit_nanos).round() as i64),
        author: None,
    };
    let mut posts = vec![post_at(0.0)];
    posts.extend(simulate_arrivals(config).into_iter().map(post_at));
    DiscussionThread::new(config.thread_id.clone(), posts).expect("initial post present")
}

/// Noiseless samples of the model on a uniform grid over `[0, horizon]`.
///
/// Counts are real-valued. The horizon itself is always the last point.
pub fn sample_response(
    model: &ResponseModel,
    grid_step: f64,
    horizon: f64,
) -> Result<StepResponseSeries, SimulationError> {
    if !(grid_step > 0.0 && grid_step.is_finite() && horizon.is_finite() && grid_step <= horizon) {
        return Err(SimulationError::InvalidConfig(format!(
            "grid step {grid_step} must be positive and at most the horizon {horizon}"
        )));
    }
    let steps = (horizon / grid_step + 1e-9).floor() as usize;
    let mut points: Vec<SeriesPoint> = (0..=steps)
        .map(|i| {
            let t = i as f64 * grid_step;
            SeriesPoint { t, y: model.evaluate(t) }
        })
        .collect();
    let last_t = points.last().map_or(0.0, |p| p.t);
    if horizon - last_t > 1e-9 * horizon {
        points.push(SeriesPoint {
            t: horizon,
            y: model.evaluate(horizon),
        });
    }
    StepResponseSeries::new(model.time_unit(), points, SeriesKind::Sampled, horizon, true)
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))
}

/// A corpus of `count` threads whose sizes (posts including the initial one)
/// are drawn from `sizes`. Returns the threads and the draws in order.
pub fn simulate_size_corpus(
    sizes: &PowerLawSizes,
    count: usize,
    seed: u64,
    start: DateTime<Utc>,
) -> (Vec<DiscussionThread>, Vec<u64>) {
    let mut rng = seeded_rng(seed);
    let draws: Vec<u64> = (0..count).map(|_| sizes.sample(&mut rng)).collect();
    let width = count.to_string().len();
    let threads = draws
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let id = format!("z{i:0width$}");
            let t0 = start + Duration::hours(i as i64);
            let posts = (0..k)
                .map(|j| PostRecord {
                    thread_id: id.clone(),
                    timestamp: t0 + Duration::minutes(j as i64),
                    author: None,
                })
                .collect();
            DiscussionThread::new(id, posts).expect("sizes are at least 1")
        })
        .collect();
    (threads, draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_step_response, write_posts_csv};
    use crate::response::{FopdtModel, LogisticModel};
    use crate::units::TimeUnit;
    use crate::zipf::{histogram_from_threads, CountMode};

    fn motivation() -> FopdtModel {
        FopdtModel::hours(27.0, 5.0, 1.0).unwrap()
    }

    #[test]
    fn same_seed_same_thread() {
        let config = SimulationConfig::new(motivation(), 7, 50.0).unwrap();
        let a = simulate_thread(&config);
        let b = simulate_thread(&config);
        assert_eq!(a, b);
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_posts_csv(std::slice::from_ref(&a), &mut csv_a).unwrap();
        write_posts_csv(std::slice::from_ref(&b), &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        let c = simulate_thread(&config.clone().with_seed(8));
        assert_ne!(a, c);
    }

    #[test]
    fn zero_gain_has_no_replies() {
        let config = SimulationConfig::new(FopdtModel::hours(0.0, 5.0, 1.0).unwrap(), 1, 50.0).unwrap();
        assert_eq!(simulate_thread(&config).posts().len(), 1);
        let flat = LogisticModel::new(10.0, 0.0, 0.5, TimeUnit::Hour).unwrap();
        assert!(simulate_arrivals(&SimulationConfig::new(flat, 1, 50.0).unwrap()).is_empty());
    }

    #[test]
    fn no_arrivals_before_dead_time_or_in_gap() {
        for seed in 0..200 {
            let config = SimulationConfig::new(motivation(), seed, 50.0)
                .unwrap()
                .with_gap(5.0, 10.0)
                .unwrap();
            for t in simulate_arrivals(&config) {
                assert!(t >= 1.0);
                assert!(!(5.0..10.0).contains(&t), "arrival at {t}");
            }
        }
    }

    #[test]
    fn mean_count_matches_response() {
        let runs = 2000;
        let config = SimulationConfig::new(motivation(), 0, 50.0).unwrap();
        let counts: Vec<f64> = (0..runs)
            .map(|s| simulate_arrivals(&config.clone().with_seed(s)).len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / runs as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        let expected = 27.0 * (1.0 - (-49.0f64 / 5.0).exp());
        assert!((26.0..=28.0).contains(&mean));
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn gap_mass_is_removed_from_expectation() {
        let config = SimulationConfig::new(motivation(), 0, 50.0).unwrap().with_gap(5.0, 10.0).unwrap();
        let m = motivation();
        let expected = m.step_response(50.0) - (m.step_response(10.0) - m.step_response(5.0));
        assert!((config.expected_replies() - expected).abs() < 1e-12);
        assert!(SimulationConfig::new(motivation(), 0, 50.0).unwrap().with_gap(40.0, 60.0).is_err());
        assert!(SimulationConfig::new(motivation(), 0, -1.0).is_err());
    }

    #[test]
    fn logistic_threads() {
        let model = LogisticModel::new(30.0, 1.0, 0.05, TimeUnit::Hour).unwrap();
        let config = SimulationConfig::new(model, 3, 20.0).unwrap();
        let expected = config.expected_replies();
        assert!((expected - 30.0 * (model.fraction(20.0) - 0.05)).abs() < 1e-12);
        let runs = 1000;
        let total: usize = (0..runs)
            .map(|s| simulate_arrivals(&config.clone().with_seed(s)).len())
            .sum();
        let mean = total as f64 / runs as f64;
        // Poisson variance equals the mean.
        assert!((mean - expected).abs() <= 4.0 * (expected / runs as f64).sqrt());
    }

    #[test]
    fn simulated_thread_round_trips_through_series() {
        let config = SimulationConfig::new(motivation(), 11, 60.0).unwrap();
        let arrivals = simulate_arrivals(&config);
        let series = build_step_response(&simulate_thread(&config), TimeUnit::Hour);
        assert_eq!(series.final_count() as usize, arrivals.len());
        for (p, t) in series.points()[1..].iter().zip(&arrivals) {
            assert!((p.t - t).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_series() {
        let model = ResponseModel::Fopdt(motivation());
        let series = sample_response(&model, 0.01, 60.0).unwrap();
        assert_eq!(series.points().len(), 6001);
        assert!((series.final_count() - 27.0).abs() < 1e-3);
        assert!(series.is_complete());

        let early = sample_response(&model, 0.1, 0.9).unwrap();
        assert!(early.points().iter().all(|p| p.y == 0.0));

        let logistic = ResponseModel::Logistic(LogisticModel::new(1.0, 1.0, 0.1, TimeUnit::Hour).unwrap());
        let series = sample_response(&logistic, 0.1, 20.0).unwrap();
        assert!((series.final_count() - 1.0).abs() < 1e-7);

        let odd = sample_response(&model, 0.3, 1.0).unwrap();
        assert_eq!(odd.points().last().unwrap().t, 1.0);
        assert!(sample_response(&model, 2.0, 1.0).is_err());
        assert!(sample_response(&model, 0.0, 1.0).is_err());
    }

    #[test]
    fn corpus_tally_matches_draw_log() {
        let sizes = PowerLawSizes::new(1.0, 50).unwrap();
        let (threads, draws) = simulate_size_corpus(&sizes, 100, 5, default_start());
        let hist = histogram_from_threads(&threads, CountMode::AllPosts);
        let mut expected = std::collections::BTreeMap::new();
        for k in &draws {
            *expected.entry(*k).or_insert(0u64) += 1;
        }
        assert_eq!(hist.counts(), &expected);
        assert_eq!(hist.total(), 100);
    }
}
