//! Discussion-size histograms and power-law fits.
//!
//! Frequencies of discussion sizes fall off roughly as `1/k`. A log-log least
//! squares line through the histogram recovers the exponent, and the empirical
//! tail `P(size ≥ k)` serves as a prior on the gain of a new discussion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DiscussionThread;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZipfError {
    #[error("need at least 3 distinct sizes ≥ {k_min} with nonzero frequency, found {found}")]
    InsufficientSupport { k_min: u64, found: usize },
    #[error("invalid size distribution: {0}")]
    InvalidDistribution(String),
}

/// Which posts count towards a discussion's size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Replies,
    #[default]
    AllPosts,
}

impl FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "replies" => Ok(CountMode::Replies),
            "all_posts" | "all" => Ok(CountMode::AllPosts),
            other => Err(format!("unknown count mode `{other}`")),
        }
    }
}

/// Frequency of each discussion size `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeHistogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl SizeHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tallies sizes; zeros are ignored since sizes start at 1.
    pub fn from_sizes(sizes: impl IntoIterator<Item = u64>) -> Self {
        let mut hist = Self::new();
        for k in sizes {
            hist.add(k, 1);
        }
        hist
    }

    /// Builds from `(k, frequency)` pairs.
    pub fn from_frequencies(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut hist = Self::new();
        for (k, f) in pairs {
            hist.add(k, f);
        }
        hist
    }

    pub fn add(&mut self, k: u64, frequency: u64) {
        if k == 0 || frequency == 0 {
            return;
        }
        *self.counts.entry(k).or_default() += frequency;
        self.total += frequency;
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn frequency(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }
}

/// Tallies thread sizes. In `Replies` mode threads without replies have size
/// zero and are not counted.
pub fn histogram_from_threads<'a>(
    threads: impl IntoIterator<Item = &'a DiscussionThread>,
    count_mode: CountMode,
) -> SizeHistogram {
    SizeHistogram::from_sizes(threads.into_iter().map(|t| match count_mode {
        CountMode::Replies => t.reply_count() as u64,
        CountMode::AllPosts => t.posts().len() as u64,
    }))
}

/// `ln f = log_intercept + exponent · ln k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub k_min: u64,
    pub support: usize,
}

impl PowerLawFit {
    pub fn predict(&self, k: u64) -> f64 {
        (self.log_intercept + self.exponent * (k as f64).ln()).exp()
    }
}

/// Ordinary least squares of `ln(frequency)` on `ln(k)` over nonzero bins
/// with `k ≥ k_min`.
pub fn fit_power_law(hist: &SizeHistogram, k_min: u64) -> Result<PowerLawFit, ZipfError> {
    let k_min = k_min.max(1);
    let pairs: Vec<(f64, f64)> = hist
        .counts
        .range(k_min..)
        .map(|(&k, &f)| (k as f64, f as f64))
        .collect();
    power_law_regression(&pairs, k_min)
}

/// Log-log regression on real-valued `(k, frequency)` pairs. Pairs with
/// `k < k_min` or a non-positive frequency are dropped.
pub fn power_law_regression(pairs: &[(f64, f64)], k_min: u64) -> Result<PowerLawFit, ZipfError> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|&&(k, f)| k >= k_min as f64 && k > 0.0 && f > 0.0)
        .map(|&(k, f)| (k.ln(), f.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(ZipfError::InsufficientSupport {
            k_min,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(ZipfError::InsufficientSupport { k_min, found: 1 });
    }
    let exponent = sxy / sxx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        // Flat frequencies are fitted exactly by a zero slope.
        1.0
    };
    Ok(PowerLawFit {
        exponent,
        log_intercept: my - exponent * mx,
        r_squared,
        k_min,
        support: pts.len(),
    })
}

/// Empirical `P(size ≥ k)`.
pub fn gain_prior(hist: &SizeHistogram, k: u64) -> f64 {
    assert!(!hist.is_empty(), "gain prior needs a non-empty histogram");
    let tail: u64 = hist.counts.range(k.max(1)..).map(|(_, f)| f).sum();
    tail as f64 / hist.total as f64
}

/// Two-column TSV `k frequency fitted` for external plotting.
pub fn plot_tsv(hist: &SizeHistogram, fit: Option<&PowerLawFit>) -> String {
    let mut out = String::from("k\tfrequency\tfitted\n");
    for (&k, &f) in &hist.counts {
        match fit {
            Some(fit) => writeln!(out, "{k}\t{f}\t{:.6}", fit.predict(k)),
            None => writeln!(out, "{k}\t{f}\t"),
        }
        .expect("writing to a String cannot fail");
    }
    out
}

/// Finite discrete power law `P(k) ∝ k^{-exponent}` on `1..=k_max`, sampled by
/// inverting its cumulative table.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawSizes {
    cdf: Vec<f64>,
}

impl PowerLawSizes {
    pub fn new(exponent: f64, k_max: u64) -> Result<Self, ZipfError> {
        if k_max == 0 || k_max > 10_000_000 {
            return Err(ZipfError::InvalidDistribution(format!("k_max {k_max} out of range")));
        }
        if !exponent.is_finite() {
            return Err(ZipfError::InvalidDistribution(format!("exponent {exponent}")));
        }
        let mut cdf = Vec::with_capacity(k_max as usize);
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += (k as f64).powf(-exponent);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(PowerLawSizes { cdf })
    }

    pub fn k_max(&self) -> u64 {
        self.cdf.len() as u64
    }

    /// Probability of size `k`.
    pub fn pmf(&self, k: u64) -> f64 {
        match k {
            0 => 0.0,
            k if k > self.k_max() => 0.0,
            1 => self.cdf[0],
            k => self.cdf[k as usize - 1] - self.cdf[k as usize - 2],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        (idx.min(self.cdf.len() - 1) + 1) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PostRecord;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thread_with(replies: usize) -> DiscussionThread {
        let posts = (0..=replies)
            .map(|i| PostRecord::parse("x", &(1_000 + i as i64 * 60).to_string(), None).unwrap())
            .collect();
        DiscussionThread::new("x", posts).unwrap()
    }

    #[test]
    fn tally_reply_counts() {
        let threads = [thread_with(2), thread_with(2), thread_with(5)];
        let hist = histogram_from_threads(&threads, CountMode::Replies);
        assert_eq!(hist.counts(), &BTreeMap::from([(2, 2), (5, 1)]));
        assert_eq!(hist.total(), 3);
        let all = histogram_from_threads(&threads, CountMode::AllPosts);
        assert_eq!(all.counts(), &BTreeMap::from([(3, 2), (6, 1)]));
        assert!(histogram_from_threads(&[], CountMode::AllPosts).is_empty());
        let lone = histogram_from_threads(&[thread_with(0)], CountMode::Replies);
        assert!(lone.is_empty());
    }

    #[test]
    fn exact_power_laws() {
        let one: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 1000.0 / k as f64)).collect();
        assert!((power_law_regression(&one, 1).unwrap().exponent + 1.0).abs() < 1e-6);
        let two: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 1000.0 / (k * k) as f64)).collect();
        assert!((power_law_regression(&two, 1).unwrap().exponent + 2.0).abs() < 1e-6);
    }

    /// Integer frequencies that are exactly C/k need C divisible by every k,
    /// hence lcm(1..=12) = 27720.
    #[test]
    fn exact_integer_power_laws() {
        let lcm: u64 = 27_720;
        let one = SizeHistogram::from_frequencies((1..=12).map(|k| (k, lcm / k)));
        assert!((fit_power_law(&one, 1).unwrap().exponent + 1.0).abs() < 1e-6);
        let two = SizeHistogram::from_frequencies((1..=12).map(|k| (k, lcm * lcm / (k * k))));
        let fit = fit_power_law(&two, 1).unwrap();
        assert!((fit.exponent + 2.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_requirement() {
        let hist = SizeHistogram::from_frequencies([(1, 10), (2, 5), (9, 0)]);
        assert_eq!(
            fit_power_law(&hist, 1),
            Err(ZipfError::InsufficientSupport { k_min: 1, found: 2 })
        );
        let hist = SizeHistogram::from_frequencies([(1, 10), (2, 5), (3, 3), (4, 2)]);
        assert!(fit_power_law(&hist, 3).is_err());
        assert_eq!(fit_power_law(&hist, 2).unwrap().support, 3);
        assert_eq!(fit_power_law(&hist, 0).unwrap().k_min, 1);
    }

    #[test]
    fn prior_values() {
        let hist = SizeHistogram::from_frequencies([(2, 2), (5, 1), (16, 1)]);
        assert_eq!(gain_prior(&hist, 1), 1.0);
        assert_eq!(gain_prior(&hist, 16), 0.25);
        assert_eq!(gain_prior(&hist, 17), 0.0);
    }

    #[test]
    fn sampled_harmonic_corpus() {
        let dist = PowerLawSizes::new(1.0, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2011);
        let hist = SizeHistogram::from_sizes((0..10_000).map(|_| dist.sample(&mut rng)));
        let fit = fit_power_law(&hist, 1).unwrap();
        assert!((-1.15..=-0.85).contains(&fit.exponent), "{fit:?}");

        // Harmonic-sum oracle for the tail mass.
        let h = |a: u64, b: u64| (a..=b).map(|j| 1.0 / j as f64).sum::<f64>();
        let expected = h(15, 50) / h(1, 50);
        assert!((expected - 0.2773).abs() < 1e-4);
        let se = (expected * (1.0 - expected) / 10_000.0).sqrt();
        assert!((gain_prior(&hist, 15) - expected).abs() < 4.0 * se);
    }

    #[test]
    fn sampler_pmf() {
        let dist = PowerLawSizes::new(2.0, 3).unwrap();
        let z = 1.0 + 0.25 + 1.0 / 9.0;
        assert!((dist.pmf(1) - 1.0 / z).abs() < 1e-15);
        assert!((dist.pmf(3) - 1.0 / 9.0 / z).abs() < 1e-15);
        assert_eq!(dist.pmf(4), 0.0);
        assert!(PowerLawSizes::new(1.0, 0).is_err());
    }

    #[test]
    fn tsv_export() {
        let hist = SizeHistogram::from_frequencies([(1, 4), (2, 2), (4, 1)]);
        let fit = fit_power_law(&hist, 1).unwrap();
        let tsv = plot_tsv(&hist, Some(&fit));
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "k\tfrequency\tfitted");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1\t4\t4.0000"));
    }

    proptest! {
        #[test]
        fn slope_invariant_to_scale(alpha in -3.0..0.0f64, c in 0.5..1e6f64) {
            let pts: Vec<(f64, f64)> = (1..=30).map(|k| (k as f64, c * (k as f64).powf(alpha))).collect();
            let fit = power_law_regression(&pts, 1).unwrap();
            prop_assert!((fit.exponent - alpha).abs() < 1e-6);
            prop_assert!((fit.log_intercept - c.ln()).abs() < 1e-6);
        }

        #[test]
        fn prior_nonincreasing(sizes in proptest::collection::vec(1u64..60, 1..200), k in 1u64..70) {
            let hist = SizeHistogram::from_sizes(sizes.iter().copied());
            prop_assert_eq!(gain_prior(&hist, 1), 1.0);
            prop_assert!(gain_prior(&hist, k + 1) <= gain_prior(&hist, k));
        }

        #[test]
        fn histogram_permutation_invariant(mut sizes in proptest::collection::vec(0u64..40, 0..100), seed in any::<u64>()) {
            let a = SizeHistogram::from_sizes(sizes.iter().copied());
            use rand::seq::SliceRandom;
            sizes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = SizeHistogram::from_sizes(sizes.iter().copied());
            prop_assert_eq!(a, b);
        }
    }
}
