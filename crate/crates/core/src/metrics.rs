//! Risk measures aggregated over trials.
//!
//! Trial outcomes reduce to integer counts ([`RiskAggregate`]), which merge
//! associatively, so partial aggregates from any number of workers combine
//! to the same report.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::cascade::TrialOutcome;
use crate::rng::keyed_rng;

/// Default `chi` grid for reports.
pub const CHI_GRID: [f64; 4] = [1.0, 2.0, 3.0, 10.0];

/// `ceil(0.05 * N)`: smallest default count that counts as a crisis.
pub fn crisis_threshold(n_banks: usize) -> usize {
    (5 * n_banks).div_ceil(100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultHistogram {
    /// `counts[n]` = trials with exactly `n` defaults, `n = 0..=N`.
    pub counts: Vec<u64>,
    pub n_trials: u64,
}

impl DefaultHistogram {
    pub fn new(n_banks: usize) -> Self {
        Self {
            counts: vec![0; n_banks + 1],
            n_trials: 0,
        }
    }

    /// Histogram from raw per-trial default counts.
    pub fn from_counts(n_banks: usize, defaults: impl IntoIterator<Item = usize>) -> Self {
        let mut h = Self::new(n_banks);
        for n in defaults {
            h.record(n);
        }
        h
    }

    pub fn n_banks(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn record(&mut self, n_default: usize) {
        self.counts[n_default] += 1;
        self.n_trials += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.counts.len(), other.counts.len(), "histogram sizes differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_trials += other.n_trials;
    }

    /// `q(n)`.
    pub fn q(&self) -> Vec<f64> {
        let t = self.n_trials as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn mean(&self) -> f64 {
        let total: u64 = self.counts.iter().enumerate().map(|(n, &c)| n as u64 * c).sum();
        total as f64 / self.n_trials as f64
    }

    /// `n,q` rows.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut out = String::new();
        if !comment.is_empty() {
            let _ = writeln!(out, "# {comment}");
        }
        out.push_str("n,q\n");
        for (n, q) in self.q().into_iter().enumerate() {
            let _ = writeln!(out, "{n},{q}");
        }
        out
    }
}

/// `sum_{n >= 1} q(n) n^chi`, accumulated as `q(n) exp(chi ln n)`.
pub fn expected_cost(h: &DefaultHistogram, chi: f64) -> f64 {
    let t = h.n_trials as f64;
    weighted_cost(&h.counts, chi) / t
}

fn weighted_cost(counts: &[u64], chi: f64) -> f64 {
    counts
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &c)| c > 0)
        .map(|(n, &c)| c as f64 * (chi * (n as f64).ln()).exp())
        .sum()
}

/// `(crisis frequency, mean crisis size)`, the mean absent without crises.
pub fn crisis_stats(h: &DefaultHistogram) -> (f64, Option<f64>) {
    let start = crisis_threshold(h.n_banks());
    let (count, size): (u64, u64) = h.counts[start..]
        .iter()
        .enumerate()
        .fold((0, 0), |(c, s), (k, &x)| (c + x, s + (start + k) as u64 * x));
    if count == 0 {
        return (0.0, None);
    }
    (count as f64 / h.n_trials as f64, Some(size as f64 / count as f64))
}

/// Share of trials in which the GSCC did not survive.
pub fn disintegration_freq(outcomes: &[TrialOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| !o.gscc_survives).count() as f64 / outcomes.len() as f64
}

/// Mergeable trial summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAggregate {
    pub histogram: DefaultHistogram,
    pub n_disintegrated: u64,
}

impl RiskAggregate {
    pub fn new(n_banks: usize) -> Self {
        Self {
            histogram: DefaultHistogram::new(n_banks),
            n_disintegrated: 0,
        }
    }

    pub fn record(&mut self, outcome: &TrialOutcome) {
        self.histogram.record(outcome.n_default);
        self.n_disintegrated += u64::from(!outcome.gscc_survives);
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.histogram.merge(&other.histogram);
        self.n_disintegrated += other.n_disintegrated;
        self
    }

    pub fn n_trials(&self) -> u64 {
        self.histogram.n_trials
    }

    pub fn report(&self, chi_values: &[f64], bootstrap: &BootstrapSpec) -> RiskReport {
        let h = &self.histogram;
        let t = h.n_trials as f64;
        let expected: Vec<f64> = chi_values.iter().map(|&chi| expected_cost(h, chi)).collect();
        let (crisis_freq, crisis_size_mean) = crisis_stats(h);
        let disintegration_freq = self.n_disintegrated as f64 / t;
        RiskReport {
            chi_values: chi_values.to_vec(),
            expected_cost: expected,
            expected_cost_se: bootstrap_cost_se(h, chi_values, bootstrap),
            crisis_freq,
            crisis_freq_se: binomial_se(crisis_freq, t),
            crisis_size_mean,
            disintegration_freq,
            disintegration_freq_se: binomial_se(disintegration_freq, t),
            mean_defaults: h.mean(),
            n_trials: h.n_trials,
        }
    }
}

fn binomial_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// Bootstrap settings for the `E[C]` standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0,
            stream: 0,
        }
    }
}

/// Standard deviation of `E[C]` across multinomial resamples of the
/// histogram. Each resample is drawn as a chain of conditional binomials
/// over the occupied bins.
fn bootstrap_cost_se(h: &DefaultHistogram, chi_values: &[f64], spec: &BootstrapSpec) -> Vec<f64> {
    if spec.resamples < 2 || h.n_trials == 0 {
        return vec![0.0; chi_values.len()];
    }
    let bins: Vec<(usize, u64)> = h
        .counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(n, &c)| (n, c))
        .collect();
    let mut rng = keyed_rng(spec.seed, "bootstrap", spec.stream);
    let t = h.n_trials as f64;
    let mut sums = vec![0.0; chi_values.len()];
    let mut sq = vec![0.0; chi_values.len()];
    let mut draw = vec![0u64; bins.len()];
    for _ in 0..spec.resamples {
        multinomial(&bins, h.n_trials, &mut rng, &mut draw);
        for (k, &chi) in chi_values.iter().enumerate() {
            let cost: f64 = bins
                .iter()
                .zip(&draw)
                .filter(|&(&(n, _), &c)| n > 0 && c > 0)
                .map(|(&(n, _), &c)| c as f64 * (chi * (n as f64).ln()).exp())
                .sum::<f64>()
                / t;
            sums[k] += cost;
            sq[k] += cost * cost;
        }
    }
    let r = spec.resamples as f64;
    sums.iter()
        .zip(&sq)
        .map(|(&s, &q)| ((q - s * s / r) / (r - 1.0)).max(0.0).sqrt())
        .collect()
}

fn multinomial<R: Rng + ?Sized>(bins: &[(usize, u64)], total: u64, rng: &mut R, out: &mut [u64]) {
    let mut remaining = total;
    let mut mass_left: u64 = bins.iter().map(|&(_, c)| c).sum();
    for (slot, &(_, c)) in out.iter_mut().zip(bins) {
        if remaining == 0 || mass_left == 0 {
            *slot = 0;
            continue;
        }
        let p = (c as f64 / mass_left as f64).min(1.0);
        let k = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).expect("p in [0, 1]").sample(rng)
        };
        *slot = k;
        remaining -= k;
        mass_left -= c;
    }
}

/// Risk measures for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub chi_values: Vec<f64>,
    pub expected_cost: Vec<f64>,
    /// Bootstrap standard errors of `expected_cost`.
    pub expected_cost_se: Vec<f64>,
    pub crisis_freq: f64,
    pub crisis_freq_se: f64,
    pub crisis_size_mean: Option<f64>,
    pub disintegration_freq: f64,
    pub disintegration_freq_se: f64,
    pub mean_defaults: f64,
    pub n_trials: u64,
}

impl RiskReport {
    pub fn cost_at(&self, chi: f64) -> Option<f64> {
        self.chi_values
            .iter()
            .position(|&c| c == chi)
            .map(|k| self.expected_cost[k])
    }

    /// Two-sided 95% Wilson interval for the crisis frequency.
    pub fn crisis_interval(&self) -> (f64, f64) {
        wilson_interval(self.crisis_freq, self.n_trials as f64, 1.959_963_984_540_054)
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(p: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chi_one_is_mean() {
        let h = DefaultHistogram::from_counts(10, [0, 1, 2, 5, 5, 7]);
        assert!((expected_cost(&h, 1.0) - 20.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_cube() {
        let h = DefaultHistogram::from_counts(5, [2]);
        assert!((expected_cost(&h, 3.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn large_chi_does_not_overflow() {
        let mut h = DefaultHistogram::new(1000);
        h.counts[0] = 9;
        h.counts[1000] = 1;
        h.n_trials = 10;
        let c = expected_cost(&h, 10.0);
        assert!(c.is_finite());
        assert!((c / 1e29 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crisis_boundaries() {
        assert_eq!(crisis_threshold(1000), 50);
        assert_eq!(crisis_threshold(20), 1);
        assert_eq!(crisis_threshold(21), 2);
        let calm = DefaultHistogram::from_counts(1000, [0, 0, 0]);
        assert_eq!(crisis_stats(&calm), (0.0, None));
        let edge = DefaultHistogram::from_counts(1000, [50, 50]);
        assert_eq!(crisis_stats(&edge), (1.0, Some(50.0)));
        let split = DefaultHistogram::from_counts(1000, [40, 60]);
        assert_eq!(crisis_stats(&split), (0.5, Some(60.0)));
    }

    fn outcome(survives: bool) -> TrialOutcome {
        TrialOutcome {
            defaulted: vec![],
            n_default: 0,
            fundamental: vec![],
            rounds: 0,
            gscc_survives: survives,
        }
    }

    #[test]
    fn disintegration_counts() {
        assert_eq!(disintegration_freq(&[outcome(true), outcome(true)]), 0.0);
        assert_eq!(disintegration_freq(&[outcome(false)]), 1.0);
        let f = disintegration_freq(&[outcome(true), outcome(false), outcome(true)]);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_is_deterministic_and_sane() {
        let h = DefaultHistogram::from_counts(100, (0..1000).map(|k| k % 7));
        let spec = BootstrapSpec { resamples: 500, seed: 3, stream: 1 };
        let a = bootstrap_cost_se(&h, &[1.0], &spec);
        let b = bootstrap_cost_se(&h, &[1.0], &spec);
        assert_eq!(a, b);
        // Analytic standard error of the mean of 0..6 uniform: sqrt(4/1000).
        let analytic = (4.0f64 / 1000.0).sqrt();
        assert!((a[0] / analytic - 1.0).abs() < 0.1, "{} vs {analytic}", a[0]);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(0.1, 1000.0, 1.96);
        assert!(lo < 0.1 && 0.1 < hi);
        assert!(hi - lo < 0.04);
    }

    proptest! {
        #[test]
        fn merge_matches_single_stream(
            a in prop::collection::vec((0usize..=30, any::<bool>()), 1..60),
            b in prop::collection::vec((0usize..=30, any::<bool>()), 1..60),
        ) {
            let rec = |xs: &[(usize, bool)]| {
                let mut agg = RiskAggregate::new(30);
                for &(n, s) in xs {
                    agg.record(&TrialOutcome { defaulted: vec![], n_default: n, fundamental: vec![], rounds: 0, gscc_survives: s });
                }
                agg
            };
            let joined: Vec<_> = a.iter().chain(&b).copied().collect();
            let merged = rec(&a).merge(&rec(&b));
            let single = rec(&joined);
            prop_assert_eq!(&merged, &single);
            let spec = BootstrapSpec { resamples: 20, seed: 1, stream: 0 };
            prop_assert_eq!(merged.report(&CHI_GRID, &spec), single.report(&CHI_GRID, &spec));
        }

        #[test]
        fn cost_monotone_in_chi(counts in prop::collection::vec(0u64..20, 2..40)) {
            let n_trials: u64 = counts.iter().sum();
            prop_assume!(n_trials > 0);
            let h = DefaultHistogram { n_trials, counts: counts.clone() };
            let grid = [1.0, 1.5, 2.0, 3.0, 5.0, 10.0];
            let costs: Vec<f64> = grid.iter().map(|&c| expected_cost(&h, c)).collect();
            let has_big = counts.iter().skip(2).any(|&c| c > 0);
            for w in costs.windows(2) {
                if has_big {
                    prop_assert!(w[1] > w[0]);
                } else {
                    prop_assert!(w[1] >= w[0]);
                }
            }
            let q_sum: f64 = h.q().iter().sum();
            prop_assert!((q_sum - 1.0).abs() < 1e-12);
            prop_assert!((expected_cost(&h, 1.0) - h.mean()).abs() <= 1e-12 * h.mean().max(1.0));
        }
    }
}
