//! Monte Carlo harness: repeated detector trials, confusion matrices,
//! macro-F1 and distribution checks for the ratio statistics.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::detectors::{self, DetectorConfig, RankDecision};
use crate::error::{Error, Result};
use crate::fields::SourceField;
use crate::matrix::ObservationSet;
use crate::rng::derive_seed;
use crate::scenario::Scenario;
use crate::stats::AsymptoticParams;

/// Tally of estimated against true source counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Estimated counts that get their own column.
    pub classes: Vec<usize>,
    /// True counts, one row each.
    pub true_counts: Vec<usize>,
    /// `counts[i][j]`: trials with true count `true_counts[i]` estimated as `classes[j]`.
    pub counts: Vec<Vec<u64>>,
    /// Trials that gave no usable estimate: inconclusive decisions, estimates
    /// outside `classes`, and failed trials.
    pub inconclusive: Vec<u64>,
    /// Subset of `inconclusive` where the detector returned an error.
    pub failures: Vec<u64>,
    pub trials: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(true_counts: &[usize], classes: &[usize]) -> Self {
        let rows = true_counts.len();
        Self {
            classes: classes.to_vec(),
            true_counts: true_counts.to_vec(),
            counts: vec![vec![0; classes.len()]; rows],
            inconclusive: vec![0; rows],
            failures: vec![0; rows],
            trials: vec![0; rows],
        }
    }

    /// Builds a matrix from published counts; the remainder of each row's
    /// `trials` is booked as inconclusive.
    pub fn from_counts(true_counts: &[usize], classes: &[usize], counts: &[Vec<u64>], trials: &[u64]) -> Result<Self> {
        if counts.len() != true_counts.len() || trials.len() != true_counts.len() {
            return Err(Error::Dimension("one count row and trial total per true count".into()));
        }
        let mut cm = Self::new(true_counts, classes);
        for (i, row) in counts.iter().enumerate() {
            if row.len() != classes.len() {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {}", row.len(), classes.len())));
            }
            let total: u64 = row.iter().sum();
            if total > trials[i] {
                return Err(Error::Input(format!("row {i} sums to {total} > {} trials", trials[i])));
            }
            cm.counts[i] = row.clone();
            cm.trials[i] = trials[i];
            cm.inconclusive[i] = trials[i] - total;
        }
        Ok(cm)
    }

    fn row_of(&self, true_count: usize) -> Option<usize> {
        self.true_counts.iter().position(|&k| k == true_count)
    }

    fn col_of(&self, class: usize) -> Option<usize> {
        self.classes.iter().position(|&k| k == class)
    }

    /// Books one trial outcome.
    pub fn record(&mut self, true_count: usize, outcome: &TrialOutcome) -> Result<()> {
        let i = self
            .row_of(true_count)
            .ok_or_else(|| Error::Input(format!("true count {true_count} not in matrix")))?;
        self.trials[i] += 1;
        match *outcome {
            TrialOutcome::Estimate(r) => match self.col_of(r) {
                Some(j) => self.counts[i][j] += 1,
                None => self.inconclusive[i] += 1,
            },
            TrialOutcome::Inconclusive => self.inconclusive[i] += 1,
            TrialOutcome::Failed => {
                self.inconclusive[i] += 1;
                self.failures[i] += 1;
            }
        }
        Ok(())
    }

    pub fn get(&self, true_count: usize, class: usize) -> u64 {
        match (self.row_of(true_count), self.col_of(class)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn trials_for(&self, true_count: usize) -> u64 {
        self.row_of(true_count).map_or(0, |i| self.trials[i])
    }

    pub fn column_total(&self, class: usize) -> u64 {
        self.col_of(class)
            .map_or(0, |j| self.counts.iter().map(|row| row[j]).sum())
    }

    /// Row conservation: every trial is booked exactly once.
    pub fn is_conserved(&self) -> bool {
        (0..self.true_counts.len())
            .all(|i| self.counts[i].iter().sum::<u64>() + self.inconclusive[i] == self.trials[i])
    }

    /// Fraction of all trials on the diagonal.
    pub fn diagonal_mass(&self) -> f64 {
        let total: u64 = self.trials.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = self.true_counts.iter().map(|&k| self.get(k, k)).sum();
        diag as f64 / total as f64
    }

    /// `true,<classes...>,inconclusive,trials`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true");
        for k in &self.classes {
            let _ = write!(out, ",{k}");
        }
        out.push_str(",inconclusive,trials\n");
        for (i, k) in self.true_counts.iter().enumerate() {
            let _ = write!(out, "{k}");
            for v in &self.counts[i] {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", self.inconclusive[i], self.trials[i]);
        }
        out
    }
}

/// What a single trial produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "r_hat")]
pub enum TrialOutcome {
    Estimate(usize),
    Inconclusive,
    Failed,
}

impl From<&Result<RankDecision>> for TrialOutcome {
    fn from(r: &Result<RankDecision>) -> Self {
        match r {
            Ok(d) if d.inconclusive => TrialOutcome::Inconclusive,
            Ok(d) => TrialOutcome::Estimate(d.r_hat),
            Err(_) => TrialOutcome::Failed,
        }
    }
}

/// Macro-averaged F1 over `classes`: per class `2 s_ii / (trials_i + colsum_i)`,
/// i.e. the harmonic mean of precision `s_ii / colsum_i` and recall
/// `s_ii / trials_i`. A class with zero denominator contributes 0.
pub fn macro_f1(cm: &ConfusionMatrix, classes: &[usize]) -> f64 {
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &k in classes {
        let s = cm.get(k, k) as f64;
        let denom = (cm.trials_for(k) + cm.column_total(k)) as f64;
        if denom == 0.0 {
            warn!("macro_f1: class {k} has no trials and no estimates; scored as 0");
            continue;
        }
        total += 2.0 * s / denom;
    }
    total / classes.len() as f64
}

/// Everything a detector sees about one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub true_count: usize,
    pub rep: usize,
    pub seed: u64,
    pub field: SourceField,
    pub observations: ObservationSet,
}

pub trait Detector: Sync {
    fn detect(&self, trial: &Trial) -> Result<RankDecision>;
}

impl Detector for DetectorConfig {
    fn detect(&self, trial: &Trial) -> Result<RankDecision> {
        DetectorConfig::detect(self, &trial.observations, derive_seed(trial.seed, &[3]))
    }
}

impl<F> Detector for F
where
    F: Fn(&Trial) -> Result<RankDecision> + Sync,
{
    fn detect(&self, trial: &Trial) -> Result<RankDecision> {
        self(trial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub true_count: usize,
    pub rep: usize,
    #[serde(flatten)]
    pub outcome: TrialOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Seed of trial `(true_count, rep)` under `master_seed`.
pub fn trial_seed(master_seed: u64, true_count: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[true_count as u64, rep as u64])
}

fn trial_grid(true_counts: &[usize], reps: usize) -> Vec<(usize, usize)> {
    true_counts
        .iter()
        .flat_map(|&k| (0..reps).map(move |r| (k, r)))
        .collect()
}

fn make_trial(scenario: &Scenario, k: usize, rep: usize, master_seed: u64) -> Result<Trial> {
    let seed = trial_seed(master_seed, k, rep);
    let inst = scenario.generate(k, seed)?;
    Ok(Trial {
        true_count: k,
        rep,
        seed,
        field: inst.field,
        observations: inst.observations,
    })
}

/// Runs every `(true count, rep)` trial in parallel. Failures (including
/// scenario generation errors) are recorded, never propagated.
pub fn run_trials_detailed<D: Detector>(
    scenario: &Scenario,
    detector: &D,
    true_counts: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    if reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    if true_counts.is_empty() {
        return Err(Error::Parameter("need at least one true count".into()));
    }
    Ok(trial_grid(true_counts, reps)
        .into_par_iter()
        .map(|(k, rep)| {
            let result = make_trial(scenario, k, rep, master_seed).and_then(|t| detector.detect(&t));
            if let Err(e) = &result {
                warn!("trial (K={k}, rep={rep}) failed: {e}");
            }
            TrialRecord {
                true_count: k,
                rep,
                outcome: TrialOutcome::from(&result),
                error: result.err().map(|e| e.to_string()),
            }
        })
        .collect())
}

pub fn tally(records: &[TrialRecord], true_counts: &[usize], classes: &[usize]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(true_counts, classes);
    for r in records {
        cm.record(r.true_count, &r.outcome)?;
    }
    Ok(cm)
}

pub const DEFAULT_CLASSES: [usize; 4] = [1, 2, 3, 4];
pub const F1_CLASSES: [usize; 2] = [2, 3];

/// Confusion matrix over classes `1..=4` for a batch of trials.
pub fn run_trials<D: Detector>(
    scenario: &Scenario,
    detector: &D,
    true_counts: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<ConfusionMatrix> {
    let records = run_trials_detailed(scenario, detector, true_counts, reps, master_seed)?;
    tally(&records, true_counts, &DEFAULT_CLASSES)
}

/// Evaluates `f` on every `(true count, rep)` trial in parallel; results are
/// in trial order and paired with the true count.
pub fn trial_curves<T, F>(
    scenario: &Scenario,
    true_counts: &[usize],
    reps: usize,
    master_seed: u64,
    f: F,
) -> Result<Vec<(usize, Result<T>)>>
where
    T: Send,
    F: Fn(&Trial) -> Result<T> + Sync,
{
    if reps == 0 || true_counts.is_empty() {
        return Err(Error::Parameter("need reps >= 1 and at least one true count".into()));
    }
    Ok(trial_grid(true_counts, reps)
        .into_par_iter()
        .map(|(k, rep)| (k, make_trial(scenario, k, rep, master_seed).and_then(|t| f(&t))))
        .collect())
}

/// One confusion matrix per threshold, deciding each trial from its
/// precomputed curve.
pub fn sweep<T>(
    curves: &[(usize, Result<T>)],
    true_counts: &[usize],
    thresholds: &[f64],
    decide: impl Fn(&T, f64) -> TrialOutcome,
) -> Result<Vec<(f64, ConfusionMatrix)>> {
    let mut out = Vec::with_capacity(thresholds.len());
    for &b in thresholds {
        let mut cm = ConfusionMatrix::new(true_counts, &DEFAULT_CLASSES);
        for (k, curve) in curves {
            let outcome = match curve {
                Ok(c) => decide(c, b),
                Err(_) => TrialOutcome::Failed,
            };
            cm.record(*k, &outcome)?;
        }
        out.push((b, cm));
    }
    Ok(out)
}

/// Decision rule of the cumulative-fraction detectors.
pub fn fraction_outcome(fractions: &[f64], b: f64) -> TrialOutcome {
    if fractions.is_empty() {
        TrialOutcome::Inconclusive
    } else {
        TrialOutcome::Estimate(detectors::first_fraction_above(fractions, b))
    }
}

/// Decision rule of the variance-ratio detector on a full ratio profile.
pub fn ratio_outcome(ratios: &[Option<f64>], b: f64) -> TrialOutcome {
    detectors::first_ratio_below(ratios, b).map_or(TrialOutcome::Inconclusive, TrialOutcome::Estimate)
}

/// Baseline confusion matrices for each threshold, reusing one SVD per trial.
pub fn sweep_baseline(
    scenario: &Scenario,
    true_counts: &[usize],
    reps: usize,
    master_seed: u64,
    thresholds: &[f64],
) -> Result<Vec<(f64, ConfusionMatrix)>> {
    let curves = trial_curves(scenario, true_counts, reps, master_seed, |t| {
        detectors::baseline_fractions(&t.observations)
    })?;
    sweep(&curves, true_counts, thresholds, |f, b| fraction_outcome(f, b))
}

/// Threshold with the best macro-F1 (first one on ties).
pub fn best_threshold(sweep: &[(f64, ConfusionMatrix)], classes: &[usize]) -> Option<(f64, f64)> {
    sweep.iter().fold(None, |best, (b, cm)| {
        let f = macro_f1(cm, classes);
        match best {
            Some((_, bf)) if bf >= f => best,
            _ => Some((*b, f)),
        }
    })
}

/// Midpoint of the longest run of consecutive thresholds sharing the best
/// macro-F1. Assumes `sweep` is sorted by threshold.
pub fn plateau_threshold(sweep: &[(f64, ConfusionMatrix)], classes: &[usize]) -> Option<(f64, f64)> {
    let f1: Vec<f64> = sweep.iter().map(|(_, cm)| macro_f1(cm, classes)).collect();
    let best = f1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let (mut run, mut longest) = (None::<usize>, (0usize, 0usize));
    for i in 0..=f1.len() {
        let on = i < f1.len() && f1[i] >= best - 1e-12;
        match (on, run) {
            (true, None) => run = Some(i),
            (false, Some(start)) => {
                if i - start > longest.1 - longest.0 {
                    longest = (start, i);
                }
                run = None;
            }
            _ => {}
        }
    }
    let (a, b) = (sweep[longest.0].0, sweep[longest.1 - 1].0);
    Some((0.5 * (a + b), best))
}

/// Moments and goodness of fit of a sample against a normal target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub n: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub target_mean: f64,
    pub target_variance: f64,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    /// `(alpha, fraction of samples above target_mean + q_{1-alpha} sd)`.
    pub rejection_rates: Vec<(f64, f64)>,
}

impl DistributionReport {
    pub fn variance_rel_error(&self) -> f64 {
        (self.sample_variance - self.target_variance).abs() / self.target_variance
    }
}

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of the one-sample KS statistic (Stephens' correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Compares `samples` with `N(mean, variance)`.
pub fn density_check(samples: &[f64], mean: f64, variance: f64, alpha_grid: &[f64]) -> Result<DistributionReport> {
    if samples.len() < 100 {
        return Err(Error::Parameter(format!("need at least 100 samples, got {}", samples.len())));
    }
    if !(variance > 0.0) {
        return Err(Error::Parameter("target variance must be positive".into()));
    }
    let target = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    let (m, v) = mean_var(samples);
    let d = ks_distance(samples, |x| target.cdf(x));
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rates = Vec::with_capacity(alpha_grid.len());
    for &a in alpha_grid {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {a}")));
        }
        let b = mean + std.inverse_cdf(1.0 - a) * variance.sqrt();
        let rejected = samples.iter().filter(|&&x| x > b).count();
        rates.push((a, rejected as f64 / samples.len() as f64));
    }
    Ok(DistributionReport {
        n: samples.len(),
        sample_mean: m,
        sample_variance: v,
        target_mean: mean,
        target_variance: variance,
        ks_distance: d,
        ks_p_value: ks_p_value(d, samples.len()),
        rejection_rates: rates,
    })
}

/// Checks ratio samples against the limiting null `N(1, (c+2)/(2cL))`.
pub fn empirical_density_check(samples: &[f64], c: usize, steps: usize, alpha_grid: &[f64]) -> Result<DistributionReport> {
    let p = AsymptoticParams::new(c, steps);
    density_check(samples, p.ratio_mean, p.ratio_variance, alpha_grid)
}

/// As [`empirical_density_check`] for the split statistic, `N(1, (c+10)/(2cL))`.
pub fn split_density_check(samples: &[f64], c: usize, steps: usize, alpha_grid: &[f64]) -> Result<DistributionReport> {
    let p = AsymptoticParams::new(c, steps);
    density_check(samples, p.ratio_mean, p.split_ratio_variance, alpha_grid)
}

/// `sample,target_quantile` pairs for a normal QQ plot.
pub fn qq_csv(samples: &[f64], mean: f64, variance: f64) -> Result<String> {
    let target = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out = String::from("sample,target_quantile\n");
    for (i, x) in s.iter().enumerate() {
        let q = target.inverse_cdf((i as f64 + 0.5) / n);
        let _ = writeln!(out, "{x},{q}");
    }
    Ok(out)
}
