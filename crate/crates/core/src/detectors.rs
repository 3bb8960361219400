//! Rank / source-count detectors.
//!
//! * [`detect_variance_ratio`]: smallest rank whose variance ratio falls
//!   below the threshold, optionally after rotating to the angle of least
//!   spectral concentration.
//! * [`detect_averaged_rotations`]: cumulative spectral fraction of
//!   nuclear-norm completions averaged over a set of rotations.
//! * [`detect_baseline`]: cumulative spectral fraction of the zero-filled matrix.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::completion::CompletionConfig;
use crate::error::{Error, Result};
use crate::matrix::{self, ObservationSet};
use crate::rng::derive_seed;
use crate::rotation::{self, default_angles};
use crate::stats::{self, SubsampleChain, TestSide};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VarianceRatio,
    AveragedRotations,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::VarianceRatio => "variance_ratio",
            Method::AveragedRotations => "averaged_rotations",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance_ratio" | "vr" => Ok(Method::VarianceRatio),
            "averaged_rotations" | "ar" => Ok(Method::AveragedRotations),
            "baseline" | "bl" => Ok(Method::Baseline),
            _ => Err(Error::Parameter(format!("unknown method '{s}'"))),
        }
    }
}

/// Statistic recorded for one examined rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rank: usize,
    /// Variance ratio or cumulative spectral fraction. `None` when the ratio
    /// is degenerate (exact fit).
    pub value: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub method: Method,
    pub r_hat: usize,
    pub threshold_used: f64,
    /// Lower acceptance bound of a two-sided test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub rotation_used: Option<f64>,
    pub trace: Vec<TraceEntry>,
    /// No rank was accepted (`r_hat` is 0).
    pub inconclusive: bool,
    /// Cumulative fractions never exceeded `b`; `r_hat` is the cap.
    pub saturated: bool,
}

impl RankDecision {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn is_conclusive(&self) -> bool {
        !self.inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Accept a rank when its ratio is below `b`.
    Fixed(f64),
    /// Critical value at level `alpha` from the limiting normal law.
    Alpha(f64),
}

/// Solver settings for the soft-impute completions used by the rotation search
/// and the averaged-rotations detector.
pub fn default_rotation_solver() -> CompletionConfig {
    CompletionConfig {
        max_iters: 300,
        tol: 1e-6,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct VarianceRatioConfig {
    pub r_max: usize,
    pub c: usize,
    pub steps: usize,
    pub threshold: Threshold,
    pub side: TestSide,
    pub use_rotation: bool,
    /// Candidate angles for the rotation search.
    pub angles: Vec<f64>,
    /// Soft-impute penalty for the rotation search; `None` picks it per angle.
    pub rotation_reg: Option<f64>,
    pub seed: u64,
    pub solver: CompletionConfig,
    pub rotation_solver: CompletionConfig,
}

impl Default for VarianceRatioConfig {
    fn default() -> Self {
        Self {
            r_max: 4,
            c: 2,
            steps: 750,
            threshold: Threshold::Alpha(0.05),
            side: TestSide::Upper,
            use_rotation: false,
            angles: default_angles(20),
            rotation_reg: None,
            seed: 0,
            solver: CompletionConfig::default(),
            rotation_solver: default_rotation_solver(),
        }
    }
}

impl VarianceRatioConfig {
    /// Acceptance interval `(lower, upper)` for the ratio.
    pub fn acceptance_bounds(&self) -> Result<(Option<f64>, f64)> {
        match (self.threshold, self.side) {
            (Threshold::Fixed(b), TestSide::Upper) => {
                if !b.is_finite() {
                    return Err(Error::Parameter(format!("threshold must be finite, got {b}")));
                }
                Ok((None, b))
            }
            (Threshold::Fixed(_), TestSide::TwoSided) => Err(Error::Parameter(
                "a two-sided test needs an alpha-derived threshold".into(),
            )),
            (Threshold::Alpha(a), TestSide::Upper) => Ok((None, stats::threshold(self.c, self.steps, a)?)),
            (Threshold::Alpha(a), TestSide::TwoSided) => {
                let (lo, hi) = stats::threshold_two_sided(self.c, self.steps, a)?;
                Ok((Some(lo), hi))
            }
        }
    }
}

fn check_ranks(obs: &ObservationSet, cfg: &VarianceRatioConfig) -> Result<()> {
    if cfg.r_max == 0 {
        return Err(Error::Parameter("r_max must be at least 1".into()));
    }
    if cfg.r_max > obs.rows().min(obs.cols()) {
        return Err(Error::Parameter(format!(
            "r_max = {} exceeds the matrix dimensions {}x{}",
            cfg.r_max,
            obs.rows(),
            obs.cols()
        )));
    }
    if cfg.steps < 2 {
        return Err(Error::Parameter("L must be at least 2".into()));
    }
    Ok(())
}

/// Rotated working set and its subsample chain.
fn prepare(obs: &ObservationSet, cfg: &VarianceRatioConfig) -> Result<(ObservationSet, Option<f64>, SubsampleChain)> {
    let (work, rotation_used) = if cfg.use_rotation {
        let profile = rotation::find_theta_opt(obs, &cfg.angles, cfg.rotation_reg, &cfg.rotation_solver)?;
        debug!("rotation search: theta_opt = {}, rho = {}", profile.theta_opt, profile.rho_opt());
        let rot = rotation::rotation_map(obs.rows(), profile.theta_opt)?;
        (rotation::apply_rotation(obs, &rot)?, Some(profile.theta_opt))
    } else {
        (obs.clone(), None)
    };
    let chain = stats::build_chain(&work, cfg.c, cfg.steps, derive_seed(cfg.seed, &[0]))?;
    if !stats::chain_is_completable(&work, cfg.c, cfg.steps, cfg.r_max) {
        warn!(
            "terminal set of {} samples is below the rank-{} degrees of freedom",
            work.len() - cfg.c * cfg.steps,
            cfg.r_max
        );
    }
    Ok((work, rotation_used, chain))
}

/// Ratio at rank `r`; `None` when degenerate (exact fit).
fn ratio_at(chain: &SubsampleChain, work: &ObservationSet, r: usize, solver: &CompletionConfig) -> Result<Option<f64>> {
    let z = stats::compute_z(chain, work, r, solver)?;
    match stats::variance_ratio(&z) {
        Ok(s) => Ok(Some(s.ratio)),
        Err(Error::DegenerateStatistic(msg)) => {
            debug!("rank {r}: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Variance-ratio rank test over `r = 1..=r_max`, stopping at the first
/// accepted rank. A degenerate ratio (residual differences vanish) counts as
/// acceptance.
pub fn detect_variance_ratio(obs: &ObservationSet, cfg: &VarianceRatioConfig) -> Result<RankDecision> {
    check_ranks(obs, cfg)?;
    let (lower, upper) = cfg.acceptance_bounds()?;
    let (work, rotation_used, chain) = prepare(obs, cfg)?;

    let mut trace = Vec::with_capacity(cfg.r_max);
    let mut r_hat = 0;
    for r in 1..=cfg.r_max {
        let value = ratio_at(&chain, &work, r, &cfg.solver)?;
        let accepted = value.map_or(true, |v| v < upper && lower.map_or(true, |lo| v > lo));
        trace.push(TraceEntry { rank: r, value, accepted });
        if accepted {
            r_hat = r;
            break;
        }
    }
    Ok(RankDecision {
        method: Method::VarianceRatio,
        r_hat,
        threshold_used: upper,
        threshold_lower: lower,
        alpha: match cfg.threshold {
            Threshold::Alpha(a) => Some(a),
            Threshold::Fixed(_) => None,
        },
        rotation_used,
        trace,
        inconclusive: r_hat == 0,
        saturated: false,
    })
}

/// Ratios at every rank `1..=r_max` without early stopping (for threshold
/// sweeps), plus the rotation applied.
pub fn variance_ratio_profile(obs: &ObservationSet, cfg: &VarianceRatioConfig) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    check_ranks(obs, cfg)?;
    let (work, rotation_used, chain) = prepare(obs, cfg)?;
    let ratios = (1..=cfg.r_max)
        .map(|r| ratio_at(&chain, &work, r, &cfg.solver))
        .collect::<Result<Vec<_>>>()?;
    Ok((ratios, rotation_used))
}

/// Rank chosen from a full ratio profile at upper threshold `b`.
pub fn first_ratio_below(ratios: &[Option<f64>], b: f64) -> Option<usize> {
    ratios.iter().position(|v| v.map_or(true, |v| v < b)).map(|k| k + 1)
}

#[derive(Debug, Clone)]
pub struct AveragedRotationsConfig {
    /// Number of leading singular values kept per rotation.
    pub n: usize,
    pub angles: Vec<f64>,
    pub b: f64,
    /// Soft-impute penalty; `None` picks it per angle.
    pub reg: Option<f64>,
    pub solver: CompletionConfig,
}

impl Default for AveragedRotationsConfig {
    fn default() -> Self {
        Self {
            n: 20,
            angles: default_angles(20),
            b: 0.8,
            reg: None,
            solver: default_rotation_solver(),
        }
    }
}

/// Cumulative fractions `sum_{i<=r} s_i / sum_{i<=n} s_i` for `r = 1..=n`.
/// Returns `None` when the total is zero.
pub fn cumulative_fractions(spectrum: &[f64], n: usize) -> Option<Vec<f64>> {
    let head: Vec<f64> = (0..n).map(|i| spectrum.get(i).copied().unwrap_or(0.0)).collect();
    let total: f64 = head.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = head
        .iter()
        .map(|s| {
            acc += s;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    Some(out)
}

/// Decision from cumulative fractions: the smallest `r` with fraction `> b`,
/// else `n` with the saturation flag.
fn fraction_decision(method: Method, fractions: &[f64], b: f64, rotation_used: Option<f64>) -> RankDecision {
    let r_hat = first_fraction_above(fractions, b);
    let hit = fractions.iter().any(|&f| f > b);
    let trace = fractions[..r_hat]
        .iter()
        .enumerate()
        .map(|(k, &f)| TraceEntry {
            rank: k + 1,
            value: Some(f),
            accepted: f > b,
        })
        .collect();
    RankDecision {
        method,
        r_hat,
        threshold_used: b,
        threshold_lower: None,
        alpha: None,
        rotation_used,
        trace,
        inconclusive: false,
        saturated: !hit,
    }
}

fn zero_signal(method: Method, b: f64) -> RankDecision {
    warn!("{method}: observed matrix has no energy; decision is inconclusive");
    RankDecision {
        method,
        r_hat: 0,
        threshold_used: b,
        threshold_lower: None,
        alpha: None,
        rotation_used: None,
        trace: Vec::new(),
        inconclusive: true,
        saturated: false,
    }
}

/// Rank from spectra summed over rotations (as if from one spectrum).
pub fn averaged_fraction_rank(spectra: &[Vec<f64>], n: usize, b: f64) -> Option<(usize, Vec<f64>)> {
    let mut sums = vec![0.0; n];
    for s in spectra {
        for (acc, v) in sums.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let fr = cumulative_fractions(&sums, n)?;
    let d = fraction_decision(Method::AveragedRotations, &fr, b, None);
    Some((d.r_hat, fr))
}

/// Leading `n` singular values of the nuclear-norm completions, summed over
/// the configured rotations. Angles whose completion fails are skipped.
pub fn averaged_spectrum(obs: &ObservationSet, cfg: &AveragedRotationsConfig) -> Result<Vec<f64>> {
    if cfg.n == 0 || cfg.n > obs.rows().min(obs.cols()) {
        return Err(Error::Parameter(format!(
            "n = {} must lie in 1..={}",
            cfg.n,
            obs.rows().min(obs.cols())
        )));
    }
    if cfg.angles.is_empty() {
        return Err(Error::Parameter("need at least one rotation angle".into()));
    }
    let mut sums = vec![0.0; cfg.n];
    let mut ok = 0;
    let mut first_err = None;
    for &theta in &cfg.angles {
        match rotation::complete_rotated(obs, theta, cfg.reg, &cfg.solver) {
            Ok(res) => {
                ok += 1;
                for (acc, v) in sums.iter_mut().zip(&res.spectrum) {
                    *acc += v;
                }
            }
            Err(e) => {
                warn!("rotation {theta}: completion failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if ok == 0 {
        return Err(Error::NumericalFailure(format!(
            "completion failed at every angle; first error: {}",
            first_err.expect("at least one angle")
        )));
    }
    Ok(sums)
}

/// Averages the leading `n` singular values of nuclear-norm completions over
/// the configured rotations and thresholds their cumulative fraction.
pub fn detect_averaged_rotations(obs: &ObservationSet, cfg: &AveragedRotationsConfig) -> Result<RankDecision> {
    if !cfg.b.is_finite() {
        return Err(Error::Parameter("b must be finite".into()));
    }
    let sums = averaged_spectrum(obs, cfg)?;
    Ok(match cumulative_fractions(&sums, cfg.n) {
        Some(fr) => fraction_decision(Method::AveragedRotations, &fr, cfg.b, None),
        None => zero_signal(Method::AveragedRotations, cfg.b),
    })
}

/// Rank chosen from a cumulative-fraction curve at threshold `b`
/// (the curve length when nothing exceeds `b`).
pub fn first_fraction_above(fractions: &[f64], b: f64) -> usize {
    fractions.iter().position(|&f| f > b).map_or(fractions.len(), |k| k + 1)
}

/// Zero-fill, full SVD, cumulative-fraction threshold over all singular values.
pub fn detect_baseline(obs: &ObservationSet, b: f64) -> Result<RankDecision> {
    if !b.is_finite() {
        return Err(Error::Parameter("b must be finite".into()));
    }
    let s = matrix::singular_values(&obs.zero_filled())?;
    Ok(match cumulative_fractions(&s, s.len()) {
        Some(fr) => fraction_decision(Method::Baseline, &fr, b, None),
        None => zero_signal(Method::Baseline, b),
    })
}

/// Full baseline fraction curve, for threshold sweeps.
pub fn baseline_fractions(obs: &ObservationSet) -> Result<Vec<f64>> {
    let s = matrix::singular_values(&obs.zero_filled())?;
    Ok(cumulative_fractions(&s, s.len()).unwrap_or_default())
}

/// Detector selection with its parameters.
#[derive(Debug, Clone)]
pub enum DetectorConfig {
    VarianceRatio(VarianceRatioConfig),
    AveragedRotations(AveragedRotationsConfig),
    Baseline { b: f64 },
}

impl DetectorConfig {
    pub fn method(&self) -> Method {
        match self {
            DetectorConfig::VarianceRatio(_) => Method::VarianceRatio,
            DetectorConfig::AveragedRotations(_) => Method::AveragedRotations,
            DetectorConfig::Baseline { .. } => Method::Baseline,
        }
    }

    /// Runs the detector; `seed` replaces the configured chain seed.
    pub fn detect(&self, obs: &ObservationSet, seed: u64) -> Result<RankDecision> {
        match self {
            DetectorConfig::VarianceRatio(cfg) => {
                let cfg = VarianceRatioConfig { seed, ..cfg.clone() };
                detect_variance_ratio(obs, &cfg)
            }
            DetectorConfig::AveragedRotations(cfg) => detect_averaged_rotations(obs, cfg),
            DetectorConfig::Baseline { b } => detect_baseline(obs, *b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{DenseMatrix, Sample};
    use crate::rng::rng_from_seed;
    use crate::synth::{planted_low_rank, planted_problem, uniform_mask};

    fn diag_obs(values: &[f64], n: usize) -> ObservationSet {
        let samples = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| Sample {
                row: i,
                col: j,
                value: if i == j { values.get(i).copied().unwrap_or(0.0) } else { 0.0 },
            })
            .collect();
        ObservationSet::new(n, n, samples).unwrap()
    }

    #[test]
    fn cumulative_fraction_example() {
        let fr = cumulative_fractions(&[10.0, 5.0, 1.0, 0.0], 3).unwrap();
        assert!((fr[0] - 0.625).abs() < 1e-12);
        assert!((fr[1] - 0.9375).abs() < 1e-12);
        assert_eq!(fr[2], 1.0);
        let (r, _) = averaged_fraction_rank(&[vec![10.0, 5.0, 1.0]], 3, 0.9).unwrap();
        assert_eq!(r, 2);
        let (r, _) = averaged_fraction_rank(&[vec![10.0, 5.0, 1.0]], 3, 0.0).unwrap();
        assert_eq!(r, 1);
        assert!(cumulative_fractions(&[0.0, 0.0], 2).is_none());
    }

    #[test]
    fn baseline_examples() {
        let obs = diag_obs(&[10.0, 5.0, 1.0], 6);
        let d = detect_baseline(&obs, 0.42).unwrap();
        assert_eq!(d.r_hat, 1);
        assert_eq!(d.method, Method::Baseline);
        assert_eq!(d.trace.len(), 1);
        assert_eq!(detect_baseline(&obs, 0.99).unwrap().r_hat, 3);
        let sat = detect_baseline(&obs, 1.0).unwrap();
        assert!(sat.saturated);
        assert_eq!(sat.r_hat, 6);
        let empty = detect_baseline(&ObservationSet::empty(4, 4), 0.5).unwrap();
        assert!(empty.inconclusive);
    }

    #[test]
    fn baseline_threshold_monotone() {
        let mut rng = rng_from_seed(2);
        let truth = planted_low_rank(20, 20, &[9.0, 4.0, 2.0, 1.0], &mut rng);
        let mask = uniform_mask(20, 20, 250, &mut rng).unwrap();
        let obs = matrix::mask_project(&truth, &mask).unwrap();
        let mut prev = 0;
        for k in 0..=100 {
            let r = detect_baseline(&obs, k as f64 / 100.0).unwrap().r_hat;
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn averaged_rotations_single_angle_matches_arithmetic() {
        // Fully observed diagonal, reg 0: soft-impute returns the matrix itself.
        let obs = diag_obs(&[10.0, 5.0, 1.0], 6);
        let cfg = AveragedRotationsConfig {
            n: 3,
            angles: vec![0.0],
            b: 0.9,
            reg: Some(0.0),
            solver: CompletionConfig::default(),
        };
        let d = detect_averaged_rotations(&obs, &cfg).unwrap();
        assert_eq!(d.r_hat, 2);
        assert!((d.trace[0].value.unwrap() - 0.625).abs() < 1e-9);
        assert!((d.trace[1].value.unwrap() - 0.9375).abs() < 1e-9);
        let d0 = detect_averaged_rotations(&obs, &AveragedRotationsConfig { b: 0.0, ..cfg.clone() }).unwrap();
        assert_eq!(d0.r_hat, 1);
        let sat = detect_averaged_rotations(&obs, &AveragedRotationsConfig { b: 1.0, ..cfg.clone() }).unwrap();
        assert!(sat.saturated);
        assert_eq!(sat.r_hat, 3);
        assert!(detect_averaged_rotations(&obs, &AveragedRotationsConfig { n: 7, ..cfg.clone() }).is_err());
        assert!(detect_averaged_rotations(&obs, &AveragedRotationsConfig { angles: vec![], ..cfg }).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::VarianceRatio, Method::AveragedRotations, Method::Baseline] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("magic".parse::<Method>().is_err());
    }

    fn vr_cfg(r_max: usize, c: usize, steps: usize) -> VarianceRatioConfig {
        VarianceRatioConfig {
            r_max,
            c,
            steps,
            threshold: Threshold::Alpha(0.05),
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_rank_two_is_degenerate_acceptance() {
        let mut rng = rng_from_seed(5);
        let (_, obs) = planted_problem(30, 30, &[20.0, 10.0], 700, 0.0, &mut rng).unwrap();
        let d = detect_variance_ratio(&obs, &vr_cfg(4, 10, 10)).unwrap();
        assert_eq!(d.r_hat, 2);
        assert_eq!(d.trace.len(), 2);
        assert!(d.trace[1].value.is_none());
        assert!(!d.inconclusive);
        let json = d.to_json().unwrap();
        assert!(json.contains("\"variance_ratio\""));
        assert!(json.contains("\"r_hat\": 2"));
    }

    #[test]
    fn variance_ratio_finds_planted_rank() {
        let mut rng = rng_from_seed(21);
        let (_, obs) = planted_problem(40, 40, &[400.0, 200.0], 1200, 1.0, &mut rng).unwrap();
        let d = detect_variance_ratio(&obs, &vr_cfg(4, 20, 20)).unwrap();
        assert_eq!(d.r_hat, 2, "{:?}", d.trace);
        assert!(d.trace[0].value.unwrap() > d.threshold_used);
        assert!((d.threshold_used - stats::threshold(20, 20, 0.05).unwrap()).abs() < 1e-15);
        assert_eq!(d.alpha, Some(0.05));
    }

    #[test]
    fn variance_ratio_inconclusive_when_nothing_accepted() {
        let mut rng = rng_from_seed(22);
        let (_, obs) = planted_problem(30, 30, &[400.0, 200.0, 100.0], 700, 1.0, &mut rng).unwrap();
        let cfg = VarianceRatioConfig {
            threshold: Threshold::Fixed(-1.0),
            ..vr_cfg(2, 10, 10)
        };
        let d = detect_variance_ratio(&obs, &cfg).unwrap();
        assert_eq!(d.r_hat, 0);
        assert!(d.inconclusive);
        assert_eq!(d.trace.len(), 2);
    }

    #[test]
    fn variance_ratio_parameter_errors() {
        let mut rng = rng_from_seed(23);
        let (_, obs) = planted_problem(10, 10, &[5.0], 60, 0.1, &mut rng).unwrap();
        assert!(matches!(
            detect_variance_ratio(&obs, &vr_cfg(2, 10, 10)),
            Err(Error::InfeasibleChain { .. })
        ));
        assert!(detect_variance_ratio(&obs, &vr_cfg(0, 2, 5)).is_err());
        assert!(detect_variance_ratio(&obs, &vr_cfg(11, 2, 5)).is_err());
        let two_fixed = VarianceRatioConfig {
            threshold: Threshold::Fixed(1.2),
            side: TestSide::TwoSided,
            ..vr_cfg(2, 2, 5)
        };
        assert!(matches!(detect_variance_ratio(&obs, &two_fixed), Err(Error::Parameter(_))));
    }

    #[test]
    fn variance_ratio_is_deterministic_and_scale_free() {
        let mut rng = rng_from_seed(24);
        let (_, obs) = planted_problem(24, 24, &[60.0, 30.0], 450, 1.0, &mut rng).unwrap();
        let cfg = vr_cfg(3, 10, 12);
        let a = detect_variance_ratio(&obs, &cfg).unwrap();
        let b = detect_variance_ratio(&obs, &cfg).unwrap();
        assert_eq!(a, b);
        let scaled = detect_variance_ratio(&obs.scaled(1e3), &cfg).unwrap();
        assert_eq!(a.r_hat, scaled.r_hat);
    }

    #[test]
    fn rotation_flag_records_angle() {
        let n = 16;
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            let d = (i as f64 - 7.0).powi(2) + (j as f64 - 4.0).powi(2);
            let e = (i as f64 - 7.0).powi(2) + (j as f64 - 11.0).powi(2);
            (-d / 6.0).exp() + (-e / 6.0).exp()
        });
        let mut rng = rng_from_seed(3);
        let mask = uniform_mask(n, n, 220, &mut rng).unwrap();
        let obs = matrix::mask_project(&m, &mask).unwrap();
        let cfg = VarianceRatioConfig {
            use_rotation: true,
            angles: default_angles(4),
            threshold: Threshold::Fixed(10.0),
            ..vr_cfg(2, 5, 5)
        };
        let d = detect_variance_ratio(&obs, &cfg).unwrap();
        let theta = d.rotation_used.expect("rotation recorded");
        assert!(default_angles(4).contains(&theta));
        assert_eq!(d.r_hat, 1);
    }
}
