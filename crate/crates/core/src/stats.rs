//! Nested sub-sampling and the variance-ratio statistic.
//!
//! From an observation set `Omega_0` we remove `c` uniformly chosen samples at a
//! time to get `Omega_0 ⊃ Omega_1 ⊃ ... ⊃ Omega_L`. Solving the rank-`r`
//! completion on each set gives residuals `SSE_l`; at the true rank the
//! differences `Z_l = SSE_{l-1} - SSE_l` behave like `sigma^2 chi^2(c)`.
//! The first moment estimator `sum Z / (cL)` and the second moment estimator
//! `sqrt(sum (Z - mean)^2 / (2cL))` both target `sigma^2`, so their ratio is
//! scale-free and close to one when `r` is correct.

use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::ChiSquared;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::completion::{self, CompletionConfig};
use crate::error::{Error, Result};
use crate::matrix::ObservationSet;
use crate::rng::{derived_rng, rng_from_seed};

/// `Z_l` below `-NEGATIVE_Z_TOL * SSE_{l-1}` gets a diagnostic.
const NEGATIVE_Z_TOL: f64 = 1e-6;
/// `sigma1^2` at or below this fraction of the mean squared observation is
/// treated as an exact fit.
const DEGENERATE_REL: f64 = 1e-12;

/// Nested observation sets, stored as the order in which samples are removed.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleChain {
    base_len: usize,
    c: usize,
    steps: usize,
    seed: u64,
    removed: Vec<usize>,
}

impl SubsampleChain {
    pub fn c(&self) -> usize {
        self.c
    }

    /// Number of sub-sampling steps `L`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// Positions (into the base observation set) removed, in removal order.
    pub fn removal_order(&self) -> &[usize] {
        &self.removed
    }

    /// Positions of the samples in `Omega_l`, ascending.
    pub fn set(&self, l: usize) -> Vec<usize> {
        assert!(l <= self.steps, "chain has only {} steps", self.steps);
        let mut drop = vec![false; self.base_len];
        for &p in &self.removed[..l * self.c] {
            drop[p] = true;
        }
        (0..self.base_len).filter(|&p| !drop[p]).collect()
    }

    /// All sets `Omega_0..=Omega_L`.
    pub fn sets(&self) -> Vec<Vec<usize>> {
        (0..=self.steps).map(|l| self.set(l)).collect()
    }
}

/// Builds `Omega_0 ⊃ ... ⊃ Omega_L`, removing `c` samples per step uniformly
/// at random without replacement.
pub fn build_chain(obs: &ObservationSet, c: usize, steps: usize, seed: u64) -> Result<SubsampleChain> {
    if c == 0 {
        return Err(Error::Parameter("leave-out count c must be at least 1".into()));
    }
    if steps == 0 {
        return Err(Error::Parameter("number of sub-samples L must be at least 1".into()));
    }
    let removed_total = c.checked_mul(steps).unwrap_or(usize::MAX);
    if removed_total >= obs.len() {
        return Err(Error::InfeasibleChain {
            removed: removed_total,
            available: obs.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..obs.len()).collect();
    let (picked, _) = order.partial_shuffle(&mut rng, removed_total);
    Ok(SubsampleChain {
        base_len: obs.len(),
        c,
        steps,
        seed,
        removed: picked.to_vec(),
    })
}

/// Whether the terminal set still has enough samples for a rank-`r_max` fit.
pub fn chain_is_completable(obs: &ObservationSet, c: usize, steps: usize, r_max: usize) -> bool {
    let terminal = obs.len().saturating_sub(c * steps);
    terminal >= completion::rank_dof(obs.rows(), obs.cols(), r_max)
}

/// Residual differences `Z_1..Z_L` for one tested rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSequence {
    z: Vec<f64>,
    sse: Vec<f64>,
    c: usize,
    rank_tested: Option<usize>,
    scale: f64,
}

impl ZSequence {
    /// Wraps raw differences (no SSE trace), e.g. simulated `sigma^2 chi^2(c)` draws.
    pub fn from_values(z: Vec<f64>, c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::Parameter("c must be at least 1".into()));
        }
        if z.is_empty() {
            return Err(Error::Input("empty Z sequence".into()));
        }
        Ok(Self {
            z,
            sse: Vec::new(),
            c,
            rank_tested: None,
            scale: 0.0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    /// `SSE_0..SSE_L`; empty for sequences built from raw values.
    pub fn sse_trace(&self) -> &[f64] {
        &self.sse
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn rank_tested(&self) -> Option<usize> {
        self.rank_tested
    }

    pub fn mean(&self) -> f64 {
        self.z.iter().sum::<f64>() / self.z.len() as f64
    }

    /// Multiplies every difference (and the SSE trace) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            z: self.z.iter().map(|v| v * k).collect(),
            sse: self.sse.iter().map(|v| v * k).collect(),
            scale: self.scale * k,
            ..self.clone()
        }
    }

    /// First half and second half, for the split statistic.
    pub fn split_halves(&self) -> Result<(Self, Self)> {
        if self.z.len() % 2 != 0 || self.z.len() < 4 {
            return Err(Error::Input("split needs an even sequence of length >= 4".into()));
        }
        let half = self.z.len() / 2;
        let mk = |z: &[f64]| Self {
            z: z.to_vec(),
            sse: Vec::new(),
            c: self.c,
            rank_tested: self.rank_tested,
            scale: self.scale,
        };
        Ok((mk(&self.z[..half]), mk(&self.z[half..])))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,sse,z\n");
        if let Some(s0) = self.sse.first() {
            let _ = writeln!(out, "0,{s0},");
        }
        for (k, z) in self.z.iter().enumerate() {
            let sse = self.sse.get(k + 1).map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{sse},{z}", k + 1);
        }
        out
    }
}

/// Solves the rank-`r` completion along the chain and differences the residuals.
pub fn compute_z(
    chain: &SubsampleChain,
    obs: &ObservationSet,
    r: usize,
    solver: &CompletionConfig,
) -> Result<ZSequence> {
    if chain.base_len() != obs.len() {
        return Err(Error::Input(format!(
            "chain was built for {} samples but observation set has {}",
            chain.base_len(),
            obs.len()
        )));
    }
    if r == 0 {
        return Err(Error::Parameter("rank must be at least 1".into()));
    }
    let tag = |step: usize| move |e: Error| Error::ChainStep { step, source: Box::new(e) };

    let first = completion::complete_fixed_rank(obs, r, solver).map_err(tag(0))?;
    let mut sse = Vec::with_capacity(chain.steps() + 1);
    sse.push(first.sse);
    let mut warm = first.warm_start();
    let mut z = Vec::with_capacity(chain.steps());
    for l in 1..=chain.steps() {
        let sub = obs.select(&chain.set(l));
        let res = completion::complete_fixed_rank_warm(&sub, r, solver, Some(&warm)).map_err(tag(l))?;
        let prev = sse[l - 1];
        let dz = prev - res.sse;
        if dz < -NEGATIVE_Z_TOL * prev {
            warn!("rank {r}: Z_{l} = {dz:e} is negative beyond solver tolerance (SSE_{} = {prev:e})", l - 1);
        }
        z.push(dz);
        sse.push(res.sse);
        warm = res.warm_start();
    }
    Ok(ZSequence {
        z,
        sse,
        c: chain.c(),
        rank_tested: Some(r),
        scale: obs.sum_of_squares() / obs.len() as f64,
    })
}

/// First-moment estimator `sum Z / (cL)`.
pub fn sigma1_sq(z: &ZSequence) -> f64 {
    z.z.iter().sum::<f64>() / (z.c * z.z.len()) as f64
}

/// Second-moment estimator `sqrt(sum (Z - mean)^2 / (2cL))`.
pub fn sigma2_sq(z: &ZSequence) -> f64 {
    let mean = z.mean();
    let ss: f64 = z.z.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (2 * z.c * z.z.len()) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStatistic {
    pub ratio: f64,
    /// `(ratio - 1) / sd` with the limiting null standard deviation.
    pub standardized: f64,
}

fn check_sigma1(s1: f64, scale: f64) -> Result<()> {
    if !(s1 > DEGENERATE_REL * scale) || !(s1 > 0.0) {
        return Err(Error::DegenerateStatistic(format!(
            "first-moment estimate {s1:e} is zero; residual differences vanish"
        )));
    }
    Ok(())
}

/// `sigma2^2 / sigma1^2`, standardized by the limiting null variance `(c+2)/(2cL)`.
pub fn variance_ratio(z: &ZSequence) -> Result<RatioStatistic> {
    if z.len() < 2 {
        return Err(Error::Input("variance ratio needs L >= 2".into()));
    }
    let s1 = sigma1_sq(z);
    check_sigma1(s1, z.scale)?;
    let ratio = sigma2_sq(z) / s1;
    let params = AsymptoticParams::new(z.c, z.len());
    Ok(RatioStatistic {
        ratio,
        standardized: (ratio - 1.0) / params.ratio_variance.sqrt(),
    })
}

/// Alternative statistic with independent numerator and denominator:
/// `sigma2^2(x) / sigma1^2(z)`, standardized by `(c+10)/(2cL)`.
pub fn split_variance_ratio(z: &ZSequence, x: &ZSequence) -> Result<RatioStatistic> {
    if z.len() != x.len() || z.c != x.c {
        return Err(Error::Input("split statistic needs sequences with equal L and c".into()));
    }
    if z.len() < 2 {
        return Err(Error::Input("variance ratio needs L >= 2".into()));
    }
    let s1 = sigma1_sq(z);
    check_sigma1(s1, z.scale)?;
    let ratio = sigma2_sq(x) / s1;
    let params = AsymptoticParams::new(z.c, z.len());
    Ok(RatioStatistic {
        ratio,
        standardized: (ratio - 1.0) / params.split_ratio_variance.sqrt(),
    })
}

/// Limiting normal laws of the two ratio statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub c: usize,
    #[serde(rename = "L")]
    pub steps: usize,
    pub ratio_mean: f64,
    /// `(c+2)/(2cL)`.
    pub ratio_variance: f64,
    /// `(c+10)/(2cL)`.
    pub split_ratio_variance: f64,
    /// Joint covariance of `(sigma1^2, sigma2^4)/sigma^2` scaled by `sqrt(L)`.
    pub cov_matrix: [[f64; 2]; 2],
    /// Same with independent numerator and denominator.
    pub indep_cov: [[f64; 2]; 2],
}

impl AsymptoticParams {
    pub fn new(c: usize, steps: usize) -> Self {
        let cf = c as f64;
        let cl = cf * steps as f64;
        Self {
            c,
            steps,
            ratio_mean: 1.0,
            ratio_variance: (cf + 2.0) / (2.0 * cl),
            split_ratio_variance: (cf + 10.0) / (2.0 * cl),
            cov_matrix: [[2.0 / cf, 4.0 / cf], [4.0 / cf, 2.0 + 12.0 / cf]],
            indep_cov: [[2.0 / cf, 0.0], [0.0, 2.0 + 12.0 / cf]],
        }
    }

    /// Delta-method variance `g^T S g` with `g = (-1, 1/2)`, divided by `L`.
    pub fn delta_variance(cov: &[[f64; 2]; 2], steps: usize) -> f64 {
        let g = [-1.0, 0.5];
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                v += g[i] * cov[i][j] * g[j];
            }
        }
        v / steps as f64
    }

    pub fn cov_is_positive_definite(&self) -> bool {
        let m = &self.cov_matrix;
        m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestSide {
    /// Reject when the ratio is too large (rank too small).
    #[default]
    Upper,
    TwoSided,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper critical value `1 + q_{1-alpha} sqrt((c+2)/(2cL))`.
pub fn threshold(c: usize, steps: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sd = AsymptoticParams::new(c, steps).ratio_variance.sqrt();
    Ok(1.0 + std_normal().inverse_cdf(1.0 - alpha) * sd)
}

/// Acceptance interval `1 ± q_{1-alpha/2} sd` for the two-sided test.
pub fn threshold_two_sided(c: usize, steps: usize, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let sd = AsymptoticParams::new(c, steps).ratio_variance.sqrt();
    let q = std_normal().inverse_cdf(1.0 - alpha / 2.0);
    Ok((1.0 - q * sd, 1.0 + q * sd))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn chi_square_ratio_once(c: usize, steps: usize, sigma: f64, seed: u64, split: bool) -> f64 {
    let mut rng = rng_from_seed(seed);
    let chi = ChiSquared::new(c as f64).expect("c >= 1");
    let var = sigma * sigma;
    let z: Vec<f64> = (0..steps).map(|_| var * rng.sample(chi)).collect();
    let zs = ZSequence::from_values(z, c).expect("nonempty");
    if split {
        let x: Vec<f64> = (0..steps).map(|_| var * rng.sample(chi)).collect();
        let xs = ZSequence::from_values(x, c).expect("nonempty");
        sigma2_sq(&xs) / sigma1_sq(&zs)
    } else {
        sigma2_sq(&zs) / sigma1_sq(&zs)
    }
}

fn simulate(c: usize, steps: usize, reps: usize, seed: u64, sigma: f64, split: bool) -> Result<Vec<f64>> {
    if reps < 100 {
        return Err(Error::Parameter(format!("reps must be at least 100, got {reps}")));
    }
    if c == 0 || steps < 2 {
        return Err(Error::Parameter("need c >= 1 and L >= 2".into()));
    }
    Ok((0..reps)
        .into_par_iter()
        .map(|k| {
            let s = derived_rng(seed, &[k as u64]).gen::<u64>();
            chi_square_ratio_once(c, steps, sigma, s, split)
        })
        .collect())
}

/// `reps` draws of `sigma2^2/sigma1^2` with `Z_l` i.i.d. `sigma^2 chi^2(c)`.
pub fn simulate_chi_square_ratio(c: usize, steps: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    simulate(c, steps, reps, seed, 1.0, false)
}

/// As [`simulate_chi_square_ratio`] with an explicit noise scale.
pub fn simulate_chi_square_ratio_scaled(
    c: usize,
    steps: usize,
    reps: usize,
    seed: u64,
    sigma: f64,
) -> Result<Vec<f64>> {
    simulate(c, steps, reps, seed, sigma, false)
}

/// Draws of the split statistic with an independent second sequence for the numerator.
pub fn simulate_split_ratio(c: usize, steps: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    simulate(c, steps, reps, seed, 1.0, true)
}
