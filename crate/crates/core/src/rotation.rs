//! Nearest-neighbour grid rotations of partially observed square fields and
//! the spectral-concentration search for the rotation that best separates
//! sources.
//!
//! A rotation re-indexes cells: the center of cell `(i, j)` is rotated
//! counter-clockwise about the grid center and rounded to the nearest cell.
//! Images falling outside the grid are dropped, and when two cells land on the
//! same target the one with the smaller column-major index keeps it. At
//! multiples of a quarter turn the map is an exact permutation.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::completion::{self, CompletionConfig, NuclearNormResult};
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, ObservationSet, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct GridRotation {
    n: usize,
    theta: f64,
    /// Column-major source index -> column-major target index.
    forward: Vec<Option<usize>>,
}

impl GridRotation {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Target cell of `(row, col)`, if it has one.
    pub fn target(&self, row: usize, col: usize) -> Option<(usize, usize)> {
        self.forward[row + col * self.n].map(|t| (t % self.n, t / self.n))
    }

    /// Fraction of cells that are carried to some target.
    pub fn coverage(&self) -> f64 {
        self.forward.iter().filter(|t| t.is_some()).count() as f64 / self.forward.len() as f64
    }

    pub fn is_permutation(&self) -> bool {
        self.forward.iter().all(Option::is_some)
    }

    /// The permutation matrix form as an index map over `vec(A)`.
    pub fn linear_map(&self) -> &[Option<usize>] {
        &self.forward
    }

    /// Rotates a dense matrix; cells without a preimage are zero.
    pub fn apply_dense(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if m.shape() != (self.n, self.n) {
            return Err(Error::Dimension(format!(
                "rotation is {0}x{0} but matrix is {1:?}",
                self.n,
                m.shape()
            )));
        }
        let v = matrix::vec(m);
        let mut out = vec![0.0; v.len()];
        for (src, tgt) in self.forward.iter().enumerate() {
            if let Some(t) = tgt {
                out[*t] = v[src];
            }
        }
        matrix::unvec(&out, self.n, self.n)
    }
}

fn snapped_trig(theta: f64) -> (f64, f64) {
    let quarters = theta / FRAC_PI_2;
    let k = quarters.round();
    if (quarters - k).abs() < 1e-12 {
        match (k as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (theta.cos(), theta.sin())
    }
}

/// Nearest-neighbour rotation of an `n x n` grid by `theta` radians
/// (counter-clockwise, rows increasing downward).
pub fn rotation_map(n: usize, theta: f64) -> Result<GridRotation> {
    if n < 2 {
        return Err(Error::Parameter(format!("grid side must be at least 2, got {n}")));
    }
    if !theta.is_finite() {
        return Err(Error::Parameter("rotation angle must be finite".into()));
    }
    let theta = theta.rem_euclid(2.0 * PI);
    let (cos, sin) = snapped_trig(theta);
    let center = (n as f64 - 1.0) / 2.0;
    let mut owner: Vec<Option<usize>> = vec![None; n * n];
    let mut forward = vec![None; n * n];
    // Column-major order visits smaller linear indices first, so the first
    // claimant of a target wins.
    for src in 0..n * n {
        let (row, col) = (src % n, src / n);
        let x = col as f64 - center;
        let y = center - row as f64;
        let xr = x * cos - y * sin;
        let yr = x * sin + y * cos;
        let tc = (xr + center).round();
        let tr = (center - yr).round();
        if tr < 0.0 || tc < 0.0 || tr >= n as f64 || tc >= n as f64 {
            continue;
        }
        let tgt = tr as usize + tc as usize * n;
        if owner[tgt].is_none() {
            owner[tgt] = Some(src);
            forward[src] = Some(tgt);
        }
    }
    Ok(GridRotation { n, theta, forward })
}

/// Carries every observed sample to its rotated cell, dropping samples whose
/// cell has no target.
pub fn apply_rotation(obs: &ObservationSet, rot: &GridRotation) -> Result<ObservationSet> {
    if obs.rows() != rot.n || obs.cols() != rot.n {
        return Err(Error::Dimension(format!(
            "rotation is {0}x{0} but observations are {1}x{2}",
            rot.n,
            obs.rows(),
            obs.cols()
        )));
    }
    let samples = obs
        .iter()
        .filter_map(|s| {
            rot.target(s.row, s.col).map(|(row, col)| Sample {
                row,
                col,
                value: s.value,
            })
        })
        .collect();
    ObservationSet::new(rot.n, rot.n, samples)
}

/// `lambda_1^2 / sum_k lambda_k^2`.
pub fn spectral_concentration(m: &DenseMatrix) -> Result<f64> {
    let s = matrix::singular_values(m)?;
    concentration_of(&s)
}

pub(crate) fn concentration_of(spectrum: &[f64]) -> Result<f64> {
    let total: f64 = spectrum.iter().map(|v| v * v).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateStatistic(
            "spectral concentration of a zero matrix is undefined".into(),
        ));
    }
    Ok(spectrum[0] * spectrum[0] / total)
}

/// `D` equispaced angles `(i-1) pi / (2D)`, `i = 1..=D`.
pub fn default_angles(d: usize) -> Vec<f64> {
    (0..d).map(|i| i as f64 * PI / (2.0 * d as f64)).collect()
}

/// Rotates the observations and completes them with soft-impute. `reg = None`
/// uses [`completion::default_nuclear_reg`] of the rotated set.
pub fn complete_rotated(
    obs: &ObservationSet,
    theta: f64,
    reg: Option<f64>,
    cfg: &CompletionConfig,
) -> Result<NuclearNormResult> {
    let rot = rotation_map(obs.rows(), theta)?;
    let rotated = apply_rotation(obs, &rot)?;
    let reg = match reg {
        Some(r) => r,
        None => completion::default_nuclear_reg(&rotated)?,
    };
    completion::complete_nuclear_norm_traced(&rotated, reg, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationProfile {
    /// Angles that were evaluated successfully, ascending.
    pub thetas: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta_opt: f64,
    pub theta_max: f64,
    /// Angles whose completion failed, with the error message.
    pub failures: Vec<(f64, String)>,
}

impl RotationProfile {
    pub fn rho_at(&self, theta: f64) -> Option<f64> {
        self.thetas
            .iter()
            .position(|t| *t == theta)
            .map(|k| self.rho[k])
    }

    pub fn rho_opt(&self) -> f64 {
        self.rho_at(self.theta_opt).expect("theta_opt is evaluated")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,rho\n");
        for (t, r) in self.thetas.iter().zip(&self.rho) {
            let _ = writeln!(out, "{t},{r}");
        }
        out
    }
}

/// Evaluates `rho(theta)` on the nuclear-norm completion of each rotated
/// observation set and picks the minimizer (ties go to the smaller angle).
pub fn find_theta_opt(
    obs: &ObservationSet,
    angles: &[f64],
    reg: Option<f64>,
    cfg: &CompletionConfig,
) -> Result<RotationProfile> {
    if angles.len() < 2 {
        return Err(Error::Parameter(format!(
            "rotation search needs at least 2 angles, got {}",
            angles.len()
        )));
    }
    if obs.rows() != obs.cols() {
        return Err(Error::Dimension("rotation needs a square grid".into()));
    }
    let mut sorted = angles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let evaluated: Vec<(f64, Result<f64>)> = sorted
        .par_iter()
        .map(|&theta| {
            let rho = complete_rotated(obs, theta, reg, cfg).and_then(|res| concentration_of(&res.spectrum));
            (theta, rho)
        })
        .collect();

    let mut profile = RotationProfile {
        thetas: Vec::new(),
        rho: Vec::new(),
        theta_opt: f64::NAN,
        theta_max: f64::NAN,
        failures: Vec::new(),
    };
    for (theta, rho) in evaluated {
        match rho {
            Ok(r) => {
                profile.thetas.push(theta);
                profile.rho.push(r);
            }
            Err(e) => profile.failures.push((theta, e.to_string())),
        }
    }
    if profile.thetas.is_empty() {
        return Err(Error::NumericalFailure(format!(
            "completion failed at every angle; first error: {}",
            profile.failures[0].1
        )));
    }
    let mut opt = 0;
    let mut max = 0;
    for k in 1..profile.rho.len() {
        if profile.rho[k] < profile.rho[opt] {
            opt = k;
        }
        if profile.rho[k] > profile.rho[max] {
            max = k;
        }
    }
    profile.theta_opt = profile.thetas[opt];
    profile.theta_max = profile.thetas[max];
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::synth::random_matrix;

    #[test]
    fn zero_angle_is_identity() {
        let rot = rotation_map(7, 0.0).unwrap();
        assert!(rot.is_permutation());
        assert_eq!(rot.coverage(), 1.0);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(rot.target(i, j), Some((i, j)));
            }
        }
    }

    #[test]
    fn quarter_turn_on_two_by_two() {
        // Brute force: cell centers relative to (0.5, 0.5) with y pointing up.
        let rot = rotation_map(2, FRAC_PI_2).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let (x, y) = (j as f64 - 0.5, 0.5 - i as f64);
            let (xr, yr) = (-y, x);
            let want = ((0.5 - yr) as usize, (xr + 0.5) as usize);
            assert_eq!(rot.target(i, j), Some(want));
        }
        // Counter-clockwise: top-right -> top-left -> bottom-left -> bottom-right.
        assert_eq!(rot.target(0, 1), Some((0, 0)));
        assert_eq!(rot.target(0, 0), Some((1, 0)));
        assert_eq!(rot.target(1, 0), Some((1, 1)));
        assert_eq!(rot.target(1, 1), Some((0, 1)));
    }

    #[test]
    fn thirty_degree_coverage() {
        // Independent enumeration: rotate every cell center, keep in-grid
        // images, and count distinct targets (one winner per target).
        let n = 100;
        let (c, t) = ((n as f64 - 1.0) / 2.0, PI / 6.0);
        let mut inside = 0;
        let mut targets = std::collections::HashSet::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (j as f64 - c, c - i as f64);
                let tc = (x * t.cos() - y * t.sin() + c).round();
                let tr = (c - (x * t.sin() + y * t.cos())).round();
                if (0.0..n as f64).contains(&tc) && (0.0..n as f64).contains(&tr) {
                    inside += 1;
                    targets.insert((tr as usize, tc as usize));
                }
            }
        }
        let rot = rotation_map(n, t).unwrap();
        assert_eq!(rot.coverage(), targets.len() as f64 / 1e4);
        // The central disk survives; nearest-neighbour collisions cost the rest.
        assert!(inside as f64 / 1e4 >= 0.75);
        assert!(rot.coverage() > 0.7 && rot.coverage() < 1.0, "{}", rot.coverage());
    }

    #[test]
    fn targets_are_unique() {
        for theta in [0.1, 0.7, 1.3] {
            let rot = rotation_map(31, theta).unwrap();
            let mut seen = std::collections::HashSet::new();
            for t in rot.linear_map().iter().flatten() {
                assert!(seen.insert(*t));
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(rotation_map(1, 0.0).is_err());
        assert!(rotation_map(5, f64::NAN).is_err());
    }

    #[test]
    fn four_quarter_turns_restore() {
        let mut rng = rng_from_seed(1);
        let m = random_matrix(6, 6, &mut rng);
        let omega: Vec<_> = (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).filter(|(i, j)| (i + 2 * j) % 3 != 0).collect();
        let obs = matrix::mask_project(&m, &omega).unwrap();
        let rot = rotation_map(6, FRAC_PI_2).unwrap();
        let mut cur = obs.clone();
        for _ in 0..4 {
            cur = apply_rotation(&cur, &rot).unwrap();
        }
        let mut a = cur.samples().to_vec();
        let mut b = obs.samples().to_vec();
        let key = |s: &Sample| (s.row, s.col);
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
        assert_eq!(apply_rotation(&obs, &rotation_map(6, 0.0).unwrap()).unwrap(), obs);
    }

    #[test]
    fn generic_angle_never_grows_sample_count() {
        let mut rng = rng_from_seed(2);
        let m = random_matrix(20, 20, &mut rng);
        let omega: Vec<_> = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).collect();
        let obs = matrix::mask_project(&m, &omega).unwrap();
        let out = apply_rotation(&obs, &rotation_map(20, 0.4).unwrap()).unwrap();
        assert!(out.len() < obs.len());
        assert!(apply_rotation(&ObservationSet::empty(5, 5), &rotation_map(20, 0.4).unwrap()).is_err());
    }

    #[test]
    fn concentration_examples() {
        let r1 = DenseMatrix::from_fn(4, 3, |i, j| (i + 1) as f64 * (j as f64 - 0.5));
        assert!((spectral_concentration(&r1).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_concentration(&DenseMatrix::identity(4)).unwrap() - 0.25).abs() < 1e-12);
        let d = DenseMatrix::from_diagonal(&[3.0, 4.0]);
        assert!((spectral_concentration(&d).unwrap() - 0.64).abs() < 1e-12);
        assert!(matches!(
            spectral_concentration(&DenseMatrix::zeros(3, 3)),
            Err(Error::DegenerateStatistic(_))
        ));
    }

    #[test]
    fn default_angle_grid() {
        let a = default_angles(20);
        assert_eq!(a.len(), 20);
        assert_eq!(a[0], 0.0);
        assert!((a[19] - 19.0 * PI / 40.0).abs() < 1e-15);
    }

    #[test]
    fn search_needs_two_angles() {
        let obs = ObservationSet::new(3, 3, vec![Sample { row: 0, col: 0, value: 1.0 }]).unwrap();
        assert!(matches!(
            find_theta_opt(&obs, &[0.0], None, &CompletionConfig::default()),
            Err(Error::Parameter(_))
        ));
    }
}
