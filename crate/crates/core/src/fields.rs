//! Ground-truth energy fields and sparse sensor sampling.
//!
//! Geometry: the field is a square of side `diameter_km` split into an
//! `n x n` grid. Cell `(i, j)` represents the point
//! `((i + 0.5) h, (j + 0.5) h)` with `h = diameter_km / n`; a source position
//! `(x, y)` uses the same axes, `x` along rows and `y` along columns.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet, Sample};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Isotropic,
    /// Bivariate skew-normal bump. `omega` is the correlation of the two
    /// latent normal components; `delta1`, `delta2` are the skewness weights.
    Skew { delta1: f64, delta2: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Position in km, `x` along rows and `y` along columns.
    pub position: (f64, f64),
    pub power: f64,
    #[serde(flatten)]
    pub kind: SourceKind,
}

impl SourceSpec {
    pub fn isotropic(position: (f64, f64), power: f64) -> Self {
        Self {
            position,
            power,
            kind: SourceKind::Isotropic,
        }
    }

    pub fn skew(position: (f64, f64), power: f64, delta1: f64, delta2: f64, omega: f64) -> Self {
        Self {
            position,
            power,
            kind: SourceKind::Skew { delta1, delta2, omega },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// Grid side `N`.
    pub n: usize,
    pub diameter_km: f64,
    pub freq_khz: f64,
    /// Spreading exponent in `d^alpha`.
    pub path_exponent: f64,
    /// Peak power `p` of every source.
    pub power: f64,
    /// Spatial scale (km per unit of the skew-normal's standard coordinates).
    pub skew_scale_km: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            n: 100,
            diameter_km: 15.0,
            freq_khz: 5.0,
            path_exponent: 3.0,
            power: 6.0,
            skew_scale_km: 1.0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Parameter(format!("grid side must be at least 2, got {}", self.n)));
        }
        for (name, v) in [
            ("diameter_km", self.diameter_km),
            ("freq_khz", self.freq_khz),
            ("power", self.power),
            ("skew_scale_km", self.skew_scale_km),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.path_exponent.is_finite() {
            return Err(Error::Parameter("path_exponent must be finite".into()));
        }
        Ok(())
    }

    pub fn cell_km(&self) -> f64 {
        self.diameter_km / self.n as f64
    }

    /// Physical coordinates of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.cell_km();
        ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    /// Grid cell containing a physical point (clamped to the grid).
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let h = self.cell_km();
        let clamp = |v: f64| ((v / h).floor().max(0.0) as usize).min(self.n - 1);
        (clamp(x), clamp(y))
    }
}

/// Dense ground truth plus the sources that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub truth: DenseMatrix,
    pub sources: Vec<SourceSpec>,
}

/// Absorption in dB/km at frequency `f` kHz.
pub fn attenuation_db(f: f64) -> f64 {
    let f2 = f * f;
    0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003
}

fn isotropic_value(d: f64, power: f64, alpha: f64, af_db: f64) -> f64 {
    let a = d.powf(alpha) * 10f64.powf(-af_db / 10.0 * d);
    power / (a + 1.0)
}

/// Skew-normal bump parameterized so its mode sits at the origin.
#[derive(Debug, Clone)]
pub struct SkewNormalShape {
    omega_inv: [[f64; 2]; 2],
    alpha: [f64; 2],
    mode: [f64; 2],
    log_peak: f64,
}

impl SkewNormalShape {
    /// Validates `(delta1, delta2, omega)`: `|delta_i| < 1`, `|omega| < 1`.
    pub fn new(delta1: f64, delta2: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("delta1", delta1), ("delta2", delta2), ("omega", omega)] {
            if !(v.abs() < 1.0) {
                return Err(Error::Parameter(format!("skew parameter {name} = {v} outside (-1, 1)")));
            }
        }
        let s1 = (1.0 - delta1 * delta1).sqrt();
        let s2 = (1.0 - delta2 * delta2).sqrt();
        let rho = delta1 * delta2 + omega * s1 * s2;
        let det = 1.0 - rho * rho;
        if !(det > 0.0) {
            return Err(Error::Parameter("skew-normal correlation matrix is singular".into()));
        }
        let omega_inv = [[1.0 / det, -rho / det], [-rho / det, 1.0 / det]];
        let d = [delta1, delta2];
        let w = mat_vec(&omega_inv, &d);
        let q = d[0] * w[0] + d[1] * w[1];
        if !(q < 1.0) {
            return Err(Error::Parameter("skew parameters are inadmissible".into()));
        }
        let scale = 1.0 / (1.0 - q).sqrt();
        let alpha = [w[0] * scale, w[1] * scale];

        // Stationarity: z = Omega alpha g(t), t = alpha^T z, g = phi/Phi.
        let omega_alpha = [alpha[0] + rho * alpha[1], rho * alpha[0] + alpha[1]];
        let a = alpha[0] * omega_alpha[0] + alpha[1] * omega_alpha[1];
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let g = |t: f64| std.pdf(t) / std.cdf(t);
        let t = if a <= 0.0 {
            0.0
        } else {
            // t - a g(t) is increasing with a root in [0, a g(0)].
            let (mut lo, mut hi) = (0.0, a * g(0.0));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid - a * g(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let gt = if a <= 0.0 { 0.0 } else { g(t) };
        let mode = [omega_alpha[0] * gt, omega_alpha[1] * gt];
        let mut shape = Self {
            omega_inv,
            alpha,
            mode,
            log_peak: 0.0,
        };
        shape.log_peak = shape.log_density(mode);
        Ok(shape)
    }

    /// Log density up to the constant `log(2 / (2 pi sqrt(det)))`.
    fn log_density(&self, z: [f64; 2]) -> f64 {
        let w = mat_vec(&self.omega_inv, &z);
        let quad = z[0] * w[0] + z[1] * w[1];
        let t = self.alpha[0] * z[0] + self.alpha[1] * z[1];
        -0.5 * quad + log_std_normal_cdf(t)
    }

    pub fn mode(&self) -> [f64; 2] {
        self.mode
    }

    /// Density relative to its peak, evaluated at offset `u` from the mode.
    pub fn relative(&self, u: [f64; 2]) -> f64 {
        (self.log_density([u[0] + self.mode[0], u[1] + self.mode[1]]) - self.log_peak).exp()
    }
}

fn mat_vec(m: &[[f64; 2]; 2], v: &[f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn log_std_normal_cdf(t: f64) -> f64 {
    if t > -30.0 {
        Normal::new(0.0, 1.0).expect("unit normal").cdf(t).ln()
    } else {
        // Mills-ratio asymptotics for the far tail.
        -0.5 * t * t - (-t).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Energy layer of a single source on the grid.
pub fn source_layer(source: &SourceSpec, cfg: &FieldConfig) -> Result<DenseMatrix> {
    let (sx, sy) = source.position;
    if !(source.power > 0.0) {
        return Err(Error::Parameter("source power must be positive".into()));
    }
    match source.kind {
        SourceKind::Isotropic => {
            let af = attenuation_db(cfg.freq_khz);
            Ok(DenseMatrix::from_fn(cfg.n, cfg.n, |i, j| {
                let (x, y) = cfg.cell_center(i, j);
                let d = ((x - sx).powi(2) + (y - sy).powi(2)).sqrt();
                isotropic_value(d, source.power, cfg.path_exponent, af)
            }))
        }
        SourceKind::Skew { delta1, delta2, omega } => {
            let shape = SkewNormalShape::new(delta1, delta2, omega)?;
            let s = cfg.skew_scale_km;
            Ok(DenseMatrix::from_fn(cfg.n, cfg.n, |i, j| {
                let (x, y) = cfg.cell_center(i, j);
                source.power * shape.relative([(x - sx) / s, (y - sy) / s])
            }))
        }
    }
}

fn check_inside(sources: &[SourceSpec], cfg: &FieldConfig) -> Result<()> {
    for s in sources {
        let (x, y) = s.position;
        if !(0.0..=cfg.diameter_km).contains(&x) || !(0.0..=cfg.diameter_km).contains(&y) {
            return Err(Error::Parameter(format!("source at ({x}, {y}) lies outside the field")));
        }
    }
    Ok(())
}

fn superpose(sources: &[SourceSpec], cfg: &FieldConfig) -> Result<SourceField> {
    cfg.validate()?;
    check_inside(sources, cfg)?;
    let mut truth = DenseMatrix::zeros(cfg.n, cfg.n);
    for s in sources {
        truth = truth.add(&source_layer(s, cfg)?)?;
    }
    Ok(SourceField {
        truth,
        sources: sources.to_vec(),
    })
}

/// Sum of range-dependent layers `p / (d^alpha 10^(-af d / 10) + 1)`.
pub fn isotropic_field(sources: &[SourceSpec], cfg: &FieldConfig) -> Result<SourceField> {
    if let Some(s) = sources.iter().find(|s| s.kind != SourceKind::Isotropic) {
        return Err(Error::Parameter(format!("non-isotropic source at {:?}", s.position)));
    }
    superpose(sources, cfg)
}

/// Sum of skew-normal bumps, each scaled to peak value `p` at its source.
pub fn skew_field(sources: &[SourceSpec], cfg: &FieldConfig) -> Result<SourceField> {
    if let Some(s) = sources.iter().find(|s| s.kind == SourceKind::Isotropic) {
        return Err(Error::Parameter(format!("isotropic source at {:?} in skew field", s.position)));
    }
    superpose(sources, cfg)
}

/// Dispatches on the source kinds (which must agree).
pub fn generate_field(sources: &[SourceSpec], cfg: &FieldConfig) -> Result<SourceField> {
    match sources.first().map(|s| s.kind) {
        Some(SourceKind::Skew { .. }) => skew_field(sources, cfg),
        _ => isotropic_field(sources, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Sensors uniform in the square, quantized to cells; first reading per cell kept.
    #[default]
    Uniform,
    /// One sensor per cell, row by row, until `sensor_count` cells are covered.
    Grid,
}

/// Drops sensors on the field and records noisy readings on the occupied cells.
pub fn sample_observations(
    field: &SourceField,
    cfg: &FieldConfig,
    sensor_count: usize,
    noise_sd: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<ObservationSet> {
    if sensor_count == 0 {
        return Err(Error::Parameter("sensor_count must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Parameter("noise_sd must be nonnegative".into()));
    }
    let n = cfg.n;
    if field.truth.shape() != (n, n) {
        return Err(Error::Dimension("field does not match configured grid".into()));
    }
    let mut rng = rng_from_seed(seed);
    let cells: Vec<(usize, usize)> = match mode {
        SamplingMode::Grid => (0..sensor_count.min(n * n)).map(|k| (k / n, k % n)).collect(),
        SamplingMode::Uniform => {
            let mut seen = HashSet::with_capacity(sensor_count);
            let mut cells = Vec::with_capacity(sensor_count);
            for _ in 0..sensor_count {
                let x = rng.gen::<f64>() * cfg.diameter_km;
                let y = rng.gen::<f64>() * cfg.diameter_km;
                let cell = cfg.cell_of(x, y);
                if seen.insert(cell) {
                    cells.push(cell);
                }
            }
            cells
        }
    };
    let samples = cells
        .into_iter()
        .map(|(row, col)| {
            let eps: f64 = rng.sample(StandardNormal);
            Sample {
                row,
                col,
                value: field.truth.get(row, col) + noise_sd * eps,
            }
        })
        .collect();
    ObservationSet::new(n, n, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    #[default]
    Random,
    /// All sources on one grid row (constant `x`).
    Colinear,
    /// Pairs symmetric under the point reflection through the field center.
    Mirrored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Placement {
    pub mode: PlacementMode,
    pub min_separation_km: f64,
    /// Keep sources at least this far from the field edge.
    pub margin_km: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            mode: PlacementMode::Random,
            min_separation_km: 3.0,
            margin_km: 1.5,
        }
    }
}

const PLACEMENT_RETRIES: usize = 10_000;

/// Source positions for a scenario.
pub fn place_sources(k: usize, placement: &Placement, extent_km: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    if k == 0 {
        return Err(Error::Parameter("need at least one source".into()));
    }
    let lo = placement.margin_km;
    let hi = extent_km - placement.margin_km;
    if !(hi > lo) {
        return Err(Error::Placement(format!("margin {lo} leaves no room in a {extent_km} km field")));
    }
    let mut rng = rng_from_seed(seed);
    let uniform = |rng: &mut Rng| lo + rng.gen::<f64>() * (hi - lo);
    let sep = placement.min_separation_km;
    let far_enough = |pts: &[(f64, f64)], p: (f64, f64)| {
        pts.iter().all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= sep)
    };

    match placement.mode {
        PlacementMode::Random => {
            let mut pts = Vec::with_capacity(k);
            let mut tries = 0;
            while pts.len() < k {
                tries += 1;
                if tries > PLACEMENT_RETRIES {
                    return Err(Error::Placement(format!(
                        "could not place {k} sources {sep} km apart after {PLACEMENT_RETRIES} tries"
                    )));
                }
                let p = (uniform(&mut rng), uniform(&mut rng));
                if far_enough(&pts, p) {
                    pts.push(p);
                }
            }
            Ok(pts)
        }
        PlacementMode::Colinear => {
            let span = sep * (k as f64 - 1.0);
            if span > hi - lo {
                return Err(Error::Placement(format!(
                    "{k} colinear sources {sep} km apart do not fit between {lo} and {hi}"
                )));
            }
            let x = uniform(&mut rng);
            let spacing = if k > 1 {
                sep + rng.gen::<f64>() * ((hi - lo - span) / (k as f64 - 1.0))
            } else {
                0.0
            };
            let start = lo + rng.gen::<f64>() * (hi - lo - spacing * (k as f64 - 1.0));
            Ok((0..k).map(|m| (x, start + spacing * m as f64)).collect())
        }
        PlacementMode::Mirrored => {
            let mut pts: Vec<(f64, f64)> = Vec::with_capacity(k);
            if k % 2 == 1 {
                pts.push((extent_km / 2.0, extent_km / 2.0));
            }
            let mut tries = 0;
            while pts.len() < k {
                tries += 1;
                if tries > PLACEMENT_RETRIES {
                    return Err(Error::Placement(format!("could not place {k} mirrored sources")));
                }
                let p = (uniform(&mut rng), uniform(&mut rng));
                let q = (extent_km - p.0, extent_km - p.1);
                let own = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                if own >= sep && far_enough(&pts, p) && far_enough(&pts, q) {
                    pts.push(p);
                    pts.push(q);
                }
            }
            Ok(pts)
        }
    }
}

/// Skew triple drawn uniformly from `[-range, range]^3`.
pub fn random_skew_params(range: f64, rng: &mut Rng) -> (f64, f64, f64) {
    let mut draw = || (2.0 * rng.gen::<f64>() - 1.0) * range;
    (draw(), draw(), draw())
}
