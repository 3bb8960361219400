//! Matrix completion on an observation set.
//!
//! * [`complete_fixed_rank`] solves `min_{rank(Y)=r} sum_Omega (M - Y)^2`.
//!   Two monotone updates are available. Hard-impute fills the unobserved
//!   cells from the current estimate and projects back to rank `r` (one step
//!   of subspace iteration seeded by the previous row space). Alternating
//!   least squares solves exactly for the row factor given the column space
//!   and then for the column factor; it is the default because hard-impute
//!   stalls far from the optimum when the sampling is sparse and the spectrum
//!   decays slowly.
//! * [`complete_nuclear_norm`] is soft-impute: fill, then soft-threshold the
//!   singular values at `reg`.

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix, ObservationSet};

/// Relative objective increase treated as divergence.
const DIVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum Init {
    ZeroFill,
    WarmStart(DenseMatrix),
}

/// Update used by the fixed-rank solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedRankMethod {
    /// Fill the unobserved cells, project to rank `r`.
    HardImpute,
    /// Exact least squares for the row factor, then the column factor.
    #[default]
    AlternatingLeastSquares,
}

#[derive(Debug, Clone)]
pub struct CompletionConfig {
    pub max_iters: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    pub init: Init,
    /// Ignored by the nuclear-norm solver.
    pub method: FixedRankMethod,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            init: Init::ZeroFill,
            method: FixedRankMethod::default(),
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter("tol must be positive".into()));
        }
        Ok(())
    }

    pub fn with_init(&self, init: Init) -> Self {
        Self {
            init,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub estimate: DenseMatrix,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    row_basis: Option<DMatrix<f64>>,
}

impl CompletionResult {
    /// Initialization for a follow-up solve on a nested observation set.
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            estimate: self.estimate.clone(),
            row_basis: self.row_basis.clone(),
        }
    }
}

/// Previous solution plus its row space, for cheap chained solves.
#[derive(Debug, Clone)]
pub struct WarmStart {
    estimate: DenseMatrix,
    row_basis: Option<DMatrix<f64>>,
}

impl WarmStart {
    pub fn estimate(&self) -> &DenseMatrix {
        &self.estimate
    }
}

/// Sum of squared residuals on the observed cells only.
pub fn sse(obs: &ObservationSet, y: &DenseMatrix) -> Result<f64> {
    if (obs.rows(), obs.cols()) != y.shape() {
        return Err(Error::Dimension(format!(
            "observations are {}x{} but estimate is {:?}",
            obs.rows(),
            obs.cols(),
            y.shape()
        )));
    }
    Ok(residual_ss(obs, y.as_nalgebra()))
}

fn residual_ss(obs: &ObservationSet, y: &DMatrix<f64>) -> f64 {
    obs.iter()
        .map(|s| {
            let d = s.value - y[(s.row, s.col)];
            d * d
        })
        .sum()
}

fn fill(obs: &ObservationSet, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = y.clone();
    for s in obs.iter() {
        x[(s.row, s.col)] = s.value;
    }
    x
}

fn check_common(obs: &ObservationSet, cfg: &CompletionConfig) -> Result<()> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::Input("empty observation set".into()));
    }
    if let Init::WarmStart(w) = &cfg.init {
        if w.shape() != (obs.rows(), obs.cols()) {
            return Err(Error::Dimension("warm start has wrong shape".into()));
        }
    }
    Ok(())
}

/// Degrees of freedom of a rank-`r` `rows x cols` matrix.
pub fn rank_dof(rows: usize, cols: usize, r: usize) -> usize {
    r * (rows + cols).saturating_sub(r)
}

/// Rank-`r` least-squares completion.
pub fn complete_fixed_rank(
    obs: &ObservationSet,
    r: usize,
    cfg: &CompletionConfig,
) -> Result<CompletionResult> {
    let warm = match &cfg.init {
        Init::ZeroFill => None,
        Init::WarmStart(m) => Some(WarmStart {
            estimate: m.clone(),
            row_basis: None,
        }),
    };
    complete_fixed_rank_warm(obs, r, cfg, warm.as_ref())
}

/// As [`complete_fixed_rank`], but starting from a previous solution; `cfg.init`
/// is ignored when `warm` is given.
pub fn complete_fixed_rank_warm(
    obs: &ObservationSet,
    r: usize,
    cfg: &CompletionConfig,
    warm: Option<&WarmStart>,
) -> Result<CompletionResult> {
    check_common(obs, cfg)?;
    let (rows, cols) = (obs.rows(), obs.cols());
    let full = rows.min(cols);
    if r == 0 || r > full {
        return Err(Error::Dimension(format!("rank {r} outside 1..={full}")));
    }
    if obs.len() < rank_dof(rows, cols, r) {
        warn!(
            "{} observations is below the {} degrees of freedom of a rank-{r} {rows}x{cols} matrix",
            obs.len(),
            rank_dof(rows, cols, r)
        );
    }
    if let Some(w) = warm {
        if w.estimate.shape() != (rows, cols) {
            return Err(Error::Dimension("warm start has wrong shape".into()));
        }
    }

    if r == full {
        // Any matrix is representable; zero-filling already interpolates exactly.
        let estimate = match warm {
            Some(w) => fill(obs, w.estimate.as_nalgebra()),
            None => obs.zero_filled().into_nalgebra(),
        };
        return Ok(CompletionResult {
            estimate: DenseMatrix::from_nalgebra(estimate),
            sse: 0.0,
            iterations: 0,
            converged: true,
            objective_trace: vec![0.0],
            row_basis: None,
        });
    }

    let scale = obs.sum_of_squares();
    let floor = scale * 1e-28;

    // Starting point and row space.
    let (mut y, mut basis) = match warm {
        Some(w) => {
            let basis = match &w.row_basis {
                Some(b) if b.ncols() == r => b.clone(),
                _ => leading_right_basis(&fill(obs, w.estimate.as_nalgebra()), r)?,
            };
            (w.estimate.as_nalgebra().clone(), basis)
        }
        None => {
            let x0 = obs.zero_filled();
            let d = matrix::svd(&x0)?;
            let y0 = matrix::truncate_rank(&d, r)?.into_nalgebra();
            (y0, d.right.columns(0, r).clone_owned())
        }
    };

    let mut f = residual_ss(obs, &y);
    let mut trace = vec![f];
    let mut converged = f <= floor;
    let mut iterations = 0;

    let index = match cfg.method {
        FixedRankMethod::AlternatingLeastSquares => Some(SampleIndex::new(obs)),
        FixedRankMethod::HardImpute => None,
    };
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let (y_new, basis_new) = match &index {
            None => {
                let x = fill(obs, &y);
                let q = (&x * &basis).qr().q();
                let b = q.transpose() * &x;
                (&q * &b, b.transpose().qr().q())
            }
            Some(idx) => als_sweep(idx, &basis),
        };
        let f_new = residual_ss(obs, &y_new);
        if index.is_some() && f_new > f {
            // Exact least-squares updates cannot increase the objective; this
            // is round-off in an ill-conditioned solve. Keep the last iterate.
            debug!("ALS sweep raised the objective from {f:e} to {f_new:e}; stopping");
            break;
        }
        if f_new > f * (1.0 + DIVERGENCE_TOL) + floor {
            return Err(Error::NumericalFailure(format!(
                "hard-impute objective increased from {f:e} to {f_new:e} at iteration {iterations}"
            )));
        }
        basis = basis_new;
        let change = (f - f_new).abs() / f.max(f64::MIN_POSITIVE);
        y = y_new;
        f = f_new;
        trace.push(f);
        if change < cfg.tol || f <= floor {
            converged = true;
        }
    }
    if !converged {
        debug!("fixed-rank solver stopped at max_iters={} (sse {f:e})", cfg.max_iters);
    }
    Ok(CompletionResult {
        estimate: DenseMatrix::from_nalgebra(y),
        sse: f,
        iterations,
        converged,
        objective_trace: trace,
        row_basis: Some(basis),
    })
}

/// Observed entries grouped by row and by column.
struct SampleIndex {
    by_row: Vec<Vec<(usize, f64)>>,
    by_col: Vec<Vec<(usize, f64)>>,
}

impl SampleIndex {
    fn new(obs: &ObservationSet) -> Self {
        let mut by_row = vec![Vec::new(); obs.rows()];
        let mut by_col = vec![Vec::new(); obs.cols()];
        for s in obs.iter() {
            by_row[s.row].push((s.col, s.value));
            by_col[s.col].push((s.row, s.value));
        }
        Self { by_row, by_col }
    }
}

/// Least-squares factor: row `i` of the result minimizes
/// `sum_{(k, m) in groups[i]} (m - x . basis[k])^2`. Underdetermined groups
/// get the minimum-norm solution.
fn ls_factor(groups: &[Vec<(usize, f64)>], basis: &DMatrix<f64>) -> DMatrix<f64> {
    let r = basis.ncols();
    let mut out = DMatrix::zeros(groups.len(), r);
    let mut gram = DMatrix::zeros(r, r);
    let mut rhs = nalgebra::DVector::zeros(r);
    for (i, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        gram.fill(0.0);
        rhs.fill(0.0);
        for &(k, m) in group {
            for a in 0..r {
                let va = basis[(k, a)];
                rhs[a] += va * m;
                for b in 0..=a {
                    gram[(a, b)] += va * basis[(k, b)];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
        }
        let x = solve_gram(&gram, &rhs, group.len() >= r);
        out.row_mut(i).copy_from(&x.transpose());
    }
    out
}

/// Solves `gram x = rhs`. Cholesky when well conditioned, otherwise an
/// eigenvalue pseudo-inverse (minimum-norm least squares).
fn solve_gram(gram: &DMatrix<f64>, rhs: &nalgebra::DVector<f64>, try_cholesky: bool) -> nalgebra::DVector<f64> {
    const MAX_COND: f64 = 1e8;
    if try_cholesky {
        if let Some(ch) = gram.clone().cholesky() {
            let d = ch.l_dirty().diagonal();
            let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            if lo > 0.0 && (hi / lo).powi(2) < MAX_COND {
                return ch.solve(rhs);
            }
        }
    }
    let eig = gram.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let mut x = nalgebra::DVector::zeros(rhs.len());
    if !(top > 0.0) {
        return x;
    }
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > top / MAX_COND {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(rhs) / lambda);
        }
    }
    x
}

/// One alternating sweep from column basis `v`: solve for the row factor,
/// orthonormalize it, solve for the column factor. Returns the estimate and
/// the new orthonormal column basis.
fn als_sweep(idx: &SampleIndex, v: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = ls_factor(&idx.by_row, v);
    let qu = u.qr().q();
    let w = ls_factor(&idx.by_col, &qu);
    let y = &qu * w.transpose();
    let basis = w.qr().q();
    (y, basis)
}

fn leading_right_basis(x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let d = matrix::svd(&DenseMatrix::from_nalgebra(x.clone()))?;
    Ok(d.right.columns(0, r).clone_owned())
}

#[derive(Debug, Clone)]
pub struct NuclearNormResult {
    pub estimate: DenseMatrix,
    /// Singular values of `estimate`, nonincreasing (after thresholding).
    pub spectrum: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `0.5 * sse + reg * nuclear_norm` per iteration, starting point first.
    pub objective_trace: Vec<f64>,
}

/// Nuclear-norm regularized completion (soft-impute).
pub fn complete_nuclear_norm(
    obs: &ObservationSet,
    reg: f64,
    cfg: &CompletionConfig,
) -> Result<DenseMatrix> {
    complete_nuclear_norm_traced(obs, reg, cfg).map(|r| r.estimate)
}

pub fn complete_nuclear_norm_traced(
    obs: &ObservationSet,
    reg: f64,
    cfg: &CompletionConfig,
) -> Result<NuclearNormResult> {
    check_common(obs, cfg)?;
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(Error::Parameter(format!("reg must be finite and nonnegative, got {reg}")));
    }
    let (rows, cols) = (obs.rows(), obs.cols());
    let mut y = match &cfg.init {
        Init::ZeroFill => DMatrix::zeros(rows, cols),
        Init::WarmStart(m) => m.as_nalgebra().clone(),
    };
    let mut spectrum = matrix::singular_values(&DenseMatrix::from_nalgebra(y.clone()))?;
    let objective = |y: &DMatrix<f64>, s: &[f64]| 0.5 * residual_ss(obs, y) + reg * s.iter().sum::<f64>();
    let mut f = objective(&y, &spectrum);
    let mut trace = vec![f];
    let floor = obs.sum_of_squares() * 1e-28;
    let mut converged = false;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let x = DenseMatrix::from_nalgebra(fill(obs, &y));
        let d = matrix::svd(&x)?;
        let shrunk: Vec<f64> = d.singular_values.iter().map(|s| (s - reg).max(0.0)).collect();
        let keep = shrunk.iter().take_while(|&&s| s > 0.0).count();
        let y_new = if keep == 0 {
            DMatrix::zeros(rows, cols)
        } else {
            let mut us = d.left.columns(0, keep).clone_owned();
            for (k, mut col) in us.column_iter_mut().enumerate() {
                col *= shrunk[k];
            }
            us * d.right.columns(0, keep).transpose()
        };
        let f_new = objective(&y_new, &shrunk);
        if f_new > f * (1.0 + DIVERGENCE_TOL) + floor {
            return Err(Error::NumericalFailure(format!(
                "soft-impute objective increased from {f:e} to {f_new:e} at iteration {iterations}"
            )));
        }
        let change = (f - f_new).abs() / f.max(f64::MIN_POSITIVE);
        y = y_new;
        spectrum = shrunk;
        f = f_new;
        trace.push(f);
        if change < cfg.tol || f <= floor {
            converged = true;
        }
    }
    Ok(NuclearNormResult {
        estimate: DenseMatrix::from_nalgebra(y),
        spectrum,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Default soft-impute penalty: the leading singular value of the zero-filled
/// observations divided by 50.
pub fn default_nuclear_reg(obs: &ObservationSet) -> Result<f64> {
    let s = matrix::singular_values(&obs.zero_filled())?;
    Ok(s.first().copied().unwrap_or(0.0) / 50.0)
}
