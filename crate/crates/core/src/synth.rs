//! Synthetic low-rank test problems: planted spectra, random masks, noise.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet, Sample};
use crate::rng::Rng;

/// `rows x k` matrix with orthonormal columns (Gram-Schmidt of Gaussian draws).
pub fn random_orthonormal(rows: usize, k: usize, rng: &mut Rng) -> DenseMatrix {
    assert!(k <= rows, "cannot fit {k} orthonormal columns in dimension {rows}");
    let g = nalgebra::DMatrix::from_fn(rows, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    DenseMatrix::from_nalgebra(q.columns(0, k).clone_owned())
}

/// `U diag(spectrum) V^T` with Haar-like random orthonormal factors.
pub fn planted_low_rank(rows: usize, cols: usize, spectrum: &[f64], rng: &mut Rng) -> DenseMatrix {
    let r = spectrum.len();
    let u = random_orthonormal(rows, r, rng);
    let v = random_orthonormal(cols, r, rng);
    let mut us = u.into_nalgebra();
    for (k, mut col) in us.column_iter_mut().enumerate() {
        col *= spectrum[k];
    }
    DenseMatrix::from_nalgebra(us * v.as_nalgebra().transpose())
}

/// Uniformly random index set of exactly `count` cells.
pub fn uniform_mask(rows: usize, cols: usize, count: usize, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    if count > rows * cols {
        return Err(Error::Parameter(format!(
            "cannot observe {count} of {} cells",
            rows * cols
        )));
    }
    let mut picked = index::sample(rng, rows * cols, count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| (k % rows, k / rows)).collect())
}

/// Observes `truth` on `omega` with i.i.d. `N(0, noise_sd^2)` errors.
pub fn noisy_observe(
    truth: &DenseMatrix,
    omega: &[(usize, usize)],
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<ObservationSet> {
    let samples = omega
        .iter()
        .map(|&(row, col)| {
            let eps: f64 = rng.sample(StandardNormal);
            Sample {
                row,
                col,
                value: truth.get(row, col) + noise_sd * eps,
            }
        })
        .collect();
    ObservationSet::new(truth.rows(), truth.cols(), samples)
}

/// Planted rank-`spectrum.len()` matrix observed on `count` uniform cells with noise.
pub fn planted_problem(
    rows: usize,
    cols: usize,
    spectrum: &[f64],
    count: usize,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<(DenseMatrix, ObservationSet)> {
    let truth = planted_low_rank(rows, cols, spectrum, rng);
    let omega = uniform_mask(rows, cols, count, rng)?;
    let obs = noisy_observe(&truth, &omega, noise_sd, rng)?;
    Ok((truth, obs))
}

/// Gaussian matrix with i.i.d. standard normal entries.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
