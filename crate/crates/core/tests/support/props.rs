//! Randomized invariant checks shared by the property tests and the
//! acceptance suite. Each function runs `cases` proptest cases.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

use rankscope::detectors::{self, VarianceRatioConfig};
use rankscope::eval::{ConfusionMatrix, TrialOutcome};
use rankscope::matrix::{self, DenseMatrix, ObservationSet, Sample};
use rankscope::rng::rng_from_seed;
use rankscope::rotation;
use rankscope::stats;
use rankscope::synth;

pub const MIN_CASES: u32 = 128;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn report<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn dense(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-100.0f64..100.0, r * c)
            .prop_map(move |v| DenseMatrix::from_row_major(r, c, &v).unwrap())
    })
}

pub fn svd_reconstruction(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&dense(12), |m| {
        let d = matrix::svd(&m).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = d.reconstruct();
        let err = back.sub(&m).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * (1.0 + m.frobenius_norm()), "reconstruction error {err}");
        let s = matrix::singular_values(&m).unwrap();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]), "unsorted {s:?}");
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        let fro: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((fro - m.frobenius_norm()).abs() <= 1e-10 * (1.0 + fro));
        Ok(())
    }))
}

pub fn vec_unvec_bijection(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&dense(15), |m| {
        let v = matrix::vec(&m);
        prop_assert_eq!(v.len(), m.rows() * m.cols());
        // Column stacking: entry (i, j) sits at i + j * rows.
        for j in 0..m.cols() {
            for i in 0..m.rows() {
                prop_assert_eq!(v[i + j * m.rows()], m.get(i, j));
            }
        }
        let back = matrix::unvec(&v, m.rows(), m.cols()).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(matrix::vec(&back), v);
        prop_assert!(matrix::unvec(&matrix::vec(&m), m.rows() + 1, m.cols()).is_err());
        Ok(())
    }))
}

fn observations(max_dim: usize) -> impl Strategy<Value = ObservationSet> {
    (2..=max_dim, 2..=max_dim, any::<u64>()).prop_flat_map(|(r, c, seed)| {
        (1..=r * c).prop_map(move |count| {
            let mut rng = rng_from_seed(seed);
            let omega = synth::uniform_mask(r, c, count, &mut rng).unwrap();
            let samples = omega
                .into_iter()
                .map(|(row, col)| Sample {
                    row,
                    col,
                    value: (row * 31 + col * 7) as f64 / 13.0 - 3.0,
                })
                .collect();
            ObservationSet::new(r, c, samples).unwrap()
        })
    })
}

pub fn chain_nesting(cases: u32) -> Result<(), String> {
    let strat = (observations(20), 1usize..6, 1usize..40, any::<u64>());
    report(runner(cases).run(&strat, |(obs, c, steps, seed)| {
        match stats::build_chain(&obs, c, steps, seed) {
            Err(_) => prop_assert!(c * steps >= obs.len()),
            Ok(chain) => {
                prop_assert!(c * steps < obs.len());
                let sets = chain.sets();
                prop_assert_eq!(sets.len(), steps + 1);
                prop_assert_eq!(sets[0].len(), obs.len());
                for l in 1..sets.len() {
                    prop_assert_eq!(sets[l].len(), obs.len() - l * c);
                    prop_assert!(sets[l].iter().all(|p| sets[l - 1].binary_search(p).is_ok()));
                }
                let again = stats::build_chain(&obs, c, steps, seed).unwrap();
                prop_assert_eq!(again, chain);
            }
        }
        Ok(())
    }))
}

/// Planted low-rank problem small enough to run many detector calls.
fn small_problem() -> impl Strategy<Value = ObservationSet> {
    (1usize..=3, any::<u64>()).prop_map(|(rank, seed)| {
        let mut rng = rng_from_seed(seed);
        let spectrum: Vec<f64> = (0..rank).map(|k| 80.0 / (k + 1) as f64).collect();
        synth::planted_problem(14, 14, &spectrum, 150, 0.5, &mut rng).unwrap().1
    })
}

pub fn detector_scale_invariance(cases: u32) -> Result<(), String> {
    // Powers of two scale every floating-point operation exactly. Other
    // factors can shift solver stopping by an iteration, so ratios are
    // compared to 1e-4 and decisions away from the threshold must agree.
    let strat = (small_problem(), -12i32..12, 0.01f64..100.0, any::<u64>());
    report(runner(cases).run(&strat, |(obs, k, s, seed)| {
        let cfg = VarianceRatioConfig {
            r_max: 3,
            c: 2,
            steps: 12,
            seed,
            ..Default::default()
        };
        let base = detectors::variance_ratio_profile(&obs, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pow = detectors::variance_ratio_profile(&obs.scaled(2f64.powi(k)), &cfg).unwrap();
        prop_assert_eq!(&base, &pow);
        let scaled = detectors::variance_ratio_profile(&obs.scaled(s), &cfg).unwrap();
        for (a, b) in base.0.iter().zip(&scaled.0) {
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-4 * a.abs(), "ratio {a} vs {b} at scale {s}"),
                (None, None) => {}
                other => prop_assert!(false, "degeneracy differs: {other:?}"),
            }
        }
        let b = 1.2;
        let near = base.0.iter().flatten().any(|v| (v - b).abs() < 1e-3);
        if !near {
            prop_assert_eq!(
                detectors::first_ratio_below(&base.0, b),
                detectors::first_ratio_below(&scaled.0, b)
            );
        }

        let f0 = detectors::baseline_fractions(&obs).unwrap();
        let f1 = detectors::baseline_fractions(&obs.scaled(s)).unwrap();
        for (a, b) in f0.iter().zip(&f1) {
            prop_assert!((a - b).abs() <= 1e-12, "fraction {a} vs {b}");
        }
        let d0 = detectors::detect_baseline(&obs, 0.8).unwrap();
        let d1 = detectors::detect_baseline(&obs.scaled(2f64.powi(k)), 0.8).unwrap();
        prop_assert_eq!(d0.r_hat, d1.r_hat);
        Ok(())
    }))
}

fn outcome() -> impl Strategy<Value = TrialOutcome> {
    prop_oneof![
        (0usize..7).prop_map(TrialOutcome::Estimate),
        Just(TrialOutcome::Inconclusive),
        Just(TrialOutcome::Failed),
    ]
}

pub fn confusion_conservation(cases: u32) -> Result<(), String> {
    let strat = prop::collection::vec((1usize..=4, outcome()), 0..300);
    report(runner(cases).run(&strat, |trials| {
        let true_counts = [1, 2, 3, 4];
        let mut cm = ConfusionMatrix::new(&true_counts, &[1, 2, 3, 4]);
        for (k, o) in &trials {
            cm.record(*k, o).unwrap();
        }
        prop_assert!(cm.is_conserved());
        for (row, k) in true_counts.iter().enumerate() {
            let expected = trials.iter().filter(|(t, _)| t == k).count() as u64;
            prop_assert_eq!(cm.trials_for(*k), expected);
            // Failures are a subset of the inconclusive column.
            let row_sum: u64 = cm.counts[row].iter().sum::<u64>() + cm.inconclusive[row];
            prop_assert_eq!(row_sum, expected);
            prop_assert!(cm.failures[row] <= cm.inconclusive[row]);
        }
        let total: u64 = (1..=4).map(|c| cm.column_total(c)).sum();
        let estimates = trials
            .iter()
            .filter(|(_, o)| matches!(o, TrialOutcome::Estimate(e) if (1..=4).contains(e)))
            .count() as u64;
        prop_assert_eq!(total, estimates);
        Ok(())
    }))
}

/// Independent quarter turn: counter-clockwise with rows increasing downward,
/// so `B[i][j] = A[j][n-1-i]`.
fn rot90(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    DenseMatrix::from_fn(n, n, |i, j| m.get(j, n - 1 - i))
}

pub fn permutation_angles(cases: u32) -> Result<(), String> {
    let strat = (2usize..25, 0i32..8, any::<u64>());
    report(runner(cases).run(&strat, |(n, k, seed)| {
        let theta = k as f64 * std::f64::consts::FRAC_PI_2;
        let rot = rotation::rotation_map(n, theta).unwrap();
        prop_assert!(rot.is_permutation());
        prop_assert_eq!(rot.coverage(), 1.0);
        let mut rng = rng_from_seed(seed);
        let m = synth::random_matrix(n, n, &mut rng);
        let mut expected = m.clone();
        for _ in 0..k.rem_euclid(4) {
            expected = rot90(&expected);
        }
        prop_assert_eq!(rot.apply_dense(&m).unwrap(), expected);
        let mut targets: Vec<usize> = rot.linear_map().iter().map(|t| t.unwrap()).collect();
        targets.sort_unstable();
        prop_assert!(targets.iter().enumerate().all(|(i, t)| i == *t));
        Ok(())
    }))
}

pub fn all(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("svd reconstruction", svd_reconstruction(cases)),
        ("vec/unvec bijection", vec_unvec_bijection(cases)),
        ("chain nesting", chain_nesting(cases)),
        ("detector scale invariance", detector_scale_invariance(cases)),
        ("confusion row conservation", confusion_conservation(cases)),
        ("permutation angles", permutation_angles(cases)),
    ]
}
