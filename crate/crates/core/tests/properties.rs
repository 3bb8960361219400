mod support;

use support::props::{self, MIN_CASES};

#[test]
fn svd_reconstruction() {
    props::svd_reconstruction(MIN_CASES).unwrap();
}

#[test]
fn vec_unvec_bijection() {
    props::vec_unvec_bijection(MIN_CASES).unwrap();
}

#[test]
fn chain_nesting() {
    props::chain_nesting(MIN_CASES).unwrap();
}

#[test]
fn detector_scale_invariance() {
    props::detector_scale_invariance(MIN_CASES).unwrap();
}

#[test]
fn confusion_conservation() {
    props::confusion_conservation(MIN_CASES).unwrap();
}

#[test]
fn permutation_angles() {
    props::permutation_angles(MIN_CASES).unwrap();
}
