pub use crate::synth::{random_matrix, random_orthonormal};
