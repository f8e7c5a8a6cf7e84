//! Metamorphic relation prediction from control-flow graphs.
//!
//! The pipeline reads CFGs in a small DOT subset ([`cfg`]), turns each graph
//! into a bag of node and shortest-path features ([`featurize`]), and trains
//! one binary classifier per metamorphic relation. Two classifiers are
//! provided: a linear SVM trained by dual coordinate descent ([`svm`]) and
//! semi-supervised label propagation over a kNN or RBF affinity graph
//! ([`labelprop`]). The [`eval`] module runs the repeated stratified
//! comparison with nested parameter selection and a paired t-test.

pub mod cfg;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod labelprop;
pub mod model_io;
pub mod numerics;
pub mod svm;

pub use error::{Error, Result};

/// Binary class label; only `0` and `1` are valid.
pub type Label = u8;

pub(crate) fn check_labels(labels: &[Label]) -> Result<()> {
    match labels.iter().position(|&l| l > 1) {
        Some(row) => Err(Error::InvalidLabel {
            row,
            value: labels[row].to_string(),
        }),
        None => Ok(()),
    }
}
