//! Linear hyperspectral unmixing with a soft low-rank tensor prior on the
//! abundance maps.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] dense order-3 tensors, matrices and the multilinear products.
//! * [`cpd`] rank-K canonical polyadic decomposition by alternating least squares.
//! * [`unmixing`] simplex-constrained least squares (FCLS), its regularized
//!   variant and the alternating A-step / Q-step driver.
//! * [`datagen`] seeded synthetic scenes with known ground truth.
//! * [`metrics`] SRE, reconstruction RMSE and the paired Wilcoxon signed-rank test.
//! * [`tuning`] grid search over the regularization weight and prior rank.

pub mod cpd;
pub mod datagen;
mod error;
pub mod metrics;
pub mod tensor;
pub mod tuning;
pub mod unmixing;

pub use cpd::{cpd_als, khatri_rao, reconstruct, CpdFactors, CpdInit, CpdOptions};
pub use datagen::{GroundTruth, Pattern, SceneSpec};
pub use error::{Error, Result};
pub use metrics::{MetricReport, WilcoxonResult};
pub use tensor::{Matrix, Tensor3};
pub use unmixing::{
    AbundanceTensor, EndmemberMatrix, RunReport, Termination, UltraConfig,
};
