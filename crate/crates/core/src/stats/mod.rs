//! Paired tests of d_self against d_ref, and regressions of persistence on
//! demographics and personality.

pub mod design;
mod mixed;
mod ols;
mod paired;

pub use design::{build_design, AgeEncoding, Design, PredictorSpec};
pub use mixed::{mixed_model, MixedModelResult};
pub use ols::{ols, Coefficient, RegressionResult};
pub use paired::{paired_test, Degeneracy, PairedTestResult};
