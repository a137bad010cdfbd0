//! Speaker-verification workbench: contrastive predictive coding features,
//! a classical GMM/i-vector/PLDA backend, evaluation metrics, and numerical
//! checks of the underlying estimators.

pub mod audio;
pub mod backend;
pub mod container;
pub mod cpc;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod linalg;
pub mod nce;
pub mod par;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
