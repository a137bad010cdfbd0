//! Classical generative backend: diagonal-covariance GMM/UBM, MAP mean
//! adaptation, likelihood-ratio scoring, Baum-Welch statistics, and the
//! total-variability (i-vector) model.

mod diag;
mod stats;
mod tv;

pub use diag::{
    gmm_em_train, likelihood_ratio, map_adapt_means, map_adapt_stats, variance_floor, DiagGmm,
    GmmTrace,
};
pub use stats::{accumulate_stats, SuffStats};
pub use tv::{tmatrix_em_train, Posterior, TvModel, TvTrace};
