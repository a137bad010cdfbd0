//! Small, exactly checkable versions of the estimators behind contrastive
//! training: discrete information measures, noise-contrastive estimation of
//! an unnormalized Gaussian, and the InfoNCE lower bound on mutual
//! information.

mod bound;
mod fit;
mod info;

pub use bound::{
    bound_csv, infonce_bound_experiment, random_channel, run_channel, BoundReport, BoundSettings,
};
pub use fit::{nce_fit, NceFit, NceProblem};
pub use info::{conditional_entropy, entropy, mutual_information, mutual_information_sum, DiscreteJoint};
