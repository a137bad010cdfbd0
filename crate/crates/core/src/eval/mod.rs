//! Verification trials and detection metrics.

mod metrics;
mod trials;

pub use metrics::{
    compute_dcf, compute_det, compute_eer, det_csv, probit, sweep, DcfParams, DetPoint, OperatingPoint,
    ScoreSet,
};
pub use trials::{
    generate_trials, parse_trials, parse_utt_id, read_scores, write_scores, write_trials, Protocol, Trial,
    TrialList, UttLabel,
};

#[cfg(test)]
mod tests;
