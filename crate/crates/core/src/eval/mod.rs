//! Tracking over frame sequences and the evaluation protocol: distance
//! errors, χ²-standardized cumulative errors with a confidence curve, and
//! the relabeling consistency test.

mod chi2;
mod report;
mod track;

pub use chi2::{chi2_cdf, chi2_inv_cdf, ci_curve, ln_gamma, regularized_gamma_p, INV_TOLERANCE};
pub use report::{
    divergence_detect, error_report, first_exceedance, labeling_chi_square, max_possible_distance,
    write_report, ErrorReport, GroundTruth, LabelingSigma, LabelingTest, CI_PROBABILITY,
};
pub use track::{
    read_track_csv, track, track_with_callback, write_track_csv, ReferenceMode, TrackPoint,
    TrackSequence, TrackedFrame,
};
