//! Curve fitting and inferential statistics.

pub mod fit;
pub mod inference;

pub use fit::{bootstrap_fit_ci, fit_logistic, fit_power, fit_stretched, floor_zero_bins, FitModel, FitResult};
pub use inference::{
    bootstrap_ci, cohens_d, mean, median, paired_t, std_dev, welch_t, wilcoxon_one_sided, Interval, Sided, TTest,
};
