//! Behavioural paradigms run against simulated stores.

pub mod drm;
pub mod forgetting;
pub mod spacing;
pub mod tot;

pub use drm::{delta_convexity, lure_bound_check, run_drm, ConvexityReport, DrmList, DrmReport, LureBoundCheck};
pub use forgetting::{run_forgetting, Backend, ForgettingConfig, ForgettingReport};
pub use spacing::{run_spacing, SpacingConfig, SpacingReport, SpacingResult};
pub use tot::{run_tot, TotConfig, TotRecord, TotResult};
