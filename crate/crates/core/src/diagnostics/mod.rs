//! Sample-quality and numerical-stability diagnostics.

mod ess;
mod ksd;
mod stability;
mod variance;

pub use ess::ess_batch_means;
pub use ksd::{imq_stein_kernel, ksd_imq, IMQ_BETA, IMQ_C};
pub use stability::{stability_profile, StabilityProfile, StabilityRecord};
pub use variance::{compare_estimators, EstimatorComparison};
