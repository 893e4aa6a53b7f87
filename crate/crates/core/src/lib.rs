//! Mixed variational flows built from uncorrected Hamiltonian dynamics with
//! deterministic momentum refreshment.
//!
//! A [`MixFlow`] averages the pushforwards `T^n q0` of a reference
//! distribution under a flow map `T`; with [`HamiltonianFlow`] as the map it
//! supports i.i.d. sampling, exact density evaluation and unbiased ELBO
//! estimates.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod hamiltonian;
pub mod math;
pub mod meanfield;
pub mod mixflow;
pub mod momentum;
pub mod reference;
pub mod state;
pub mod target;

pub use dataset::{load_dataset, Dataset, Standardize};
pub use error::{Error, Result};
pub use flow::{FlowTransform, IdentityFlow};
pub use hamiltonian::{flow_forward, flow_inverse, HamFlowParams, HamiltonianFlow, RefreshFn};
pub use meanfield::{fit_meanfield, MeanFieldFit};
pub use mixflow::{DensityTriple, ElboSummary, MixFlow};
pub use momentum::{MomentumKind, MomentumModel};
pub use reference::{AffineMap, AugmentedReference};
pub use state::AugmentedState;
pub use target::{augment_target, regression_target, synthetic_target, AugmentedTarget, TargetModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
