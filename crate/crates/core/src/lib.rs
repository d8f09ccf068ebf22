//! Stochastic and deterministic coagulation with gelation diagnostics.
//!
//! The crate simulates the Marcus-Lushnikov process exactly, integrates the
//! truncated Smoluchowski equations, evaluates closed-form gelation-time
//! bounds and solves small chains exactly for validation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod engine;
pub mod error;
pub mod harness;
pub mod index;
pub mod kernel;
pub mod observables;
pub mod oracle;
pub mod smoluchowski;
pub mod state;

pub use engine::{run_trajectory, sample_event, total_rate, StopCondition, StopReason, Trajectory};
pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec, KernelTable};
pub use observables::{ObservableRecord, ObservableSet, StoppingTimeSpec};
pub use state::ClusterState;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/observables.md")]
    mod observables {}
    #[doc = include_str!("../../../book/src/smoluchowski.md")]
    mod smoluchowski {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
