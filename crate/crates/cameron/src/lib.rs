//! Offline inverse reinforcement learning on cost-based MDPs.
//!
//! The crate is organised around a small set of building blocks:
//!
//! - [`mdp`]: finite and continuous toy environments, policies, discounting.
//! - [`oracle`]: exact occupancy/value quantities on finite MDPs via linear
//!   solves, used to verify every learned component.
//! - [`datasets`]: trajectory persistence and replay buffers.
//! - [`approximator`]: small MLPs with hand-rolled gradients.
//! - [`idle`]: off-policy learning of discounted occupancy measures with a
//!   combined classifier/discriminator and a generator.
//! - [`dynamics`]: maximum-likelihood dynamics ensembles for model rollouts.
//! - [`offline_rl`]: conservative offline actor-critic (COMBO-style).
//! - [`future_sampler`]: future state samplers composing the above.
//! - [`cost`]: cost-function updates, the full IRL loop and baselines.
//! - [`eval`]: MMD estimation and normalised-return reporting.

pub mod approximator;
pub mod cost;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod future_sampler;
pub mod idle;
pub mod mdp;
pub mod offline_rl;
pub mod oracle;
pub mod par;

pub use error::{Error, Result};
