//! Adaptive fuzzy control with an H-infinity auxiliary term for nonlinear
//! plants whose actuation crosses a delayed, lossy network.
//!
//! The crate is organised bottom-up:
//!
//! * [`lti`]: dense state-space algebra, H-infinity norm and the loop-shaping
//!   robustness certificate.
//! * [`plant`]: chain-of-integrators nonlinear plants (inverted pendulum
//!   benchmark) and a fixed-step RK4 integrator.
//! * [`netchan`]: seeded delay/drop channel with hold-last-sample output.
//! * [`fuzzy`]: Gaussian-membership fuzzy basis functions, linear in their
//!   consequent parameters.
//! * [`afhc`]: the adaptive controller (certainty-equivalence law, Lyapunov
//!   adaptation, parameter projection, error filtering).
//! * [`harness`]: configuration, closed-loop simulation, metrics and CSV
//!   output.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afhc;
pub mod fuzzy;
pub mod harness;
pub mod lti;
pub mod netchan;
pub mod plant;

pub use afhc::{ControlError, ControllerConfig, LyapunovMatrix};
pub use fuzzy::{FuzzyApproximator, FuzzyError, MembershipGrid};
pub use harness::{ExperimentConfig, HarnessError, Metrics, Preset, SimulationTrace};
pub use lti::{LtiError, RobustnessCertificate, StateSpace};
pub use netchan::{Channel, ChannelConfig, ChannelError, TimedSample};
pub use plant::{DynamicsOverflow, PendulumParams, PlantModel, StateVec};
