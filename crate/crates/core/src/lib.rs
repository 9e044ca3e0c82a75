//! Modified Patankar schemes for production-destruction systems: MPRK22,
//! MPDeC, their stability functions on the linear test problem, and
//! time-step bounds for oscillation-free steps.

pub mod cli;
pub mod error;
pub mod matrix;
pub mod oscillation;
pub mod pds;
pub mod schemes;
pub mod stability;
pub mod subtimesteps;

pub use error::{Error, Result};
pub use pds::{PdsSystem, State, TestProblem};
pub use schemes::{integrate, step, Scheme, StepContext};
pub use stability::{Bound, EvalMode, StabilityEvaluator};
pub use subtimesteps::NodeFamily;
