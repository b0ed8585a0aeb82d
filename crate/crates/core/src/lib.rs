//! Safety filters for integral (dynamic) control laws under additive
//! disturbances.
//!
//! The plant is `ẋ = F(x,u) + ℓ(x)d` driven by a nominal rate law
//! `u̇ = φ(x,u)`. A disturbance observer estimates `d`, and a least-norm QP
//! adds a correction `v*` to `φ` so that the barrier functions over `(x, u)`
//! stay non-negative despite estimation error. High-order barrier chains
//! cover inputs that appear only after several differentiations.

pub mod barriers;
pub mod error;
pub mod filter;
pub mod laws;
pub mod model;
pub mod observer;
pub mod rng;
pub mod scenarios;
pub mod sim;

pub use barriers::{
    chain_value, check_validity, eval_p, eval_w, BarrierChain, BarrierSpec, ChainLevel, CheckConfig,
    Counterexample, ValidityReport, EPS_P,
};
pub use error::{Error, Result};
pub use filter::{
    safe_rate, solve_multi, solve_single, Diagnostics, FilterConstraint, FilterMode, FilterResult,
    SafetySet,
};
pub use laws::{AccPredictiveLaw, NominalLaw, Path, PiLaw, StanleyLaw};
pub use model::{AugmentedState, ClassKappa, DisturbanceBounds, DomainBox, Matrix, SystemModel, Vector};
pub use observer::{ObserverConfig, ObserverGain, ObserverState};
pub use scenarios::{build_acc, build_bicycle, build_example1, by_name, Scenario, SCENARIO_NAMES};
pub use sim::{fmt_float, rk4_step, run_closed_loop, summarize, HaltReason, Metrics, SimConfig, TrajectoryLog};
