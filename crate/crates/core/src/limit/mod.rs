//! Zero-noise control problems: controlled ODEs, the action, the rate
//! function and the value of the controlled measure flow.

mod action;
mod flow;
mod ode;
mod rate;

pub use action::{maximize_action, ActionMaximum, ActionOptions};
pub use flow::{flow_action, flow_value_random_init, transport, FlowEnsemble, FlowOptions, FlowValue, MIN_CHARACTERISTICS};
pub use ode::{action_value, integrate_ode, ActionValue, ControlVector, DeterministicPath};
pub use rate::{rate_function, RateValue, MIN_SINGULAR_SQ, REACH_TOLERANCE};
