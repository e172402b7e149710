//! Interacting particle approximations of McKean-Vlasov diffusions.

mod chaos;
mod coefficients;
mod control;
mod ensemble;
mod measure;
mod time;

pub use chaos::{chaos_report, chaos_report_averaged, ChaosReport, ChaosRow};
pub use coefficients::{CoefficientSet, Diffusion, Drift, LipschitzProbe};
pub use control::{ControlField, ControlMode, FeedbackMap};
pub use ensemble::{
    simulate_mckv, simulate_mckv_with, InitialCondition, Noise, NoiseTable, ParticleEnsemble, Retention,
};
pub(crate) use ensemble::Simulation;
pub use measure::{wasserstein2, EmpiricalMeasure, EXACT_W2_CAP};
pub(crate) use measure::mean_of;
pub use time::{PiecewiseConstant, TimeGrid};
