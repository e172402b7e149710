//! Estimators of the risk functional `rho^g` of terminal functionals.
//!
//! Three routes are provided: the log-mean-exp formula (quadratic penalty
//! only), backward regression for the BSDE with a Lipschitz generator, and
//! lower bounds from optimized controls.

mod dual;
mod estimate;
mod lsmc;
mod sequence;
mod terminal;

pub use dual::{evaluate_control, rho_dual_lower, DualBudget, DualResult, MAX_TEMPLATE_PARAMS};
pub use estimate::{log_mean_exp, mean_ci, rho_log_mgf_mc, Method, RhoEstimate, Z95};
pub use lsmc::{bsde_lsmc, BasisFamily, RegressionBasisSpec, MAX_CONDITION};
pub use sequence::{
    dual_gap_report, rho_truncated_sequence, GapReport, LadderOptions, LadderRung, TruncatedSequence, TruncationMethod,
    Trend,
};
pub use terminal::{Term, TerminalFunctional};
