//! Anytime-valid PAC-Bayes confidence sequences from a coin-betting
//! concentration inequality, with closed-form relaxations, an exact
//! finite-support inversion solver, Monte Carlo certification for
//! continuous posteriors, and a reproducible experiment harness.

pub mod bounds;
pub mod core_math;
pub mod harness;
pub mod montecarlo;
pub mod optimizer;
pub mod scenarios;

pub use bounds::{BoundInputs, ConfidenceInterval, Method};
pub use core_math::{
    bernoulli_kl, kl_lower_inverse, kl_upper_inverse, psi_star, regret_budget, CoreError,
    LossVector, PsiStarResult, SolverTolerances,
};
pub use harness::{ResultRow, RunConfig};
pub use montecarlo::{McConfig, ParamSampler};
pub use optimizer::{Atom, ConstraintKind, Direction, FiniteSupportProblem};
pub use scenarios::{ScenarioKind, ScenarioSpec};
