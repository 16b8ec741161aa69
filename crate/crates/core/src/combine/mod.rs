//! Combination plans and their evaluation.
//!
//! A [`CombinationPlan`] is a finite map from level indices to exact
//! rational weights. The constructors cover the standard combination
//! technique, multivariate extrapolation of a single grid, the higher-order
//! combination obtained by extrapolating every grid of the standard plan,
//! Richardson extrapolation on full grids and two-dimensional splitting
//! extrapolation. Weights stay exact until the final weighted sum.

mod evaluate;
mod plan;
mod study;

pub use evaluate::{evaluate_plan, evaluate_plan_with, EvaluationResult, GridCache};
pub use plan::{
    combination_weights, extrapolation_plan, extrapolation_weights, full_grid_plan, ho_plan,
    levels_with_sum, plan_dof, richardson_plan, splitting_plan, standard_plan, CombinationPlan,
    PlanDump, TermDump,
};
pub use study::{
    hierarchical_surplus_study, least_squares_slope, method_plan, richardson_full, run_study,
    splitting_extrapolation_2d, surplus_slope, ConvergenceRecord, Method, StudyOutcome,
    StudySettings, DEFAULT_NODE_BUDGET,
};
