//! Analysis toolkit for discounted infinite-horizon optimal control on
//! low-dimensional grids: Bellman fixed-point solving by value iteration,
//! grid verification of (local) discounted strict dissipativity certificates,
//! and turnpike/threshold diagnostics for the discount factor.

pub mod dissipativity;
pub mod dp;
pub mod error;
pub mod grid;
pub mod io;
mod linalg;
pub mod model;
pub mod turnpike;

pub use dissipativity::{
    find_equilibria, fit_comparison_lower, fit_comparison_upper, synthesize_linear_storage,
    verify_dissipativity, ComparisonFunction, DissipativityReport, DissipativityVariant,
    EquilibriumSearch,
};
pub use dp::{
    bellman_operator, brute_force_value, evaluate_open_loop, extract_policy,
    extract_policy_refined, rollout, rollout_with_policy, value_iteration, value_iteration_logged,
    BellmanOperator, CostKind, GriddedValueFunction, Policy, PolicyLookup, Trajectory,
    ValueInterval, ValueKind,
};
pub use error::{Error, Result};
pub use grid::Grid;
pub use model::{
    check_admissible, evaluate_rotated_cost, expand_model_spec, norm, norm_diff, AxisBox,
    ControlSystem, DiscountedProblem, Equilibrium, ModelSpec, Monomial, StorageForm,
    StorageFunction,
};
pub use turnpike::{
    beta_scan, beta_star, classify_terminal, estimate_c, eta_from_continuity,
    largest_contained_level, lyapunov_decrease_check, q_set, sigma_eps_theta,
    sublevel_invariance_check, CBoundReport, InvarianceCheck, LyapunovCheck, QSetResult, ScanCell,
    ScanOptions, ScanTable, StayBounds, TerminalClass, ThresholdReport,
};
