//! Shared fixtures for the solver benchmarks.

use turnpike_core::{
    expand_model_spec, DiscountedProblem, Equilibrium, Grid, ModelSpec, StorageFunction,
};

pub struct Fixture {
    pub problem: DiscountedProblem,
    pub grid: Grid,
    pub control_grid: Grid,
    pub eq: Equilibrium,
    pub storage: StorageFunction,
}

/// Example-3 problem at the given resolution.
pub fn nonconvex_fixture(beta: f64, state_nodes: usize, control_nodes: usize) -> Fixture {
    let system = expand_model_spec(&ModelSpec::BuiltinExample3).expect("builtin model");
    let grid = Grid::uniform(system.state_box(), &[state_nodes]).expect("state grid");
    let control_grid = Grid::uniform(system.control_box(), &[control_nodes]).expect("control grid");
    let eq = Equilibrium::new(&system, vec![0.0], vec![0.0], beta, None).expect("equilibrium");
    let storage = StorageFunction::quadratic_diagonal(vec![-1.0], vec![0.0], system.state_box())
        .expect("storage");
    let problem = DiscountedProblem::new(system, beta).expect("problem");
    Fixture {
        problem,
        grid,
        control_grid,
        eq,
        storage,
    }
}

/// Example-1 problem at the given resolution.
pub fn double_well_fixture(beta: f64, state_nodes: usize, control_nodes: usize) -> Fixture {
    let system = expand_model_spec(&ModelSpec::BuiltinExample1).expect("builtin model");
    let grid = Grid::uniform(system.state_box(), &[state_nodes]).expect("state grid");
    let control_grid = Grid::uniform(system.control_box(), &[control_nodes]).expect("control grid");
    let x_l = (3.0 - 905f64.sqrt()) / 32.0;
    let eq = Equilibrium::new(&system, vec![x_l], vec![0.0], beta, None).expect("equilibrium");
    let storage = StorageFunction::zero(vec![x_l], system.state_box()).expect("storage");
    let problem = DiscountedProblem::new(system, beta).expect("problem");
    Fixture {
        problem,
        grid,
        control_grid,
        eq,
        storage,
    }
}
