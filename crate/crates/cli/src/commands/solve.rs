//! `solve` and `rollout`: Bellman fixed point, policy export, closed-loop
//! trajectories.

use turnpike_core::io::{policy_to_csv, trajectory_to_csv, value_function_to_csv};
use turnpike_core::{extract_policy, rollout, value_iteration_logged, CostKind};

use crate::commands::{write_json, write_text};
use crate::config::{fname_num, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg::LineChart;

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<()> {
    let problem = cfg.problem()?;
    let system = problem.system();
    let grid = cfg.state_grid(system)?;
    let ugrid = cfg.control_grid(system)?;
    let (v, iterations) = value_iteration_logged(
        &problem,
        &grid,
        &ugrid,
        CostKind::Original,
        cfg.tol,
        cfg.max_iter,
    )
    .map_err(|e| CliError::stage("solve", e))?;
    let policy = extract_policy(&v, &problem, &ugrid, CostKind::Original)
        .map_err(|e| CliError::stage("policy", e))?;

    cfg.write_meta()?;
    write_text(cfg, "V.csv", &value_function_to_csv(&v))?;
    write_text(cfg, "policy.csv", &policy_to_csv(&policy))?;
    let log = format!(
        "command: solve\nbeta: {}\nstate_nodes: {}\ncontrol_nodes: {}\ntolerance: {:e}\niterations: {}\nbellman_residual: {:e}\n",
        problem.beta(),
        grid.len(),
        ugrid.len(),
        cfg.tol,
        iterations,
        v.bellman_residual
    );
    write_text(cfg, "convergence.log", &log)?;
    println!(
        "solve: converged in {iterations} iterations, residual {:e}; wrote {}",
        v.bellman_residual,
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_rollout(cfg: &RunConfig) -> CliResult<()> {
    if cfg.x0.is_empty() {
        return Err(CliError::Config("rollout needs --x0".into()));
    }
    let problem = cfg.problem()?;
    let system = problem.system();
    let grid = cfg.state_grid(system)?;
    let ugrid = cfg.control_grid(system)?;
    let (v, _) = value_iteration_logged(
        &problem,
        &grid,
        &ugrid,
        CostKind::Original,
        cfg.tol,
        cfg.max_iter,
    )
    .map_err(|e| CliError::stage("solve", e))?;

    cfg.write_meta()?;
    let mut chart = LineChart::new(&format!("closed loop, beta = {}", problem.beta()), "k", "x");
    let mut summaries = Vec::new();
    for x0 in &cfg.x0 {
        let traj = rollout(
            &problem,
            &v,
            &ugrid,
            CostKind::Original,
            x0,
            cfg.horizon,
            false,
        )
        .map_err(|e| CliError::stage("rollout", e))?;
        let name = format!("trajectory_x0_{}.csv", fname_num(x0[0]));
        write_text(cfg, &name, &trajectory_to_csv(&traj))?;
        chart.add_series(
            &format!("x0 = {}", x0[0]),
            traj.states
                .iter()
                .enumerate()
                .map(|(k, x)| (k as f64, x[0]))
                .collect(),
        );
        summaries.push(serde_json::json!({
            "x0": x0,
            "terminal": traj.final_state(),
            "cost": traj.total_cost(),
            "exit_index": traj.exit_index,
            "file": name,
        }));
    }
    write_text(cfg, "rollout.svg", &chart.render())?;
    write_json(cfg, "rollout.json", &serde_json::Value::Array(summaries))?;
    println!(
        "rollout: wrote {} trajectories to {}",
        cfg.x0.len(),
        cfg.out.display()
    );
    Ok(())
}
