//! `turnpike`: rotated value function, the C/kappa ratio bound, Q-sets and
//! Lyapunov decrease residuals along optimal rollouts.

use turnpike_core::io::trajectory_to_csv;
use turnpike_core::{
    estimate_c, lyapunov_decrease_check, q_set, rollout, value_iteration_logged, CostKind,
};

use crate::commands::{
    certify::region_around, find_model_equilibria, resolve_storage, select_local_equilibrium,
    write_json, write_text,
};
use crate::config::{fname_num, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg::LineChart;

pub struct TurnpikeOpts {
    pub eps: f64,
    pub theta_lo: Option<f64>,
    pub theta_hi: Option<f64>,
    pub eq_index: Option<usize>,
}

pub fn cmd_turnpike(cfg: &RunConfig, topts: &TurnpikeOpts) -> CliResult<()> {
    if cfg.x0.is_empty() {
        return Err(CliError::Config("turnpike needs --x0".into()));
    }
    let problem = cfg.problem()?;
    let beta = problem.beta();
    let system = problem.system().clone();
    let search = find_model_equilibria(cfg, &system, beta)?;
    let eq = select_local_equilibrium(&search, topts.eq_index)?;
    let storage = resolve_storage(cfg, &system, &eq, beta)?;

    let grid = cfg.state_grid(&system)?;
    let ugrid = cfg.control_grid(&system)?;
    let kind = CostKind::Rotated {
        eq: &eq,
        storage: &storage,
    };
    let (v_rot, iterations) =
        value_iteration_logged(&problem, &grid, &ugrid, kind, cfg.tol, cfg.max_iter)
            .map_err(|e| CliError::stage("solve", e))?;

    // Annulus defaults: two grid cells to the region radius.
    let region = region_around(cfg, &system, &eq)?;
    let theta_lo = topts
        .theta_lo
        .unwrap_or_else(|| 2.0 * grid.max_cell_width_any());
    let theta_hi = topts.theta_hi.unwrap_or_else(|| region.radius());
    let c_report = estimate_c(&v_rot, &problem, &eq, &storage, &ugrid, theta_lo, theta_hi)
        .map_err(|e| CliError::stage("c-bound", e))?;

    cfg.write_meta()?;
    let mut chart = LineChart::new(&format!("rotated closed loop, beta = {beta}"), "k", "x");
    let mut runs = Vec::new();
    for x0 in &cfg.x0 {
        let traj = rollout(&problem, &v_rot, &ugrid, kind, x0, cfg.horizon, false)
            .map_err(|e| CliError::stage("rollout", e))?;
        let m = cfg.horizon.min(traj.states.len() - 1);
        let q = q_set(&traj, &eq.x, topts.eps, m).map_err(|e| CliError::stage("q-set", e))?;
        let lyap = lyapunov_decrease_check(&v_rot, &problem, &traj, c_report.c, 0.0)
            .map_err(|e| CliError::stage("lyapunov", e))?;
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
        runs.push(serde_json::json!({
            "x0": x0,
            "terminal": traj.final_state(),
            "q_set": q,
            "lyapunov": {
                "max_residual": lyap.max_residual,
                "slack": lyap.slack,
                "kappa": lyap.kappa,
                "within_slack": lyap.max_residual <= lyap.slack,
            },
            "file": name,
        }));
    }
    let report = serde_json::json!({
        "beta": beta,
        "equilibrium": { "x": eq.x, "u": eq.u },
        "iterations": iterations,
        "bellman_residual": v_rot.bellman_residual,
        "c_bound": c_report,
        "runs": runs,
    });
    write_json(cfg, "turnpike.json", &report)?;
    write_text(cfg, "turnpike.svg", &chart.render())?;
    println!(
        "turnpike: C = {:.4} (bound {:.4}, satisfied = {}), kappa = {:.4}; wrote {}",
        c_report.c,
        c_report.bound,
        c_report.satisfied,
        c_report.kappa,
        cfg.out.display()
    );
    Ok(())
}
