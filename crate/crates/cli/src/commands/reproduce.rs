//! `reproduce`: preset pipelines regenerating the data behind the three
//! builtin examples' figure sets.

use std::collections::BTreeMap;
use std::sync::Arc;

use turnpike_core::io::trajectory_to_csv;
use turnpike_core::{
    beta_scan, classify_terminal, extract_policy, q_set, rollout, value_iteration, CostKind,
    DiscountedProblem, Grid, GriddedValueFunction, ModelSpec, TerminalClass, Trajectory,
};

use crate::commands::scan::scan_options;
use crate::commands::{find_model_equilibria, write_json, write_text};
use crate::config::{fname_num, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg::LineChart;

pub fn cmd_reproduce(cfg: &RunConfig, example: u8) -> CliResult<()> {
    match example {
        1 => reproduce_example1(cfg),
        2 => reproduce_example2(cfg),
        3 => reproduce_example3(cfg),
        n => Err(CliError::Config(format!("unknown example {n}"))),
    }
}

struct Runner {
    cfg: RunConfig,
    cache: BTreeMap<u64, Arc<GriddedValueFunction>>,
}

impl Runner {
    fn new(cfg: &RunConfig, model: ModelSpec) -> Self {
        let mut cfg = cfg.clone();
        cfg.model = model;
        Self {
            cfg,
            cache: BTreeMap::new(),
        }
    }

    fn solve(
        &mut self,
        beta: f64,
    ) -> CliResult<(DiscountedProblem, Arc<GriddedValueFunction>, Grid)> {
        let system = self.cfg.system()?;
        let problem = DiscountedProblem::new(system.clone(), beta)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let ugrid = self.cfg.control_grid(&system)?;
        if let Some(v) = self.cache.get(&beta.to_bits()) {
            return Ok((problem, v.clone(), ugrid));
        }
        let grid = self.cfg.state_grid(&system)?;
        let v = value_iteration(
            &problem,
            &grid,
            &ugrid,
            CostKind::Original,
            self.cfg.tol,
            self.cfg.max_iter,
        )
        .map_err(|e| CliError::stage("solve", e))?;
        let v = Arc::new(v);
        self.cache.insert(beta.to_bits(), v.clone());
        Ok((problem, v, ugrid))
    }

    fn rollout(&mut self, beta: f64, x0: f64, horizon: usize) -> CliResult<Trajectory> {
        let (problem, v, ugrid) = self.solve(beta)?;
        rollout(
            &problem,
            &v,
            &ugrid,
            CostKind::Original,
            &[x0],
            horizon,
            false,
        )
        .map_err(|e| CliError::stage("rollout", e))
    }
}

fn run_entry(
    beta: f64,
    gamma: Option<f64>,
    x0: f64,
    traj: &Trajectory,
    class: TerminalClass,
    file: &str,
) -> serde_json::Value {
    serde_json::json!({
        "beta": beta,
        "gamma": gamma,
        "x0": x0,
        "terminal": traj.final_state(),
        "class": class,
        "cost": traj.total_cost(),
        "file": file,
    })
}

fn reproduce_example1(cfg: &RunConfig) -> CliResult<()> {
    let mut runner = Runner::new(cfg, ModelSpec::BuiltinExample1);
    let system = runner.cfg.system()?;
    let equilibria = find_model_equilibria(&runner.cfg, &system, 0.5)?.equilibria;
    let horizon = runner.cfg.horizon;
    let mut runs = Vec::new();

    // Trajectories from x0 = -0.8 across discount factors.
    let mut chart = LineChart::new("example 1: x0 = -0.8", "k", "x");
    for beta in [0.5, 0.6, 0.7, 0.8] {
        let traj = runner.rollout(beta, -0.8, horizon)?;
        let class = classify_terminal(
            &[-0.8],
            traj.final_state(),
            &equilibria,
            system.state_box(),
            0.05,
        );
        let file = format!("ex1_beta{}_x0m0p8.csv", fname_num(beta));
        write_text(cfg, &file, &trajectory_to_csv(&traj))?;
        chart.add_series(
            &format!("beta = {beta}"),
            traj.states
                .iter()
                .enumerate()
                .map(|(k, x)| (k as f64, x[0]))
                .collect(),
        );
        runs.push(run_entry(beta, None, -0.8, &traj, class, &file));
    }
    write_text(cfg, "ex1_trajectories.svg", &chart.render())?;

    // Optimal feedback across the state grid (domain-of-attraction view).
    let mut feedback = LineChart::new("example 1: optimal feedback", "x", "u");
    for beta in [0.5, 0.6, 0.7, 0.8] {
        let (problem, v, ugrid) = runner.solve(beta)?;
        let policy = extract_policy(&v, &problem, &ugrid, CostKind::Original)
            .map_err(|e| CliError::stage("policy", e))?;
        let pts: Vec<(f64, f64)> = (0..policy.grid.len())
            .step_by(4)
            .map(|i| (policy.grid.node(i)[0], policy.controls[i][0]))
            .collect();
        feedback.add_series(&format!("beta = {beta}"), pts);
    }
    write_text(cfg, "ex1_feedback.svg", &feedback.render())?;

    // Start-value sweeps at fixed discount factors.
    let sweep_x0: Vec<f64> = (-5..=5).map(|k| 0.3 * k as f64).collect();
    for beta in [0.6, 0.7] {
        let mut chart = LineChart::new(&format!("example 1: beta = {beta}"), "k", "x");
        for &x0 in &sweep_x0 {
            let traj = runner.rollout(beta, x0, horizon)?;
            let class = classify_terminal(
                &[x0],
                traj.final_state(),
                &equilibria,
                system.state_box(),
                0.05,
            );
            let file = format!("ex1_beta{}_x0{}.csv", fname_num(beta), fname_num(x0));
            write_text(cfg, &file, &trajectory_to_csv(&traj))?;
            chart.add_series(
                &format!("x0 = {x0}"),
                traj.states
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (k as f64, x[0]))
                    .collect(),
            );
            runs.push(run_entry(beta, None, x0, &traj, class, &file));
        }
        write_text(
            cfg,
            &format!("ex1_sweep_beta{}.svg", fname_num(beta)),
            &chart.render(),
        )?;
    }

    // Fine discount scan for the empirical threshold.
    let betas: Vec<f64> = (0..=30).map(|k| 0.5 + 0.01 * k as f64).collect();
    let table = beta_scan(
        &ModelSpec::BuiltinExample1,
        &[vec![-0.8]],
        &betas,
        &scan_options(&runner.cfg),
    )
    .map_err(|e| CliError::stage("scan", e))?;
    write_text(cfg, "ex1_scan.csv", &table.to_csv())?;
    let beta2 = table.empirical_beta2(&[-0.8]);

    cfg.write_meta()?;
    let n_runs = runs.len();
    write_json(
        cfg,
        "classification.json",
        &serde_json::json!({
            "example": 1,
            "runs": runs,
            "empirical_beta2": beta2,
            "scan_csv": "ex1_scan.csv",
        }),
    )?;
    println!(
        "reproduce 1: {n_runs} runs, empirical beta2 = {beta2:?}; wrote {}",
        cfg.out.display()
    );
    Ok(())
}

fn reproduce_example2(cfg: &RunConfig) -> CliResult<()> {
    let gammas: Vec<f64> = match cfg.gamma {
        Some(g) => vec![g],
        None => vec![0.0, 1.0, 10.0],
    };
    let horizon = cfg.horizon;
    let mut runs = Vec::new();

    for &beta in &[0.7, 0.95] {
        let mut chart = LineChart::new(&format!("example 2: beta = {beta}, x0 = -0.8"), "k", "x");
        for &gamma in &gammas {
            let mut runner = Runner::new(cfg, ModelSpec::BuiltinExample2 { gamma });
            let system = runner.cfg.system()?;
            let equilibria = find_model_equilibria(&runner.cfg, &system, beta)?.equilibria;
            let traj = runner.rollout(beta, -0.8, horizon)?;
            let class = classify_terminal(
                &[-0.8],
                traj.final_state(),
                &equilibria,
                system.state_box(),
                0.05,
            );
            let file = format!(
                "ex2_gamma{}_beta{}_x0m0p8.csv",
                fname_num(gamma),
                fname_num(beta)
            );
            write_text(cfg, &file, &trajectory_to_csv(&traj))?;
            chart.add_series(
                &format!("gamma = {gamma}"),
                traj.states
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (k as f64, x[0]))
                    .collect(),
            );
            runs.push(run_entry(beta, Some(gamma), -0.8, &traj, class, &file));
        }
        write_text(
            cfg,
            &format!("ex2_beta{}.svg", fname_num(beta)),
            &chart.render(),
        )?;
    }

    // Discount sweep at gamma = 10: the interval of locally attracting
    // discount factors is empty.
    let mut scan_summary = None;
    if gammas.contains(&10.0) {
        let mut betas: Vec<f64> = (0..=9).map(|k| 0.5 + 0.05 * k as f64).collect();
        betas.push(0.99);
        let table = beta_scan(
            &ModelSpec::BuiltinExample2 { gamma: 10.0 },
            &[vec![-0.8]],
            &betas,
            &scan_options(cfg),
        )
        .map_err(|e| CliError::stage("scan", e))?;
        write_text(cfg, "ex2_scan.csv", &table.to_csv())?;
        let local_count = table
            .cells
            .iter()
            .filter(|c| c.class == TerminalClass::Local)
            .count();
        scan_summary = Some(serde_json::json!({
            "gamma": 10.0,
            "betas": betas,
            "local_count": local_count,
            "empirical_beta2": table.empirical_beta2(&[-0.8]),
            "cells": table.cells,
        }));
    }

    cfg.write_meta()?;
    write_json(
        cfg,
        "classification.json",
        &serde_json::json!({
            "example": 2,
            "runs": runs,
            "scan": scan_summary,
        }),
    )?;
    println!("reproduce 2: wrote {}", cfg.out.display());
    Ok(())
}

fn reproduce_example3(cfg: &RunConfig) -> CliResult<()> {
    let mut runner = Runner::new(cfg, ModelSpec::BuiltinExample3);
    let system = runner.cfg.system()?;
    let equilibria = find_model_equilibria(&runner.cfg, &system, 0.7)?.equilibria;
    // Long enough for the slow geometric approach to the origin to resolve.
    let horizon = runner.cfg.horizon.max(60);
    let mut runs = Vec::new();
    let mut chart = LineChart::new("example 3: optimal trajectories", "k", "x");

    for (beta, x0) in [(0.7, 1.0), (0.59, 0.004)] {
        let traj = runner.rollout(beta, x0, horizon)?;
        let class = classify_terminal(
            &[x0],
            traj.final_state(),
            &equilibria,
            system.state_box(),
            0.05,
        );
        let q = q_set(&traj, &[0.0], 0.1, 30.min(traj.states.len() - 1))
            .map_err(|e| CliError::stage("q-set", e))?;
        let file = format!("ex3_beta{}_x0{}.csv", fname_num(beta), fname_num(x0));
        write_text(cfg, &file, &trajectory_to_csv(&traj))?;
        chart.add_series(
            &format!("beta = {beta}, x0 = {x0}"),
            traj.states
                .iter()
                .enumerate()
                .map(|(k, x)| (k as f64, x[0]))
                .collect(),
        );
        let mut entry = run_entry(beta, None, x0, &traj, class, &file);
        entry["q_set_eps"] = serde_json::json!(q.epsilon);
        entry["q_set_m"] = serde_json::json!(q.m);
        entry["q_set_cardinality"] = serde_json::json!(q.cardinality());
        runs.push(entry);
    }
    write_text(cfg, "ex3_trajectories.svg", &chart.render())?;

    cfg.write_meta()?;
    write_json(
        cfg,
        "classification.json",
        &serde_json::json!({
            "example": 3,
            "horizon": horizon,
            "runs": runs,
        }),
    )?;
    println!("reproduce 3: wrote {}", cfg.out.display());
    Ok(())
}
