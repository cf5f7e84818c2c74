//! `scan`: classify long-run behaviour over a (beta, x0) grid.

use turnpike_core::{beta_scan, ScanOptions, ScanTable};

use crate::commands::{write_json, write_text};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::svg::LineChart;

pub fn scan_options(cfg: &RunConfig) -> ScanOptions {
    ScanOptions {
        state_nodes: cfg.grid,
        control_nodes: cfg.ugrid,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        class_tol: 0.05,
        horizon: cfg.horizon,
    }
}

pub fn cmd_scan(cfg: &RunConfig) -> CliResult<()> {
    let betas = cfg
        .beta_grid
        .clone()
        .or_else(|| cfg.beta.map(|b| vec![b]))
        .ok_or_else(|| CliError::Config("scan needs --beta-grid (or --beta)".into()))?;
    if cfg.x0.is_empty() {
        return Err(CliError::Config("scan needs --x0".into()));
    }
    let table = beta_scan(&cfg.model, &cfg.x0, &betas, &scan_options(cfg))
        .map_err(|e| CliError::stage("scan", e))?;

    cfg.write_meta()?;
    write_text(cfg, "scan.csv", &table.to_csv())?;
    write_text(cfg, "scan.svg", &scan_chart(&table).render())?;
    let beta2: Vec<serde_json::Value> = cfg
        .x0
        .iter()
        .map(|x0| {
            serde_json::json!({
                "x0": x0,
                "empirical_beta2": table.empirical_beta2(x0),
            })
        })
        .collect();
    let summary = serde_json::json!({
        "cells": table.cells,
        "equilibria": table.equilibria,
        "class_tol": table.class_tol,
        "empirical_beta2": beta2,
    });
    write_json(cfg, "scan.json", &summary)?;
    println!(
        "scan: {} cells over {} betas; wrote {}",
        table.cells.len(),
        betas.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn scan_chart(table: &ScanTable) -> LineChart {
    let mut chart = LineChart::new("scanned trajectories", "k", "x");
    for cell in &table.cells {
        let pts: Vec<(f64, f64)> = cell
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| (k as f64, x[0]))
            .collect();
        chart.add_series(
            &format!("beta = {:.3}, x0 = {}", cell.beta, cell.x0[0]),
            pts,
        );
    }
    chart
}
