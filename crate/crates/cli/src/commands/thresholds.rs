//! `thresholds`: the end-to-end pipeline equilibria -> storage -> rotated
//! cost infimum -> eta -> delta -> beta* -> sigma/eps/theta.

use std::collections::BTreeMap;

use turnpike_core::{
    beta_star, eta_from_continuity, fit_comparison_upper, norm_diff, sigma_eps_theta,
    value_iteration_logged, verify_dissipativity, CostKind, DissipativityVariant, StorageForm,
    ThresholdReport,
};

use crate::commands::{
    find_model_equilibria, resolve_storage, select_local_equilibrium, verification_grids,
    write_json,
};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const ETA_PROBE_NODES: usize = 21;

pub fn cmd_thresholds(cfg: &RunConfig, eq_index: Option<usize>) -> CliResult<()> {
    // The threshold formulas are valid for any discount factor; default to
    // the midpoint when none is requested.
    let beta = cfg.beta.unwrap_or(0.5);
    let system = cfg.system()?;
    let problem = turnpike_core::DiscountedProblem::new(system.clone(), beta)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut provenance = BTreeMap::new();
    if cfg.beta.is_none() {
        provenance.insert("beta".into(), "defaulted to 0.5 (no --beta)".into());
    }

    let search = find_model_equilibria(cfg, &system, beta)?;
    let eq = select_local_equilibrium(&search, eq_index)?;
    provenance.insert(
        "equilibrium".into(),
        format!(
            "x = {:?}, u = {:?} (cost-sorted index {})",
            eq.x,
            eq.u,
            search
                .equilibria
                .iter()
                .position(|e| norm_diff(&e.x, &eq.x) == 0.0)
                .unwrap_or(0)
        ),
    );

    let storage = resolve_storage(cfg, &system, &eq, beta)?;
    let storage_nu = match storage.form() {
        StorageForm::Linear { nu, .. } => {
            provenance.insert(
                "storage".into(),
                if cfg.storage.is_some() {
                    "user-specified linear form".into()
                } else {
                    "linear synthesis from stationarity conditions".into()
                },
            );
            Some(nu.clone())
        }
        _ => {
            provenance.insert("storage".into(), "user-specified".into());
            None
        }
    };

    // Local dissipativity on the rho-region around the equilibrium.
    let rho = cfg.rho;
    let region = turnpike_core::AxisBox::ball_box(&eq.x, rho)
        .ok()
        .and_then(|b| b.intersect(system.state_box()))
        .ok_or_else(|| CliError::Config(format!("rho = {rho} gives an empty region")))?;
    let (vg, cg) = verification_grids(cfg, &system, &region)?;
    // Prefer the (x,u) inequality required by the exit-cost machinery; when
    // the cost is control-independent at the equilibrium state it cannot be
    // strict there, so fall back to the state-deviation variant.
    let xu_report = verify_dissipativity(
        &problem,
        &eq,
        &storage,
        &region,
        DissipativityVariant::XU,
        &vg,
        &cg,
    )
    .map_err(|e| CliError::stage("dissipativity", e))?;
    let report = if xu_report.accepted {
        provenance.insert("alpha_variant".into(), "x-u".into());
        xu_report
    } else {
        let x_report = verify_dissipativity(
            &problem,
            &eq,
            &storage,
            &region,
            DissipativityVariant::XOnly,
            &vg,
            &cg,
        )
        .map_err(|e| CliError::stage("dissipativity", e))?;
        if !x_report.accepted {
            return Err(CliError::stage(
                "dissipativity",
                format!(
                    "certificate rejected on the verification grid for both variants ({} / {} violations); thresholds undefined",
                    xu_report.violation_count, x_report.violation_count
                ),
            ));
        }
        provenance.insert(
            "alpha_variant".into(),
            format!(
                "x-only (x-u rejected with {} violations)",
                xu_report.violation_count
            ),
        );
        x_report
    };
    provenance.insert(
        "ell_tilde_min".into(),
        "infimum of the rotated cost over the admissible set (grid)".into(),
    );

    let eta = eta_from_continuity(&system, &eq, rho, ETA_PROBE_NODES)
        .map_err(|e| CliError::stage("eta", e))?;
    provenance.insert(
        "eta".into(),
        format!("continuity ladder rho/2^j on a {ETA_PROBE_NODES}-node probe grid"),
    );

    let delta = report.alpha_fit.eval(eta);
    if delta <= 0.0 {
        return Err(CliError::stage(
            "delta",
            format!("alpha_fit(eta) = {delta} is not positive"),
        ));
    }
    provenance.insert("delta".into(), "alpha_fit(eta)".into());

    let ell_min = report.ell_tilde_min.min(0.0);
    if report.ell_tilde_min > 0.0 {
        provenance.insert(
            "ell_tilde_min_clamp".into(),
            format!(
                "grid infimum {} clamped to 0 for beta*",
                report.ell_tilde_min
            ),
        );
    }
    let bstar = beta_star(delta, ell_min, cfg.k).map_err(|e| CliError::stage("beta*", e))?;
    let bstar_limit = delta / (delta - ell_min);
    provenance.insert(
        "beta_star".into(),
        format!("k/(k+1) * delta/(delta - ell_tilde_min) with k = {}", cfg.k),
    );

    // Upper comparison bound gamma on |V~| over the region, from the rotated
    // value table on the solver grids.
    let grid = cfg.state_grid(&system)?;
    let ugrid = cfg.control_grid(&system)?;
    let (v_rot, _) = value_iteration_logged(
        &problem,
        &grid,
        &ugrid,
        CostKind::Rotated {
            eq: &eq,
            storage: &storage,
        },
        cfg.tol,
        cfg.max_iter,
    )
    .map_err(|e| CliError::stage("solve", e))?;
    let dust = 1e-9 * (1.0 + region.radius());
    let value_floor = v_rot.bellman_residual.max(1e-12);
    let samples: Vec<(f64, f64)> = (0..grid.len())
        .filter_map(|i| {
            let x = grid.node(i);
            if !region.contains(&x) {
                return None;
            }
            let mut r = norm_diff(&x, &eq.x);
            let mut v = v_rot.values[i].abs();
            // The anchor node carries only the fixed-point residual; treat it
            // as the exact zero of gamma.
            if r <= dust {
                r = 0.0;
                if v <= value_floor {
                    v = 0.0;
                }
            }
            Some((r, v))
        })
        .collect();
    let gamma = fit_comparison_upper(&samples).map_err(|e| CliError::stage("gamma", e))?;
    provenance.insert(
        "gamma".into(),
        "upper envelope of |V~| over the region".into(),
    );

    let stay = sigma_eps_theta(beta, cfg.horizon, delta, &gamma)
        .map_err(|e| CliError::stage("sigma", e))?;
    provenance.insert(
        "sigma".into(),
        format!("beta^K delta / (2(1-beta)) with K = {}", cfg.horizon),
    );

    let threshold_report = ThresholdReport {
        beta,
        rho,
        eta,
        delta,
        ell_tilde_min: report.ell_tilde_min,
        beta_star: bstar,
        k_fraction: cfg.k,
        beta_star_limit: bstar_limit,
        big_k: cfg.horizon,
        sigma: stay.sigma,
        eps_stay: stay.eps_stay,
        theta_stay: stay.theta_stay,
        storage_nu,
        provenance,
    };
    cfg.write_meta()?;
    let value = serde_json::to_value(&threshold_report)
        .map_err(|e| CliError::Compute(format!("report serialization: {e}")))?;
    write_json(cfg, "thresholds.json", &value)?;
    println!(
        "thresholds: eta = {eta}, delta = {delta:e}, ell_tilde_min = {}, beta* = {bstar} (k = {}), limit = {bstar_limit}",
        report.ell_tilde_min, cfg.k
    );
    println!(
        "            sigma = {:e}, eps_stay = {:e}, theta_stay = {:e} (K = {})",
        stay.sigma, stay.eps_stay, stay.theta_stay, cfg.horizon
    );
    Ok(())
}
