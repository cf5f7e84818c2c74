//! `equilibria` and `dissipativity`: equilibrium search with storage
//! synthesis, and grid dissipativity certificates.

use turnpike_core::{synthesize_linear_storage, verify_dissipativity, AxisBox};

use crate::commands::{
    find_model_equilibria, resolve_storage, select_local_equilibrium, verification_grids,
    write_json,
};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn cmd_equilibria(cfg: &RunConfig) -> CliResult<()> {
    let system = cfg.system()?;
    let beta = cfg.beta.unwrap_or(0.5);
    let search = find_model_equilibria(cfg, &system, beta)?;

    let mut entries = Vec::new();
    for eq in &search.equilibria {
        let storage = match synthesize_linear_storage(&system, eq, beta, None) {
            Ok(s) => match s.form() {
                turnpike_core::StorageForm::Linear { nu, .. } => serde_json::json!({
                    "nu": nu,
                    "lower_bound": s.lower_bound(),
                }),
                _ => unreachable!("linear synthesis returns linear form"),
            },
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        };
        entries.push(serde_json::json!({
            "x": eq.x,
            "u": eq.u,
            "stage_cost": eq.stage_cost_value,
            "residual": eq.residual,
            "storage": storage,
        }));
    }
    let report = serde_json::json!({
        "beta": beta,
        "equilibria": entries,
        "unrefined_clusters": search.unrefined,
    });
    cfg.write_meta()?;
    write_json(cfg, "equilibria.json", &report)?;
    println!(
        "equilibria: found {} (plus {} unrefined clusters); wrote {}",
        search.equilibria.len(),
        search.unrefined.len(),
        cfg.out.display()
    );
    for eq in &search.equilibria {
        println!(
            "  x = {:?}, u = {:?}, stage cost = {}",
            eq.x, eq.u, eq.stage_cost_value
        );
    }
    Ok(())
}

pub fn cmd_dissipativity(
    cfg: &RunConfig,
    variant: turnpike_core::DissipativityVariant,
    eq_index: Option<usize>,
) -> CliResult<()> {
    let problem = cfg.problem()?;
    let beta = problem.beta();
    let system = problem.system().clone();
    let search = find_model_equilibria(cfg, &system, beta)?;
    let eq = select_local_equilibrium(&search, eq_index)?;
    let storage = resolve_storage(cfg, &system, &eq, beta)?;

    let region = region_around(cfg, &system, &eq)?;
    let (vg, cg) = verification_grids(cfg, &system, &region)?;
    let report = verify_dissipativity(&problem, &eq, &storage, &region, variant, &vg, &cg)
        .map_err(|e| CliError::stage("dissipativity", e))?;

    cfg.write_meta()?;
    write_json(cfg, "dissipativity.json", &report.to_json())?;
    println!(
        "dissipativity: accepted = {}, margin = {:e}, ell_tilde_min = {}, violations = {}",
        report.accepted, report.margin, report.ell_tilde_min, report.violation_count
    );
    Ok(())
}

/// The verification region: the rho-box around the equilibrium intersected
/// with the state box when --rho was given, otherwise the whole state box.
pub fn region_around(
    cfg: &RunConfig,
    system: &turnpike_core::ControlSystem,
    eq: &turnpike_core::Equilibrium,
) -> CliResult<AxisBox> {
    if cfg.rho_set {
        AxisBox::ball_box(&eq.x, cfg.rho)
            .ok()
            .and_then(|b| b.intersect(system.state_box()))
            .ok_or_else(|| CliError::Config(format!("rho = {} gives an empty region", cfg.rho)))
    } else {
        Ok(system.state_box().clone())
    }
}
