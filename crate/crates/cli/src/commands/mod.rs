pub mod certify;
pub mod reproduce;
pub mod scan;
pub mod solve;
pub mod thresholds;
pub mod turnpike_cmd;

use turnpike_core::{
    synthesize_linear_storage, ControlSystem, Equilibrium, EquilibriumSearch, Grid, StorageFunction,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Equilibria of the configured model on the solver grids.
pub fn find_model_equilibria(
    cfg: &RunConfig,
    system: &ControlSystem,
    beta: f64,
) -> CliResult<EquilibriumSearch> {
    let sg = cfg.state_grid(system)?;
    let cg = cfg.control_grid(system)?;
    turnpike_core::find_equilibria(system, beta, &sg, &cg, 1e-8)
        .map_err(|e| CliError::stage("equilibria", e))
}

/// The "local" equilibrium of a cost-sorted list: the second-cheapest when
/// several exist (the cheapest is the global one), otherwise the only one.
pub fn select_local_equilibrium(
    search: &EquilibriumSearch,
    eq_index: Option<usize>,
) -> CliResult<Equilibrium> {
    let list = &search.equilibria;
    if list.is_empty() {
        return Err(CliError::Compute(
            "[equilibria] no equilibrium found on the grid".into(),
        ));
    }
    let idx = match eq_index {
        Some(i) => {
            if i >= list.len() {
                return Err(CliError::Config(format!(
                    "--eq-index {i} out of range (found {} equilibria)",
                    list.len()
                )));
            }
            i
        }
        None => usize::from(list.len() > 1),
    };
    Ok(list[idx].clone())
}

/// Resolve the storage function: an explicit `--storage` spec wins; otherwise
/// linear synthesis from the stationarity conditions, surfacing its failure
/// with a hint.
pub fn resolve_storage(
    cfg: &RunConfig,
    system: &ControlSystem,
    eq: &Equilibrium,
    beta: f64,
) -> CliResult<StorageFunction> {
    match &cfg.storage {
        Some(spec) => cfg.storage_from_spec(spec, eq, system.state_box()),
        None => synthesize_linear_storage(system, eq, beta, None).map_err(|e| {
            CliError::stage(
                "storage",
                format!("{e}; supply one explicitly, e.g. --storage quadratic:-1"),
            )
        }),
    }
}

/// Verification grids for certificate checks (defaults 201 nodes per axis,
/// independent of the solver grids).
pub fn verification_grids(
    cfg: &RunConfig,
    system: &ControlSystem,
    region: &turnpike_core::AxisBox,
) -> CliResult<(Grid, Grid)> {
    let vnodes = cfg.grid_set.unwrap_or(201);
    let cnodes = cfg.ugrid_set.unwrap_or(201);
    let vg = Grid::uniform(region, &vec![vnodes; region.dim()])?;
    let cg = Grid::uniform(system.control_box(), &vec![cnodes; system.control_dim()])?;
    Ok((vg, cg))
}

pub fn write_text(cfg: &RunConfig, name: &str, text: &str) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out_path(name), text)?;
    Ok(())
}

pub fn write_json(cfg: &RunConfig, name: &str, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Compute(format!("json serialization: {e}")))?;
    write_text(cfg, name, &text)
}
