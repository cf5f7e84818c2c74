//! Run configuration: JSON config file mirroring the command-line flags,
//! with flags taking precedence, resolved into solver-ready objects.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use turnpike_core::{
    expand_model_spec, AxisBox, ControlSystem, DiscountedProblem, Equilibrium, Grid, ModelSpec,
    StorageFunction,
};

use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand. Unset values fall back to the config
/// file, then to defaults.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonOpts {
    /// Builtin example id (1, 2 or 3)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub example: Option<u8>,
    /// Discount factor in (0,1)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Discount-factor grid A:B:STEP (inclusive ends)
    #[arg(long, value_name = "A:B:STEP")]
    pub beta_grid: Option<String>,
    /// Control-penalty weight for example 2
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Start value(s), comma separated
    #[arg(long, value_name = "F[,F...]", allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// State-grid nodes per axis
    #[arg(long)]
    pub grid: Option<usize>,
    /// Control-grid nodes per axis
    #[arg(long)]
    pub ugrid: Option<usize>,
    /// Value-iteration fixed-point tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// Rollout / scan horizon (also the K of the stay bounds)
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Dissipativity neighbourhood radius
    #[arg(long)]
    pub rho: Option<f64>,
    /// Fraction index k of the beta* split
    #[arg(long)]
    pub k: Option<u32>,
    /// Storage function: "zero", "linear:v1[,v2..]" or "quadratic:c1[,c2..]"
    #[arg(long, value_name = "SPEC")]
    pub storage: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// JSON config file mirroring these flags
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

/// JSON mirror of the flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ugrid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Fully resolved run settings. Serialized into `meta.json` next to every
/// command's outputs for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelSpec,
    /// Raw --gamma value, when given (reproduce presets branch on it).
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub beta_grid: Option<Vec<f64>>,
    pub x0: Vec<Vec<f64>>,
    pub grid: usize,
    pub ugrid: usize,
    /// Explicitly requested node counts (None = defaulted); commands that do
    /// not solve DP (certificate verification) use their own 201 default.
    pub grid_set: Option<usize>,
    pub ugrid_set: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub horizon: usize,
    pub rho: f64,
    /// Whether rho was explicitly requested (region defaults differ).
    pub rho_set: bool,
    pub k: u32,
    pub storage: Option<String>,
    pub out: PathBuf,
    pub version: String,
}

impl RunConfig {
    /// Merge flags over the optional config file and fill defaults.
    pub fn resolve(command: &str, opts: &CommonOpts) -> CliResult<Self> {
        let file: ConfigFile = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("config schema: {e}")))?
            }
            None => ConfigFile::default(),
        };

        let example = opts.example.or(file.example);
        let gamma = opts.gamma.or(file.gamma);
        let model = match (example, &file.model) {
            (Some(1), _) => ModelSpec::BuiltinExample1,
            (Some(2), _) => ModelSpec::BuiltinExample2 {
                gamma: gamma.unwrap_or(10.0),
            },
            (Some(3), _) => ModelSpec::BuiltinExample3,
            (Some(n), _) => return Err(CliError::Config(format!("unknown example {n}"))),
            (None, Some(m)) => m.clone(),
            (None, None) => {
                return Err(CliError::Config(
                    "no model: pass --example {1,2,3} or a config file with a model".into(),
                ))
            }
        };

        let beta = opts.beta.or(file.beta);
        if let Some(b) = beta {
            if !(b > 0.0 && b < 1.0) {
                return Err(CliError::Config(format!(
                    "beta must lie strictly between 0 and 1, got {b}"
                )));
            }
        }
        let beta_grid = match opts.beta_grid.as_ref().or(file.beta_grid.as_ref()) {
            Some(s) => Some(parse_beta_grid(s)?),
            None => None,
        };

        let x0: Vec<Vec<f64>> = match (&opts.x0, &file.x0) {
            (Some(s), _) => parse_x0_list(s)?,
            (None, Some(list)) => list.iter().map(|&v| vec![v]).collect(),
            (None, None) => Vec::new(),
        };

        // Example 3 needs a fine default grid so that x0 = 0.004 is resolvable.
        let default_grid = match model {
            ModelSpec::BuiltinExample3 => 4001,
            _ => 801,
        };
        let grid_set = opts.grid.or(file.grid);
        let ugrid_set = opts.ugrid.or(file.ugrid);
        let grid = grid_set.unwrap_or(default_grid);
        let ugrid = ugrid_set.unwrap_or(601);
        if grid < 2 || ugrid < 2 {
            return Err(CliError::Config("grids need at least 2 nodes".into()));
        }
        let tol = opts.tol.or(file.tol).unwrap_or(1e-6);
        if tol <= 0.0 {
            return Err(CliError::Config(format!("tol must be positive, got {tol}")));
        }

        Ok(Self {
            command: command.to_string(),
            model,
            gamma,
            beta,
            beta_grid,
            x0,
            grid,
            ugrid,
            grid_set,
            ugrid_set,
            tol,
            max_iter: 100_000,
            horizon: opts.horizon.or(file.horizon).unwrap_or(30),
            rho: opts.rho.or(file.rho).unwrap_or(0.3),
            rho_set: opts.rho.or(file.rho).is_some(),
            k: opts.k.or(file.k).unwrap_or(1),
            storage: opts.storage.clone().or(file.storage),
            out: opts
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn system(&self) -> CliResult<ControlSystem> {
        expand_model_spec(&self.model).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn problem(&self) -> CliResult<DiscountedProblem> {
        let beta = self
            .beta
            .ok_or_else(|| CliError::Config("this command needs --beta".into()))?;
        Ok(DiscountedProblem::new(self.system()?, beta)?)
    }

    pub fn state_grid(&self, system: &ControlSystem) -> CliResult<Grid> {
        Ok(Grid::uniform(
            system.state_box(),
            &vec![self.grid; system.state_dim()],
        )?)
    }

    pub fn control_grid(&self, system: &ControlSystem) -> CliResult<Grid> {
        Ok(Grid::uniform(
            system.control_box(),
            &vec![self.ugrid; system.control_dim()],
        )?)
    }

    /// Parse the `--storage` spec anchored at an equilibrium.
    pub fn storage_from_spec(
        &self,
        spec: &str,
        eq: &Equilibrium,
        state_box: &AxisBox,
    ) -> CliResult<StorageFunction> {
        let (kind, rest) = match spec.split_once(':') {
            Some((k, r)) => (k, r),
            None => (spec, ""),
        };
        let coeffs: Vec<f64> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        CliError::Config(format!("bad storage coefficient {s:?}: {e}"))
                    })
                })
                .collect::<CliResult<_>>()?
        };
        let n = state_box.dim();
        let fill = |coeffs: Vec<f64>| -> CliResult<Vec<f64>> {
            if coeffs.len() == n {
                Ok(coeffs)
            } else if coeffs.len() == 1 {
                Ok(vec![coeffs[0]; n])
            } else {
                Err(CliError::Config(format!(
                    "storage needs 1 or {n} coefficients, got {}",
                    coeffs.len()
                )))
            }
        };
        let storage = match kind {
            "zero" => StorageFunction::zero(eq.x.clone(), state_box)?,
            "linear" => StorageFunction::linear(fill(coeffs)?, eq.x.clone(), state_box)?,
            "quadratic" => {
                StorageFunction::quadratic_diagonal(fill(coeffs)?, eq.x.clone(), state_box)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown storage kind {other:?} (expected zero, linear or quadratic)"
                )))
            }
        };
        Ok(storage)
    }

    /// Write `meta.json` with the fully resolved configuration.
    pub fn write_meta(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Compute(format!("meta serialization: {e}")))?;
        std::fs::write(self.out.join("meta.json"), text)?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn parse_beta_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "beta grid must be A:B:STEP, got {s:?}"
        )));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|e| CliError::Config(format!("beta grid start: {e}")))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|e| CliError::Config(format!("beta grid stop: {e}")))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|e| CliError::Config(format!("beta grid step: {e}")))?;
    if !(step > 0.0 && b >= a) {
        return Err(CliError::Config(format!("degenerate beta grid {s:?}")));
    }
    let n = ((b - a) / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| a + step * i as f64).collect();
    grid.retain(|&v| v > 0.0 && v < 1.0 && v <= b + step * 1e-9);
    if grid.is_empty() {
        return Err(CliError::Config(format!(
            "beta grid {s:?} contains no values in (0,1)"
        )));
    }
    Ok(grid)
}

fn parse_x0_list(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map(|v| vec![v])
                .map_err(|e| CliError::Config(format!("bad x0 value {p:?}: {e}")))
        })
        .collect()
}

/// Sanitize a float for use inside file names.
pub fn fname_num(v: f64) -> String {
    let mut s = format!("{v}");
    s = s.replace('-', "m").replace('.', "p");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_grid_parsing() {
        let g = parse_beta_grid("0.5:0.8:0.1").unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((g[3] - 0.8).abs() < 1e-12);
        assert!(parse_beta_grid("0.5:0.8").is_err());
        assert!(parse_beta_grid("0.8:0.5:0.1").is_err());
    }

    #[test]
    fn x0_parsing() {
        let xs = parse_x0_list("-0.8, 0.25,1").unwrap();
        assert_eq!(xs, vec![vec![-0.8], vec![0.25], vec![1.0]]);
        assert!(parse_x0_list("a,b").is_err());
    }
}
