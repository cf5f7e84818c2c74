//! Turnpike diagnostics: Q-sets, the value/cost ratio bound `C` with its
//! decrease rate `kappa`, the threshold quantities `eta`, `beta*`,
//! `sigma(beta,K)`, `eps(beta,K)`, `theta(beta,K)`, Lyapunov decrease and
//! sublevel-invariance checks, and discount-factor scans.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dissipativity::ComparisonFunction;
use crate::dp::{rollout, value_iteration, CostKind, GriddedValueFunction, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{
    expand_model_spec, norm_diff, AxisBox, ControlSystem, DiscountedProblem, Equilibrium,
    ModelSpec, StorageFunction,
};

/// Times `k <= M` at which a trajectory is at least `epsilon` away from the
/// reference state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QSetResult {
    pub epsilon: f64,
    pub m: usize,
    pub indices: Vec<usize>,
}

impl QSetResult {
    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }
}

/// Exact index set `{ k in 0..=m : ||x(k) - x_ref|| >= epsilon }`.
pub fn q_set(traj: &Trajectory, x_ref: &[f64], epsilon: f64, m: usize) -> Result<QSetResult> {
    if epsilon <= 0.0 {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if traj.states.len() < m + 1 {
        return Err(Error::TrajectoryTooShort {
            len: traj.states.len(),
            required: m + 1,
        });
    }
    let indices = (0..=m)
        .filter(|&k| norm_diff(&traj.states[k], x_ref) >= epsilon)
        .collect();
    Ok(QSetResult {
        epsilon,
        m,
        indices,
    })
}

/// Ratio bound `V~(x) <= C inf_u l~(x,u)` estimated over an annulus
/// `theta_lo <= ||x - x_eq|| <= theta_hi`, with the induced decrease rate
/// `kappa = (1 - beta) - 1/C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CBoundReport {
    pub c: f64,
    pub beta: f64,
    /// `1/(1-beta)`; the bound is useful iff `c` stays below it.
    pub bound: f64,
    pub kappa: f64,
    pub satisfied: bool,
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Annulus nodes skipped because `inf_u l~` was not safely positive.
    pub excluded_nodes: usize,
}

/// Estimate `C` as the largest ratio of the rotated value to the control-grid
/// infimum of the rotated cost over the annulus nodes. Nodes whose infimum is
/// below `1e-12` are excluded and counted.
pub fn estimate_c(
    v_rot: &GriddedValueFunction,
    problem: &DiscountedProblem,
    eq: &Equilibrium,
    storage: &StorageFunction,
    control_grid: &Grid,
    theta_lo: f64,
    theta_hi: f64,
) -> Result<CBoundReport> {
    if !(theta_lo >= 0.0 && theta_hi > theta_lo) {
        return Err(Error::Region(format!(
            "invalid annulus [{theta_lo}, {theta_hi}]"
        )));
    }
    let system = problem.system();
    let controls: Vec<Vec<f64>> = control_grid.iter_nodes().collect();
    let stats: Vec<(f64, bool)> = (0..v_rot.grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let x = v_rot.grid.node(i);
            let dist = norm_diff(&x, &eq.x);
            if dist < theta_lo || dist > theta_hi {
                return None;
            }
            let inf = controls
                .iter()
                .filter(|u| {
                    system.joint_constraint(&x, u)
                        && system.state_box().contains(&system.dynamics(&x, u))
                })
                .map(|u| crate::model::rotated_cost_unchecked(problem, eq, storage, &x, u))
                .fold(f64::INFINITY, f64::min);
            if inf <= 1e-12 || !inf.is_finite() {
                Some((0.0, true))
            } else {
                Some((v_rot.values[i] / inf, false))
            }
        })
        .collect();
    if stats.is_empty() {
        return Err(Error::Region("annulus contains no grid nodes".into()));
    }
    let excluded_nodes = stats.iter().filter(|s| s.1).count();
    if excluded_nodes == stats.len() {
        return Err(Error::Region(
            "every annulus node was excluded (denominator not positive)".into(),
        ));
    }
    let c = stats
        .iter()
        .filter(|s| !s.1)
        .map(|s| s.0)
        .fold(1.0f64, f64::max);
    let beta = problem.beta();
    let bound = 1.0 / (1.0 - beta);
    let kappa = (1.0 - beta) - 1.0 / c;
    Ok(CBoundReport {
        c,
        beta,
        bound,
        kappa,
        satisfied: c < bound,
        theta_lo,
        theta_hi,
        excluded_nodes,
    })
}

/// Largest radius from the ladder `rho, rho/2, ..., rho/2^10` such that all
/// probed pairs with `||x - x_eq|| < eta` and `||u - u_eq|| < eta` map back
/// into the `rho`-ball around the equilibrium.
pub fn eta_from_continuity(
    system: &ControlSystem,
    eq: &Equilibrium,
    rho: f64,
    probe_per_axis: usize,
) -> Result<f64> {
    if rho <= 0.0 {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let sprobe = AxisBox::ball_box(&eq.x, rho)?
        .intersect(system.state_box())
        .ok_or_else(|| Error::Region("probe box does not meet the state box".into()))?;
    let cprobe = AxisBox::ball_box(&eq.u, rho)?
        .intersect(system.control_box())
        .ok_or_else(|| Error::Region("probe box does not meet the control box".into()))?;
    let sgrid = Grid::uniform(&sprobe, &vec![probe_per_axis.max(3); sprobe.dim()])?;
    let cgrid = Grid::uniform(&cprobe, &vec![probe_per_axis.max(3); cprobe.dim()])?;
    let mut states: Vec<Vec<f64>> = sgrid.iter_nodes().collect();
    let mut controls: Vec<Vec<f64>> = cgrid.iter_nodes().collect();
    states.push(eq.x.clone());
    controls.push(eq.u.clone());

    for j in 0..=10 {
        let eps = rho / f64::powi(2.0, j);
        let ok = states
            .iter()
            .filter(|x| norm_diff(x, &eq.x) < eps)
            .all(|x| {
                controls
                    .iter()
                    .filter(|u| norm_diff(u, &eq.u) < eps)
                    .filter(|u| system.joint_constraint(x, u))
                    .all(|u| norm_diff(&system.dynamics(x, u), &eq.x) < rho)
            });
        if ok {
            return Ok(eps.min(rho));
        }
    }
    Err(Error::ContinuityProbeFailed { rho })
}

/// Threshold discount factor `beta* = k/(k+1) · delta / (delta - l~_min)`.
/// `k = 1` reproduces the half-split value `delta / (2 (delta - l~_min))`.
pub fn beta_star(delta: f64, ell_tilde_min: f64, k_fraction: u32) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::Domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if ell_tilde_min > 0.0 {
        return Err(Error::Domain(format!(
            "ell_tilde_min must be nonpositive, got {ell_tilde_min}"
        )));
    }
    if k_fraction == 0 {
        return Err(Error::Domain("k_fraction must be at least 1".into()));
    }
    let k = k_fraction as f64;
    Ok(k / (k + 1.0) * delta / (delta - ell_tilde_min))
}

/// Stay bounds: `sigma`, the start-neighbourhood radius
/// `eps_stay` and the suboptimality threshold `theta_stay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StayBounds {
    pub sigma: f64,
    pub eps_stay: f64,
    pub theta_stay: f64,
}

/// `sigma = beta^K delta / (2 (1 - beta))`, `theta = sigma / 2`,
/// `eps = gamma^{-1}(sigma / 2)`.
pub fn sigma_eps_theta(
    beta: f64,
    big_k: usize,
    delta: f64,
    gamma: &ComparisonFunction,
) -> Result<StayBounds> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidBeta(beta));
    }
    if big_k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    if delta <= 0.0 {
        return Err(Error::Domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let sigma = beta.powi(big_k as i32) * delta / (2.0 * (1.0 - beta));
    let theta_stay = sigma / 2.0;
    let eps_stay = gamma.inverse(sigma / 2.0)?;
    Ok(StayBounds {
        sigma,
        eps_stay,
        theta_stay,
    })
}

/// Per-step residuals of the practical-Lyapunov decrease inequality
/// `V~(x(k+1)) - V~(x(k)) <= (kappa/beta) V~(x(k)) + delta / beta^{k+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCheck {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Interpolation slack `(bellman_residual + 3 omega) / beta`, where
    /// `omega` is the largest adjacent-node difference of the value table.
    pub slack: f64,
    pub kappa: f64,
}

/// Evaluate the decrease residuals of a rotated value table along a
/// trajectory with known suboptimality `delta` (0 for optimal rollouts).
pub fn lyapunov_decrease_check(
    v_rot: &GriddedValueFunction,
    problem: &DiscountedProblem,
    traj: &Trajectory,
    c: f64,
    delta: f64,
) -> Result<LyapunovCheck> {
    if traj.states.len() < 2 {
        return Err(Error::TrajectoryTooShort {
            len: traj.states.len(),
            required: 2,
        });
    }
    let beta = problem.beta();
    let kappa = (1.0 - beta) - 1.0 / c;
    let mut residuals = Vec::with_capacity(traj.states.len() - 1);
    let mut v_curr = v_rot.interpolate(&traj.states[0])?;
    for k in 0..traj.states.len() - 1 {
        let v_next = v_rot.interpolate(&traj.states[k + 1])?;
        let r = v_next - v_curr - (kappa / beta) * v_curr - delta / beta.powi(k as i32 + 1);
        residuals.push(r);
        v_curr = v_next;
    }
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let omega = v_rot.grid.max_adjacent_diff(&v_rot.values);
    let slack = (v_rot.bellman_residual + 3.0 * omega) / beta;
    Ok(LyapunovCheck {
        residuals,
        max_residual,
        slack,
        kappa,
    })
}

/// Outcome of a sublevel-set invariance check.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceCheck {
    pub invariant: bool,
    pub level: f64,
    pub checked_nodes: usize,
    /// First violating node with its successor value, if any.
    pub witness: Option<InvarianceWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceWitness {
    pub node: Vec<f64>,
    pub successor: Vec<f64>,
    pub successor_value: f64,
}

/// Check that the value level is invariant for the closed loop
/// `x -> f(x, policy(x))`: for every region node with `V~(x) < level`, the
/// successor must stay in the state box with interpolated value below
/// `level`.
pub fn sublevel_invariance_check(
    v_rot: &GriddedValueFunction,
    problem: &DiscountedProblem,
    policy: &Policy,
    region: &AxisBox,
    level: f64,
) -> Result<InvarianceCheck> {
    if level <= 0.0 {
        return Err(Error::Domain(format!(
            "level must be positive, got {level}"
        )));
    }
    let system = problem.system();
    let mut checked_nodes = 0usize;
    for idx in 0..v_rot.grid.len() {
        let x = v_rot.grid.node(idx);
        if !region.contains(&x) || v_rot.values[idx] >= level {
            continue;
        }
        checked_nodes += 1;
        let u = policy.control_at_node(idx);
        let successor = system.dynamics(&x, u);
        let ok = system.state_box().contains(&successor) && v_rot.interpolate(&successor)? < level;
        if !ok {
            let successor_value = v_rot.interpolate(&successor).unwrap_or(f64::INFINITY);
            return Ok(InvarianceCheck {
                invariant: false,
                level,
                checked_nodes,
                witness: Some(InvarianceWitness {
                    node: x,
                    successor,
                    successor_value,
                }),
            });
        }
    }
    Ok(InvarianceCheck {
        invariant: true,
        level,
        checked_nodes,
        witness: None,
    })
}

/// Largest level whose region-restricted sublevel set keeps one grid cell of
/// clearance from the region boundary: the minimum of `V~` over region nodes
/// within one cell of it.
pub fn largest_contained_level(v_rot: &GriddedValueFunction, region: &AxisBox) -> Result<f64> {
    let grid = &v_rot.grid;
    let mut level = f64::INFINITY;
    let mut seen = false;
    for idx in 0..grid.len() {
        let x = grid.node(idx);
        if !region.contains(&x) {
            continue;
        }
        let near_boundary = (0..region.dim()).any(|i| {
            let cell = grid.max_cell_width(i);
            x[i] - region.lo(i) <= cell || region.hi(i) - x[i] <= cell
        });
        if near_boundary {
            seen = true;
            level = level.min(v_rot.values[idx]);
        }
    }
    if !seen {
        return Err(Error::Region(
            "region contains no grid nodes near its boundary".into(),
        ));
    }
    Ok(level)
}

/// Terminal classification of a scanned trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalClass {
    /// Near the cost-minimal equilibrium.
    Global,
    /// Near some other equilibrium.
    Local,
    /// Near the state-box boundary.
    Boundary,
    /// None of the above.
    None,
}

impl TerminalClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalClass::Global => "global",
            TerminalClass::Local => "local",
            TerminalClass::Boundary => "boundary",
            TerminalClass::None => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanCell {
    pub beta: f64,
    pub x0: Vec<f64>,
    pub class: TerminalClass,
    pub terminal: Vec<f64>,
    /// Full state sequence of the classified rollout.
    pub states: Vec<Vec<f64>>,
}

/// Classification table of a `(beta, x0)` scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanTable {
    pub cells: Vec<ScanCell>,
    pub equilibria: Vec<Equilibrium>,
    pub class_tol: f64,
}

impl ScanTable {
    /// Largest scanned discount factor classified `local` from `x0`.
    pub fn empirical_beta2(&self, x0: &[f64]) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.x0 == x0 && c.class == TerminalClass::Local)
            .map(|c| c.beta)
            .fold(None, |acc, b| Some(acc.map_or(b, |a: f64| a.max(b))))
    }

    /// CSV matrix `beta,x0,class,terminal_x` (vector entries joined by `;`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,x0,class,terminal_x\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                cell.beta,
                join_vec(&cell.x0),
                cell.class.as_str(),
                join_vec(&cell.terminal)
            ));
        }
        out
    }
}

fn join_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Grid resolution and solver settings for scans.
#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub state_nodes: usize,
    pub control_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Distance below which a terminal state counts as "at" an equilibrium
    /// or the box boundary.
    pub class_tol: f64,
    pub horizon: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            state_nodes: 801,
            control_nodes: 601,
            tol: 1e-6,
            max_iter: 20_000,
            class_tol: 0.05,
            horizon: 30,
        }
    }
}

/// Classify a terminal state against cost-sorted equilibria and the box
/// boundary. Equilibrium classes additionally require evidence of approach
/// (distance clearly below tolerance or halved relative to the start).
pub fn classify_terminal(
    x0: &[f64],
    terminal: &[f64],
    equilibria: &[Equilibrium],
    state_box: &AxisBox,
    tol: f64,
) -> TerminalClass {
    let nearest = equilibria
        .iter()
        .enumerate()
        .map(|(i, e)| (i, norm_diff(terminal, &e.x), norm_diff(x0, &e.x)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((idx, dist, start_dist)) = nearest {
        // Proximity alone is not enough: a trajectory parked at a start value
        // that merely happens to lie near an equilibrium must not count as
        // converged. Require the distance to be clearly small or halved.
        let approached = dist <= tol / 5.0 || dist <= start_dist / 2.0;
        if dist <= tol && approached {
            return if idx == 0 {
                TerminalClass::Global
            } else {
                TerminalClass::Local
            };
        }
    }
    let boundary_dist = (0..state_box.dim())
        .map(|i| {
            (terminal[i] - state_box.lo(i))
                .abs()
                .min((terminal[i] - state_box.hi(i)).abs())
        })
        .fold(f64::INFINITY, f64::min);
    if boundary_dist <= tol {
        TerminalClass::Boundary
    } else {
        TerminalClass::None
    }
}

/// Solve a DP problem per discount factor, roll out from each start value and
/// classify the terminal behaviour against the cost-sorted equilibria.
pub fn beta_scan(
    spec: &ModelSpec,
    x0_list: &[Vec<f64>],
    beta_grid: &[f64],
    opts: &ScanOptions,
) -> Result<ScanTable> {
    let system = expand_model_spec(spec)?;
    let state_grid = Grid::uniform(
        system.state_box(),
        &vec![opts.state_nodes; system.state_dim()],
    )?;
    let control_grid = Grid::uniform(
        system.control_box(),
        &vec![opts.control_nodes; system.control_dim()],
    )?;
    let equilibria = crate::dissipativity::find_equilibria(
        &system,
        beta_grid.first().copied().unwrap_or(0.5),
        &state_grid,
        &control_grid,
        1e-8,
    )?
    .equilibria;

    let cells: Vec<Vec<ScanCell>> = beta_grid
        .par_iter()
        .map(|&beta| -> Result<Vec<ScanCell>> {
            let problem = DiscountedProblem::new(system.clone(), beta)?;
            let v = value_iteration(
                &problem,
                &state_grid,
                &control_grid,
                CostKind::Original,
                opts.tol,
                opts.max_iter,
            )?;
            x0_list
                .iter()
                .map(|x0| {
                    let traj = rollout(
                        &problem,
                        &v,
                        &control_grid,
                        CostKind::Original,
                        x0,
                        opts.horizon,
                        false,
                    )?;
                    let terminal = traj.final_state().to_vec();
                    let class = classify_terminal(
                        x0,
                        &terminal,
                        &equilibria,
                        system.state_box(),
                        opts.class_tol,
                    );
                    Ok(ScanCell {
                        beta,
                        x0: x0.clone(),
                        class,
                        terminal,
                        states: traj.states,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(ScanTable {
        cells: cells.into_iter().flatten().collect(),
        equilibria,
        class_tol: opts.class_tol,
    })
}

/// Aggregated threshold quantities with provenance labels per entry.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub beta: f64,
    pub rho: f64,
    pub eta: f64,
    /// `alpha_fit(eta)` from the dissipativity certificate.
    pub delta: f64,
    pub ell_tilde_min: f64,
    pub beta_star: f64,
    pub k_fraction: u32,
    /// `beta*` in the limit of an arbitrarily fine split.
    pub beta_star_limit: f64,
    pub big_k: usize,
    pub sigma: f64,
    pub eps_stay: f64,
    pub theta_stay: f64,
    pub storage_nu: Option<Vec<f64>>,
    pub provenance: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::evaluate_open_loop;
    use crate::model::expand_model_spec;

    fn straight_line_trajectory(points: &[f64]) -> Trajectory {
        Trajectory {
            states: points.iter().map(|&p| vec![p]).collect(),
            controls: vec![vec![0.0]; points.len() - 1],
            stage_costs: vec![0.0; points.len() - 1],
            discounted_partial_sums: vec![0.0; points.len()],
            rotated_stage_costs: None,
            rotated_partial_sums: None,
            exit_index: None,
        }
    }

    #[test]
    fn q_set_counts_excursions() {
        let constant = straight_line_trajectory(&[0.5; 12]);
        let q = q_set(&constant, &[0.5], 0.1, 10).unwrap();
        assert_eq!(q.cardinality(), 0);

        let mut pts = vec![0.0; 11];
        pts[3] = 1.0;
        let traj = straight_line_trajectory(&pts);
        let q = q_set(&traj, &[0.0], 0.5, 10).unwrap();
        assert_eq!(q.indices, vec![3]);

        assert!(matches!(
            q_set(&traj, &[0.0], 0.5, 20),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn q_set_monotonicity() {
        let pts: Vec<f64> = (0..40).map(|k| (0.3 * k as f64).sin()).collect();
        let traj = straight_line_trajectory(&pts);
        let mut last_card = usize::MAX;
        for eps in [0.1, 0.3, 0.5, 0.9] {
            let card = q_set(&traj, &[0.0], eps, 30).unwrap().cardinality();
            assert!(card <= last_card, "cardinality must shrink with eps");
            last_card = card;
        }
        let mut last_card = 0;
        for m in [5, 10, 20, 39] {
            let card = q_set(&traj, &[0.0], 0.5, m).unwrap().cardinality();
            assert!(card >= last_card, "cardinality must grow with m");
            last_card = card;
        }
    }

    #[test]
    fn estimate_c_jump_system() {
        // f = 0, l = x^2: the rotated value equals the rotated cost, so the
        // ratio is exactly 1 and kappa = -beta.
        let system = ControlSystem::new(
            |_, _| vec![0.0],
            |x, _| x[0] * x[0],
            AxisBox::interval(-1.0, 1.0),
            AxisBox::interval(-1.0, 1.0),
        );
        let beta = 0.7;
        let problem = DiscountedProblem::new(system, beta).unwrap();
        let eq = Equilibrium::new(problem.system(), vec![0.0], vec![0.0], beta, None).unwrap();
        let storage = StorageFunction::zero(vec![0.0], problem.system().state_box()).unwrap();
        let grid = Grid::uniform(problem.system().state_box(), &[201]).unwrap();
        let ugrid = Grid::uniform(problem.system().control_box(), &[5]).unwrap();
        let v = value_iteration(
            &problem,
            &grid,
            &ugrid,
            CostKind::Rotated {
                eq: &eq,
                storage: &storage,
            },
            1e-10,
            500,
        )
        .unwrap();
        let report = estimate_c(&v, &problem, &eq, &storage, &ugrid, 0.05, 1.0).unwrap();
        assert!((report.c - 1.0).abs() < 1e-6, "C = {}", report.c);
        assert!((report.kappa - (-beta)).abs() < 1e-6);
        assert!(report.satisfied);
        assert_eq!(report.satisfied, report.kappa < 0.0);
        assert_eq!(report.satisfied, report.c < 1.0 / (1.0 - beta));
    }

    #[test]
    fn estimate_c_rejects_empty_annulus() {
        let system = ControlSystem::new(
            |_, _| vec![0.0],
            |x, _| x[0] * x[0],
            AxisBox::interval(-1.0, 1.0),
            AxisBox::interval(-1.0, 1.0),
        );
        let problem = DiscountedProblem::new(system, 0.5).unwrap();
        let eq = Equilibrium::new(problem.system(), vec![0.0], vec![0.0], 0.5, None).unwrap();
        let storage = StorageFunction::zero(vec![0.0], problem.system().state_box()).unwrap();
        let grid = Grid::uniform(problem.system().state_box(), &[11]).unwrap();
        let ugrid = Grid::uniform(problem.system().control_box(), &[3]).unwrap();
        let v = GriddedValueFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            beta: 0.5,
            kind: crate::dp::ValueKind::Rotated,
            bellman_residual: 0.0,
        };
        assert!(matches!(
            estimate_c(&v, &problem, &eq, &storage, &ugrid, 5.0, 6.0),
            Err(Error::Region(_))
        ));
    }

    #[test]
    fn eta_ladder_examples() {
        // f = x + u: moves by at most eps, needs eps <= rho/2.
        let ex1 = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        let x_l = (3.0 - 905f64.sqrt()) / 32.0;
        let eq = Equilibrium::new(&ex1, vec![x_l], vec![0.0], 0.7, None).unwrap();
        let eta = eta_from_continuity(&ex1, &eq, 0.3, 21).unwrap();
        assert!((eta - 0.15).abs() < 1e-12, "eta = {eta}");

        // Control-free drift: the full rho verifies.
        let drift = ControlSystem::new(
            |x, _| vec![x[0]],
            |_, _| 0.0,
            AxisBox::interval(-2.0, 2.0),
            AxisBox::interval(-1.0, 1.0),
        );
        let eq = Equilibrium::new(&drift, vec![0.0], vec![0.0], 0.7, None).unwrap();
        let eta = eta_from_continuity(&drift, &eq, 0.3, 21).unwrap();
        assert!((eta - 0.3).abs() < 1e-12, "eta = {eta}");

        // f = 2x + u contracts only for eps <= rho/3; the ladder lands on rho/4.
        let ex3 = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        let eq = Equilibrium::new(&ex3, vec![0.0], vec![0.0], 0.7, None).unwrap();
        let eta = eta_from_continuity(&ex3, &eq, 0.5, 21).unwrap();
        assert!((eta - 0.125).abs() < 1e-12, "eta = {eta}");
    }

    #[test]
    fn beta_star_formulas() {
        assert!((beta_star(1.0, -1.0, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((beta_star(1.0, 0.0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((beta_star(1.0, 0.0, 1000).unwrap() - 1000.0 / 1001.0).abs() < 1e-12);
        let b1 = beta_star(1.0, -0.4154, 1).unwrap();
        assert!((b1 - 0.35326).abs() < 1e-4, "{b1}");
        let blim: f64 = 1.0 / (1.0 - (-0.4154f64));
        assert!((blim - 0.70652).abs() < 1e-4);
        assert!(matches!(beta_star(0.0, -1.0, 1), Err(Error::Domain(_))));
        assert!(matches!(beta_star(1.0, 0.5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_star_monotonicity() {
        // increasing in k and delta, decreasing in |l~_min|
        let mut prev = 0.0;
        for k in 1..=6 {
            let b = beta_star(1.0, -1.0, k).unwrap();
            assert!(b > prev);
            prev = b;
        }
        let mut prev = 0.0;
        for d in [0.5, 1.0, 2.0, 4.0] {
            let b = beta_star(d, -1.0, 1).unwrap();
            assert!(b > prev);
            prev = b;
        }
        let mut prev = 1.0;
        for lmin in [-0.1, -1.0, -10.0] {
            let b = beta_star(1.0, lmin, 1).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn sigma_eps_theta_formulas() {
        let identity = ComparisonFunction::linear(1.0, 1.0);
        let b = sigma_eps_theta(0.5, 1, 1.0, &identity).unwrap();
        assert!((b.sigma - 0.5).abs() < 1e-15);
        assert!((b.theta_stay - 0.25).abs() < 1e-15);
        assert!((b.eps_stay - 0.25).abs() < 1e-15);

        let b = sigma_eps_theta(0.7, 1, 1.0, &identity).unwrap();
        assert!((b.sigma - 0.7 / 0.6).abs() < 1e-12);
        assert!((b.theta_stay - 0.7 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn sigma_monotonicity() {
        let identity = ComparisonFunction::linear(1.0, 1.0);
        for k in [1usize, 3, 7] {
            let mut prev = 0.0;
            for b in [0.2, 0.4, 0.6, 0.8, 0.95] {
                let s = sigma_eps_theta(b, k, 1.0, &identity).unwrap().sigma;
                assert!(s > prev, "sigma must increase in beta (K={k})");
                prev = s;
            }
        }
        for b in [0.3, 0.6, 0.9] {
            let mut prev = f64::INFINITY;
            for k in [1usize, 2, 4, 8] {
                let s = sigma_eps_theta(b, k, 1.0, &identity).unwrap().sigma;
                assert!(s < prev, "sigma must decrease in K (beta={b})");
                prev = s;
            }
        }
    }

    #[test]
    fn lyapunov_trivial_cases() {
        // Constant cost makes the rotated cost vanish identically, so the
        // rotated value table is exactly zero and residuals are zero.
        let system = ControlSystem::new(
            |x, u| vec![0.5 * x[0] + 0.25 * u[0]],
            |_, _| 3.0,
            AxisBox::interval(-1.0, 1.0),
            AxisBox::interval(-1.0, 1.0),
        );
        let beta = 0.5;
        let problem = DiscountedProblem::new(system, beta).unwrap();
        let eq = Equilibrium::new(problem.system(), vec![0.0], vec![0.0], beta, None).unwrap();
        let storage = StorageFunction::zero(vec![0.0], problem.system().state_box()).unwrap();
        let grid = Grid::uniform(problem.system().state_box(), &[21]).unwrap();
        let ugrid = Grid::uniform(problem.system().control_box(), &[5]).unwrap();
        let kind = CostKind::Rotated {
            eq: &eq,
            storage: &storage,
        };
        let v = value_iteration(&problem, &grid, &ugrid, kind, 1e-12, 100).unwrap();
        let traj = evaluate_open_loop(&problem, &[0.0], &vec![vec![0.0]; 8], kind).unwrap();
        let check = lyapunov_decrease_check(&v, &problem, &traj, 2.0, 0.0).unwrap();
        assert!(check.max_residual <= 0.0);

        // A huge suboptimality budget dominates everything.
        let check = lyapunov_decrease_check(&v, &problem, &traj, 2.0, 1e6).unwrap();
        assert!(check.residuals.iter().all(|&r| r < 0.0));
    }

    #[test]
    fn sublevel_trivial_cases() {
        let system = ControlSystem::new(
            |x, u| vec![0.5 * x[0] + 0.1 * u[0]],
            |x, _| x[0] * x[0],
            AxisBox::interval(-1.0, 1.0),
            AxisBox::interval(-1.0, 1.0),
        );
        let beta = 0.6;
        let problem = DiscountedProblem::new(system, beta).unwrap();
        let grid = Grid::uniform(problem.system().state_box(), &[41]).unwrap();
        let ugrid = Grid::uniform(problem.system().control_box(), &[9]).unwrap();
        let v = value_iteration(&problem, &grid, &ugrid, CostKind::Original, 1e-10, 500).unwrap();
        let policy = crate::dp::extract_policy(&v, &problem, &ugrid, CostKind::Original).unwrap();
        let region = problem.system().state_box().clone();

        // Level below the smallest positive node value: vacuous or a single
        // cell around the minimum; invariant either way.
        let tiny = v
            .values
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min)
            / 2.0;
        let check = sublevel_invariance_check(&v, &problem, &policy, &region, tiny).unwrap();
        assert!(check.invariant);

        // Level above everything with the whole box as region: closed-loop
        // box invariance.
        let huge = v.values.iter().copied().fold(0.0f64, f64::max) + 1.0;
        let check = sublevel_invariance_check(&v, &problem, &policy, &region, huge).unwrap();
        assert!(check.invariant);
        assert_eq!(check.checked_nodes, grid.len());
    }

    #[test]
    fn scan_toy_classifications() {
        // Single global equilibrium at the origin; trajectories converge.
        let spec = ModelSpec::Polynomial {
            f_coeffs: vec![vec![
                crate::model::Monomial {
                    c: 1.0,
                    x: vec![1],
                    u: vec![0],
                },
                crate::model::Monomial {
                    c: 1.0,
                    x: vec![0],
                    u: vec![1],
                },
            ]],
            l_coeffs: vec![
                crate::model::Monomial {
                    c: 1.0,
                    x: vec![2],
                    u: vec![0],
                },
                crate::model::Monomial {
                    c: 1.0,
                    x: vec![0],
                    u: vec![2],
                },
            ],
            gamma: None,
            state_box: vec![[-1.0, 1.0]],
            control_box: vec![[-1.0, 1.0]],
        };
        let opts = ScanOptions {
            state_nodes: 101,
            control_nodes: 51,
            tol: 1e-6,
            max_iter: 5000,
            class_tol: 0.05,
            horizon: 25,
        };
        let table = beta_scan(&spec, &[vec![0.8], vec![-0.6]], &[0.5, 0.8], &opts).unwrap();
        assert_eq!(table.cells.len(), 4);
        for cell in &table.cells {
            assert_eq!(cell.class, TerminalClass::Global, "{cell:?}");
            assert!(cell.terminal[0].abs() <= 0.05);
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("beta,x0,class,terminal_x\n"));
        assert!(csv.contains("global"));
    }
}
