//! Grid dynamic programming: Bellman fixed-point solver with multilinear
//! interpolation, feedback-policy extraction, closed-loop rollouts and a
//! brute-force finite-horizon oracle for testing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{rotated_cost_unchecked, DiscountedProblem, Equilibrium, StorageFunction};

/// Which objective a value table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Original,
    Rotated,
}

/// Stage cost used by the solver: the problem's own cost, or the rotated
/// cost induced by an equilibrium/storage pair.
#[derive(Clone, Copy)]
pub enum CostKind<'a> {
    Original,
    Rotated {
        eq: &'a Equilibrium,
        storage: &'a StorageFunction,
    },
}

impl<'a> CostKind<'a> {
    pub fn value_kind(&self) -> ValueKind {
        match self {
            CostKind::Original => ValueKind::Original,
            CostKind::Rotated { .. } => ValueKind::Rotated,
        }
    }

    /// Stage cost of an (assumed admissible) pair.
    pub fn eval(&self, problem: &DiscountedProblem, x: &[f64], u: &[f64]) -> f64 {
        match self {
            CostKind::Original => problem.system().stage_cost(x, u),
            CostKind::Rotated { eq, storage } => rotated_cost_unchecked(problem, eq, storage, x, u),
        }
    }

    /// As [`CostKind::eval`] with the successor state already computed.
    fn eval_with_image(
        &self,
        problem: &DiscountedProblem,
        x: &[f64],
        u: &[f64],
        image: &[f64],
    ) -> f64 {
        match self {
            CostKind::Original => problem.system().stage_cost(x, u),
            CostKind::Rotated { eq, storage } => {
                problem.system().stage_cost(x, u) - eq.stage_cost_value + storage.eval(x)
                    - problem.beta() * storage.eval(image)
            }
        }
    }
}

/// Converged value table on a grid.
#[derive(Debug, Clone)]
pub struct GriddedValueFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub beta: f64,
    pub kind: ValueKind,
    /// Certified sup-norm bound on `||T V - V||` for the stored table.
    pub bellman_residual: f64,
}

impl GriddedValueFunction {
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, x)
    }
}

/// Feedback policy: one control vector per state-grid node.
#[derive(Debug, Clone)]
pub struct Policy {
    pub grid: Grid,
    pub controls: Vec<Vec<f64>>,
}

impl Policy {
    pub fn control_at_node(&self, idx: usize) -> &[f64] {
        &self.controls[idx]
    }

    /// Control of the node nearest to `x`.
    pub fn nearest_control(&self, x: &[f64]) -> &[f64] {
        &self.controls[self.grid.nearest_node(x)]
    }

    /// Componentwise multilinear interpolation of the control table.
    pub fn interpolated_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.controls.first().map_or(0, Vec::len);
        let mut u = Vec::with_capacity(m);
        for j in 0..m {
            let column: Vec<f64> = self.controls.iter().map(|c| c[j]).collect();
            u.push(self.grid.interpolate(&column, x)?);
        }
        Ok(u)
    }
}

/// State/control/cost sequences with discounted accumulators.
///
/// `discounted_partial_sums[k]` is the sum of the first `k` discounted stage
/// costs, so index 0 is always 0 and the last entry is the cost of the whole
/// recorded horizon. Rotated accumulators are present when the trajectory was
/// produced under a rotated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub discounted_partial_sums: Vec<f64>,
    pub rotated_stage_costs: Option<Vec<f64>>,
    pub rotated_partial_sums: Option<Vec<f64>>,
    /// Set when the rollout stopped early because no admissible control
    /// remained; holds the index of the last recorded state.
    pub exit_index: Option<usize>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// Discounted cost accumulated over the recorded horizon.
    pub fn total_cost(&self) -> f64 {
        *self.discounted_partial_sums.last().unwrap()
    }

    pub fn total_rotated_cost(&self) -> Option<f64> {
        self.rotated_partial_sums
            .as_ref()
            .map(|s| *s.last().unwrap())
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

struct TrajectoryRecorder<'a> {
    problem: &'a DiscountedProblem,
    rotated: Option<(&'a Equilibrium, &'a StorageFunction)>,
    traj: Trajectory,
    discount_pow: f64,
}

impl<'a> TrajectoryRecorder<'a> {
    fn new(
        problem: &'a DiscountedProblem,
        rotated: Option<(&'a Equilibrium, &'a StorageFunction)>,
        x0: Vec<f64>,
    ) -> Self {
        Self {
            problem,
            rotated,
            traj: Trajectory {
                states: vec![x0],
                controls: Vec::new(),
                stage_costs: Vec::new(),
                discounted_partial_sums: vec![0.0],
                rotated_stage_costs: rotated.map(|_| Vec::new()),
                rotated_partial_sums: rotated.map(|_| vec![0.0]),
                exit_index: None,
            },
            discount_pow: 1.0,
        }
    }

    /// Record one step from the current last state under control `u`.
    fn step(&mut self, u: Vec<f64>) {
        let x = self.traj.states.last().unwrap().clone();
        let next = self.problem.system().dynamics(&x, &u);
        let cost = self.problem.system().stage_cost(&x, &u);
        self.traj.stage_costs.push(cost);
        let prev = *self.traj.discounted_partial_sums.last().unwrap();
        self.traj
            .discounted_partial_sums
            .push(prev + self.discount_pow * cost);
        if let Some((eq, storage)) = self.rotated {
            let rc = rotated_cost_unchecked(self.problem, eq, storage, &x, &u);
            self.traj.rotated_stage_costs.as_mut().unwrap().push(rc);
            let sums = self.traj.rotated_partial_sums.as_mut().unwrap();
            let prev = *sums.last().unwrap();
            sums.push(prev + self.discount_pow * rc);
        }
        self.traj.controls.push(u);
        self.traj.states.push(next);
        self.discount_pow *= self.problem.beta();
    }

    fn finish(self) -> Trajectory {
        self.traj
    }
}

const PAIR_BUDGET: usize = 20_000_000;

/// One Bellman operator `T V(x) = min_u { cost(x,u) + β Interp(V)(f(x,u)) }`
/// over fixed state and control grids.
///
/// Pairs whose image leaves the state box (or that violate the joint
/// constraint) are excluded from the minimization. Construction fails with
/// [`Error::InfeasibleNode`] if some state node has no admissible control.
pub struct BellmanOperator<'a> {
    problem: &'a DiscountedProblem,
    grid: &'a Grid,
    control_grid: &'a Grid,
    cost_kind: CostKind<'a>,
    table: Option<SweepTable>,
    corner_offsets: Vec<usize>,
    corner_count: usize,
}

/// Precomputed per-pair data: stage cost (+inf for inadmissible pairs) and
/// the interpolation stencil of the successor state.
struct SweepTable {
    cost: Vec<f64>,
    base: Vec<u32>,
    frac: Vec<f64>,
}

fn corner_offsets(grid: &Grid) -> Vec<usize> {
    let dim = grid.dim();
    let mut strides = vec![1usize; dim];
    for i in (0..dim.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * grid.axis(i + 1).len();
    }
    (0..(1usize << dim))
        .map(|corner| {
            (0..dim)
                .map(|i| {
                    if (corner >> i) & 1 == 1 {
                        strides[i]
                    } else {
                        0
                    }
                })
                .sum()
        })
        .collect()
}

/// Cell base index and per-axis fractions of `point` (assumed inside).
fn locate_stencil(grid: &Grid, point: &[f64], frac_out: &mut [f64]) -> usize {
    let mut base = 0usize;
    for (i, frac) in frac_out.iter_mut().enumerate() {
        let nodes = grid.axis(i);
        let last = nodes.len() - 1;
        let j = nodes.partition_point(|&v| v <= point[i]);
        let cell = j.clamp(1, last) - 1;
        let t = (point[i] - nodes[cell]) / (nodes[cell + 1] - nodes[cell]);
        *frac = t.clamp(0.0, 1.0);
        base = base * nodes.len() + cell;
    }
    base
}

impl<'a> BellmanOperator<'a> {
    pub fn new(
        problem: &'a DiscountedProblem,
        grid: &'a Grid,
        control_grid: &'a Grid,
        cost_kind: CostKind<'a>,
    ) -> Result<Self> {
        let offsets = corner_offsets(grid);
        let pairs = grid.len() * control_grid.len();
        let dim = grid.dim();
        let mut op = Self {
            problem,
            grid,
            control_grid,
            cost_kind,
            table: None,
            corner_count: offsets.len(),
            corner_offsets: offsets,
        };

        if pairs <= PAIR_BUDGET {
            let nc = control_grid.len();
            let controls: Vec<Vec<f64>> = control_grid.iter_nodes().collect();
            let mut cost = vec![f64::INFINITY; pairs];
            let mut base = vec![0u32; pairs];
            let mut frac = vec![0.0f64; pairs * dim];
            cost.par_chunks_mut(nc)
                .zip(base.par_chunks_mut(nc))
                .zip(frac.par_chunks_mut(nc * dim))
                .enumerate()
                .for_each(|(node_idx, ((cost_row, base_row), frac_row))| {
                    let x = grid.node(node_idx);
                    let system = problem.system();
                    for (c, u) in controls.iter().enumerate() {
                        if !system.joint_constraint(&x, u) {
                            continue;
                        }
                        let image = system.dynamics(&x, u);
                        if !system.state_box().contains(&image) {
                            continue;
                        }
                        cost_row[c] = cost_kind.eval_with_image(problem, &x, u, &image);
                        base_row[c] =
                            locate_stencil(grid, &image, &mut frac_row[c * dim..(c + 1) * dim])
                                as u32;
                    }
                });
            // Every node must keep at least one admissible control.
            for node_idx in 0..grid.len() {
                if cost[node_idx * nc..(node_idx + 1) * nc]
                    .iter()
                    .all(|c| !c.is_finite())
                {
                    return Err(Error::InfeasibleNode {
                        index: node_idx,
                        coords: grid.node(node_idx),
                    });
                }
            }
            op.table = Some(SweepTable { cost, base, frac });
        } else {
            // Direct mode: verify feasibility once without storing the table.
            let infeasible: Option<usize> = (0..grid.len()).into_par_iter().find_first(|&i| {
                let x = grid.node(i);
                let system = problem.system();
                !control_grid.iter_nodes().any(|u| {
                    system.joint_constraint(&x, &u)
                        && system.state_box().contains(&system.dynamics(&x, &u))
                })
            });
            if let Some(index) = infeasible {
                return Err(Error::InfeasibleNode {
                    index,
                    coords: grid.node(index),
                });
            }
        }
        Ok(op)
    }

    fn interp_stencil(&self, values: &[f64], base: usize, frac: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let mut acc = 0.0;
        for corner in 0..self.corner_count {
            let mut w = 1.0;
            for (i, &t) in frac.iter().enumerate().take(dim) {
                w *= if (corner >> i) & 1 == 1 { t } else { 1.0 - t };
            }
            if w != 0.0 {
                acc += w * values[base + self.corner_offsets[corner]];
            }
        }
        acc
    }

    fn node_min(&self, node_idx: usize, values: &[f64]) -> (f64, usize) {
        let beta = self.problem.beta();
        let nc = self.control_grid.len();
        let dim = self.grid.dim();
        let mut best = f64::INFINITY;
        let mut best_c = 0usize;
        if let Some(table) = &self.table {
            let row = node_idx * nc;
            for c in 0..nc {
                let cost = table.cost[row + c];
                if !cost.is_finite() {
                    continue;
                }
                let p = row + c;
                let v = self.interp_stencil(values, table.base[p] as usize, &table.frac[p * dim..]);
                let candidate = cost + beta * v;
                if candidate < best {
                    best = candidate;
                    best_c = c;
                }
            }
        } else {
            let x = self.grid.node(node_idx);
            let system = self.problem.system();
            let mut frac = vec![0.0; dim];
            for (c, u) in self.control_grid.iter_nodes().enumerate() {
                if !system.joint_constraint(&x, &u) {
                    continue;
                }
                let image = system.dynamics(&x, &u);
                if !system.state_box().contains(&image) {
                    continue;
                }
                let cost = self.cost_kind.eval_with_image(self.problem, &x, &u, &image);
                let base = locate_stencil(self.grid, &image, &mut frac);
                let candidate = cost + beta * self.interp_stencil(values, base, &frac);
                if candidate < best {
                    best = candidate;
                    best_c = c;
                }
            }
        }
        (best, best_c)
    }

    /// Apply `T` once. The sweep is Jacobi-style: every node reads only the
    /// input table, so the result is independent of the worker count.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid.len());
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.node_min(i, values).0)
            .collect()
    }

    /// Apply `T` once, also returning the argmin control-grid index per node.
    /// Ties resolve to the lexicographically smallest control node.
    pub fn apply_with_argmin(&self, values: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let results: Vec<(f64, usize)> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.node_min(i, values))
            .collect();
        results.into_iter().unzip()
    }
}

/// Convenience wrapper: apply the Bellman operator once to `values`.
pub fn bellman_operator(
    problem: &DiscountedProblem,
    grid: &Grid,
    control_grid: &Grid,
    cost_kind: CostKind,
    values: &[f64],
) -> Result<Vec<f64>> {
    Ok(BellmanOperator::new(problem, grid, control_grid, cost_kind)?.apply(values))
}

/// Solve the discounted Bellman equation by value iteration.
///
/// Iterates `V_{k+1} = T V_k` from `V_0 = 0` until
/// `||V_{k+1} - V_k|| <= tol (1-β)/β`, which certifies that the returned
/// table lies within `tol` of the fixed point and carries a Bellman residual
/// of at most `β ||V_{k+1} - V_k|| <= tol (1-β)`.
pub fn value_iteration(
    problem: &DiscountedProblem,
    grid: &Grid,
    control_grid: &Grid,
    cost_kind: CostKind,
    tol: f64,
    max_iter: usize,
) -> Result<GriddedValueFunction> {
    value_iteration_logged(problem, grid, control_grid, cost_kind, tol, max_iter).map(|(v, _)| v)
}

/// Like [`value_iteration`] but also reports the number of sweeps performed.
pub fn value_iteration_logged(
    problem: &DiscountedProblem,
    grid: &Grid,
    control_grid: &Grid,
    cost_kind: CostKind,
    tol: f64,
    max_iter: usize,
) -> Result<(GriddedValueFunction, usize)> {
    if tol <= 0.0 {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let beta = problem.beta();
    let operator = BellmanOperator::new(problem, grid, control_grid, cost_kind)?;
    let stop = tol * (1.0 - beta) / beta;
    let mut values = vec![0.0; grid.len()];
    let mut last_diff = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = operator.apply(&values);
        last_diff = values
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if last_diff <= stop {
            return Ok((
                GriddedValueFunction {
                    grid: grid.clone(),
                    values,
                    beta,
                    kind: cost_kind.value_kind(),
                    bellman_residual: beta * last_diff,
                },
                iter,
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: beta * last_diff,
    })
}

/// Number of golden-section iterations for the optional 1D control refinement.
const GOLDEN_ITERS: usize = 48;

/// Minimize `g` over `[lo, hi]` by golden-section search (unimodal
/// assumption; inadmissible evaluations are +inf).
fn golden_section(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut ga = g(a);
    let mut gb = g(b);
    for _ in 0..GOLDEN_ITERS {
        if ga <= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - inv_phi * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + inv_phi * (hi - lo);
            gb = g(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    if g(mid) <= ga.min(gb) {
        mid
    } else if ga <= gb {
        a
    } else {
        b
    }
}

/// Bellman lookahead value of the pair `(x, u)`, or +inf when inadmissible.
fn lookahead(
    problem: &DiscountedProblem,
    v: &GriddedValueFunction,
    cost_kind: &CostKind,
    x: &[f64],
    u: &[f64],
) -> f64 {
    let system = problem.system();
    if !system.joint_constraint(x, u) {
        return f64::INFINITY;
    }
    let image = system.dynamics(x, u);
    if !system.state_box().contains(&image) {
        return f64::INFINITY;
    }
    let interp = v
        .grid
        .interpolate(&v.values, &image)
        .unwrap_or(f64::INFINITY);
    cost_kind.eval_with_image(problem, x, u, &image) + problem.beta() * interp
}

/// Argmin of the Bellman lookahead at an arbitrary state `x`, scanning the
/// control grid (lexicographic tie-break) with an optional golden-section
/// refinement for one-dimensional controls.
fn argmin_control(
    problem: &DiscountedProblem,
    v: &GriddedValueFunction,
    control_grid: &Grid,
    cost_kind: &CostKind,
    x: &[f64],
    refine: bool,
) -> Option<Vec<f64>> {
    let mut best = f64::INFINITY;
    let mut best_u: Option<Vec<f64>> = None;
    let mut best_idx = 0usize;
    for (c, u) in control_grid.iter_nodes().enumerate() {
        let candidate = lookahead(problem, v, cost_kind, x, &u);
        if candidate < best {
            best = candidate;
            best_u = Some(u);
            best_idx = c;
        }
    }
    let mut best_u = best_u?;
    if refine && control_grid.dim() == 1 {
        let nodes = control_grid.axis(0);
        let lo = nodes[best_idx.saturating_sub(1)];
        let hi = nodes[(best_idx + 1).min(nodes.len() - 1)];
        let refined = golden_section(lo, hi, |u| lookahead(problem, v, cost_kind, x, &[u]));
        if lookahead(problem, v, cost_kind, x, &[refined]) < best {
            best_u = vec![refined];
        }
    }
    Some(best_u)
}

/// Extract the greedy feedback policy of a converged value table.
pub fn extract_policy(
    v: &GriddedValueFunction,
    problem: &DiscountedProblem,
    control_grid: &Grid,
    cost_kind: CostKind,
) -> Result<Policy> {
    debug_assert_eq!(v.kind, cost_kind.value_kind());
    let operator = BellmanOperator::new(problem, &v.grid, control_grid, cost_kind)?;
    let (_, argmins) = operator.apply_with_argmin(&v.values);
    let controls = argmins.into_iter().map(|c| control_grid.node(c)).collect();
    Ok(Policy {
        grid: v.grid.clone(),
        controls,
    })
}

/// As [`extract_policy`] with one golden-section refinement per node
/// (one-dimensional controls only).
pub fn extract_policy_refined(
    v: &GriddedValueFunction,
    problem: &DiscountedProblem,
    control_grid: &Grid,
    cost_kind: CostKind,
) -> Result<Policy> {
    let controls: Vec<Vec<f64>> = (0..v.grid.len())
        .into_par_iter()
        .map(|i| {
            argmin_control(problem, v, control_grid, &cost_kind, &v.grid.node(i), true).ok_or(
                Error::InfeasibleNode {
                    index: i,
                    coords: v.grid.node(i),
                },
            )
        })
        .collect::<Result<_>>()?;
    Ok(Policy {
        grid: v.grid.clone(),
        controls,
    })
}

/// Control-lookup mode for closed-loop rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyLookup {
    /// Control of the nearest state-grid node.
    NearestNode,
    /// Componentwise multilinear interpolation of the control table.
    Interpolated,
}

/// Roll the closed loop out for `n` steps, re-solving the Bellman argmin at
/// the continuous state each step (avoids policy interpolation artifacts).
///
/// If some visited state admits no admissible control, the trajectory is
/// truncated there and `exit_index` records the last state index.
pub fn rollout(
    problem: &DiscountedProblem,
    v: &GriddedValueFunction,
    control_grid: &Grid,
    cost_kind: CostKind,
    x0: &[f64],
    n: usize,
    refine: bool,
) -> Result<Trajectory> {
    if !problem.system().state_box().contains(x0) {
        return Err(Error::OutOfGrid { point: x0.to_vec() });
    }
    let rotated = match cost_kind {
        CostKind::Original => None,
        CostKind::Rotated { eq, storage } => Some((eq, storage)),
    };
    let mut rec = TrajectoryRecorder::new(problem, rotated, x0.to_vec());
    for k in 0..n {
        let x = rec.traj.states.last().unwrap().clone();
        match argmin_control(problem, v, control_grid, &cost_kind, &x, refine) {
            Some(u) => rec.step(u),
            None => {
                rec.traj.exit_index = Some(k);
                break;
            }
        }
    }
    Ok(rec.finish())
}

/// Roll the closed loop out using a stored policy table.
pub fn rollout_with_policy(
    problem: &DiscountedProblem,
    policy: &Policy,
    lookup: PolicyLookup,
    x0: &[f64],
    n: usize,
    rotated: Option<(&Equilibrium, &StorageFunction)>,
) -> Result<Trajectory> {
    if !problem.system().state_box().contains(x0) {
        return Err(Error::OutOfGrid { point: x0.to_vec() });
    }
    let mut rec = TrajectoryRecorder::new(problem, rotated, x0.to_vec());
    for k in 0..n {
        let x = rec.traj.states.last().unwrap().clone();
        let u = match lookup {
            PolicyLookup::NearestNode => policy.nearest_control(&x).to_vec(),
            PolicyLookup::Interpolated => policy.interpolated_control(&x)?,
        };
        let system = problem.system();
        if !system.joint_constraint(&x, &u)
            || !system.state_box().contains(&system.dynamics(&x, &u))
        {
            rec.traj.exit_index = Some(k);
            break;
        }
        rec.step(u);
    }
    Ok(rec.finish())
}

/// Evaluate an open-loop control sequence, recording exact discounted sums.
pub fn evaluate_open_loop(
    problem: &DiscountedProblem,
    x0: &[f64],
    controls: &[Vec<f64>],
    cost_kind: CostKind,
) -> Result<Trajectory> {
    if !problem.system().state_box().contains(x0) {
        return Err(Error::OutOfGrid { point: x0.to_vec() });
    }
    let rotated = match cost_kind {
        CostKind::Original => None,
        CostKind::Rotated { eq, storage } => Some((eq, storage)),
    };
    let mut rec = TrajectoryRecorder::new(problem, rotated, x0.to_vec());
    for (k, u) in controls.iter().enumerate() {
        let x = rec.traj.states.last().unwrap().clone();
        let system = problem.system();
        if !system.joint_constraint(&x, u) || !system.state_box().contains(&system.dynamics(&x, u))
        {
            return Err(Error::InadmissibleAt { step: k });
        }
        rec.step(u.clone());
    }
    Ok(rec.finish())
}

/// Enclosure of the optimal value produced by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
    /// Minimal truncated discounted cost over all admissible sequences.
    pub truncated_min: f64,
    /// Geometric tail bound `β^K sup|l| / (1-β)`.
    pub tail_bound: f64,
}

impl ValueInterval {
    pub fn midpoint(&self) -> f64 {
        self.truncated_min
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

const ENUMERATION_BUDGET: f64 = 1e7;

/// Brute-force oracle: enumerate every admissible control sequence of length
/// `horizon` on the control grid and enclose the optimal value by the minimal
/// truncated cost plus/minus a geometric tail bound. Exact dynamics, no state
/// interpolation.
pub fn brute_force_value(
    problem: &DiscountedProblem,
    x0: &[f64],
    control_grid: &Grid,
    horizon: usize,
) -> Result<ValueInterval> {
    let nc = control_grid.len() as f64;
    let required = nc.powi(horizon as i32);
    if required > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            limit: ENUMERATION_BUDGET,
        });
    }
    if !problem.system().state_box().contains(x0) {
        return Err(Error::OutOfGrid { point: x0.to_vec() });
    }
    let system = problem.system();
    let beta = problem.beta();

    // sup |l| over a dense sample of the joint constraint set.
    let sup_cost = {
        let sbox = system.state_box();
        let cbox = system.control_box();
        let sgrid = Grid::uniform(sbox, &vec![101; sbox.dim()])?;
        let cgrid = Grid::uniform(cbox, &vec![101; cbox.dim()])?;
        let mut sup = 0.0f64;
        for x in sgrid.iter_nodes() {
            for u in cgrid.iter_nodes() {
                if system.joint_constraint(&x, &u) {
                    sup = sup.max(system.stage_cost(&x, &u).abs());
                }
            }
        }
        sup
    };
    let tail_bound = beta.powi(horizon as i32) * sup_cost / (1.0 - beta);

    let controls: Vec<Vec<f64>> = control_grid.iter_nodes().collect();
    let mut best = f64::INFINITY;
    // Depth-first over admissible prefixes.
    let mut stack: Vec<(Vec<f64>, f64, f64, usize)> = vec![(x0.to_vec(), 0.0, 1.0, 0)];
    while let Some((x, cost, pow, depth)) = stack.pop() {
        if depth == horizon {
            if cost < best {
                best = cost;
            }
            continue;
        }
        for u in &controls {
            if !system.joint_constraint(&x, u) {
                continue;
            }
            let image = system.dynamics(&x, u);
            if !system.state_box().contains(&image) {
                continue;
            }
            let c = cost + pow * system.stage_cost(&x, u);
            stack.push((image, c, pow * beta, depth + 1));
        }
    }
    if !best.is_finite() {
        return Err(Error::NoAdmissibleSequence { x0: x0.to_vec() });
    }
    Ok(ValueInterval {
        lo: best - tail_bound,
        hi: best + tail_bound,
        truncated_min: best,
        tail_bound,
    })
}
