//! Equilibrium search, linear storage synthesis from stationarity
//! conditions, grid verification of (local) discounted strict dissipativity,
//! and monotone-envelope fitting of comparison functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::model::{
    norm_diff, rotated_cost_unchecked, AxisBox, ControlSystem, DiscountedProblem, Equilibrium,
    StorageFunction,
};

/// Piecewise-linear class-K-infinity function: strictly increasing
/// breakpoints through the origin, extended linearly beyond the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFunction {
    rs: Vec<f64>,
    vs: Vec<f64>,
}

impl ComparisonFunction {
    /// Breakpoints `(r_j, v_j)` with `r_0 = 0 < r_1 < ...` and
    /// `0 = v_0 < v_1 < ...`.
    pub fn from_breakpoints(rs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        if rs.len() != vs.len() || rs.len() < 2 {
            return Err(Error::DegenerateFit(
                "need at least the origin and one positive breakpoint".into(),
            ));
        }
        if rs[0] != 0.0 || vs[0] != 0.0 {
            return Err(Error::DegenerateFit(
                "first breakpoint must be (0, 0)".into(),
            ));
        }
        if !rs.windows(2).all(|w| w[0] < w[1]) || !vs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::DegenerateFit(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { rs, vs })
    }

    /// Line through the origin.
    pub fn linear(slope: f64, r_max: f64) -> Self {
        Self {
            rs: vec![0.0, r_max],
            vs: vec![0.0, slope * r_max],
        }
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rs.iter().copied().zip(self.vs.iter().copied())
    }

    fn last_slope(&self) -> f64 {
        let j = self.rs.len() - 1;
        (self.vs[j] - self.vs[j - 1]) / (self.rs[j] - self.rs[j - 1])
    }

    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        let j = self.rs.len() - 1;
        if r >= self.rs[j] {
            return self.vs[j] + self.last_slope() * (r - self.rs[j]);
        }
        let k = self.rs.partition_point(|&p| p <= r);
        let (r0, r1) = (self.rs[k - 1], self.rs[k]);
        let (v0, v1) = (self.vs[k - 1], self.vs[k]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    /// Monotone inverse; errors for negative arguments.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if v < 0.0 {
            return Err(Error::Range(v));
        }
        let j = self.vs.len() - 1;
        if v >= self.vs[j] {
            return Ok(self.rs[j] + (v - self.vs[j]) / self.last_slope());
        }
        let k = self.vs.partition_point(|&p| p <= v);
        let (v0, v1) = (self.vs[k - 1], self.vs[k]);
        let (r0, r1) = (self.rs[k - 1], self.rs[k]);
        Ok(r0 + (r1 - r0) * (v - v0) / (v1 - v0))
    }
}

/// Breakpoint cap for envelopes fitted from dense grids. Thinning keeps the
/// one-sided bound property (see `fit_comparison_lower`/`_upper`).
const MAX_BREAKPOINTS: usize = 512;

/// Collapse samples to strictly increasing deviations, combining equal
/// deviations with `combine`.
fn unique_sorted(samples: &[(f64, f64)], combine: fn(f64, f64) -> f64) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (r, v) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 = combine(last.1, v),
            _ => out.push((r, v)),
        }
    }
    out
}

/// Merge deviations that differ only by float dust (relative width 1e-9).
/// For a lower bound the cluster collapses onto its largest deviation with
/// the minimal value; for an upper bound onto its smallest deviation with
/// the maximal value. Either way the one-sided bound is preserved exactly.
fn merge_dust(points: Vec<(f64, f64)>, lower: bool) -> Vec<(f64, f64)> {
    let r_max = points.last().map_or(0.0, |p| p.0);
    let tol = 1e-9 * (1.0 + r_max.abs());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    let mut cluster_start = f64::NEG_INFINITY;
    for (r, v) in points {
        match out.last_mut() {
            Some(last) if r - cluster_start <= tol => {
                if lower {
                    last.0 = r;
                    last.1 = last.1.min(v);
                } else {
                    last.1 = last.1.max(v);
                }
            }
            _ => {
                cluster_start = r;
                out.push((r, v));
            }
        }
    }
    out
}

/// Fit the monotone lower envelope of `(deviation, value)` samples as a
/// strictly increasing piecewise-linear function through the origin.
///
/// The envelope is `m(r) = min { v_i : r_i >= r }`, thinned conservatively
/// (values shifted one coarse step left, so the fit never rises above the
/// true envelope) and strictified by tilting flat runs downward by
/// `eps = m_min / r_max * 1e-3`. The result bounds every sample from below.
pub fn fit_comparison_lower(samples: &[(f64, f64)]) -> Result<ComparisonFunction> {
    for &(r, v) in samples {
        if v < 0.0 {
            return Err(Error::NotPositiveDefinite {
                deviation: r,
                value: v,
            });
        }
    }
    let merged = unique_sorted(samples, f64::min);
    let positive: Vec<(f64, f64)> = merged.into_iter().filter(|&(r, _)| r > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateFit(
            "no samples with positive deviation".into(),
        ));
    }
    // Right-to-left running minimum.
    let mut env = merge_dust(positive, true);
    for j in (0..env.len() - 1).rev() {
        env[j].1 = env[j].1.min(env[j + 1].1);
    }
    // Thin to at most MAX_BREAKPOINTS, shifting values one coarse step left:
    // the kept point (r_{k+1}, m(r_k)) lies below m on [r_k, r_{k+1}].
    let env: Vec<(f64, f64)> = if env.len() > MAX_BREAKPOINTS {
        let stride = env.len().div_ceil(MAX_BREAKPOINTS);
        let mut thin = Vec::with_capacity(MAX_BREAKPOINTS + 1);
        let mut prev_val = env[0].1;
        let mut k = stride;
        while k < env.len() {
            thin.push((env[k].0, prev_val.min(env[k].1)));
            prev_val = env[k].1;
            k += stride;
        }
        let last = *env.last().unwrap();
        if thin.last().map(|p| p.0) != Some(last.0) {
            thin.push((last.0, prev_val.min(last.1)));
        }
        thin
    } else {
        env
    };

    let r_max = env.last().unwrap().0;
    let m_min_pos = env
        .iter()
        .map(|&(_, v)| v)
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !m_min_pos.is_finite() {
        return Err(Error::DegenerateFit(
            "lower envelope vanishes at positive deviations".into(),
        ));
    }
    let eps = m_min_pos / r_max * 1e-3;
    // Tilt flat runs downward, keeping the rightmost value anchored. The
    // multiplicative term guarantees a representable strict decrease even
    // when eps * dr underflows against the value's magnitude.
    let mut vs: Vec<f64> = env.iter().map(|&(_, v)| v).collect();
    for j in (0..vs.len() - 1).rev() {
        let dr = env[j + 1].0 - env[j].0;
        let cap = (vs[j + 1] - eps * dr).min(vs[j + 1] * (1.0 - 1e-12));
        vs[j] = vs[j].min(cap);
    }
    if vs[0] <= 0.0 {
        return Err(Error::DegenerateFit(
            "lower envelope vanishes at positive deviations".into(),
        ));
    }
    let mut rs: Vec<f64> = env.iter().map(|&(r, _)| r).collect();
    rs.insert(0, 0.0);
    vs.insert(0, 0.0);
    ComparisonFunction::from_breakpoints(rs, vs)
}

/// Fit a strictly increasing upper envelope: the mirror of
/// [`fit_comparison_lower`], dominating every sample pointwise.
pub fn fit_comparison_upper(samples: &[(f64, f64)]) -> Result<ComparisonFunction> {
    for &(r, v) in samples {
        if v < 0.0 {
            return Err(Error::NotPositiveDefinite {
                deviation: r,
                value: v,
            });
        }
    }
    let merged = unique_sorted(samples, f64::max);
    let at_zero = merged
        .iter()
        .find(|&&(r, _)| r == 0.0)
        .map_or(0.0, |&(_, v)| v);
    let positive: Vec<(f64, f64)> = merged.into_iter().filter(|&(r, _)| r > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateFit(
            "no samples with positive deviation".into(),
        ));
    }
    if at_zero > 0.0 {
        return Err(Error::DegenerateFit(format!(
            "cannot dominate a positive value {at_zero} at deviation 0"
        )));
    }
    // Left-to-right running maximum.
    let mut env = merge_dust(positive, false);
    for j in 1..env.len() {
        env[j].1 = env[j].1.max(env[j - 1].1);
    }
    // Thin, shifting values one coarse step right (upper counterpart of the
    // lower thinning; the first breakpoint is always kept).
    let env: Vec<(f64, f64)> = if env.len() > MAX_BREAKPOINTS {
        let stride = env.len().div_ceil(MAX_BREAKPOINTS);
        let mut thin = Vec::with_capacity(MAX_BREAKPOINTS + 2);
        let mut k = 0;
        while k < env.len() {
            let next_val = env[(k + stride).min(env.len() - 1)].1;
            thin.push((env[k].0, env[k].1.max(next_val)));
            k += stride;
        }
        let last = *env.last().unwrap();
        if thin.last().map(|p| p.0) != Some(last.0) {
            thin.push(last);
        }
        thin
    } else {
        env
    };

    let r_max = env.last().unwrap().0;
    let m_max = env.last().unwrap().1;
    if m_max <= 0.0 {
        // All samples are zero; any strictly increasing function dominates.
        return ComparisonFunction::from_breakpoints(vec![0.0, r_max], vec![0.0, r_max]);
    }
    let m_min_pos = env
        .iter()
        .map(|&(_, v)| v)
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let eps = m_min_pos / r_max * 1e-3;
    let mut rs: Vec<f64> = env.iter().map(|&(r, _)| r).collect();
    let mut vs: Vec<f64> = env.iter().map(|&(_, v)| v).collect();
    // Tilt upward to enforce strict increase (multiplicative term as in the
    // lower fit, guarding against underflow of eps * dr).
    vs[0] = vs[0].max(eps * rs[0]);
    for j in 1..vs.len() {
        let dr = rs[j] - rs[j - 1];
        let floor = (vs[j - 1] + eps * dr).max(vs[j - 1] * (1.0 + 1e-12));
        vs[j] = vs[j].max(floor);
    }
    rs.insert(0, 0.0);
    vs.insert(0, 0.0);
    ComparisonFunction::from_breakpoints(rs, vs)
}

/// central finite-difference gradient with step `1e-6 (1 + |z_i|)`
fn fd_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; z.len()];
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-6 * (1.0 + z[i].abs());
        zp[i] = z[i] + h;
        let hi = f(&zp);
        zp[i] = z[i] - h;
        let lo = f(&zp);
        zp[i] = z[i];
        g[i] = (hi - lo) / (2.0 * h);
    }
    g
}

/// central finite-difference Jacobian (row-major `out_dim x z.len()`)
fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], out_dim: usize, h_rel: f64) -> Vec<f64> {
    let cols = z.len();
    let mut jac = vec![0.0; out_dim * cols];
    let mut zp = z.to_vec();
    for i in 0..cols {
        let h = h_rel * (1.0 + z[i].abs());
        zp[i] = z[i] + h;
        let hi = f(&zp);
        zp[i] = z[i] - h;
        let lo = f(&zp);
        zp[i] = z[i];
        for r in 0..out_dim {
            jac[r * cols + i] = (hi[r] - lo[r]) / (2.0 * h);
        }
    }
    jac
}

/// Result of the equilibrium scan: refined equilibria (cost-sorted) plus any
/// clusters where Newton refinement diverged.
#[derive(Debug, Clone)]
pub struct EquilibriumSearch {
    pub equilibria: Vec<Equilibrium>,
    pub unrefined: Vec<UnrefinedCluster>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnrefinedCluster {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub residual: f64,
}

/// KKT residual of stationarity of the stage cost on the fixed-point
/// manifold: `[f(x,u) - x; grad l + D(f - x)^T mu]` with `z = (x, u, mu)`.
fn kkt_residual(system: &ControlSystem, z: &[f64], n: usize, m: usize) -> Vec<f64> {
    let (x, rest) = z.split_at(n);
    let (u, mu) = rest.split_at(m);
    let image = system.dynamics(x, u);
    let mut res = Vec::with_capacity(2 * n + m);
    for i in 0..n {
        res.push(image[i] - x[i]);
    }
    let xu: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
    let grad = fd_gradient(|w| system.stage_cost(&w[..n], &w[n..]), &xu);
    // D = d(f(x,u) - x)/d(x,u), row-major n x (n+m)
    let jac = fd_jacobian(
        |w| {
            let mut im = system.dynamics(&w[..n], &w[n..]);
            for i in 0..n {
                im[i] -= w[i];
            }
            im
        },
        &xu,
        n,
        1e-6,
    );
    for c in 0..n + m {
        let mut s = grad[c];
        for r in 0..n {
            s += jac[r * (n + m) + c] * mu[r];
        }
        res.push(s);
    }
    res
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

type Seed = (f64, Vec<f64>, Vec<f64>);

/// Damped Newton refinement of a seed toward a KKT point. Returns the
/// refined `(x, u)` or `None` on divergence.
fn refine_seed(
    system: &ControlSystem,
    x0: &[f64],
    u0: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x0.len();
    let m = u0.len();
    let dim = 2 * n + m;
    // Initial multiplier from the stationarity rows alone.
    let xu: Vec<f64> = x0.iter().chain(u0.iter()).copied().collect();
    let grad = fd_gradient(|w| system.stage_cost(&w[..n], &w[n..]), &xu);
    let jac = fd_jacobian(
        |w| {
            let mut im = system.dynamics(&w[..n], &w[n..]);
            for i in 0..n {
                im[i] -= w[i];
            }
            im
        },
        &xu,
        n,
        1e-6,
    );
    // Least squares for mu: D^T mu = -grad.
    let mut dt = vec![0.0; (n + m) * n];
    for r in 0..n {
        for c in 0..n + m {
            dt[c * n + r] = jac[r * (n + m) + c];
        }
    }
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mu = linalg::least_squares(&dt, &rhs, n + m, n)
        .map(|(mu, _)| mu)
        .unwrap_or_else(|| vec![0.0; n]);

    let mut z: Vec<f64> = xu.iter().chain(mu.iter()).copied().collect();
    let mut res = kkt_residual(system, &z, n, m);
    for _ in 0..60 {
        let res_norm = inf_norm(&res);
        if res_norm <= tol {
            return Some((z[..n].to_vec(), z[n..n + m].to_vec()));
        }
        let jac = fd_jacobian(|w| kkt_residual(system, w, n, m), &z, dim, 1e-5);
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = linalg::solve(jac, rhs)?;
        // Backtracking line search on the residual norm.
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..8 {
            let trial: Vec<f64> = z.iter().zip(&step).map(|(zi, s)| zi + t * s).collect();
            let trial_res = kkt_residual(system, &trial, n, m);
            if inf_norm(&trial_res) < res_norm {
                z = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    if inf_norm(&res) <= tol {
        Some((z[..n].to_vec(), z[n..n + m].to_vec()))
    } else {
        None
    }
}

/// Scan the joint grid for near-fixed-points, refine each cluster by damped
/// Newton on the stationarity system, deduplicate and sort by stage cost.
pub fn find_equilibria(
    system: &ControlSystem,
    beta: f64,
    state_grid: &Grid,
    control_grid: &Grid,
    tol: f64,
) -> Result<EquilibriumSearch> {
    let cell = state_grid.max_cell_width_any() + control_grid.max_cell_width_any();
    let coarse_tol = (4.0 * cell).max(10.0 * tol);

    // Collect grid seeds with a small fixed-point residual.
    let nodes: Vec<Vec<f64>> = state_grid.iter_nodes().collect();
    let controls: Vec<Vec<f64>> = control_grid.iter_nodes().collect();
    let mut seeds: Vec<Seed> = nodes
        .par_iter()
        .flat_map_iter(|x| {
            controls.iter().filter_map(move |u| {
                if !system.joint_constraint(x, u) {
                    return None;
                }
                let image = system.dynamics(x, u);
                let residual = norm_diff(&image, x);
                (residual <= coarse_tol).then(|| (residual, x.clone(), u.clone()))
            })
        })
        .collect();
    if seeds.is_empty() {
        return Ok(EquilibriumSearch {
            equilibria: Vec::new(),
            unrefined: Vec::new(),
        });
    }
    // Greedy spatial bucketing: best-residual representatives first.
    seeds.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| lex_cmp(&a.1, &b.1))
            .then_with(|| lex_cmp(&a.2, &b.2))
    });
    let bucket_radius = 4.0 * cell;
    let mut reps: Vec<Seed> = Vec::new();
    for (res, x, u) in seeds {
        let far = reps
            .iter()
            .all(|(_, rx, ru)| norm_diff(&x, rx) + norm_diff(&u, ru) > bucket_radius);
        if far {
            reps.push((res, x, u));
        }
    }

    #[allow(clippy::type_complexity)]
    let refined: Vec<(Option<(Vec<f64>, Vec<f64>)>, Seed)> = reps
        .into_par_iter()
        .map(|rep| (refine_seed(system, &rep.1, &rep.2, tol), rep))
        .collect();

    let mut equilibria: Vec<Equilibrium> = Vec::new();
    let mut unrefined: Vec<UnrefinedCluster> = Vec::new();
    let dedup_radius = cell.max(100.0 * tol);
    for (result, (seed_res, sx, su)) in refined {
        match result {
            Some((x, u)) if system.joint_constraint(&x, &u) => {
                let dup = equilibria
                    .iter()
                    .any(|e| norm_diff(&e.x, &x) + norm_diff(&e.u, &u) <= dedup_radius);
                if !dup {
                    if let Ok(eq) = Equilibrium::new(system, x, u, beta, Some(tol)) {
                        equilibria.push(eq);
                    }
                }
            }
            _ => unrefined.push(UnrefinedCluster {
                x: sx,
                u: su,
                residual: seed_res,
            }),
        }
    }
    equilibria.sort_by(|a, b| {
        a.stage_cost_value
            .total_cmp(&b.stage_cost_value)
            .then_with(|| lex_cmp(&a.x, &b.x))
    });
    Ok(EquilibriumSearch {
        equilibria,
        unrefined,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (p, q) in a.iter().zip(b) {
        match p.total_cmp(q) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

pub const STORAGE_SYNTHESIS_TOL: f64 = 1e-6;

/// Synthesize a linear storage function `λ(x) = ν·(x - x_eq)` from the
/// equilibrium stationarity system
/// `grad_x l + ν (I - β df/dx) = 0`, `grad_u l - ν β df/du = 0`,
/// solved for `ν` in the least-squares sense with central finite
/// differences. Fails when the system is inconsistent beyond `tol`
/// (no linear storage fits; a hand-crafted one may be supplied instead).
pub fn synthesize_linear_storage(
    system: &ControlSystem,
    eq: &Equilibrium,
    beta: f64,
    tol: Option<f64>,
) -> Result<StorageFunction> {
    let tol = tol.unwrap_or(STORAGE_SYNTHESIS_TOL);
    let n = system.state_dim();
    let m = system.control_dim();
    let xu: Vec<f64> = eq.x.iter().chain(eq.u.iter()).copied().collect();
    let grad = fd_gradient(|w| system.stage_cost(&w[..n], &w[n..]), &xu);
    let jac = fd_jacobian(|w| system.dynamics(&w[..n], &w[n..]), &xu, n, 1e-6);

    // Rows 0..n:   (I - β A)^T ν = -grad_x l
    // Rows n..n+m: (β B)^T ν    =  grad_u l
    let rows = n + m;
    let mut mat = vec![0.0; rows * n];
    let mut rhs = vec![0.0; rows];
    for r in 0..n {
        for c in 0..n {
            let a_cr = jac[c * (n + m) + r]; // (A)_{c,r} = df_c/dx_r
            mat[r * n + c] = (if r == c { 1.0 } else { 0.0 }) - beta * a_cr;
        }
        rhs[r] = -grad[r];
    }
    for r in 0..m {
        for c in 0..n {
            let b_cr = jac[c * (n + m) + n + r]; // (B)_{c,r} = df_c/du_r
            mat[(n + r) * n + c] = beta * b_cr;
        }
        rhs[n + r] = grad[n + r];
    }
    let (mut nu, residual) = linalg::least_squares(&mat, &rhs, rows, n)
        .ok_or_else(|| Error::Domain("storage synthesis normal equations are singular".into()))?;
    if residual > tol {
        return Err(Error::StorageSynthesisFailed { residual, tol });
    }
    // Components below the synthesis tolerance are finite-difference noise;
    // carrying them into the storage tilts the rotated cost at the
    // equilibrium by -beta*nu*u and breaks its exact zero there.
    for v in &mut nu {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    StorageFunction::linear(nu, eq.x.clone(), system.state_box())
}

/// Which dissipativity inequality is being verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DissipativityVariant {
    #[serde(rename = "x-only")]
    XOnly,
    #[serde(rename = "x-u")]
    XU,
}

impl DissipativityVariant {
    fn deviation(&self, eq: &Equilibrium, x: &[f64], u: &[f64]) -> f64 {
        match self {
            DissipativityVariant::XOnly => norm_diff(x, &eq.x),
            DissipativityVariant::XU => norm_diff(x, &eq.x) + norm_diff(u, &eq.u),
        }
    }
}

/// A sample where the rotated cost fails strict positivity.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub value: f64,
}

const MAX_STORED_VIOLATIONS: usize = 1000;

/// Outcome of a grid dissipativity check.
#[derive(Debug, Clone)]
pub struct DissipativityReport {
    pub variant: DissipativityVariant,
    pub region: AxisBox,
    /// `min over the verification grid of (rotated cost - alpha(deviation))`.
    pub margin: f64,
    pub alpha_fit: ComparisonFunction,
    /// Witnesses of non-strictness: negative rotated cost, or a (numerical)
    /// zero at a deviation beyond one grid cell.
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    /// Infimum of the rotated cost over the whole admissible set, not just
    /// the verification region.
    pub ell_tilde_min: f64,
    pub accepted: bool,
}

impl DissipativityReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant,
            "region": { "lo": self.region.lower(), "hi": self.region.upper() },
            "margin": self.margin,
            "ell_tilde_min": self.ell_tilde_min,
            "alpha_breakpoints": self.alpha_fit.breakpoints().map(|(r, v)| [r, v]).collect::<Vec<_>>(),
            "violations": self.violations,
            "violation_count": self.violation_count,
            "accepted": self.accepted,
        })
    }
}

/// Verify (local) discounted strict dissipativity on a grid.
///
/// Evaluates the rotated cost over `verification_grid x control_grid`
/// (pairs violating the joint constraint or mapping outside the state box
/// are skipped), accepts iff it is nonnegative with zeros confined to one
/// grid cell around the deviation-zero set, and fits a class-K lower bound.
/// The infimum of the rotated cost over the whole admissible set is recorded
/// separately on an equally dense grid over the full state box.
pub fn verify_dissipativity(
    problem: &DiscountedProblem,
    eq: &Equilibrium,
    storage: &StorageFunction,
    region: &AxisBox,
    variant: DissipativityVariant,
    verification_grid: &Grid,
    control_grid: &Grid,
) -> Result<DissipativityReport> {
    let system = problem.system();
    let sbox = system.state_box();
    for i in 0..region.dim() {
        if region.lo(i) < sbox.lo(i) - 1e-12 || region.hi(i) > sbox.hi(i) + 1e-12 {
            return Err(Error::Region(
                "verification region must lie inside the state box".into(),
            ));
        }
    }
    if norm_diff(storage.anchor(), &eq.x) > 1e-9 {
        return Err(Error::Domain(
            "storage function must be anchored at the equilibrium".into(),
        ));
    }

    let dust_tol = 1e-9 * (1.0 + region.radius() + system.control_box().radius());
    let nodes: Vec<Vec<f64>> = verification_grid.iter_nodes().collect();
    let controls: Vec<Vec<f64>> = control_grid.iter_nodes().collect();
    let samples: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = nodes
        .par_iter()
        .flat_map_iter(|x| {
            controls.iter().filter_map(move |u| {
                if !system.joint_constraint(x, u) {
                    return None;
                }
                let image = system.dynamics(x, u);
                if !system.state_box().contains(&image) {
                    return None;
                }
                let value = rotated_cost_unchecked(problem, eq, storage, x, u);
                let deviation = variant.deviation(eq, x, u);
                // Deviations at float-dust scale are numerically "at" the
                // equilibrium (e.g. a Newton-refined anchor off by 1e-14).
                let deviation = if deviation <= dust_tol {
                    0.0
                } else {
                    deviation
                };
                Some((x.clone(), u.clone(), deviation, value))
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Region(
            "no admissible pairs on the verification grid".into(),
        ));
    }

    let scale = samples
        .iter()
        .map(|s| s.3.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let zero_tol = 1e-12 * scale;
    let cell_radius = verification_grid.max_cell_width_any()
        + match variant {
            DissipativityVariant::XOnly => 0.0,
            DissipativityVariant::XU => control_grid.max_cell_width_any(),
        };

    let mut violations = Vec::new();
    let mut violation_count = 0usize;
    for (x, u, deviation, value) in &samples {
        let negative = *value < -zero_tol;
        let flat_zero = *value <= zero_tol && *deviation > cell_radius;
        if negative || flat_zero {
            violation_count += 1;
            if violations.len() < MAX_STORED_VIOLATIONS {
                violations.push(Violation {
                    x: x.clone(),
                    u: u.clone(),
                    value: *value,
                });
            }
        }
    }
    let accepted = violation_count == 0;

    let fit_samples: Vec<(f64, f64)> = if accepted {
        samples.iter().map(|s| (s.2, s.3.max(0.0))).collect()
    } else {
        samples
            .iter()
            .filter(|s| s.3 > zero_tol)
            .map(|s| (s.2, s.3))
            .collect()
    };
    let alpha_fit = fit_comparison_lower(&fit_samples).unwrap_or_else(|_| {
        let r_max = samples.iter().map(|s| s.2).fold(0.0f64, f64::max).max(1.0);
        ComparisonFunction::linear(scale / r_max, r_max)
    });

    let margin = samples
        .iter()
        .map(|s| s.3 - alpha_fit.eval(s.2))
        .fold(f64::INFINITY, f64::min);

    // Global infimum of the rotated cost over the admissible set:
    // reuse the verification densities on the full state box.
    let counts: Vec<usize> = (0..sbox.dim())
        .map(|i| verification_grid.axis(i).len())
        .collect();
    let global_grid = Grid::uniform(sbox, &counts)?;
    let ell_tilde_min = global_grid
        .iter_nodes()
        .par_bridge()
        .map(|x| {
            controls
                .iter()
                .filter(|u| {
                    system.joint_constraint(&x, u)
                        && system.state_box().contains(&system.dynamics(&x, u))
                })
                .map(|u| rotated_cost_unchecked(problem, eq, storage, &x, u))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);

    Ok(DissipativityReport {
        variant,
        region: region.clone(),
        margin,
        alpha_fit,
        violations,
        violation_count,
        ell_tilde_min,
        accepted,
    })
}
