//! Control systems, stage costs, constraint sets and the rotated-cost
//! transformation. Everything here is pure evaluation; solvers live in
//! [`crate::dp`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAX_DIM: usize = 3;

/// Axis-aligned box in R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Spec(format!(
                "box bounds must be nonempty and of equal length ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.len() > MAX_DIM {
            return Err(Error::Spec(format!(
                "dimension {} exceeds the supported envelope {MAX_DIM}",
                lo.len()
            )));
        }
        for i in 0..lo.len() {
            if lo[i] >= hi[i] || lo[i].is_nan() || hi[i].is_nan() {
                return Err(Error::Spec(format!(
                    "box axis {i} is degenerate: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// 1D convenience constructor.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::new(vec![lo], vec![hi]).expect("interval bounds")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.lo[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.hi[i]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && (0..self.dim()).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    /// Intersection of two boxes; `None` when empty.
    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let lo: Vec<f64> = (0..self.dim())
            .map(|i| self.lo[i].max(other.lo[i]))
            .collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|i| self.hi[i].min(other.hi[i]))
            .collect();
        AxisBox::new(lo, hi).ok()
    }

    /// Box `[c - r, c + r]` around a center point.
    pub fn ball_box(center: &[f64], r: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - r).collect(),
            center.iter().map(|c| c + r).collect(),
        )
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    /// Half of the largest edge length.
    pub fn radius(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.hi[i] - self.lo[i]) / 2.0)
            .fold(0.0, f64::max)
    }
}

type DynamicsFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type CostFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type ConstraintFn = dyn Fn(&[f64], &[f64]) -> bool + Send + Sync;

/// Problem data: dynamics `f`, stage cost, and the constraint sets
/// `X` (state box), `U` (control box) and `Y` (joint predicate, defaulting
/// to the product box).
#[derive(Clone)]
pub struct ControlSystem {
    dynamics: Arc<DynamicsFn>,
    stage_cost: Arc<CostFn>,
    state_box: AxisBox,
    control_box: AxisBox,
    joint_constraint: Option<Arc<ConstraintFn>>,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("state_box", &self.state_box)
            .field("control_box", &self.control_box)
            .field("joint_constraint", &self.joint_constraint.is_some())
            .finish()
    }
}

impl ControlSystem {
    pub fn new(
        dynamics: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        stage_cost: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        state_box: AxisBox,
        control_box: AxisBox,
    ) -> Self {
        Self {
            dynamics: Arc::new(dynamics),
            stage_cost: Arc::new(stage_cost),
            state_box,
            control_box,
            joint_constraint: None,
        }
    }

    /// Replace the default product-box constraint with a joint predicate.
    /// The predicate is intersected with the boxes, preserving the invariant
    /// that `Y ⊆ X × U`.
    pub fn with_joint_constraint(
        mut self,
        constraint: impl Fn(&[f64], &[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.joint_constraint = Some(Arc::new(constraint));
        self
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.dynamics)(x, u)
    }

    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.stage_cost)(x, u)
    }

    pub fn state_box(&self) -> &AxisBox {
        &self.state_box
    }

    pub fn control_box(&self) -> &AxisBox {
        &self.control_box
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_box.dim()
    }

    /// Membership in the joint constraint set `Y`.
    pub fn joint_constraint(&self, x: &[f64], u: &[f64]) -> bool {
        self.state_box.contains(x)
            && self.control_box.contains(u)
            && self.joint_constraint.as_ref().is_none_or(|c| c(x, u))
    }
}

/// `true` iff `(x, u) ∈ Y` and `f(x, u)` stays in the state box.
pub fn check_admissible(system: &ControlSystem, x: &[f64], u: &[f64]) -> bool {
    system.joint_constraint(x, u) && system.state_box().contains(&system.dynamics(x, u))
}

/// One term `c · Π x_i^{p_i} · Π u_j^{q_j}` of a polynomial expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub c: f64,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub u: Vec<u32>,
}

impl Monomial {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut v = self.c;
        for (xi, &p) in x.iter().zip(&self.x) {
            v *= xi.powi(p as i32);
        }
        for (uj, &q) in u.iter().zip(&self.u) {
            v *= uj.powi(q as i32);
        }
        v
    }
}

/// Serializable model description for the CLI and config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `f = x + u`, quartic double-well stage cost, `U = [-0.75, 0.75]`.
    #[serde(rename = "builtin-example-1")]
    BuiltinExample1,
    /// Example 1 plus a `gamma·|u|` control penalty.
    #[serde(rename = "builtin-example-2")]
    BuiltinExample2 { gamma: f64 },
    /// `f = 2x + u`, `l = -x^2/2 + u^2`, `X = [-1,1]`, `U = [-3,3]`.
    #[serde(rename = "builtin-example-3")]
    BuiltinExample3,
    /// Free-form polynomial dynamics and cost, plus an optional `gamma·|u|` term.
    Polynomial {
        f_coeffs: Vec<Vec<Monomial>>,
        l_coeffs: Vec<Monomial>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        state_box: Vec<[f64; 2]>,
        control_box: Vec<[f64; 2]>,
    },
}

fn quartic_cost(x: f64) -> f64 {
    x.powi(4) - 0.25 * x.powi(3) - 1.75 * x * x
}

/// Expand a model description into a concrete [`ControlSystem`].
pub fn expand_model_spec(spec: &ModelSpec) -> Result<ControlSystem> {
    match spec {
        ModelSpec::BuiltinExample1 => Ok(ControlSystem::new(
            |x, u| vec![x[0] + u[0]],
            |x, _| quartic_cost(x[0]),
            AxisBox::interval(-2.0, 2.0),
            AxisBox::interval(-0.75, 0.75),
        )),
        ModelSpec::BuiltinExample2 { gamma } => {
            let g = *gamma;
            Ok(ControlSystem::new(
                |x, u| vec![x[0] + u[0]],
                move |x, u| quartic_cost(x[0]) + g * u[0].abs(),
                AxisBox::interval(-2.0, 2.0),
                AxisBox::interval(-0.75, 0.75),
            ))
        }
        ModelSpec::BuiltinExample3 => Ok(ControlSystem::new(
            |x, u| vec![2.0 * x[0] + u[0]],
            |x, u| -0.5 * x[0] * x[0] + u[0] * u[0],
            AxisBox::interval(-1.0, 1.0),
            AxisBox::interval(-3.0, 3.0),
        )),
        ModelSpec::Polynomial {
            f_coeffs,
            l_coeffs,
            gamma,
            state_box,
            control_box,
        } => {
            let sbox = box_from_pairs(state_box, "state_box")?;
            let cbox = box_from_pairs(control_box, "control_box")?;
            let n = sbox.dim();
            let m = cbox.dim();
            if f_coeffs.len() != n {
                return Err(Error::Spec(format!(
                    "f_coeffs has {} components but the state box is {n}-dimensional",
                    f_coeffs.len()
                )));
            }
            for mono in f_coeffs.iter().flatten().chain(l_coeffs.iter()) {
                check_monomial(mono, n, m)?;
            }
            if gamma.is_some() && m != 1 {
                return Err(Error::Spec(
                    "the gamma·|u| term requires a one-dimensional control".into(),
                ));
            }
            let f_terms = f_coeffs.clone();
            let l_terms = l_coeffs.clone();
            let g = *gamma;
            Ok(ControlSystem::new(
                move |x, u| {
                    f_terms
                        .iter()
                        .map(|terms| terms.iter().map(|t| t.eval(x, u)).sum())
                        .collect()
                },
                move |x, u| {
                    let poly: f64 = l_terms.iter().map(|t| t.eval(x, u)).sum();
                    poly + g.map_or(0.0, |g| g * u[0].abs())
                },
                sbox,
                cbox,
            ))
        }
    }
}

fn box_from_pairs(pairs: &[[f64; 2]], what: &str) -> Result<AxisBox> {
    if pairs.is_empty() {
        return Err(Error::Spec(format!("{what} must not be empty")));
    }
    AxisBox::new(
        pairs.iter().map(|p| p[0]).collect(),
        pairs.iter().map(|p| p[1]).collect(),
    )
}

fn check_monomial(mono: &Monomial, n: usize, m: usize) -> Result<()> {
    if mono.x.len() != n || mono.u.len() != m {
        return Err(Error::Spec(format!(
            "monomial power vectors must have lengths {n} (x) and {m} (u), got {} and {}",
            mono.x.len(),
            mono.u.len()
        )));
    }
    if !mono.c.is_finite() {
        return Err(Error::Spec("monomial coefficient must be finite".into()));
    }
    Ok(())
}

/// Discounted infinite-horizon problem: a system plus a discount factor.
#[derive(Debug, Clone)]
pub struct DiscountedProblem {
    system: ControlSystem,
    beta: f64,
}

impl DiscountedProblem {
    pub fn new(system: ControlSystem, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidBeta(beta));
        }
        Ok(Self { system, beta })
    }

    pub fn system(&self) -> &ControlSystem {
        &self.system
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// A fixed point `f(x, u) = x` of the dynamics together with its stage cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub beta: f64,
    pub stage_cost_value: f64,
    pub residual: f64,
}

impl Equilibrium {
    /// Validates the fixed-point residual (against `tol`, default
    /// [`EQUILIBRIUM_TOL`]) and joint admissibility.
    pub fn new(
        system: &ControlSystem,
        x: Vec<f64>,
        u: Vec<f64>,
        beta: f64,
        tol: Option<f64>,
    ) -> Result<Self> {
        let tol = tol.unwrap_or(EQUILIBRIUM_TOL);
        if !system.joint_constraint(&x, &u) {
            return Err(Error::ConstraintViolation { x, u });
        }
        let image = system.dynamics(&x, &u);
        let residual = norm_diff(&image, &x);
        if residual > tol {
            return Err(Error::EquilibriumResidual { residual, tol });
        }
        let stage_cost_value = system.stage_cost(&x, &u);
        Ok(Self {
            x,
            u,
            beta,
            stage_cost_value,
            residual,
        })
    }
}

/// Euclidean norm of `a - b`.
pub fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Storage function shapes supported by the certificate machinery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StorageForm {
    /// `λ(x) = ν · (x - anchor)`
    Linear { nu: Vec<f64>, anchor: Vec<f64> },
    /// `λ(x) = Σ c_i (x_i - anchor_i)^2`
    QuadraticDiagonal { coeffs: Vec<f64>, anchor: Vec<f64> },
    /// Node table with multilinear interpolation, shifted to vanish at the anchor.
    Tabulated {
        grid: Grid,
        values: Vec<f64>,
        anchor: Vec<f64>,
    },
}

/// Storage function `λ`, bounded below on the state box, with `λ(anchor) = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageFunction {
    form: StorageForm,
    lower_bound: f64,
}

impl StorageFunction {
    pub fn linear(nu: Vec<f64>, anchor: Vec<f64>, state_box: &AxisBox) -> Result<Self> {
        if nu.len() != anchor.len() || nu.len() != state_box.dim() {
            return Err(Error::Spec(
                "storage coefficient and anchor dimensions must match the state box".into(),
            ));
        }
        // A linear function attains its box minimum at a corner.
        let lower_bound = (0..nu.len())
            .map(|i| {
                let a = nu[i] * (state_box.lo(i) - anchor[i]);
                let b = nu[i] * (state_box.hi(i) - anchor[i]);
                a.min(b)
            })
            .sum();
        Ok(Self {
            form: StorageForm::Linear { nu, anchor },
            lower_bound,
        })
    }

    pub fn zero(anchor: Vec<f64>, state_box: &AxisBox) -> Result<Self> {
        let nu = vec![0.0; anchor.len()];
        Self::linear(nu, anchor, state_box)
    }

    pub fn quadratic_diagonal(
        coeffs: Vec<f64>,
        anchor: Vec<f64>,
        state_box: &AxisBox,
    ) -> Result<Self> {
        if coeffs.len() != anchor.len() || coeffs.len() != state_box.dim() {
            return Err(Error::Spec(
                "storage coefficient and anchor dimensions must match the state box".into(),
            ));
        }
        // Per-axis minimum of c (t - a)^2 over [lo, hi]: endpoint for c < 0,
        // the vertex (or nearest endpoint) for c >= 0.
        let lower_bound = (0..coeffs.len())
            .map(|i| {
                let (lo, hi) = (state_box.lo(i), state_box.hi(i));
                let at = |t: f64| coeffs[i] * (t - anchor[i]) * (t - anchor[i]);
                if coeffs[i] >= 0.0 {
                    if anchor[i] >= lo && anchor[i] <= hi {
                        0.0
                    } else {
                        at(lo).min(at(hi))
                    }
                } else {
                    at(lo).min(at(hi))
                }
            })
            .sum();
        Ok(Self {
            form: StorageForm::QuadraticDiagonal { coeffs, anchor },
            lower_bound,
        })
    }

    pub fn tabulated(grid: Grid, values: Vec<f64>, anchor: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Spec(
                "tabulated storage needs one value per grid node".into(),
            ));
        }
        if !grid.contains(&anchor) {
            return Err(Error::OutOfGrid { point: anchor });
        }
        let shift = grid.interpolate(&values, &anchor)?;
        // The multilinear interpolant attains its extrema at nodes.
        let lower_bound = values.iter().fold(f64::INFINITY, |a, &v| a.min(v)) - shift;
        Ok(Self {
            form: StorageForm::Tabulated {
                grid,
                values,
                anchor,
            },
            lower_bound,
        })
    }

    pub fn form(&self) -> &StorageForm {
        &self.form
    }

    /// Certified infimum of `λ` over the state box.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn anchor(&self) -> &[f64] {
        match &self.form {
            StorageForm::Linear { anchor, .. }
            | StorageForm::QuadraticDiagonal { anchor, .. }
            | StorageForm::Tabulated { anchor, .. } => anchor,
        }
    }

    /// Evaluate `λ(x)`. Exactly `0.0` at the anchor for every form.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.form {
            StorageForm::Linear { nu, anchor } => nu
                .iter()
                .zip(x.iter().zip(anchor))
                .map(|(n, (xi, a))| n * (xi - a))
                .sum(),
            StorageForm::QuadraticDiagonal { coeffs, anchor } => coeffs
                .iter()
                .zip(x.iter().zip(anchor))
                .map(|(c, (xi, a))| c * (xi - a) * (xi - a))
                .sum(),
            StorageForm::Tabulated {
                grid,
                values,
                anchor,
            } => {
                let shift = grid
                    .interpolate(values, anchor)
                    .expect("anchor inside grid");
                if x == anchor.as_slice() {
                    return 0.0;
                }
                grid.interpolate(values, x).map_or(f64::NAN, |v| v - shift)
            }
        }
    }
}

/// Rotated stage cost
/// `l~(x,u) = l(x,u) - l(x_eq,u_eq) + λ(x) - β λ(f(x,u))`.
///
/// Errors when `(x,u)` violates the joint constraint or when `f(x,u)` leaves
/// the state box.
pub fn evaluate_rotated_cost(
    problem: &DiscountedProblem,
    eq: &Equilibrium,
    storage: &StorageFunction,
    x: &[f64],
    u: &[f64],
) -> Result<f64> {
    let system = problem.system();
    if !system.joint_constraint(x, u) {
        return Err(Error::ConstraintViolation {
            x: x.to_vec(),
            u: u.to_vec(),
        });
    }
    let image = system.dynamics(x, u);
    if !system.state_box().contains(&image) {
        return Err(Error::ImageOutOfDomain {
            x: x.to_vec(),
            u: u.to_vec(),
            image,
        });
    }
    Ok(rotated_cost_unchecked(problem, eq, storage, x, u))
}

/// As [`evaluate_rotated_cost`] but without the admissibility checks;
/// used in solver inner loops that filter pairs beforehand.
pub fn rotated_cost_unchecked(
    problem: &DiscountedProblem,
    eq: &Equilibrium,
    storage: &StorageFunction,
    x: &[f64],
    u: &[f64],
) -> f64 {
    let system = problem.system();
    let image = system.dynamics(x, u);
    system.stage_cost(x, u) - eq.stage_cost_value + storage.eval(x)
        - problem.beta() * storage.eval(&image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example3_problem(beta: f64) -> DiscountedProblem {
        let system = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        DiscountedProblem::new(system, beta).unwrap()
    }

    fn example3_certificate(beta: f64) -> (DiscountedProblem, Equilibrium, StorageFunction) {
        let problem = example3_problem(beta);
        let eq = Equilibrium::new(problem.system(), vec![0.0], vec![0.0], beta, None).unwrap();
        let storage = StorageFunction::quadratic_diagonal(
            vec![-1.0],
            vec![0.0],
            problem.system().state_box(),
        )
        .unwrap();
        (problem, eq, storage)
    }

    #[test]
    fn rotated_cost_example3_point() {
        let (problem, eq, storage) = example3_certificate(0.7);
        let v = evaluate_rotated_cost(&problem, &eq, &storage, &[1.0], &[-3.0]).unwrap();
        assert!((v - 8.2).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rotated_cost_vanishes_at_equilibrium() {
        let (problem, eq, storage) = example3_certificate(0.7);
        let v = evaluate_rotated_cost(&problem, &eq, &storage, &eq.x, &eq.u).unwrap();
        assert_eq!(v, 0.0);

        // Same with a nonzero equilibrium cost and linear storage.
        let system = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        let beta = 0.8;
        let problem = DiscountedProblem::new(system, beta).unwrap();
        let x_l = (3.0 - 905f64.sqrt()) / 32.0;
        let eq = Equilibrium::new(problem.system(), vec![x_l], vec![0.0], beta, None).unwrap();
        let storage = StorageFunction::zero(vec![x_l], problem.system().state_box()).unwrap();
        let v = evaluate_rotated_cost(&problem, &eq, &storage, &[x_l], &[0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rotated_cost_example1_global_minimizer() {
        let system = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        let problem = DiscountedProblem::new(system, 0.7).unwrap();
        let x_l = (3.0 - 905f64.sqrt()) / 32.0;
        let x_g = (3.0 + 905f64.sqrt()) / 32.0;
        let eq = Equilibrium::new(problem.system(), vec![x_l], vec![0.0], 0.7, None).unwrap();
        let storage = StorageFunction::zero(vec![x_l], problem.system().state_box()).unwrap();
        let v = evaluate_rotated_cost(&problem, &eq, &storage, &[x_g], &[0.0]).unwrap();
        // Independent route: difference of the stage cost at the two minimizers.
        let direct = problem.system().stage_cost(&[x_g], &[0.0])
            - problem.system().stage_cost(&[x_l], &[0.0]);
        assert!((v - direct).abs() < 1e-14);
        assert!((v - (-0.4154)).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn rotated_cost_rejects_bad_pairs() {
        let (problem, eq, storage) = example3_certificate(0.7);
        // u outside the control box.
        assert!(matches!(
            evaluate_rotated_cost(&problem, &eq, &storage, &[0.0], &[4.0]),
            Err(Error::ConstraintViolation { .. })
        ));
        // f(x,u) leaves the state box.
        assert!(matches!(
            evaluate_rotated_cost(&problem, &eq, &storage, &[0.5,], &[3.0]),
            Err(Error::ImageOutOfDomain { .. })
        ));
    }

    #[test]
    fn admissibility_examples() {
        let ex3 = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        assert!(!check_admissible(&ex3, &[0.5], &[3.0]));
        assert!(check_admissible(&ex3, &[0.5], &[-1.0]));
        let ex1 = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        assert!(check_admissible(&ex1, &[-0.8], &[0.5]));
    }

    #[test]
    fn builtin_example3_formulas() {
        let sys = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        assert_eq!(sys.dynamics(&[0.3], &[-0.2]), vec![2.0 * 0.3 - 0.2]);
        assert_eq!(
            sys.stage_cost(&[0.3], &[-0.2]),
            -0.5 * 0.3 * 0.3 + 0.2 * 0.2
        );
        assert_eq!(sys.state_box(), &AxisBox::interval(-1.0, 1.0));
        assert_eq!(sys.control_box(), &AxisBox::interval(-3.0, 3.0));
    }

    #[test]
    fn builtin_example1_formulas() {
        let sys = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        assert_eq!(sys.dynamics(&[0.4], &[0.1]), vec![0.5]);
        let x: f64 = 0.4;
        assert_eq!(
            sys.stage_cost(&[x], &[0.1]),
            x.powi(4) - 0.25 * x.powi(3) - 1.75 * x * x
        );
        assert_eq!(sys.control_box(), &AxisBox::interval(-0.75, 0.75));
    }

    #[test]
    fn example2_gamma_zero_matches_example1() {
        let a = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        let b = expand_model_spec(&ModelSpec::BuiltinExample2 { gamma: 0.0 }).unwrap();
        for k in -10..=10 {
            let x = 0.17 * k as f64;
            for j in -3..=3 {
                let u = 0.2 * j as f64;
                assert_eq!(a.stage_cost(&[x], &[u]), b.stage_cost(&[x], &[u]));
            }
        }
    }

    #[test]
    fn polynomial_spec_roundtrip_and_errors() {
        let spec = ModelSpec::Polynomial {
            f_coeffs: vec![vec![
                Monomial {
                    c: 2.0,
                    x: vec![1],
                    u: vec![0],
                },
                Monomial {
                    c: 1.0,
                    x: vec![0],
                    u: vec![1],
                },
            ]],
            l_coeffs: vec![
                Monomial {
                    c: -0.5,
                    x: vec![2],
                    u: vec![0],
                },
                Monomial {
                    c: 1.0,
                    x: vec![0],
                    u: vec![2],
                },
            ],
            gamma: None,
            state_box: vec![[-1.0, 1.0]],
            control_box: vec![[-3.0, 3.0]],
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);

        let sys = expand_model_spec(&spec).unwrap();
        let builtin = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        assert_eq!(
            sys.dynamics(&[0.3], &[0.7]),
            builtin.dynamics(&[0.3], &[0.7])
        );
        assert_eq!(
            sys.stage_cost(&[0.3], &[0.7]),
            builtin.stage_cost(&[0.3], &[0.7])
        );

        // wrong power-vector arity
        let bad = ModelSpec::Polynomial {
            f_coeffs: vec![vec![Monomial {
                c: 1.0,
                x: vec![1, 2],
                u: vec![0],
            }]],
            l_coeffs: vec![],
            gamma: None,
            state_box: vec![[-1.0, 1.0]],
            control_box: vec![[-1.0, 1.0]],
        };
        assert!(matches!(expand_model_spec(&bad), Err(Error::Spec(_))));
    }

    #[test]
    fn storage_zero_at_anchor_all_forms() {
        let sbox = AxisBox::interval(-1.0, 1.0);
        let anchor = vec![0.25];
        let lin = StorageFunction::linear(vec![3.0], anchor.clone(), &sbox).unwrap();
        assert_eq!(lin.eval(&anchor), 0.0);
        let quad = StorageFunction::quadratic_diagonal(vec![-1.0], anchor.clone(), &sbox).unwrap();
        assert_eq!(quad.eval(&anchor), 0.0);
        let grid = Grid::uniform(&sbox, &[5]).unwrap();
        let values = vec![3.0, 1.0, 4.0, 1.0, 5.0];
        let tab = StorageFunction::tabulated(grid, values, anchor.clone()).unwrap();
        assert_eq!(tab.eval(&anchor), 0.0);
    }

    #[test]
    fn storage_lower_bounds() {
        let sbox = AxisBox::interval(-1.0, 1.0);
        let lin = StorageFunction::linear(vec![2.0], vec![0.0], &sbox).unwrap();
        assert_eq!(lin.lower_bound(), -2.0);
        let quad = StorageFunction::quadratic_diagonal(vec![-1.0], vec![0.0], &sbox).unwrap();
        assert_eq!(quad.lower_bound(), -1.0);
        // Sweep: evaluations never fall below the certified bound.
        for k in 0..=100 {
            let x = -1.0 + 0.02 * k as f64;
            assert!(lin.eval(&[x]) >= lin.lower_bound() - 1e-15);
            assert!(quad.eval(&[x]) >= quad.lower_bound() - 1e-15);
        }
    }

    #[test]
    fn invalid_beta_rejected() {
        let sys = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        assert!(matches!(
            DiscountedProblem::new(sys.clone(), 1.0),
            Err(Error::InvalidBeta(_))
        ));
        assert!(matches!(
            DiscountedProblem::new(sys, 0.0),
            Err(Error::InvalidBeta(_))
        ));
    }

    #[test]
    fn equilibrium_validation() {
        let sys = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        assert!(Equilibrium::new(&sys, vec![0.5], vec![0.0], 0.7, None).is_err());
        let eq = Equilibrium::new(&sys, vec![0.5], vec![-0.5], 0.7, None).unwrap();
        assert_eq!(eq.residual, 0.0);
        assert_eq!(eq.stage_cost_value, -0.5 * 0.25 + 0.25);
    }

    #[test]
    fn sos_identity_example3() {
        // l~(x,u) = (a x + b u)^2 + (4β - 3/2 - 4β²/(1+β)) x² with
        // a = 2β/sqrt(1+β), b = sqrt(1+β).
        for &beta in &[0.6, 0.7, 0.9] {
            let (problem, eq, storage) = example3_certificate(beta);
            let a = 2.0 * beta / (1.0 + beta).sqrt();
            let b = (1.0 + beta).sqrt();
            let coeff = 4.0 * beta - 1.5 - 4.0 * beta * beta / (1.0 + beta);
            for i in 0..=100 {
                let x = -1.0 + 0.02 * i as f64;
                for j in 0..=100 {
                    let u = -3.0 + 0.06 * j as f64;
                    let lhs = rotated_cost_unchecked(&problem, &eq, &storage, &[x], &[u]);
                    let rhs = (a * x + b * u).powi(2) + coeff * x * x;
                    assert!(
                        (lhs - rhs).abs() <= 1e-12,
                        "beta={beta} x={x} u={u}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn sos_coefficient_sign_flips_at_three_fifths() {
        let coeff = |beta: f64| 4.0 * beta - 1.5 - 4.0 * beta * beta / (1.0 + beta);
        assert!(coeff(0.6).abs() <= 1e-15);
        for k in 0..=400 {
            let beta = 0.2 + 0.6 * k as f64 / 400.0;
            let c = coeff(beta);
            if beta >= 0.6 + 1e-12 {
                assert!(c > 0.0, "beta={beta}");
            } else if beta <= 0.6 - 1e-12 {
                assert!(c < 0.0, "beta={beta}");
            }
        }
    }
}
