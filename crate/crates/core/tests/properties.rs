//! Property-based invariants of the solvers and fitters.

use proptest::prelude::*;
use turnpike_core::io::{value_function_from_csv, value_function_to_csv};
use turnpike_core::*;

fn example3(beta: f64) -> DiscountedProblem {
    let system = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
    DiscountedProblem::new(system, beta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The Bellman operator with fixed interpolation is a beta-contraction
    /// and is monotone.
    #[test]
    fn bellman_contraction_and_monotonicity(
        beta in 0.1f64..0.95,
        v in prop::collection::vec(-10.0f64..10.0, 21),
        w in prop::collection::vec(-10.0f64..10.0, 21),
    ) {
        let problem = example3(beta);
        let grid = Grid::uniform(problem.system().state_box(), &[21]).unwrap();
        let ugrid = Grid::uniform(problem.system().control_box(), &[7]).unwrap();
        let operator = BellmanOperator::new(&problem, &grid, &ugrid, CostKind::Original).unwrap();
        let tv = operator.apply(&v);
        let tw = operator.apply(&w);
        let d_in: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d_out: f64 = tv.iter().zip(&tw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d_out <= beta * d_in + 1e-12, "{d_out} > {beta} * {d_in}");

        let upper: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a.max(*b)).collect();
        let t_upper = operator.apply(&upper);
        for (a, b) in tv.iter().zip(&t_upper) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    /// The fitted lower envelope stays below every sample, vanishes at zero
    /// and is strictly increasing at its breakpoints.
    #[test]
    fn lower_fit_is_sound(
        samples in prop::collection::vec((1e-6f64..10.0, 0.0f64..100.0), 1..400)
    ) {
        let alpha = match fit_comparison_lower(&samples) {
            Ok(alpha) => alpha,
            // Degenerate inputs (zero values at positive deviations) are a
            // legitimate rejection, not a soundness failure.
            Err(Error::DegenerateFit(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        };
        prop_assert_eq!(alpha.eval(0.0), 0.0);
        for &(r, v) in &samples {
            prop_assert!(alpha.eval(r) <= v + 1e-9, "alpha({r}) = {} > {v}", alpha.eval(r));
        }
        let bps: Vec<(f64, f64)> = alpha.breakpoints().collect();
        prop_assert!(bps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
    }

    /// The fitted upper envelope dominates every sample.
    #[test]
    fn upper_fit_is_sound(
        samples in prop::collection::vec((1e-6f64..10.0, 0.0f64..100.0), 1..400)
    ) {
        let gamma = match fit_comparison_upper(&samples) {
            Ok(gamma) => gamma,
            Err(Error::DegenerateFit(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        };
        prop_assert_eq!(gamma.eval(0.0), 0.0);
        for &(r, v) in &samples {
            prop_assert!(gamma.eval(r) >= v - 1e-9);
        }
        // The inverse is a true inverse on the range.
        for &(r, _) in samples.iter().take(10) {
            let v = gamma.eval(r);
            let back = gamma.inverse(v).unwrap();
            prop_assert!((gamma.eval(back) - v).abs() <= 1e-9 * (1.0 + v));
        }
    }

    /// Storage functions vanish at their anchor and respect the certified
    /// lower bound over the box.
    #[test]
    fn storage_bounds_hold(
        nu in -5.0f64..5.0,
        coeff in -5.0f64..5.0,
        anchor in -0.9f64..0.9,
        probe in -1.0f64..1.0,
    ) {
        let sbox = AxisBox::interval(-1.0, 1.0);
        let lin = StorageFunction::linear(vec![nu], vec![anchor], &sbox).unwrap();
        let quad = StorageFunction::quadratic_diagonal(vec![coeff], vec![anchor], &sbox).unwrap();
        prop_assert_eq!(lin.eval(&[anchor]), 0.0);
        prop_assert_eq!(quad.eval(&[anchor]), 0.0);
        prop_assert!(lin.eval(&[probe]) >= lin.lower_bound() - 1e-12);
        prop_assert!(quad.eval(&[probe]) >= quad.lower_bound() - 1e-12);
    }

    /// Multilinear interpolation is exact at nodes and stays within the cell
    /// value range in between.
    #[test]
    fn interpolation_within_cell_range(
        values in prop::collection::vec(-10.0f64..10.0, 9),
        point in -1.0f64..1.0,
    ) {
        let grid = Grid::uniform(&AxisBox::interval(-1.0, 1.0), &[9]).unwrap();
        for (i, node) in grid.iter_nodes().enumerate() {
            prop_assert_eq!(grid.interpolate(&values, &node).unwrap(), values[i]);
        }
        let v = grid.interpolate(&values, &[point]).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    /// Value-function CSV export re-ingests bitwise.
    #[test]
    fn value_csv_roundtrip(values in prop::collection::vec(-1e6f64..1e6, 7)) {
        let grid = Grid::uniform(&AxisBox::interval(0.0, 1.0), &[7]).unwrap();
        let v = GriddedValueFunction {
            grid,
            values,
            beta: 0.5,
            kind: ValueKind::Original,
            bellman_residual: 0.0,
        };
        let text = value_function_to_csv(&v);
        let back = value_function_from_csv(&text, 0.5, ValueKind::Original, 0.0).unwrap();
        prop_assert_eq!(v.values, back.values);
    }

    /// Open-loop trajectories replay bitwise through the dynamics.
    #[test]
    fn trajectory_replay_bitwise(
        x0 in -1.5f64..1.5,
        steps in prop::collection::vec(-0.5f64..0.5, 1..20),
    ) {
        let system = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
        let problem = DiscountedProblem::new(system, 0.8).unwrap();
        let controls: Vec<Vec<f64>> = steps.iter().map(|&u| vec![u]).collect();
        if let Ok(traj) = evaluate_open_loop(&problem, &[x0], &controls, CostKind::Original) {
            let mut x = traj.states[0].clone();
            for (k, u) in traj.controls.iter().enumerate() {
                x = problem.system().dynamics(&x, u);
                prop_assert_eq!(&x, &traj.states[k + 1]);
            }
            // The discounted accumulator matches a direct recomputation.
            let mut total = 0.0;
            let mut pow = 1.0;
            for (k, cost) in traj.stage_costs.iter().enumerate() {
                total += pow * cost;
                pow *= 0.8;
                prop_assert!((traj.discounted_partial_sums[k + 1] - total).abs() <= 1e-12);
            }
        }
    }

    /// beta* stays in (0, 1) and respects its limits.
    #[test]
    fn beta_star_range(delta in 1e-6f64..100.0, lmin in -100.0f64..0.0, k in 1u32..1000) {
        let b = beta_star(delta, lmin, k).unwrap();
        prop_assert!(b > 0.0 && b < 1.0);
        let limit = delta / (delta - lmin);
        prop_assert!(b < limit + 1e-15);
        prop_assert!(beta_star(delta, lmin, k + 1).unwrap() > b);
    }
}
