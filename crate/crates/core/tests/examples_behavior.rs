//! Medium-cost behavioural checks of the builtin examples that go beyond
//! the per-module unit tests: solved-policy structure, recorded oracle
//! fixtures and sublevel invariance.

use std::sync::LazyLock;

use turnpike_core::*;

fn x_local() -> f64 {
    (3.0 - 905f64.sqrt()) / 32.0
}

struct Solved {
    problem: DiscountedProblem,
    eq: Equilibrium,
    storage: StorageFunction,
    ugrid: Grid,
    v: GriddedValueFunction,
}

/// Example 3 at beta = 0.7, rotated cost, 401 x 601 grids.
static EX3_ROT: LazyLock<Solved> = LazyLock::new(|| {
    let system = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
    let problem = DiscountedProblem::new(system, 0.7).unwrap();
    let eq = Equilibrium::new(problem.system(), vec![0.0], vec![0.0], 0.7, None).unwrap();
    let storage =
        StorageFunction::quadratic_diagonal(vec![-1.0], vec![0.0], problem.system().state_box())
            .unwrap();
    let grid = Grid::uniform(problem.system().state_box(), &[401]).unwrap();
    let ugrid = Grid::uniform(problem.system().control_box(), &[601]).unwrap();
    let v = value_iteration(
        &problem,
        &grid,
        &ugrid,
        CostKind::Rotated {
            eq: &eq,
            storage: &storage,
        },
        1e-6,
        20_000,
    )
    .unwrap();
    Solved {
        problem,
        eq,
        storage,
        ugrid,
        v,
    }
});

#[test]
fn ex3_rotated_value_positive_definite() {
    let sol = &*EX3_ROT;
    let at_zero = sol.v.interpolate(&[0.0]).unwrap();
    assert!(at_zero.abs() <= 1e-6, "V~(0) = {at_zero}");
    for i in 0..sol.v.grid.len() {
        let x = sol.v.grid.node(i)[0];
        if x.abs() >= 0.1 {
            assert!(sol.v.values[i] > 0.0, "V~({x}) = {}", sol.v.values[i]);
        }
    }
}

#[test]
fn ex3_policy_holds_the_origin() {
    let sol = &*EX3_ROT;
    let kind = CostKind::Rotated {
        eq: &sol.eq,
        storage: &sol.storage,
    };
    let policy = extract_policy(&sol.v, &sol.problem, &sol.ugrid, kind).unwrap();
    let node = sol.v.grid.nearest_node(&[0.0]);
    let u = policy.control_at_node(node)[0];
    let step = sol.ugrid.axis(0)[1] - sol.ugrid.axis(0)[0];
    assert!(u.abs() <= step + 1e-12, "policy at 0 is {u}");
}

#[test]
fn ex3_qset_fixture_along_optimal_rollout() {
    // Recorded fixture: the optimal closed loop contracts at about 0.933 per
    // step, so the 0.1-ball is entered only after 30 steps.
    let sol = &*EX3_ROT;
    let kind = CostKind::Rotated {
        eq: &sol.eq,
        storage: &sol.storage,
    };
    let traj = rollout(&sol.problem, &sol.v, &sol.ugrid, kind, &[1.0], 40, false).unwrap();
    let q = q_set(&traj, &[0.0], 0.1, 30).unwrap();
    assert_eq!(q.cardinality(), 31, "indices {:?}", q.indices);
    // The trajectory does converge towards the origin.
    assert!(traj.final_state()[0].abs() < 0.08);
}

#[test]
fn ex3_alpha_fit_fixture() {
    // Recorded fixture for the fitted class-K lower bound at deviation 1.
    let sol = &*EX3_ROT;
    let region = sol.problem.system().state_box().clone();
    let vg = Grid::uniform(&region, &[201]).unwrap();
    let cg = Grid::uniform(sol.problem.system().control_box(), &[201]).unwrap();
    let report = verify_dissipativity(
        &sol.problem,
        &sol.eq,
        &sol.storage,
        &region,
        DissipativityVariant::XU,
        &vg,
        &cg,
    )
    .unwrap();
    assert!(report.accepted);
    let a1 = report.alpha_fit.eval(1.0);
    assert!(a1 > 0.0);
    assert!((a1 - 0.0443).abs() <= 2e-3, "alpha_fit(1) = {a1}");
    assert!(report.margin >= -1e-10);
}

#[test]
fn ex3_upper_envelope_dominates_rotated_value() {
    let sol = &*EX3_ROT;
    let samples: Vec<(f64, f64)> = (0..sol.v.grid.len())
        .filter_map(|i| {
            let x = sol.v.grid.node(i)[0];
            (x.abs() <= 0.5).then(|| (x.abs(), sol.v.values[i].abs()))
        })
        .collect();
    let gamma = fit_comparison_upper(&samples).unwrap();
    let edge = sol
        .v
        .interpolate(&[0.5])
        .unwrap()
        .max(sol.v.interpolate(&[-0.5]).unwrap());
    assert!(
        gamma.eval(0.5) >= edge,
        "gamma(0.5) = {} < {edge}",
        gamma.eval(0.5)
    );
    for &(r, v) in &samples {
        assert!(gamma.eval(r) >= v - 1e-12);
    }
}

#[test]
fn ex3_brute_force_fixture() {
    // Recorded fixture: the enumeration oracle's truncated minimum from
    // x0 = 0.2 with a 7-node control grid and horizon 8.
    let problem = {
        let system = expand_model_spec(&ModelSpec::BuiltinExample3).unwrap();
        DiscountedProblem::new(system, 0.7).unwrap()
    };
    let ugrid = Grid::uniform(problem.system().control_box(), &[7]).unwrap();
    let interval = brute_force_value(&problem, &[0.2], &ugrid, 8).unwrap();
    assert!(
        (interval.truncated_min - 0.667744246).abs() <= 1e-9,
        "truncated min = {}",
        interval.truncated_min
    );
    assert!(interval.lo <= interval.truncated_min && interval.truncated_min <= interval.hi);
}

#[test]
fn ex1_policy_steers_toward_global_at_high_beta() {
    let system = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
    let problem = DiscountedProblem::new(system, 0.8).unwrap();
    let grid = Grid::uniform(problem.system().state_box(), &[401]).unwrap();
    let ugrid = Grid::uniform(problem.system().control_box(), &[301]).unwrap();
    let v = value_iteration(&problem, &grid, &ugrid, CostKind::Original, 1e-6, 20_000).unwrap();
    let policy = extract_policy(&v, &problem, &ugrid, CostKind::Original).unwrap();
    let node = grid.nearest_node(&[-0.8]);
    assert_eq!(grid.node(node), vec![-0.8]);
    let u = policy.control_at_node(node)[0];
    assert!(u > 0.0, "control at -0.8 must steer right, got {u}");
}

#[test]
fn ex1_scan_edges_of_the_basin_split() {
    let opts = ScanOptions::default();
    let table = beta_scan(
        &ModelSpec::BuiltinExample1,
        &[vec![-0.8]],
        &[0.5, 0.9],
        &opts,
    )
    .unwrap();
    let class_at = |beta: f64| {
        table
            .cells
            .iter()
            .find(|c| (c.beta - beta).abs() < 1e-12)
            .unwrap()
            .class
    };
    assert_eq!(class_at(0.5), TerminalClass::Local);
    assert_eq!(class_at(0.9), TerminalClass::Global);
}

#[test]
fn ex1_sublevel_invariance_at_low_beta() {
    // At beta = 0.6 the rotated value level certified by the region boundary
    // is closed-loop invariant, which is the mechanism keeping trajectories
    // near the local equilibrium.
    let system = expand_model_spec(&ModelSpec::BuiltinExample1).unwrap();
    let problem = DiscountedProblem::new(system, 0.6).unwrap();
    let eq = Equilibrium::new(problem.system(), vec![x_local()], vec![0.0], 0.6, None).unwrap();
    let storage = StorageFunction::zero(vec![x_local()], problem.system().state_box()).unwrap();
    let grid = Grid::uniform(problem.system().state_box(), &[801]).unwrap();
    let ugrid = Grid::uniform(problem.system().control_box(), &[601]).unwrap();
    let kind = CostKind::Rotated {
        eq: &eq,
        storage: &storage,
    };
    let v = value_iteration(&problem, &grid, &ugrid, kind, 1e-6, 20_000).unwrap();
    let policy = extract_policy(&v, &problem, &ugrid, kind).unwrap();
    let region = AxisBox::interval(-1.2, -0.5);
    let level = largest_contained_level(&v, &region).unwrap();
    assert!(level > 0.0);
    let check = sublevel_invariance_check(&v, &problem, &policy, &region, level).unwrap();
    assert!(check.invariant, "witness: {:?}", check.witness);
    assert!(check.checked_nodes > 0);

    // Cross-validation: a rollout from inside the set never exits the level.
    let traj = rollout(&problem, &v, &ugrid, kind, &[-0.8], 30, false).unwrap();
    for x in &traj.states {
        assert!(v.interpolate(x).unwrap() < level);
    }
}
