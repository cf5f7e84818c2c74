//! CSV import/export. Floats are written with Rust's shortest
//! round-trippable formatting, so re-ingesting a file reproduces the
//! original values bitwise.

use crate::dp::{GriddedValueFunction, Policy, Trajectory, ValueKind};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Value-function CSV: header `x0,..,x{n-1},value`, one row per node in
/// row-major order.
pub fn value_function_to_csv(v: &GriddedValueFunction) -> String {
    let dim = v.grid.dim();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("value\n");
    for (idx, node) in v.grid.iter_nodes().enumerate() {
        for c in &node {
            out.push_str(&format!("{c},"));
        }
        out.push_str(&format!("{}\n", v.values[idx]));
    }
    out
}

/// Rebuild a value function from its CSV export. The grid axes are inferred
/// from the node coordinates; rows may appear in any order but must cover
/// the full grid exactly once.
pub fn value_function_from_csv(
    text: &str,
    beta: f64,
    kind: ValueKind,
    bellman_residual: f64,
) -> Result<GriddedValueFunction> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"value") || cols.len() < 2 {
        return Err(Error::Csv {
            line: 1,
            msg: "expected header x0,..,value".into(),
        });
    }
    let dim = cols.len() - 1;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Csv {
                line: lineno + 1,
                msg: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        let mut coords = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            coords.push(parse_f64(f, lineno + 1)?);
        }
        let value = parse_f64(fields[dim], lineno + 1)?;
        rows.push((coords, value));
    }
    // Infer the per-axis node sets.
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for (coords, _) in &rows {
        for (i, &c) in coords.iter().enumerate() {
            if let Err(pos) = axes[i].binary_search_by(|p| p.total_cmp(&c)) {
                axes[i].insert(pos, c);
            }
        }
    }
    let grid = Grid::from_axes(axes)?;
    if rows.len() != grid.len() {
        return Err(Error::Csv {
            line: 0,
            msg: format!(
                "grid has {} nodes but the file has {} rows",
                grid.len(),
                rows.len()
            ),
        });
    }
    let mut values = vec![f64::NAN; grid.len()];
    for (coords, value) in rows {
        let mut idx = 0usize;
        for (i, coord) in coords.iter().enumerate() {
            let pos = grid
                .axis(i)
                .binary_search_by(|p| p.total_cmp(coord))
                .map_err(|_| Error::Csv {
                    line: 0,
                    msg: "inconsistent node coordinates".into(),
                })?;
            idx = idx * grid.axis(i).len() + pos;
        }
        values[idx] = value;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Csv {
            line: 0,
            msg: "duplicate or missing grid rows".into(),
        });
    }
    Ok(GriddedValueFunction {
        grid,
        values,
        beta,
        kind,
        bellman_residual,
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Csv {
        line,
        msg: format!("bad number {s:?}: {e}"),
    })
}

/// Trajectory CSV: header `k,x0..,u0..,stage_cost,discounted_partial_sum`.
/// Control columns are empty on the terminal row; the partial-sum column
/// accumulates through the row's step (the terminal row repeats the total).
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].len();
    let m = traj.controls.first().map_or(1, Vec::len);
    let mut out = String::from("k,");
    for i in 0..n {
        out.push_str(&format!("x{i},"));
    }
    for j in 0..m {
        out.push_str(&format!("u{j},"));
    }
    out.push_str("stage_cost,discounted_partial_sum\n");
    for (k, state) in traj.states.iter().enumerate() {
        out.push_str(&format!("{k},"));
        for c in state {
            out.push_str(&format!("{c},"));
        }
        if k < traj.controls.len() {
            for c in &traj.controls[k] {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!(
                "{},{}\n",
                traj.stage_costs[k],
                traj.discounted_partial_sums[k + 1]
            ));
        } else {
            for _ in 0..m {
                out.push(',');
            }
            out.push_str(&format!(",{}\n", traj.discounted_partial_sums[k]));
        }
    }
    out
}

/// Policy CSV: header `x0,..,u0,..`, one row per state node.
pub fn policy_to_csv(policy: &Policy) -> String {
    let dim = policy.grid.dim();
    let m = policy.controls.first().map_or(0, Vec::len);
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("x{i},"));
    }
    for j in 0..m {
        out.push_str(&format!("u{j}{}", if j + 1 < m { "," } else { "" }));
    }
    out.push('\n');
    for (idx, node) in policy.grid.iter_nodes().enumerate() {
        for c in &node {
            out.push_str(&format!("{c},"));
        }
        let u = &policy.controls[idx];
        for (j, c) in u.iter().enumerate() {
            out.push_str(&format!("{c}{}", if j + 1 < u.len() { "," } else { "" }));
        }
        out.push('\n');
    }
    out
}
