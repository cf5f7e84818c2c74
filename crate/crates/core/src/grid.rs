//! Rectangular grids over axis-aligned boxes with multilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AxisBox;

/// Rectangular grid: strictly increasing node coordinates per axis, spanning
/// the associated box from its lower to its upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    /// Uniform grid with `counts[i]` nodes on axis `i` of `bounds`.
    pub fn uniform(bounds: &AxisBox, counts: &[usize]) -> Result<Self> {
        if counts.len() != bounds.dim() {
            return Err(Error::Grid(format!(
                "need {} node counts, got {}",
                bounds.dim(),
                counts.len()
            )));
        }
        let mut axes = Vec::with_capacity(counts.len());
        for (i, &n) in counts.iter().enumerate() {
            if n < 2 {
                return Err(Error::Grid(format!("axis {i} needs at least 2 nodes")));
            }
            let (lo, hi) = (bounds.lo(i), bounds.hi(i));
            let mut nodes = Vec::with_capacity(n);
            let h = (hi - lo) / (n - 1) as f64;
            for k in 0..n {
                nodes.push(lo + h * k as f64);
            }
            // Span the box exactly.
            nodes[0] = lo;
            *nodes.last_mut().unwrap() = hi;
            axes.push(nodes);
        }
        Ok(Self { axes })
    }

    /// Grid from explicit per-axis node vectors.
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        for (i, nodes) in axes.iter().enumerate() {
            if nodes.len() < 2 {
                return Err(Error::Grid(format!("axis {i} needs at least 2 nodes")));
            }
            if !nodes.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Grid(format!(
                    "axis {i} nodes must be strictly increasing"
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Box spanned by the grid.
    pub fn bounds(&self) -> AxisBox {
        AxisBox::new(
            self.axes.iter().map(|a| a[0]).collect(),
            self.axes.iter().map(|a| *a.last().unwrap()).collect(),
        )
        .expect("grid axes are ordered")
    }

    /// Widest cell width on axis `i`.
    pub fn max_cell_width(&self, i: usize) -> f64 {
        self.axes[i]
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Widest cell width over all axes.
    pub fn max_cell_width_any(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.max_cell_width(i))
            .fold(0.0, f64::max)
    }

    /// Coordinates of the node with flat index `idx` (row-major, last axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.dim()];
        let mut rem = idx;
        for i in (0..self.dim()).rev() {
            let n = self.axes[i].len();
            coords[i] = self.axes[i][rem % n];
            rem /= n;
        }
        coords
    }

    /// Flat index of the grid node nearest to `point` (ties to the lower node).
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let mut idx = 0;
        for (i, nodes) in self.axes.iter().enumerate() {
            let j = match nodes.binary_search_by(|v| v.partial_cmp(&point[i]).unwrap()) {
                Ok(j) => j,
                Err(j) => {
                    if j == 0 {
                        0
                    } else if j >= nodes.len() {
                        nodes.len() - 1
                    } else if point[i] - nodes[j - 1] <= nodes[j] - point[i] {
                        j - 1
                    } else {
                        j
                    }
                }
            };
            idx = idx * nodes.len() + j;
        }
        idx
    }

    /// Iterate all nodes in row-major order (lexicographic in coordinates).
    pub fn iter_nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// True if `point` lies inside the spanned box (inclusive).
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && (0..self.dim()).all(|i| {
                let a = &self.axes[i];
                point[i] >= a[0] && point[i] <= *a.last().unwrap()
            })
    }

    /// Locate the cell and normalized offset of `point` on axis `i`.
    /// The upper boundary maps to the last cell with offset 1.
    fn locate(&self, i: usize, p: f64) -> (usize, f64) {
        let nodes = &self.axes[i];
        let last = nodes.len() - 1;
        let j = nodes.partition_point(|&v| v <= p);
        let cell = j.clamp(1, last) - 1;
        let t = (p - nodes[cell]) / (nodes[cell + 1] - nodes[cell]);
        (cell, t.clamp(0.0, 1.0))
    }

    /// Multilinear interpolation of a node-value table at `point`.
    ///
    /// `values` holds one value per node in row-major order. Returns an error
    /// if `point` leaves the spanned box.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Result<f64> {
        debug_assert_eq!(values.len(), self.len());
        if !self.contains(point) {
            return Err(Error::OutOfGrid {
                point: point.to_vec(),
            });
        }
        let dim = self.dim();
        let mut cells = [0usize; 8];
        let mut fracs = [0.0f64; 8];
        for i in 0..dim {
            let (c, t) = self.locate(i, point[i]);
            cells[i] = c;
            fracs[i] = t;
        }
        // Accumulate over the 2^dim cell corners.
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut idx = 0;
            for i in 0..dim {
                let hi = (corner >> i) & 1 == 1;
                weight *= if hi { fracs[i] } else { 1.0 - fracs[i] };
                idx = idx * self.axes[i].len() + cells[i] + hi as usize;
            }
            if weight != 0.0 {
                acc += weight * values[idx];
            }
        }
        Ok(acc)
    }

    /// Largest absolute difference between values at grid-adjacent nodes.
    ///
    /// Serves as an estimate of the interpolant's modulus of continuity
    /// across one cell.
    pub fn max_adjacent_diff(&self, values: &[f64]) -> f64 {
        let dim = self.dim();
        let mut max = 0.0f64;
        let mut strides = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.axes[i + 1].len();
        }
        for idx in 0..self.len() {
            for i in 0..dim {
                let n = self.axes[i].len();
                let coord = (idx / strides[i]) % n;
                if coord + 1 < n {
                    let d = (values[idx + strides[i]] - values[idx]).abs();
                    max = max.max(d);
                }
            }
        }
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box1(lo: f64, hi: f64) -> AxisBox {
        AxisBox::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn uniform_grid_spans_box_exactly() {
        let g = Grid::uniform(&box1(-1.0, 1.0), &[5]).unwrap();
        assert_eq!(g.axis(0)[0], -1.0);
        assert_eq!(*g.axis(0).last().unwrap(), 1.0);
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(Grid::uniform(&box1(0.0, 1.0), &[1]).is_err());
        assert!(Grid::from_axes(vec![vec![0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = Grid::uniform(&box1(0.0, 2.0), &[3]).unwrap();
        let vals = vec![1.0, 3.0, 2.0];
        assert_eq!(g.interpolate(&vals, &[0.0]).unwrap(), 1.0);
        assert_eq!(g.interpolate(&vals, &[1.0]).unwrap(), 3.0);
        assert_eq!(g.interpolate(&vals, &[2.0]).unwrap(), 2.0);
        assert!((g.interpolate(&vals, &[0.5]).unwrap() - 2.0).abs() < 1e-15);
        assert!((g.interpolate(&vals, &[1.5]).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_2d_bilinear() {
        let b = AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = Grid::uniform(&b, &[2, 2]).unwrap();
        // values at (0,0),(0,1),(1,0),(1,1) row-major
        let vals = vec![0.0, 1.0, 2.0, 3.0];
        let v = g.interpolate(&vals, &[0.5, 0.5]).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        let v = g.interpolate(&vals, &[0.25, 0.75]).unwrap();
        assert!((v - (0.75 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn interpolation_rejects_outside_points() {
        let g = Grid::uniform(&box1(0.0, 1.0), &[2]).unwrap();
        assert!(matches!(
            g.interpolate(&[0.0, 1.0], &[1.5]),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn nearest_node_clamps_and_rounds() {
        let g = Grid::uniform(&box1(0.0, 1.0), &[3]).unwrap();
        assert_eq!(g.nearest_node(&[-0.3]), 0);
        assert_eq!(g.nearest_node(&[0.26]), 1);
        assert_eq!(g.nearest_node(&[0.9]), 2);
    }

    #[test]
    fn max_adjacent_diff_matches_hand_count() {
        let g = Grid::uniform(&box1(0.0, 1.0), &[4]).unwrap();
        let vals = vec![0.0, 2.0, 1.0, 5.0];
        assert_eq!(g.max_adjacent_diff(&vals), 4.0);
    }
}
