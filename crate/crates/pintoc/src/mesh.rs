//! Uniform quadrilateral meshes of the square `[-1, 1]^2` and the nested
//! hierarchy used by the geometric multigrid components.
//!
//! A grid at refinement `level` has `2^level` cells per side. Velocity
//! fields live on the biquadratic (9-node) nodal grid, pressure on the
//! bilinear (4-node) grid. All nodes are ordered lexicographically by
//! `(x2, x1)`: the second coordinate varies slowest, so node index
//! `iy * nodes_per_side + ix` sits at `(x1(ix), x2(iy))`.
//!
//! Velocity degrees of freedom keep only interior nodes (homogeneous
//! elimination of the Dirichlet boundary); pressure keeps every node except
//! the very first one, which is pinned to fix the hydrostatic constant.

use crate::error::{Error, Result};

/// Classification of a biquadratic node after boundary elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Interior node with its index in the reduced numbering.
    Interior(usize),
    /// Boundary node with its index in the boundary numbering.
    Boundary(usize),
}

/// Uniform quadrilateral grid at one refinement level.
#[derive(Debug, Clone)]
pub struct Grid {
    level: u32,
    cells_per_side: usize,
    q2_class: Vec<NodeClass>,
    q2_interior: Vec<usize>,
    q2_boundary: Vec<usize>,
}

impl Grid {
    /// Build the grid at the given refinement level (level >= 1).
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 || level > 12 {
            return Err(Error::config(format!(
                "mesh level must be in 1..=12, got {level}"
            )));
        }
        let m = 1usize << level;
        let nside = 2 * m + 1;
        let mut q2_class = Vec::with_capacity(nside * nside);
        let mut q2_interior = Vec::new();
        let mut q2_boundary = Vec::new();
        for iy in 0..nside {
            for ix in 0..nside {
                let node = iy * nside + ix;
                if ix == 0 || iy == 0 || ix == nside - 1 || iy == nside - 1 {
                    q2_class.push(NodeClass::Boundary(q2_boundary.len()));
                    q2_boundary.push(node);
                } else {
                    q2_class.push(NodeClass::Interior(q2_interior.len()));
                    q2_interior.push(node);
                }
            }
        }
        Ok(Grid {
            level,
            cells_per_side: m,
            q2_class,
            q2_interior,
            q2_boundary,
        })
    }

    /// Refinement level.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per side (`2^level`).
    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    /// Total number of cells.
    pub fn cell_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        2.0 / self.cells_per_side as f64
    }

    /// Biquadratic nodes per side.
    pub fn q2_nodes_per_side(&self) -> usize {
        2 * self.cells_per_side + 1
    }

    /// Bilinear nodes per side.
    pub fn q1_nodes_per_side(&self) -> usize {
        self.cells_per_side + 1
    }

    /// Total biquadratic node count.
    pub fn q2_node_count(&self) -> usize {
        let n = self.q2_nodes_per_side();
        n * n
    }

    /// Total bilinear node count.
    pub fn q1_node_count(&self) -> usize {
        let n = self.q1_nodes_per_side();
        n * n
    }

    /// Interior biquadratic nodes (scalar velocity dimension).
    pub fn q2_interior_count(&self) -> usize {
        self.q2_interior.len()
    }

    /// Boundary biquadratic nodes.
    pub fn q2_boundary_count(&self) -> usize {
        self.q2_boundary.len()
    }

    /// Velocity space dimension (two components on interior nodes).
    pub fn velocity_dofs(&self) -> usize {
        2 * self.q2_interior_count()
    }

    /// Pressure space dimension (all bilinear nodes minus the pinned one).
    pub fn pressure_dofs(&self) -> usize {
        self.q1_node_count() - 1
    }

    /// Coordinates of a biquadratic node.
    pub fn q2_coord(&self, node: usize) -> (f64, f64) {
        let n = self.q2_nodes_per_side();
        let (ix, iy) = (node % n, node / n);
        let step = self.h() / 2.0;
        (-1.0 + ix as f64 * step, -1.0 + iy as f64 * step)
    }

    /// Coordinates of a bilinear node.
    pub fn q1_coord(&self, node: usize) -> (f64, f64) {
        let n = self.q1_nodes_per_side();
        let (ix, iy) = (node % n, node / n);
        let step = self.h();
        (-1.0 + ix as f64 * step, -1.0 + iy as f64 * step)
    }

    /// Classification of a biquadratic node.
    pub fn q2_class(&self, node: usize) -> NodeClass {
        self.q2_class[node]
    }

    /// Interior index -> node map.
    pub fn q2_interior_nodes(&self) -> &[usize] {
        &self.q2_interior
    }

    /// Boundary index -> node map.
    pub fn q2_boundary_nodes(&self) -> &[usize] {
        &self.q2_boundary
    }

    /// Reduced pressure index of a bilinear node (`None` for the pinned node).
    pub fn q1_reduced_index(&self, node: usize) -> Option<usize> {
        if node == 0 {
            None
        } else {
            Some(node - 1)
        }
    }

    /// The nine biquadratic nodes of cell `(cx, cy)`, ordered with the
    /// local x index fastest (matching the tensor-product basis order).
    pub fn q2_cell_nodes(&self, cx: usize, cy: usize) -> [usize; 9] {
        let n = self.q2_nodes_per_side();
        let mut out = [0usize; 9];
        for b in 0..3 {
            for a in 0..3 {
                out[b * 3 + a] = (2 * cy + b) * n + (2 * cx + a);
            }
        }
        out
    }

    /// The four bilinear nodes of cell `(cx, cy)`, local x index fastest.
    pub fn q1_cell_nodes(&self, cx: usize, cy: usize) -> [usize; 4] {
        let n = self.q1_nodes_per_side();
        let mut out = [0usize; 4];
        for b in 0..2 {
            for a in 0..2 {
                out[b * 2 + a] = (cy + b) * n + (cx + a);
            }
        }
        out
    }

    /// Lower-left corner of cell `(cx, cy)`.
    pub fn cell_origin(&self, cx: usize, cy: usize) -> (f64, f64) {
        let h = self.h();
        (-1.0 + cx as f64 * h, -1.0 + cy as f64 * h)
    }
}

/// Nested sequence of grids from a coarsest to a finest level.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    grids: Vec<Grid>,
}

impl MeshHierarchy {
    /// Build levels `coarsest..=finest` (inclusive, both >= 1).
    pub fn new(coarsest: u32, finest: u32) -> Result<Self> {
        if coarsest == 0 || coarsest > finest {
            return Err(Error::config(format!(
                "invalid level range {coarsest}..={finest}"
            )));
        }
        let grids = (coarsest..=finest).map(Grid::new).collect::<Result<_>>()?;
        Ok(MeshHierarchy { grids })
    }

    /// Number of levels stored.
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    /// True when only one level is stored.
    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// Grid at hierarchy position `i` (0 = coarsest).
    pub fn grid(&self, i: usize) -> &Grid {
        &self.grids[i]
    }

    /// Finest grid.
    pub fn finest(&self) -> &Grid {
        self.grids.last().expect("hierarchy is never empty")
    }

    /// All grids, coarsest first.
    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_counts() {
        let g = Grid::new(1).unwrap();
        assert_eq!(g.cells_per_side(), 2);
        assert_eq!(g.q2_node_count(), 25);
        assert_eq!(g.q1_node_count(), 9);
        assert_eq!(g.q2_interior_count(), 9);
        assert_eq!(g.q2_boundary_count(), 16);
        assert_eq!(g.velocity_dofs(), 18);
        assert_eq!(g.pressure_dofs(), 8);
    }

    #[test]
    fn dof_counts_levels_one_to_four() {
        let expected = [(18, 8), (98, 24), (450, 80), (1922, 288)];
        for (i, &(nv, np)) in expected.iter().enumerate() {
            let g = Grid::new(i as u32 + 1).unwrap();
            assert_eq!(g.velocity_dofs(), nv, "level {}", i + 1);
            assert_eq!(g.pressure_dofs(), np, "level {}", i + 1);
        }
    }

    #[test]
    fn node_ordering_is_lexicographic_in_x2_then_x1() {
        let g = Grid::new(1).unwrap();
        let mut prev = (-f64::INFINITY, -f64::INFINITY);
        for node in 0..g.q2_node_count() {
            let (x1, x2) = g.q2_coord(node);
            assert!((x2, x1) > prev, "node {node} out of order");
            prev = (x2, x1);
        }
        assert_eq!(g.q2_coord(0), (-1.0, -1.0));
        assert_eq!(g.q2_coord(24), (1.0, 1.0));
    }

    #[test]
    fn cell_connectivity_level_one() {
        let g = Grid::new(1).unwrap();
        assert_eq!(g.q2_cell_nodes(0, 0), [0, 1, 2, 5, 6, 7, 10, 11, 12]);
        assert_eq!(g.q2_cell_nodes(1, 1), [12, 13, 14, 17, 18, 19, 22, 23, 24]);
        assert_eq!(g.q1_cell_nodes(0, 0), [0, 1, 3, 4]);
        assert_eq!(g.q1_cell_nodes(1, 0), [1, 2, 4, 5]);
    }

    #[test]
    fn interior_and_boundary_partition_nodes() {
        let g = Grid::new(2).unwrap();
        let mut seen = vec![false; g.q2_node_count()];
        for &n in g.q2_interior_nodes() {
            assert!(!seen[n]);
            seen[n] = true;
            let (x1, x2) = g.q2_coord(n);
            assert!(x1.abs() < 1.0 && x2.abs() < 1.0);
        }
        for &n in g.q2_boundary_nodes() {
            assert!(!seen[n]);
            seen[n] = true;
            let (x1, x2) = g.q2_coord(n);
            assert!((x1.abs() - 1.0).abs() < 1e-15 || (x2.abs() - 1.0).abs() < 1e-15);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pinned_pressure_node_is_the_corner() {
        let g = Grid::new(2).unwrap();
        assert_eq!(g.q1_coord(0), (-1.0, -1.0));
        assert_eq!(g.q1_reduced_index(0), None);
        assert_eq!(g.q1_reduced_index(5), Some(4));
    }

    #[test]
    fn hierarchy_orders_levels_coarse_to_fine() {
        let h = MeshHierarchy::new(1, 3).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h.grid(0).level(), 1);
        assert_eq!(h.finest().level(), 3);
        assert!(MeshHierarchy::new(0, 2).is_err());
        assert!(MeshHierarchy::new(3, 2).is_err());
    }
}
