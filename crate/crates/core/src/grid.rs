//! Uniform grid on the rectangle `[0, a] × [0, b]`, node classification, and
//! the flattening between Dirichlet grid fields and interior vectors.
//!
//! Nodes are `(i·h, j·h)` for `0 ≤ i ≤ M`, `0 ≤ j ≤ N` with a single mesh
//! step `h = a/M = b/N`. A node is *interior* when all four axis neighbors
//! exist on the grid; everything else is *boundary*. The first interior
//! column `i = 1` (nodes `(1, j)`, `1 ≤ j ≤ N−1`) is flagged separately as
//! *layer 1*: it is the only place the deformable edge `x = 0` enters the
//! discrete operator.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Discretization of the rectangle `[0, a] × [0, b]` with uniform step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    a: f64,
    b: f64,
    m: usize,
    n: usize,
    h: f64,
}

/// Where a node sits in the grid partition.
///
/// `Layer1` refines `Interior`: layer-1 nodes are interior nodes at `i = 1`,
/// adjacent to the deformable edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
    Layer1,
}

impl NodeClass {
    /// True for both plain interior and layer-1 nodes.
    pub fn is_interior(self) -> bool {
        matches!(self, NodeClass::Interior | NodeClass::Layer1)
    }
}

impl GridSpec {
    /// Builds a grid, rejecting degenerate or anisotropic subdivisions.
    ///
    /// Requires `a, b > 0`, `M, N ≥ 3`, and `a/M = b/N` to machine tolerance
    /// (the mesh step must be the same in both directions).
    pub fn new(a: f64, b: f64, m: usize, n: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!(
                "rectangle sides must be positive finite, got a={a}, b={b}"
            )));
        }
        if m < 3 || n < 3 {
            return Err(Error::Config(format!(
                "need at least 3 subdivisions per side, got M={m}, N={n}"
            )));
        }
        let hx = a / m as f64;
        let hy = b / n as f64;
        if (hx - hy).abs() > 8.0 * f64::EPSILON * hx.max(hy) {
            return Err(Error::Config(format!(
                "anisotropic mesh rejected: a/M = {hx} but b/N = {hy}"
            )));
        }
        Ok(GridSpec { a, b, m, n, h: hx })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Subdivisions along x; interior columns are `1 ..= M−1`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Subdivisions along y; interior rows are `1 ..= N−1`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh step `h = a/M = b/N`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of nodes `(M+1)(N+1)`.
    pub fn node_count(&self) -> usize {
        (self.m + 1) * (self.n + 1)
    }

    /// Number of interior nodes `(M−1)(N−1)`, the dimension of state vectors.
    pub fn interior_len(&self) -> usize {
        (self.m - 1) * (self.n - 1)
    }

    /// Classifies node `(i, j)`.
    ///
    /// Interior means all four axis neighbors are on the grid; layer 1 is the
    /// interior column `i = 1` next to the deformable edge; the rest of the
    /// grid is boundary.
    pub fn classify(&self, i: usize, j: usize) -> Result<NodeClass> {
        if i > self.m || j > self.n {
            return Err(Error::Domain(format!(
                "node ({i},{j}) outside grid 0..={}, 0..={}",
                self.m, self.n
            )));
        }
        if i == 0 || i == self.m || j == 0 || j == self.n {
            Ok(NodeClass::Boundary)
        } else if i == 1 {
            Ok(NodeClass::Layer1)
        } else {
            Ok(NodeClass::Interior)
        }
    }

    /// Flat index of interior node `(i, j)` in state vectors.
    ///
    /// Ordering is column-major in `i` (columns of constant `i` are
    /// contiguous): `k = (i−1)(N−1) + (j−1)`. The unique-continuation
    /// recursion walks these columns left to right.
    pub fn interior_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(1 <= i && i < self.m && 1 <= j && j < self.n);
        (i - 1) * (self.n - 1) + (j - 1)
    }

    /// Interior nodes `(i, j)` in flat-index order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.m).flat_map(move |i| (1..self.n).map(move |j| (i, j)))
    }
}

/// Scalar values on every grid node, stored row-major with `j` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    /// All-zero field (trivially Dirichlet).
    pub fn zeros(grid: GridSpec) -> Self {
        GridField {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn flat(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.grid.m && j <= self.grid.n);
        i * (self.grid.n + 1) + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.flat(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.flat(i, j);
        self.values[k] = value;
    }

    /// True when every boundary node is exactly zero.
    pub fn is_dirichlet(&self) -> bool {
        for i in 0..=self.grid.m {
            for j in 0..=self.grid.n {
                if !self.grid.classify(i, j).unwrap().is_interior() && self.get(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Flattens the interior values into a vector of length `(M−1)(N−1)`.
    ///
    /// The field must be Dirichlet (zero boundary); the inverse is
    /// [`GridField::from_interior`], and the round-trip is the identity.
    pub fn interior_to_vector(&self) -> Result<DVector<f64>> {
        if !self.is_dirichlet() {
            return Err(Error::Contract(
                "interior_to_vector requires a Dirichlet field (zero boundary)".into(),
            ));
        }
        let mut v = DVector::zeros(self.grid.interior_len());
        for (i, j) in self.grid.interior_nodes() {
            v[self.grid.interior_index(i, j)] = self.get(i, j);
        }
        Ok(v)
    }

    /// Rebuilds a Dirichlet field from an interior vector (boundary zeros).
    pub fn from_interior(grid: GridSpec, v: &DVector<f64>) -> Result<Self> {
        if v.len() != grid.interior_len() {
            return Err(Error::Dimension {
                expected: grid.interior_len(),
                got: v.len(),
            });
        }
        let mut field = GridField::zeros(grid);
        for (i, j) in grid.interior_nodes() {
            field.set(i, j, v[grid.interior_index(i, j)]);
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_5x5() -> GridSpec {
        GridSpec::new(1.0, 1.0, 4, 4).unwrap()
    }

    #[test]
    fn construction_rejects_bad_specs() {
        assert!(GridSpec::new(0.0, 1.0, 4, 4).is_err(), "zero width");
        assert!(GridSpec::new(1.0, 1.0, 2, 4).is_err(), "M too small");
        assert!(GridSpec::new(1.0, 2.0, 4, 4).is_err(), "anisotropic mesh");
        assert!(GridSpec::new(2.0, 1.0, 8, 4).is_ok(), "isotropic rectangle");
    }

    #[test]
    fn mesh_step_is_consistent() {
        let g = GridSpec::new(2.0, 1.0, 8, 4).unwrap();
        assert_eq!(g.h() * g.m() as f64, g.a());
        assert_eq!(g.h() * g.n() as f64, g.b());
        assert_eq!(g.interior_len(), 7 * 3);
    }

    #[test]
    fn classify_matches_hand_picked_nodes() {
        let g = grid_5x5();
        assert_eq!(g.classify(0, 2).unwrap(), NodeClass::Boundary);
        assert_eq!(g.classify(2, 2).unwrap(), NodeClass::Interior);
        assert_eq!(g.classify(1, 3).unwrap(), NodeClass::Layer1);
        assert_eq!(g.classify(4, 4).unwrap(), NodeClass::Boundary);
        assert!(g.classify(5, 0).is_err(), "out of range is a domain error");
    }

    #[test]
    fn classification_partitions_the_node_set() {
        let g = GridSpec::new(1.0, 1.5, 4, 6).unwrap();
        let mut interior = 0;
        let mut boundary = 0;
        let mut layer1 = 0;
        for i in 0..=g.m() {
            for j in 0..=g.n() {
                match g.classify(i, j).unwrap() {
                    NodeClass::Interior => interior += 1,
                    NodeClass::Boundary => boundary += 1,
                    NodeClass::Layer1 => layer1 += 1,
                }
            }
        }
        assert_eq!(interior + boundary + layer1, g.node_count());
        assert_eq!(layer1, g.n() - 1, "layer 1 has exactly N−1 members");
        assert_eq!(interior + layer1, g.interior_len());
    }

    #[test]
    fn interior_index_is_column_major_in_i() {
        let g = grid_5x5();
        assert_eq!(g.interior_index(1, 1), 0);
        assert_eq!(g.interior_index(1, 3), 2);
        assert_eq!(g.interior_index(2, 1), 3);
        assert_eq!(g.interior_index(3, 3), 8);
        let order: Vec<_> = g.interior_nodes().collect();
        for (k, (i, j)) in order.iter().enumerate() {
            assert_eq!(g.interior_index(*i, *j), k, "iterator order matches index");
        }
    }

    #[test]
    fn unit_vector_lands_on_the_right_node() {
        let g = grid_5x5();
        let mut v = DVector::zeros(g.interior_len());
        v[g.interior_index(2, 2)] = 1.0;
        let field = GridField::from_interior(g, &v).unwrap();
        assert_eq!(field.get(2, 2), 1.0);
        assert_eq!(field.get(1, 2), 0.0);
        assert!(field.is_dirichlet());
    }

    #[test]
    fn interior_round_trip_is_identity() {
        let g = GridSpec::new(1.0, 1.0, 5, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v = DVector::from_fn(g.interior_len(), |_, _| rng.random_range(-1.0..1.0));
            let field = GridField::from_interior(g, &v).unwrap();
            let back = field.interior_to_vector().unwrap();
            assert_eq!(back, v, "round-trip must be exact");
        }
    }

    #[test]
    fn zero_vector_gives_zero_field() {
        let g = grid_5x5();
        let field = GridField::from_interior(g, &DVector::zeros(g.interior_len())).unwrap();
        assert!(field
            .interior_to_vector()
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn non_dirichlet_field_is_rejected() {
        let g = grid_5x5();
        let mut field = GridField::zeros(g);
        field.set(0, 2, 1.0);
        assert!(!field.is_dirichlet());
        assert!(matches!(
            field.interior_to_vector(),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = grid_5x5();
        let v = DVector::zeros(5);
        assert!(matches!(
            GridField::from_interior(g, &v),
            Err(Error::Dimension {
                expected: 9,
                got: 5
            })
        ));
    }
}
