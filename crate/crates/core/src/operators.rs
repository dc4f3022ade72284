//! The discrete Laplacian `A`, its deformation-perturbed variant `A(φ(t))`,
//! the operator derivative `A'(0)`, and the uniform norm bound.
//!
//! The deformable edge is `x = 0`. A deformation is a family of coefficients
//! `λ_j(t)` (one per boundary node `(0, j)`, `1 ≤ j ≤ N−1`) and only changes
//! the stencil on the adjacent interior layer `i = 1`:
//!
//! * off layer 1 the operator is the classical 5-point Laplacian
//!   `[Af]_m = (1/h²)(4 f(m) − Σ_neighbors f)`;
//! * at `(1, j)` the perturbed stencil is
//!   `(1/h²)[ 2(1 + 1/(1+λ_j)) f₍₁,ⱼ₎ − (2/(2+λ_j)) f₍₂,ⱼ₎ − f₍₁,ⱼ₊₁₎ − f₍₁,ⱼ₋₁₎ ]`,
//!   the west (boundary) term being absent under the Dirichlet condition.
//!
//! Differentiating the two rational entries in `λ` gives the operator
//! derivative: at `λ = 0` the action of `d/dμ A(μV_j)` on `f` is supported on
//! the single node `(1, j)` with value `(1/h²)(½ f₍₂,ⱼ₎ − 2 f₍₁,ⱼ₎)`.
//!
//! Admissibility keeps the stencil uniformly elliptic and bounded:
//! `sup |λ_j| < 1/2`, and for the wave equation additionally `|∂ₜλ_j| < 1`.
//! Under the box bound, `‖A(φ)f‖∞ ≤ 28/(3h²) ‖f‖∞`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

/// Which evolution equation a deformation path is meant for.
///
/// The kind decides both the admissibility rules and the time basis of the
/// path: piecewise-constant segments for heat, continuous piecewise-linear
/// interpolation (knots at segment midpoints) for the wave equation, whose
/// admissible set bounds the deformation speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquationKind {
    Heat,
    Wave,
}

/// Maximum allowed deformation amplitude; admissible paths satisfy
/// `max |λ| < 1/2` strictly.
pub const AMPLITUDE_BOUND: f64 = 0.5;

/// Maximum allowed deformation speed for wave paths: `|∂ₜλ| < 1` strictly.
pub const SLOPE_BOUND: f64 = 1.0;

/// A time-dependent deformation of the edge `x = 0`.
///
/// Coefficients are stored as `λ[j][k]` with one row per boundary node
/// `j = 1..N−1` and one column per time segment `k = 0..K−1` (uniform
/// segments of length `T/K`). Heat paths are piecewise-constant in time;
/// wave paths interpolate the coefficients linearly between segment
/// midpoints (flat before the first and after the last midpoint) so that
/// the slope bound is meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct DeformationPath {
    kind: EquationKind,
    t_horizon: f64,
    /// `coeffs[j-1][k]` is the coefficient of boundary node `j` on segment `k`.
    coeffs: Vec<Vec<f64>>,
}

/// Serialized form of [`DeformationPath`]: `{"kind", "T", "K", "lambda"}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRepr {
    kind: EquationKind,
    #[serde(rename = "T")]
    t_horizon: f64,
    #[serde(rename = "K")]
    segments: usize,
    lambda: Vec<Vec<f64>>,
}

impl TryFrom<PathRepr> for DeformationPath {
    type Error = Error;

    fn try_from(repr: PathRepr) -> Result<Self> {
        if repr.lambda.iter().any(|row| row.len() != repr.segments) {
            return Err(Error::Config(format!(
                "every lambda row must have K = {} entries",
                repr.segments
            )));
        }
        DeformationPath::new(repr.kind, repr.t_horizon, repr.lambda)
    }
}

impl From<DeformationPath> for PathRepr {
    fn from(path: DeformationPath) -> Self {
        PathRepr {
            kind: path.kind,
            t_horizon: path.t_horizon,
            segments: path.segments(),
            lambda: path.coeffs,
        }
    }
}

impl DeformationPath {
    /// Builds an admissible path; rejects box violations (`|λ| ≥ 1/2`) and,
    /// for wave paths, slope violations (`|Δλ|/(T/K) ≥ 1`).
    pub fn new(kind: EquationKind, t_horizon: f64, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let path = Self::direction(kind, t_horizon, coeffs)?;
        path.validate_admissible()?;
        Ok(path)
    }

    /// Builds a *direction* (a tangent vector to path space): structurally
    /// validated but exempt from the admissibility bounds, since directions
    /// only ever enter linearized quantities.
    pub fn direction(kind: EquationKind, t_horizon: f64, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive finite, got {t_horizon}"
            )));
        }
        if coeffs.is_empty() || coeffs[0].is_empty() {
            return Err(Error::Config(
                "deformation path needs at least one row and one segment".into(),
            ));
        }
        let segments = coeffs[0].len();
        if coeffs.iter().any(|row| row.len() != segments) {
            return Err(Error::Config("ragged coefficient rows".into()));
        }
        if coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("non-finite deformation coefficient".into()));
        }
        Ok(DeformationPath {
            kind,
            t_horizon,
            coeffs,
        })
    }

    /// The zero path (no deformation), trivially admissible.
    pub fn zero(kind: EquationKind, t_horizon: f64, rows: usize, segments: usize) -> Self {
        DeformationPath {
            kind,
            t_horizon,
            coeffs: vec![vec![0.0; segments]; rows],
        }
    }

    /// Direction with a single unit coefficient at boundary node `j`
    /// (1-based) and time segment `k`; these are the columns of the control
    /// map.
    pub fn basis_direction(
        kind: EquationKind,
        t_horizon: f64,
        rows: usize,
        segments: usize,
        j: usize,
        k: usize,
    ) -> Result<Self> {
        if j == 0 || j > rows || k >= segments {
            return Err(Error::Domain(format!(
                "basis index (j={j}, k={k}) outside 1..={rows} × 0..{segments}"
            )));
        }
        let mut coeffs = vec![vec![0.0; segments]; rows];
        coeffs[j - 1][k] = 1.0;
        Self::direction(kind, t_horizon, coeffs)
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    /// Number of coefficient rows; must equal `N−1` for the target grid.
    pub fn rows(&self) -> usize {
        self.coeffs.len()
    }

    /// Number of time segments `K`.
    pub fn segments(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, c| acc.max(c.abs()))
    }

    /// Largest segment-to-segment slope `|λ[k+1] − λ[k]| / (T/K)`.
    pub fn max_slope(&self) -> f64 {
        let dt_seg = self.t_horizon / self.segments() as f64;
        let mut worst = 0.0_f64;
        for row in &self.coeffs {
            for pair in row.windows(2) {
                worst = worst.max((pair[1] - pair[0]).abs() / dt_seg);
            }
        }
        worst
    }

    /// Checks the admissibility bounds for this path's kind.
    pub fn validate_admissible(&self) -> Result<()> {
        let amp = self.max_abs();
        if amp >= AMPLITUDE_BOUND {
            return Err(Error::Admissibility(format!(
                "max |λ| = {amp} exceeds the bound 1/2"
            )));
        }
        if self.kind == EquationKind::Wave {
            let slope = self.max_slope();
            if slope >= SLOPE_BOUND {
                return Err(Error::Admissibility(format!(
                    "max |∂ₜλ| = {slope} exceeds the bound 1"
                )));
            }
        }
        Ok(())
    }

    /// True when [`DeformationPath::validate_admissible`] passes.
    pub fn is_admissible(&self) -> bool {
        self.validate_admissible().is_ok()
    }

    /// Index of the time segment containing `t` (the right endpoint `T`
    /// belongs to the last segment).
    pub fn segment_of(&self, t: f64) -> usize {
        let k = (t / (self.t_horizon / self.segments() as f64)).floor() as usize;
        k.min(self.segments() - 1)
    }

    /// Evaluates `λ_j(t)` for boundary node `j` (1-based).
    ///
    /// Heat paths are piecewise-constant per segment; wave paths interpolate
    /// linearly between segment midpoints, held flat beyond the first and
    /// last midpoint.
    pub fn lambda(&self, j: usize, t: f64) -> f64 {
        let row = &self.coeffs[j - 1];
        match self.kind {
            EquationKind::Heat => row[self.segment_of(t)],
            EquationKind::Wave => {
                let segments = self.segments();
                let dt_seg = self.t_horizon / segments as f64;
                let s = t / dt_seg - 0.5;
                if s <= 0.0 || segments == 1 {
                    row[0]
                } else if s >= (segments - 1) as f64 {
                    row[segments - 1]
                } else {
                    let l = s.floor() as usize;
                    let frac = s - l as f64;
                    row[l] * (1.0 - frac) + row[l + 1] * frac
                }
            }
        }
    }

    /// Weight of the `k`-th time-basis function at time `t`, so that
    /// `λ_j(t) = Σ_k λ[j][k] · w_k(t)`: segment indicators for heat, hat
    /// functions on the segment midpoints for wave.
    pub fn basis_weight(&self, k: usize, t: f64) -> f64 {
        match self.kind {
            EquationKind::Heat => {
                if self.segment_of(t) == k {
                    1.0
                } else {
                    0.0
                }
            }
            EquationKind::Wave => {
                let segments = self.segments();
                let dt_seg = self.t_horizon / segments as f64;
                let s = t / dt_seg - 0.5;
                if s <= 0.0 || segments == 1 {
                    if k == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else if s >= (segments - 1) as f64 {
                    if k == segments - 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let l = s.floor() as usize;
                    let frac = s - l as f64;
                    if k == l {
                        1.0 - frac
                    } else if k == l + 1 {
                        frac
                    } else {
                        0.0
                    }
                }
            }
        }
    }

    /// Checks this path can drive dynamics on `grid` (one row per layer-1
    /// node).
    pub fn validate_for_grid(&self, grid: GridSpec) -> Result<()> {
        if self.rows() != grid.n() - 1 {
            return Err(Error::Contract(format!(
                "path has {} rows but the grid has N−1 = {} layer-1 nodes",
                self.rows(),
                grid.n() - 1
            )));
        }
        Ok(())
    }
}

/// The five stencil weights of the operator at one interior node, in units
/// of `1/h²`. The west weight is the coupling to `(i−1, j)`; on layer 1 that
/// neighbor is the Dirichlet boundary and the weight is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorStencil {
    pub center: f64,
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

/// Stencil of `A(φ)` at interior node `(i, j)` given `λ = λ_j(t)` (ignored
/// off layer 1). With `λ = 0` the layer-1 weights reduce exactly to the
/// classical values `4/h²` and `−1/h²`.
pub fn stencil_at(grid: GridSpec, lambda: f64, i: usize, _j: usize) -> OperatorStencil {
    let h2 = grid.h() * grid.h();
    if i == 1 {
        OperatorStencil {
            center: 2.0 * (1.0 + 1.0 / (1.0 + lambda)) / h2,
            west: 0.0,
            east: -(2.0 / (2.0 + lambda)) / h2,
            south: -1.0 / h2,
            north: -1.0 / h2,
        }
    } else {
        OperatorStencil {
            center: 4.0 / h2,
            west: -1.0 / h2,
            east: -1.0 / h2,
            south: -1.0 / h2,
            north: -1.0 / h2,
        }
    }
}

/// Derivative of the stencil at `(1, j)` with respect to `λ`, per unit of
/// the direction coefficient `μ` (zero off layer 1): only the center and
/// east weights move, by `−2/(1+λ)²` and `+2/(2+λ)²` over `h²`.
pub fn stencil_derivative(grid: GridSpec, lambda: f64) -> OperatorStencil {
    let h2 = grid.h() * grid.h();
    let denom_c = (1.0 + lambda) * (1.0 + lambda);
    let denom_e = (2.0 + lambda) * (2.0 + lambda);
    OperatorStencil {
        center: -2.0 / denom_c / h2,
        west: 0.0,
        east: 2.0 / denom_e / h2,
        south: 0.0,
        north: 0.0,
    }
}

fn apply_stencil(field: &GridField, grid: GridSpec, lambda_at: impl Fn(usize) -> f64) -> GridField {
    let mut out = GridField::zeros(grid);
    for (i, j) in grid.interior_nodes() {
        let lam = if i == 1 { lambda_at(j) } else { 0.0 };
        let s = stencil_at(grid, lam, i, j);
        let value = s.center * field.get(i, j)
            + s.west * field.get(i - 1, j)
            + s.east * field.get(i + 1, j)
            + s.south * field.get(i, j - 1)
            + s.north * field.get(i, j + 1);
        out.set(i, j, value);
    }
    out
}

fn require_dirichlet(field: &GridField) -> Result<()> {
    if !field.is_dirichlet() {
        return Err(Error::Contract(
            "operator application requires a Dirichlet field".into(),
        ));
    }
    Ok(())
}

/// Applies the unperturbed Laplacian `A` to a Dirichlet field, returning the
/// result on the interior (boundary zeros).
pub fn apply_laplacian(field: &GridField) -> Result<GridField> {
    require_dirichlet(field)?;
    Ok(apply_stencil(field, field.grid(), |_| 0.0))
}

/// Applies the perturbed operator `A(φ(t))` to a Dirichlet field.
pub fn apply_perturbed(field: &GridField, path: &DeformationPath, t: f64) -> Result<GridField> {
    require_dirichlet(field)?;
    let grid = field.grid();
    path.validate_for_grid(grid)?;
    path.validate_admissible()?;
    if !(0.0..=path.t_horizon()).contains(&t) {
        return Err(Error::Domain(format!(
            "time {t} outside the path horizon [0, {}]",
            path.t_horizon()
        )));
    }
    Ok(apply_stencil(field, grid, |j| path.lambda(j, t)))
}

/// Applies `A'(0)[μ V_j]` to a Dirichlet field: zero except at `(1, j)`,
/// where the value is `(μ/h²)(½ f₍₂,ⱼ₎ − 2 f₍₁,ⱼ₎)`.
pub fn operator_derivative(direction_j: usize, mu: f64, field: &GridField) -> Result<GridField> {
    require_dirichlet(field)?;
    let grid = field.grid();
    if direction_j == 0 || direction_j >= grid.n() {
        return Err(Error::Domain(format!(
            "layer-1 index j={direction_j} outside 1..={}",
            grid.n() - 1
        )));
    }
    let h2 = grid.h() * grid.h();
    let mut out = GridField::zeros(grid);
    let value = mu / h2 * (0.5 * field.get(2, direction_j) - 2.0 * field.get(1, direction_j));
    out.set(1, direction_j, value);
    Ok(out)
}

/// Assembles `A(φ(t))` (or the unperturbed `A` when `path` is `None`) as a
/// dense matrix on interior vectors, using the grid's interior ordering.
pub fn assemble_matrix(
    path: Option<&DeformationPath>,
    t: f64,
    grid: GridSpec,
) -> Result<DMatrix<f64>> {
    if let Some(p) = path {
        p.validate_for_grid(grid)?;
        p.validate_admissible()?;
        if !(0.0..=p.t_horizon()).contains(&t) {
            return Err(Error::Domain(format!(
                "time {t} outside the path horizon [0, {}]",
                p.t_horizon()
            )));
        }
    }
    let n_int = grid.interior_len();
    let mut a = DMatrix::zeros(n_int, n_int);
    for (i, j) in grid.interior_nodes() {
        let row = grid.interior_index(i, j);
        let lam = match (path, i) {
            (Some(p), 1) => p.lambda(j, t),
            _ => 0.0,
        };
        let s = stencil_at(grid, lam, i, j);
        a[(row, row)] = s.center;
        if i > 1 {
            a[(row, grid.interior_index(i - 1, j))] = s.west;
        }
        if i + 1 < grid.m() {
            a[(row, grid.interior_index(i + 1, j))] = s.east;
        }
        if j > 1 {
            a[(row, grid.interior_index(i, j - 1))] = s.south;
        }
        if j + 1 < grid.n() {
            a[(row, grid.interior_index(i, j + 1))] = s.north;
        }
    }
    Ok(a)
}

/// Rewrites the layer-1 rows of an assembled operator matrix in place for
/// new coefficients `λ_j = lambda_at(j)`. Only the diagonal and east entries
/// of those rows depend on the deformation, so time steppers can refresh a
/// single matrix instead of reassembling.
pub fn refresh_layer1_rows(a: &mut DMatrix<f64>, grid: GridSpec, lambda_at: impl Fn(usize) -> f64) {
    for j in 1..grid.n() {
        let s = stencil_at(grid, lambda_at(j), 1, j);
        let row = grid.interior_index(1, j);
        a[(row, row)] = s.center;
        a[(row, grid.interior_index(2, j))] = s.east;
    }
}

/// Assembles the matrix of `A'(0)[μ V_j]` on interior vectors: a single
/// nonzero row at `(1, j)` with entries `−2μ/h²` (diagonal) and `μ/(2h²)`
/// (east coupling).
pub fn assemble_derivative_matrix(
    grid: GridSpec,
    direction_j: usize,
    mu: f64,
) -> Result<DMatrix<f64>> {
    if direction_j == 0 || direction_j >= grid.n() {
        return Err(Error::Domain(format!(
            "layer-1 index j={direction_j} outside 1..={}",
            grid.n() - 1
        )));
    }
    let h2 = grid.h() * grid.h();
    let n_int = grid.interior_len();
    let mut a = DMatrix::zeros(n_int, n_int);
    let row = grid.interior_index(1, direction_j);
    a[(row, row)] = -2.0 * mu / h2;
    a[(row, grid.interior_index(2, direction_j))] = 0.5 * mu / h2;
    Ok(a)
}

/// Result of the randomized norm-bound check: the largest observed ratio
/// `‖A(φ)f‖∞ / ‖f‖∞` and the theoretical bound `28/(3h²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBoundReport {
    pub max_ratio: f64,
    pub bound: f64,
}

/// Samples random Dirichlet fields of unit sup-norm and random times and
/// records the largest `‖A(φ)f‖∞`; admissibility guarantees it stays below
/// `28/(3h²)`.
pub fn operator_norm_bound_check(
    path: &DeformationPath,
    grid: GridSpec,
    trials: usize,
    seed: u64,
) -> Result<NormBoundReport> {
    path.validate_for_grid(grid)?;
    path.validate_admissible()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0_f64;
    for _ in 0..trials {
        let mut v = DVector::from_fn(grid.interior_len(), |_, _| rng.random_range(-1.0..1.0));
        let sup = v.amax();
        if sup == 0.0 {
            continue;
        }
        v /= sup;
        let field = GridField::from_interior(grid, &v)?;
        let t = rng.random_range(0.0..=path.t_horizon());
        let image = apply_perturbed(&field, path, t)?;
        let ratio = image.interior_to_vector()?.amax();
        max_ratio = max_ratio.max(ratio);
    }
    let h2 = grid.h() * grid.h();
    Ok(NormBoundReport {
        max_ratio,
        bound: 28.0 / (3.0 * h2),
    })
}
