//! Time integration of the semi-discrete heat and wave equations.
//!
//! Heat flow `∂ₜu + A(φ(t))u = F` is integrated by Crank–Nicolson with the
//! operator frozen at each step midpoint: unconditionally stable for the
//! stiff parabolic system, second order in `dt`. Because heat deformation
//! paths are piecewise-constant, the implicit matrix is factored once per
//! time segment, and steps are aligned to segment boundaries so no step
//! straddles a coefficient discontinuity.
//!
//! Wave flow `∂ₜ²u + A(φ(t))u = F` is integrated by velocity Verlet, again
//! with `A` and `F` frozen at step midpoints. The scheme is conditionally
//! stable: `dt·√λ_max < 2`, checked before integration with a power-iteration
//! estimate of the largest operator eigenvalue.
//!
//! Both integrators store every step (adjoint pairings integrate over the
//! whole horizon) and are deterministic: identical inputs produce
//! bit-identical trajectories.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operators::{assemble_matrix, refresh_layer1_rows, DeformationPath, EquationKind};

/// Right-hand side `F` of the evolution equations, evaluated on interior
/// nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceTerm {
    /// Constant in time and space.
    Constant { value: f64 },
    /// Separable product `g(t)·s(x,y)` of closed-form profiles.
    Separable {
        time: TimeProfile,
        space: SpaceProfile,
    },
    /// Linear interpolation of sampled interior vectors; `times` must be
    /// strictly increasing and cover the queried range.
    Tabulated {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// Closed-form time factors for separable sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    One,
    Exp { rate: f64 },
    Cos { omega: f64 },
}

impl TimeProfile {
    fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::One => 1.0,
            TimeProfile::Exp { rate } => (rate * t).exp(),
            TimeProfile::Cos { omega } => (omega * t).cos(),
        }
    }
}

/// Closed-form space factors for separable sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceProfile {
    One,
    /// `sin(pπx/a)·sin(qπy/b)`, a discrete Laplacian eigenvector.
    Sine {
        p: usize,
        q: usize,
    },
    Gaussian {
        x0: f64,
        y0: f64,
        sigma: f64,
    },
}

impl SpaceProfile {
    fn eval(&self, grid: GridSpec, i: usize, j: usize) -> f64 {
        let x = i as f64 * grid.h();
        let y = j as f64 * grid.h();
        match self {
            SpaceProfile::One => 1.0,
            SpaceProfile::Sine { p, q } => {
                (*p as f64 * std::f64::consts::PI * x / grid.a()).sin()
                    * (*q as f64 * std::f64::consts::PI * y / grid.b()).sin()
            }
            SpaceProfile::Gaussian { x0, y0, sigma } => {
                let d2 = (x - x0).powi(2) + (y - y0).powi(2);
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

impl SourceTerm {
    /// Shorthand for the constant source `F ≡ value`.
    pub fn constant(value: f64) -> Self {
        SourceTerm::Constant { value }
    }

    /// Checks the source can be evaluated anywhere on `[0, T]` for `grid`.
    pub fn validate(&self, grid: GridSpec, t_horizon: f64) -> Result<()> {
        match self {
            SourceTerm::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("non-finite constant source".into()));
                }
            }
            SourceTerm::Separable { .. } => {}
            SourceTerm::Tabulated { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    return Err(Error::Config(
                        "tabulated source needs matching times/values with ≥ 2 samples".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "tabulated times must be strictly increasing".into(),
                    ));
                }
                if times[0] > 0.0 || *times.last().unwrap() < t_horizon {
                    return Err(Error::Config(format!(
                        "tabulated source covers [{}, {}] but the horizon is [0, {t_horizon}]",
                        times[0],
                        times.last().unwrap()
                    )));
                }
                if values.iter().any(|v| v.len() != grid.interior_len()) {
                    return Err(Error::Dimension {
                        expected: grid.interior_len(),
                        got: values
                            .iter()
                            .map(Vec::len)
                            .find(|&l| l != grid.interior_len())
                            .unwrap_or(0),
                    });
                }
            }
        }
        Ok(())
    }

    /// Interior vector `F(t)`.
    pub fn eval(&self, grid: GridSpec, t: f64) -> Result<DVector<f64>> {
        match self {
            SourceTerm::Constant { value } => {
                Ok(DVector::from_element(grid.interior_len(), *value))
            }
            SourceTerm::Separable { time, space } => {
                let g = time.eval(t);
                let mut v = DVector::zeros(grid.interior_len());
                for (i, j) in grid.interior_nodes() {
                    v[grid.interior_index(i, j)] = g * space.eval(grid, i, j);
                }
                Ok(v)
            }
            SourceTerm::Tabulated { times, values } => {
                let eps = 1e-12 * times.last().unwrap().abs().max(1.0);
                if t < times[0] - eps || t > times.last().unwrap() + eps {
                    return Err(Error::Domain(format!(
                        "time {t} outside the tabulated range [{}, {}]",
                        times[0],
                        times.last().unwrap()
                    )));
                }
                let t = t.clamp(times[0], *times.last().unwrap());
                let hi = times
                    .partition_point(|&s| s < t)
                    .max(1)
                    .min(times.len() - 1);
                let lo = hi - 1;
                let w = (t - times[lo]) / (times[hi] - times[lo]);
                let a = DVector::from_column_slice(&values[lo]);
                let b = DVector::from_column_slice(&values[hi]);
                Ok(&a * (1.0 - w) + &b * w)
            }
        }
    }
}

/// Time series of interior state vectors produced by the integrators.
///
/// Heat states have dimension `(M−1)(N−1)`; wave states stack position and
/// velocity into dimension `2(M−1)(N−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    grid: GridSpec,
    kind: EquationKind,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

impl StateTrajectory {
    fn new(grid: GridSpec, kind: EquationKind, times: Vec<f64>, states: Vec<DVector<f64>>) -> Self {
        debug_assert_eq!(times.len(), states.len());
        StateTrajectory {
            grid,
            kind,
            times,
            states,
        }
    }

    /// Builds a trajectory from raw samples, for tests that need hand-made
    /// references; the public API only hands out integrator-produced ones.
    #[cfg(test)]
    pub(crate) fn from_parts(
        grid: GridSpec,
        kind: EquationKind,
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::Contract(
                "times and states must align and be nonempty".into(),
            ));
        }
        let dim = match kind {
            EquationKind::Heat => grid.interior_len(),
            EquationKind::Wave => 2 * grid.interior_len(),
        };
        for s in &states {
            if s.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        Ok(StateTrajectory {
            grid,
            kind,
            times,
            states,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    /// Number of stored samples (steps + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Full state dimension: `n` for heat, `2n` for wave.
    pub fn state_dim(&self) -> usize {
        match self.kind {
            EquationKind::Heat => self.grid.interior_len(),
            EquationKind::Wave => 2 * self.grid.interior_len(),
        }
    }

    /// Position block of sample `k` (the whole state for heat).
    pub fn position(&self, k: usize) -> DVectorView<'_, f64> {
        let n = self.grid.interior_len();
        self.states[k].rows(0, n)
    }

    /// Velocity block of sample `k`; wave trajectories only.
    pub fn velocity(&self, k: usize) -> Result<DVectorView<'_, f64>> {
        if self.kind != EquationKind::Wave {
            return Err(Error::Contract(
                "velocity block exists only for wave states".into(),
            ));
        }
        let n = self.grid.interior_len();
        Ok(self.states[k].rows(n, n))
    }

    /// Discrete wave energy `½‖v‖² + ½⟨Au, u⟩` per sample, with `A` the
    /// assembled unperturbed operator.
    pub fn energy(&self, a: &DMatrix<f64>) -> Result<Vec<f64>> {
        if self.kind != EquationKind::Wave {
            return Err(Error::Contract(
                "energy functional is defined for wave states".into(),
            ));
        }
        let n = self.grid.interior_len();
        Ok((0..self.len())
            .map(|k| {
                let u = self.states[k].rows(0, n);
                let v = self.states[k].rows(n, n);
                0.5 * v.dot(&v) + 0.5 * (a * u).dot(&u)
            })
            .collect())
    }
}

/// Number of integration steps actually taken: rounded up to a multiple of
/// the path's segment count so no step straddles a segment boundary.
pub fn effective_steps(path: Option<&DeformationPath>, steps: usize) -> usize {
    match path {
        Some(p) => p.segments() * steps.div_ceil(p.segments()),
        None => steps,
    }
}

/// Uniform time grid `t_k = T·k/total` whose last point is exactly `T`.
pub(crate) fn time_grid(t_horizon: f64, total: usize) -> Vec<f64> {
    (0..=total)
        .map(|k| t_horizon * (k as f64 / total as f64))
        .collect()
}

fn validate_evolution_inputs(
    path: Option<&DeformationPath>,
    kind: EquationKind,
    source: &SourceTerm,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<()> {
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::Config(format!(
            "horizon must be positive finite, got {t_horizon}"
        )));
    }
    if steps == 0 {
        return Err(Error::Config("need at least one time step".into()));
    }
    source.validate(grid, t_horizon)?;
    if let Some(p) = path {
        p.validate_for_grid(grid)?;
        p.validate_admissible()?;
        if p.kind() != kind {
            return Err(Error::Contract(format!(
                "path kind {:?} does not match the equation kind {:?}",
                p.kind(),
                kind
            )));
        }
        if (p.t_horizon() - t_horizon).abs() > 1e-12 * t_horizon {
            return Err(Error::Contract(format!(
                "path horizon {} does not match the solve horizon {t_horizon}",
                p.t_horizon()
            )));
        }
    }
    Ok(())
}

fn check_finite(v: &DVector<f64>, step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            step,
            detail: "state contains NaN or Inf".into(),
        });
    }
    Ok(())
}

/// Integrates the heat equation `∂ₜu + A(φ(t))u = F`, `u(0) = u0`, by
/// midpoint-frozen Crank–Nicolson over `steps` uniform steps (rounded up to
/// align with the path's segments).
pub fn solve_heat(
    path: Option<&DeformationPath>,
    source: &SourceTerm,
    u0: &DVector<f64>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<StateTrajectory> {
    validate_evolution_inputs(path, EquationKind::Heat, source, t_horizon, steps, grid)?;
    let n = grid.interior_len();
    if u0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: u0.len(),
        });
    }
    let total = effective_steps(path, steps);
    let dt = t_horizon / total as f64;
    let times = time_grid(t_horizon, total);

    let segments = path.map_or(1, |p| p.segments());
    let per_segment = total / segments;
    let identity = DMatrix::<f64>::identity(n, n);

    let mut states = Vec::with_capacity(total + 1);
    states.push(u0.clone());
    let mut u = u0.clone();

    for seg in 0..segments {
        // λ is constant on the segment, so one factorization serves all of
        // its steps.
        let first_mid = t_horizon * ((seg * per_segment) as f64 + 0.5) / total as f64;
        let a = assemble_matrix(path, if path.is_some() { first_mid } else { 0.0 }, grid)?;
        let lhs = &identity + (dt / 2.0) * &a;
        let rhs_mat = &identity - (dt / 2.0) * &a;
        let lu = lhs.lu();
        for k in seg * per_segment..(seg + 1) * per_segment {
            let t_mid = t_horizon * (k as f64 + 0.5) / total as f64;
            let f_mid = source.eval(grid, t_mid)?;
            let rhs = &rhs_mat * &u + dt * f_mid;
            u = lu.solve(&rhs).ok_or(Error::Divergence {
                step: k,
                detail: "implicit Crank–Nicolson matrix is singular".into(),
            })?;
            check_finite(&u, k)?;
            states.push(u.clone());
        }
    }
    Ok(StateTrajectory::new(
        grid,
        EquationKind::Heat,
        times,
        states,
    ))
}

/// Power-iteration estimate of the largest eigenvalue magnitude.
pub(crate) fn dominant_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y = a * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y).abs();
        if (next - lambda).abs() <= 1e-12 * next.max(1.0) {
            return next;
        }
        lambda = next;
        x = y / norm;
    }
    lambda
}

/// Integrates the wave equation `∂ₜ²u + A(φ(t))u = F`, `u(0) = u0`,
/// `∂ₜu(0) = u1`, by velocity Verlet with the operator frozen at step
/// midpoints. Fails before integrating when `dt·√λ_max ≥ 2`.
pub fn solve_wave(
    path: Option<&DeformationPath>,
    source: &SourceTerm,
    u0: &DVector<f64>,
    u1: &DVector<f64>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<StateTrajectory> {
    validate_evolution_inputs(path, EquationKind::Wave, source, t_horizon, steps, grid)?;
    let n = grid.interior_len();
    for v in [u0, u1] {
        if v.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: v.len(),
            });
        }
    }
    let total = effective_steps(path, steps);
    let dt = t_horizon / total as f64;
    let times = time_grid(t_horizon, total);

    // CFL check over the operators the stepper will actually see: the
    // unperturbed matrix, plus segment-midpoint samples along the path.
    let mut a = assemble_matrix(None, 0.0, grid)?;
    let mut lambda_max = dominant_eigenvalue(&a);
    if let Some(p) = path {
        let mut probe = a.clone();
        for seg in 0..p.segments() {
            let t_probe = t_horizon * (seg as f64 + 0.5) / p.segments() as f64;
            refresh_layer1_rows(&mut probe, grid, |j| p.lambda(j, t_probe));
            lambda_max = lambda_max.max(dominant_eigenvalue(&probe));
        }
    }
    if dt * lambda_max.sqrt() >= 2.0 {
        return Err(Error::Config(format!(
            "CFL violation: dt·√λ_max = {} ≥ 2; need at least {} steps",
            dt * lambda_max.sqrt(),
            (t_horizon * lambda_max.sqrt() / 2.0).ceil() as usize + 1
        )));
    }

    let mut u = u0.clone();
    let mut v = u1.clone();
    let mut states = Vec::with_capacity(total + 1);
    let stack = |u: &DVector<f64>, v: &DVector<f64>| {
        let mut s = DVector::zeros(2 * n);
        s.rows_mut(0, n).copy_from(u);
        s.rows_mut(n, n).copy_from(v);
        s
    };
    states.push(stack(&u, &v));

    for k in 0..total {
        let t_mid = t_horizon * (k as f64 + 0.5) / total as f64;
        if let Some(p) = path {
            refresh_layer1_rows(&mut a, grid, |j| p.lambda(j, t_mid));
        }
        let f_mid = source.eval(grid, t_mid)?;
        let acc = &f_mid - &a * &u;
        let u_next = &u + dt * &v + (dt * dt / 2.0) * &acc;
        let acc_avg = &f_mid - &a * ((&u + &u_next) * 0.5);
        let v_next = &v + dt * &acc_avg;
        u = u_next;
        v = v_next;
        check_finite(&u, k)?;
        check_finite(&v, k)?;
        states.push(stack(&u, &v));
    }
    Ok(StateTrajectory::new(
        grid,
        EquationKind::Wave,
        times,
        states,
    ))
}

/// Unperturbed (zero-path) evolution of either kind; the downstream
/// reference state `u₀(t)` for sensitivities, adjoints, and control.
pub fn reference_state(
    kind: EquationKind,
    source: &SourceTerm,
    u0: &DVector<f64>,
    u1: Option<&DVector<f64>>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<StateTrajectory> {
    match kind {
        EquationKind::Heat => solve_heat(None, source, u0, t_horizon, steps, grid),
        EquationKind::Wave => {
            let u1 = u1.ok_or_else(|| {
                Error::Contract("wave reference state needs an initial velocity".into())
            })?;
            solve_wave(None, source, u0, u1, t_horizon, steps, grid)
        }
    }
}
