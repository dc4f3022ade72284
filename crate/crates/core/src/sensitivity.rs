//! Linearized (Gateaux) states of the deformation-to-state map, and the
//! Fréchet-remainder check that validates them against nonlinear re-solves.
//!
//! For a base path `φ` and direction `ψ`, the heat sensitivity solves
//!
//! ```text
//! ∂ₜv + A(φ(t))v = −A'(φ(t))[ψ(t)] u_φ(t),   v(0) = 0,
//! ```
//!
//! where `u_φ` is the already-computed base trajectory and the operator
//! derivative acts only on layer 1 through the closed forms
//! `d/dλ 2(1+1/(1+λ)) = −2/(1+λ)²` and `d/dλ (−2/(2+λ)) = +2/(2+λ)²`.
//! The wave analogue forces only the velocity equation.
//!
//! The discretizations below are the *exact* derivatives of the discrete
//! solvers in [`crate::dynamics`] (same time grid, same midpoint freezing,
//! differentiated step by step). That makes the finite-difference remainder
//! `‖Λ(φ+εψ) − Λ(φ) − ε·v(T)‖` genuinely `O(ε²)` down to roundoff, and it
//! makes the assembled control map the true Jacobian of the discrete trace
//! map — which is what lets Gauss–Newton converge quadratically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{reference_state, solve_heat, solve_wave, SourceTerm, StateTrajectory};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operators::{assemble_matrix, stencil_derivative, DeformationPath, EquationKind};

/// Solution of the linearized evolution along a direction `ψ`: the
/// derivative of the state with respect to the deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedState {
    kind: EquationKind,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    base_path: Option<DeformationPath>,
    direction: DeformationPath,
}

impl LinearizedState {
    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    /// Final-time derivative `v(T)`: one column of the control map.
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    pub fn base_path(&self) -> Option<&DeformationPath> {
        self.base_path.as_ref()
    }

    pub fn direction(&self) -> &DeformationPath {
        &self.direction
    }
}

/// Applies `A'(φ(t))[ψ(t)]` to an interior vector: supported on layer 1,
/// where row `(1,j)` carries `ψ_j(t)·(−2/(1+λ_j)² · w₍₁,ⱼ₎ + 2/(2+λ_j)² · w₍₂,ⱼ₎)/h²`.
pub fn derivative_forcing(
    grid: GridSpec,
    base: Option<&DeformationPath>,
    direction: &DeformationPath,
    t: f64,
    w: &DVector<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(w.len());
    for j in 1..grid.n() {
        let lambda = base.map_or(0.0, |p| p.lambda(j, t));
        let mu = direction.lambda(j, t);
        if mu == 0.0 {
            continue;
        }
        let d = stencil_derivative(grid, lambda);
        let row = grid.interior_index(1, j);
        out[row] =
            mu * (d.center * w[grid.interior_index(1, j)] + d.east * w[grid.interior_index(2, j)]);
    }
    out
}

fn validate_linearization_inputs(
    base: Option<&DeformationPath>,
    direction: &DeformationPath,
    ref_traj: &StateTrajectory,
    grid: GridSpec,
    kind: EquationKind,
) -> Result<()> {
    if ref_traj.kind() != kind {
        return Err(Error::Contract(format!(
            "reference trajectory is {:?} but the linearization is {:?}",
            ref_traj.kind(),
            kind
        )));
    }
    if ref_traj.grid() != grid {
        return Err(Error::Contract("reference trajectory grid mismatch".into()));
    }
    if direction.kind() != kind {
        return Err(Error::Contract(format!(
            "direction kind {:?} does not match the equation kind {kind:?}",
            direction.kind()
        )));
    }
    direction.validate_for_grid(grid)?;
    let t_end = ref_traj.final_time();
    if (direction.t_horizon() - t_end).abs() > 1e-12 * t_end {
        return Err(Error::Contract(format!(
            "direction horizon {} does not match the trajectory horizon {t_end}",
            direction.t_horizon()
        )));
    }
    if let Some(p) = base {
        p.validate_for_grid(grid)?;
        p.validate_admissible()?;
        if p.kind() != kind {
            return Err(Error::Contract("base path kind mismatch".into()));
        }
        if (p.t_horizon() - t_end).abs() > 1e-12 * t_end {
            return Err(Error::Contract(format!(
                "base horizon {} does not match the trajectory horizon {t_end}",
                p.t_horizon()
            )));
        }
        let total = ref_traj.len() - 1;
        if !total.is_multiple_of(p.segments()) {
            return Err(Error::Contract(format!(
                "trajectory steps {total} are not aligned to the base path's {} segments",
                p.segments()
            )));
        }
    }
    if ref_traj.len() < 2 {
        return Err(Error::Contract("reference trajectory has no steps".into()));
    }
    Ok(())
}

/// Heat sensitivity: differentiates the midpoint-frozen Crank–Nicolson step,
/// giving `(I + dt/2·A)v_{k+1} = (I − dt/2·A)v_k − dt·A'[ψ](t_mid)·(u_k+u_{k+1})/2`
/// on the reference trajectory's own time grid.
pub fn gateaux_heat(
    base: Option<&DeformationPath>,
    direction: &DeformationPath,
    ref_traj: &StateTrajectory,
    grid: GridSpec,
) -> Result<LinearizedState> {
    validate_linearization_inputs(base, direction, ref_traj, grid, EquationKind::Heat)?;
    let n = grid.interior_len();
    let total = ref_traj.len() - 1;
    let t_horizon = ref_traj.final_time();
    let dt = t_horizon / total as f64;
    let identity = DMatrix::<f64>::identity(n, n);

    let segments = base.map_or(1, |p| p.segments());
    let per_segment = total / segments;

    let mut v = DVector::zeros(n);
    let mut states = Vec::with_capacity(total + 1);
    states.push(v.clone());

    for seg in 0..segments {
        let first_mid = t_horizon * ((seg * per_segment) as f64 + 0.5) / total as f64;
        let a = assemble_matrix(base, if base.is_some() { first_mid } else { 0.0 }, grid)?;
        let lhs = &identity + (dt / 2.0) * &a;
        let rhs_mat = &identity - (dt / 2.0) * &a;
        let lu = lhs.lu();
        for k in seg * per_segment..(seg + 1) * per_segment {
            let t_mid = t_horizon * (k as f64 + 0.5) / total as f64;
            let u_avg = (ref_traj.state(k) + ref_traj.state(k + 1)) * 0.5;
            let forcing = derivative_forcing(grid, base, direction, t_mid, &u_avg);
            let rhs = &rhs_mat * &v - dt * forcing;
            v = lu.solve(&rhs).ok_or(Error::Divergence {
                step: k,
                detail: "implicit linearized matrix is singular".into(),
            })?;
            states.push(v.clone());
        }
    }
    Ok(LinearizedState {
        kind: EquationKind::Heat,
        times: ref_traj.times().to_vec(),
        states,
        base_path: base.cloned(),
        direction: direction.clone(),
    })
}

/// Wave sensitivity: differentiates the midpoint-frozen Verlet step. States
/// are stacked `(U, V) = (∂u/∂ε, ∂(∂ₜu)/∂ε)`; the derivative forcing
/// `−A'[ψ]u` enters only the velocity (acceleration) update, mirroring the
/// block structure of the operator derivative.
pub fn gateaux_wave(
    base: Option<&DeformationPath>,
    direction: &DeformationPath,
    ref_traj: &StateTrajectory,
    grid: GridSpec,
) -> Result<LinearizedState> {
    validate_linearization_inputs(base, direction, ref_traj, grid, EquationKind::Wave)?;
    let n = grid.interior_len();
    let total = ref_traj.len() - 1;
    let t_horizon = ref_traj.final_time();
    let dt = t_horizon / total as f64;

    let mut a = assemble_matrix(None, 0.0, grid)?;
    let mut u_lin = DVector::zeros(n);
    let mut v_lin = DVector::zeros(n);
    let mut states = Vec::with_capacity(total + 1);
    let stack = |u: &DVector<f64>, v: &DVector<f64>| {
        let mut s = DVector::zeros(2 * n);
        s.rows_mut(0, n).copy_from(u);
        s.rows_mut(n, n).copy_from(v);
        s
    };
    states.push(stack(&u_lin, &v_lin));

    for k in 0..total {
        let t_mid = t_horizon * (k as f64 + 0.5) / total as f64;
        if let Some(p) = base {
            crate::operators::refresh_layer1_rows(&mut a, grid, |j| p.lambda(j, t_mid));
        }
        let u_base_k = ref_traj.position(k).clone_owned();
        let u_base_next = ref_traj.position(k + 1).clone_owned();
        let forced_k = derivative_forcing(grid, base, direction, t_mid, &u_base_k);
        let u_next = &u_lin + dt * &v_lin + (dt * dt / 2.0) * (-&forced_k - &a * &u_lin);
        let u_base_avg = (&u_base_k + &u_base_next) * 0.5;
        let forced_avg = derivative_forcing(grid, base, direction, t_mid, &u_base_avg);
        let v_next = &v_lin + dt * (-forced_avg - &a * ((&u_lin + &u_next) * 0.5));
        u_lin = u_next;
        v_lin = v_next;
        states.push(stack(&u_lin, &v_lin));
    }
    Ok(LinearizedState {
        kind: EquationKind::Wave,
        times: ref_traj.times().to_vec(),
        states,
        base_path: base.cloned(),
        direction: direction.clone(),
    })
}

/// Dispatches on the equation kind.
pub fn gateaux(
    base: Option<&DeformationPath>,
    direction: &DeformationPath,
    ref_traj: &StateTrajectory,
    grid: GridSpec,
) -> Result<LinearizedState> {
    match ref_traj.kind() {
        EquationKind::Heat => gateaux_heat(base, direction, ref_traj, grid),
        EquationKind::Wave => gateaux_wave(base, direction, ref_traj, grid),
    }
}

/// One finite-difference remainder sample of [`frechet_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetSample {
    pub direction: usize,
    pub eps: f64,
    /// `‖Λ(εψ) − Λ(0) − ε·v(T)‖`.
    pub remainder: f64,
    /// `remainder / ε`, which must tend to zero for differentiability.
    pub remainder_over_eps: f64,
}

/// Report of the Fréchet-differentiability check at the zero path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    pub samples: Vec<FrechetSample>,
    /// Log-log slope of remainder vs ε per direction; ≈ 2 for a true
    /// derivative.
    pub slopes: Vec<f64>,
    pub min_slope: f64,
}

fn fit_slope(eps_list: &[f64], remainders: &[f64]) -> f64 {
    let xs: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = remainders.iter().map(|r| r.max(1e-300).ln()).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    sxy / sxx
}

/// Validates the Gateaux derivative against full nonlinear re-solves at the
/// zero base: for each direction and each ε the remainder
/// `‖Λ(εψ) − Λ(0) − ε·v(T)‖` is recorded, and its log-log slope in ε is
/// fitted (a genuine Fréchet derivative gives slope ≈ 2).
#[allow(clippy::too_many_arguments)]
pub fn frechet_residual(
    kind: EquationKind,
    source: &SourceTerm,
    u0: &DVector<f64>,
    u1: Option<&DVector<f64>>,
    t_horizon: f64,
    steps: usize,
    directions: &[DeformationPath],
    eps_list: &[f64],
    grid: GridSpec,
) -> Result<FrechetReport> {
    if directions.is_empty() || eps_list.len() < 2 {
        return Err(Error::Config(
            "the remainder check needs at least one direction and two ε values".into(),
        ));
    }
    let reference = reference_state(kind, source, u0, u1, t_horizon, steps, grid)?;
    let base_final = reference.final_state().clone();

    let mut samples = Vec::new();
    let mut slopes = Vec::new();
    for (d, dir) in directions.iter().enumerate() {
        let lin = gateaux(None, dir, &reference, grid)?;
        let v_final = lin.final_state().clone();
        let mut remainders = Vec::new();
        for &eps in eps_list {
            let scaled: Vec<Vec<f64>> = dir
                .coeffs()
                .iter()
                .map(|row| row.iter().map(|c| eps * c).collect())
                .collect();
            let path = DeformationPath::new(kind, t_horizon, scaled)?;
            let perturbed = match kind {
                EquationKind::Heat => solve_heat(Some(&path), source, u0, t_horizon, steps, grid)?,
                EquationKind::Wave => {
                    let u1 = u1.ok_or_else(|| {
                        Error::Contract("wave check needs an initial velocity".into())
                    })?;
                    solve_wave(Some(&path), source, u0, u1, t_horizon, steps, grid)?
                }
            };
            let remainder = (perturbed.final_state() - &base_final - eps * &v_final).norm();
            remainders.push(remainder);
            samples.push(FrechetSample {
                direction: d,
                eps,
                remainder,
                remainder_over_eps: remainder / eps,
            });
        }
        slopes.push(fit_slope(eps_list, &remainders));
    }
    let min_slope = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(FrechetReport {
        samples,
        slopes,
        min_slope,
    })
}
