//! Adjoint states, the duality identity, the non-degeneracy check on the
//! first interior layer, and the discrete unique-continuation recursion.
//!
//! The adjoint of the linearized dynamics is realized as a terminal-value
//! backward solve with the transposed operator: for the heat equation `X`
//! solves `∂ₜX = AᵀX` backward from `X(T) = c` (equivalently, the jump
//! interpretation places `c` as the jump of `X` at `t = T`). Its defining
//! property is the duality identity
//!
//! ```text
//! ⟨v(T), c⟩ = ∫₀ᵀ ⟨−A'(0)[ψ(t)] u₀(t), X(t)⟩ dt,
//! ```
//!
//! which pairs the linearized state `v` of [`crate::sensitivity`] against a
//! single backward solve. Because `A'(0)[V_j]` is supported on one node, the
//! integrand collapses to layer-1 products
//! `g_j(t) = (1/h²)(½u₍₂,ⱼ₎ − 2u₍₁,ⱼ₎)·X₍₁,ⱼ₎(t)` — so `X` can only be
//! observed through `(½u₂ − 2u₁)·X₁`. The bracket `½u₂ − 2u₁` not vanishing
//! is the non-degeneracy condition; under it, vanishing pairings force
//! `X|_{Γ¹} ≡ 0`, and the stencil recursion of [`propagate_zeros`] then
//! forces `X ≡ 0` column by column, hence `c = 0`. That chain is the
//! discrete unique-continuation argument, exercised verbatim by
//! [`uc_check`].

use nalgebra::{DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dominant_eigenvalue, time_grid, StateTrajectory};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::operators::{assemble_matrix, DeformationPath, EquationKind};

/// Backward-in-time adjoint solution sampled on the forward time grid.
///
/// Heat states are interior vectors; wave states stack `(P, Q)` where `P`
/// pairs against positions and `Q` against velocities, and `Q` solves
/// `∂ₜ²Q + AQ = 0` with `∂ₜQ = −P`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    grid: GridSpec,
    kind: EquationKind,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    terminal_data: DVector<f64>,
}

impl AdjointTrajectory {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

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

    /// The vector `c` paired with the final trace; equals `X(T)` exactly.
    pub fn terminal_data(&self) -> &DVector<f64> {
        &self.terminal_data
    }

    /// Block of `X` that multiplies the operator-derivative forcing in the
    /// duality pairing: the whole state for heat, the `Q` rows for wave.
    pub fn pairing_block(&self, k: usize) -> DVectorView<'_, f64> {
        let n = self.grid.interior_len();
        match self.kind {
            EquationKind::Heat => self.states[k].rows(0, n),
            EquationKind::Wave => self.states[k].rows(n, n),
        }
    }
}

/// Solves `∂ₜX = AᵀX` backward from `X(T) = c` by the transposed
/// Crank–Nicolson step, on the uniform grid `t_k = T·k/steps`. This is the
/// exact transpose of the forward propagator, so the duality identity holds
/// up to quadrature error only.
pub fn solve_adjoint_heat(
    c: &DVector<f64>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<AdjointTrajectory> {
    let n = grid.interior_len();
    if c.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: c.len(),
        });
    }
    if !(t_horizon > 0.0 && t_horizon.is_finite()) || steps == 0 {
        return Err(Error::Config(format!(
            "adjoint solve needs a positive horizon and at least one step, got T={t_horizon}, steps={steps}"
        )));
    }
    let dt = t_horizon / steps as f64;
    let a_t = assemble_matrix(None, 0.0, grid)?.transpose();
    let identity = nalgebra::DMatrix::<f64>::identity(n, n);
    let lhs = &identity + (dt / 2.0) * &a_t;
    let rhs_mat = &identity - (dt / 2.0) * &a_t;
    let lu = lhs.lu();

    let mut states = vec![DVector::zeros(n); steps + 1];
    states[steps] = c.clone();
    for k in (0..steps).rev() {
        let rhs = &rhs_mat * &states[k + 1];
        states[k] = lu.solve(&rhs).ok_or(Error::Divergence {
            step: k,
            detail: "implicit adjoint matrix is singular".into(),
        })?;
    }
    Ok(AdjointTrajectory {
        grid,
        kind: EquationKind::Heat,
        times: time_grid(t_horizon, steps),
        states,
        terminal_data: c.clone(),
    })
}

/// Solves the transposed wave block system backward from `X(T) = c` with
/// `c = (c_P, c_Q)`. In reversed time `s = T − t` the `Q` component obeys
/// the plain wave equation `∂ₛ²Q̃ + AᵀQ̃ = 0` from `(Q̃, ∂ₛQ̃)(0) = (c_Q, c_P)`,
/// which is integrated by the same Störmer–Verlet scheme as the forward
/// dynamics (with the same CFL guard).
pub fn solve_adjoint_wave(
    c: &DVector<f64>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<AdjointTrajectory> {
    let n = grid.interior_len();
    if c.len() != 2 * n {
        return Err(Error::Dimension {
            expected: 2 * n,
            got: c.len(),
        });
    }
    if !(t_horizon > 0.0 && t_horizon.is_finite()) || steps == 0 {
        return Err(Error::Config(format!(
            "adjoint solve needs a positive horizon and at least one step, got T={t_horizon}, steps={steps}"
        )));
    }
    let dt = t_horizon / steps as f64;
    let a_t = assemble_matrix(None, 0.0, grid)?.transpose();
    let lambda_max = dominant_eigenvalue(&a_t);
    if dt * lambda_max.sqrt() >= 2.0 {
        return Err(Error::Config(format!(
            "CFL violation: dt·√λ_max = {} ≥ 2; need at least {} steps",
            dt * lambda_max.sqrt(),
            (t_horizon * lambda_max.sqrt() / 2.0).ceil() as usize + 1
        )));
    }

    let mut q = c.rows(n, n).clone_owned();
    let mut qdot = c.rows(0, n).clone_owned();
    // Reversed-time samples: index i holds (P, Q) at s_i = T·i/steps.
    let mut reversed = Vec::with_capacity(steps + 1);
    reversed.push((qdot.clone(), q.clone()));
    for _ in 0..steps {
        let q_next = &q + dt * &qdot + (dt * dt / 2.0) * (-(&a_t * &q));
        let qdot_next = &qdot + dt * (-(&a_t * ((&q + &q_next) * 0.5)));
        q = q_next;
        qdot = qdot_next;
        reversed.push((qdot.clone(), q.clone()));
    }

    let states = (0..=steps)
        .map(|k| {
            let (p, q) = &reversed[steps - k];
            let mut s = DVector::zeros(2 * n);
            s.rows_mut(0, n).copy_from(p);
            s.rows_mut(n, n).copy_from(q);
            s
        })
        .collect();
    Ok(AdjointTrajectory {
        grid,
        kind: EquationKind::Wave,
        times: time_grid(t_horizon, steps),
        states,
        terminal_data: c.clone(),
    })
}

/// Dispatches on the equation kind.
pub fn solve_adjoint(
    kind: EquationKind,
    c: &DVector<f64>,
    t_horizon: f64,
    steps: usize,
    grid: GridSpec,
) -> Result<AdjointTrajectory> {
    match kind {
        EquationKind::Heat => solve_adjoint_heat(c, t_horizon, steps, grid),
        EquationKind::Wave => solve_adjoint_wave(c, t_horizon, steps, grid),
    }
}

/// The layer-1 bracket `½u₍₂,ⱼ₎ − 2u₍₁,ⱼ₎` (no `1/h²` factor), whose
/// nonvanishing is the non-degeneracy condition.
fn ndd_bracket(positions: &DVectorView<'_, f64>, grid: GridSpec, j: usize) -> f64 {
    0.5 * positions[grid.interior_index(2, j)] - 2.0 * positions[grid.interior_index(1, j)]
}

/// Outcome of scanning the non-degeneracy bracket over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NddReport {
    /// `min over sampled (t, j)` of `|½u₍₂,ⱼ₎(t) − 2u₍₁,ⱼ₎(t)|`.
    pub min_abs: f64,
    /// Time at which the minimum is attained.
    pub arg_t: f64,
    /// Boundary row `j` at which the minimum is attained.
    pub arg_j: usize,
    /// Threshold the minimum is compared against.
    pub threshold: f64,
    /// `min_abs > threshold`.
    pub satisfied: bool,
}

/// Inclusive sample-index range of `times` covered by `[lo, hi]`.
fn window_range(times: &[f64], window: (f64, f64)) -> Result<(usize, usize)> {
    let (lo, hi) = window;
    let t_end = *times.last().unwrap();
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > t_end * (1.0 + 1e-12) || lo >= hi {
        return Err(Error::Config(format!(
            "window [{lo}, {hi}] is not an ordered subinterval of [0, {t_end}]"
        )));
    }
    let tol = 1e-12 * t_end.max(1.0);
    let first = times.iter().position(|&t| t >= lo - tol);
    let last = times.iter().rposition(|&t| t <= hi + tol);
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b)),
        _ => Err(Error::Config(format!(
            "window [{lo}, {hi}] contains no time samples"
        ))),
    }
}

/// Scans the non-degeneracy bracket of a reference trajectory (its position
/// component, for waves) over the window `[t_lo, t_hi]`.
///
/// Defaults: window `[0.05·T, T]` — zero initial data makes the bracket
/// vanish at `t = 0`, so the condition is certified only from `t_lo` on —
/// and threshold `10⁻⁸·max|u|` with the maximum taken over the window.
pub fn check_ndd(
    ref_traj: &StateTrajectory,
    threshold: Option<f64>,
    window: Option<(f64, f64)>,
) -> Result<NddReport> {
    let grid = ref_traj.grid();
    let t_end = ref_traj.final_time();
    let window = window.unwrap_or((0.05 * t_end, t_end));
    let (k_lo, k_hi) = window_range(ref_traj.times(), window)?;

    let mut scale = 0.0_f64;
    for k in k_lo..=k_hi {
        scale = scale.max(ref_traj.position(k).amax());
    }
    let threshold = threshold.unwrap_or(1e-8 * scale);

    let mut min_abs = f64::INFINITY;
    let mut arg = (ref_traj.time(k_lo), 1);
    for k in k_lo..=k_hi {
        let u = ref_traj.position(k);
        for j in 1..grid.n() {
            let b = ndd_bracket(&u, grid, j).abs();
            if b < min_abs {
                min_abs = b;
                arg = (ref_traj.time(k), j);
            }
        }
    }
    Ok(NddReport {
        min_abs,
        arg_t: arg.0,
        arg_j: arg.1,
        threshold,
        satisfied: min_abs > threshold,
    })
}

fn check_aligned(x: &AdjointTrajectory, ref_traj: &StateTrajectory) -> Result<()> {
    if x.grid() != ref_traj.grid() || x.kind() != ref_traj.kind() {
        return Err(Error::Contract(
            "adjoint and reference disagree on grid or kind".into(),
        ));
    }
    if x.len() != ref_traj.len() {
        return Err(Error::Contract(format!(
            "adjoint has {} samples but the reference has {}",
            x.len(),
            ref_traj.len()
        )));
    }
    let tol = 1e-12 * ref_traj.final_time().max(1.0);
    if x.times()
        .iter()
        .zip(ref_traj.times())
        .any(|(a, b)| (a - b).abs() > tol)
    {
        return Err(Error::Contract(
            "adjoint and reference time grids are misaligned".into(),
        ));
    }
    Ok(())
}

/// The duality integrands `g_j(t_k) = (1/h²)(½u₍₂,ⱼ₎ − 2u₍₁,ⱼ₎)·X₍₁,ⱼ₎(t_k)`,
/// one time series per boundary row `j = 1..N−1`.
///
/// Everything the adjoint can see of a deformation passes through these
/// `N−1` scalar functions: `⟨A'(0)[ψ(t)]u₀(t), X(t)⟩ = Σ_j ψ_j(t)·g_j(t)`.
pub fn layer1_pairing(x: &AdjointTrajectory, ref_traj: &StateTrajectory) -> Result<Vec<Vec<f64>>> {
    check_aligned(x, ref_traj)?;
    let grid = ref_traj.grid();
    let h2 = grid.h() * grid.h();
    let mut out = vec![vec![0.0; ref_traj.len()]; grid.n() - 1];
    for k in 0..ref_traj.len() {
        let u = ref_traj.position(k);
        let xk = x.pairing_block(k);
        for (row, g_j) in out.iter_mut().enumerate() {
            let j = row + 1;
            g_j[k] = ndd_bracket(&u, grid, j) / h2 * xk[grid.interior_index(1, j)];
        }
    }
    Ok(out)
}

/// `max_j sup_t |g_j(t)|` — the converse unique-continuation witness: it is
/// strictly positive whenever `c ≠ 0` and the reference is non-degenerate.
pub fn pairing_sup(pairings: &[Vec<f64>]) -> f64 {
    pairings
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |m, g| m.max(g.abs()))
}

/// Right-hand side of the duality identity:
/// `−∫₀ᵀ Σ_j ψ_j(t)·g_j(t) dt` by trapezoidal quadrature.
///
/// For heat directions (piecewise constant in time) the integral is split at
/// segment boundaries so the quadrature never straddles a jump; wave
/// directions are continuous and integrate directly.
pub fn duality_rhs(
    pairings: &[Vec<f64>],
    direction: &DeformationPath,
    times: &[f64],
) -> Result<f64> {
    if pairings.len() != direction.rows() {
        return Err(Error::Dimension {
            expected: direction.rows(),
            got: pairings.len(),
        });
    }
    let samples = times.len();
    if samples < 2 || pairings.iter().any(|row| row.len() != samples) {
        return Err(Error::Contract(
            "pairings and times must share ≥ 2 samples".into(),
        ));
    }
    let total = samples - 1;
    let dt = times[total] / total as f64;
    let mut integral = 0.0;
    match direction.kind() {
        EquationKind::Heat => {
            let segs = direction.segments();
            if !total.is_multiple_of(segs) {
                return Err(Error::Contract(format!(
                    "{total} steps are not aligned to {segs} direction segments"
                )));
            }
            let per = total / segs;
            for (j_row, g) in pairings.iter().enumerate() {
                for (seg, &psi) in direction.coeffs()[j_row].iter().enumerate() {
                    let (a, b) = (seg * per, (seg + 1) * per);
                    let mut seg_int = 0.5 * (g[a] + g[b]);
                    for gk in &g[a + 1..b] {
                        seg_int += gk;
                    }
                    integral += psi * seg_int * dt;
                }
            }
        }
        EquationKind::Wave => {
            for (j_row, g) in pairings.iter().enumerate() {
                let j = j_row + 1;
                for (k, (&t, &gk)) in times.iter().zip(g).enumerate() {
                    let w = if k == 0 || k == total { 0.5 } else { 1.0 };
                    integral += w * direction.lambda(j, t) * gk * dt;
                }
            }
        }
    }
    Ok(-integral)
}

/// Layer-1 values recovered from pairings by dividing out the
/// non-degeneracy bracket on a window where it is certified nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer1Recovery {
    /// Inclusive sample range of the window inside the trajectory's grid.
    pub window: (usize, usize),
    /// Recovered `X₍₁,ⱼ₎(t)` per boundary row, over the window samples.
    pub series: Vec<Vec<f64>>,
    /// `sup_t |X₍₁,ⱼ₎(t)|` per boundary row.
    pub sup_abs: Vec<f64>,
}

/// Inverts `g_j = (1/h²)·bracket_j·X₍₁,ⱼ₎` for `X₍₁,ⱼ₎` on the window.
/// Requires the non-degeneracy condition there: the division is only valid
/// where the bracket is certified away from zero.
pub fn layer1_from_pairings(
    pairings: &[Vec<f64>],
    ref_traj: &StateTrajectory,
    window: Option<(f64, f64)>,
) -> Result<Layer1Recovery> {
    let grid = ref_traj.grid();
    if pairings.len() != grid.n() - 1 || pairings.iter().any(|r| r.len() != ref_traj.len()) {
        return Err(Error::Contract(
            "pairings do not match the reference's shape".into(),
        ));
    }
    let ndd = check_ndd(ref_traj, None, window)?;
    if !ndd.satisfied {
        return Err(Error::Contract(format!(
            "layer-1 recovery needs the non-degeneracy bracket bounded away from zero; \
             min |½u₂ − 2u₁| = {} at (t = {}, j = {})",
            ndd.min_abs, ndd.arg_t, ndd.arg_j
        )));
    }
    let t_end = ref_traj.final_time();
    let window = window.unwrap_or((0.05 * t_end, t_end));
    let (k_lo, k_hi) = window_range(ref_traj.times(), window)?;
    let h2 = grid.h() * grid.h();

    let mut series = Vec::with_capacity(grid.n() - 1);
    let mut sup_abs = Vec::with_capacity(grid.n() - 1);
    for (j_row, g) in pairings.iter().enumerate() {
        let j = j_row + 1;
        let mut row = Vec::with_capacity(k_hi - k_lo + 1);
        let mut sup = 0.0_f64;
        for (offset, &gk) in g[k_lo..=k_hi].iter().enumerate() {
            let bracket = ndd_bracket(&ref_traj.position(k_lo + offset), grid, j);
            let x1 = gk * h2 / bracket;
            sup = sup.max(x1.abs());
            row.push(x1);
        }
        series.push(row);
        sup_abs.push(sup);
    }
    Ok(Layer1Recovery {
        window: (k_lo, k_hi),
        series,
        sup_abs,
    })
}

/// Centered second-order time derivative with one-sided second-order
/// closures at the endpoints.
fn time_derivative_series(series: &[DVector<f64>], dt: f64) -> Vec<DVector<f64>> {
    let m = series.len();
    (0..m)
        .map(|k| {
            if k == 0 {
                (-3.0 * &series[0] + 4.0 * &series[1] - &series[2]) / (2.0 * dt)
            } else if k == m - 1 {
                (3.0 * &series[m - 1] - 4.0 * &series[m - 2] + &series[m - 3]) / (2.0 * dt)
            } else {
                (&series[k + 1] - &series[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Checks that the derivative estimate is stable under halving the sampling
/// rate. The change is weighted by `h²` and compared to the column's own
/// scale, because that is how the derivative enters the reconstruction
/// stencil alongside O(1) neighbor terms.
fn check_time_resolution(series: &[DVector<f64>], dt: f64, h2: f64) -> Result<()> {
    let scale = series.iter().map(|v| v.amax()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Ok(());
    }
    let coarse: Vec<DVector<f64>> = series.iter().step_by(2).cloned().collect();
    let d_fine = time_derivative_series(series, dt);
    let d_coarse = time_derivative_series(&coarse, 2.0 * dt);
    // Compare at shared samples where both estimates are centered.
    let mut change = 0.0_f64;
    for (kc, dc) in d_coarse.iter().enumerate().skip(1).take(coarse.len() - 2) {
        let kf = 2 * kc;
        if kf == series.len() - 1 {
            continue;
        }
        change = change.max((&d_fine[kf] - dc).amax());
    }
    if h2 * change > 0.1 * scale {
        return Err(Error::Resolution(format!(
            "time grid too coarse for the derivative rule: halving the sampling changes \
             h²·∂ₜ by {:.3e} against a data scale of {:.3e}",
            h2 * change,
            scale
        )));
    }
    Ok(())
}

/// Reconstructs a field from its two leftmost columns by the stencil
/// recursion
///
/// ```text
/// X₍ₖ₊₁,ⱼ₎ = 4X₍ₖ,ⱼ₎ − X₍ₖ₋₁,ⱼ₎ − X₍ₖ,ⱼ₊₁₎ − X₍ₖ,ⱼ₋₁₎ − h²·∂ₜX₍ₖ,ⱼ₎,
/// ```
///
/// the evolution equation `∂ₜX = AX` solved for the east neighbor. Columns
/// are indexed `i = 0..=M`; inputs are the time series of columns 0 and 1
/// (each sample a vector over rows `j = 0..=N`), and the top/bottom rows of
/// reconstructed columns are zero (the Dirichlet hypothesis). Identically
/// zero inputs reconstruct to exact zeros — the recursion on zeros performs
/// no rounding. This is the computable form of the unique-continuation
/// induction: columns 0 and 1 vanishing for all time forces every column to
/// vanish.
pub fn propagate_zeros(
    col0: &[DVector<f64>],
    col1: &[DVector<f64>],
    times: &[f64],
    grid: GridSpec,
) -> Result<Vec<GridField>> {
    let samples = times.len();
    if samples < 5 {
        return Err(Error::Resolution(format!(
            "zero propagation needs at least 5 time samples for the derivative rule, got {samples}"
        )));
    }
    if col0.len() != samples || col1.len() != samples {
        return Err(Error::Contract(
            "column series must match the time grid length".into(),
        ));
    }
    let rows = grid.n() + 1;
    for v in col0.iter().chain(col1) {
        if v.len() != rows {
            return Err(Error::Dimension {
                expected: rows,
                got: v.len(),
            });
        }
    }
    let dt = (times[samples - 1] - times[0]) / (samples - 1) as f64;
    if dt <= 0.0
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt)
    {
        return Err(Error::Contract(
            "time samples must be uniform and increasing".into(),
        ));
    }
    let h2 = grid.h() * grid.h();
    check_time_resolution(col0, dt, h2)?;
    check_time_resolution(col1, dt, h2)?;

    let mut columns: Vec<Vec<DVector<f64>>> = vec![col0.to_vec(), col1.to_vec()];
    for k in 1..grid.m() - 1 {
        let d = time_derivative_series(&columns[k], dt);
        let mut next = Vec::with_capacity(samples);
        for t in 0..samples {
            let cur = &columns[k][t];
            let prev = &columns[k - 1][t];
            let mut col = DVector::zeros(rows);
            for j in 1..grid.n() {
                col[j] = 4.0 * cur[j] - prev[j] - cur[j + 1] - cur[j - 1] - h2 * d[t][j];
            }
            next.push(col);
        }
        columns.push(next);
    }

    let fields = (0..samples)
        .map(|t| {
            let mut f = GridField::zeros(grid);
            for (i, col) in columns.iter().enumerate() {
                for (j, &value) in col[t].iter().enumerate() {
                    f.set(i, j, value);
                }
            }
            f
        })
        .collect();
    Ok(fields)
}

/// Unique-continuation summary over randomized terminal vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueContinuationReport {
    /// Number of random terminal vectors tested.
    pub trials: usize,
    /// Bound on a terminal vector whose pairings all vanish, obtained by
    /// running the recovery → zero-propagation chain under that hypothesis;
    /// `None` when non-degeneracy fails and the chain cannot run.
    pub max_residual_c: Option<f64>,
    /// `min` over trials of `max_j sup_t |g_j|`: every nonzero `c` must
    /// yield a strictly positive value when the reference is
    /// non-degenerate.
    pub min_pairing_sup: f64,
    /// Whether some unit `c` annihilated every pairing (up to scale),
    /// witnessing deficiency.
    pub annihilating_c_found: bool,
}

/// Verdict of the combined non-degeneracy + unique-continuation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UcVerdict {
    Holds,
    Violated,
}

/// Full output of the unique-continuation pipeline on one reference
/// trajectory; serializes to the report emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcCheck {
    pub ndd: NddReport,
    pub unique_continuation: UniqueContinuationReport,
    pub verdict: UcVerdict,
}

/// Runs the unique-continuation argument end to end on `trials` random unit
/// terminal vectors:
///
/// 1. converse witness — each `c ≠ 0` must produce some nonvanishing
///    pairing `g_j`;
/// 2. enforced hypothesis — assuming `g_j ≡ 0` for all `j`, divide by the
///    non-degeneracy bracket ([`layer1_from_pairings`]) to get
///    `X|_{Γ¹} ≡ 0`, then run [`propagate_zeros`] on the zero columns; the
///    reconstructed adjoint bounds `‖c‖` and must vanish.
///
/// With a degenerate reference (bracket ≡ 0) the chain cannot run and every
/// `c` annihilates the pairings, which the report records as deficiency.
pub fn uc_check(ref_traj: &StateTrajectory, trials: usize, seed: u64) -> Result<UcCheck> {
    if trials == 0 {
        return Err(Error::Config(
            "unique continuation needs at least one trial".into(),
        ));
    }
    let grid = ref_traj.grid();
    let t_end = ref_traj.final_time();
    let steps = ref_traj.len() - 1;
    let ndd = check_ndd(ref_traj, None, None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = ref_traj.state_dim();
    let mut min_sup = f64::INFINITY;
    let mut bracket_scale = 0.0_f64;
    for k in 0..ref_traj.len() {
        let u = ref_traj.position(k);
        for j in 1..grid.n() {
            bracket_scale = bracket_scale.max(ndd_bracket(&u, grid, j).abs());
        }
    }
    for _ in 0..trials {
        let mut c = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let norm = c.norm();
        if norm == 0.0 {
            c[0] = 1.0;
        } else {
            c /= norm;
        }
        let x = solve_adjoint(ref_traj.kind(), &c, t_end, steps, grid)?;
        let pairings = layer1_pairing(&x, ref_traj)?;
        min_sup = min_sup.min(pairing_sup(&pairings));
    }
    let h2 = grid.h() * grid.h();
    let pairing_tol = 1e-10 * bracket_scale / h2;
    let annihilating_c_found = min_sup <= pairing_tol;

    // Enforced hypothesis: the chain is independent of which c produced the
    // vanishing pairings — that independence is the whole argument.
    let max_residual_c = if ndd.satisfied {
        let zero_pairings = vec![vec![0.0; ref_traj.len()]; grid.n() - 1];
        let recovery = layer1_from_pairings(&zero_pairings, ref_traj, None)?;
        let (k_lo, k_hi) = recovery.window;
        let rows = grid.n() + 1;
        let window_times = &ref_traj.times()[k_lo..=k_hi];
        let col0 = vec![DVector::zeros(rows); window_times.len()];
        let col1: Vec<DVector<f64>> = (0..window_times.len())
            .map(|t| {
                let mut col = DVector::zeros(rows);
                for (j_row, row) in recovery.series.iter().enumerate() {
                    col[j_row + 1] = row[t];
                }
                col
            })
            .collect();
        let fields = propagate_zeros(&col0, &col1, window_times, grid)?;
        let mut sup = 0.0_f64;
        for f in &fields {
            for (i, j) in f.grid().interior_nodes() {
                sup = sup.max(f.get(i, j).abs());
            }
        }
        Some(sup)
    } else {
        None
    };

    let verdict =
        if ndd.satisfied && !annihilating_c_found && max_residual_c.is_some_and(|r| r <= 1e-8) {
            UcVerdict::Holds
        } else {
            UcVerdict::Violated
        };
    Ok(UcCheck {
        ndd,
        unique_continuation: UniqueContinuationReport {
            trials,
            max_residual_c,
            min_pairing_sup: min_sup,
            annihilating_c_found,
        },
        verdict,
    })
}
