//! The deformation-to-trace map, its finite-dimensional Jacobian, the
//! surjectivity certificate, and the local controllability solver.
//!
//! A control problem fixes grid, equation kind, source, initial data, a
//! horizon `T` split into `K` basis segments, and a target trace. The trace
//! map `Λ` sends a deformation path to the final state — `u(T)` for heat,
//! `(u(T), ∂ₜu(T))` for wave — and the control question is to invert it
//! locally: find an admissible path whose trace hits the target.
//!
//! The Jacobian `G = dΛ(φ)` is assembled column by column from linearized
//! solves, one per basis direction `(j, k)`; because those solves are the
//! exact derivative of the discrete trace map, Gauss–Newton with `G` enjoys
//! genuine local quadratic convergence. Surjectivity of `dΛ(0)` — the
//! theoretical heart of local controllability — is certified two ways that
//! must agree: the smallest singular value of `G`, and the
//! unique-continuation trials of [`crate::adjoint`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjoint::{
    duality_rhs, layer1_pairing, solve_adjoint, uc_check, NddReport, UcVerdict,
    UniqueContinuationReport,
};
use crate::dynamics::{solve_heat, solve_wave, SourceTerm, StateTrajectory};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operators::{DeformationPath, EquationKind, AMPLITUDE_BOUND};
use crate::sensitivity::gateaux;

/// Singular values below `RANK_TOLERANCE·σ₁` do not count toward the
/// surjectivity verdict.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// Pseudoinverse cutoff: singular values below `PINV_CUTOFF·σ₁` are treated
/// as zero when solving for a Gauss–Newton step.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Hard clamp applied by the box projection, strictly inside the open
/// admissible interval `(−1/2, 1/2)`.
pub const BOX_CLAMP: f64 = 0.499;

/// A fully specified controllability problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    kind: EquationKind,
    grid: GridSpec,
    source: SourceTerm,
    u0: DVector<f64>,
    u1: Option<DVector<f64>>,
    t_horizon: f64,
    steps: usize,
    segments: usize,
    target: DVector<f64>,
}

/// Default number of time segments: enough basis columns for the parameter
/// count `(N−1)·K` to reach the state dimension.
pub fn default_segments(kind: EquationKind, grid: GridSpec) -> usize {
    match kind {
        EquationKind::Heat => grid.m() - 1,
        EquationKind::Wave => 2 * (grid.m() - 1),
    }
}

impl ControlProblem {
    /// Validates and normalizes a problem description. `steps` is rounded
    /// up to a multiple of `segments` so integration steps never straddle a
    /// basis-segment boundary.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: EquationKind,
        grid: GridSpec,
        source: SourceTerm,
        u0: DVector<f64>,
        u1: Option<DVector<f64>>,
        t_horizon: f64,
        steps: usize,
        segments: usize,
        target: DVector<f64>,
    ) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive finite, got {t_horizon}"
            )));
        }
        if steps == 0 || segments == 0 {
            return Err(Error::Config(
                "steps and segments must be at least 1".into(),
            ));
        }
        source.validate(grid, t_horizon)?;
        let n = grid.interior_len();
        if u0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: u0.len(),
            });
        }
        match (kind, &u1) {
            (EquationKind::Wave, None) => {
                return Err(Error::Contract(
                    "wave problems need an initial velocity".into(),
                ))
            }
            (EquationKind::Heat, Some(_)) => {
                return Err(Error::Contract(
                    "heat problems take no initial velocity".into(),
                ))
            }
            (EquationKind::Wave, Some(v)) if v.len() != n => {
                return Err(Error::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
            _ => {}
        }
        let state_dim = match kind {
            EquationKind::Heat => n,
            EquationKind::Wave => 2 * n,
        };
        if target.len() != state_dim {
            return Err(Error::Dimension {
                expected: state_dim,
                got: target.len(),
            });
        }
        let steps = segments * steps.div_ceil(segments);
        Ok(ControlProblem {
            kind,
            grid,
            source,
            u0,
            u1,
            t_horizon,
            steps,
            segments,
            target,
        })
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn source(&self) -> &SourceTerm {
        &self.source
    }

    pub fn initial_position(&self) -> &DVector<f64> {
        &self.u0
    }

    pub fn initial_velocity(&self) -> Option<&DVector<f64>> {
        self.u1.as_ref()
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    /// Integration steps, already a multiple of `segments`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `n` for heat, `2n` for wave: the dimension of the trace.
    pub fn state_dim(&self) -> usize {
        self.target.len()
    }

    /// Number of control parameters `(N−1)·K`.
    pub fn parameter_dim(&self) -> usize {
        (self.grid.n() - 1) * self.segments
    }

    fn solve(&self, path: Option<&DeformationPath>) -> Result<StateTrajectory> {
        match self.kind {
            EquationKind::Heat => solve_heat(
                path,
                &self.source,
                &self.u0,
                self.t_horizon,
                self.steps,
                self.grid,
            ),
            EquationKind::Wave => solve_wave(
                path,
                &self.source,
                &self.u0,
                self.u1.as_ref().unwrap(),
                self.t_horizon,
                self.steps,
                self.grid,
            ),
        }
    }

    /// Full reference trajectory at the zero deformation.
    pub fn reference_trajectory(&self) -> Result<StateTrajectory> {
        self.solve(None)
    }
}

/// The unperturbed final trace `Z_d = Λ(0)`, against which targets are
/// "nearby" in the local controllability statement.
pub fn reference_trace(problem: &ControlProblem) -> Result<DVector<f64>> {
    Ok(problem.solve(None)?.final_state().clone())
}

/// Evaluates the trace map `Λ(φ)`: runs the dynamics under `path` and
/// returns the final state. Deterministic — identical inputs give
/// bit-identical traces.
pub fn trace_map(path: &DeformationPath, problem: &ControlProblem) -> Result<DVector<f64>> {
    if path.kind() != problem.kind {
        return Err(Error::Contract(
            "path kind does not match the problem".into(),
        ));
    }
    if path.segments() != problem.segments {
        return Err(Error::Contract(format!(
            "path has {} segments but the problem uses {}",
            path.segments(),
            problem.segments
        )));
    }
    if (path.t_horizon() - problem.t_horizon).abs() > 1e-12 * problem.t_horizon {
        return Err(Error::Contract(
            "path horizon does not match the problem".into(),
        ));
    }
    Ok(problem.solve(Some(path))?.final_state().clone())
}

/// Dense Jacobian of the trace map with respect to the basis coefficients,
/// plus its singular values (descending).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMapMatrix {
    g: DMatrix<f64>,
    singular_values: DVector<f64>,
    boundary_rows: usize,
    segments: usize,
}

impl ControlMapMatrix {
    /// Column of the basis direction `(j, k)`: boundary row `j` (1-based),
    /// time segment `k` (0-based). Directions flatten j-major.
    pub fn column_index(&self, j: usize, k: usize) -> usize {
        debug_assert!((1..=self.boundary_rows).contains(&j) && k < self.segments);
        (j - 1) * self.segments + k
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Singular values, descending; length `min(state_dim, parameter_dim)`.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values[self.singular_values.len() - 1]
    }
}

/// Assembles `dΛ(φ)` at an arbitrary base path (`None` = zero): column
/// `(j, k)` is the final-time linearized response to the unit basis
/// direction on boundary node `j`, time segment `k`.
pub fn assemble_control_map_at(
    problem: &ControlProblem,
    base: Option<&DeformationPath>,
) -> Result<ControlMapMatrix> {
    let grid = problem.grid;
    let rows = grid.n() - 1;
    let segs = problem.segments;
    let ref_traj = problem.solve(base)?;
    let mut g = DMatrix::zeros(problem.state_dim(), rows * segs);
    for j in 1..=rows {
        for k in 0..segs {
            let dir = DeformationPath::basis_direction(
                problem.kind,
                problem.t_horizon,
                rows,
                segs,
                j,
                k,
            )?;
            let lin = gateaux(base, &dir, &ref_traj, grid)?;
            g.column_mut((j - 1) * segs + k)
                .copy_from(lin.final_state());
        }
    }
    let mut singular_values = g.clone().singular_values();
    singular_values
        .as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(ControlMapMatrix {
        g,
        singular_values,
        boundary_rows: rows,
        segments: segs,
    })
}

/// Assembles `dΛ(0)`, the object the surjectivity theory speaks about.
pub fn assemble_control_map(problem: &ControlProblem) -> Result<ControlMapMatrix> {
    assemble_control_map_at(problem, None)
}

/// Computes `Gᵀc` without ever forming `G`: one backward adjoint solve,
/// then the layer-1 pairings integrated against each basis weight. Agreement
/// with the explicit `Gᵀc` is the global transpose-correctness check tying
/// the control map to the adjoint module.
pub fn transpose_apply_via_adjoint(
    problem: &ControlProblem,
    c: &DVector<f64>,
) -> Result<DVector<f64>> {
    if c.len() != problem.state_dim() {
        return Err(Error::Dimension {
            expected: problem.state_dim(),
            got: c.len(),
        });
    }
    let grid = problem.grid;
    let rows = grid.n() - 1;
    let segs = problem.segments;
    let ref_traj = problem.reference_trajectory()?;
    let x = solve_adjoint(problem.kind, c, problem.t_horizon, problem.steps, grid)?;
    let pairings = layer1_pairing(&x, &ref_traj)?;
    let mut out = DVector::zeros(rows * segs);
    for j in 1..=rows {
        for k in 0..segs {
            let dir = DeformationPath::basis_direction(
                problem.kind,
                problem.t_horizon,
                rows,
                segs,
                j,
                k,
            )?;
            out[(j - 1) * segs + k] = duality_rhs(&pairings, &dir, ref_traj.times())?;
        }
    }
    Ok(out)
}

/// Verdict of the surjectivity certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Surjective,
    Deficient,
}

/// Numerical certificate for (or against) surjectivity of `dΛ(0)`,
/// combining the singular-value test with the unique-continuation trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurjectivityReport {
    /// Smallest singular value over `min(state_dim, parameters)`.
    pub sigma_min: f64,
    /// Largest singular value.
    pub sigma_max: f64,
    /// `σ₁/σ_min`; absent when `σ_min = 0`.
    pub condition: Option<f64>,
    /// Relative threshold used for the rank decision.
    pub rank_tolerance: f64,
    /// Number of assembled columns `(N−1)·K`.
    pub columns: usize,
    /// Trace dimension the map must cover.
    pub state_dim: usize,
    /// Non-degeneracy scan of the reference trajectory.
    pub ndd: NddReport,
    /// Randomized unique-continuation trials.
    pub unique_continuation: UniqueContinuationReport,
    /// Verdict of the unique-continuation pipeline.
    pub uc_verdict: UcVerdict,
    /// `surjective` iff `σ_min > rank_tolerance·σ₁` and there are at least
    /// `state_dim` columns.
    pub verdict: Verdict,
}

/// Builds the combined certificate: SVD of `dΛ(0)` plus the adjoint-side
/// unique-continuation trials on the same reference trajectory. The two
/// verdicts are independent computations and are expected to agree.
pub fn surjectivity_report(
    problem: &ControlProblem,
    trials: usize,
    seed: u64,
) -> Result<SurjectivityReport> {
    let map = assemble_control_map(problem)?;
    let sigma_max = map.sigma_max();
    let sigma_min = map.sigma_min();
    let columns = map.matrix().ncols();
    let state_dim = problem.state_dim();
    let verdict =
        if sigma_min > RANK_TOLERANCE * sigma_max && sigma_max > 0.0 && columns >= state_dim {
            Verdict::Surjective
        } else {
            Verdict::Deficient
        };
    let ref_traj = problem.reference_trajectory()?;
    let uc = uc_check(&ref_traj, trials, seed)?;
    Ok(SurjectivityReport {
        sigma_min,
        sigma_max,
        condition: (sigma_min > 0.0).then_some(sigma_max / sigma_min),
        rank_tolerance: RANK_TOLERANCE,
        columns,
        state_dim,
        ndd: uc.ndd,
        unique_continuation: uc.unique_continuation,
        uc_verdict: uc.verdict,
        verdict,
    })
}

/// Tuning knobs for [`solve_control`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Gauss–Newton iteration budget.
    pub max_iter: usize,
    /// Convergence when `‖Λ(φ) − target‖ ≤ tol·‖target‖` (absolute when the
    /// target is zero).
    pub tol: f64,
    /// Backtracking shrink factor per rejected step.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 30,
            tol: 1e-8,
            damping: 0.5,
        }
    }
}

/// Result of a successful control solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// Admissible deformation path reaching the target within tolerance.
    pub path: DeformationPath,
    /// `‖Λ(φ_i) − target‖` per accepted iterate, nonincreasing.
    pub residual_history: Vec<f64>,
    /// Accepted Gauss–Newton steps taken.
    pub iterations: usize,
    /// The achieved final trace `Λ(path)`.
    pub trace: DVector<f64>,
}

/// Projects candidate coefficients into the admissible set: box clamp to
/// `±0.499`, and for wave paths a forward pass clamping each knot-to-knot
/// slope strictly below 1.
fn project_coefficients(
    kind: EquationKind,
    t_horizon: f64,
    segments: usize,
    coeffs: &mut [Vec<f64>],
) {
    for row in coeffs.iter_mut() {
        for lam in row.iter_mut() {
            *lam = lam.clamp(-BOX_CLAMP, BOX_CLAMP);
        }
        if kind == EquationKind::Wave && segments > 1 {
            let max_jump = 0.999 * (t_horizon / segments as f64);
            for k in 1..row.len() {
                let lo = (row[k - 1] - max_jump).max(-BOX_CLAMP);
                let hi = (row[k - 1] + max_jump).min(BOX_CLAMP);
                row[k] = row[k].clamp(lo, hi);
            }
        }
    }
    debug_assert!(coeffs.iter().flatten().all(|l| l.abs() < AMPLITUDE_BOUND));
}

/// Local controllability made constructive: Gauss–Newton on the trace map.
///
/// Each iteration assembles the exact Jacobian at the current path, solves
/// for a step through the SVD pseudoinverse (cutoff `10⁻¹⁰σ₁`), backtracks
/// by halving until the residual strictly decreases, and projects onto the
/// admissible set. The residual history is therefore monotone. Fails with
/// a non-convergence report when the budget or the backtracking stalls, and
/// with a deficiency report when the Jacobian's rank collapses at an
/// iterate.
pub fn solve_control(problem: &ControlProblem, options: SolveOptions) -> Result<ControlSolution> {
    let tol_ok = options.tol > 0.0 && options.tol.is_finite();
    let damping_ok = options.damping > 0.0 && options.damping < 1.0;
    if !tol_ok || !damping_ok {
        return Err(Error::Config(
            "solver options need tol > 0 and damping strictly between 0 and 1".into(),
        ));
    }
    let rows = problem.grid.n() - 1;
    let segs = problem.segments;
    let target = &problem.target;
    let scale = if target.norm() > 0.0 {
        target.norm()
    } else {
        1.0
    };

    let mut coeffs = vec![vec![0.0; segs]; rows];
    let mut path = DeformationPath::new(problem.kind, problem.t_horizon, coeffs.clone())?;
    let mut trace = trace_map(&path, problem)?;
    let mut res_norm = (target - &trace).norm();
    let mut history = vec![res_norm];

    for iter in 0..=options.max_iter {
        if res_norm <= options.tol * scale {
            return Ok(ControlSolution {
                path,
                residual_history: history,
                iterations: iter,
                trace,
            });
        }
        if iter == options.max_iter {
            break;
        }
        let map = assemble_control_map_at(problem, Some(&path))?;
        let sigma_max = map.sigma_max();
        if sigma_max == 0.0 || map.sigma_min() <= PINV_CUTOFF * sigma_max {
            let report = surjectivity_report(problem, 8, 0)?;
            return Err(Error::Deficient {
                report: Box::new(report),
            });
        }
        let residual = target - &trace;
        let svd = nalgebra::linalg::SVD::new(map.matrix().clone(), true, true);
        let delta = svd
            .solve(&residual, PINV_CUTOFF * sigma_max)
            .map_err(|e| Error::Contract(e.to_string()))?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let mut cand = coeffs.clone();
            for j in 1..=rows {
                for k in 0..segs {
                    cand[j - 1][k] += step * delta[(j - 1) * segs + k];
                }
            }
            project_coefficients(problem.kind, problem.t_horizon, segs, &mut cand);
            let cand_path = DeformationPath::new(problem.kind, problem.t_horizon, cand.clone())?;
            let cand_trace = trace_map(&cand_path, problem)?;
            let cand_res = (target - &cand_trace).norm();
            if cand_res < res_norm {
                accepted = Some((cand, cand_path, cand_trace, cand_res));
                break;
            }
            step *= options.damping;
        }
        match accepted {
            Some((c, p, t, r)) => {
                coeffs = c;
                path = p;
                trace = t;
                res_norm = r;
                history.push(res_norm);
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    residual_history: history,
                })
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iter,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_5x5() -> GridSpec {
        GridSpec::new(1.0, 1.0, 4, 4).unwrap()
    }

    /// Heat fixture horizon: short enough that the semigroup's smoothing
    /// `e^{−λ(T−t)}` does not crush the early-segment columns of `G`
    /// (at T = 0.5 the map is numerically rank deficient, σ_min/σ₁ ≈ 10⁻¹²;
    /// at T = 0.1 the ratio is ≈ 2·10⁻⁴).
    const HEAT_T: f64 = 0.1;

    fn heat_problem(target: DVector<f64>) -> ControlProblem {
        let g = grid_5x5();
        ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(1.0),
            DVector::zeros(g.interior_len()),
            None,
            HEAT_T,
            300,
            3,
            target,
        )
        .unwrap()
    }

    fn wave_problem(target: DVector<f64>) -> ControlProblem {
        let g = grid_5x5();
        ControlProblem::new(
            EquationKind::Wave,
            g,
            SourceTerm::constant(1.0),
            DVector::zeros(g.interior_len()),
            Some(DVector::zeros(g.interior_len())),
            0.5,
            400,
            4,
            target,
        )
        .unwrap()
    }

    #[test]
    fn problem_construction_validates_and_normalizes() {
        let g = grid_5x5();
        let n = g.interior_len();
        // steps normalized up to a multiple of the segment count.
        let p = heat_problem(DVector::zeros(n));
        assert_eq!(p.steps(), 300);
        let p = ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(1.0),
            DVector::zeros(n),
            None,
            0.5,
            100,
            3,
            DVector::zeros(n),
        )
        .unwrap();
        assert_eq!(p.steps(), 102);
        assert_eq!(p.parameter_dim(), 9);

        assert!(matches!(
            ControlProblem::new(
                EquationKind::Heat,
                g,
                SourceTerm::constant(1.0),
                DVector::zeros(n),
                None,
                0.5,
                100,
                3,
                DVector::zeros(2 * n),
            ),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            ControlProblem::new(
                EquationKind::Wave,
                g,
                SourceTerm::constant(1.0),
                DVector::zeros(n),
                None,
                0.5,
                100,
                4,
                DVector::zeros(2 * n),
            ),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn default_segment_counts_reach_the_state_dimension() {
        let g = grid_5x5();
        assert_eq!(default_segments(EquationKind::Heat, g), 3);
        assert_eq!(default_segments(EquationKind::Wave, g), 6);
        // (N−1)·K ≥ state dimension in both cases.
        assert!(3 * 3 >= g.interior_len());
        assert!(3 * 6 >= 2 * g.interior_len());
    }

    #[test]
    fn trace_at_zero_is_the_reference_and_deterministic() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let zero = DeformationPath::zero(EquationKind::Heat, HEAT_T, g.n() - 1, 3);
        let t1 = trace_map(&zero, &p).unwrap();
        let t2 = trace_map(&zero, &p).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1, reference_trace(&p).unwrap());
    }

    #[test]
    fn trace_is_lipschitz_in_the_deformation() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let z = reference_trace(&p).unwrap();
        let diff = |eps: f64| -> f64 {
            let mut coeffs = vec![vec![0.0; 3]; g.n() - 1];
            coeffs[1][1] = eps;
            let path = DeformationPath::new(EquationKind::Heat, HEAT_T, coeffs).unwrap();
            (trace_map(&path, &p).unwrap() - &z).norm()
        };
        let ratio = diff(1e-2) / diff(1e-3);
        assert!(
            (5.0..20.0).contains(&ratio),
            "‖Λ(εV_j) − Z_d‖ should scale like ε: {ratio}"
        );
    }

    #[test]
    fn trace_rejects_mismatched_paths() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let wrong_k = DeformationPath::zero(EquationKind::Heat, HEAT_T, g.n() - 1, 2);
        assert!(matches!(trace_map(&wrong_k, &p), Err(Error::Contract(_))));
        let wrong_t = DeformationPath::zero(EquationKind::Heat, 1.0, g.n() - 1, 3);
        assert!(matches!(trace_map(&wrong_t, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn control_map_is_nine_by_nine_and_well_conditioned() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let map = assemble_control_map(&p).unwrap();
        assert_eq!(map.matrix().nrows(), 9);
        assert_eq!(map.matrix().ncols(), 9);
        assert!(map.sigma_min() > 0.0);
        assert!(
            map.sigma_min() > RANK_TOLERANCE * map.sigma_max(),
            "σ_min = {} vs σ₁ = {}",
            map.sigma_min(),
            map.sigma_max()
        );
        // Sorted descending.
        let sv = map.singular_values();
        assert!(sv.iter().zip(sv.iter().skip(1)).all(|(a, b)| a >= b));
        assert_eq!(map.column_index(1, 0), 0);
        assert_eq!(map.column_index(2, 1), 4);
    }

    #[test]
    fn zero_reference_annihilates_the_control_map() {
        let g = grid_5x5();
        let n = g.interior_len();
        let p = ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(0.0),
            DVector::zeros(n),
            None,
            0.5,
            300,
            3,
            DVector::zeros(n),
        )
        .unwrap();
        let map = assemble_control_map(&p).unwrap();
        assert!(
            map.matrix().iter().all(|&x| x == 0.0),
            "G must vanish with the reference"
        );
        assert_eq!(map.sigma_max(), 0.0);
    }

    #[test]
    fn explicit_and_adjoint_transposes_agree() {
        let g = grid_5x5();
        let n = g.interior_len();
        let p = ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(1.0),
            DVector::zeros(n),
            None,
            HEAT_T,
            6000,
            3,
            DVector::zeros(n),
        )
        .unwrap();
        let map = assemble_control_map(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let mut c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            c /= c.norm();
            let explicit = map.matrix().transpose() * &c;
            let via_adjoint = transpose_apply_via_adjoint(&p, &c).unwrap();
            let rel = (&explicit - &via_adjoint).norm() / explicit.norm();
            assert!(rel <= 1e-6, "transpose routes disagree: {rel}");
        }
    }

    #[test]
    fn control_map_is_consistent_with_the_nonlinear_trace() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let z = reference_trace(&p).unwrap();
        let map = assemble_control_map(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
            .map(|_| (0..3).map(|_| rng.random_range(-0.3..0.3)).collect())
            .collect();
        let psi = DVector::from_iterator(9, coeffs.iter().flatten().copied());

        let remainder = |eps: f64| -> f64 {
            let scaled: Vec<Vec<f64>> = coeffs
                .iter()
                .map(|r| r.iter().map(|x| eps * x).collect())
                .collect();
            let path = DeformationPath::new(EquationKind::Heat, HEAT_T, scaled).unwrap();
            (trace_map(&path, &p).unwrap() - &z - eps * (map.matrix() * &psi)).norm()
        };
        let ratio = remainder(1e-2) / remainder(1e-3);
        assert!(
            (50.0..200.0).contains(&ratio),
            "‖Λ(εψ) − Z_d − εGψ‖ must be O(ε²), got ratio {ratio}"
        );
    }

    #[test]
    fn surjectivity_report_certifies_and_serializes() {
        let g = grid_5x5();
        let p = heat_problem(DVector::zeros(g.interior_len()));
        let report = surjectivity_report(&p, 20, 99).unwrap();
        assert_eq!(report.verdict, Verdict::Surjective);
        assert_eq!(report.uc_verdict, UcVerdict::Holds);
        assert!(report.ndd.satisfied);
        assert!(report.unique_continuation.max_residual_c.unwrap() <= 1e-8);
        assert_eq!(report.columns, 9);
        assert_eq!(report.state_dim, 9);
        assert!(report.condition.unwrap() >= 1.0);

        let json = serde_json::to_string(&report).unwrap();
        let back: SurjectivityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn surjectivity_report_flags_the_zero_reference() {
        let g = grid_5x5();
        let n = g.interior_len();
        let p = ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(0.0),
            DVector::zeros(n),
            None,
            0.5,
            300,
            3,
            DVector::zeros(n),
        )
        .unwrap();
        let report = surjectivity_report(&p, 5, 1).unwrap();
        assert_eq!(report.verdict, Verdict::Deficient);
        assert_eq!(report.uc_verdict, UcVerdict::Violated);
        assert!(report.unique_continuation.annihilating_c_found);
        assert_eq!(report.condition, None);
        // The two certificates agree here as everywhere.
        assert_eq!(
            report.verdict == Verdict::Surjective,
            report.uc_verdict == UcVerdict::Holds
        );
    }

    #[test]
    fn target_equal_to_reference_needs_no_iterations() {
        let g = grid_5x5();
        let z = {
            let p = heat_problem(DVector::zeros(g.interior_len()));
            reference_trace(&p).unwrap()
        };
        let p = heat_problem(z);
        let solution = solve_control(&p, SolveOptions::default()).unwrap();
        assert_eq!(solution.iterations, 0);
        assert_eq!(solution.path.max_abs(), 0.0);
        assert_eq!(solution.residual_history.len(), 1);
    }

    #[test]
    fn recovers_a_manufactured_heat_target() {
        let g = grid_5x5();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
            .map(|_| (0..3).map(|_| rng.random_range(-0.1..0.1)).collect())
            .collect();
        let truth = DeformationPath::new(EquationKind::Heat, HEAT_T, coeffs).unwrap();
        let p0 = heat_problem(DVector::zeros(g.interior_len()));
        let target = trace_map(&truth, &p0).unwrap();
        let p = heat_problem(target.clone());

        let options = SolveOptions {
            max_iter: 20,
            tol: 1e-7,
            damping: 0.5,
        };
        let solution = solve_control(&p, options).unwrap();
        let res = (&target - &solution.trace).norm() / target.norm();
        assert!(res <= 1e-6, "trace residual {res}");
        assert!(solution.iterations <= 20);
        assert!(solution.path.max_abs() < AMPLITUDE_BOUND);
        // Backtracking keeps the history monotone.
        assert!(solution.residual_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn recovers_a_manufactured_wave_target() {
        let g = grid_5x5();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        // Draw knots small enough that consecutive jumps respect the slope
        // bound |Δλ| < T/K = 0.125.
        let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
            .map(|_| (0..4).map(|_| rng.random_range(-0.05..0.05)).collect())
            .collect();
        let truth = DeformationPath::new(EquationKind::Wave, 0.5, coeffs).unwrap();
        let p0 = wave_problem(DVector::zeros(2 * g.interior_len()));
        let target = trace_map(&truth, &p0).unwrap();
        let p = wave_problem(target.clone());

        let options = SolveOptions {
            max_iter: 30,
            tol: 1e-7,
            damping: 0.5,
        };
        let solution = solve_control(&p, options).unwrap();
        let res = (&target - &solution.trace).norm() / target.norm();
        assert!(res <= 1e-5, "trace residual {res}");
        assert!(solution.iterations <= 30);
        assert!(solution.path.is_admissible());
    }

    #[test]
    fn deficient_problems_error_with_a_report() {
        let g = grid_5x5();
        let n = g.interior_len();
        let mut target = DVector::zeros(n);
        target[0] = 0.1;
        let p = ControlProblem::new(
            EquationKind::Heat,
            g,
            SourceTerm::constant(0.0),
            DVector::zeros(n),
            None,
            0.5,
            300,
            3,
            target,
        )
        .unwrap();
        match solve_control(&p, SolveOptions::default()) {
            Err(Error::Deficient { report }) => {
                assert_eq!(report.verdict, Verdict::Deficient);
                assert_eq!(report.sigma_max, 0.0);
            }
            other => panic!("expected a deficiency error, got {other:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_reports_non_convergence() {
        let g = grid_5x5();
        let z = {
            let p = heat_problem(DVector::zeros(g.interior_len()));
            reference_trace(&p).unwrap()
        };
        let far = 2.0 * &z;
        let p = heat_problem(far);
        let options = SolveOptions {
            max_iter: 1,
            tol: 1e-14,
            damping: 0.5,
        };
        match solve_control(&p, options) {
            Err(Error::NonConvergence {
                iterations,
                residual_history,
            }) => {
                assert_eq!(iterations, 1);
                assert!(!residual_history.is_empty());
                assert!(residual_history.windows(2).all(|w| w[1] <= w[0]));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
