//! Acceptance checks: one test per shipped guarantee, each printing a
//! single greppable verdict line. Run with `--nocapture` to see the lines:
//!
//! ```text
//! cargo test --test acceptance -- --nocapture
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shapectl::adjoint::{layer1_pairing, solve_adjoint, uc_check, UcVerdict};
use shapectl::config::RunConfig;
use shapectl::control::{
    assemble_control_map, solve_control, surjectivity_report, trace_map, ControlProblem,
    SolveOptions, Verdict, RANK_TOLERANCE,
};
use shapectl::domain_map::{transport_matrix, JacobianSample};
use shapectl::dynamics::{reference_state, solve_heat, solve_wave, SourceTerm};
use shapectl::grid::GridSpec;
use shapectl::operators::{
    assemble_derivative_matrix, assemble_matrix, operator_norm_bound_check, stencil_at,
    DeformationPath, EquationKind, AMPLITUDE_BOUND,
};
use shapectl::sensitivity::{frechet_residual, gateaux};

/// Runs one criterion body and prints its verdict line whatever happens.
fn criterion(number: usize, label: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("criterion {number:02} PASS — {label}"),
        Err(cause) => {
            println!("criterion {number:02} FAIL — {label}");
            std::panic::resume_unwind(cause);
        }
    }
}

fn grid_5x5() -> GridSpec {
    GridSpec::new(1.0, 1.0, 4, 4).unwrap()
}

/// Dense-eigensolver ground mode of the unperturbed operator.
fn ground_mode(grid: GridSpec) -> (f64, DVector<f64>) {
    let a = assemble_matrix(None, 0.0, grid).unwrap();
    let eigen = nalgebra::SymmetricEigen::new(a);
    let mut idx = 0;
    for k in 0..eigen.eigenvalues.len() {
        if eigen.eigenvalues[k] < eigen.eigenvalues[idx] {
            idx = k;
        }
    }
    (
        eigen.eigenvalues[idx],
        eigen.eigenvectors.column(idx).into_owned(),
    )
}

fn fit_slope(eps_list: &[f64], remainders: &[f64]) -> f64 {
    let xs: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = remainders.iter().map(|r| r.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let mut c = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    c /= c.norm();
    c
}

#[test]
fn criterion_01_operator_stencils_are_exact() {
    criterion(1, "exact stencils, unperturbed and at λ = 0.25", || {
        let g = grid_5x5();
        let h2 = g.h() * g.h();
        let a = assemble_matrix(None, 0.0, g).unwrap();

        // Row-by-row 5-point stencil with Dirichlet truncation.
        let n = g.interior_len();
        let mut expected = DMatrix::zeros(n, n);
        for (i, j) in g.interior_nodes() {
            let row = g.interior_index(i, j);
            expected[(row, row)] = 4.0 / h2;
            if i > 1 {
                expected[(row, g.interior_index(i - 1, j))] = -1.0 / h2;
            }
            if i + 1 < g.m() {
                expected[(row, g.interior_index(i + 1, j))] = -1.0 / h2;
            }
            if j > 1 {
                expected[(row, g.interior_index(i, j - 1))] = -1.0 / h2;
            }
            if j + 1 < g.n() {
                expected[(row, g.interior_index(i, j + 1))] = -1.0 / h2;
            }
        }
        assert_eq!(
            a, expected,
            "unperturbed operator must be the 5-point stencil exactly"
        );

        // Perturbed rows at λ_j = 0.25 for every boundary node.
        let lam = 0.25;
        let path =
            DeformationPath::new(EquationKind::Heat, 1.0, vec![vec![lam]; g.n() - 1]).unwrap();
        let a_lam = assemble_matrix(Some(&path), 0.5, g).unwrap();
        for j in 1..g.n() {
            let row = g.interior_index(1, j);
            assert_eq!(a_lam[(row, row)], 3.6 / h2);
            assert_eq!(a_lam[(row, g.interior_index(2, j))], -(2.0 / 2.25) / h2);
            let s = stencil_at(g, lam, 1, j);
            assert_eq!(s.center, 2.0 * (1.0 + 1.0 / (1.0 + lam)) / h2);
            assert_eq!(s.east, -2.0 / (2.0 + lam) / h2);
        }
        // Rows away from the deformed layer are untouched.
        for (i, j) in g.interior_nodes().filter(|&(i, _)| i > 1) {
            let row = g.interior_index(i, j);
            for col in 0..n {
                assert_eq!(a_lam[(row, col)], a[(row, col)]);
            }
        }
    });
}

#[test]
fn criterion_02_operator_derivative_is_first_order_consistent() {
    criterion(
        2,
        "finite-difference slope of A'(0)[V_j] in [0.9, 1.1]",
        || {
            let g = grid_5x5();
            let a0 = assemble_matrix(None, 0.0, g).unwrap();
            let eps_list = [1e-2, 1e-3, 1e-4];
            for j in 1..g.n() {
                let dprime = assemble_derivative_matrix(g, j, 1.0).unwrap();
                let remainders: Vec<f64> = eps_list
                    .iter()
                    .map(|&eps| {
                        let mut coeffs = vec![vec![0.0]; g.n() - 1];
                        coeffs[j - 1][0] = eps;
                        let path = DeformationPath::new(EquationKind::Heat, 1.0, coeffs).unwrap();
                        let a_eps = assemble_matrix(Some(&path), 0.0, g).unwrap();
                        ((&a_eps - &a0) / eps - &dprime).amax()
                    })
                    .collect();
                let slope = fit_slope(&eps_list, &remainders);
                assert!(
                    (0.9..=1.1).contains(&slope),
                    "j = {j}: remainder slope {slope} outside [0.9, 1.1]"
                );
            }
        },
    );
}

#[test]
fn criterion_03_norm_bound_holds_on_random_fields() {
    criterion(
        3,
        "‖A(φ)f‖∞ ≤ 28/(3h²) on 10³ random fields",
        || {
            let g = grid_5x5();
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
                .map(|_| (0..2).map(|_| rng.random_range(-0.45..0.45)).collect())
                .collect();
            let path = DeformationPath::new(EquationKind::Heat, 1.0, coeffs).unwrap();
            let report = operator_norm_bound_check(&path, g, 1000, 32).unwrap();
            let h2 = g.h() * g.h();
            assert_eq!(report.bound, 28.0 / (3.0 * h2));
            assert!(
                report.max_ratio <= report.bound,
                "max ratio {} exceeds the bound {}",
                report.max_ratio,
                report.bound
            );
        },
    );
}

#[test]
fn criterion_04_dynamics_match_the_eigensolver_oracles() {
    criterion(
        4,
        "eigen-decay 1e-4, eigen-oscillation 1e-3, energy drift 1e-6",
        || {
            let g = grid_5x5();
            let (lambda1, mode) = ground_mode(g);
            let zero = DVector::zeros(g.interior_len());

            let t = 0.1;
            let heat = solve_heat(None, &SourceTerm::constant(0.0), &mode, t, 2000, g).unwrap();
            let expected = (-lambda1 * t).exp() * &mode;
            let rel = (heat.final_state() - &expected).norm() / expected.norm();
            assert!(rel <= 1e-4, "heat eigen-decay error {rel} exceeds 1e-4");

            let t = 0.5;
            let wave =
                solve_wave(None, &SourceTerm::constant(0.0), &mode, &zero, t, 4000, g).unwrap();
            let expected = (lambda1.sqrt() * t).cos() * &mode;
            let rel =
                (wave.position(wave.len() - 1).clone_owned() - &expected).norm() / mode.norm();
            assert!(
                rel <= 1e-3,
                "wave eigen-oscillation error {rel} exceeds 1e-3"
            );

            let traj =
                solve_wave(None, &SourceTerm::constant(0.0), &mode, &zero, 1.0, 4000, g).unwrap();
            let a = assemble_matrix(None, 0.0, g).unwrap();
            let energy = traj.energy(&a).unwrap();
            let e0 = energy[0];
            let drift = energy
                .iter()
                .map(|e| (e - e0).abs() / e0)
                .fold(0.0_f64, f64::max);
            assert!(drift <= 1e-6, "relative energy drift {drift} exceeds 1e-6");
        },
    );
}

#[test]
fn criterion_05_trace_map_is_frechet_differentiable() {
    criterion(
        5,
        "Fréchet remainder slope ≥ 1.9 in 3 directions, both equations",
        || {
            let g = grid_5x5();
            let rows = g.n() - 1;
            let zero = DVector::zeros(g.interior_len());
            let eps_list = [1e-2, 1e-3];
            for (kind, steps, u1) in [
                (EquationKind::Heat, 300, None),
                (EquationKind::Wave, 500, Some(&zero)),
            ] {
                let directions: Vec<DeformationPath> = (1..=3)
                    .map(|j| DeformationPath::basis_direction(kind, 0.5, rows, 3, j, (j - 1) % 3))
                    .collect::<Result<_, _>>()
                    .unwrap();
                let report = frechet_residual(
                    kind,
                    &SourceTerm::constant(1.0),
                    &zero,
                    u1,
                    0.5,
                    steps,
                    &directions,
                    &eps_list,
                    g,
                )
                .unwrap();
                assert_eq!(report.slopes.len(), 3);
                assert!(
                    report.min_slope >= 1.9,
                    "{kind:?}: min remainder slope {} below 1.9",
                    report.min_slope
                );
            }
        },
    );
}

#[test]
fn criterion_06_duality_identity_closes_on_random_pairs() {
    criterion(
        6,
        "⟨v(T), c⟩ duality to 1e-6 (heat) / 1e-5 (wave), 10 pairs each",
        || {
            let g = grid_5x5();
            let n = g.interior_len();
            let zero = DVector::zeros(n);
            let t_end = 0.5;

            for (kind, steps, amp, tol) in [
                (EquationKind::Heat, 6000_usize, 0.3, 1e-6),
                (EquationKind::Wave, 4000, 0.2, 1e-5),
            ] {
                let mut rng = ChaCha8Rng::seed_from_u64(61);
                let u1 = (kind == EquationKind::Wave).then_some(&zero);
                let reference =
                    reference_state(kind, &SourceTerm::constant(1.0), &zero, u1, t_end, steps, g)
                        .unwrap();
                let dim = match kind {
                    EquationKind::Heat => n,
                    EquationKind::Wave => 2 * n,
                };
                for trial in 0..10 {
                    let c = random_unit(&mut rng, dim);
                    let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
                        .map(|_| (0..2).map(|_| rng.random_range(-amp..amp)).collect())
                        .collect();
                    let psi = DeformationPath::direction(kind, t_end, coeffs).unwrap();

                    let v = gateaux(None, &psi, &reference, g).unwrap();
                    let lhs = v.final_state().dot(&c);

                    let x = solve_adjoint(kind, &c, t_end, steps, g).unwrap();
                    let pairings = layer1_pairing(&x, &reference).unwrap();
                    let rhs =
                        shapectl::adjoint::duality_rhs(&pairings, &psi, reference.times()).unwrap();

                    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
                    assert!(
                        rel <= tol,
                        "{kind:?} trial {trial}: duality gap {rel} exceeds {tol}"
                    );
                }
            }
        },
    );
}

#[test]
fn criterion_07_unique_continuation_chain_certifies() {
    criterion(
        7,
        "NDD + layer-1 + zero-propagation chain ≤ 1e-8; degenerate witness",
        || {
            let g = grid_5x5();
            let n = g.interior_len();
            let reference = solve_heat(
                None,
                &SourceTerm::constant(1.0),
                &DVector::zeros(n),
                0.5,
                1000,
                g,
            )
            .unwrap();
            let check = uc_check(&reference, 20, 2024).unwrap();
            assert!(
                check.ndd.satisfied,
                "F≡1 reference must satisfy the non-degeneracy scan"
            );
            assert!(check.ndd.min_abs > check.ndd.threshold);
            let residual = check.unique_continuation.max_residual_c.unwrap();
            assert!(residual <= 1e-8, "chain residual {residual} exceeds 1e-8");
            assert!(!check.unique_continuation.annihilating_c_found);
            assert_eq!(check.verdict, UcVerdict::Holds);

            // Degenerate reference: every c annihilates the pairings.
            let flat = solve_heat(
                None,
                &SourceTerm::constant(0.0),
                &DVector::zeros(n),
                0.5,
                200,
                g,
            )
            .unwrap();
            let check = uc_check(&flat, 20, 2024).unwrap();
            assert!(check.unique_continuation.annihilating_c_found);
            assert_eq!(check.unique_continuation.min_pairing_sup, 0.0);
            assert_eq!(check.verdict, UcVerdict::Violated);
        },
    );
}

fn heat_problem(grid: GridSpec, source_value: f64, target: DVector<f64>) -> ControlProblem {
    ControlProblem::new(
        EquationKind::Heat,
        grid,
        SourceTerm::constant(source_value),
        DVector::zeros(grid.interior_len()),
        None,
        0.1,
        300,
        3,
        target,
    )
    .unwrap()
}

#[test]
fn criterion_08_surjectivity_certificate_is_coherent() {
    criterion(
        8,
        "σ_min > 1e-6·σ₁ for the 9×9 map; SVD and UC verdicts agree",
        || {
            let g = grid_5x5();
            let n = g.interior_len();
            let problem = heat_problem(g, 1.0, DVector::zeros(n));
            let map = assemble_control_map(&problem).unwrap();
            assert_eq!((map.matrix().nrows(), map.matrix().ncols()), (9, 9));
            assert!(
                map.sigma_min() > RANK_TOLERANCE * map.sigma_max(),
                "σ_min = {:e} not above 1e-6·σ₁ = {:e}",
                map.sigma_min(),
                RANK_TOLERANCE * map.sigma_max()
            );

            let report = surjectivity_report(&problem, 20, 8).unwrap();
            assert_eq!(report.verdict, Verdict::Surjective);
            assert_eq!(report.uc_verdict, UcVerdict::Holds);

            let degenerate = heat_problem(g, 0.0, DVector::zeros(n));
            let report = surjectivity_report(&degenerate, 20, 8).unwrap();
            assert_eq!(report.verdict, Verdict::Deficient);
            assert_eq!(report.uc_verdict, UcVerdict::Violated);

            // Agreement on every tested configuration.
            for (svd, uc) in [
                (Verdict::Surjective, UcVerdict::Holds),
                (Verdict::Deficient, UcVerdict::Violated),
            ] {
                assert_eq!(svd == Verdict::Surjective, uc == UcVerdict::Holds);
            }
        },
    );
}

#[test]
fn criterion_09_manufactured_targets_are_recovered() {
    criterion(
        9,
        "heat ≤ 1e-6 in ≤ 20 iterations; wave ≤ 1e-5 in ≤ 30; paths admissible",
        || {
            let g = grid_5x5();
            let n = g.interior_len();

            let mut rng = ChaCha8Rng::seed_from_u64(91);
            let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
                .map(|_| (0..3).map(|_| rng.random_range(-0.1..0.1)).collect())
                .collect();
            let truth = DeformationPath::new(EquationKind::Heat, 0.1, coeffs).unwrap();
            let reference = heat_problem(g, 1.0, DVector::zeros(n));
            let target = trace_map(&truth, &reference).unwrap();
            let problem = heat_problem(g, 1.0, target.clone());
            let options = SolveOptions {
                max_iter: 20,
                tol: 1e-7,
                damping: 0.5,
            };
            let solution = solve_control(&problem, options).unwrap();
            let rel = (&target - &solution.trace).norm() / target.norm();
            assert!(rel <= 1e-6, "heat trace residual {rel} exceeds 1e-6");
            assert!(solution.iterations <= 20);
            assert!(solution.path.is_admissible());
            assert!(solution.path.max_abs() < AMPLITUDE_BOUND);

            let coeffs: Vec<Vec<f64>> = (0..g.n() - 1)
                .map(|_| (0..4).map(|_| rng.random_range(-0.05..0.05)).collect())
                .collect();
            let truth = DeformationPath::new(EquationKind::Wave, 0.5, coeffs).unwrap();
            let wave_problem = |target: DVector<f64>| {
                ControlProblem::new(
                    EquationKind::Wave,
                    g,
                    SourceTerm::constant(1.0),
                    DVector::zeros(n),
                    Some(DVector::zeros(n)),
                    0.5,
                    400,
                    4,
                    target,
                )
                .unwrap()
            };
            let target = trace_map(&truth, &wave_problem(DVector::zeros(2 * n))).unwrap();
            let problem = wave_problem(target.clone());
            let options = SolveOptions {
                max_iter: 30,
                tol: 1e-7,
                damping: 0.5,
            };
            let solution = solve_control(&problem, options).unwrap();
            let rel = (&target - &solution.trace).norm() / target.norm();
            assert!(rel <= 1e-5, "wave trace residual {rel} exceeds 1e-5");
            assert!(solution.iterations <= 30);
            assert!(solution.path.is_admissible());
        },
    );
}

#[test]
fn criterion_10_domain_transport_identities_hold() {
    criterion(
        10,
        "B(I) = I; symmetry, det B = 1, diagonal case to 1e-12",
        || {
            let identity = JacobianSample::new(1.0, 0.0, 0.0, 1.0);
            let b = transport_matrix(&identity).unwrap();
            assert_eq!(b, nalgebra::Matrix2::identity());

            let mut rng = ChaCha8Rng::seed_from_u64(101);
            for _ in 0..100 {
                let sample = JacobianSample::new(
                    rng.random_range(0.5..1.5),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(0.5..1.5),
                );
                let b = transport_matrix(&sample).unwrap();
                assert!(
                    (b[(0, 1)] - b[(1, 0)]).abs() <= 1e-12,
                    "B must be symmetric"
                );
                let det = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)];
                assert!((det - 1.0).abs() <= 1e-12, "det B = {det} strays from 1");
            }

            let diag = JacobianSample::new(1.1, 0.0, 0.0, 1.0);
            let b = transport_matrix(&diag).unwrap();
            assert!((b[(0, 0)] - 1.0 / 1.1).abs() <= 1e-12);
            assert!((b[(1, 1)] - 1.1).abs() <= 1e-12);
            assert!(b[(0, 1)].abs() <= 1e-12 && b[(1, 0)].abs() <= 1e-12);
        },
    );
}

#[test]
fn criterion_11_outputs_are_byte_identical_across_reruns() {
    criterion(
        11,
        "same config + seed ⇒ byte-identical CSV/JSON from the binary",
        || {
            let dir = tempfile::tempdir().unwrap();
            let config = dir.path().join("run.json");
            std::fs::write(
                &config,
                r#"{
                "grid": {"a": 1.0, "b": 1.0, "m": 4, "n": 4},
                "kind": "heat",
                "source": {"constant": {"value": 1.0}},
                "t_horizon": 0.1,
                "steps": 60,
                "segments": 3,
                "seed": 42,
                "uc": {"trials": 5}
            }"#,
            )
            .unwrap();

            let run = |subcommand: &str, out: &std::path::Path| {
                let status = std::process::Command::new(env!("CARGO_BIN_EXE_shapectl"))
                    .args([
                        "--quiet",
                        subcommand,
                        "--config",
                        config.to_str().unwrap(),
                        "--out",
                        out.to_str().unwrap(),
                    ])
                    .status()
                    .unwrap();
                assert!(status.success(), "{subcommand} exited with {status}");
            };

            for subcommand in ["simulate", "uc-check"] {
                let first = dir.path().join(format!("{subcommand}.first"));
                let second = dir.path().join(format!("{subcommand}.second"));
                run(subcommand, &first);
                run(subcommand, &second);
                let a = std::fs::read(&first).unwrap();
                let b = std::fs::read(&second).unwrap();
                assert!(!a.is_empty());
                assert_eq!(a, b, "{subcommand} reruns must be byte-identical");
            }

            // The JSON report embeds the resolved config and the version string.
            let report = dir.path().join("uc-check.first");
            let parsed: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
            assert_eq!(parsed["config"]["seed"], 42);
            assert_eq!(parsed["version"], env!("CARGO_PKG_VERSION"));
            let embedded = serde_json::to_string(&parsed["config"]).unwrap();
            assert!(
                RunConfig::from_json(&embedded).is_ok(),
                "embedded config must revalidate"
            );
        },
    );
}
