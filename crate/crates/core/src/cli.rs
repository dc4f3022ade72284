//! Command-line front end.
//!
//! Seven subcommands expose the library end to end: `simulate` integrates
//! the configured dynamics to CSV, `sensitivity` checks the linearization,
//! `adjoint` runs the backward solve, `uc-check` runs the
//! unique-continuation pipeline, `control` solves a local controllability
//! problem, `bmatrix` evaluates the domain-transport matrix for one Jacobian
//! sample, and `report` emits the combined surjectivity certificate.
//!
//! Conventions: configuration is JSON (see [`crate::config::RunConfig`]),
//! time series are CSV with 17 significant digits, and every JSON report
//! embeds the resolved config plus the artifact version so outputs are
//! self-describing. Identical config and seed produce byte-identical output
//! files. Errors print as a single `error: ...` line on stderr and map to
//! exit codes: 2 for configuration or input problems, 3 for solver failures,
//! 4 for admissibility violations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{solve_adjoint, uc_check, AdjointTrajectory};
use crate::config::RunConfig;
use crate::control::{solve_control, surjectivity_report};
use crate::domain_map::{transport_matrix, JacobianSample};
use crate::dynamics::StateTrajectory;
use crate::error::{Error, Result};
use crate::operators::{DeformationPath, EquationKind};
use crate::sensitivity::frechet_residual;

/// Artifact version string embedded in every JSON report.
const VERSION: &str = env!("CARGO_PKG_VERSION");

const DEFAULT_EPS_LIST: [f64; 3] = [1e-2, 1e-3, 1e-4];
const DEFAULT_DIRECTIONS: usize = 3;

#[derive(Parser)]
#[command(
    name = "shapectl",
    version,
    about = "Shape controllability of semi-discrete heat and wave equations"
)]
struct Cli {
    /// Suppress informational messages on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured dynamics and write the trajectory as CSV.
    Simulate {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the linearization: Fréchet remainder slopes, written as JSON.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the backward adjoint from the configured terminal data (CSV).
    Adjoint {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the non-degeneracy + unique-continuation pipeline (JSON verdict).
    UcCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the local control problem toward a target trace.
    ///
    /// Writes the solved path JSON to --out, the residual history next to it
    /// as `<out stem>.residuals.csv`, and the surjectivity certificate as
    /// `<out stem>.report.json`.
    Control {
        #[arg(long)]
        config: PathBuf,
        /// Target trace as CSV numbers (state-dimension many).
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the domain-transport matrix B = |det J|·J⁻¹·J⁻ᵀ.
    Bmatrix {
        #[arg(long)]
        j11: f64,
        #[arg(long)]
        j12: f64,
        #[arg(long)]
        j21: f64,
        #[arg(long)]
        j22: f64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the combined surjectivity certificate for the configured problem.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Entry point used by the binary target; returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv = std::iter::once("shapectl".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, cli.quiet) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command, quiet: bool) -> Result<()> {
    match command {
        Command::Simulate { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let traj = config.run_dynamics()?;
            write_file(&out, &trajectory_csv(&traj), quiet)
        }
        Command::Sensitivity { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let report = run_sensitivity(&config)?;
            write_json(&out, &config, &report, quiet)
        }
        Command::Adjoint { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let c = terminal_vector(&config)?;
            let x = solve_adjoint(
                config.kind,
                &c,
                config.t_horizon,
                config.steps,
                config.grid_spec()?,
            )?;
            write_file(&out, &adjoint_csv(&x), quiet)
        }
        Command::UcCheck { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let reference = config.run_dynamics()?;
            let check = uc_check(&reference, config.uc_trials(), config.seed)?;
            write_json(&out, &config, &check, quiet)
        }
        Command::Control {
            config,
            target,
            out,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            let target = read_target(&target, config.state_dim()?)?;
            run_control(&config, target, &out, quiet)
        }
        Command::Bmatrix {
            j11,
            j12,
            j21,
            j22,
            out,
        } => {
            let sample = JacobianSample::new(j11, j12, j21, j22);
            let b = transport_matrix(&sample)?;
            let report = BmatrixReport {
                version: VERSION,
                jacobian: [[j11, j12], [j21, j22]],
                b: [[b[(0, 0)], b[(0, 1)]], [b[(1, 0)], b[(1, 1)]]],
                det_jacobian: sample.det(),
                det_b: b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)],
            };
            let text = to_json_text(&report)?;
            match out {
                Some(path) => write_file(&path, &text, quiet),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Report { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let problem = config.problem(DVector::zeros(config.state_dim()?))?;
            let report = surjectivity_report(&problem, config.uc_trials(), config.seed)?;
            write_json(&out, &config, &report, quiet)
        }
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

fn run_sensitivity(config: &RunConfig) -> Result<crate::sensitivity::FrechetReport> {
    let grid = config.grid_spec()?;
    let rows = grid.n() - 1;
    let block = config.sensitivity.clone().unwrap_or_default();
    let count = block.directions.unwrap_or(DEFAULT_DIRECTIONS);
    if count == 0 || count > rows * config.segments {
        return Err(Error::Config(format!(
            "sensitivity.directions must lie in 1..={}",
            rows * config.segments
        )));
    }
    let directions = (0..count)
        .map(|idx| {
            let (j, k) = (idx / config.segments + 1, idx % config.segments);
            DeformationPath::basis_direction(
                config.kind,
                config.t_horizon,
                rows,
                config.segments,
                j,
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let eps = block.eps.unwrap_or_else(|| DEFAULT_EPS_LIST.to_vec());
    frechet_residual(
        config.kind,
        &config.source,
        &config.initial_position()?,
        config.initial_velocity()?.as_ref(),
        config.t_horizon,
        config.steps,
        &directions,
        &eps,
        grid,
    )
}

/// Solved-path payload of the `control` subcommand.
#[derive(Debug, Serialize)]
struct ControlRunReport {
    /// Basis coefficients `λ[j][k]` of the solved deformation path.
    coefficients: Vec<Vec<f64>>,
    iterations: usize,
    final_residual: f64,
    converged: bool,
}

fn run_control(config: &RunConfig, target: DVector<f64>, out: &Path, quiet: bool) -> Result<()> {
    let problem = config.problem(target)?;
    let certificate = surjectivity_report(&problem, config.uc_trials(), config.seed)?;
    write_json(
        &out.with_extension("report.json"),
        config,
        &certificate,
        quiet,
    )?;

    match solve_control(&problem, config.solve_options()) {
        Ok(solution) => {
            write_file(
                &out.with_extension("residuals.csv"),
                &residuals_csv(&solution.residual_history),
                quiet,
            )?;
            let report = ControlRunReport {
                coefficients: solution.path.coeffs().to_vec(),
                iterations: solution.iterations,
                final_residual: *solution.residual_history.last().unwrap(),
                converged: true,
            };
            write_json(out, config, &report, quiet)
        }
        Err(Error::NonConvergence {
            iterations,
            residual_history,
        }) => {
            // Leave the partial history behind for diagnosis, then fail.
            write_file(
                &out.with_extension("residuals.csv"),
                &residuals_csv(&residual_history),
                quiet,
            )?;
            Err(Error::NonConvergence {
                iterations,
                residual_history,
            })
        }
        Err(e) => Err(e),
    }
}

/// Terminal adjoint data: the configured spec, or a seeded random unit
/// vector when the config has no `adjoint` block.
fn terminal_vector(config: &RunConfig) -> Result<DVector<f64>> {
    let dim = config.state_dim()?;
    match &config.adjoint {
        Some(block) => block.terminal.materialize(dim),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut c = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let norm = c.norm();
            if norm > 0.0 {
                c /= norm;
            }
            Ok(c)
        }
    }
}

/// 17 significant digits: enough to round-trip every f64 exactly.
fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn trajectory_csv(traj: &StateTrajectory) -> String {
    let grid = traj.grid();
    let mut text = String::from("t");
    for (i, j) in grid.interior_nodes() {
        let _ = write!(text, ",u_{i}_{j}");
    }
    if traj.kind() == EquationKind::Wave {
        for (i, j) in grid.interior_nodes() {
            let _ = write!(text, ",v_{i}_{j}");
        }
    }
    text.push('\n');
    for k in 0..traj.len() {
        text.push_str(&fmt_value(traj.time(k)));
        for value in traj.state(k).iter() {
            text.push(',');
            text.push_str(&fmt_value(*value));
        }
        text.push('\n');
    }
    text
}

fn adjoint_csv(x: &AdjointTrajectory) -> String {
    let grid = x.grid();
    let mut text = String::from("t");
    match x.kind() {
        EquationKind::Heat => {
            for (i, j) in grid.interior_nodes() {
                let _ = write!(text, ",x_{i}_{j}");
            }
        }
        EquationKind::Wave => {
            for (i, j) in grid.interior_nodes() {
                let _ = write!(text, ",p_{i}_{j}");
            }
            for (i, j) in grid.interior_nodes() {
                let _ = write!(text, ",q_{i}_{j}");
            }
        }
    }
    text.push('\n');
    for (k, t) in x.times().iter().enumerate() {
        text.push_str(&fmt_value(*t));
        for value in x.state(k).iter() {
            text.push(',');
            text.push_str(&fmt_value(*value));
        }
        text.push('\n');
    }
    text
}

fn residuals_csv(history: &[f64]) -> String {
    let mut text = String::from("iteration,residual\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(text, "{k},{}", fmt_value(*r));
    }
    text
}

/// Reads a whitespace/comma-separated list of numbers and checks its length.
fn read_target(path: &Path, dim: usize) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for token in text.split([',', '\n', '\r', ' ', '\t']) {
        if token.is_empty() {
            continue;
        }
        let value: f64 = token.parse().map_err(|_| {
            Error::Config(format!("target file holds a non-numeric token: {token:?}"))
        })?;
        values.push(value);
    }
    if values.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: values.len(),
        });
    }
    Ok(DVector::from_vec(values))
}

/// Report wrapper: version string and resolved config ride along with every
/// JSON payload.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    report: T,
}

#[derive(Serialize)]
struct BmatrixReport {
    version: &'static str,
    jacobian: [[f64; 2]; 2],
    b: [[f64; 2]; 2],
    det_jacobian: f64,
    det_b: f64,
}

fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn write_json<T: Serialize>(
    path: &Path,
    config: &RunConfig,
    report: &T,
    quiet: bool,
) -> Result<()> {
    let envelope = Envelope {
        version: VERSION,
        config,
        report,
    };
    write_file(path, &to_json_text(&envelope)?, quiet)
}

fn write_file(path: &Path, contents: &str, quiet: bool) -> Result<()> {
    std::fs::write(path, contents)?;
    if !quiet {
        println!("wrote {}", path.display());
    }
    Ok(())
}
