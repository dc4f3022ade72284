//! Run configuration schema: JSON in, validated problem pieces out.
//!
//! A [`RunConfig`] describes one reproducible experiment — grid, equation
//! kind, source, horizon, time discretization, seed — plus optional blocks
//! consumed by individual subcommands (initial data, a deformation path,
//! diagnostic thresholds, solver knobs). The schema is strict: unknown keys
//! are rejected, and every cross-field constraint is checked before any
//! solve starts.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::{ControlProblem, SolveOptions};
use crate::dynamics::{solve_heat, solve_wave, SourceTerm, StateTrajectory};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operators::{DeformationPath, EquationKind};

/// Number of randomized unique-continuation trials when the config does not
/// say otherwise.
pub const DEFAULT_UC_TRIALS: usize = 20;

/// Rectangle and node counts; mirrors the [`GridSpec`] constructor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub n: usize,
}

/// An interior (or stacked, for wave terminal data) vector given in closed
/// form or literally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

impl FieldSpec {
    /// Expands the spec to a vector of length `dim`.
    pub fn materialize(&self, dim: usize) -> Result<DVector<f64>> {
        match self {
            FieldSpec::Zero => Ok(DVector::zeros(dim)),
            FieldSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config(format!(
                        "field constant {value} is not finite"
                    )));
                }
                Ok(DVector::from_element(dim, *value))
            }
            FieldSpec::Values { values } => {
                if values.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("field values must be finite".into()));
                }
                Ok(DVector::from_column_slice(values))
            }
        }
    }
}

/// Initial data block; omitted parts default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub position: Option<FieldSpec>,
    #[serde(default)]
    pub velocity: Option<FieldSpec>,
}

/// Deformation path block: basis coefficients `λ[j][k]`, one row per
/// boundary node `j = 1..N−1`, one column per time segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub coefficients: Vec<Vec<f64>>,
}

/// Overrides for the non-degeneracy scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NddConfig {
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

/// Unique-continuation block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcConfig {
    pub trials: usize,
}

/// Fréchet-check block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    /// How many basis directions to test, in `(j, k)` order; default 3.
    #[serde(default)]
    pub directions: Option<usize>,
    /// Perturbation sizes; default `[1e-2, 1e-3, 1e-4]`.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

/// Gauss–Newton solver block; omitted knobs take [`SolveOptions`] defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub damping: Option<f64>,
}

/// Terminal data for the backward adjoint solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointConfig {
    pub terminal: FieldSpec,
}

/// One experiment, fully specified. Serializes with stable key order, so a
/// config embedded in an output report is itself a valid input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub kind: EquationKind,
    pub source: SourceTerm,
    pub t_horizon: f64,
    pub steps: usize,
    pub segments: usize,
    /// Seeds the randomized diagnostics only; the solvers are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub path: Option<PathConfig>,
    #[serde(default)]
    pub ndd: Option<NddConfig>,
    #[serde(default)]
    pub uc: Option<UcConfig>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityConfig>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
    #[serde(default)]
    pub adjoint: Option<AdjointConfig>,
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a JSON file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every cross-field constraint that is not already enforced by
    /// the schema itself.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        if !(self.t_horizon > 0.0 && self.t_horizon.is_finite()) {
            return Err(Error::Config(format!(
                "t_horizon must be positive finite, got {}",
                self.t_horizon
            )));
        }
        if self.steps == 0 || self.segments == 0 {
            return Err(Error::Config(
                "steps and segments must be at least 1".into(),
            ));
        }
        self.source.validate(grid, self.t_horizon)?;
        if self.kind == EquationKind::Heat {
            if let Some(initial) = &self.initial {
                if initial.velocity.is_some() {
                    return Err(Error::Config(
                        "heat runs take no initial velocity; remove initial.velocity".into(),
                    ));
                }
            }
        }
        if let Some(path) = &self.path {
            let rows = grid.n() - 1;
            if path.coefficients.len() != rows
                || path.coefficients.iter().any(|r| r.len() != self.segments)
            {
                return Err(Error::Config(format!(
                    "path.coefficients must be {rows} rows × {} segments",
                    self.segments
                )));
            }
        }
        if let Some(uc) = &self.uc {
            if uc.trials == 0 {
                return Err(Error::Config("uc.trials must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.a, self.grid.b, self.grid.m, self.grid.n)
    }

    /// `n` for heat, `2n` for wave.
    pub fn state_dim(&self) -> Result<usize> {
        let n = self.grid_spec()?.interior_len();
        Ok(match self.kind {
            EquationKind::Heat => n,
            EquationKind::Wave => 2 * n,
        })
    }

    pub fn initial_position(&self) -> Result<DVector<f64>> {
        let n = self.grid_spec()?.interior_len();
        match self.initial.as_ref().and_then(|i| i.position.as_ref()) {
            Some(spec) => spec.materialize(n),
            None => Ok(DVector::zeros(n)),
        }
    }

    /// Wave runs get a velocity (zero unless specified); heat runs get none.
    pub fn initial_velocity(&self) -> Result<Option<DVector<f64>>> {
        if self.kind == EquationKind::Heat {
            return Ok(None);
        }
        let n = self.grid_spec()?.interior_len();
        match self.initial.as_ref().and_then(|i| i.velocity.as_ref()) {
            Some(spec) => Ok(Some(spec.materialize(n)?)),
            None => Ok(Some(DVector::zeros(n))),
        }
    }

    /// Builds the configured deformation path, if any; admissibility is
    /// enforced here.
    pub fn deformation_path(&self) -> Result<Option<DeformationPath>> {
        match &self.path {
            Some(p) => Ok(Some(DeformationPath::new(
                self.kind,
                self.t_horizon,
                p.coefficients.clone(),
            )?)),
            None => Ok(None),
        }
    }

    pub fn uc_trials(&self) -> usize {
        self.uc.map_or(DEFAULT_UC_TRIALS, |u| u.trials)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let defaults = SolveOptions::default();
        match self.control {
            Some(c) => SolveOptions {
                max_iter: c.max_iter.unwrap_or(defaults.max_iter),
                tol: c.tol.unwrap_or(defaults.tol),
                damping: c.damping.unwrap_or(defaults.damping),
            },
            None => defaults,
        }
    }

    /// Integrates the configured dynamics (under the configured path, when
    /// present).
    pub fn run_dynamics(&self) -> Result<StateTrajectory> {
        let grid = self.grid_spec()?;
        let path = self.deformation_path()?;
        let u0 = self.initial_position()?;
        match self.kind {
            EquationKind::Heat => solve_heat(
                path.as_ref(),
                &self.source,
                &u0,
                self.t_horizon,
                self.steps,
                grid,
            ),
            EquationKind::Wave => {
                let u1 = self.initial_velocity()?.unwrap();
                solve_wave(
                    path.as_ref(),
                    &self.source,
                    &u0,
                    &u1,
                    self.t_horizon,
                    self.steps,
                    grid,
                )
            }
        }
    }

    /// Assembles the control problem for a given target trace.
    pub fn problem(&self, target: DVector<f64>) -> Result<ControlProblem> {
        ControlProblem::new(
            self.kind,
            self.grid_spec()?,
            self.source.clone(),
            self.initial_position()?,
            self.initial_velocity()?,
            self.t_horizon,
            self.steps,
            self.segments,
            target,
        )
    }
}
