//! Run configuration. Every table rejects unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use projctl_core::functional::ProblemKind;
use projctl_core::minimizer::SolverOptions;
use projctl_core::models::ModelFamily;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// Modal models only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 2]>,
    /// Quadrature nodes on ω; defaults to `4 * n_modes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_quad: Option<usize>,
    /// ODE models only: row-major `A` and `B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

/// A vector given literally or as a combination of coordinate directions
/// (`modes = [[index, amplitude], ...]`, 1-based). In a control context a
/// modal combination `x` stands for the control profile `B^T x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Literal(Vec<f64>),
    Modes(ModesSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSpec {
    pub modes: Vec<(usize, f64)>,
}

/// Generator of a signal subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    /// `e^{rate t} vector` on `support` (default: the whole horizon).
    Exponential(ExponentialSpec),
    /// One value vector per interval.
    Literal(LiteralSignal),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialSpec {
    pub rate: f64,
    pub vector: VectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiteralSignal {
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y1: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Generators of G (control signals).
    #[serde(default)]
    pub g: Vec<SignalSpec>,
    /// Generators of W (state signals).
    #[serde(default)]
    pub w: Vec<SignalSpec>,
    /// Generators of E (states).
    #[serde(default)]
    pub e: Vec<VectorSpec>,
    /// `g* = Σ c_i g_i` over the generators of G as listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_star: Option<Vec<f64>>,
    /// `w* = Σ c_i w_i` over the generators of W as listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Run the unique-continuation check before solving.
    pub uc: bool,
    pub tol_uc: f64,
    /// Run the two-time null criterion at this time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_tilde: Option<f64>,
    /// Observability constants to report; an infinite constant fails certification.
    pub observability: Vec<ObsKind>,
}

/// Observability inequality selector. `tilde_t` uses `checks.t_tilde`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ObsKind {
    FinalState,
    InitialState,
    GeneralFinal,
    GeneralInitial,
    TildeT,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { uc: true, tol_uc: projctl_core::uc::DEFAULT_TOL_UC, t_tilde: None, observability: Vec::new() }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
