//! TOML run configuration with a strict schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub graph: GraphSection,
    pub grid: GridSection,
    pub coefficients: CoefficientSection,
    pub boundary: BoundarySection,
    pub delay: DelaySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub drift: DriftSection,
    pub initial: InitialSection,
    pub sde: SdeSection,
    #[serde(default)]
    pub semigroup: SemigroupSection,
    pub converge: Option<ConvergeSection>,
    pub control: Option<ControlSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSection {
    Path { n_vertices: usize },
    Star { leaves: usize },
    /// 1-based `(tail, head)` pairs.
    Edges { n_vertices: usize, edges: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_x: usize,
    pub n_theta: usize,
}

/// Diffusion coefficient, the same on every edge.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSection {
    Constant { value: f64 },
    /// `c(x) = a + b x`.
    Linear { a: f64, b: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub b: Vec<f64>,
    #[serde(default)]
    pub conservative: bool,
    #[serde(default)]
    pub zero_flux: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub r: f64,
    /// `(theta, weight)` pairs.
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    /// Mass of the uniform density on `[-r, 0]`.
    #[serde(default)]
    pub uniform_mass: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogEntry {
    Zero,
    Constant { sigma: f64 },
    ClippedLinear { sigma: f64, cap: f64 },
    SinModulated { sigma: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeArgument {
    /// `g~` reads the node value `d`.
    #[default]
    Value,
    /// `g~` reads the delay term `Phi(eta)`.
    Delayed,
}

/// Catalog lists hold one entry per edge (node), a single entry applied to
/// all of them, or nothing for zero.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub g: Vec<CatalogEntry>,
    #[serde(default)]
    pub g_tilde: Vec<CatalogEntry>,
    #[serde(default)]
    pub g_tilde_argument: NodeArgument,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    #[serde(default)]
    pub f: Vec<CatalogEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u0: ProfileConfig,
    pub eta0: HistoryConfig,
}

/// Initial edge profile, identical on every edge so traces agree.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant { value: f64 },
    /// `value + amplitude x (1 - x)`.
    Parabola { value: f64, amplitude: f64 },
}

/// Initial node history on `[-r, 0]`; the `theta = 0` entry is replaced by the
/// node value.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryConfig {
    Constant { value: f64 },
    /// `value + slope theta`.
    Linear { value: f64, slope: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    #[default]
    ExpEuler,
    EulerMaruyama,
}

fn one() -> usize {
    1
}

fn default_functionals() -> Vec<String> {
    vec!["mass".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default = "one")]
    pub stride: usize,
    /// Number of paths written to `paths.csv`.
    #[serde(default = "one")]
    pub record_paths: usize,
    /// `mass`, `norm_sq`, `node:<k>` or `edge_mid:<j>` (1-based).
    #[serde(default = "default_functionals")]
    pub functionals: Vec<String>,
}

fn default_identity_times() -> Vec<f64> {
    vec![0.1, 0.2]
}

fn default_explicit_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_dyson_terms() -> usize {
    4
}

fn default_dyson_time() -> f64 {
    0.25
}

fn default_substeps() -> usize {
    16
}

fn default_t0() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupSection {
    /// Times `t, s` of the identity check `T(t + s) = T(t) T(s)` (all pairs).
    #[serde(default = "default_identity_times")]
    pub identity_times: Vec<f64>,
    /// Times of the explicit-blocks comparison; multiples of the delay spacing.
    #[serde(default = "default_explicit_times")]
    pub explicit_times: Vec<f64>,
    #[serde(default = "default_dyson_terms")]
    pub dyson_terms: usize,
    #[serde(default = "default_dyson_time")]
    pub dyson_time: f64,
    /// Quadrature refinement of the delay grid for the Dyson-Phillips terms.
    #[serde(default = "default_substeps")]
    pub dyson_substeps: usize,
    /// Time window of the perturbation bound.
    #[serde(default = "default_t0")]
    pub t0: f64,
}

impl Default for SemigroupSection {
    fn default() -> Self {
        Self {
            identity_times: default_identity_times(),
            explicit_times: default_explicit_times(),
            dyson_terms: default_dyson_terms(),
            dyson_time: default_dyson_time(),
            dyson_substeps: default_substeps(),
            t0: default_t0(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    /// Strictly decreasing; the last entry is the reference step.
    pub dt_list: Vec<f64>,
    pub n_paths: usize,
    #[serde(default = "default_converge_scheme")]
    pub scheme: SchemeConfig,
    /// Also report the paired exponential-Euler versus Euler-Maruyama gap.
    #[serde(default)]
    pub paired: bool,
}

fn default_converge_scheme() -> SchemeConfig {
    SchemeConfig::EulerMaruyama
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyConfig {
    #[default]
    Quadratic,
    Quartic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default)]
    pub penalty: PenaltyConfig,
    pub q_x: f64,
    pub q_z: f64,
    pub q_t: f64,
    pub z_max: f64,
    pub policies: Vec<PolicyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// `z` holds one value per node or a single value for all nodes.
    Constant { label: String, z: Vec<f64> },
    /// Exactly one of `proxy = "riccati"` or `proxy_file` (CSV matrix, relative
    /// to the config file).
    Feedback { label: String, proxy: Option<String>, proxy_file: Option<PathBuf> },
}

impl PolicyConfig {
    pub fn label(&self) -> &str {
        match self {
            PolicyConfig::Constant { label, .. } | PolicyConfig::Feedback { label, .. } => label,
        }
    }
}

/// Reads and parses a config file; schema violations are parse errors.
pub fn load(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, text))
}
