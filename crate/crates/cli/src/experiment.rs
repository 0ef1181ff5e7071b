//! Validation of a parsed config and construction of the model it describes.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use netspde::control::{ControlPenalty, ControlProblem, CostWeights, Policy};
use netspde::delay::{grid_steps, DelayMeasure, Density};
use netspde::sde::integrator::step_count;
use netspde::sde::{DriftSpec, FullState, Functional, NodeFn, NoiseSpec, RunSpec, ScalarFn, Scheme, SdeModel};
use netspde::spatial::{AfrakOptions, EdgeCoefficient, NodeMatrixB};
use netspde::{Error, MetricGraph};

use crate::config::*;
use crate::error::CliError;

/// A validated config turned into ready-to-run objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub model: SdeModel<f64>,
    pub x0: FullState<f64>,
    pub run: RunSpec<f64>,
    pub functionals: Vec<Functional>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

fn ensure(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::invalid(path, message()))
    }
}

fn positive(value: f64, path: &str) -> Result<(), CliError> {
    ensure(value.is_finite() && value > 0.0, path, || format!("must be finite and > 0, got {value}"))
}

fn non_negative(value: f64, path: &str) -> Result<(), CliError> {
    ensure(value.is_finite() && value >= 0.0, path, || format!("must be finite and >= 0, got {value}"))
}

/// Tags a core error with the config field it came from.
fn at(path: &str) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| CliError::invalid(path, e.to_string())
}

fn build_graph(g: &GraphSection) -> Result<MetricGraph, CliError> {
    match g {
        GraphSection::Path { n_vertices } => MetricGraph::path(*n_vertices).map_err(at("graph.n_vertices")),
        GraphSection::Star { leaves } => MetricGraph::star(*leaves).map_err(at("graph.leaves")),
        GraphSection::Edges { n_vertices, edges } => {
            let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
            MetricGraph::new(*n_vertices, &pairs).map_err(at("graph.edges"))
        }
    }
}

fn catalog(entry: &CatalogEntry, path: &str) -> Result<ScalarFn<f64>, CliError> {
    let f = match *entry {
        CatalogEntry::Zero => ScalarFn::Zero,
        CatalogEntry::Constant { sigma } => ScalarFn::Constant(sigma),
        CatalogEntry::ClippedLinear { sigma, cap } => ScalarFn::ClippedLinear { sigma, cap },
        CatalogEntry::SinModulated { sigma } => ScalarFn::SinModulated(sigma),
    };
    f.validate().map_err(at(path))?;
    Ok(f)
}

/// Expands a catalog list to `count` entries (empty = zero, one = broadcast).
fn expand(list: &[CatalogEntry], count: usize, path: &str) -> Result<Vec<ScalarFn<f64>>, CliError> {
    match list.len() {
        0 => Ok(vec![ScalarFn::Zero; count]),
        1 => Ok(vec![catalog(&list[0], &format!("{path}[0]"))?; count]),
        n if n == count => list.iter().enumerate().map(|(i, e)| catalog(e, &format!("{path}[{i}]"))).collect(),
        n => Err(CliError::invalid(path, format!("expected 0, 1 or {count} entries, got {n}"))),
    }
}

fn parse_functional(text: &str, graph: &MetricGraph, path: &str) -> Result<Functional, CliError> {
    let index = |s: &str, limit: usize| -> Result<usize, CliError> {
        let k: usize = s.parse().map_err(|_| CliError::invalid(path, format!("'{s}' is not an index")))?;
        ensure((1..=limit).contains(&k), path, || format!("index {k} outside 1..={limit}"))?;
        Ok(k - 1)
    };
    match text.split_once(':') {
        None if text == "mass" => Ok(Functional::TerminalMass),
        None if text == "norm_sq" => Ok(Functional::TerminalNormSq),
        Some(("node", k)) => Ok(Functional::TerminalNode(index(k, graph.n_vertices())?)),
        Some(("edge_mid", j)) => Ok(Functional::TerminalEdgeMid(index(j, graph.n_edges())?)),
        _ => Err(CliError::invalid(path, format!("unknown functional '{text}' (mass, norm_sq, node:<k>, edge_mid:<j>)"))),
    }
}

pub fn scheme(s: SchemeConfig) -> Scheme {
    match s {
        SchemeConfig::ExpEuler => Scheme::ExponentialEuler,
        SchemeConfig::EulerMaruyama => Scheme::EulerMaruyama,
    }
}

/// `value` is a whole number of delay cells.
fn on_delay_grid(value: f64, dtheta: f64, path: &str) -> Result<(), CliError> {
    grid_steps(value, dtheta).map(|_| ()).map_err(at(path))
}

fn validate_semigroup(s: &SemigroupSection, dtheta: f64) -> Result<(), CliError> {
    for (i, &t) in s.identity_times.iter().enumerate() {
        positive(t, &format!("semigroup.identity_times[{i}]"))?;
    }
    for (i, &t) in s.explicit_times.iter().enumerate() {
        let path = format!("semigroup.explicit_times[{i}]");
        positive(t, &path)?;
        on_delay_grid(t, dtheta, &path)?;
    }
    ensure(s.dyson_substeps >= 1, "semigroup.dyson_substeps", || "must be >= 1".into())?;
    non_negative(s.dyson_time, "semigroup.dyson_time")?;
    on_delay_grid(s.dyson_time, dtheta / s.dyson_substeps as f64, "semigroup.dyson_time")?;
    positive(s.t0, "semigroup.t0")
}

fn validate_converge(c: &ConvergeSection, t_final: f64, dtheta: f64) -> Result<(), CliError> {
    ensure(c.dt_list.len() >= 3, "converge.dt_list", || {
        format!("needs at least 3 step sizes (the last is the reference), got {}", c.dt_list.len())
    })?;
    for (i, &dt) in c.dt_list.iter().enumerate() {
        let path = format!("converge.dt_list[{i}]");
        positive(dt, &path)?;
        on_delay_grid(dt, dtheta, &path)?;
        step_count(t_final, dt).map_err(at(&path))?;
        if i > 0 {
            ensure(dt < c.dt_list[i - 1], &path, || "dt_list must be strictly decreasing".into())?;
        }
    }
    ensure(c.n_paths >= 1, "converge.n_paths", || "must be >= 1".into())
}

fn validate_control(c: &ControlSection, n_vertices: usize) -> Result<(), CliError> {
    non_negative(c.q_x, "control.q_x")?;
    non_negative(c.q_z, "control.q_z")?;
    non_negative(c.q_t, "control.q_t")?;
    ensure(c.z_max.is_finite() && c.z_max >= 0.0, "control.z_max", || {
        Error::EmptyControlDomain(c.z_max).to_string()
    })?;
    ensure(!c.policies.is_empty(), "control.policies", || "at least one policy is required".into())?;
    for (i, p) in c.policies.iter().enumerate() {
        let path = format!("control.policies[{i}]");
        ensure(
            !p.label().is_empty() && !p.label().contains([',', '"', '\n', '\r']),
            &format!("{path}.label"),
            || "label must be non-empty and free of commas, quotes and line breaks".into(),
        )?;
        ensure(
            c.policies[..i].iter().all(|q| q.label() != p.label()),
            &format!("{path}.label"),
            || format!("duplicate label '{}'", p.label()),
        )?;
        match p {
            PolicyConfig::Constant { z, .. } => {
                ensure(z.len() == 1 || z.len() == n_vertices, &format!("{path}.z"), || {
                    format!("expected 1 or {n_vertices} values, got {}", z.len())
                })?;
                ensure(z.iter().all(|v| v.is_finite()), &format!("{path}.z"), || "values must be finite".into())?;
            }
            PolicyConfig::Feedback { proxy, proxy_file, .. } => match (proxy.as_deref(), proxy_file) {
                (Some("riccati"), None) => {
                    ensure(c.penalty == PenaltyConfig::Quadratic, &format!("{path}.proxy"), || {
                        "the Riccati proxy needs penalty = \"quadratic\"".into()
                    })?;
                    positive(c.q_z, "control.q_z")?;
                }
                (Some(other), None) => {
                    return Err(CliError::invalid(format!("{path}.proxy"), format!("unknown proxy '{other}' (riccati)")))
                }
                (None, Some(_)) => {}
                _ => return Err(CliError::invalid(path, "set exactly one of proxy or proxy_file")),
            },
        }
    }
    Ok(())
}

/// Validates every section and builds the model, initial state and run spec.
pub fn build(mut config: RunConfig, base_dir: &Path, overrides: Overrides) -> Result<Experiment, CliError> {
    if let Some(seed) = overrides.seed {
        config.sde.master_seed = seed;
    }
    if let Some(paths) = overrides.paths {
        config.sde.n_paths = paths;
    }
    ensure(config.schema_version == SCHEMA_VERSION, "schema_version", || {
        format!("unsupported version '{}', expected '{SCHEMA_VERSION}'", config.schema_version)
    })?;

    let graph = build_graph(&config.graph)?;
    let (m, n) = (graph.n_edges(), graph.n_vertices());
    let grid = &config.grid;
    ensure(grid.n_x >= 3, "grid.n_x", || format!("must be >= 3, got {}", grid.n_x))?;
    ensure(grid.n_theta >= 1, "grid.n_theta", || "must be >= 1".into())?;

    let coeff = match config.coefficients {
        CoefficientSection::Constant { value } => EdgeCoefficient::constant(m, grid.n_x, value),
        CoefficientSection::Linear { a, b } => EdgeCoefficient::from_fn(m, grid.n_x, |_, x| a + b * x),
    }
    .map_err(at("coefficients"))?;

    let bsec = &config.boundary;
    ensure(bsec.b.len() == n, "boundary.b", || format!("expected {n} entries, got {}", bsec.b.len()))?;
    let b = NodeMatrixB::new(bsec.b.clone(), bsec.conservative).map_err(at("boundary.b"))?;

    let dsec = &config.delay;
    positive(dsec.r, "delay.r")?;
    non_negative(dsec.uniform_mass.abs(), "delay.uniform_mass")?;
    let density = if dsec.uniform_mass == 0.0 { Density::None } else { Density::Uniform { mass: dsec.uniform_mass } };
    let atoms = dsec.atoms.iter().map(|a| (a[0], a[1])).collect();
    let mu = DelayMeasure::new(dsec.r, atoms, density).map_err(at("delay.atoms"))?;
    let dtheta = dsec.r / grid.n_theta as f64;

    let edge_noise = expand(&config.noise.g, m, "noise.g")?;
    let node_noise = expand(&config.noise.g_tilde, n, "noise.g_tilde")?
        .into_iter()
        .map(|f| match config.noise.g_tilde_argument {
            NodeArgument::Value => NodeFn::Value(f),
            NodeArgument::Delayed => NodeFn::Delayed(f),
        })
        .collect();
    let noise = NoiseSpec::new(edge_noise, node_noise).map_err(at("noise"))?;
    let drift = DriftSpec::new(expand(&config.drift.f, m, "drift.f")?).map_err(at("drift.f"))?;

    let sde = &config.sde;
    positive(sde.dt, "sde.dt")?;
    on_delay_grid(sde.dt, dtheta, "sde.dt")?;
    non_negative(sde.t_final, "sde.t_final")?;
    step_count(sde.t_final, sde.dt).map_err(at("sde.t_final"))?;
    ensure(sde.n_paths >= 1, "sde.n_paths", || "must be >= 1".into())?;
    ensure(sde.stride >= 1, "sde.stride", || "must be >= 1".into())?;
    ensure(sde.record_paths <= sde.n_paths, "sde.record_paths", || {
        format!("cannot record {} of {} paths", sde.record_paths, sde.n_paths)
    })?;
    let functionals = sde
        .functionals
        .iter()
        .enumerate()
        .map(|(i, f)| parse_functional(f, &graph, &format!("sde.functionals[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;

    validate_semigroup(&config.semigroup, dtheta)?;
    if let Some(c) = &config.converge {
        validate_converge(c, sde.t_final, dtheta)?;
    }
    if let Some(c) = &config.control {
        validate_control(c, n)?;
    }

    let options = AfrakOptions { zero_flux: bsec.zero_flux };
    let model = SdeModel::new(graph, coeff, b, options, mu, grid.n_theta, noise, drift).map_err(at("boundary"))?;
    let u0 = config.initial.u0;
    let eta0 = config.initial.eta0;
    let x0 = model
        .initial_state(
            |_, x| match u0 {
                ProfileConfig::Constant { value } => value,
                ProfileConfig::Parabola { value, amplitude } => value + amplitude * x * (1.0 - x),
            },
            |_, theta| match eta0 {
                HistoryConfig::Constant { value } => value,
                HistoryConfig::Linear { value, slope } => value + slope * theta,
            },
        )
        .map_err(at("initial"))?;
    let run = RunSpec { dt: sde.dt, t_final: sde.t_final, scheme: scheme(sde.scheme), stride: sde.stride };
    Ok(Experiment { config, base_dir: base_dir.to_path_buf(), model, x0, run, functionals })
}

impl Experiment {
    pub fn n_paths(&self) -> usize {
        self.config.sde.n_paths
    }

    pub fn master_seed(&self) -> u64 {
        self.config.sde.master_seed
    }

    /// Control problem and policies; feedback proxies are solved or loaded here.
    pub fn control(&self) -> Result<(ControlProblem<f64>, Vec<Policy<f64>>), CliError> {
        let c = self.config.control.as_ref().ok_or_else(|| CliError::invalid("control", "section is required"))?;
        let penalty = match c.penalty {
            PenaltyConfig::Quadratic => ControlPenalty::Quadratic,
            PenaltyConfig::Quartic => ControlPenalty::Quartic,
        };
        let weights = CostWeights { penalty, q_x: c.q_x, q_z: c.q_z, q_t: c.q_t };
        let prob = ControlProblem::for_model(&self.model, weights, c.z_max).map_err(at("control"))?;
        let n = self.model.graph.n_vertices();
        let dim = self.model.layout().dim();
        let policies = c
            .policies
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                PolicyConfig::Constant { label, z } => {
                    let z = if z.len() == 1 { DVector::from_element(n, z[0]) } else { DVector::from_vec(z.clone()) };
                    Ok(Policy::constant(label.clone(), z))
                }
                PolicyConfig::Feedback { label, proxy_file: Some(file), .. } => {
                    let path = self.base_dir.join(file);
                    let m = read_matrix(&path, dim, &format!("control.policies[{i}].proxy_file"))?;
                    Ok(Policy::feedback(label.clone(), m))
                }
                PolicyConfig::Feedback { label, .. } => {
                    let m = netspde::control::riccati_proxy(&prob, &self.model, &self.x0)?;
                    Ok(Policy::feedback(label.clone(), m))
                }
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok((prob, policies))
    }
}

/// Reads a `dim x dim` comma-separated matrix.
fn read_matrix(path: &Path, dim: usize, field: &str) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(field, format!("{}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::invalid(field, format!("{}: {e}", path.display())))?;
    ensure(rows.len() == dim && rows.iter().all(|r| r.len() == dim), field, || {
        format!("expected a {dim}x{dim} matrix in {}", path.display())
    })?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}
