//! Command pipelines. Each returns its CSV files in memory; nothing touches
//! the output directory until every computation has succeeded.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use netspde::control::policy_tournament;
use netspde::delay::miyadera_voigt_bound;
use netspde::sde::monte_carlo::{edge_midpoint, paired_scheme_difference, log_log_slope};
use netspde::sde::{monte_carlo, simulate_path, strong_order_estimate};
use netspde::semigroup::{
    check_semigroup_property, dyson_phillips_partial_sums, expm, explicit_unperturbed, spectral_abscissa, weighted_norm,
    DysonBase,
};

use crate::error::CliError;
use crate::experiment::{scheme, Experiment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    AnalyzeSemigroup,
    Converge,
    ControlTournament,
    ValidateConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::AnalyzeSemigroup => "analyze-semigroup",
            Command::Converge => "converge",
            Command::ControlTournament => "control-tournament",
            Command::ValidateConfig => "validate-config",
        }
    }
}

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: &'static str,
    pub contents: String,
}

/// Shortest round-trip scientific notation, so reruns are byte-identical.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn run(cmd: Command, exp: &Experiment) -> Result<Vec<Output>, CliError> {
    match cmd {
        Command::Simulate => simulate(exp),
        Command::AnalyzeSemigroup => analyze_semigroup(exp),
        Command::Converge => converge(exp),
        Command::ControlTournament => tournament(exp),
        Command::ValidateConfig => Ok(Vec::new()),
    }
}

/// `paths.csv` for the recorded paths and `mc_summary.csv` when there are at
/// least two paths.
fn simulate(exp: &Experiment) -> Result<Vec<Output>, CliError> {
    let model = &exp.model;
    let (m, n) = (model.graph.n_edges(), model.graph.n_vertices());
    let mut paths = String::from("path_id,t");
    for a in 1..=n {
        write!(paths, ",d{a}").unwrap();
    }
    for j in 1..=m {
        write!(paths, ",u{j}_mid").unwrap();
    }
    paths.push('\n');
    for path in 1..=exp.config.sde.record_paths as u64 {
        let traj = simulate_path(model, &exp.run, &exp.x0, exp.master_seed(), path)?;
        for (t, x) in traj.times.iter().zip(&traj.states) {
            write!(paths, "{path},{}", num(*t)).unwrap();
            for v in x.d.iter() {
                write!(paths, ",{}", num(*v)).unwrap();
            }
            for j in 0..m {
                write!(paths, ",{}", num(edge_midpoint(x, j))).unwrap();
            }
            paths.push('\n');
        }
    }
    let mut out = vec![Output { name: "paths.csv", contents: paths }];
    if exp.n_paths() >= 2 {
        let stats = monte_carlo(model, &exp.run, &exp.x0, exp.n_paths(), exp.master_seed(), &exp.functionals)?;
        let mut csv = String::from("functional,mean,var,ci_lo,ci_hi\n");
        for s in stats {
            writeln!(csv, "{},{},{},{},{}", s.name, num(s.mean), num(s.var), num(s.ci_lo), num(s.ci_hi)).unwrap();
        }
        out.push(Output { name: "mc_summary.csv", contents: csv });
    }
    Ok(out)
}

struct SemigroupRows(String);

impl SemigroupRows {
    fn push(&mut self, quantity: &str, t: Option<f64>, s: Option<f64>, n: Option<usize>, value: f64) {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let n = n.map(|k| k.to_string()).unwrap_or_default();
        writeln!(self.0, "{quantity},{},{},{n},{}", opt(t), opt(s), num(value)).unwrap();
    }
}

/// Generator diagnostics, semigroup identity, nilpotency, explicit blocks and
/// Dyson-Phillips residuals in `semigroup.csv`.
fn analyze_semigroup(exp: &Experiment) -> Result<Vec<Output>, CliError> {
    let model = &exp.model;
    let gen = &model.generator;
    let sg = &exp.config.semigroup;
    let layout = gen.layout;
    let (da, dim) = (layout.dim_a(), layout.dim());
    let w = &gen.weights;
    let mut rows = SemigroupRows(String::from("quantity,t,s,n,value\n"));

    rows.push("spectral_abscissa_afrak", None, None, None, spectral_abscissa(&model.afrak.matrix)?);
    rows.push("symmetry_residual", None, None, None, model.afrak.symmetry_residual());
    rows.push("mass_residual", None, None, None, model.afrak.mass_residual());
    rows.push("spectral_abscissa_full", None, None, None, spectral_abscissa(&gen.full)?);
    rows.push("miyadera_voigt_q", Some(sg.t0), None, None, miyadera_voigt_bound(&model.mu, &model.b, sg.t0)?);

    for &t in &sg.identity_times {
        for &s in &sg.identity_times {
            rows.push("semigroup_identity", Some(t), Some(s), None, check_semigroup_property(&gen.full, w, t, s)?);
        }
    }

    let r = gen.r;
    let t_nil = r + gen.dtheta();
    let nil = explicit_unperturbed(&model.afrak, layout.n_theta, r, t_nil)?;
    let shift = nil.matrix.view((da, da), (dim - da, dim - da));
    rows.push("nilpotency_max_abs", Some(t_nil), None, None, shift.amax());

    for &t in &sg.explicit_times {
        let explicit = explicit_unperturbed(&model.afrak, layout.n_theta, r, t)?.matrix;
        let reference = expm(&gen.a0, t)?.matrix;
        rows.push("explicit_vs_expm", Some(t), None, None, weighted_norm(&(&explicit - &reference), w));
        let wa = w.rows(0, da).into_owned();
        let block = |m: &DMatrix<f64>| m.view((0, 0), (da, da)).into_owned();
        rows.push("explicit_vs_expm_afrak_block", Some(t), None, None, weighted_norm(&(block(&explicit) - block(&reference)), &wa));
    }

    let t = sg.dyson_time;
    let base = DysonBase::MatrixExponential { substeps: sg.dyson_substeps };
    let sums = dyson_phillips_partial_sums(gen, &model.afrak, t, sg.dyson_terms, base)?;
    let reference = expm(&gen.full, t)?.matrix;
    for (k, s) in sums.iter().enumerate() {
        rows.push("dyson_residual", Some(t), None, Some(k), weighted_norm(&(&s.matrix - &reference), w));
    }
    Ok(vec![Output { name: "semigroup.csv", contents: rows.0 }])
}

/// Strong errors against the reference step and their log-log slope, plus
/// the optional paired scheme gap, in `convergence.csv`.
fn converge(exp: &Experiment) -> Result<Vec<Output>, CliError> {
    let c = exp.config.converge.as_ref().ok_or_else(|| CliError::invalid("converge", "section is required"))?;
    let model = &exp.model;
    let t_final = exp.run.t_final;
    let seed = exp.master_seed();
    let rep = strong_order_estimate(model, &exp.x0, scheme(c.scheme), t_final, &c.dt_list, c.n_paths, seed)?;
    let mut csv = String::from("quantity,dt,value\n");
    for (dt, e) in rep.dts.iter().zip(&rep.errors) {
        writeln!(csv, "strong_error,{},{}", num(*dt), num(*e)).unwrap();
    }
    writeln!(csv, "strong_slope,,{}", num(rep.slope)).unwrap();
    if c.paired {
        let dts = &c.dt_list[..c.dt_list.len() - 1];
        let gaps = paired_scheme_difference(model, &exp.x0, t_final, dts, c.n_paths, seed)?;
        for (dt, g) in dts.iter().zip(&gaps) {
            writeln!(csv, "paired_difference,{},{}", num(*dt), num(*g)).unwrap();
        }
        writeln!(csv, "paired_slope,,{}", num(log_log_slope(dts, &gaps))).unwrap();
    }
    Ok(vec![Output { name: "convergence.csv", contents: csv }])
}

/// Cost of every configured policy on common random numbers, in rank order.
fn tournament(exp: &Experiment) -> Result<Vec<Output>, CliError> {
    let (prob, policies) = exp.control()?;
    if policies.len() < 2 {
        return Err(CliError::invalid("control.policies", "a tournament needs at least 2 policies"));
    }
    let n_paths = exp.n_paths();
    if n_paths < 2 {
        return Err(CliError::invalid("sde.n_paths", "a tournament needs at least 2 paths"));
    }
    let mut entries = policy_tournament(&prob, &exp.model, &policies, &exp.run, &exp.x0, n_paths, exp.master_seed())?;
    entries.sort_by_key(|e| e.rank);
    let mut csv = String::from("policy,J_mean,ci_lo,ci_hi,rank\n");
    for e in entries {
        writeln!(csv, "{},{},{},{},{}", e.label, num(e.cost.mean), num(e.cost.ci_lo), num(e.cost.ci_hi), e.rank).unwrap();
    }
    Ok(vec![Output { name: "tournament.csv", contents: csv }])
}
