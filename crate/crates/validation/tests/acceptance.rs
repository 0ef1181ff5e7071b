//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Run with `cargo test -p netspde-validation --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use netspde::control::{
    hamiltonian, hamiltonian_objective, policy_tournament, ControlPenalty, ControlProblem, CostWeights,
};
use netspde::delay::miyadera_voigt_bound;
use netspde::sde::monte_carlo::paired_scheme_difference;
use netspde::sde::{simulate_path, strong_order_estimate, Scheme};
use netspde::semigroup::{
    check_semigroup_property, dyson_phillips_partial_sums, explicit_unperturbed, expm, spectral_abscissa,
    weighted_norm, DysonBase,
};
use netspde::spatial::{assemble_a_frak, AfrakOptions, EdgeCoefficient, NodeMatrixB};
use netspde::MetricGraph;
use netspde_cli::{execute, load_experiment, Command, Experiment, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn experiment(name: &str) -> Experiment {
    load_experiment(&config(name), Overrides::default()).expect("shipped config is valid").0
}

/// Random connected graph on 2..=6 vertices: a random tree plus a few chords.
fn random_graph(rng: &mut ChaCha8Rng) -> MetricGraph {
    let n = rng.random_range(2..=6);
    let mut edges: Vec<(usize, usize)> = (2..=n).map(|v| (rng.random_range(1..v), v)).collect();
    for _ in 0..rng.random_range(0..=2) {
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        if a != b {
            edges.push((a, b));
        }
    }
    MetricGraph::new(n, &edges).unwrap()
}

fn c01_c02_generator_properties() -> (Verdict, Verdict) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut worst_abscissa, mut worst_strict, mut worst_sym) = (f64::MIN, f64::MIN, 0f64);
    let mut n_strict = 0;
    for _ in 0..20 {
        let g = random_graph(&mut rng);
        let n_x = rng.random_range(5..=21);
        let (a0, a1) = (rng.random_range(0.2..2.0), rng.random_range(0.0..1.0));
        let coeff = EdgeCoefficient::from_fn(g.n_edges(), n_x, |j, x| a0 + a1 * x * (1.0 + j as f64 * 0.1)).unwrap();
        let mut b: Vec<f64> = (0..g.n_vertices()).map(|_| -rng.random_range(0.0..2.0)).collect();
        if rng.random_bool(0.25) {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let conservative = b.iter().all(|&v| v == 0.0);
        let a = assemble_a_frak(&g, &coeff, &NodeMatrixB::new(b.clone(), conservative).unwrap(), AfrakOptions::default())
            .unwrap();
        let s = spectral_abscissa(&a.matrix).unwrap();
        worst_abscissa = worst_abscissa.max(s);
        if b.iter().any(|&v| v <= -0.5) {
            n_strict += 1;
            worst_strict = worst_strict.max(s);
        }
        worst_sym = worst_sym.max(a.symmetry_residual());
    }
    let secs = started.elapsed().as_secs_f64();
    let c1 = verdict(
        worst_abscissa <= 1e-10 && (n_strict == 0 || worst_strict < -1e-4) && secs < 10.0,
        format!(
            "max abscissa {worst_abscissa:.3e} (<= 1e-10), max with some b <= -0.5 {worst_strict:.3e} over {n_strict} configs (< -1e-4), {secs:.2} s (< 10 s)"
        ),
    );
    let c2 = verdict(worst_sym <= 1e-10, format!("max symmetry residual {worst_sym:.3e} (<= 1e-10)"));
    (c1, c2)
}

fn c03_mass_conservation() -> Verdict {
    let mut exp = experiment("mass_conservation.toml");
    exp.run.stride = 1;
    let layout = exp.model.layout();
    let traj = simulate_path(&exp.model, &exp.run, &exp.x0, 0, 1).unwrap();
    let m0 = exp.x0.total_mass(&layout);
    let drift = traj.states.iter().map(|x| (x.total_mass(&layout) - m0).abs()).fold(0.0, f64::max);
    verdict(drift <= 1e-8, format!("max |mass(t) - mass(0)| = {drift:.3e} over {} steps (<= 1e-8)", traj.states.len() - 1))
}

fn c04_semigroup_identity() -> Verdict {
    let exp = experiment("star_semigroup.toml");
    let gen = &exp.model.generator;
    let mut worst = 0f64;
    for t in [0.1, 0.2] {
        for s in [0.1, 0.2] {
            worst = worst.max(check_semigroup_property(&gen.full, &gen.weights, t, s).unwrap());
        }
    }
    verdict(worst <= 1e-8, format!("max relative defect {worst:.3e} on K_1,3 with unit delay at -1 (<= 1e-8)"))
}

fn c05_nilpotency() -> Verdict {
    let exp = experiment("star_semigroup.toml");
    let gen = &exp.model.generator;
    let t = gen.r + gen.dtheta();
    let op = explicit_unperturbed(&exp.model.afrak, gen.layout.n_theta, gen.r, t).unwrap();
    let da = gen.layout.dim_a();
    let n = gen.layout.dim() - da;
    let max = op.matrix.view((da, da), (n, n)).amax();
    verdict(max == 0.0, format!("max |shift block| at t = r + dtheta: {max:e} (exactly 0)"))
}

fn c06_explicit_vs_expm() -> Verdict {
    let exp = experiment("star_semigroup.toml");
    let gen = &exp.model.generator;
    let mut worst = 0f64;
    let mut parts = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        let explicit = explicit_unperturbed(&exp.model.afrak, gen.layout.n_theta, gen.r, t).unwrap().matrix;
        let reference = expm(&gen.a0, t).unwrap().matrix;
        let e = weighted_norm(&(explicit - reference), &gen.weights);
        parts.push(format!("t={t}: {e:.3e}"));
        worst = worst.max(e);
    }
    verdict(worst <= 1e-6, format!("{} (<= 1e-6)", parts.join(", ")))
}

fn c07_dyson_phillips() -> Verdict {
    let exp = experiment("dyson_phillips.toml");
    let model = &exp.model;
    let sg = &exp.config.semigroup;
    let q = miyadera_voigt_bound(&model.mu, &model.b, sg.t0).unwrap();
    let t = sg.dyson_time;
    let base = DysonBase::MatrixExponential { substeps: sg.dyson_substeps };
    let sums = dyson_phillips_partial_sums(&model.generator, &model.afrak, t, 4, base).unwrap();
    let reference = expm(&model.generator.full, t).unwrap().matrix;
    let res: Vec<f64> =
        sums.iter().map(|s| weighted_norm(&(&s.matrix - &reference), &model.generator.weights)).collect();
    let monotone = res.windows(2).all(|w| w[1] < w[0]);
    let ratio = res[4] / res[1];
    let list: Vec<String> = res.iter().map(|r| format!("{r:.3e}")).collect();
    verdict(
        q <= 0.5 && monotone && ratio <= 0.1,
        format!("q = {q} (<= 0.5), residuals N=0..4 [{}] decreasing: {monotone}, N4/N1 = {ratio:.3e} (<= 0.1)", list.join(", ")),
    )
}

fn c08_dde_oracle() -> Verdict {
    let exp = experiment("dde_oracle.toml");
    let traj = simulate_path(&exp.model, &exp.run, &exp.x0, 0, 1).unwrap();
    let end = traj.states.last().unwrap();
    let err = end.d.iter().map(|d| (d - 3.5).abs()).fold(0.0, f64::max);
    verdict(err <= 5e-3, format!("d(2) = {:.6} vs 3.5, error {err:.3e} (<= 5e-3)", end.d[0]))
}

struct Convergence {
    slope: f64,
    errors: Vec<f64>,
    secs: f64,
    paired_slope: f64,
    paired: Vec<f64>,
}

fn strong_order_runs() -> Convergence {
    let exp = experiment("strong_order.toml");
    let c = exp.config.converge.as_ref().unwrap();
    let seed = exp.master_seed();
    let t = exp.run.t_final;
    let started = Instant::now();
    let rep = strong_order_estimate(&exp.model, &exp.x0, Scheme::EulerMaruyama, t, &c.dt_list, c.n_paths, seed).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let dts = &c.dt_list[..c.dt_list.len() - 1];
    let paired = paired_scheme_difference(&exp.model, &exp.x0, t, dts, c.n_paths, seed).unwrap();
    let paired_slope = netspde::sde::monte_carlo::log_log_slope(dts, &paired);
    Convergence { slope: rep.slope, errors: rep.errors, secs, paired_slope, paired }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn c09_strong_order(c: &Convergence) -> Verdict {
    verdict(
        (c.slope - 0.5).abs() <= 0.2 && c.secs < 300.0,
        format!(
            "slope {:.3} (0.5 +- 0.2), errors [{}] for dt = 1/64..1/512, {:.1} s (< 300 s)",
            c.slope,
            fmt_list(&c.errors),
            c.secs
        ),
    )
}

fn c10_mild_integrator(c: &Convergence) -> Verdict {
    let mut exp = experiment("mass_conservation.toml");
    exp.run.scheme = Scheme::ExponentialEuler;
    let model = &exp.model;
    let layout = model.layout();
    let traj = simulate_path(model, &exp.run, &exp.x0, 0, 1).unwrap();
    let end = traj.states.last().unwrap().ud_vector(&layout);
    let x0 = exp.x0.to_vector(&layout);
    let reference = expm(&model.generator.full, exp.run.t_final).unwrap().matrix * x0;
    let da = layout.dim_a();
    let gap = (end - reference.rows(0, da)).amax();
    verdict(
        gap <= 1e-12 && c.paired_slope >= 0.3,
        format!(
            "noise-free max gap to expm {gap:.3e} (<= 1e-12); paired gap [{}], slope {:.3} (>= 0.3)",
            fmt_list(&c.paired),
            c.paired_slope
        ),
    )
}

fn c11_hamiltonian() -> Verdict {
    let closed = ControlProblem {
        weights: CostWeights { penalty: ControlPenalty::Quadratic, q_x: 0.0, q_z: 0.5, q_t: 0.0 },
        z_max: 1.0,
        r: DMatrix::from_element(1, 1, 1.0),
        state_weights: DVector::from_element(1, 1.0),
    };
    let h = hamiltonian(&closed, &DVector::zeros(1), &DVector::from_element(1, 0.5)).unwrap();
    let exact = h.z_star[0] == -0.5 && h.psi == 0.125;

    let exp = experiment("heat_tournament.toml");
    let dim = exp.model.layout().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = f64::MIN;
    for probe in 0..200 {
        let penalty = if probe % 2 == 0 { ControlPenalty::Quadratic } else { ControlPenalty::Quartic };
        let weights = CostWeights {
            penalty,
            q_x: rng.random_range(0.0..2.0),
            q_z: rng.random_range(0.05..2.0),
            q_t: 0.0,
        };
        let prob = ControlProblem::for_model(&exp.model, weights, rng.random_range(0.1..3.0)).unwrap();
        let x = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
        let hv = hamiltonian(&prob, &x, &y).unwrap();
        let best = hamiltonian_objective(&prob, &x, &y, &hv.z_star);
        let zm = prob.z_max;
        for k in 0..100 {
            let z = if k % 2 == 0 {
                DVector::from_fn(prob.n_controls(), |_, _| rng.random_range(-zm..=zm))
            } else {
                let scale = 10f64.powi(-(k % 7) as i32);
                hv.z_star.map(|zi| (zi + scale * rng.random_range(-1.0..1.0)).clamp(-zm, zm))
            };
            worst = worst.max(best - hamiltonian_objective(&prob, &x, &y, &z));
        }
    }
    verdict(
        exact && worst <= 1e-10,
        format!(
            "closed form z* = {}, psi = {} (exactly -0.5, 0.125); worst objective excess over 200 probes {worst:.3e} (<= 1e-10)",
            h.z_star[0], h.psi
        ),
    )
}

fn c12_tournament() -> Verdict {
    let exp = experiment("heat_tournament.toml");
    let started = Instant::now();
    let (prob, policies) = exp.control().unwrap();
    let entries =
        policy_tournament(&prob, &exp.model, &policies, &exp.run, &exp.x0, exp.n_paths(), exp.master_seed()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let fb = entries.iter().find(|e| e.label == "feedback").unwrap();
    let separated = entries.iter().filter(|e| e.label != "feedback").all(|e| fb.cost.ci_hi < e.cost.ci_lo);
    let table: Vec<String> = entries
        .iter()
        .map(|e| format!("{} {:.3} [{:.3}, {:.3}]", e.label, e.cost.mean, e.cost.ci_lo, e.cost.ci_hi))
        .collect();
    verdict(
        fb.rank == 1 && separated && secs < 600.0,
        format!("{} at {} paths; feedback CI disjoint and below: {separated}, {secs:.1} s (< 600 s)", table.join("; "), exp.n_paths()),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn c13_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let small_converge = tmp.path().join("converge.toml");
    let text = std::fs::read_to_string(config("strong_order.toml")).unwrap();
    std::fs::write(&small_converge, text.replace("n_paths = 1000", "n_paths = 8")).unwrap();
    let runs = [
        (Command::Simulate, config("p3_simulate.toml"), Some(40)),
        (Command::AnalyzeSemigroup, config("star_semigroup.toml"), None),
        (Command::Converge, small_converge, None),
        (Command::ControlTournament, config("heat_tournament.toml"), Some(40)),
    ];
    let mut mismatched = Vec::new();
    let mut n_files = 0;
    for (k, (cmd, cfg, paths)) in runs.iter().enumerate() {
        let overrides = Overrides { seed: None, paths: *paths };
        let mut results = Vec::new();
        for (rep, threads) in [1usize, 3].into_iter().enumerate() {
            let out = tmp.path().join(format!("run{k}_{rep}"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| execute(*cmd, cfg, Some(&out), overrides)).unwrap();
            results.push(csv_files(&out));
        }
        n_files += results[0].len();
        if results[0].is_empty() || results[0] != results[1] {
            mismatched.push(cmd.name());
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{n_files} CSV files from 4 commands byte-identical across reruns with 1 and 3 threads; mismatches: {mismatched:?}"),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!("{} [{id:2}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    let (c1, c2) = c01_c02_generator_properties();
    report(1, "dissipativity", c1);
    report(2, "self-adjointness", c2);
    report(3, "mass conservation", c03_mass_conservation());
    report(4, "semigroup identity", c04_semigroup_identity());
    report(5, "nilpotency", c05_nilpotency());
    report(6, "explicit blocks vs expm", c06_explicit_vs_expm());
    report(7, "Dyson-Phillips convergence", c07_dyson_phillips());
    report(8, "DDE oracle", c08_dde_oracle());
    let conv = strong_order_runs();
    report(9, "strong order", c09_strong_order(&conv));
    report(10, "mild integrator consistency", c10_mild_integrator(&conv));
    report(11, "Hamiltonian certificate", c11_hamiltonian());
    report(12, "policy tournament", c12_tournament());
    report(13, "determinism", c13_determinism());

    let failed: Vec<u32> = results.iter().filter(|(_, _, v)| !v.pass).map(|(id, _, _)| *id).collect();
    println!(
        "acceptance: {} passed, {} failed {failed:?} in {:.1} s",
        results.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
