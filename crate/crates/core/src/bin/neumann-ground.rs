//! Command-line front end. Every verb writes its outputs under `--out-dir`;
//! errors go to stderr as one JSON object and set the exit code
//! (2 input/schema, 3 assumption, 4 numeric).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use neumann_ground::bounds::{bounds_report, ClassId, ClassParams, Feasibility};
use neumann_ground::estimators::stability_trials;
use neumann_ground::optim::OptimizerKind;
use neumann_ground::quadrature::{QuadratureRule, DEFAULT_GAUSS_ORDER};
use neumann_ground::rademacher::{rademacher_estimate, RademacherConfig};
use neumann_ground::reference::{
    barron_saturation, solve_ground_truth, validate_potential, GalerkinConfig, DEFAULT_MAX_BASIS,
};
use neumann_ground::trainer::{approximation_check, sweep, train, ApproxConfig, TrainConfig};
use neumann_ground::{Error, Result, Series, Truth};

#[derive(Parser)]
#[command(
    name = "neumann-ground",
    version,
    about = "Neural ground states of -Δ + V with Neumann boundary conditions on [0,1]^d"
)]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for all output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Galerkin ground state of a potential.
    Reference(ReferenceArgs),
    /// Train a network on the empirical Rayleigh quotient.
    Solve(SolveArgs),
    /// Train over a grid of sample sizes and fit the excess decay rate.
    Sweep(SweepArgs),
    /// Evaluate every explicit constant of the generalization bounds.
    Bounds(BoundsArgs),
    /// Check the stability inequalities on random trial functions.
    Stability(StabilityArgs),
    /// Trained H1 error of networks against a target function.
    Approx(ApproxArgs),
    /// Barron norm of the reference ground state across cutoffs.
    Barron(BarronArgs),
}

#[derive(Args)]
struct ReferenceArgs {
    /// Potential JSON file.
    potential: PathBuf,
    /// Per-axis mode cutoff K.
    #[arg(long, default_value_t = 32)]
    cutoff: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_BASIS)]
    max_basis: usize,
    #[arg(long, default_value = "truth.json")]
    out: String,
}

#[derive(Args)]
struct TrainFlags {
    /// Hidden width (default ⌈√n⌉).
    #[arg(long)]
    m: Option<usize>,
    /// Barron budget (default: norm of the ground state from --truth).
    #[arg(long = "B", id = "budget")]
    budget: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    /// Exact outer-layer solve every this many steps (0: start and end only).
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    gauss_order: Option<usize>,
    /// Training config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    potential: PathBuf,
    #[arg(long)]
    n: usize,
    /// Ground truth JSON from `reference`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value = "result.json")]
    out: String,
    #[arg(long, default_value = "loss.csv")]
    loss_csv: String,
}

#[derive(Args)]
struct SweepArgs {
    potential: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Seeds used are seed, seed+1, ..., seed+n_seeds-1.
    #[arg(long, default_value_t = 5)]
    n_seeds: u64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long = "B", id = "budget")]
    budget: f64,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Lower potential bound (default: equal to --vmax).
    #[arg(long)]
    vmin: Option<f64>,
    #[arg(long)]
    vmax: f64,
    /// Ground-state energy for the approximation term.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Potential JSON; enables empirical Rademacher estimates.
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Samples for the empirical estimates.
    #[arg(long, default_value_t = 256)]
    rad_n: usize,
    #[arg(long, default_value_t = 8)]
    n_sigma: usize,
    #[arg(long, default_value_t = 4)]
    n_restarts: usize,
    #[arg(long, default_value_t = 300)]
    rad_steps: usize,
    #[arg(long, default_value = "bounds.json")]
    out: String,
}

#[derive(Args)]
struct StabilityArgs {
    potential: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Per-axis degree of the random cosine polynomials.
    #[arg(long, default_value_t = 4)]
    degree: u32,
    #[arg(long, default_value_t = DEFAULT_GAUSS_ORDER)]
    gauss_order: usize,
    #[arg(long, default_value = "stability.csv")]
    out: String,
}

#[derive(Args)]
struct ApproxArgs {
    /// Target function JSON (same schema as a potential).
    target: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    m_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    n_seeds: u64,
    /// Approximation config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    gauss_order: Option<usize>,
    #[arg(long, default_value = "approx.csv")]
    out: String,
}

#[derive(Args)]
struct BarronArgs {
    potential: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    cutoffs: Vec<u32>,
    #[arg(long, default_value = "barron.csv")]
    out: String,
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "plain" => Ok(OptimizerKind::Plain),
        _ => Err(format!("unknown optimizer '{s}' (expected adam or plain)")),
    }
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let doc = ErrorDoc {
                error: e.kind(),
                message: e.to_string(),
                exit_code: code,
            };
            eprintln!("{}", serde_json::to_string(&doc).expect("error document"));
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidInput("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = Output { dir: cli.out_dir };
    let seed = cli.seed;
    match cli.verb {
        Verb::Reference(a) => reference(&out, a),
        Verb::Solve(a) => solve(&out, seed, a),
        Verb::Sweep(a) => run_sweep(&out, seed, a),
        Verb::Bounds(a) => bounds(&out, seed, a),
        Verb::Stability(a) => stability(&out, seed, a),
        Verb::Approx(a) => approx(&out, seed, a),
        Verb::Barron(a) => barron(&out, a),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn json<S: Serialize>(&self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// 17 significant digits, locale-free.
fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn load_series(path: &Path) -> Result<Series> {
    Series::from_json(&read(path)?)
}

fn load_truth(path: &Path) -> Result<Truth> {
    Truth::from_json(&read(path)?)
}

fn reference(out: &Output, a: ReferenceArgs) -> Result<()> {
    let v = load_series(&a.potential)?;
    let cfg = GalerkinConfig {
        dim: v.dim(),
        cutoff: a.cutoff,
        max_basis: a.max_basis,
    };
    let t = solve_ground_truth(&v, &cfg)?;
    let mut text = t.to_json();
    text.push('\n');
    out.write(&a.out, &text)?;
    println!("lambda0={} lambda1={} gap={}", f(t.lambda0), f(t.lambda1), f(t.gap));
    Ok(())
}

fn train_config(n: usize, seed: u64, fl: &TrainFlags) -> Result<TrainConfig> {
    let mut c = match &fl.config {
        Some(p) => serde_json::from_str::<TrainConfig>(&read(p)?).map_err(|e| Error::Schema(e.to_string()))?,
        None => TrainConfig::new(n),
    };
    c.n = n;
    c.seed = seed;
    if fl.m.is_some() {
        c.m = fl.m;
    }
    if fl.budget.is_some() {
        c.budget = fl.budget;
    }
    if let Some(s) = fl.steps {
        c.steps = s;
    }
    if let Some(x) = fl.lr {
        c.lr = x;
    }
    if let Some(x) = fl.lr_final {
        c.lr_final = x;
    }
    if let Some(o) = fl.optimizer {
        c.optimizer = o;
    }
    if let Some(r) = fl.refit_every {
        c.outer_refit_every = r;
    }
    if let Some(g) = fl.gauss_order {
        c.gauss_order = g;
    }
    Ok(c)
}

fn solve(out: &Output, seed: u64, a: SolveArgs) -> Result<()> {
    let v = load_series(&a.potential)?;
    let truth = a.truth.as_deref().map(load_truth).transpose()?;
    let cfg = train_config(a.n, seed, &a.train)?;
    let r = train(&v, &cfg, truth.as_ref())?;
    out.json(&a.out, &r)?;
    let mut csv = String::from("step,E_n\n");
    for (i, e) in r.loss_trace.iter().enumerate() {
        writeln!(csv, "{i},{}", f(*e)).expect("string write");
    }
    out.write(&a.loss_csv, &csv)?;
    match &r.report {
        Some(rep) => println!(
            "energy={} excess={} p_perp_l2={} p_perp_h1={} final_loss={} seed={seed}",
            f(rep.energy),
            f(rep.excess),
            f(rep.p_perp_l2),
            f(rep.p_perp_h1),
            f(r.final_loss)
        ),
        None => println!("final_loss={} seed={seed}", f(r.final_loss)),
    }
    eprintln!("wall_time_s={:.3}", r.wall_time.as_secs_f64());
    Ok(())
}

fn status(x: &Feasibility) -> (&'static str, String) {
    match x.value() {
        Some(v) => ("feasible", f(v)),
        None => ("infeasible", String::new()),
    }
}

fn run_sweep(out: &Output, seed: u64, a: SweepArgs) -> Result<()> {
    let v = load_series(&a.potential)?;
    let truth = load_truth(&a.truth)?;
    let template = train_config(a.n_list.first().copied().unwrap_or(1), seed, &a.train)?;
    let seeds: Vec<u64> = (0..a.n_seeds).map(|i| seed.wrapping_add(i)).collect();
    let rep = sweep(&v, &truth, &a.n_list, &seeds, &template, a.delta)?;

    let mut rows = String::from("seed,n,m,energy,excess,p_perp_l2,p_perp_h1\n");
    for r in &rep.rows {
        writeln!(
            rows,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.n,
            r.m,
            f(r.energy),
            f(r.excess),
            f(r.p_perp_l2),
            f(r.p_perp_h1)
        )
        .expect("string write");
    }
    out.write("sweep.csv", &rows)?;

    let mut cells = String::from(
        "n,m,median_excess,xi1,xi2,xi3,eta,approx_gap_status,approx_gap,oracle_status,oracle_rhs,below_oracle\n",
    );
    for c in &rep.cells {
        let (gs, gv) = status(&c.approx_gap);
        let (os, ov) = status(&c.oracle_rhs);
        writeln!(
            cells,
            "{},{},{},{},{},{},{},{gs},{gv},{os},{ov},{}",
            c.n,
            c.m,
            f(c.median_excess),
            f(c.xi.xi1),
            f(c.xi.xi2),
            f(c.xi.xi3),
            f(c.xi.eta),
            c.below_oracle.map_or(String::from("n/a"), |b| b.to_string())
        )
        .expect("string write");
    }
    out.write("sweep_summary.csv", &cells)?;
    out.json("sweep.json", &SeededDoc { seed, report: &rep })?;
    match rep.slope {
        Some(s) => println!("slope={} seeds={}", f(s), seeds.len()),
        None => println!("slope=n/a ({})", rep.slope_note),
    }
    for c in &rep.cells {
        if !c.oracle_rhs.is_feasible() {
            println!("n={}: oracle bound infeasible (xi-feasibility precondition fails)", c.n);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SeededDoc<'a, R> {
    seed: u64,
    report: &'a R,
}

fn bounds(out: &Output, seed: u64, a: BoundsArgs) -> Result<()> {
    let p = ClassParams {
        budget: a.budget,
        m: a.m,
        d: a.d,
        v_min: a.vmin.unwrap_or(a.vmax),
        v_max: a.vmax,
    };
    let empirical = match &a.potential {
        Some(path) => {
            let v = load_series(path)?;
            let pb = validate_potential(&v)?;
            if pb.v_min < p.v_min * (1.0 - 1e-12) || pb.v_max > p.v_max * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "potential range [{}, {}] exceeds --vmin/--vmax",
                    pb.v_min, pb.v_max
                )));
            }
            let mut cfg = RademacherConfig::new(a.rad_n, a.n_sigma, a.n_restarts, seed);
            cfg.steps = a.rad_steps;
            let r1 = rademacher_estimate(ClassId::G1, &p, &v, &cfg)?;
            let r2 = rademacher_estimate(ClassId::G2, &p, &v, &cfg)?;
            Some((r1.estimate, r2.estimate))
        }
        None => None,
    };
    let rep = bounds_report(&p, a.n, a.delta, a.lambda0, empirical)?;
    out.json(&a.out, &SeededDoc { seed, report: &rep })?;
    let mut table = vec![
        ("B", f(p.budget)),
        ("m", p.m.to_string()),
        ("n", a.n.to_string()),
        ("d", p.d.to_string()),
        ("delta", f(a.delta)),
        ("tau", f(rep.tau)),
        ("M_F", f(rep.m_f)),
        ("M_1", f(rep.m_1)),
        ("M_2", f(rep.m_2)),
        ("Lambda1", f(rep.lambda1)),
        ("Lambda2", f(rep.lambda2)),
        ("R1_dudley", f(rep.rademacher_bound_1)),
        ("R2_dudley", f(rep.rademacher_bound_2)),
        ("Z_1", f(rep.z_1)),
        ("Z_2", f(rep.z_2)),
        ("xi1", f(rep.xi1)),
        ("xi2", f(rep.xi2)),
        ("xi3", f(rep.xi3)),
        ("eta", f(rep.eta)),
    ];
    if let (Some(e1), Some(e2)) = (rep.rademacher_empirical_1, rep.rademacher_empirical_2) {
        table.push(("R1_empirical_lower_estimate", f(e1)));
        table.push(("R2_empirical_lower_estimate", f(e2)));
    }
    let (gs, gv) = status(&rep.approx_gap);
    let (os, ov) = status(&rep.oracle_rhs);
    table.push(("approx_gap", format!("{gs} {gv}").trim_end().to_string()));
    table.push(("oracle_rhs", format!("{os} {ov}").trim_end().to_string()));
    for (k, v) in table {
        println!("{k:<28} {v}");
    }
    Ok(())
}

fn stability(out: &Output, seed: u64, a: StabilityArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::InvalidInput("--trials must be >= 1".into()));
    }
    let v = load_series(&a.potential)?;
    let truth = load_truth(&a.truth)?;
    let rule = QuadratureRule::default_for(v.dim(), a.gauss_order)?;
    let trials = stability_trials(&v, &truth, a.trials, a.degree, seed, &rule)?;
    let mut csv = String::from(
        "seed,trial,perturbation,excess,p_perp_l2,p_perp_h1,l2_lhs,l2_rhs,l2_slack,h1_lhs,h1_rhs,h1_slack,violated\n",
    );
    let mut violations = 0;
    for t in &trials {
        let c = &t.check;
        violations += c.violated as usize;
        writeln!(
            csv,
            "{seed},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.perturbation.map(f).unwrap_or_default(),
            f(t.excess),
            f(t.p_perp_l2),
            f(t.p_perp_h1),
            f(c.l2_lhs),
            f(c.l2_rhs),
            f(c.l2_slack),
            f(c.h1_lhs),
            f(c.h1_rhs),
            f(c.h1_slack),
            c.violated
        )
        .expect("string write");
    }
    out.write(&a.out, &csv)?;
    println!("trials={} violations={violations} seed={seed}", trials.len());
    Ok(())
}

fn approx(out: &Output, seed: u64, a: ApproxArgs) -> Result<()> {
    let target = load_series(&a.target)?;
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<ApproxConfig>(&read(p)?).map_err(|e| Error::Schema(e.to_string()))?,
        None => ApproxConfig::default(),
    };
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(g) = a.gauss_order {
        cfg.gauss_order = g;
    }
    let seeds: Vec<u64> = (0..a.n_seeds).map(|i| seed.wrapping_add(i)).collect();
    let rows = approximation_check(&target, &a.m_list, &seeds, &cfg)?;
    let mut csv = String::from("m,B,eta,best_error,median_error,below_eta\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.m,
            f(r.budget),
            f(r.eta),
            f(r.best_error),
            f(r.median_error),
            r.best_error <= r.eta
        )
        .expect("string write");
    }
    out.write(&a.out, &csv)?;
    out.json("approx.json", &SeededDoc { seed, report: &rows })?;
    for r in &rows {
        println!("m={} best_error={} eta={}", r.m, f(r.best_error), f(r.eta));
    }
    Ok(())
}

fn barron(out: &Output, a: BarronArgs) -> Result<()> {
    let v = load_series(&a.potential)?;
    let rows = barron_saturation(&v, a.s, &a.cutoffs)?;
    let mut csv = String::from("cutoff,barron_norm,rel_change\n");
    let mut prev: Option<f64> = None;
    for &(k, b) in &rows {
        let rel = prev.map(|p| f((b - p).abs() / p.abs())).unwrap_or_default();
        writeln!(csv, "{k},{},{rel}", f(b)).expect("string write");
        prev = Some(b);
    }
    out.write(&a.out, &csv)?;
    for (k, b) in rows {
        println!("K={k} barron_norm={}", f(b));
    }
    Ok(())
}
