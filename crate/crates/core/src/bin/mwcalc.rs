//! Command-line front end: every experiment is described by one TOML file.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mwcalc::config::{resolve_points, Algorithm, ExperimentConfig};
use mwcalc::gradient::{average_gradient, QuadratureSpec, Region, Representative};
use mwcalc::measure::{self, check_invariance, parse_decimal, simulate_orbit, simulate_orbit_exact};
use mwcalc::mw::{self, ConvergeReport};
use mwcalc::{Error, IndexShape, MultilinearForm, Point};

const EXIT_PASS: u8 = 0;
const EXIT_PROPERTY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mwcalc", version, about = "MW-operator experiments over affine iterated function systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Overrides the configuration's evaluation budget.
    #[arg(long, global = true)]
    budget: Option<u128>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check contraction, tiling and lower-set hypotheses (JSON).
    Validate,
    /// Tabulate iterates and their error bounds (CSV).
    Iterate,
    /// Iterate to convergence and compare with the limit operator (JSON).
    Limit,
    /// Test whether the field solves the functional equation (JSON).
    FixedPoint,
    /// Three-way invariance check for a distribution (JSON).
    Invariance {
        /// Also write the per-point fixed-point residuals (CSV).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Simulate an orbit of the expanding map; cell frequencies (CSV).
    Orbit {
        /// Also write the head of the trajectory (CSV).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Emit the depth-k approximation of the minimal admissible set (CSV).
    Admissible,
}

/// Failure categories mapped onto exit codes.
enum Failure {
    Config(String),
    Budget(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("serialization: {e}"))
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::from(EXIT_PASS),
        Ok(false) => ExitCode::from(EXIT_PROPERTY),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_BUDGET)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let budget = match cli.budget {
        Some(0) => return Err(Failure::Config("--budget must be positive".into())),
        Some(b) => b,
        None => cfg.budget(),
    };
    let mut out = open_output(cli.out.as_deref())?;
    let verdict = match &cli.command {
        Command::Validate => cmd_validate(&cfg, &mut out),
        Command::Iterate => cmd_iterate(&cfg, budget, &mut out),
        Command::Limit => cmd_limit(&cfg, budget, &mut out),
        Command::FixedPoint => cmd_fixed_point(&cfg, &mut out),
        Command::Invariance { table } => cmd_invariance(&cfg, table.as_deref(), &mut out),
        Command::Orbit { trajectory } => cmd_orbit(&cfg, trajectory.as_deref(), &mut out),
        Command::Admissible => cmd_admissible(&cfg, budget, &mut out),
    }?;
    out.flush()?;
    Ok(verdict)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("this command needs a [{name}] section")))
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn coordinate_headers(shape: IndexShape) -> Vec<String> {
    (0..shape.r())
        .flat_map(|n| (0..shape.s()).map(move |k| if shape.s() == 1 { format!("x{}", n + 1) } else { format!("x{}_{}", n + 1, k + 1) }))
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_validate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let samples = cfg.validate.as_ref().map_or(20_000, |v| v.samples);
    let report = ifs.validate_hypotheses(samples, cfg.seed);
    write_json(out, &report)?;
    if !report.pass {
        eprintln!("failed checks: {}", report.failed_flags().join(", "));
    }
    Ok(report.pass)
}

fn cmd_iterate(cfg: &ExperimentConfig, budget: u128, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let f = cfg.build_field()?;
    let it = section(&cfg.iterate, "iterate")?;
    let points = resolve_points(&it.points, ifs.tile().bounding_box())?;
    writeln!(out, "{},p,value,bound,bound_source", coordinate_headers(ifs.shape()).join(","))?;
    for &p in &it.depths {
        for x in &points {
            let value = match it.algorithm {
                Algorithm::Words => mw::iterate_by_words(&ifs, &f, p, x, budget)?,
                Algorithm::Composition => mw::iterate_by_composition(&ifs, &f, p, x, budget)?,
            };
            let bound = mw::error_bound(&ifs, &f, x, p).ok();
            let source = match bound.map(|b| b.source) {
                Some(mw::BoundSource::Analytic) => "analytic",
                Some(mw::BoundSource::Empirical) => "empirical",
                None => "",
            };
            writeln!(out, "{},{p},{value},{},{source}", join(x.as_slice()), fmt_opt(bound.map(|b| b.value)))?;
        }
    }
    Ok(true)
}

#[derive(Serialize)]
struct LimitRow {
    x: Vec<f64>,
    #[serde(flatten)]
    report: ConvergeReport,
}

#[derive(Serialize)]
struct LimitReport {
    average_gradient: MultilinearForm,
    quadrature: QuadratureSpec,
    tol: f64,
    p_max: usize,
    all_converged: bool,
    all_certified: bool,
    rows: Vec<LimitRow>,
}

fn cmd_limit(cfg: &ExperimentConfig, budget: u128, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let f = cfg.build_field()?;
    let lc = section(&cfg.limit, "limit")?;
    let quad = lc.quadrature.unwrap_or(QuadratureSpec::SelfSimilar {
        depth: mw::default_fit_depth(&ifs, budget.min(1 << 16)),
        representative: Representative::Centroid,
    });
    let lambda = average_gradient(&f, Region::Ifs(&ifs), quad)?;
    let points = resolve_points(&lc.points, ifs.tile().bounding_box())?;
    let rows = points
        .iter()
        .map(|x| {
            Ok(LimitRow {
                x: x.as_slice().to_vec(),
                report: mw::converge(&ifs, &f, x, lc.tol, lc.p_max, budget)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let all_converged = rows.iter().all(|r| r.report.converged);
    let all_certified = rows.iter().all(|r| r.report.certified != Some(false));
    write_json(
        out,
        &LimitReport {
            average_gradient: lambda,
            quadrature: quad,
            tol: lc.tol,
            p_max: lc.p_max,
            all_converged,
            all_certified,
            rows,
        },
    )?;
    Ok(all_converged && all_certified)
}

fn cmd_fixed_point(cfg: &ExperimentConfig, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let f = cfg.build_field()?;
    let fc = section(&cfg.fixed_point, "fixed_point")?;
    let points = resolve_points(&fc.points, ifs.tile().bounding_box())?;
    let report = mw::check_fixed_point(&ifs, &f, &points, fc.tol, fc.fit_depth)?;
    write_json(out, &report)?;
    Ok(report.is_fixed)
}

fn cmd_invariance(cfg: &ExperimentConfig, table: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let nu = cfg.build_distribution()?;
    let ic = section(&cfg.invariance, "invariance")?;
    let report = check_invariance(&ifs, &nu, &ic.methods, ic.tol, ic.points_per_axis)?;
    write_json(out, &report)?;
    if let Some(path) = table {
        let mut t = open_output(Some(path))?;
        let pushed = measure::pushforward_distribution(&ifs, &nu)?;
        let grid = mwcalc::config::PointsConfig {
            points: Vec::new(),
            points_per_axis: Some(ic.points_per_axis),
        };
        writeln!(t, "{},d,pushforward_d,residual", coordinate_headers(ifs.shape()).join(","))?;
        for x in resolve_points(&grid, ifs.tile().bounding_box())? {
            let d = nu.distribution().eval(&x);
            let md = pushed.distribution().eval(&x);
            writeln!(t, "{},{d},{md},{}", join(x.as_slice()), (md - d).abs())?;
        }
        t.flush()?;
    }
    if !report.coherent {
        eprintln!("warning: invariance verdicts disagree");
    }
    Ok(report.all_pass() && report.coherent)
}

fn cmd_orbit(cfg: &ExperimentConfig, trajectory: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let oc = section(&cfg.orbit, "orbit")?;
    let stats = if ifs.exact_form().is_some() {
        let x0 = oc
            .x0
            .iter()
            .map(|c| parse_decimal(&c.decimal_text()))
            .collect::<Result<Vec<_>, Error>>()?;
        simulate_orbit_exact(&ifs, &x0, oc.steps, oc.bins_per_axis, oc.keep, cfg.seed)?
    } else {
        let x0 = oc.x0.iter().map(|c| c.to_f64()).collect::<Result<Vec<_>, Error>>()?;
        simulate_orbit(&ifs, &Point::new(ifs.shape(), x0)?, oc.steps, oc.bins_per_axis, oc.keep, cfg.seed)?
    };
    let dim = ifs.shape().dim();
    let bbox = ifs.tile().bounding_box();
    let cell_headers: Vec<String> = (1..=dim).map(|l| format!("cell{l}")).collect();
    let lo_headers: Vec<String> = (1..=dim).map(|l| format!("lo{l}")).collect();
    writeln!(out, "{},{},count,frequency", cell_headers.join(","), lo_headers.join(","))?;
    let bins = stats.bins_per_axis;
    for (idx, (&count, &freq)) in stats.counts.iter().zip(&stats.frequencies).enumerate() {
        let mut rest = idx;
        let mut cell = vec![0usize; dim];
        for l in (0..dim).rev() {
            cell[l] = rest % bins;
            rest /= bins;
        }
        let lo: Vec<f64> = (0..dim)
            .map(|l| {
                let (a, b) = (bbox.lo().as_slice()[l], bbox.hi().as_slice()[l]);
                a + (b - a) * cell[l] as f64 / bins as f64
            })
            .collect();
        let cells: Vec<String> = cell.iter().map(usize::to_string).collect();
        writeln!(out, "{},{},{count},{freq}", cells.join(","), join(&lo))?;
    }
    if let Some(path) = trajectory {
        let mut t = open_output(Some(path))?;
        writeln!(t, "step,{}", coordinate_headers(ifs.shape()).join(","))?;
        for (step, x) in stats.trajectory.iter().enumerate() {
            writeln!(t, "{step},{}", join(x))?;
        }
        t.flush()?;
    }
    eprintln!(
        "orbit: {} steps, exact = {}, escaped = {}, off-cell = {}",
        stats.steps, stats.exact, stats.escaped, stats.off_cell
    );
    Ok(stats.escaped == 0)
}

fn cmd_admissible(cfg: &ExperimentConfig, budget: u128, out: &mut dyn Write) -> Outcome {
    let ifs = cfg.build_ifs()?;
    let ac = section(&cfg.admissible, "admissible")?;
    let points = ifs.minimal_admissible_points(ac.depth, budget)?;
    writeln!(out, "{}", coordinate_headers(ifs.shape()).join(","))?;
    for p in &points {
        writeln!(out, "{}", join(p.as_slice()))?;
    }
    Ok(true)
}
