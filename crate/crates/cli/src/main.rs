use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use clonint::ecology::{EcologyParams, FitnessSummary};
use clonint::harness::{self, ExperimentReport, ExperimentSpec, ParamsSource, ReplicateOutcome};
use clonint::lv::{self, IntegrateOptions, LvSystem};
use clonint::phase::{self, AnalysisConfig};
use clonint::predict;
use clonint::presets;
use clonint::sim::{self, Recording, SimConfig, StopRule};

#[derive(Parser)]
#[command(name = "clonint", version, about = "Three-type birth-death model with competition: predictions and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print invasion fitnesses and equilibria as JSON.
    Fitness(ParamArgs),
    /// Classify the deterministic three-type system.
    Classify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        json: bool,
    },
    /// Print the predicted outcome branches.
    Predict {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        json: bool,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Integrate the deterministic system and write it as CSV.
    Ode(OdeArgs),
    /// Run an experiment spec and print the report as JSON.
    Experiment(ExperimentArgs),
    /// Run an experiment spec and check every target; exits 1 on failure.
    Verify(ExperimentArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Built-in parameter set: single-sweep, speedup, annihilation, rps.
    #[arg(long, conflicts_with = "params")]
    preset: Option<String>,
    /// TOML file with flat parameter keys, at the top level or in [params].
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Carrying capacity.
    #[arg(long = "K")]
    carrying_capacity: Option<u64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<EcologyParams> {
        let mut p = match (&self.preset, &self.params) {
            (Some(name), _) => presets::by_name(name)
                .with_context(|| format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", ")))?,
            (None, Some(path)) => load_params(path)?,
            (None, None) => bail!("give --preset or --params"),
        };
        if self.alpha.is_some() {
            p.alpha = self.alpha;
        }
        if let Some(k) = self.carrying_capacity {
            p.carrying_capacity = k;
        }
        p.validate()?;
        Ok(p)
    }
}

fn load_params(path: &Path) -> Result<EcologyParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let section = match table.get("params") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => table,
    };
    let source: ParamsSource = section.try_into().with_context(|| format!("parameters in {}", path.display()))?;
    Ok(source.resolve()?)
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Absolute end time; 50 ln K by default.
    #[arg(long)]
    horizon: Option<f64>,
    /// Sampling stride of the recorded grid.
    #[arg(long)]
    stride: Option<f64>,
    /// Record the state after every event.
    #[arg(long)]
    every_event: bool,
    /// Never inject mutant 2.
    #[arg(long)]
    no_mutation2: bool,
    /// Stop once only one type is left.
    #[arg(long)]
    stop_monomorphic: bool,
    /// Trajectory CSV; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the phase report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the phase report as a single-row CSV.
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Args)]
struct OdeArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Initial densities `n0,n1,n2`; the wild-type equilibrium plus 0.01 of
    /// each mutant by default.
    #[arg(long, value_delimiter = ',')]
    z0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    /// Output grid; every accepted step when unset.
    #[arg(long)]
    stride: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u32>,
    #[arg(long, default_value_t = default_parallelism())]
    parallelism: usize,
    #[arg(long)]
    eps: Option<f64>,
    /// Absolute simulation horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Report JSON; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// One CSV row per replicate.
    #[arg(long)]
    replicates_csv: Option<PathBuf>,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(&self.spec).with_context(|| format!("reading {}", self.spec.display()))?;
        let mut spec = ExperimentSpec::from_toml(&text)?;
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(r) = self.replicates {
            spec.replicates = r;
        }
        if let Some(e) = self.eps {
            spec.analysis.eps = e;
        }
        if let Some(h) = self.horizon {
            spec.sim.horizon = Some(h);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn run(&self) -> Result<ExperimentReport> {
        let spec = self.load()?;
        let (report, outs) = harness::run_detailed(&spec, self.parallelism)?;
        if let Some(path) = &self.replicates_csv {
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            writeln!(w, "{}", ReplicateOutcome::CSV_HEADER)?;
            for o in &outs {
                writeln!(w, "{}", o.csv_row())?;
            }
            w.flush()?;
        }
        let json = serde_json::to_string_pretty(&report)?;
        write_text(self.out.as_deref(), &json)?;
        Ok(report)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let params = args.params.resolve()?;
    let mut cfg = SimConfig::standard(&params, args.eps, args.seed);
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if args.every_event {
        cfg.record = Recording::every_event();
    }
    if let Some(dt) = args.stride {
        cfg.record.stride = Some(dt);
    }
    cfg.mutation2_enabled &= !args.no_mutation2;
    if args.stop_monomorphic {
        cfg.stop.push(StopRule::Monomorphic);
    }
    let traj = sim::simulate(&params, &cfg)?;
    let mut w = output(args.out.as_deref())?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    if args.report.is_some() || args.report_csv.is_some() {
        let summary = FitnessSummary::new(&params);
        let acfg = AnalysisConfig::standard(args.eps, params.carrying_capacity);
        let report = phase::analyze(&traj, &acfg, &summary, &cfg.stop);
        if let Some(path) = &args.report {
            write_text(Some(path), &serde_json::to_string_pretty(&report)?)?;
        }
        if let Some(path) = &args.report_csv {
            let level = (args.eps * params.carrying_capacity as f64).floor() as u64;
            write_text(Some(path), &format!("{}\n{}", phase::PhaseReport::CSV_HEADER, report.csv_row(level)))?;
        }
    }
    Ok(())
}

fn ode(args: &OdeArgs) -> Result<()> {
    let params = args.params.resolve()?;
    let z0 = match &args.z0 {
        Some(v) => match v.as_slice() {
            &[a, b, c] => [a, b, c],
            _ => bail!("--z0 takes three comma-separated densities"),
        },
        None => {
            let summary = FitnessSummary::new(&params);
            let n0 = summary.axis_point(0)[0];
            [n0, 0.01, 0.01]
        }
    };
    let sol = lv::integrate(&LvSystem::full(&params), z0, args.horizon, IntegrateOptions::default())?;
    let mut w = output(args.out.as_deref())?;
    sol.write_csv(&mut w, args.stride)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fitness(p) => {
            let summary = FitnessSummary::new(&p.resolve()?);
            write_text(None, &serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Classify { params, json } => {
            let q = lv::classify_certified(&FitnessSummary::new(&params.resolve()?))?;
            let text = if json { serde_json::to_string_pretty(&q)? } else { lv::render(&q) };
            write_text(None, text.trim_end())?;
        }
        Command::Predict { params, json } => {
            let params = params.resolve()?;
            let summary = FitnessSummary::new(&params);
            let preds = predict::predict(&params)?;
            let text = if json {
                serde_json::to_string_pretty(&preds)?
            } else {
                format!("regime: {}\n{}", predict::regime(&summary, params.alpha), predict::render_text(&preds))
            };
            write_text(None, text.trim_end())?;
        }
        Command::Simulate(a) => simulate(&a)?,
        Command::Ode(a) => ode(&a)?,
        Command::Experiment(a) => {
            let report = a.run()?;
            let (_, table) = harness::verify(&report, &report_policy(&a)?);
            eprint!("{table}");
        }
        Command::Verify(a) => {
            let report = a.run()?;
            let (ok, table) = harness::verify(&report, &report_policy(&a)?);
            eprint!("{table}");
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report_policy(a: &ExperimentArgs) -> Result<harness::TolerancePolicy> {
    Ok(a.load()?.tolerance)
}
