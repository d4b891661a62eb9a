//! `seerpol`: predictor training, policy search, baselines, ablations and sweeps.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use seerpol::active::{active_learn, random_learn};
use seerpol::baselines::{evo_search_constrained, random_select};
use seerpol::experiment::{self, SweepAxis};
use seerpol::{
    AccuracyOracle, EvoConfig64, Fixture, OptConfig64, Policy64, Predictor64, ReplayOracle, SyntheticOracle64,
};

use config::{Config, SamplerKind};
use output::{fmt_opt, Table};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Infeasible { budget: f64, min_complexity: f64 },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Infeasible { .. } => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Infeasible { budget, min_complexity } => {
                write!(f, "infeasible budget: {budget} G is below the minimal achievable complexity {min_complexity} G")
            }
        }
    }
}

impl From<seerpol::Error> for CliError {
    fn from(e: seerpol::Error) -> Self {
        match e {
            seerpol::Error::InfeasibleBudget { budget, min_complexity } => {
                CliError::Infeasible { budget, min_complexity }
            }
            seerpol::Error::InvalidConfig(m) => CliError::Config(m),
            seerpol::Error::InvalidSpace(m) => CliError::Config(format!("space: {m}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "seerpol", version, about = "Budget-constrained compression policy search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Random,
    Evolution,
    Cpo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Axis {
    InitComplexity,
    Eta,
    B0,
    Budget,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::InitComplexity => SweepAxis::InitComplexity,
            Axis::Eta => SweepAxis::Eta,
            Axis::B0 => SweepAxis::B0,
            Axis::Budget => SweepAxis::Budget,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn the accuracy predictor from oracle labels.
    TrainPredictor {
        config: PathBuf,
        #[arg(long, value_enum)]
        sampler: Option<SamplerKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Search a deployable policy under a BOPs budget.
    Optimize {
        config: PathBuf,
        /// Budget in giga bit-operations.
        #[arg(long)]
        budget_g: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the 16-cell objective/update ablation grid.
    Ablate { config: PathBuf },
    /// Sweep one hyperparameter over the configured values.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Run a comparison searcher for every configured seed.
    Baseline {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        budget_g: Option<f64>,
    },
    /// Write a copy of a space fixture with freshly drawn oracle coefficients.
    GenOracle {
        fixture: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("{e}");
        return ExitCode::from(e.code());
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SEERPOL_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SEERPOL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::TrainPredictor { config, sampler, seed } => train_predictor(&config, sampler, seed),
        Command::Optimize { config, budget_g, seed } => optimize(&config, budget_g, seed),
        Command::Ablate { config } => ablate(&config),
        Command::Sweep { config, axis } => sweep(&config, axis.into()),
        Command::Baseline { config, method, budget_g } => baseline(&config, method, budget_g),
        Command::GenOracle { fixture, seed, out } => gen_oracle(&fixture, seed, out.as_deref()),
    }
}

enum Oracle {
    Synthetic(SyntheticOracle64),
    Replay(ReplayOracle<f64>),
}

impl Oracle {
    fn get(&self) -> &dyn AccuracyOracle<f64> {
        match self {
            Oracle::Synthetic(o) => o,
            Oracle::Replay(o) => o,
        }
    }
}

fn load_oracle(cfg: &Config) -> CliResult<Option<Oracle>> {
    if let Some(o) = &cfg.synthetic {
        return Ok(Some(Oracle::Synthetic(o.clone())));
    }
    if let Some(path) = &cfg.replay_path {
        let o = ReplayOracle::load(&cfg.space, path)
            .map_err(|e| CliError::Config(format!("oracle.path {}: {e}", path.display())))?;
        return Ok(Some(Oracle::Replay(o)));
    }
    Ok(None)
}

fn require_oracle(cfg: &Config, command: &str) -> CliResult<Oracle> {
    load_oracle(cfg)?.ok_or_else(|| CliError::Config(format!("oracle: {command} needs an oracle")))
}

fn load_predictor(cfg: &Config) -> CliResult<Predictor64> {
    let path = cfg.checkpoint_path();
    let pred = Predictor64::load(&path)
        .map_err(|e| CliError::Config(format!("predictor.checkpoint {}: {e}", path.display())))?;
    if pred.input_dim() != cfg.space.dim() {
        return Err(CliError::Config(format!(
            "predictor.checkpoint {} expects {} inputs but the space has {} dimensions",
            path.display(),
            pred.input_dim(),
            cfg.space.dim()
        )));
    }
    Ok(pred)
}

fn train_predictor(path: &Path, sampler: Option<SamplerKind>, seed: Option<u64>) -> CliResult<()> {
    let cfg = Config::load(path)?;
    let oracle = require_oracle(&cfg, "train-predictor")?;
    let mut evo = cfg.raw.evo.clone();
    let mut tcfg = cfg.raw.train.clone();
    if let Some(s) = seed {
        evo.seed = s;
        tcfg.seed = s;
    }
    let sampler = sampler.unwrap_or(cfg.raw.predictor.sampler);
    let started = Instant::now();
    let run = match sampler {
        SamplerKind::Active => active_learn(&cfg.space, oracle.get(), &evo, &tcfg)?,
        SamplerKind::Random => {
            let k = cfg.raw.predictor.samples.unwrap_or(evo.rounds * evo.samples_per_round);
            random_learn(&cfg.space, oracle.get(), k, &evo, &tcfg)?
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    let out = &cfg.output_dir;
    output::ensure_dir(out)?;
    output::write_atomic(&cfg.checkpoint_path(), run.predictor.to_json()?.as_bytes())?;
    let l = cfg.space.num_layers();
    let mut buf = Vec::new();
    seerpol::dataset::write_csv(&run.dataset, l, &mut buf)?;
    output::write_atomic(&out.join("dataset.csv"), &buf)?;
    let mut buf = Vec::new();
    seerpol::dataset::write_csv(&run.holdout, l, &mut buf)?;
    output::write_atomic(&out.join("holdout.csv"), &buf)?;

    let mut curve = Table::new(&["round", "labeled", "holdout_mse"]);
    let per = evo.samples_per_round;
    for (round, mse) in run.mse_curve.iter().enumerate() {
        let labeled = ((round + 1) * per).min(run.dataset.len());
        curve.row(vec![round.to_string(), labeled.to_string(), mse.to_string()]);
    }
    curve.save(&out.join("mse_curve.csv"))?;

    let last = run.mse_curve.last().copied().unwrap_or(f64::NAN);
    println!("labeled {} policies, final held-out MSE {last}", run.dataset.len());
    output::log(out, &format!("train-predictor sampler={sampler:?} wall_clock_s={elapsed:.3}"))?;
    Ok(())
}

fn opt_config(cfg: &Config, budget_g: Option<f64>) -> CliResult<OptConfig64> {
    let mut opt = cfg.raw.opt.clone();
    if let Some(b) = budget_g {
        opt.budget = b;
        opt.validate().map_err(|e| CliError::Config(format!("--budget-g: {e}")))?;
    }
    Ok(opt)
}

fn deployed_table(policy: &Policy64) -> Table {
    let mut t = Table::new(&["layer", "prune", "wbit", "abit"]);
    for (i, c) in policy.values().chunks(3).enumerate() {
        t.row(vec![(i + 1).to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()]);
    }
    t
}

fn optimize(path: &Path, budget_g: Option<f64>, seed: Option<u64>) -> CliResult<()> {
    let cfg = Config::load(path)?;
    let opt = opt_config(&cfg, budget_g)?;
    cfg.space.check_budget(opt.budget)?;
    let pred = load_predictor(&cfg)?;
    let oracle = load_oracle(&cfg)?;
    let seed = seed.unwrap_or(opt.seed);

    let started = Instant::now();
    let out = experiment::seeded_optimize(&pred, &cfg.space, &opt, seed)?;
    let elapsed = started.elapsed().as_secs_f64();

    let complexity = cfg.space.bops(&out.deployed)?;
    let predicted = pred.forward(&cfg.space.encode(&out.deployed)?)?;
    let accuracy = match &oracle {
        Some(o) => Some(o.get().accuracy(&cfg.space, &out.deployed)?),
        None => None,
    };

    let dir = &cfg.output_dir;
    output::ensure_dir(dir)?;
    deployed_table(&out.deployed).save(&dir.join("deployed.csv"))?;
    let mut buf = Vec::new();
    out.trajectory.write_csv(&mut buf)?;
    output::write_atomic(&dir.join("trajectory.csv"), &buf)?;
    let mut summary =
        Table::new(&["seed", "budget_g", "complexity_g", "predicted_acc", "oracle_acc", "status", "steps"]);
    let status = match out.trajectory.status {
        seerpol::optimizer::Termination::BudgetHit => "budget-hit",
        seerpol::optimizer::Termination::MaxIter => "max-iter",
    };
    summary.row(vec![
        seed.to_string(),
        opt.budget.to_string(),
        complexity.to_string(),
        predicted.to_string(),
        fmt_opt(accuracy),
        status.to_string(),
        (out.trajectory.steps.len() - 1).to_string(),
    ]);
    summary.save(&dir.join("summary.csv"))?;

    println!(
        "complexity {complexity} G (budget {}), predicted accuracy {predicted}, oracle accuracy {}, wall-clock {elapsed:.4} s",
        opt.budget,
        fmt_opt(accuracy)
    );
    output::log(dir, &format!("optimize seed={seed} wall_clock_s={elapsed:.6}"))?;
    Ok(())
}

fn ablate(path: &Path) -> CliResult<()> {
    let cfg = Config::load(path)?;
    let opt = opt_config(&cfg, None)?;
    cfg.space.check_budget(opt.budget)?;
    let pred = load_predictor(&cfg)?;
    let oracle = require_oracle(&cfg, "ablate")?;
    let started = Instant::now();
    let rows = experiment::ablation(&pred, &cfg.space, oracle.get(), &opt, &cfg.raw.experiment.seeds)?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut t = Table::new(&[
        "barrier",
        "gap",
        "adaptive_step",
        "momentum",
        "update",
        "complexity_mean",
        "complexity_std",
        "accuracy_mean",
        "accuracy_std",
        "accuracy_median",
        "predicted_mean",
    ]);
    for r in &rows {
        let v = r.variant;
        t.row(vec![
            v.use_barrier.to_string(),
            v.use_gap.to_string(),
            v.use_adaptive_step.to_string(),
            v.use_momentum.to_string(),
            v.update_label().to_string(),
            r.complexity.mean.to_string(),
            r.complexity.std.to_string(),
            r.accuracy.mean.to_string(),
            r.accuracy.std.to_string(),
            r.accuracy.median.to_string(),
            r.predicted.mean.to_string(),
        ]);
    }
    output::ensure_dir(&cfg.output_dir)?;
    t.save(&cfg.output_dir.join("ablation.csv"))?;
    println!("{} ablation rows written", rows.len());
    output::log(&cfg.output_dir, &format!("ablate wall_clock_s={elapsed:.3}"))?;
    Ok(())
}

fn sweep(path: &Path, axis: SweepAxis) -> CliResult<()> {
    let cfg = Config::load(path)?;
    let opt = opt_config(&cfg, None)?;
    let oracle = require_oracle(&cfg, "sweep")?;
    let sv = &cfg.raw.experiment.sweep;
    let values = match axis {
        SweepAxis::InitComplexity => &sv.init_complexity,
        SweepAxis::Eta => &sv.eta,
        SweepAxis::B0 => &sv.b0,
        SweepAxis::Budget => &sv.budget,
    };
    if values.is_empty() {
        return Err(CliError::Config(format!("experiment.sweep.{} has no values", axis.name())));
    }
    let seeds = &cfg.raw.experiment.seeds;
    let started = Instant::now();
    let (rows, header): (_, &[&str]) = if axis == SweepAxis::B0 {
        let rows = experiment::sweep_b0(&cfg.space, oracle.get(), &cfg.raw.evo, &cfg.raw.train, values, seeds)?;
        (rows, &["value", "mse_mean", "mse_std", "mse_median"])
    } else {
        if axis != SweepAxis::Budget {
            cfg.space.check_budget(opt.budget)?;
        }
        let pred = load_predictor(&cfg)?;
        let rows = experiment::sweep_optimizer(&pred, &cfg.space, oracle.get(), &opt, axis, values, seeds)?;
        (rows, &["value", "accuracy_mean", "accuracy_std", "accuracy_median", "complexity_mean", "complexity_std"])
    };
    let elapsed = started.elapsed().as_secs_f64();

    let mut t = Table::new(header);
    for r in &rows {
        let mut row = vec![r.value.to_string()];
        if let Some(m) = r.mse {
            row.extend([m.mean.to_string(), m.std.to_string(), m.median.to_string()]);
        }
        if let (Some(a), Some(c)) = (r.accuracy, r.complexity) {
            row.extend([
                a.mean.to_string(),
                a.std.to_string(),
                a.median.to_string(),
                c.mean.to_string(),
                c.std.to_string(),
            ]);
        }
        t.row(row);
    }
    output::ensure_dir(&cfg.output_dir)?;
    t.save(&cfg.output_dir.join(format!("sweep_{}.csv", axis.name())))?;
    println!("{} sweep rows written for {}", rows.len(), axis.name());
    output::log(&cfg.output_dir, &format!("sweep axis={} wall_clock_s={elapsed:.3}", axis.name()))?;
    Ok(())
}

fn baseline(path: &Path, method: Method, budget_g: Option<f64>) -> CliResult<()> {
    let cfg = Config::load(path)?;
    let opt = opt_config(&cfg, budget_g)?;
    cfg.space.check_budget(opt.budget)?;
    let oracle = load_oracle(&cfg)?;
    let space = &cfg.space;
    let name = match method {
        Method::Random => "random",
        Method::Evolution => "evolution",
        Method::Cpo => "cpo",
    };
    // The random baseline scores with the oracle when one is configured.
    let pred = match (method, &oracle) {
        (Method::Random, Some(_)) => None,
        _ => Some(load_predictor(&cfg)?),
    };

    let mut t = Table::new(&["method", "seed", "best_score", "oracle_acc", "complexity_g"]);
    let mut total = 0.0;
    for &seed in &cfg.raw.experiment.seeds {
        let started = Instant::now();
        let (best, score) = match method {
            Method::Random => {
                let eval = |p: &Policy64| -> seerpol::Result<f64> {
                    match (&oracle, &pred) {
                        (Some(o), _) => o.get().accuracy(space, p),
                        (None, Some(pr)) => pr.forward(&space.encode(p)?),
                        (None, None) => unreachable!("predictor is loaded without an oracle"),
                    }
                };
                let r = random_select(&eval, space, opt.budget, cfg.raw.experiment.random_k, seed)?;
                (r.best, r.best_score)
            }
            Method::Evolution => {
                let evo = EvoConfig64 { seed, ..cfg.raw.evo.clone() };
                let r = evo_search_constrained(pred.as_ref().expect("loaded"), space, opt.budget, &evo)?;
                (r.best, r.best_predicted)
            }
            Method::Cpo => {
                let p = pred.as_ref().expect("loaded");
                let r = experiment::seeded_optimize(p, space, &opt, seed)?;
                let s = p.forward(&space.encode(&r.deployed)?)?;
                (r.deployed, s)
            }
        };
        total += started.elapsed().as_secs_f64();
        let acc = match &oracle {
            Some(o) => Some(o.get().accuracy(space, &best)?),
            None => None,
        };
        t.row(vec![
            name.to_string(),
            seed.to_string(),
            score.to_string(),
            fmt_opt(acc),
            space.bops(&best)?.to_string(),
        ]);
    }
    output::ensure_dir(&cfg.output_dir)?;
    t.save(&cfg.output_dir.join(format!("baseline_{name}.csv")))?;
    println!("{name}: {} seeds, wall-clock {total:.4} s", cfg.raw.experiment.seeds.len());
    output::log(&cfg.output_dir, &format!("baseline method={name} wall_clock_s={total:.6}"))?;
    Ok(())
}

fn gen_oracle(path: &Path, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let fixture =
        Fixture::load(path).map_err(|e| CliError::Config(format!("cannot load fixture {}: {e}", path.display())))?;
    let space = fixture.space::<f64>().map_err(|e| CliError::Config(format!("space: {e}")))?;
    let oracle = SyntheticOracle64::generate(space.num_layers(), seed);
    let mut fresh = fixture.clone();
    fresh.oracle = Fixture::from_space(&space, Some(&oracle)).oracle;
    let text = fresh.to_json()? + "\n";
    match out {
        Some(p) => output::write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
