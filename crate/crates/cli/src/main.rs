//! `rtmot` command-line driver.
//!
//! Exit codes: 0 ok, 1 unschedulable or verification failure, 2 config error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rtmot::config::{ConfigFile, ExperimentConfig};
use rtmot::experiment::{
    run, run_metrics, scenario_for, sweep, write_confidence_csv, write_sweep_csv, write_trace_csv,
};
use rtmot::taskgen::TaskGenParams;
use rtmot::verify::{gate_params, verify_flex, verify_gate, verify_rta};
use rtmot::{rta, ExecutionTimeModel, Policy, TaskSet};

const SEED_ENV: &str = "RTMOT_SEED";

#[derive(Parser)]
#[command(
    name = "rtmot",
    version,
    about = "Confidence-driven scheduling of multi-object tracking tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline response-time analysis per policy.
    Analyze(AnalyzeArgs),
    /// Simulate one task set under one policy.
    Simulate(SimulateArgs),
    /// Task sets x policies x seeds.
    Sweep(SweepArgs),
    /// Randomized oracle suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Repeatable; defaults to the config's policies, else `min`.
    #[arg(long)]
    policy: Vec<Policy>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "flex")]
    policy: Policy,
    #[arg(long)]
    horizon_ms: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `wcet`, `scaled:<f>` or `stochastic:<f>`.
    #[arg(long)]
    exec_model: Option<String>,
    /// Run even if the offline analysis rejects the policy.
    #[arg(long)]
    force: bool,
    /// Label of the task set to run when the config holds several.
    #[arg(long)]
    taskset: Option<String>,
    /// Output directory; defaults to the config's `out_dir`, else `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    horizon_ms: Option<f64>,
    #[arg(long)]
    exec_model: Option<String>,
    /// Also simulate cells the offline analysis rejects.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Rta,
    Gate,
    Flex,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random task sets for the RTA suite.
    #[arg(long, default_value_t = 1000)]
    sets: usize,
    /// Scheduler snapshots for the gate suite.
    #[arg(long, default_value_t = 10_000)]
    snapshots: usize,
    /// Schedulable sets for the flex suite, each run with 3 seeds over 3 hyperperiods.
    #[arg(long, default_value_t = 100)]
    flex_sets: usize,
}

enum Failure {
    /// Unschedulable verdict, refused run, misses or oracle disagreement.
    Negative(String),
    Config(String),
}

impl From<rtmot::Error> for Failure {
    fn from(e: rtmot::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => {
            s.trim().parse().map(Some).map_err(|_| {
                Failure::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<ConfigFile, Failure> {
    Ok(ConfigFile::load(path)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    let mut w = BufWriter::new(
        File::create(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
    );
    serde_json::to_writer_pretty(&mut w, value).map_err(rtmot::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))
}

fn analyze_set(ts: &TaskSet, policy: Policy) -> (bool, Value) {
    let res = rta(ts, policy.analysis_pair());
    let tasks: Vec<Value> = res
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            json!({
                "id": t.id,
                "period_us": t.period.as_micros(),
                "wcet_us": ts.wcet(i, policy.analysis_pair()).as_micros(),
                "R_i_us": t.response.as_micros(),
                "schedulable": t.schedulable,
            })
        })
        .collect();
    let report = json!({
        "policy": policy.to_string(),
        "analysis_pair": res.pair.as_str(),
        "schedulable": res.schedulable,
        "tasks": tasks,
    });
    (res.schedulable, report)
}

fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    let file = load_config(&args.config)?;
    let policies = if !args.policy.is_empty() {
        args.policy.clone()
    } else {
        file.policies.clone().unwrap_or_else(|| vec![Policy::Min])
    };
    let cfg = ExperimentConfig::resolve(&file)?;
    let mut all_ok = true;
    let mut sets = Vec::new();
    for (label, ts) in &cfg.tasksets {
        let mut reports = Vec::new();
        for &p in &policies {
            let (ok, report) = analyze_set(ts, p);
            all_ok &= ok;
            reports.push(report);
        }
        sets.push(json!({ "taskset": label, "policies": reports }));
    }
    let report = json!({ "schedulable": all_ok, "tasksets": sets });
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &report).map_err(rtmot::Error::from)?;
            writeln!(out)?;
        }
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Negative(
            "unschedulable under at least one policy".into(),
        ))
    }
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let mut file = load_config(&args.config)?;
    if let Some(h) = args.horizon_ms {
        file.horizon_ms = Some(h);
    }
    if let Some(m) = &args.exec_model {
        file.exec_model = Some(m.clone());
    }
    let cfg = ExperimentConfig::resolve(&file)?;
    let (label, ts) = match &args.taskset {
        Some(l) => cfg
            .tasksets
            .iter()
            .find(|(x, _)| x == l)
            .ok_or_else(|| Failure::Config(format!("no task set labelled {l:?}")))?,
        None if cfg.tasksets.len() == 1 => &cfg.tasksets[0],
        None => {
            let labels: Vec<&str> = cfg.tasksets.iter().map(|(l, _)| l.as_str()).collect();
            return Err(Failure::Config(format!(
                "config holds {} task sets; pick one with --taskset ({})",
                labels.len(),
                labels.join(", ")
            )));
        }
    };
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(cfg.seeds.first().copied().unwrap_or(1)),
    };
    let offline = rta(ts, args.policy.analysis_pair()).schedulable;
    if !offline && !args.force {
        return Err(Failure::Negative(format!(
            "{label} is not schedulable under {} by the offline analysis; use --force to run anyway",
            args.policy
        )));
    }
    let out_dir = args
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    prepare_dir(&out_dir)?;

    let scenario = scenario_for(&cfg.scenario, seed, ts, cfg.horizon)?;
    let scenario_json = scenario.to_json()?;
    let model = ExecutionTimeModel::parse(&cfg.exec_model, seed)?;
    let out = run(ts, args.policy, cfg.horizon, model, scenario)?;
    let metrics = run_metrics(ts, args.policy, seed, &out);

    write_trace_csv(&out.trace, create(&out_dir.join("trace.csv"))?)?;
    write_confidence_csv(
        ts,
        out.world.samples(),
        create(&out_dir.join("confidence.csv"))?,
    )?;
    write_json(&out_dir.join("metrics.json"), &metrics)?;
    fs::write(out_dir.join("scenario.json"), scenario_json)?;

    log::info!(
        "{label} {}: {} jobs, {} misses, mean confidence {:.4}",
        args.policy,
        metrics.jobs,
        metrics.miss_count,
        metrics.mean_confidence
    );
    println!(
        "{} jobs, {} misses, mean confidence {:.4}; outputs in {}",
        metrics.jobs,
        metrics.miss_count,
        metrics.mean_confidence,
        out_dir.display()
    );
    if metrics.miss_count > 0 {
        return Err(Failure::Negative(format!(
            "{} deadline misses",
            metrics.miss_count
        )));
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let mut file = load_config(&args.config)?;
    if let Some(h) = args.horizon_ms {
        file.horizon_ms = Some(h);
    }
    if let Some(m) = &args.exec_model {
        file.exec_model = Some(m.clone());
    }
    if let Some(s) = env_seed()? {
        file.seeds = Some(vec![s]);
    }
    let cfg = ExperimentConfig::resolve(&file)?;
    if cfg.tasksets.is_empty() || cfg.policies.is_empty() || cfg.seeds.is_empty() {
        log::warn!("empty sweep grid; nothing to do");
        return Ok(());
    }
    let out_dir = args
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    prepare_dir(&out_dir)?;
    let report = sweep(&cfg, args.force)?;
    write_sweep_csv(&report, create(&out_dir.join("sweep.csv"))?)?;
    write_json(&out_dir.join("sweep.json"), &report)?;
    for c in &report.cells {
        let conf = c
            .mean_confidence
            .map_or("-".to_string(), |m| format!("{m:.4}"));
        let h = c.pair_histogram;
        println!(
            "{:<12} {:<10} {:<13} conf {:<6} LL {} LH {} HL {} HH {} misses {}",
            c.taskset,
            c.policy.to_string(),
            if c.schedulable {
                "schedulable"
            } else {
                "unschedulable"
            },
            conf,
            h.LL,
            h.LH,
            h.HL,
            h.HH,
            c.misses
        );
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let seed = env_seed()?.unwrap_or(args.seed);
    let want = |s: Suite| args.suite == Suite::All || args.suite == s;
    let mut summary = serde_json::Map::new();
    let mut ok = true;
    if want(Suite::Rta) {
        let r = verify_rta(seed, args.sets, &TaskGenParams::default())?;
        println!(
            "rta: {} sets, {} schedulable, {} simulations, {} disagreements",
            r.sets,
            r.schedulable_sets,
            r.simulations,
            r.disagreements.len()
        );
        ok &= r.passed();
        summary.insert(
            "rta".into(),
            json!({
                "sets": r.sets, "schedulable_sets": r.schedulable_sets,
                "simulations": r.simulations, "disagreements": r.disagreements.len(),
            }),
        );
    }
    if want(Suite::Gate) {
        let r = verify_gate(seed, args.snapshots, &gate_params())?;
        println!(
            "gate: {} snapshots from {} sets, {} grants, {} conservative rejections, {} violations",
            r.snapshots,
            r.sets,
            r.grants,
            r.conservative_rejections,
            r.violations.len()
        );
        ok &= r.passed();
        summary.insert(
            "gate".into(),
            json!({
                "sets": r.sets, "snapshots": r.snapshots, "grants": r.grants,
                "conservative_rejections": r.conservative_rejections,
                "violations": r.violations.len(),
            }),
        );
    }
    if want(Suite::Flex) && args.flex_sets > 0 {
        let r = verify_flex(
            seed,
            args.flex_sets,
            3,
            3,
            &TaskGenParams::default(),
            ExecutionTimeModel::WcetExact,
        )?;
        println!(
            "flex: {} runs, {} jobs, {} upgrades, {} inversions, {} failures",
            r.runs,
            r.jobs,
            r.upgrades,
            r.inversions,
            r.failures.len()
        );
        ok &= r.passed();
        summary.insert(
            "flex".into(),
            json!({
                "runs": r.runs, "jobs": r.jobs, "upgrades": r.upgrades,
                "inversions": r.inversions, "failures": r.failures.len(),
            }),
        );
    }
    summary.insert("seed".into(), json!(seed));
    summary.insert("passed".into(), json!(ok));
    println!("{}", Value::Object(summary));
    if ok {
        Ok(())
    } else {
        Err(Failure::Negative("verification failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Negative(m)) => {
            eprintln!("rtmot: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("rtmot: error: {m}");
            ExitCode::from(2)
        }
    }
}
