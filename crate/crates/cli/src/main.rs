mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use panelhte::harness::{read_results, write_results, write_summary_csv};
use panelhte::panel::load_csv;
use panelhte::{
    estimate, run_experiment, summarize, ColumnSpec, EvalOn, Experiment, HarnessError,
    LearnerConfig, Method, PanelError, ScenarioConfig,
};

/// Synthetic-control HTE learners: replicated benchmarks and estimation on user panels.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run replicated simulations and write per-run results.
    Run(RunArgs),
    /// Aggregate a results CSV by scenario and method.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one learner to a panel CSV and write τ̂ at every unit's features.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Preset name (paper-a, paper-b, paper-c, with optional -ar1) or a JSON scenario file.
    #[arg(long)]
    scenario: String,
    /// Comma-separated list out of h1sl,h2sl,dr,s,t,x,rlite,did.
    #[arg(long, default_value = "h1sl,h2sl,dr,s,t,x,rlite,did")]
    methods: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Base seed; overrides the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// all, treated or fresh:<k>.
    #[arg(long, default_value = "all")]
    eval_on: String,
    /// Record fit wall times (results are then no longer byte-reproducible).
    #[arg(long)]
    record_timing: bool,
    /// Setting override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_assignment)]
    sets: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Long-format CSV with unit_id, period, outcome, treated and feature columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "h1sl")]
    method: String,
    /// Feature columns; every other column when omitted.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Number of pre-periods; inferred from the treated flags when omitted.
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_assignment)]
    sets: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
}

enum Outcome {
    Done,
    AllFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::AllFailed) => {
            eprintln!("error: every replication failed");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for anything rooted in the filesystem, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || matches!(
                cause.downcast_ref::<HarnessError>(),
                Some(HarnessError::Io(_))
            )
            || matches!(cause.downcast_ref::<PanelError>(), Some(PanelError::Io(_)))
            || cause
                .downcast_ref::<csv::Error>()
                .is_some_and(|e| e.is_io_error())
    });
    if io {
        2
    } else {
        1
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Run(args) => run(args),
        Command::Summarize { input, out } => {
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let results = read_results(BufReader::new(file))?;
            let out_file =
                File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_summary_csv(&summarize(&results), BufWriter::new(out_file))?;
            Ok(Outcome::Done)
        }
        Command::Estimate(args) => estimate_cmd(args),
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig> {
    if let Some(preset) = ScenarioConfig::preset(arg) {
        return Ok(preset);
    }
    let path = Path::new(arg);
    if !path.exists() && !arg.ends_with(".json") {
        bail!(
            "`{arg}` is neither a preset ({}) nor a scenario file",
            panelhte::simgen::PRESET_NAMES.join(", ")
        );
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn run(args: RunArgs) -> Result<Outcome> {
    let methods = Method::parse_list(&args.methods)?;
    let eval_on: EvalOn = args.eval_on.parse()?;
    let mut scenario = load_scenario(&args.scenario)?;
    config::apply_scenario(&mut scenario, &args.sets)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let mut exp = Experiment::new(scenario, methods, args.reps);
    config::apply_learner(&mut exp.learner, &args.sets)?;
    exp.parallelism = args.parallelism;
    exp.eval_on = eval_on;
    exp.record_timing = args.record_timing;
    exp.validate()?;

    let results = run_experiment(&exp)?;
    write_results(&results, &args.out, &exp)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let failed = results.iter().filter(|r| !r.status.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", results.len());
    }
    let reps_ok = (0..exp.reps).any(|r| {
        results
            .iter()
            .any(|x| x.replication == r && x.status.is_ok())
    });
    Ok(if reps_ok {
        Outcome::Done
    } else {
        Outcome::AllFailed
    })
}

fn estimate_cmd(args: EstimateArgs) -> Result<Outcome> {
    let method: Method = args.method.parse()?;
    let mut cfg = LearnerConfig {
        seed: args.seed,
        ..LearnerConfig::default()
    };
    if let Some((key, _)) = args.sets.iter().find(|(k, _)| k.starts_with("scenario.")) {
        bail!("`{key}` has no meaning for estimate");
    }
    config::apply_learner(&mut cfg, &args.sets)?;
    let schema = ColumnSpec {
        features: args.features,
        t0: args.t0,
        ..ColumnSpec::default()
    };
    let data = load_csv(&args.data, &schema)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let est = estimate(method, &data, &cfg)?;

    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["unit_id".to_string()];
    header.extend(data.feature_names.iter().cloned());
    header.push("tau_hat".into());
    w.write_record(&header)?;
    for i in 0..data.n_units() {
        let x = data.feature_row(i);
        let mut row = vec![data.unit_ids[i].clone()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(est.evaluate(&x).to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(Outcome::Done)
}
