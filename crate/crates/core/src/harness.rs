//! Monte Carlo experiments: replicate a scenario, fit every method, and score
//! the estimated effect function against the truth.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{estimate, LearnerConfig, Method};
use crate::regress::{Bandwidth, RegressorSpec};
use crate::simgen::{generate, true_tau, ScenarioConfig, TauKind};

pub const RESULTS_HEADER: [&str; 8] = [
    "scenario",
    "method",
    "replication",
    "seed",
    "mse",
    "sum_se",
    "wall_time_ms",
    "status",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "scenario",
    "method",
    "n_reps",
    "mean_mse",
    "median_mse",
    "q25",
    "q75",
    "failure_count",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("results file row {row}: {message}")]
    Malformed { row: usize, message: String },
}

/// Where the estimated effect function is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EvalOn {
    /// Every unit's features.
    #[default]
    All,
    /// Treated units only.
    Treated,
    /// `k` fresh feature draws from the generating distribution.
    Fresh(usize),
}

impl fmt::Display for EvalOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalOn::All => f.write_str("all"),
            EvalOn::Treated => f.write_str("treated"),
            EvalOn::Fresh(k) => write!(f, "fresh:{k}"),
        }
    }
}

impl FromStr for EvalOn {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(EvalOn::All),
            "treated" => Ok(EvalOn::Treated),
            _ => s
                .strip_prefix("fresh:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(EvalOn::Fresh)
                .ok_or_else(|| {
                    HarnessError::Config(format!(
                        "eval-on must be all, treated or fresh:<k ≥ 1>, got `{s}`"
                    ))
                }),
        }
    }
}

impl From<EvalOn> for String {
    fn from(e: EvalOn) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for EvalOn {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Ok => f.write_str("ok"),
            RunStatus::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ok" {
            Ok(RunStatus::Ok)
        } else if let Some(reason) = s.strip_prefix("failed: ") {
            Ok(RunStatus::Failed(reason.to_string()))
        } else if s == "failed" {
            Ok(RunStatus::Failed(String::new()))
        } else {
            Err(format!("unrecognised status `{s}`"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario_name: String,
    pub method: String,
    pub replication: usize,
    pub seed: u64,
    /// `sum_se / evaluation points`; `None` for failed runs.
    pub mse: Option<f64>,
    pub sum_se: Option<f64>,
    pub wall_time_ms: u64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub n_reps: usize,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub failure_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub learner: LearnerConfig,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub parallelism: usize,
    pub eval_on: EvalOn,
    /// Store measured fit times; off by default so reruns are byte-identical.
    pub record_timing: bool,
}

impl Experiment {
    /// An experiment with the default learner settings for the scenario.
    pub fn new(scenario: ScenarioConfig, methods: Vec<Method>, reps: usize) -> Self {
        Experiment {
            learner: default_learner(&scenario),
            scenario,
            methods,
            reps,
            parallelism: 1,
            eval_on: EvalOn::All,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config(
                "at least one method is required".into(),
            ));
        }
        if self.reps == 0 {
            return Err(HarnessError::Config("reps must be ≥ 1".into()));
        }
        if self.parallelism == 0 {
            return Err(HarnessError::Config("parallelism must be ≥ 1".into()));
        }
        self.scenario
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.learner
            .regressor
            .check()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let clip = self.learner.propensity_clip;
        if !(0.0..0.5).contains(&clip) {
            return Err(HarnessError::Config(format!(
                "propensity clip must lie in [0, 0.5), got {clip}"
            )));
        }
        Ok(())
    }
}

/// OLS for the linear and null effects; a leave-one-out tuned kernel
/// smoother for the nonlinear one.
pub fn default_learner(scenario: &ScenarioConfig) -> LearnerConfig {
    let regressor = match scenario.tau_kind {
        TauKind::Cosine => RegressorSpec::KernelSmoother {
            bandwidth: Bandwidth::loo_default(),
        },
        TauKind::Linear | TauKind::Null => RegressorSpec::Ols,
    };
    LearnerConfig::with_regressor(regressor)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `r`: independent of execution order.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    base ^ splitmix64(r as u64)
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Single-line failure reason.
fn one_line(msg: impl fmt::Display) -> String {
    msg.to_string()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn replicate(exp: &Experiment, r: usize) -> Vec<RunResult> {
    let seed = replication_seed(exp.scenario.seed, r);
    let record =
        |method: Method, status: RunStatus, sum_se: Option<f64>, n_eval: usize, ms: u64| {
            RunResult {
                scenario_name: exp.scenario.name.clone(),
                method: method.to_string(),
                replication: r,
                seed,
                mse: sum_se.map(|s| s / n_eval as f64),
                sum_se,
                wall_time_ms: if exp.record_timing { ms } else { 0 },
                status,
            }
        };
    let scenario = ScenarioConfig {
        seed,
        ..exp.scenario.clone()
    };
    let sim = match generate(&scenario) {
        Ok(sim) => sim,
        Err(e) => {
            let reason = one_line(format!("data generation: {e}"));
            return exp
                .methods
                .iter()
                .map(|&m| record(m, RunStatus::Failed(reason.clone()), None, 0, 0))
                .collect();
        }
    };

    let (eval_x, eval_tau): (DMatrix<f64>, Vec<f64>) = match exp.eval_on {
        EvalOn::All => (sim.dataset.features.clone(), sim.true_tau.clone()),
        EvalOn::Treated => {
            let m = sim.dataset.n_treated();
            (
                sim.dataset.features.rows(0, m).into_owned(),
                sim.true_tau[..m].to_vec(),
            )
        }
        EvalOn::Fresh(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
            let x = DMatrix::from_fn(k, scenario.d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let tau = (0..k)
                .map(|i| {
                    true_tau(&scenario, &x.row(i).iter().copied().collect::<Vec<_>>())
                        .unwrap_or(f64::NAN)
                })
                .collect();
            (x, tau)
        }
    };

    let learner = LearnerConfig {
        seed,
        ..exp.learner.clone()
    };
    exp.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(|| {
                estimate(method, &sim.dataset, &learner).map(|est| est.evaluate_rows(&eval_x))
            }));
            let ms = start.elapsed().as_millis() as u64;
            let n_eval = eval_tau.len();
            match outcome {
                Ok(Ok(pred)) => {
                    let sum_se: f64 = pred
                        .iter()
                        .zip(&eval_tau)
                        .map(|(p, t)| (p - t).powi(2))
                        .sum();
                    if sum_se.is_finite() {
                        record(method, RunStatus::Ok, Some(sum_se), n_eval, ms)
                    } else {
                        record(
                            method,
                            RunStatus::Failed("non-finite prediction".into()),
                            None,
                            n_eval,
                            ms,
                        )
                    }
                }
                Ok(Err(e)) => record(method, RunStatus::Failed(one_line(e)), None, n_eval, ms),
                Err(payload) => record(
                    method,
                    RunStatus::Failed(one_line(format!(
                        "panic: {}",
                        panic_message(payload.as_ref())
                    ))),
                    None,
                    n_eval,
                    ms,
                ),
            }
        })
        .collect()
}

/// Runs every replication on a pool of `parallelism` threads. Results are
/// ordered by replication, then by method, whatever the scheduling.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<RunResult>, HarnessError> {
    exp.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<RunResult>> = pool.install(|| {
        (0..exp.reps)
            .into_par_iter()
            .map(|r| replicate(exp, r))
            .collect()
    });
    Ok(per_rep.into_iter().flatten().collect())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Groups by `(scenario, method)` in order of first appearance.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), (Vec<f64>, usize)> = HashMap::new();
    for r in results {
        let key = (r.scenario_name.clone(), r.method.clone());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match (&r.status, r.mse) {
            (RunStatus::Ok, Some(mse)) => entry.0.push(mse),
            _ => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (mut mses, failures) = groups.remove(&key).unwrap_or_default();
            mses.sort_by(f64::total_cmp);
            let stats = (!mses.is_empty()).then(|| {
                (
                    mses.iter().sum::<f64>() / mses.len() as f64,
                    quantile(&mses, 0.5),
                    quantile(&mses, 0.25),
                    quantile(&mses, 0.75),
                )
            });
            SummaryRow {
                scenario: key.0,
                method: key.1,
                n_reps: mses.len() + failures,
                mean_mse: stats.map(|s| s.0),
                median_mse: stats.map(|s| s.1),
                q25: stats.map(|s| s.2),
                q75: stats.map(|s| s.3),
                failure_count: failures,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(results: &[RunResult], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.scenario_name.clone(),
            r.method.clone(),
            r.replication.to_string(),
            r.seed.to_string(),
            opt(r.mse),
            opt(r.sum_se),
            r.wall_time_ms.to_string(),
            r.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the JSON manifest written next to a results file.
pub fn manifest_path(results_path: &Path) -> PathBuf {
    let stem = results_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".to_string());
    results_path.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    created_unix_secs: u64,
    base_seed: u64,
    rows: usize,
    experiment: &'a Experiment,
}

/// Writes the results CSV and its sibling manifest.
pub fn write_results(
    results: &[RunResult],
    path: &Path,
    experiment: &Experiment,
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    write_results_csv(results, std::io::BufWriter::new(file))?;
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created_unix_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        base_seed: experiment.scenario.seed,
        rows: results.len(),
        experiment,
    };
    std::fs::write(
        manifest_path(path),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<RunResult>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(HarnessError::Malformed {
            row: 0,
            message: format!("expected header {}", RESULTS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let bad = |field: &str, v: &str| HarnessError::Malformed {
            row,
            message: format!("cannot parse {field} `{v}`"),
        };
        let float = |idx: usize, field: &str| -> Result<Option<f64>, HarnessError> {
            let v = &rec[idx];
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(field, v))
            }
        };
        out.push(RunResult {
            scenario_name: rec[0].to_string(),
            method: rec[1].to_string(),
            replication: rec[2].parse().map_err(|_| bad("replication", &rec[2]))?,
            seed: rec[3].parse().map_err(|_| bad("seed", &rec[3]))?,
            mse: float(4, "mse")?,
            sum_se: float(5, "sum_se")?,
            wall_time_ms: rec[6].parse().map_err(|_| bad("wall_time_ms", &rec[6]))?,
            status: rec[7]
                .parse()
                .map_err(|m: String| HarnessError::Malformed { row, message: m })?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record([
            s.scenario.clone(),
            s.method.clone(),
            s.n_reps.to_string(),
            opt(s.mean_mse),
            opt(s.median_mse),
            opt(s.q25),
            opt(s.q75),
            s.failure_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
