//! `--set key=value` overrides for scenario and learner settings.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use panelhte::regress::DEFAULT_BANDWIDTH_GRID;
use panelhte::{Bandwidth, ConstraintKind, LearnerConfig, Pooling, RegressorSpec, ScenarioConfig};

pub const KEYS: &str = "solver.tol, solver.max_iters, solver.constraint, solver.radius, solver.intercept, \
solver.lambda, solver.lambda_grid, regressor.kind, regressor.alpha, regressor.bandwidth, regressor.k, \
propensity.clip, learner.pooling, dr.crossfit, dr.pooled_time, scenario.<field>";

/// Parses `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("`{key}` expects a number, got `{value}`"))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => bail!("`{key}` expects true or false, got `{value}`"),
    }
}

/// Applies scenario overrides by editing the JSON form of the config, so
/// every field is reachable as `scenario.<field>`.
pub fn apply_scenario(scenario: &mut ScenarioConfig, sets: &[(String, String)]) -> Result<()> {
    let mut doc = serde_json::to_value(&*scenario)?;
    let mut touched = false;
    for (key, value) in sets {
        let Some(field) = key.strip_prefix("scenario.") else {
            continue;
        };
        let obj = doc
            .as_object_mut()
            .expect("scenario serializes to an object");
        if !obj.contains_key(field) {
            bail!("unknown scenario field `{field}`");
        }
        // bare words such as `cosine` are taken as strings
        let parsed = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.clone()));
        obj.insert(field.to_string(), parsed);
        touched = true;
    }
    if touched {
        *scenario = serde_json::from_value(doc).context("invalid scenario override")?;
    }
    Ok(())
}

pub fn apply_learner(cfg: &mut LearnerConfig, sets: &[(String, String)]) -> Result<()> {
    let mut regressor: BTreeMap<&str, &str> = BTreeMap::new();
    for (key, value) in sets {
        let (key, value) = (key.as_str(), value.as_str());
        match key {
            "solver.tol" => cfg.sc.opts.tol = number(key, value)?,
            "solver.max_iters" => cfg.sc.opts.max_iters = number(key, value)?,
            "solver.intercept" => cfg.sc.constraint.intercept = boolean(key, value)?,
            "solver.constraint" => {
                cfg.sc.constraint.kind = match value {
                    "l1_ball" => ConstraintKind::L1Ball { radius: 1.0 },
                    "simplex" => ConstraintKind::Simplex,
                    "penalized_simplex" => ConstraintKind::PenalizedSimplex {
                        lambda: 0.0,
                        distances: Vec::new(),
                    },
                    _ => bail!("`solver.constraint` must be l1_ball, simplex or penalized_simplex, got `{value}`"),
                }
            }
            "solver.radius" | "solver.lambda" | "solver.lambda_grid" => {}
            "propensity.clip" => cfg.propensity_clip = number(key, value)?,
            "learner.pooling" => {
                cfg.pooling = match value {
                    "pooled" => Pooling::Pooled,
                    "unit_mean" => Pooling::UnitMean,
                    _ => bail!("`learner.pooling` must be pooled or unit_mean, got `{value}`"),
                }
            }
            "dr.crossfit" => cfg.dr.crossfit = boolean(key, value)?,
            "dr.pooled_time" => cfg.dr.pooled_time = boolean(key, value)?,
            k if k.starts_with("regressor.") => {
                regressor.insert(k, value);
            }
            k if k.starts_with("scenario.") => {}
            _ => bail!("unknown setting `{key}` (known: {KEYS})"),
        }
    }
    // constraint parameters apply after the constraint kind, whatever the order
    for (key, value) in sets {
        let (key, value) = (key.as_str(), value.as_str());
        match (key, &mut cfg.sc.constraint.kind) {
            ("solver.radius", ConstraintKind::L1Ball { radius }) => *radius = number(key, value)?,
            ("solver.lambda", ConstraintKind::PenalizedSimplex { lambda, .. }) => {
                *lambda = number(key, value)?
            }
            ("solver.lambda_grid", ConstraintKind::PenalizedSimplex { .. }) => {
                let grid = value
                    .split(',')
                    .map(|v| number(key, v.trim()))
                    .collect::<Result<Vec<f64>>>()?;
                cfg.sc.penalty_grid = Some(grid);
            }
            ("solver.radius", _) => bail!("`solver.radius` needs solver.constraint=l1_ball"),
            ("solver.lambda" | "solver.lambda_grid", _) => {
                bail!("`{key}` needs solver.constraint=penalized_simplex")
            }
            _ => {}
        }
    }
    if !regressor.is_empty() {
        cfg.regressor = build_regressor(&cfg.regressor, &regressor)?;
    }
    cfg.regressor.check()?;
    Ok(())
}

fn build_regressor(current: &RegressorSpec, keys: &BTreeMap<&str, &str>) -> Result<RegressorSpec> {
    let kind = match keys.get("regressor.kind") {
        Some(k) => *k,
        None => match current {
            RegressorSpec::Ols => "ols",
            RegressorSpec::Ridge { .. } => "ridge",
            RegressorSpec::KernelSmoother { .. } => "kernel",
            RegressorSpec::KNearest { .. } => "knn",
        },
    };
    let used = |k: &str| keys.contains_key(k);
    let spec = match kind {
        "ols" => RegressorSpec::Ols,
        "ridge" => RegressorSpec::Ridge {
            alpha: match keys.get("regressor.alpha") {
                Some(v) => number("regressor.alpha", v)?,
                None => match current {
                    RegressorSpec::Ridge { alpha } => *alpha,
                    _ => 1.0,
                },
            },
        },
        "kernel" => RegressorSpec::KernelSmoother {
            bandwidth: match keys.get("regressor.bandwidth") {
                Some(&"loo") => Bandwidth::LeaveOneOut {
                    grid: DEFAULT_BANDWIDTH_GRID.to_vec(),
                },
                Some(v) => Bandwidth::Fixed(number("regressor.bandwidth", v)?),
                None => match current {
                    RegressorSpec::KernelSmoother { bandwidth } => bandwidth.clone(),
                    _ => Bandwidth::loo_default(),
                },
            },
        },
        "knn" => RegressorSpec::KNearest {
            k: match keys.get("regressor.k") {
                Some(v) => number("regressor.k", v)?,
                None => match current {
                    RegressorSpec::KNearest { k } => *k,
                    _ => 5,
                },
            },
        },
        other => bail!("`regressor.kind` must be ols, ridge, kernel or knn, got `{other}`"),
    };
    for (key, needs) in [
        ("regressor.alpha", "ridge"),
        ("regressor.bandwidth", "kernel"),
        ("regressor.k", "knn"),
    ] {
        if used(key) && kind != needs {
            bail!("`{key}` applies to regressor.kind={needs}, not {kind}");
        }
    }
    if let Some(unknown) = keys.keys().find(|k| {
        !matches!(
            **k,
            "regressor.kind" | "regressor.alpha" | "regressor.bandwidth" | "regressor.k"
        )
    }) {
        bail!("unknown setting `{unknown}` (known: {KEYS})");
    }
    Ok(spec)
}
