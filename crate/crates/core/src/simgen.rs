//! Simulated panels from a latent one-factor model with known effects.
//!
//! ```text
//! f₁ = 1,  fₜ = ρ·fₜ₋₁ + ηₜ,        ηₜ ~ N(0, σ_f²)
//! bᵢ ~ N(μ_b, σ_b²),  Xᵢ ~ N(0, I_d)
//! Yᵢₜ(0) = bᵢ·fₜ + εᵢₜ
//! Yᵢₜ(1) = Yᵢₜ(0) + τ(Xᵢ)
//! Dᵢ ~ Bernoulli(expit(Xᵢᵀβ)),  β ~ N(1_d, I_d)
//! ```
//!
//! `εᵢₜ` is either i.i.d. Gaussian or a per-unit AR(1) process.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError};
use crate::regress::expit;

const MAX_ASSIGNMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    /// `0.6·x₁ + 0.4·x₂`
    Linear,
    /// `0.6·cos x₁ + 0.4·cos x₂`
    Cosine,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ErrorKind {
    Iid,
    /// `ε̃ₜ = φ·ε̃ₜ₋₁ + zₜ`, `zₜ ~ N(0, innovation_sd²)`, started at zero.
    Ar1 {
        phi: f64,
        innovation_sd: f64,
    },
}

impl ErrorKind {
    pub fn ar1_default() -> Self {
        ErrorKind::Ar1 {
            phi: 0.2,
            innovation_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// One coefficient vector per generated panel.
    #[default]
    SharedPerReplication,
    /// A fresh coefficient vector for every unit.
    PerUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub t0: usize,
    pub t1: usize,
    pub n_units: usize,
    pub factor_rho: f64,
    pub factor_noise_sd: f64,
    pub outcome_noise_sd: f64,
    pub loading_mean: f64,
    pub loading_sd: f64,
    pub d: usize,
    pub tau_kind: TauKind,
    pub error_kind: ErrorKind,
    pub propensity_beta_mode: BetaMode,
    /// Extra per-cell noise on the treated potential outcome.
    pub ite_noise_sd: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "custom".to_string(),
            t0: 10,
            t1: 10,
            n_units: 50,
            factor_rho: 0.95,
            factor_noise_sd: 0.5,
            outcome_noise_sd: 0.1,
            loading_mean: 1.0,
            loading_sd: 1.0,
            d: 2,
            tau_kind: TauKind::Linear,
            error_kind: ErrorKind::Iid,
            propensity_beta_mode: BetaMode::SharedPerReplication,
            ite_noise_sd: 0.0,
            seed: 0,
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "paper-a",
    "paper-b",
    "paper-c",
    "paper-a-ar1",
    "paper-b-ar1",
    "paper-c-ar1",
];

impl ScenarioConfig {
    /// Named presets: `paper-a` (linear), `paper-b` (cosine), `paper-c`
    /// (null), each optionally suffixed `-ar1` for autoregressive errors.
    pub fn preset(name: &str) -> Option<Self> {
        let (base, ar1) = match name.strip_suffix("-ar1") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let tau_kind = match base {
            "paper-a" => TauKind::Linear,
            "paper-b" => TauKind::Cosine,
            "paper-c" => TauKind::Null,
            _ => return None,
        };
        Some(ScenarioConfig {
            name: name.to_string(),
            tau_kind,
            error_kind: if ar1 {
                ErrorKind::ar1_default()
            } else {
                ErrorKind::Iid
            },
            ..ScenarioConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.t0 < 1 || self.t1 < 1 {
            return bad(format!(
                "t0 and t1 must be ≥ 1 (got {} and {})",
                self.t0, self.t1
            ));
        }
        if self.n_units < 2 {
            return bad(format!("n_units must be ≥ 2, got {}", self.n_units));
        }
        if self.d == 0 {
            return bad("d must be ≥ 1".to_string());
        }
        if self.tau_kind != TauKind::Null && self.d < 2 {
            return bad("linear and cosine effects use two features; set d ≥ 2".to_string());
        }
        let mut sds = vec![
            ("factor_noise_sd", self.factor_noise_sd),
            ("outcome_noise_sd", self.outcome_noise_sd),
            ("loading_sd", self.loading_sd),
            ("ite_noise_sd", self.ite_noise_sd),
        ];
        if let ErrorKind::Ar1 { phi, innovation_sd } = self.error_kind {
            if !phi.is_finite() || phi.abs() >= 1.0 {
                return bad(format!(
                    "AR(1) coefficient must satisfy |phi| < 1, got {phi}"
                ));
            }
            sds.push(("innovation_sd", innovation_sd));
        }
        for (field, v) in sds {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!(
                    "{field} must be a finite non-negative number, got {v}"
                ));
            }
        }
        if !(self.factor_rho.is_finite() && self.factor_rho.abs() <= 1.0) {
            return bad(format!("|factor_rho| must be ≤ 1, got {}", self.factor_rho));
        }
        if !self.loading_mean.is_finite() {
            return bad("loading_mean must be finite".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("feature vector has length {got}, scenario expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("treatment assignment had a single class after {0} attempts")]
    DegenerateAssignment(usize),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Closed-form effect at `x`.
pub fn true_tau(config: &ScenarioConfig, x: &[f64]) -> Result<f64, SimError> {
    if x.len() != config.d {
        return Err(SimError::DimensionMismatch {
            expected: config.d,
            got: x.len(),
        });
    }
    Ok(tau_at(config.tau_kind, x))
}

fn tau_at(kind: TauKind, x: &[f64]) -> f64 {
    match kind {
        TauKind::Linear => 0.6 * x[0] + 0.4 * x[1],
        TauKind::Cosine => 0.6 * x[0].cos() + 0.4 * x[1].cos(),
        TauKind::Null => 0.0,
    }
}

/// A generated panel with its potential outcomes and latent draws.
///
/// Rows of every matrix follow the dataset's unit order (treated first).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    pub true_tau: Vec<f64>,
    pub y0: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub factors: Vec<f64>,
    pub loadings: Vec<f64>,
    /// One row per coefficient draw: a single row when shared, `N` rows per unit.
    pub beta: DMatrix<f64>,
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

/// Draws one panel; identical configs give bitwise identical panels.
pub fn generate(config: &ScenarioConfig) -> Result<SimulatedPanel, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, d) = (config.n_units, config.d);
    let t = config.t0 + config.t1;

    let factor_noise = normal(config.factor_noise_sd);
    let mut factors = Vec::with_capacity(t);
    factors.push(1.0);
    for s in 1..t {
        let prev = factors[s - 1];
        factors.push(config.factor_rho * prev + factor_noise.sample(&mut rng));
    }
    let loading =
        Normal::new(config.loading_mean, config.loading_sd).expect("validated loading sd");
    let loadings: Vec<f64> = (0..n).map(|_| loading.sample(&mut rng)).collect();
    let features = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));

    let beta_rows = match config.propensity_beta_mode {
        BetaMode::SharedPerReplication => 1,
        BetaMode::PerUnit => n,
    };
    let beta = DMatrix::from_fn(beta_rows, d, |_, _| {
        1.0 + rng.sample::<f64, _>(StandardNormal)
    });
    let propensity: Vec<f64> = (0..n)
        .map(|i| {
            let b = beta.row(if beta_rows == 1 { 0 } else { i });
            expit((0..d).map(|k| features[(i, k)] * b[k]).sum())
        })
        .collect();
    let mut mask = None;
    for _ in 0..MAX_ASSIGNMENT_ATTEMPTS {
        let draw: Vec<bool> = propensity
            .iter()
            .map(|&p| rng.random::<f64>() < p)
            .collect();
        let treated = draw.iter().filter(|&&b| b).count();
        if treated > 0 && treated < n {
            mask = Some(draw);
            break;
        }
    }
    let mask = mask.ok_or(SimError::DegenerateAssignment(MAX_ASSIGNMENT_ATTEMPTS))?;

    let mut noise = DMatrix::zeros(n, t);
    match config.error_kind {
        ErrorKind::Iid => {
            let dist = normal(config.outcome_noise_sd);
            for i in 0..n {
                for s in 0..t {
                    noise[(i, s)] = dist.sample(&mut rng);
                }
            }
        }
        ErrorKind::Ar1 { phi, innovation_sd } => {
            let dist = normal(innovation_sd);
            for i in 0..n {
                let mut prev = 0.0;
                for s in 0..t {
                    prev = phi * prev + dist.sample(&mut rng);
                    noise[(i, s)] = prev;
                }
            }
        }
    }
    let y0 = DMatrix::from_fn(n, t, |i, s| loadings[i] * factors[s] + noise[(i, s)]);
    let tau: Vec<f64> = (0..n)
        .map(|i| {
            tau_at(
                config.tau_kind,
                &features.row(i).iter().copied().collect::<Vec<_>>(),
            )
        })
        .collect();
    let mut y1 = DMatrix::from_fn(n, t, |i, s| y0[(i, s)] + tau[i]);
    if config.ite_noise_sd > 0.0 {
        let dist = normal(config.ite_noise_sd);
        for i in 0..n {
            for s in 0..t {
                y1[(i, s)] += dist.sample(&mut rng);
            }
        }
    }
    let observed = DMatrix::from_fn(n, t, |i, s| {
        if mask[i] && s >= config.t0 {
            y1[(i, s)]
        } else {
            y0[(i, s)]
        }
    });

    let dataset = PanelDataset::new(observed, features, mask, config.t0)?;
    let order = dataset.original_index.clone();
    let permute = |m: &DMatrix<f64>| DMatrix::from_fn(n, t, |r, s| m[(order[r], s)]);
    Ok(SimulatedPanel {
        true_tau: order.iter().map(|&i| tau[i]).collect(),
        y0: permute(&y0),
        y1: permute(&y1),
        loadings: order.iter().map(|&i| loadings[i]).collect(),
        beta: if beta_rows == 1 {
            beta
        } else {
            DMatrix::from_fn(n, d, |r, k| beta[(order[r], k)])
        },
        factors,
        dataset,
    })
}
