use panelhte::{generate, ScenarioConfig, TauKind};

#[test]
fn same_seed_same_panel() {
    let cfg = ScenarioConfig::preset("paper-b-ar1").unwrap();
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
}

#[test]
fn different_seeds_differ() {
    let a = generate(&ScenarioConfig {
        seed: 1,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let b = generate(&ScenarioConfig {
        seed: 2,
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert_ne!(a.y0, b.y0);
}

#[test]
fn effect_shape_does_not_shift_other_draws() {
    let base = ScenarioConfig::default();
    let lin = generate(&ScenarioConfig {
        tau_kind: TauKind::Linear,
        ..base.clone()
    })
    .unwrap();
    let cos = generate(&ScenarioConfig {
        tau_kind: TauKind::Cosine,
        ..base
    })
    .unwrap();
    assert_eq!(lin.y0, cos.y0);
    assert_eq!(lin.dataset.features, cos.dataset.features);
    assert_eq!(lin.dataset.treated_mask, cos.dataset.treated_mask);
    assert_eq!(lin.factors, cos.factors);
}

#[test]
fn no_anticipation() {
    let sim = generate(&ScenarioConfig::preset("paper-a").unwrap()).unwrap();
    let ds = &sim.dataset;
    for i in 0..ds.n_units() {
        for s in 0..ds.n_periods() {
            let expected = if ds.is_treated_at(i, s) {
                sim.y1[(i, s)]
            } else {
                sim.y0[(i, s)]
            };
            assert_eq!(ds.outcomes[(i, s)], expected);
        }
    }
    for i in 0..ds.n_units() {
        assert!((sim.y1[(i, ds.t0)] - sim.y0[(i, ds.t0)] - sim.true_tau[i]).abs() < 1e-12);
    }
}

#[test]
fn null_effect_leaves_potential_outcomes_equal() {
    let sim = generate(&ScenarioConfig::preset("paper-c").unwrap()).unwrap();
    assert_eq!(sim.y0, sim.y1);
    assert!(sim.true_tau.iter().all(|&t| t == 0.0));
}

#[test]
fn loading_moments() {
    let cfg = ScenarioConfig {
        n_units: 10_000,
        t0: 1,
        t1: 1,
        loading_mean: 1.0,
        loading_sd: 1.0,
        ..ScenarioConfig::default()
    };
    let sim = generate(&cfg).unwrap();
    let n = sim.loadings.len() as f64;
    let mean = sim.loadings.iter().sum::<f64>() / n;
    let var = sim.loadings.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // four standard errors
    assert!((mean - 1.0).abs() < 4.0 / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "var {var}");
}

#[test]
fn treated_units_come_first() {
    let sim = generate(&ScenarioConfig::default()).unwrap();
    let m = sim.dataset.n_treated();
    assert!(sim.dataset.treated_mask[..m].iter().all(|&t| t));
    assert!(sim.dataset.treated_mask[m..].iter().all(|&t| !t));
}
