use nalgebra::DMatrix;
use panelhte::{estimate, generate, h1sl, LearnerConfig, Method, PanelDataset, ScenarioConfig};

fn sample() -> PanelDataset {
    generate(&ScenarioConfig::preset("paper-a").unwrap())
        .unwrap()
        .dataset
}

fn reorder(ds: &PanelDataset, units: &[usize], periods: &[usize]) -> PanelDataset {
    let y = DMatrix::from_fn(units.len(), periods.len(), |i, s| {
        ds.outcomes[(units[i], periods[s])]
    });
    let x = DMatrix::from_fn(units.len(), ds.n_features(), |i, k| {
        ds.features[(units[i], k)]
    });
    let mask = units.iter().map(|&u| ds.treated_mask[u]).collect();
    PanelDataset::new(y, x, mask, ds.t0).unwrap()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

#[test]
fn h1sl_ignores_control_order() {
    let ds = sample();
    let m = ds.n_treated();
    let mut units: Vec<usize> = (0..ds.n_units()).collect();
    units[m..].reverse();
    let periods: Vec<usize> = (0..ds.n_periods()).collect();
    let shuffled = reorder(&ds, &units, &periods);
    let cfg = LearnerConfig::default();
    let a = h1sl(&ds, &cfg).unwrap().evaluate_rows(&ds.features);
    let b = h1sl(&shuffled, &cfg).unwrap().evaluate_rows(&ds.features);
    assert!(max_gap(&a, &b) < 1e-6, "{}", max_gap(&a, &b));
}

#[test]
fn h1sl_ignores_post_period_order() {
    let ds = sample();
    let units: Vec<usize> = (0..ds.n_units()).collect();
    let mut periods: Vec<usize> = (0..ds.n_periods()).collect();
    periods[ds.t0..].reverse();
    let shuffled = reorder(&ds, &units, &periods);
    let cfg = LearnerConfig::default();
    let a = h1sl(&ds, &cfg).unwrap().evaluate_rows(&ds.features);
    let b = h1sl(&shuffled, &cfg).unwrap().evaluate_rows(&ds.features);
    assert!(max_gap(&a, &b) < 1e-10, "{}", max_gap(&a, &b));
}

#[test]
fn every_method_gives_finite_predictions() {
    let ds = sample();
    let cfg = LearnerConfig::default();
    for method in Method::ALL {
        let est = estimate(method, &ds, &cfg).unwrap();
        assert_eq!(est.method, method);
        assert!(
            est.evaluate_rows(&ds.features)
                .iter()
                .all(|p| p.is_finite()),
            "{method}"
        );
    }
}

#[test]
fn dr_is_reproducible_for_a_seed() {
    let ds = sample();
    let cfg = LearnerConfig {
        seed: 9,
        ..LearnerConfig::default()
    };
    let a = estimate(Method::DrH2sl, &ds, &cfg).unwrap();
    let b = estimate(Method::DrH2sl, &ds, &cfg).unwrap();
    assert_eq!(a.evaluate_rows(&ds.features), b.evaluate_rows(&ds.features));
}
