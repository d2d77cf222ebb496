//! Fixtures shared by the criterion benches.

use nalgebra::DMatrix;
use panelhte::{generate, PanelDataset, ScenarioConfig};

/// A deterministic `t0 × donors` weight-fitting problem.
pub fn donor_problem(t0: usize, donors: usize) -> (Vec<f64>, DMatrix<f64>) {
    // small LCG keeps the fixture free of RNG dependencies
    let mut state = 0x2545_f491_4f6c_dd1d_u64 ^ (t0 * 131 + donors) as u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let a = DMatrix::from_fn(t0, donors, |_, _| next());
    let y = (0..t0).map(|_| next()).collect();
    (y, a)
}

/// A simulated panel from a named preset with `n_units` units.
pub fn preset_panel(name: &str, n_units: usize) -> PanelDataset {
    let config = ScenarioConfig {
        n_units,
        ..ScenarioConfig::preset(name).expect("known preset")
    };
    generate(&config).expect("preset generates").dataset
}
