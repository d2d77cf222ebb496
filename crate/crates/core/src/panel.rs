//! Balanced panel data with a single adoption time.
//!
//! A [`PanelDataset`] stores an `N × T` outcome matrix, time-invariant unit
//! features, and which units are treated from period `t0 + 1` onward. Units
//! are kept in treated-first order; the original ids and input positions are
//! retained so results can be mapped back.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which block of the panel a unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitSide {
    Treated,
    Control,
}

impl UnitSide {
    pub fn other(self) -> Self {
        match self {
            UnitSide::Treated => UnitSide::Control,
            UnitSide::Control => UnitSide::Treated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    TooFewUnits(usize),
    TooFewPeriods(usize),
    NoFeatures,
    NoPrePeriod,
    NoPostPeriod,
    NoTreatedUnits,
    NoControlUnits,
    NonFiniteOutcome { unit: usize, period: usize },
    NonFiniteFeature { unit: usize, feature: usize },
    ShapeMismatch(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::TooFewUnits(n) => write!(f, "need at least 2 units, got {n}"),
            ValidationIssue::TooFewPeriods(t) => write!(f, "need at least 2 periods, got {t}"),
            ValidationIssue::NoFeatures => write!(f, "need at least one feature column"),
            ValidationIssue::NoPrePeriod => write!(f, "no pre-period (t0 must be at least 1)"),
            ValidationIssue::NoPostPeriod => write!(f, "no post-period (t0 must be below T)"),
            ValidationIssue::NoTreatedUnits => write!(f, "no treated units"),
            ValidationIssue::NoControlUnits => write!(f, "no control units"),
            ValidationIssue::NonFiniteOutcome { unit, period } => {
                write!(f, "non-finite outcome at unit {unit}, period {period}")
            }
            ValidationIssue::NonFiniteFeature { unit, feature } => {
                write!(f, "non-finite feature {feature} at unit {unit}")
            }
            ValidationIssue::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

/// Result of [`PanelDataset::validate`]: empty when the panel is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<(), PanelError> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(PanelError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "pass");
        }
        let msgs: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("invalid panel: {0}")]
    Invalid(ValidationReport),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: cannot read `{value}`")]
    Parse {
        row: u64,
        column: String,
        value: String,
    },
    #[error("unbalanced panel: unit `{unit}` has no observation for period {period}")]
    UnbalancedPanel { unit: String, period: i64 },
    #[error("duplicate cell for unit `{unit}`, period {period}")]
    DuplicateCell { unit: String, period: i64 },
    #[error("treatment before t0 for unit `{unit}`")]
    TreatmentBeforeT0 { unit: String },
    #[error("staggered adoption: treated flag of unit `{unit}` varies after t0")]
    StaggeredAdoption { unit: String },
    #[error("feature `{column}` varies over time for unit `{unit}`")]
    TimeVaryingFeature { unit: String, column: String },
    #[error("t0 = {t0} is out of range for {periods} periods")]
    T0OutOfRange { t0: usize, periods: usize },
}

/// Balanced panel: `outcomes` is units × periods, `features` is units × d.
///
/// Period columns are 0-based; the pre-period is columns `0..t0` and unit `i`
/// is under treatment at column `t` iff `treated_mask[i] && t >= t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub outcomes: DMatrix<f64>,
    pub features: DMatrix<f64>,
    pub treated_mask: Vec<bool>,
    pub t0: usize,
    pub unit_ids: Vec<String>,
    /// Position of each unit in the caller's original ordering.
    pub original_index: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl PanelDataset {
    /// Builds a validated panel, reordering units treated-first (stable).
    pub fn new(
        outcomes: DMatrix<f64>,
        features: DMatrix<f64>,
        treated_mask: Vec<bool>,
        t0: usize,
    ) -> Result<Self, PanelError> {
        let ids = (1..=outcomes.nrows()).map(|i| i.to_string()).collect();
        Self::with_unit_ids(outcomes, features, treated_mask, t0, ids)
    }

    pub fn with_unit_ids(
        outcomes: DMatrix<f64>,
        features: DMatrix<f64>,
        treated_mask: Vec<bool>,
        t0: usize,
        unit_ids: Vec<String>,
    ) -> Result<Self, PanelError> {
        let d = features.ncols();
        let raw = PanelDataset {
            outcomes,
            features,
            original_index: (0..treated_mask.len()).collect(),
            treated_mask,
            t0,
            unit_ids,
            feature_names: (1..=d).map(|k| format!("x{k}")).collect(),
        };
        raw.validate().into_result()?;
        Ok(raw.treated_first())
    }

    /// Checks every structural invariant without modifying the panel.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let n = self.outcomes.nrows();
        let t = self.outcomes.ncols();
        if self.features.nrows() != n {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "features have {} rows, outcomes {}",
                self.features.nrows(),
                n
            )));
        }
        if self.treated_mask.len() != n {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "treated mask has length {}, outcomes have {} rows",
                self.treated_mask.len(),
                n
            )));
        }
        if self.unit_ids.len() != n || self.original_index.len() != n {
            issues.push(ValidationIssue::ShapeMismatch(
                "unit id map does not match the number of units".into(),
            ));
        }
        if n < 2 {
            issues.push(ValidationIssue::TooFewUnits(n));
        }
        if t < 2 {
            issues.push(ValidationIssue::TooFewPeriods(t));
        }
        if self.features.ncols() < 1 {
            issues.push(ValidationIssue::NoFeatures);
        }
        if self.t0 < 1 {
            issues.push(ValidationIssue::NoPrePeriod);
        }
        if self.t0 >= t {
            issues.push(ValidationIssue::NoPostPeriod);
        }
        let m = self.treated_mask.iter().filter(|&&b| b).count();
        if m == 0 {
            issues.push(ValidationIssue::NoTreatedUnits);
        }
        if m == self.treated_mask.len() {
            issues.push(ValidationIssue::NoControlUnits);
        }
        for i in 0..n {
            for s in 0..t {
                if !self.outcomes[(i, s)].is_finite() {
                    issues.push(ValidationIssue::NonFiniteOutcome { unit: i, period: s });
                }
            }
        }
        for i in 0..self.features.nrows() {
            for k in 0..self.features.ncols() {
                if !self.features[(i, k)].is_finite() {
                    issues.push(ValidationIssue::NonFiniteFeature {
                        unit: i,
                        feature: k,
                    });
                }
            }
        }
        ValidationReport { issues }
    }

    fn treated_first(self) -> Self {
        let mut order: Vec<usize> = (0..self.n_units()).collect();
        order.sort_by_key(|&i| !self.treated_mask[i]);
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            return self;
        }
        self.reorder(&order)
    }

    fn reorder(&self, order: &[usize]) -> Self {
        let outcomes = self.outcomes.select_rows(order);
        let features = self.features.select_rows(order);
        PanelDataset {
            outcomes,
            features,
            treated_mask: order.iter().map(|&i| self.treated_mask[i]).collect(),
            t0: self.t0,
            unit_ids: order.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            original_index: order.iter().map(|&i| self.original_index[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Panel with the treated and control labels exchanged (still treated-first).
    pub fn with_sides_swapped(&self) -> Self {
        let swapped = PanelDataset {
            treated_mask: self.treated_mask.iter().map(|b| !b).collect(),
            ..self.clone()
        };
        swapped.treated_first()
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn t1(&self) -> usize {
        self.n_periods() - self.t0
    }

    pub fn n_treated(&self) -> usize {
        self.treated_mask.iter().filter(|&&b| b).count()
    }

    pub fn n_control(&self) -> usize {
        self.n_units() - self.n_treated()
    }

    pub fn side(&self, unit: usize) -> UnitSide {
        if self.treated_mask[unit] {
            UnitSide::Treated
        } else {
            UnitSide::Control
        }
    }

    pub fn units_on(&self, side: UnitSide) -> Vec<usize> {
        (0..self.n_units())
            .filter(|&i| self.side(i) == side)
            .collect()
    }

    /// Treatment indicator for unit `unit` at 0-based period column `period`.
    pub fn is_treated_at(&self, unit: usize, period: usize) -> bool {
        self.treated_mask[unit] && period >= self.t0
    }

    pub fn feature_row(&self, unit: usize) -> Vec<f64> {
        self.features.row(unit).iter().copied().collect()
    }
}

/// Column layout of a long-format panel CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub unit_id: String,
    pub period: String,
    pub outcome: String,
    pub treated: String,
    /// Feature columns; `None` takes every remaining column in header order.
    pub features: Option<Vec<String>>,
    /// Explicit number of pre-periods; inferred from the treated flags if absent.
    pub t0: Option<usize>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            unit_id: "unit_id".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            treated: "treated".into(),
            features: None,
            t0: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSpec) -> Result<PanelDataset, PanelError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

struct UnitRows {
    id: String,
    cells: HashMap<i64, (f64, bool)>,
    features: Vec<f64>,
}

pub fn read_csv<R: Read>(reader: R, schema: &ColumnSpec) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, PanelError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let unit_col = col(&schema.unit_id)?;
    let period_col = col(&schema.period)?;
    let outcome_col = col(&schema.outcome)?;
    let treated_col = col(&schema.treated)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(k, _)| ![unit_col, period_col, outcome_col, treated_col].contains(k))
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let feature_cols = feature_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut units: Vec<UnitRows> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut periods = BTreeSet::new();

    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let parse_f64 = |k: usize, name: &str| -> Result<f64, PanelError> {
            let v = field(k);
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| PanelError::Parse {
                    row,
                    column: name.to_string(),
                    value: v.to_string(),
                })
        };
        let id = field(unit_col).to_string();
        let period: i64 = field(period_col)
            .parse()
            .ok()
            .filter(|p| *p > 0)
            .ok_or_else(|| PanelError::Parse {
                row,
                column: schema.period.clone(),
                value: field(period_col).to_string(),
            })?;
        let outcome = parse_f64(outcome_col, &schema.outcome)?;
        let treated = match field(treated_col) {
            "0" => false,
            "1" => true,
            other => {
                return Err(PanelError::Parse {
                    row,
                    column: schema.treated.clone(),
                    value: other.to_string(),
                })
            }
        };
        let feats = feature_cols
            .iter()
            .zip(&feature_names)
            .map(|(&k, name)| parse_f64(k, name))
            .collect::<Result<Vec<_>, _>>()?;

        let slot = *index.entry(id.clone()).or_insert_with(|| {
            units.push(UnitRows {
                id: id.clone(),
                cells: HashMap::new(),
                features: feats.clone(),
            });
            units.len() - 1
        });
        let unit = &mut units[slot];
        if let Some(k) = unit
            .features
            .iter()
            .zip(&feats)
            .position(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(PanelError::TimeVaryingFeature {
                unit: id,
                column: feature_names[k].clone(),
            });
        }
        if unit.cells.insert(period, (outcome, treated)).is_some() {
            return Err(PanelError::DuplicateCell { unit: id, period });
        }
        periods.insert(period);
    }

    let periods: Vec<i64> = periods.into_iter().collect();
    let n = units.len();
    let t = periods.len();
    let mut outcomes = DMatrix::zeros(n, t);
    let mut flags = vec![vec![false; t]; n];
    for (i, unit) in units.iter().enumerate() {
        for (s, p) in periods.iter().enumerate() {
            let (y, d) = unit
                .cells
                .get(p)
                .ok_or_else(|| PanelError::UnbalancedPanel {
                    unit: unit.id.clone(),
                    period: *p,
                })?;
            outcomes[(i, s)] = *y;
            flags[i][s] = *d;
        }
    }

    let t0 = match schema.t0 {
        Some(t0) => {
            if t0 == 0 || t0 >= t {
                return Err(PanelError::T0OutOfRange { t0, periods: t });
            }
            t0
        }
        None => (0..t)
            .rev()
            .find(|&s| flags.iter().all(|f| !f[s]))
            .map(|s| s + 1)
            .unwrap_or(0),
    };
    let mut mask = Vec::with_capacity(n);
    for (i, f) in flags.iter().enumerate() {
        if f[..t0.min(t)].iter().any(|&d| d) {
            return Err(PanelError::TreatmentBeforeT0 {
                unit: units[i].id.clone(),
            });
        }
        let post = &f[t0.min(t)..];
        let treated = post.first().copied().unwrap_or(false);
        if post.iter().any(|&d| d != treated) {
            return Err(PanelError::StaggeredAdoption {
                unit: units[i].id.clone(),
            });
        }
        mask.push(treated);
    }

    let d = feature_names.len();
    let mut features = DMatrix::zeros(n, d);
    for (i, unit) in units.iter().enumerate() {
        for k in 0..d {
            features[(i, k)] = unit.features[k];
        }
    }
    let ids = units.into_iter().map(|u| u.id).collect();
    let mut ds = PanelDataset::with_unit_ids(outcomes, features, mask, t0, ids)?;
    ds.feature_names = feature_names;
    Ok(ds)
}

pub fn write_csv(dataset: &PanelDataset, path: impl AsRef<Path>) -> Result<(), PanelError> {
    let file = std::fs::File::create(path)?;
    write_csv_to(dataset, file)
}

/// Writes long format `unit_id,period,outcome,treated,<features>` with periods `1..=T`.
pub fn write_csv_to<W: Write>(dataset: &PanelDataset, writer: W) -> Result<(), PanelError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "unit_id".to_string(),
        "period".to_string(),
        "outcome".to_string(),
        "treated".to_string(),
    ];
    header.extend(dataset.feature_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..dataset.n_units() {
        let feats: Vec<String> = dataset
            .features
            .row(i)
            .iter()
            .map(|x| x.to_string())
            .collect();
        for s in 0..dataset.n_periods() {
            let mut rec = vec![
                dataset.unit_ids[i].clone(),
                (s + 1).to_string(),
                dataset.outcomes[(i, s)].to_string(),
                if dataset.is_treated_at(i, s) {
                    "1"
                } else {
                    "0"
                }
                .to_string(),
            ];
            rec.extend(feats.iter().cloned());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(n: usize, t: usize, t0: usize, treated: usize) -> PanelDataset {
        PanelDataset {
            outcomes: DMatrix::from_fn(n, t, |i, s| (i * t + s) as f64),
            features: DMatrix::from_fn(n, 2, |i, k| (i + k) as f64),
            treated_mask: (0..n).map(|i| i < treated).collect(),
            t0,
            unit_ids: (0..n).map(|i| i.to_string()).collect(),
            original_index: (0..n).collect(),
            feature_names: vec!["x1".into(), "x2".into()],
        }
    }

    #[test]
    fn valid_panel_passes() {
        assert!(panel(50, 20, 10, 7).validate().is_ok());
    }

    #[test]
    fn t0_equal_to_t_has_no_post_period() {
        let report = panel(50, 20, 20, 7).validate();
        assert!(report.issues.contains(&ValidationIssue::NoPostPeriod));
        assert!(report.to_string().contains("no post-period"));
    }

    #[test]
    fn all_treated_has_no_controls() {
        let report = panel(10, 5, 2, 10).validate();
        assert!(report.to_string().contains("no control units"));
    }

    #[test]
    fn non_finite_entries_are_reported() {
        let mut p = panel(4, 4, 2, 1);
        p.outcomes[(1, 3)] = f64::NAN;
        p.features[(2, 0)] = f64::INFINITY;
        let report = p.validate();
        assert_eq!(report.issues.len(), 2);
    }

    #[test]
    fn constructor_orders_treated_first() {
        let outcomes = DMatrix::from_fn(4, 3, |i, s| (10 * i + s) as f64);
        let features = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let ds = PanelDataset::new(outcomes, features, vec![false, true, false, true], 1).unwrap();
        assert_eq!(ds.treated_mask, vec![true, true, false, false]);
        assert_eq!(ds.unit_ids, vec!["2", "4", "1", "3"]);
        assert_eq!(ds.original_index, vec![1, 3, 0, 2]);
        assert_eq!(ds.outcomes[(0, 0)], 10.0);
        assert_eq!(ds.features[(2, 0)], 0.0);
    }

    #[test]
    fn loads_balanced_two_unit_file() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   a,1,1.0,0,0.5\na,2,2.0,0,0.5\na,3,3.5,1,0.5\n\
                   b,1,1.5,0,-1\nb,2,2.5,0,-1\nb,3,3.0,0,-1\n";
        let ds = read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap();
        assert_eq!((ds.n_units(), ds.n_periods()), (2, 3));
        assert_eq!(ds.t0, 2);
        assert_eq!(ds.treated_mask, vec![true, false]);
        assert_eq!(ds.outcomes[(0, 2)], 3.5);
        assert_eq!(ds.feature_names, vec!["x1"]);
    }

    #[test]
    fn periods_are_sorted_per_unit() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   a,3,3.0,1,0\na,1,1.0,0,0\na,2,2.0,0,0\n\
                   b,2,20.0,0,1\nb,3,30.0,0,1\nb,1,10.0,0,1\n";
        let ds = read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap();
        assert_eq!(
            ds.outcomes.row(1).iter().copied().collect::<Vec<_>>(),
            vec![10.0, 20.0, 30.0]
        );
    }

    #[test]
    fn missing_cell_is_unbalanced() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   1,1,1.0,0,0\n1,2,2.0,0,0\n1,3,3.0,1,0\n\
                   2,1,1.0,0,1\n2,2,2.0,0,1\n";
        let err = read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("unbalanced panel"), "{err}");
    }

    #[test]
    fn early_treatment_is_rejected() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   1,1,1.0,0,0\n1,2,2.0,1,0\n1,3,3.0,0,0\n1,4,3.0,1,0\n\
                   2,1,1.0,0,1\n2,2,2.0,0,1\n2,3,2.0,0,1\n2,4,2.0,1,1\n\
                   3,1,1.0,0,1\n3,2,2.0,0,1\n3,3,2.0,0,1\n3,4,2.0,0,1\n";
        let err = read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("treatment before t0"), "{err}");
    }

    #[test]
    fn non_numeric_outcome_reports_row() {
        let csv = "unit_id,period,outcome,treated,x1\n1,1,1.0,0,0\n1,2,oops,1,0\n";
        match read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap_err() {
            PanelError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "outcome");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn time_varying_feature_is_rejected() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   1,1,1.0,0,0\n1,2,2.0,1,0.1\n2,1,1.0,0,1\n2,2,2.0,0,1\n";
        let err = read_csv(csv.as_bytes(), &ColumnSpec::default()).unwrap_err();
        assert!(matches!(err, PanelError::TimeVaryingFeature { .. }));
    }

    #[test]
    fn explicit_t0_overrides_inference() {
        let csv = "unit_id,period,outcome,treated,x1\n\
                   1,1,1.0,0,0\n1,2,2.0,0,0\n1,3,3.0,0,0\n\
                   2,1,1.0,0,1\n2,2,2.0,0,1\n2,3,2.0,0,1\n";
        // no unit is ever treated, so inference alone would fail validation
        assert!(read_csv(csv.as_bytes(), &ColumnSpec::default()).is_err());
        let schema = ColumnSpec {
            t0: Some(2),
            ..ColumnSpec::default()
        };
        let err = read_csv(csv.as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("no treated units"));
    }

    #[test]
    fn swapping_sides_flips_the_mask() {
        let ds = PanelDataset::new(
            DMatrix::from_fn(3, 3, |i, s| (i + s) as f64),
            DMatrix::from_fn(3, 1, |i, _| i as f64),
            vec![true, false, false],
            1,
        )
        .unwrap();
        let sw = ds.with_sides_swapped();
        assert_eq!(sw.treated_mask, vec![true, true, false]);
        assert_eq!(sw.unit_ids, vec!["2", "3", "1"]);
    }
}
