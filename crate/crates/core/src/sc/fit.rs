//! Restricted least-squares fit of one target unit on a donor pool.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::projection::{project_l1_ball, project_simplex};
use super::ScError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `‖w‖₁ ≤ radius`.
    L1Ball { radius: f64 },
    /// `wⱼ ≥ 0`, `Σ wⱼ = 1`.
    Simplex,
    /// Simplex weights with an added `lambda · Σ wⱼ distⱼ` matching penalty.
    ///
    /// An empty `distances` vector asks the imputation routines to use the
    /// pre-period distance between the target and each donor.
    PenalizedSimplex { lambda: f64, distances: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub intercept: bool,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec::l1_ball(1.0)
    }
}

impl ConstraintSpec {
    pub fn l1_ball(radius: f64) -> Self {
        ConstraintSpec {
            kind: ConstraintKind::L1Ball { radius },
            intercept: true,
        }
    }

    pub fn simplex() -> Self {
        ConstraintSpec {
            kind: ConstraintKind::Simplex,
            intercept: true,
        }
    }

    pub fn penalized_simplex(lambda: f64, distances: Vec<f64>) -> Self {
        ConstraintSpec {
            kind: ConstraintKind::PenalizedSimplex { lambda, distances },
            intercept: true,
        }
    }

    pub fn with_intercept(mut self, intercept: bool) -> Self {
        self.intercept = intercept;
        self
    }

    /// Checks hyperparameters against a donor count.
    pub fn check(&self, donors: usize) -> Result<(), ScError> {
        match &self.kind {
            ConstraintKind::L1Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(ScError::InvalidConstraint(format!(
                        "L1 radius must be finite and positive, got {radius}"
                    )));
                }
            }
            ConstraintKind::Simplex => {}
            ConstraintKind::PenalizedSimplex { lambda, distances } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(ScError::InvalidConstraint(format!(
                        "penalty must be finite and nonnegative, got {lambda}"
                    )));
                }
                if distances.len() != donors {
                    return Err(ScError::InvalidConstraint(format!(
                        "expected {donors} donor distances, got {}",
                        distances.len()
                    )));
                }
                if distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    return Err(ScError::InvalidConstraint(
                        "donor distances must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when `weights` lie in the feasible set within `tol`.
    pub fn is_feasible(&self, weights: &[f64], tol: f64) -> bool {
        match &self.kind {
            ConstraintKind::L1Ball { radius } => {
                weights.iter().map(|w| w.abs()).sum::<f64>() <= radius + tol
            }
            ConstraintKind::Simplex | ConstraintKind::PenalizedSimplex { .. } => {
                weights.iter().all(|&w| w >= -1e-12)
                    && (weights.iter().sum::<f64>() - 1.0).abs() <= tol
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOpts {
    /// Stop once the Frank-Wolfe duality gap falls below `tol` times the
    /// starting objective, or once two consecutive iterations each lower
    /// the objective by less than `tol` relative.
    pub tol: f64,
    pub max_iters: usize,
    /// Keep the objective value of every accepted iterate.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            tol: 1e-10,
            max_iters: 50_000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub constraint: ConstraintSpec,
    pub pre_rmse: f64,
    pub iterations: usize,
    /// Final value of the minimized objective (residual sum of squares plus penalty).
    pub objective: f64,
    /// Frank-Wolfe gap at the returned weights; bounds the distance to the optimum.
    pub gap: f64,
    pub trace: Vec<f64>,
}

impl SyntheticFit {
    /// `μ + Σⱼ wⱼ yⱼ` for one period's donor outcomes.
    pub fn predict(&self, donor_values: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(donor_values)
                .map(|(w, y)| w * y)
                .sum::<f64>()
    }
}

struct Problem<'a> {
    target: DVector<f64>,
    donors: DMatrix<f64>,
    linear: Option<(f64, &'a [f64])>,
}

impl Problem<'_> {
    fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.donors * w - &self.target
    }

    fn objective(&self, w: &DVector<f64>) -> f64 {
        let r = self.residual(w);
        r.norm_squared() + self.penalty(w)
    }

    fn penalty(&self, w: &DVector<f64>) -> f64 {
        match self.linear {
            Some((lambda, dist)) => lambda * w.iter().zip(dist).map(|(a, b)| a * b).sum::<f64>(),
            None => 0.0,
        }
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = self.donors.tr_mul(&self.residual(w)) * 2.0;
        if let Some((lambda, dist)) = self.linear {
            for (gj, dj) in g.iter_mut().zip(dist) {
                *gj += lambda * dj;
            }
        }
        g
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration.
fn gram_spectral_norm(a: &DMatrix<f64>) -> f64 {
    let j = a.ncols();
    let mut v = DVector::from_fn(j, |k, _| 1.0 + 0.01 * (k as f64 + 1.0).sin());
    let n = v.norm();
    v /= n;
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn fw_gap(kind: &ConstraintKind, w: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let lin = g.dot(w);
    match kind {
        ConstraintKind::L1Ball { radius } => lin + radius * g.amax(),
        _ => lin - g.min(),
    }
}

/// First iteration at which the solver tries to jump to the exact optimum of
/// the current face; later attempts happen at doubling intervals.
const FIRST_POLISH: usize = 16;

/// Right singular vectors of `b` with nonnegligible singular values, and the
/// squared singular values.
fn row_space(b: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let (rows, cols) = b.shape();
    let wide = cols > rows;
    let gram = if wide { b * b.transpose() } else { b.tr_mul(b) };
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.max();
    if top <= 0.0 {
        return (Vec::new(), Vec::new());
    }
    let mut basis = Vec::new();
    let mut sq = Vec::new();
    for i in 0..eig.eigenvalues.len() {
        let l = eig.eigenvalues[i];
        if l <= 1e-12 * top {
            continue;
        }
        let e = eig.eigenvectors.column(i).into_owned();
        let q = if wide { b.tr_mul(&e) / l.sqrt() } else { e };
        basis.push(q);
        sq.push(l);
    }
    (basis, sq)
}

/// Minimizer of the quadratic over the span of `support`, optionally subject
/// to `cᵀw = level`. Rank-deficient faces get the minimum-norm minimizer;
/// faces on which the objective is unbounded below give `None`.
fn face_minimizer(
    problem: &Problem<'_>,
    support: &[usize],
    equality: Option<(&[f64], f64)>,
    n: usize,
) -> Option<DVector<f64>> {
    let k = support.len();
    let a = problem.donors.select_columns(support);
    // w = w_p + P·v with P the projector onto the equality's null space
    let (w_p, p) = match equality {
        Some((c, level)) => {
            let c = DVector::from_column_slice(c);
            let cc = c.norm_squared();
            (
                &c * (level / cc),
                DMatrix::identity(k, k) - &c * c.transpose() / cc,
            )
        }
        None => (DVector::zeros(k), DMatrix::identity(k, k)),
    };
    let b = &a * &p;
    let r = &problem.target - &a * &w_p;
    let mut rhs = b.tr_mul(&r);
    let linear = problem.linear.map(|(lambda, dist)| {
        &p * DVector::from_iterator(k, support.iter().map(|&j| lambda * dist[j]))
    });
    if let Some(g) = &linear {
        rhs -= g * 0.5;
    }
    // orthonormal row-space basis of B with squared singular values, from
    // the smaller of the two Gram matrices
    let (basis, sq) = row_space(&b);
    if basis.is_empty() {
        return None;
    }
    if let Some(g) = &linear {
        // a linear term outside the row space pulls towards −∞
        let inside: f64 = basis.iter().map(|q| q.dot(g).powi(2)).sum();
        if g.norm_squared() - inside > 1e-20 + 1e-10 * g.norm_squared() {
            return None;
        }
    }
    let mut v = DVector::zeros(k);
    for (q, l) in basis.iter().zip(&sq) {
        v += q * (q.dot(&rhs) / l);
    }
    let local = w_p + v;
    let mut w = DVector::zeros(n);
    for (idx, &j) in support.iter().enumerate() {
        w[j] = local[idx];
    }
    w.iter().all(|x| x.is_finite()).then_some(w)
}

/// Primal active-set refinement started from the face of `x`.
///
/// Projected gradient identifies the optimal face quickly but converges on it
/// slowly when donors outnumber periods. Each round jumps to the minimizer of
/// the current face; if that leaves the feasible set, it stops at the
/// boundary, drops the blocking coordinate and tries again.
fn polish(problem: &Problem<'_>, kind: &ConstraintKind, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.len();
    let mut x = x.clone();
    // entries at rounding level are left over from the projection tolerance
    let floor = 1e-13 * x.amax();
    let mut support: Vec<usize> = (0..n).filter(|&j| x[j].abs() > floor).collect();
    let signs = DVector::from_fn(n, |j, _| x[j].signum());
    let (radius, mut on_boundary) = match kind {
        ConstraintKind::L1Ball { radius } => {
            let norm: f64 = x.iter().map(|v| v.abs()).sum();
            (*radius, norm >= radius * (1.0 - 1e-9))
        }
        _ => (1.0, true),
    };
    for _ in 0..=n {
        if support.is_empty() {
            return None;
        }
        let c: Vec<f64> = support.iter().map(|&j| signs[j]).collect();
        let z = face_minimizer(
            problem,
            &support,
            on_boundary.then_some((c.as_slice(), radius)),
            n,
        )?;
        // largest step towards z that keeps every sign and the L1 budget
        let mut alpha = 1.0f64;
        let mut blocking = None;
        for &j in &support {
            if z[j] * signs[j] < 0.0 {
                let a = x[j] / (x[j] - z[j]);
                if a < alpha {
                    alpha = a;
                    blocking = Some(j);
                }
            }
        }
        let mut hits_ball = false;
        if !on_boundary {
            let now: f64 = support.iter().map(|&j| signs[j] * x[j]).sum();
            let then: f64 = support.iter().map(|&j| signs[j] * z[j]).sum();
            if then > radius && then > now {
                let a = (radius - now) / (then - now);
                if a < alpha {
                    alpha = a;
                    blocking = None;
                    hits_ball = true;
                }
            }
        }
        x = &x + (&z - &x) * alpha.max(0.0);
        if alpha >= 1.0 {
            break;
        }
        if let Some(j) = blocking {
            x[j] = 0.0;
            support.retain(|&k| k != j);
        }
        if hits_ball {
            on_boundary = true;
        }
    }
    let projected = match kind {
        ConstraintKind::L1Ball { radius } => project_l1_ball(x.as_slice(), *radius).ok()?,
        _ => project_simplex(x.as_slice()).ok()?,
    };
    Some(DVector::from_vec(projected))
}

/// Minimizes `Σₜ (yₜ − μ − Σⱼ wⱼ Xₜⱼ)²` (plus the penalty, when configured)
/// over the feasible set of `spec`; `μ` is fixed at zero without an intercept.
///
/// `target_pre` has one entry per pre-period, `donors_pre` is periods × donors.
pub fn fit_weights(
    target_pre: &[f64],
    donors_pre: &DMatrix<f64>,
    spec: &ConstraintSpec,
    opts: &SolverOpts,
) -> Result<SyntheticFit, ScError> {
    let t0 = target_pre.len();
    let j = donors_pre.ncols();
    if t0 == 0 || j == 0 {
        return Err(ScError::DimensionMismatch(format!(
            "need at least one period and one donor, got {t0} × {j}"
        )));
    }
    if donors_pre.nrows() != t0 {
        return Err(ScError::DimensionMismatch(format!(
            "target has {t0} periods but donors have {}",
            donors_pre.nrows()
        )));
    }
    if target_pre
        .iter()
        .chain(donors_pre.iter())
        .any(|x| !x.is_finite())
    {
        return Err(ScError::NonFinite("pre-period outcomes"));
    }
    spec.check(j)?;

    // the intercept is profiled out by centering; μ = ȳ − x̄ᵀw afterwards
    let mut target = DVector::from_column_slice(target_pre);
    let mut donors = donors_pre.clone();
    let (target_mean, donor_means) = if spec.intercept {
        let ym = target.mean();
        target.add_scalar_mut(-ym);
        let means: Vec<f64> = (0..j).map(|k| donors.column(k).mean()).collect();
        for (k, m) in means.iter().enumerate() {
            donors.column_mut(k).add_scalar_mut(-m);
        }
        (ym, means)
    } else {
        (0.0, vec![0.0; j])
    };

    let linear = match &spec.kind {
        ConstraintKind::PenalizedSimplex { lambda, distances } => {
            Some((*lambda, distances.as_slice()))
        }
        _ => None,
    };
    let problem = Problem {
        target,
        donors,
        linear,
    };
    let project = |v: &DVector<f64>| -> Result<DVector<f64>, ScError> {
        let p = match &spec.kind {
            ConstraintKind::L1Ball { radius } => project_l1_ball(v.as_slice(), *radius)?,
            _ => project_simplex(v.as_slice())?,
        };
        Ok(DVector::from_vec(p))
    };

    let mut x = match spec.kind {
        ConstraintKind::L1Ball { .. } => DVector::zeros(j),
        _ => DVector::from_element(j, 1.0 / j as f64),
    };
    let mut fx = problem.objective(&x);
    let scale = fx;
    let threshold = opts.tol * scale;
    let mut lipschitz = (2.02 * gram_spectral_norm(&problem.donors)).max(1e-12);

    let mut x_prev = x.clone();
    let mut momentum = 1.0f64;
    let mut trace = if opts.record_trace {
        vec![fx]
    } else {
        Vec::new()
    };
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut slow_steps = 0;

    while iterations <= opts.max_iters {
        let gx = problem.gradient(&x);
        gap = fw_gap(&spec.kind, &x, &gx).max(0.0);
        if scale <= 0.0 || gap <= threshold {
            converged = true;
            break;
        }
        if iterations == opts.max_iters {
            break;
        }
        iterations += 1;

        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let y = &x + (&x - &x_prev) * beta;
        let gy = problem.gradient(&y);
        let mut z = project(&(&y - gy / lipschitz))?;
        let mut fz = problem.objective(&z);
        if fz > fx {
            // momentum overshot: restart from a plain projected step at x
            momentum = 1.0;
            let mut stalled = false;
            loop {
                z = project(&(&x - &gx / lipschitz))?;
                fz = problem.objective(&z);
                if fz <= fx {
                    break;
                }
                if fz - fx <= 64.0 * f64::EPSILON * fx.abs() {
                    // a descent step that fails only by rounding: x is optimal
                    // to working precision
                    stalled = true;
                    break;
                }
                lipschitz *= 2.0;
            }
            if stalled {
                converged = true;
                break;
            }
        } else {
            momentum = next_momentum;
        }
        if iterations >= FIRST_POLISH && iterations.is_power_of_two() {
            if let Some(p) = polish(&problem, &spec.kind, &z) {
                let fp = problem.objective(&p);
                if fp < fz {
                    z = p;
                    fz = fp;
                    momentum = 1.0;
                }
            }
        }
        x_prev = std::mem::replace(&mut x, z);
        // relative decrease stalls end slow sublinear runs
        slow_steps = if fx - fz <= opts.tol * fx {
            slow_steps + 1
        } else {
            0
        };
        fx = fz;
        if opts.record_trace {
            trace.push(fx);
        }
        if slow_steps >= 2 {
            gap = fw_gap(&spec.kind, &x, &problem.gradient(&x)).max(0.0);
            converged = true;
            break;
        }
    }

    let intercept = if spec.intercept {
        target_mean
            - donor_means
                .iter()
                .zip(x.iter())
                .map(|(m, w)| m * w)
                .sum::<f64>()
    } else {
        0.0
    };
    let rss = problem.residual(&x).norm_squared();
    let fit = SyntheticFit {
        weights: x.iter().copied().collect(),
        intercept,
        constraint: spec.clone(),
        pre_rmse: (rss / t0 as f64).sqrt(),
        iterations,
        objective: fx,
        gap,
        trace,
    };
    if converged {
        Ok(fit)
    } else {
        Err(ScError::NonConvergence {
            gap,
            best: Box::new(fit),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_donors(rng: &mut ChaCha8Rng, t0: usize, j: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t0, j, |_, _| rng.random_range(-1.0..1.0))
    }

    fn objective_at(y: &[f64], x: &DMatrix<f64>, w: &[f64]) -> f64 {
        (0..y.len())
            .map(|t| {
                let pred: f64 = (0..w.len()).map(|k| w[k] * x[(t, k)]).sum();
                (y[t] - pred).powi(2)
            })
            .sum()
    }

    #[test]
    fn exact_donor_match_is_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_donors(&mut rng, 12, 3);
        let y: Vec<f64> = x.column(0).iter().copied().collect();
        let spec = ConstraintSpec::l1_ball(1.0).with_intercept(false);
        let fit = fit_weights(&y, &x, &spec, &SolverOpts::default()).unwrap();
        assert!(fit.pre_rmse <= 1e-8, "rmse {}", fit.pre_rmse);
        assert!(fit.objective <= objective_at(&y, &x, &[1.0, 0.0, 0.0]) + 1e-12);
    }

    #[test]
    fn single_donor_is_clamped_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_donors(&mut rng, 8, 1);
            let scale = rng.random_range(-3.0..3.0);
            let y: Vec<f64> = x
                .iter()
                .map(|v| scale * v + rng.random_range(-0.2..0.2))
                .collect();
            let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let xx: f64 = x.iter().map(|a| a * a).sum();
            let expected = (xy / xx).clamp(-1.0, 1.0);
            let spec = ConstraintSpec::l1_ball(1.0).with_intercept(false);
            let fit = fit_weights(&y, &x, &spec, &SolverOpts::default()).unwrap();
            assert!(
                (fit.weights[0] - expected).abs() < 1e-7,
                "{} vs {expected}",
                fit.weights[0]
            );
        }
    }

    #[test]
    fn two_donors_match_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random_donors(&mut rng, 10, 2);
            let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.5..1.5)).collect();
            let spec = ConstraintSpec::l1_ball(1.0).with_intercept(false);
            let fit = fit_weights(&y, &x, &spec, &SolverOpts::default()).unwrap();
            let mut best = f64::INFINITY;
            let steps: i32 = 1000;
            for a in -steps..=steps {
                let w1 = a as f64 / steps as f64;
                let rem = steps - a.abs();
                for b in -rem..=rem {
                    let w2 = b as f64 / steps as f64;
                    best = best.min(objective_at(&y, &x, &[w1, w2]));
                }
            }
            assert!(
                fit.objective <= best + 1e-6,
                "{} vs grid {best}",
                fit.objective
            );
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_donors(&mut rng, 10, 25);
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        for spec in [ConstraintSpec::l1_ball(1.0), ConstraintSpec::simplex()] {
            let opts = SolverOpts {
                record_trace: true,
                ..SolverOpts::default()
            };
            let fit = fit_weights(&y, &x, &spec, &opts).unwrap();
            assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(spec.is_feasible(&fit.weights, 1e-8));
        }
    }

    #[test]
    fn constant_donors_with_intercept_predict_the_mean() {
        let x = DMatrix::from_element(6, 3, 2.5);
        let y = [1.0, 2.0, 0.5, 3.0, 1.5, 2.0];
        let fit = fit_weights(
            &y,
            &x,
            &ConstraintSpec::l1_ball(1.0),
            &SolverOpts::default(),
        )
        .unwrap();
        let mean = y.iter().sum::<f64>() / 6.0;
        assert!((fit.predict([2.5, 2.5, 2.5]) - mean).abs() < 1e-12);
    }

    #[test]
    fn penalty_prefers_close_donors() {
        // two identical donors; the penalty should move all mass to the nearer one
        let col: Vec<f64> = (0..8).map(|t| (t as f64).sin()).collect();
        let x = DMatrix::from_fn(8, 2, |t, _| col[t]);
        let spec = ConstraintSpec::penalized_simplex(0.5, vec![0.0, 1.0]);
        let fit = fit_weights(&col, &x, &spec, &SolverOpts::default()).unwrap();
        assert!(fit.weights[0] > 1.0 - 1e-8);
        assert!(spec.is_feasible(&fit.weights, 1e-8));
    }

    #[test]
    fn iteration_budget_reports_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_donors(&mut rng, 10, 20);
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let opts = SolverOpts {
            tol: 1e-15,
            max_iters: 2,
            record_trace: false,
        };
        match fit_weights(&y, &x, &ConstraintSpec::l1_ball(1.0), &opts) {
            Err(ScError::NonConvergence { best, gap }) => {
                assert_eq!(best.iterations, 2);
                assert!(gap > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let x = DMatrix::zeros(3, 2);
        assert!(fit_weights(
            &[1.0, 2.0],
            &x,
            &ConstraintSpec::default(),
            &SolverOpts::default()
        )
        .is_err());
        let bad = ConstraintSpec::penalized_simplex(1.0, vec![1.0]);
        assert!(fit_weights(&[1.0, 2.0, 3.0], &x, &bad, &SolverOpts::default()).is_err());
    }
}
