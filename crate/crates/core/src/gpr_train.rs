//! Hyperparameter search, cross-validated objective and kernel selection.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr_core::{self, GprModel, KernelForm, KernelKind, KernelSpec};
use crate::seed::{derive_indexed, derive_seed, rng_from_seed};

pub const MIN_OPTIMIZE_SAMPLES: usize = 5;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationBudget {
    pub n_restarts: usize,
    /// Gradient steps per restart.
    pub max_iterations: usize,
    /// Stop a restart once an accepted step improves NLML by less than this.
    pub tolerance: f64,
    pub k_folds: usize,
    pub kernel_form: KernelForm,
    pub rng_seed: u64,
}

impl Default for OptimizationBudget {
    fn default() -> Self {
        OptimizationBudget {
            n_restarts: 5,
            max_iterations: 20,
            tolerance: 1e-6,
            k_folds: 5,
            kernel_form: KernelForm::default(),
            rng_seed: 0,
        }
    }
}

impl OptimizationBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 || self.max_iterations == 0 || self.k_folds < 2 {
            return Err(Error::Config(
                "budget needs n_restarts >= 1, max_iterations >= 1 and k_folds >= 2".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// One restart of the descent, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start: Vec<f64>,
    /// NLML after each accepted step, starting with the initial value.
    pub nlml_trace: Vec<f64>,
    pub end: Option<KernelSpec>,
    pub nlml: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub spec: KernelSpec,
    pub nlml: f64,
    pub restarts: Vec<RestartTrace>,
}

/// Log-space box in which the descent is confined.
#[derive(Debug, Clone)]
struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    fn clamp(&self, p: &mut [f64]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Scale statistics used to place restarts and bounds.
#[derive(Debug, Clone, Copy)]
struct DataScale {
    target_std: f64,
    median_distance: f64,
}

fn data_scale(x: &DMatrix<f64>, y: &[f64]) -> DataScale {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    // Rounding residue from a constant target is not a scale.
    let target_std = if var.sqrt() > 1e-9 * mean.abs().max(1.0) {
        var.sqrt()
    } else {
        1.0
    };

    // Cap the number of points used so large sets stay cheap.
    let m = n.min(300);
    let stride = n as f64 / m as f64;
    let idx: Vec<usize> = (0..m).map(|i| (i as f64 * stride) as usize).collect();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let r = (x.row(i) - x.row(j)).norm();
            if r > 0.0 {
                d.push(r);
            }
        }
    }
    let median_distance = if d.is_empty() {
        1.0
    } else {
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    DataScale {
        target_std,
        median_distance,
    }
}

/// Converts an effective correlation length into the kernel's `l`. The
/// exponential and rational-quadratic kernels as printed use `r / (2 l^2)`.
fn length_param(kind: KernelKind, form: KernelForm, effective: f64) -> f64 {
    match (kind, form) {
        (KernelKind::Exponential | KernelKind::RationalQuadratic, KernelForm::AsPrinted) => {
            (effective / 2.0).sqrt()
        }
        _ => effective,
    }
}

fn bounds_for(kind: KernelKind, form: KernelForm, scale: DataScale) -> Bounds {
    let s = scale.target_std.ln();
    let l_lo = length_param(kind, form, 1e-3 * scale.median_distance).ln();
    let l_hi = length_param(kind, form, 1e3 * scale.median_distance).ln();
    let mut lower = vec![
        s - 3.0 * std::f64::consts::LN_10,
        l_lo,
        s - 6.0 * std::f64::consts::LN_10,
    ];
    let mut upper = vec![
        s + 3.0 * std::f64::consts::LN_10,
        l_hi,
        s + 2.0 * std::f64::consts::LN_10,
    ];
    if kind.has_mixture() {
        lower.push(1e-3f64.ln());
        upper.push(1e4f64.ln());
    }
    Bounds { lower, upper }
}

fn restart_start(
    kind: KernelKind,
    form: KernelForm,
    scale: DataScale,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let lo = (0.01 * scale.median_distance).ln();
    let hi = (10.0 * scale.median_distance).ln();
    let effective = rng.random_range(lo..=hi).exp();
    let mut p = vec![
        scale.target_std.ln(),
        length_param(kind, form, effective).ln(),
        (0.1 * scale.target_std).ln(),
    ];
    if kind.has_mixture() {
        p.push(rng.random_range(0.5f64.ln()..=5.0f64.ln()));
    }
    p
}

fn try_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    kind: KernelKind,
    form: KernelForm,
    p: &[f64],
) -> Result<GprModel> {
    let spec = KernelSpec::from_log_params(kind, form, p)?;
    gpr_core::fit(x, y, &spec)
}

/// Zero the gradient components that point out of the box at an active bound.
fn project(grad: &mut [f64], p: &[f64], bounds: &Bounds) {
    for i in 0..grad.len() {
        let at_lo = p[i] <= bounds.lower[i] && grad[i] > 0.0;
        let at_hi = p[i] >= bounds.upper[i] && grad[i] < 0.0;
        if at_lo || at_hi {
            grad[i] = 0.0;
        }
    }
}

fn descend(
    x: &DMatrix<f64>,
    y: &[f64],
    kind: KernelKind,
    budget: &OptimizationBudget,
    bounds: &Bounds,
    start: Vec<f64>,
) -> RestartTrace {
    let form = budget.kernel_form;
    let mut trace = RestartTrace {
        start: start.clone(),
        nlml_trace: Vec::new(),
        end: None,
        nlml: None,
        converged: false,
        error: None,
    };
    let mut p = start;
    bounds.clamp(&mut p);
    let mut model = match try_fit(x, y, kind, form, &p) {
        Ok(m) => m,
        Err(e) => {
            trace.error = Some(e.to_string());
            return trace;
        }
    };
    let mut f = model.nlml();
    let mut g = gpr_core::gradient_of(&model);
    trace.nlml_trace.push(f);

    let g_inf = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut step = if g_inf > 0.0 {
        (0.5 / g_inf).min(1.0)
    } else {
        1.0
    };

    for _ in 0..budget.max_iterations {
        let mut pg = g.clone();
        project(&mut pg, &p, bounds);
        if pg.iter().all(|v| v.abs() < 1e-12) {
            trace.converged = true;
            break;
        }

        let mut t = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut q: Vec<f64> = p.iter().zip(&pg).map(|(a, b)| a - t * b).collect();
            bounds.clamp(&mut q);
            let decrease: f64 = pg
                .iter()
                .zip(p.iter().zip(&q))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if decrease <= 0.0 {
                break;
            }
            if let Ok(m) = try_fit(x, y, kind, form, &q) {
                let fq = m.nlml();
                if fq.is_finite() && fq <= f - ARMIJO_C * decrease {
                    accepted = Some((q, m, fq));
                    break;
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break;
            }
        }
        let Some((q, m, fq)) = accepted else {
            trace.converged = true;
            break;
        };

        let gq = gpr_core::gradient_of(&m);
        // Barzilai-Borwein step for the next iteration.
        let (ss, sy) = p.iter().zip(&q).zip(g.iter().zip(&gq)).fold(
            (0.0, 0.0),
            |(ss, sy), ((a, b), (ga, gb))| {
                let s = b - a;
                (ss + s * s, sy + s * (gb - ga))
            },
        );
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            (2.0 * t).min(MAX_STEP)
        };

        let improvement = f - fq;
        p = q;
        model = m;
        f = fq;
        g = gq;
        trace.nlml_trace.push(f);
        if improvement < budget.tolerance {
            trace.converged = true;
            break;
        }
    }
    trace.end = Some(*model.kernel());
    trace.nlml = Some(f);
    trace
}

/// Multi-start gradient descent on NLML over log-hyperparameters.
pub fn optimize_hyperparams(
    x: &DMatrix<f64>,
    y: &[f64],
    kind: KernelKind,
    budget: &OptimizationBudget,
) -> Result<Optimized> {
    budget.validate()?;
    check_xy(x, y)?;
    if y.len() < MIN_OPTIMIZE_SAMPLES {
        return Err(Error::Domain(format!(
            "hyperparameter search needs at least {MIN_OPTIMIZE_SAMPLES} samples, got {}",
            y.len()
        )));
    }
    let scale = data_scale(x, y);
    let bounds = bounds_for(kind, budget.kernel_form, scale);
    let kind_seed = derive_seed(budget.rng_seed, kind.name());
    let starts: Vec<Vec<f64>> = (0..budget.n_restarts)
        .map(|i| {
            let mut rng = rng_from_seed(derive_indexed(kind_seed, "restart", i as u64));
            restart_start(kind, budget.kernel_form, scale, &mut rng)
        })
        .collect();
    let restarts: Vec<RestartTrace> = starts
        .into_par_iter()
        .map(|s| descend(x, y, kind, budget, &bounds, s))
        .collect();

    let best = restarts
        .iter()
        .filter_map(|r| Some((r.end?, r.nlml?)))
        .fold(None, |acc: Option<(KernelSpec, f64)>, (s, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((s, v)),
        });
    match best {
        Some((spec, nlml)) => Ok(Optimized {
            spec,
            nlml,
            restarts,
        }),
        None => Err(Error::Training(format!(
            "all {} restarts failed for the {kind} kernel: {}",
            restarts.len(),
            restarts[0].error.as_deref().unwrap_or("unknown")
        ))),
    }
}

fn check_xy(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} targets", x.nrows()), y.len()));
    }
    Ok(())
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds whose sizes differ by
/// at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::Domain(format!(
            "cross-validation needs 2 <= k_folds <= n, got k = {k}, n = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, "folds")));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[at..at + len].to_vec());
        at += len;
    }
    Ok(folds)
}

/// Mean squared held-out error with seeded folds.
pub fn cv_loss(
    x: &DMatrix<f64>,
    y: &[f64],
    spec: &KernelSpec,
    k_folds: usize,
    seed: u64,
) -> Result<f64> {
    check_xy(x, y)?;
    let folds = fold_assignment(y.len(), k_folds, seed)?;
    cv_loss_with_folds(x, y, spec, &folds)
}

/// Mean squared held-out error for explicit folds. Every sample must appear in
/// exactly one fold.
pub fn cv_loss_with_folds(
    x: &DMatrix<f64>,
    y: &[f64],
    spec: &KernelSpec,
    folds: &[Vec<usize>],
) -> Result<f64> {
    check_xy(x, y)?;
    let n = y.len();
    let mut seen = vec![false; n];
    for &i in folds.iter().flatten() {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Domain(
                "folds must partition the sample indices".into(),
            ));
        }
    }
    if seen.iter().any(|s| !s) || folds.iter().any(|f| f.is_empty()) {
        return Err(Error::Domain(
            "folds must partition the sample indices".into(),
        ));
    }

    let mut sse = 0.0;
    for fold in folds {
        let mut held = vec![false; n];
        for &i in fold {
            held[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let x_train = x.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = gpr_core::fit(&x_train, &y_train, spec)?;
        let pred = model.predict_mean(&x.select_rows(fold))?;
        sse += fold
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (p - y[i]).powi(2))
            .sum::<f64>();
    }
    Ok(sse / n as f64)
}

/// `ln(1 + cv)`.
pub fn objective(cv: f64) -> Result<f64> {
    if cv.is_nan() || cv < 0.0 {
        return Err(Error::Domain(format!("cv loss must be >= 0, got {cv}")));
    }
    Ok(cv.ln_1p())
}

/// A point on the objective surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub spec: KernelSpec,
    pub nlml: f64,
    pub cv_loss: f64,
    pub of: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult {
    pub kind: KernelKind,
    pub spec: Option<KernelSpec>,
    pub nlml: Option<f64>,
    pub cv_loss: Option<f64>,
    pub of: Option<f64>,
    pub error: Option<String>,
}

impl KernelResult {
    /// Objective value, infinite when the kernel failed.
    pub fn of_value(&self) -> f64 {
        self.of.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSelectionReport {
    pub kernels: Vec<KernelResult>,
    pub winner: KernelKind,
    pub winner_spec: KernelSpec,
    pub surface: Vec<SurfaceSample>,
    /// True when too few samples were available for cross-validated selection
    /// and a squared-exponential kernel was fitted on NLML alone.
    #[serde(default)]
    pub degraded: bool,
}

impl KernelSelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_surface_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "kernel,sigma,length_scale,alpha,noise,nlml,cv_loss,of")?;
        for s in &self.surface {
            let alpha = s.spec.mixture.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.spec.kind.name(),
                s.spec.signal_std,
                s.spec.length_scale,
                alpha,
                s.spec.noise_std,
                s.nlml,
                s.cv_loss,
                s.of
            )?;
        }
        Ok(())
    }
}

/// Optimizes every kernel kind and picks the one with the lowest objective.
pub fn select_kernel(
    x: &DMatrix<f64>,
    y: &[f64],
    budget: &OptimizationBudget,
) -> Result<KernelSelectionReport> {
    budget.validate()?;
    check_xy(x, y)?;
    let min_n = budget.k_folds * MIN_OPTIMIZE_SAMPLES;
    if y.len() < min_n {
        return Err(Error::Domain(format!(
            "kernel selection needs at least {min_n} samples, got {}",
            y.len()
        )));
    }
    let fold_seed = derive_seed(budget.rng_seed, "cv");
    let folds = fold_assignment(y.len(), budget.k_folds, fold_seed)?;

    let per_kind: Vec<(KernelResult, Vec<SurfaceSample>)> = KernelKind::ALL
        .par_iter()
        .map(|&kind| evaluate_kind(x, y, kind, budget, &folds))
        .collect();

    let mut kernels = Vec::with_capacity(per_kind.len());
    let mut surface = Vec::new();
    for (k, s) in per_kind {
        kernels.push(k);
        surface.extend(s);
    }
    // Strict comparison keeps the earliest kind on ties.
    let mut best: Option<&KernelResult> = None;
    for k in &kernels {
        if k.spec.is_some() && best.is_none_or(|b| k.of_value() < b.of_value()) {
            best = Some(k);
        }
    }
    let Some(best) = best else {
        return Err(Error::Training(format!(
            "every kernel kind failed: {}",
            kernels
                .iter()
                .map(|k| format!("{}: {}", k.kind, k.error.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; ")
        )));
    };
    Ok(KernelSelectionReport {
        winner: best.kind,
        winner_spec: best.spec.expect("winner has a spec"),
        kernels,
        surface,
        degraded: false,
    })
}

fn evaluate_kind(
    x: &DMatrix<f64>,
    y: &[f64],
    kind: KernelKind,
    budget: &OptimizationBudget,
    folds: &[Vec<usize>],
) -> (KernelResult, Vec<SurfaceSample>) {
    let failed = |e: Error| KernelResult {
        kind,
        spec: None,
        nlml: None,
        cv_loss: None,
        of: None,
        error: Some(e.to_string()),
    };
    let opt = match optimize_hyperparams(x, y, kind, budget) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("{kind} kernel failed: {e}");
            return (failed(e), Vec::new());
        }
    };

    let mut surface = Vec::new();
    let mut best_cv = None;
    for r in &opt.restarts {
        let (Some(spec), Some(nlml)) = (r.end, r.nlml) else {
            continue;
        };
        let Ok(cv) = cv_loss_with_folds(x, y, &spec, folds) else {
            continue;
        };
        let of = objective(cv).expect("cv loss is non-negative");
        if spec == opt.spec && best_cv.is_none() {
            best_cv = Some(cv);
        }
        surface.push(SurfaceSample {
            spec,
            nlml,
            cv_loss: cv,
            of,
        });
    }
    let cv = match best_cv {
        Some(cv) => Ok(cv),
        None => cv_loss_with_folds(x, y, &opt.spec, folds),
    };
    match cv {
        Ok(cv) => (
            KernelResult {
                kind,
                spec: Some(opt.spec),
                nlml: Some(opt.nlml),
                cv_loss: Some(cv),
                of: Some(objective(cv).expect("cv loss is non-negative")),
                error: None,
            },
            surface,
        ),
        Err(e) => (failed(e), surface),
    }
}

/// Independent models for the x and y coordinates.
#[derive(Debug, Clone)]
pub struct PositionModels {
    pub x: GprModel,
    pub y: GprModel,
    pub report_x: KernelSelectionReport,
    pub report_y: KernelSelectionReport,
}

impl PositionModels {
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
        let px = self.x.predict_mean(inputs)?;
        let py = self.y.predict_mean(inputs)?;
        Ok(px.into_iter().zip(py).map(|(a, b)| [a, b]).collect())
    }
}

/// Runs kernel selection and fitting for each coordinate. Below the
/// cross-validation minimum it falls back to a squared-exponential fit.
pub fn train_position_models(
    inputs: &DMatrix<f64>,
    positions: &[[f64; 2]],
    budget: &OptimizationBudget,
) -> Result<PositionModels> {
    if inputs.nrows() != positions.len() {
        return Err(Error::shape(
            format!("{} positions", inputs.nrows()),
            positions.len(),
        ));
    }
    let xs: Vec<f64> = positions.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p[1]).collect();
    let bx = budget.with_seed(derive_seed(budget.rng_seed, "gpr_x"));
    let by = budget.with_seed(derive_seed(budget.rng_seed, "gpr_y"));
    let ((mx, rx), (my, ry)) = rayon::join(
        || train_coordinate(inputs, &xs, &bx),
        || train_coordinate(inputs, &ys, &by),
    );
    let (mx, rx) = (mx?, rx);
    let (my, ry) = (my?, ry);
    Ok(PositionModels {
        x: mx,
        y: my,
        report_x: rx,
        report_y: ry,
    })
}

#[allow(clippy::type_complexity)]
fn train_coordinate(
    inputs: &DMatrix<f64>,
    targets: &[f64],
    budget: &OptimizationBudget,
) -> (Result<GprModel>, KernelSelectionReport) {
    let empty = |kind| KernelSelectionReport {
        kernels: Vec::new(),
        winner: kind,
        winner_spec: KernelSpec::new(kind, 1.0, 1.0, 0.1),
        surface: Vec::new(),
        degraded: true,
    };
    let report = if targets.len() >= budget.k_folds * MIN_OPTIMIZE_SAMPLES {
        select_kernel(inputs, targets, budget)
    } else {
        log::warn!(
            "only {} training samples; skipping kernel selection",
            targets.len()
        );
        optimize_hyperparams(inputs, targets, KernelKind::SquaredExponential, budget).map(|o| {
            KernelSelectionReport {
                kernels: vec![KernelResult {
                    kind: KernelKind::SquaredExponential,
                    spec: Some(o.spec),
                    nlml: Some(o.nlml),
                    cv_loss: None,
                    of: None,
                    error: None,
                }],
                winner: KernelKind::SquaredExponential,
                winner_spec: o.spec,
                surface: Vec::new(),
                degraded: true,
            }
        })
    };
    match report {
        Ok(r) => (gpr_core::fit(inputs, targets, &r.winner_spec), r),
        Err(e) => (Err(e), empty(KernelKind::SquaredExponential)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_values() {
        assert_eq!(objective(0.0).unwrap(), 0.0);
        assert!((objective(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((objective(53.2).unwrap() - 54.2f64.ln()).abs() < 1e-15);
        assert!((objective(53.2).unwrap() - 3.9928).abs() < 5e-4);
        assert!(objective(-1e-9).is_err());
        assert!(objective(f64::NAN).is_err());
    }

    #[test]
    fn folds_partition_and_balance() {
        let folds = fold_assignment(23, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        assert_eq!(folds, fold_assignment(23, 5, 9).unwrap());
        assert!(fold_assignment(4, 5, 0).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(OptimizationBudget::default().validate().is_ok());
        let b = OptimizationBudget {
            n_restarts: 0,
            ..Default::default()
        };
        assert!(b.validate().is_err());
    }

    #[test]
    fn as_printed_length_conversion() {
        let l = length_param(KernelKind::Exponential, KernelForm::AsPrinted, 8.0);
        assert_eq!(l, 2.0);
        assert_eq!(
            length_param(KernelKind::SquaredExponential, KernelForm::AsPrinted, 8.0),
            8.0
        );
    }
}
