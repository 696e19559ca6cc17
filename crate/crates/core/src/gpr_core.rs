//! Exact Gaussian process regression.
//!
//! Stationary kernels on the Euclidean distance `r`, Cholesky-based fitting
//! with an escalating jitter ladder, posterior prediction and the negative log
//! marginal likelihood with analytic gradients in log-hyperparameter space.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};

/// Kernel families, in the order used for tie-breaking during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    SquaredExponential,
    Exponential,
    RationalQuadratic,
    Matern32,
    Matern52,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::SquaredExponential,
        KernelKind::Exponential,
        KernelKind::RationalQuadratic,
        KernelKind::Matern32,
        KernelKind::Matern52,
    ];

    pub fn has_mixture(self) -> bool {
        self == KernelKind::RationalQuadratic
    }

    pub fn n_hyperparams(self) -> usize {
        if self.has_mixture() {
            4
        } else {
            3
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::SquaredExponential => "squared_exponential",
            KernelKind::Exponential => "exponential",
            KernelKind::RationalQuadratic => "rational_quadratic",
            KernelKind::Matern32 => "matern32",
            KernelKind::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which algebraic form the Exponential and Rational Quadratic kernels use.
///
/// `AsPrinted` evaluates `exp(-r / 2l^2)` and `(1 + r / 2 alpha l^2)^-alpha`;
/// `Standard` evaluates the textbook `exp(-r / l)` and
/// `(1 + r^2 / 2 alpha l^2)^-alpha`. The other three kinds are identical in
/// both forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelForm {
    #[default]
    AsPrinted,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default)]
    pub form: KernelForm,
    pub signal_std: f64,
    pub length_scale: f64,
    /// Scale-mixture parameter; present iff `kind` is Rational Quadratic.
    pub mixture: Option<f64>,
    pub noise_std: f64,
}

impl KernelSpec {
    /// New spec with the mixture defaulted to 1 for Rational Quadratic.
    pub fn new(kind: KernelKind, signal_std: f64, length_scale: f64, noise_std: f64) -> Self {
        KernelSpec {
            kind,
            form: KernelForm::AsPrinted,
            signal_std,
            length_scale,
            mixture: kind.has_mixture().then_some(1.0),
            noise_std,
        }
    }

    pub fn with_mixture(mut self, mixture: f64) -> Self {
        self.mixture = Some(mixture);
        self
    }

    pub fn with_form(mut self, form: KernelForm) -> Self {
        self.form = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.signal_std) || !ok(self.length_scale) {
            return Err(Error::Config(format!(
                "signal_std and length_scale must be positive, got {} and {}",
                self.signal_std, self.length_scale
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        match (self.kind.has_mixture(), self.mixture) {
            (true, Some(a)) if ok(a) => Ok(()),
            (true, _) => Err(Error::Config(
                "rational quadratic needs a positive mixture".into(),
            )),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Config(format!("{} takes no mixture", self.kind))),
        }
    }

    /// `[ln sigma, ln l, ln sigma_n]`, plus `ln alpha` for Rational Quadratic.
    pub fn log_params(&self) -> Vec<f64> {
        let mut p = vec![
            self.signal_std.ln(),
            self.length_scale.ln(),
            self.noise_std.ln(),
        ];
        if let Some(a) = self.mixture {
            p.push(a.ln());
        }
        p
    }

    pub fn from_log_params(kind: KernelKind, form: KernelForm, p: &[f64]) -> Result<Self> {
        if p.len() != kind.n_hyperparams() {
            return Err(Error::shape(kind.n_hyperparams(), p.len()));
        }
        Ok(KernelSpec {
            kind,
            form,
            signal_std: p[0].exp(),
            length_scale: p[1].exp(),
            noise_std: p[2].exp(),
            mixture: kind.has_mixture().then(|| p[3].exp()),
        })
    }

    /// Prior variance `k(0) = sigma^2`.
    pub fn prior_variance(&self) -> f64 {
        self.signal_std * self.signal_std
    }
}

/// Euclidean distance between two inputs.
pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    Ok(distance_unchecked(a, b))
}

#[inline]
fn distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn kernel_eval(spec: &KernelSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!(
            "kernel distance must be >= 0, got {r}"
        )));
    }
    spec.validate()?;
    Ok(kernel_value(spec, r))
}

fn kernel_value(spec: &KernelSpec, r: f64) -> f64 {
    let s2 = spec.prior_variance();
    let l = spec.length_scale;
    match (spec.kind, spec.form) {
        (KernelKind::SquaredExponential, _) => s2 * (-r * r / (2.0 * l * l)).exp(),
        (KernelKind::Exponential, KernelForm::AsPrinted) => s2 * (-r / (2.0 * l * l)).exp(),
        (KernelKind::Exponential, KernelForm::Standard) => s2 * (-r / l).exp(),
        (KernelKind::RationalQuadratic, form) => {
            let a = spec.mixture.unwrap_or(1.0);
            let t = if form == KernelForm::AsPrinted {
                r
            } else {
                r * r
            };
            s2 * (1.0 + t / (2.0 * a * l * l)).powf(-a)
        }
        (KernelKind::Matern32, _) => {
            let u = 3f64.sqrt() * r / l;
            s2 * (1.0 + u) * (-u).exp()
        }
        (KernelKind::Matern52, _) => {
            let u = 5f64.sqrt() * r / l;
            s2 * (1.0 + u + u * u / 3.0) * (-u).exp()
        }
    }
}

/// Kernel value and its derivatives with respect to `ln sigma`, `ln l` and,
/// for Rational Quadratic, `ln alpha` (written into `grad`).
fn kernel_value_and_grad(spec: &KernelSpec, r: f64, grad: &mut [f64]) -> f64 {
    let s2 = spec.prior_variance();
    let l = spec.length_scale;
    let k = kernel_value(spec, r);
    grad[0] = 2.0 * k;
    grad[1] = match (spec.kind, spec.form) {
        (KernelKind::SquaredExponential, _) => k * r * r / (l * l),
        (KernelKind::Exponential, KernelForm::AsPrinted) => k * r / (l * l),
        (KernelKind::Exponential, KernelForm::Standard) => k * r / l,
        (KernelKind::RationalQuadratic, form) => {
            let a = spec.mixture.unwrap_or(1.0);
            let t = if form == KernelForm::AsPrinted {
                r
            } else {
                r * r
            };
            let base = 1.0 + t / (2.0 * a * l * l);
            grad[2] = k * (-a * base.ln() + t / (2.0 * l * l * base));
            k * t / (l * l * base)
        }
        (KernelKind::Matern32, _) => {
            let u = 3f64.sqrt() * r / l;
            s2 * u * u * (-u).exp()
        }
        (KernelKind::Matern52, _) => {
            let u = 5f64.sqrt() * r / l;
            s2 * u * u * (1.0 + u) / 3.0 * (-u).exp()
        }
    };
    k
}

fn check_inputs(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("inputs contain non-finite values".into()));
    }
    Ok(())
}

/// Gram matrix between the rows of `x` and the rows of `x2` (or `x` itself).
pub fn gram(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    x2: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    // Samples as contiguous columns.
    let a = x.transpose();
    match x2 {
        None => {
            let n = a.ncols();
            let mut k = DMatrix::zeros(n, n);
            for j in 0..n {
                let xj = a.column(j);
                let xj = xj.as_slice();
                for i in j..n {
                    let v = kernel_value(spec, distance_unchecked(a.column(i).as_slice(), xj));
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            Ok(k)
        }
        Some(x2) => {
            if x2.ncols() != x.ncols() {
                return Err(Error::shape(
                    format!("{} input columns", x.ncols()),
                    x2.ncols(),
                ));
            }
            let b = x2.transpose();
            Ok(DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
                kernel_value(
                    spec,
                    distance_unchecked(a.column(i).as_slice(), b.column(j).as_slice()),
                )
            }))
        }
    }
}

/// Jitter multipliers tried in order, relative to the mean Gram diagonal.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Lower Cholesky factor of `k + (sigma_n^2 + jitter) I`, escalating the
/// jitter along [`JITTER_LADDER`]. Returns the factor and the jitter used.
fn factor_with_jitter(mut k: DMatrix<f64>, noise_var: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    let scale = if n == 0 { 1.0 } else { k.diagonal().mean() };
    for i in 0..n {
        k[(i, i)] += noise_var;
    }
    let mut tried = Vec::with_capacity(JITTER_LADDER.len());
    for &rung in &JITTER_LADDER {
        let jitter = rung * scale;
        tried.push(jitter);
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            if rung > 0.0 {
                log::debug!("cholesky needed jitter {jitter:.3e} (n = {n})");
            }
            return Ok((ch.unpack(), jitter));
        }
        log::trace!("cholesky failed with jitter {jitter:.3e}");
    }
    Err(Error::Conditioning {
        message: format!("covariance of {n} points is not positive definite"),
        jitter: tried,
    })
}

fn log_det_from_chol(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Solve `L L^T w = b`.
fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("non-singular factor");
    l.transpose()
        .solve_upper_triangular(&z)
        .expect("non-singular factor")
}

/// A fitted posterior: immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    target_mean: f64,
    kernel: KernelSpec,
    chol: DMatrix<f64>,
    weights: DVector<f64>,
    jitter: f64,
}

/// Posterior mean and variance at a batch of test inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Variance below this is treated as a numerical failure rather than noise.
const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-10;

pub fn fit(x: &DMatrix<f64>, y: &[f64], spec: &KernelSpec) -> Result<GprModel> {
    spec.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Domain(
            "fit needs at least one training point".into(),
        ));
    }
    if y.len() != n {
        return Err(Error::shape(format!("{n} targets"), y.len()));
    }
    check_inputs(x)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("targets contain non-finite values".into()));
    }
    let target_mean = y.iter().sum::<f64>() / n as f64;
    let targets = DVector::from_iterator(n, y.iter().map(|v| v - target_mean));
    let k = gram(spec, x, None)?;
    let (chol, jitter) = factor_with_jitter(k, spec.noise_std * spec.noise_std)?;
    let weights = chol_solve(&chol, &targets);
    Ok(GprModel {
        inputs: x.clone(),
        targets,
        target_mean,
        kernel: *spec,
        chol,
        weights,
        jitter,
    })
}

impl GprModel {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Centered training targets.
    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Lower Cholesky factor of `K + sigma_n^2 I` (plus jitter).
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `(K + sigma_n^2 I)^-1 y` for the centered targets.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    fn cross_gram(&self, x_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_star.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                x_star.ncols(),
            ));
        }
        check_inputs(x_star)?;
        gram(&self.kernel, &self.inputs, Some(x_star))
    }

    /// Posterior mean only; skips the variance solve.
    pub fn predict_mean(&self, x_star: &DMatrix<f64>) -> Result<Vec<f64>> {
        let ks = self.cross_gram(x_star)?;
        let mean = ks.tr_mul(&self.weights);
        Ok(mean.iter().map(|m| m + self.target_mean).collect())
    }

    pub fn predict(&self, x_star: &DMatrix<f64>) -> Result<Prediction> {
        let ks = self.cross_gram(x_star)?;
        let mean: Vec<f64> = ks
            .tr_mul(&self.weights)
            .iter()
            .map(|m| m + self.target_mean)
            .collect();
        let v = self
            .chol
            .solve_lower_triangular(&ks)
            .expect("non-singular factor");
        let prior = self.kernel.prior_variance();
        let mut variance = Vec::with_capacity(mean.len());
        for j in 0..v.ncols() {
            let var = prior - v.column(j).norm_squared();
            if var < -NEGATIVE_VARIANCE_TOLERANCE * prior.max(1.0) {
                return Err(Error::Conditioning {
                    message: format!("negative posterior variance {var:.3e} at test point {j}"),
                    jitter: vec![self.jitter],
                });
            }
            variance.push(var.max(0.0));
        }
        Ok(Prediction { mean, variance })
    }

    /// `1/2 y^T (K + sigma_n^2 I)^-1 y + 1/2 log|K + sigma_n^2 I| + n/2 log 2 pi`.
    pub fn nlml(&self) -> f64 {
        let n = self.n_train() as f64;
        0.5 * self.targets.dot(&self.weights)
            + 0.5 * log_det_from_chol(&self.chol)
            + 0.5 * n * (2.0 * PI).ln()
    }

    /// The three NLML terms `(model_fit, complexity, normalization)`.
    pub fn nlml_terms(&self) -> (f64, f64, f64) {
        (
            0.5 * self.targets.dot(&self.weights),
            0.5 * log_det_from_chol(&self.chol),
            0.5 * self.n_train() as f64 * (2.0 * PI).ln(),
        )
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            kernel: self.kernel,
            n: self.n_train(),
            d: self.input_dim(),
            target_mean: self.target_mean,
            jitter: self.jitter,
        };
        container::write_header(w, &header)?;
        container::write_f64s(w, self.inputs.transpose().as_slice())?;
        container::write_f64s(w, self.targets.as_slice())?;
        container::write_f64s(w, self.chol.transpose().as_slice())?;
        container::write_f64s(w, self.weights.as_slice())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h: ModelHeader = container::read_header(r)?;
        if h.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "expected {MODEL_FORMAT}, found {}",
                h.format
            )));
        }
        h.kernel.validate()?;
        let (n, d) = (h.n, h.d);
        let inputs = DMatrix::from_row_slice(n, d, &container::read_f64s(r, n * d)?);
        let targets = DVector::from_vec(container::read_f64s(r, n)?);
        let chol = DMatrix::from_row_slice(n, n, &container::read_f64s(r, n * n)?);
        let weights = DVector::from_vec(container::read_f64s(r, n)?);
        container::expect_eof(r)?;
        Ok(GprModel {
            inputs,
            targets,
            target_mean: h.target_mean,
            kernel: h.kernel,
            chol,
            weights,
            jitter: h.jitter,
        })
    }
}

const MODEL_FORMAT: &str = "csiloc-gpr-v1";

/// JSON header of a persisted [`GprModel`]. The payload follows as row-major
/// f64 blocks: inputs (n x d), centered targets (n), Cholesky factor (n x n),
/// weights (n).
#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    kernel: KernelSpec,
    n: usize,
    d: usize,
    target_mean: f64,
    jitter: f64,
}

/// NLML of `(x, y)` under `spec`, with targets centered by their mean.
pub fn nlml(x: &DMatrix<f64>, y: &[f64], spec: &KernelSpec) -> Result<f64> {
    Ok(fit(x, y, spec)?.nlml())
}

/// NLML and its gradient with respect to [`KernelSpec::log_params`].
///
/// Uses `dNLML/dtheta = 1/2 tr((K_y^-1 - w w^T) dK_y/dtheta)` with
/// `w = K_y^-1 y`.
pub fn nlml_gradient(x: &DMatrix<f64>, y: &[f64], spec: &KernelSpec) -> Result<(f64, Vec<f64>)> {
    let model = fit(x, y, spec)?;
    Ok((model.nlml(), gradient_of(&model)))
}

/// Inverse of a lower-triangular matrix, touching only the lower triangle.
fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = inv.column_mut(j);
        col[j] = 1.0;
        for k in j..n {
            let xk = col[k] / l[(k, k)];
            col[k] = xk;
            if xk != 0.0 {
                let lk = l.column(k);
                for i in k + 1..n {
                    col[i] -= xk * lk[i];
                }
            }
        }
    }
    inv
}

/// NLML gradient at an already fitted model.
pub fn gradient_of(model: &GprModel) -> Vec<f64> {
    let spec = &model.kernel;
    let n = model.n_train();
    let l_inv = invert_lower(&model.chol);
    let k_inv = l_inv.transpose() * &l_inv;
    let w = &model.weights;

    let a = model.inputs.transpose();
    let n_kernel = if spec.kind.has_mixture() { 3 } else { 2 };
    let mut acc = [0.0f64; 3];
    let mut g = [0.0f64; 3];
    for j in 0..n {
        let xj = a.column(j);
        let xj = xj.as_slice();
        // Diagonal (r = 0) counted once, off-diagonal twice by symmetry.
        for i in j..n {
            let r = distance_unchecked(a.column(i).as_slice(), xj);
            kernel_value_and_grad(spec, r, &mut g);
            let m = k_inv[(i, j)] - w[i] * w[j];
            let factor = if i == j { m } else { 2.0 * m };
            for p in 0..n_kernel {
                acc[p] += factor * g[p];
            }
        }
    }
    let noise_var = spec.noise_std * spec.noise_std;
    let noise_grad = noise_var * (k_inv.trace() - w.norm_squared());

    let mut grad = vec![0.5 * acc[0], 0.5 * acc[1], noise_grad];
    if spec.kind.has_mixture() {
        grad.push(0.5 * acc[2]);
    }
    grad
}
