//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use csiloc::gpr_core::{KernelForm, KernelKind, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Kernel value written straight from the formulas, one branch per kind.
pub fn kernel_oracle(spec: &KernelSpec, r: f64) -> f64 {
    let s2 = spec.signal_std.powi(2);
    let l = spec.length_scale;
    match spec.kind {
        KernelKind::SquaredExponential => s2 * (-(r.powi(2)) / (2.0 * l.powi(2))).exp(),
        KernelKind::Exponential => match spec.form {
            KernelForm::AsPrinted => s2 * (-r / (2.0 * l.powi(2))).exp(),
            KernelForm::Standard => s2 * (-r / l).exp(),
        },
        KernelKind::RationalQuadratic => {
            let a = spec.mixture.unwrap();
            let t = match spec.form {
                KernelForm::AsPrinted => r,
                KernelForm::Standard => r.powi(2),
            };
            s2 * (1.0 + t / (2.0 * a * l.powi(2))).powf(-a)
        }
        KernelKind::Matern32 => {
            let c = 3f64.sqrt() * r / l;
            s2 * (1.0 + c) * (-c).exp()
        }
        KernelKind::Matern52 => {
            let c = 5f64.sqrt() * r / l;
            s2 * (1.0 + c + 5.0 * r.powi(2) / (3.0 * l.powi(2))) * (-c).exp()
        }
    }
}

fn row_distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..a.ncols() {
        s += (a[(i, c)] - b[(j, c)]).powi(2);
    }
    s.sqrt()
}

pub fn gram_oracle(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernel_oracle(spec, row_distance(a, i, b, j))
    })
}

/// Posterior mean and variance through an explicit dense inverse.
pub fn dense_posterior(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    xs: &DMatrix<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
    let k = gram_oracle(spec, x, x) + DMatrix::identity(n, n) * spec.noise_std.powi(2);
    let k_inv = k.try_inverse().expect("invertible");
    let ks = gram_oracle(spec, x, xs);
    let mean = (ks.transpose() * &k_inv * &yc).map(|v| v + mean_y);
    let var: Vec<f64> = (0..xs.nrows())
        .map(|j| {
            let col = ks.column(j);
            spec.signal_std.powi(2) - (col.transpose() * &k_inv * col)[(0, 0)]
        })
        .collect();
    (mean.iter().copied().collect(), var)
}

/// NLML via a dense inverse and an LU determinant.
pub fn dense_nlml(spec: &KernelSpec, x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = x.nrows();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
    let k = gram_oracle(spec, x, x) + DMatrix::identity(n, n) * spec.noise_std.powi(2);
    let det = k.clone().lu().determinant();
    let k_inv = k.try_inverse().expect("invertible");
    0.5 * (yc.transpose() * k_inv * &yc)[(0, 0)] + 0.5 * det.ln() + 0.5 * n as f64 * (2.0 * PI).ln()
}

pub fn uniform_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0))
}

/// Draw targets from a zero-mean GP prior with the given kernel plus noise.
pub fn sample_gp(rng: &mut ChaCha8Rng, spec: &KernelSpec, x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let k = gram_oracle(spec, x, x) + DMatrix::identity(n, n) * 1e-10;
    let l = k.cholesky().expect("positive definite").unpack();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let f = l * z;
    f.iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + spec.noise_std * e
        })
        .collect()
}

/// Autoencoder forward pass with scalar loops.
pub fn forward_oracle(
    layers: &[(DMatrix<f64>, DVector<f64>)],
    input: &[f64],
    slope: f64,
    linear_last: bool,
) -> Vec<f64> {
    let mut h = input.to_vec();
    for (idx, (w, b)) in layers.iter().enumerate() {
        let mut out = vec![0.0; w.nrows()];
        for i in 0..w.nrows() {
            let mut s = b[i];
            for j in 0..w.ncols() {
                s += w[(i, j)] * h[j];
            }
            let last = idx + 1 == layers.len();
            out[i] = if (linear_last && last) || s > 0.0 {
                s
            } else {
                slope * s
            };
        }
        h = out;
    }
    h
}

/// Relative error with an absolute floor for tiny magnitudes.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
