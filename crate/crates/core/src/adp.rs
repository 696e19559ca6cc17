//! Angle-delay profiles.
//!
//! `A = |V^H H F|` maps the antenna x subcarrier CSI to a non-negative map
//! over angle bins (rows) and delay taps (columns). Both DFT matrices are
//! unitary, so the transform preserves the Frobenius norm.
//!
//! Under this sign convention a path whose delay is `n` taps lands in delay
//! column `(N_c - n) mod N_c`; see [`delay_bin_for_taps`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel_sim::ScenarioConfig;
use crate::error::{Error, Result};

/// Complex channel frequency response, `N_t` rows by `N_c` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix(DMatrix<Complex64>);

impl CsiMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Self {
        CsiMatrix(entries)
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn n_antennas(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.0.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Non-negative angle-delay profile, `N_t` rows by `N_c` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AdpMatrix(DMatrix<f64>);

impl AdpMatrix {
    pub fn new(entries: DMatrix<f64>) -> Self {
        AdpMatrix(entries)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Column-major concatenation, `vec(A)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `vec(A) / ||A||_F`, the form fed to the autoencoder and the GPR.
    pub fn normalized_vec(&self) -> Result<Vec<f64>> {
        let norm = self.frobenius_norm();
        if !(norm > 0.0) {
            return Err(Error::Domain("cannot normalize an all-zero ADP".into()));
        }
        Ok(self.0.iter().map(|v| v / norm).collect())
    }

    /// Row and column of the largest entry.
    pub fn argmax(&self) -> (usize, usize) {
        let (idx, _) = self
            .0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        (idx % self.0.nrows(), idx / self.0.nrows())
    }
}

/// Phase-shifted angle DFT: `V[z, q] = exp(-j 2 pi z (q - N_t/2) / N_t) / sqrt(N_t)`.
pub fn dft_v(n_antennas: usize) -> Result<DMatrix<Complex64>> {
    if n_antennas == 0 || !n_antennas.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "angle DFT needs a positive even antenna count, got {n_antennas}"
        )));
    }
    let n = n_antennas as f64;
    let half = n / 2.0;
    let scale = 1.0 / n.sqrt();
    Ok(DMatrix::from_fn(n_antennas, n_antennas, |z, q| {
        Complex64::from_polar(scale, -2.0 * PI * z as f64 * (q as f64 - half) / n)
    }))
}

/// Delay DFT: `F[z, q] = exp(-j 2 pi z q / N_c) / sqrt(N_c)`.
pub fn dft_f(n_subcarriers: usize) -> Result<DMatrix<Complex64>> {
    if n_subcarriers == 0 {
        return Err(Error::Config(
            "delay DFT needs at least one subcarrier".into(),
        ));
    }
    let n = n_subcarriers as f64;
    let scale = 1.0 / n.sqrt();
    Ok(DMatrix::from_fn(n_subcarriers, n_subcarriers, |z, q| {
        Complex64::from_polar(scale, -2.0 * PI * (z * q) as f64 / n)
    }))
}

/// Cached `V^H` and `F` for repeated transforms of one array geometry.
#[derive(Debug, Clone)]
pub struct AdpTransform {
    v_adjoint: DMatrix<Complex64>,
    f: DMatrix<Complex64>,
}

impl AdpTransform {
    pub fn new(n_antennas: usize, n_subcarriers: usize) -> Result<Self> {
        Ok(AdpTransform {
            v_adjoint: dft_v(n_antennas)?.adjoint(),
            f: dft_f(n_subcarriers)?,
        })
    }

    pub fn apply(&self, csi: &CsiMatrix) -> Result<AdpMatrix> {
        let h = csi.entries();
        if h.nrows() != self.v_adjoint.ncols() || h.ncols() != self.f.nrows() {
            return Err(Error::shape(
                format!("{}x{} CSI", self.v_adjoint.ncols(), self.f.nrows()),
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
        let beam = &self.v_adjoint * h * &self.f;
        Ok(AdpMatrix(beam.map(|v| v.norm())))
    }
}

/// `A = |V^H H F|`.
pub fn compute_adp(csi: &CsiMatrix) -> Result<AdpMatrix> {
    AdpTransform::new(csi.n_antennas(), csi.n_subcarriers())?.apply(csi)
}

/// Angle and delay associated with ADP bin `(q, z)`:
/// `theta_q = arccos((2q - N_t) / N_t)` and `tau_z = z T_s`.
pub fn bin_to_angle_delay(q: usize, z: usize, scenario: &ScenarioConfig) -> Result<(f64, f64)> {
    let (nt, nc) = (scenario.n_antennas, scenario.n_subcarriers);
    if q >= nt || z >= nc {
        return Err(Error::Domain(format!(
            "bin ({q}, {z}) outside {nt}x{nc} ADP"
        )));
    }
    let theta = ((2.0 * q as f64 - nt as f64) / nt as f64).acos();
    Ok((theta, z as f64 * scenario.sample_duration()))
}

/// Delay column where a path of `taps` sampled delay peaks.
pub fn delay_bin_for_taps(taps: usize, n_subcarriers: usize) -> usize {
    (n_subcarriers - taps % n_subcarriers) % n_subcarriers
}

/// Normalized correlation `a . b / (||a|| ||b||)` of two vectorized profiles.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::Domain("similarity of a zero-norm profile".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}
