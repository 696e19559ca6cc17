//! Deterministic geometric multipath channel synthesis.
//!
//! A single base station with a uniform linear array (aligned with the y-axis)
//! serves a planar grid of user positions. Each user sees one line-of-sight
//! path plus one single-bounce path per point scatterer. Path delays are
//! quantized to whole sampling periods and the resulting channel frequency
//! response is assembled subcarrier by subcarrier.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adp::CsiMatrix;
use crate::error::{Error, Result};
use crate::seed;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Amplitude factor applied once per reflection.
pub const REFLECTION_ATTENUATION: f64 = 0.5;

/// Planar position in meters, `[x, y]`.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz. The sampling period is its reciprocal.
    pub bandwidth: f64,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    /// Meters; half a wavelength when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antenna_spacing: Option<f64>,
    pub bs_position: Point,
    pub scatterer_positions: Vec<Point>,
    pub grid_origin: Point,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub grid_spacing: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    /// A 16x16 street-corner scene: 3.5 GHz, 100 MHz, a 50 x 40 grid at 20 cm
    /// and eight scatterers around it.
    fn default() -> Self {
        ScenarioConfig {
            carrier_frequency: 3.5e9,
            bandwidth: 100e6,
            n_antennas: 16,
            n_subcarriers: 16,
            antenna_spacing: None,
            bs_position: [0.0, 0.0],
            scatterer_positions: vec![
                [4.0, 9.0],
                [9.0, -7.5],
                [14.0, 8.0],
                [18.0, -3.0],
                [6.5, -10.0],
                [12.0, 11.5],
                [2.5, -4.0],
                [16.5, 4.5],
            ],
            grid_origin: [6.0, -4.0],
            grid_rows: 50,
            grid_cols: 40,
            grid_spacing: 0.2,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn spacing(&self) -> f64 {
        self.antenna_spacing
            .unwrap_or_else(|| self.wavelength() / 2.0)
    }

    /// Sampling period `T_s = 1 / bandwidth`, seconds.
    pub fn sample_duration(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// `f = 1 / (N_c T_s) = bandwidth / N_c`, Hz.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    /// Distance light travels in one sampling period.
    pub fn meters_per_tap(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_duration()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Grid positions in row-major order; row index advances along y.
    pub fn grid_positions(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.grid_len());
        for r in 0..self.grid_rows {
            for c in 0..self.grid_cols {
                out.push([
                    self.grid_origin[0] + c as f64 * self.grid_spacing,
                    self.grid_origin[1] + r as f64 * self.grid_spacing,
                ]);
            }
        }
        out
    }

    fn grid_corners(&self) -> [Point; 4] {
        let x1 = self.grid_origin[0] + self.grid_cols.saturating_sub(1) as f64 * self.grid_spacing;
        let y1 = self.grid_origin[1] + self.grid_rows.saturating_sub(1) as f64 * self.grid_spacing;
        let [x0, y0] = self.grid_origin;
        [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
    }

    pub fn quantize_delay(&self, length: f64) -> usize {
        (length / self.meters_per_tap()).round() as usize
    }

    /// Checks radio parameters and that every path reaching the grid fits in
    /// the delay budget. Path lengths are convex in the user position, so the
    /// grid corners bound them.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth", self.bandwidth),
            ("grid_spacing", self.grid_spacing),
            ("antenna_spacing", self.spacing()),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.n_antennas < 2 {
            return Err(Error::Config(format!(
                "n_antennas must be >= 2, got {}",
                self.n_antennas
            )));
        }
        if self.n_subcarriers < 2 {
            return Err(Error::Config(format!(
                "n_subcarriers must be >= 2, got {}",
                self.n_subcarriers
            )));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Config(
                "grid must have at least one row and column".into(),
            ));
        }
        let points = self
            .bs_position
            .iter()
            .chain(self.grid_origin.iter())
            .chain(self.scatterer_positions.iter().flatten());
        if points.clone().any(|v| !v.is_finite()) {
            return Err(Error::Config("positions must be finite".into()));
        }

        for (i, s) in self.scatterer_positions.iter().enumerate() {
            if distance(self.bs_position, *s) < 1e-9 {
                return Err(Error::Config(format!(
                    "scatterer {i} at {s:?} coincides with the base station"
                )));
            }
        }
        for corner in self.grid_corners() {
            if distance(self.bs_position, corner) < 1e-9 {
                return Err(Error::Config("base station lies on the user grid".into()));
            }
            let n = self.quantize_delay(distance(self.bs_position, corner));
            if n >= self.n_subcarriers {
                return Err(Error::Config(format!(
                    "line-of-sight path to grid corner {corner:?} has delay {n} taps >= N_c = {}",
                    self.n_subcarriers
                )));
            }
            for (i, s) in self.scatterer_positions.iter().enumerate() {
                let n = self.quantize_delay(bounce_length(self.bs_position, *s, corner));
                if n >= self.n_subcarriers {
                    return Err(Error::Config(format!(
                        "scatterer {i} at {s:?}: path to grid corner {corner:?} has delay {n} taps >= N_c = {}",
                        self.n_subcarriers
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replace the scatterers with `count` points drawn from `rng_seed`,
    /// uniformly in the grid's bounding box grown by `margin` meters, keeping
    /// only placements that respect the delay budget and sit at least 1 m
    /// from the base station.
    pub fn with_random_scatterers(mut self, count: usize, margin: f64) -> Result<Self> {
        let mut rng = seed::rng_from_seed(seed::derive_seed(self.rng_seed, "scatterers"));
        let corners = self.grid_corners();
        let (lo_x, hi_x) = (corners[0][0] - margin, corners[3][0] + margin);
        let (lo_y, hi_y) = (corners[0][1] - margin, corners[3][1] + margin);
        self.scatterer_positions.clear();
        let mut attempts = 0usize;
        while self.scatterer_positions.len() < count {
            attempts += 1;
            if attempts > 10_000 * count.max(1) {
                return Err(Error::Config(format!(
                    "could not place {count} scatterers inside the delay budget"
                )));
            }
            let s = [rng.random_range(lo_x..=hi_x), rng.random_range(lo_y..=hi_y)];
            if distance(self.bs_position, s) < 1.0 {
                continue;
            }
            let fits = self.grid_corners().iter().all(|&c| {
                self.quantize_delay(bounce_length(self.bs_position, s, c)) < self.n_subcarriers
            });
            if fits {
                self.scatterer_positions.push(s);
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    /// Delay in whole sampling periods, `n_m`.
    pub sampled_delay: usize,
    /// Angle of arrival at the array, radians in `[0, pi]`, measured from
    /// the array axis.
    pub aoa: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoTaggedSample {
    pub position: Point,
    pub csi: CsiMatrix,
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn bounce_length(bs: Point, scatterer: Point, user: Point) -> f64 {
    distance(bs, scatterer) + distance(scatterer, user)
}

/// Angle between the y-aligned array axis and the direction `from -> to`.
fn arrival_angle(from: Point, to: Point) -> f64 {
    let d = distance(from, to);
    ((to[1] - from[1]) / d).clamp(-1.0, 1.0).acos()
}

/// ULA steering vector: element `k` is `exp(-j 2 pi k d cos(theta) / lambda)`.
pub fn array_response(
    theta: f64,
    n_antennas: usize,
    spacing: f64,
    wavelength: f64,
) -> Result<DVector<Complex64>> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::Domain(format!("angle {theta} outside [0, pi]")));
    }
    if !(wavelength > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let step = -2.0 * std::f64::consts::PI * spacing * theta.cos() / wavelength;
    Ok(DVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|k| Complex64::from_polar(1.0, step * k as f64)),
    ))
}

fn path_gain(length: f64, wavelength: f64, bounces: i32) -> Complex64 {
    let phase = -2.0 * std::f64::consts::PI * length / wavelength;
    Complex64::from_polar(REFLECTION_ATTENUATION.powi(bounces) / length, phase)
}

/// Line-of-sight path followed by one single-bounce path per scatterer, in
/// scatterer order.
pub fn synthesize_paths(scenario: &ScenarioConfig, user: Point) -> Result<Vec<PathComponent>> {
    let bs = scenario.bs_position;
    let wavelength = scenario.wavelength();
    let los = distance(bs, user);
    if los < 1e-9 {
        return Err(Error::Domain(format!(
            "user at {user:?} coincides with the base station"
        )));
    }
    let n = scenario.quantize_delay(los);
    if n >= scenario.n_subcarriers {
        return Err(Error::Config(format!(
            "line-of-sight path to {user:?} has delay {n} taps >= N_c = {}",
            scenario.n_subcarriers
        )));
    }
    let mut paths = Vec::with_capacity(1 + scenario.scatterer_positions.len());
    paths.push(PathComponent {
        sampled_delay: n,
        aoa: arrival_angle(bs, user),
        gain: path_gain(los, wavelength, 0),
    });
    for (i, &s) in scenario.scatterer_positions.iter().enumerate() {
        let length = bounce_length(bs, s, user);
        let n = scenario.quantize_delay(length);
        if n >= scenario.n_subcarriers {
            return Err(Error::Config(format!(
                "scatterer {i} at {s:?}: path to {user:?} has delay {n} taps >= N_c = {}",
                scenario.n_subcarriers
            )));
        }
        paths.push(PathComponent {
            sampled_delay: n,
            aoa: arrival_angle(bs, s),
            gain: path_gain(length, wavelength, 1),
        });
    }
    Ok(paths)
}

/// Channel frequency response. Column `c` holds subcarrier `l = c + 1`:
/// `h[l] = sum_m alpha_m e(theta_m) exp(-j 2 pi l n_m / N_c)`.
pub fn csi_from_paths(paths: &[PathComponent], scenario: &ScenarioConfig) -> Result<CsiMatrix> {
    if paths.is_empty() {
        return Err(Error::Domain("empty path list".into()));
    }
    let (nt, nc) = (scenario.n_antennas, scenario.n_subcarriers);
    let mut h = DMatrix::<Complex64>::zeros(nt, nc);
    for p in paths {
        if p.sampled_delay >= nc {
            return Err(Error::Domain(format!(
                "sampled delay {} >= N_c = {nc}",
                p.sampled_delay
            )));
        }
        let e = array_response(p.aoa, nt, scenario.spacing(), scenario.wavelength())?;
        let step = -2.0 * std::f64::consts::PI * p.sampled_delay as f64 / nc as f64;
        for c in 0..nc {
            let tone = p.gain * Complex64::from_polar(1.0, step * (c + 1) as f64);
            for (k, ek) in e.iter().enumerate() {
                h[(k, c)] += ek * tone;
            }
        }
    }
    Ok(CsiMatrix::new(h))
}

/// One sample per grid point, row-major.
pub fn generate_dataset(scenario: &ScenarioConfig) -> Result<Vec<GeoTaggedSample>> {
    scenario.validate()?;
    scenario
        .grid_positions()
        .into_iter()
        .map(|position| {
            let paths = synthesize_paths(scenario, position)?;
            Ok(GeoTaggedSample {
                position,
                csi: csi_from_paths(&paths, scenario)?,
            })
        })
        .collect()
}
