//! Geo-tagged CSI and ADP datasets and their on-disk form.
//!
//! Each record is `x, y` followed by the matrix entries in column-major order.
//! CSI entries are stored as interleaved `re, im` pairs.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adp::{AdpMatrix, AdpTransform, CsiMatrix};
use crate::channel_sim::{self, GeoTaggedSample, Point, ScenarioConfig};
use crate::container;
use crate::error::{Error, Result};

const DATASET_FORMAT: &str = "csiloc-dataset-v1";
pub const CSI_DTYPE: &str = "csi-c64";
pub const ADP_DTYPE: &str = "adp-f64";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    dtype: String,
    n_records: usize,
    n_antennas: usize,
    n_subcarriers: usize,
    #[serde(default)]
    scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    /// Scenario the samples were generated from, when known.
    pub scenario: Option<ScenarioConfig>,
    pub samples: Vec<GeoTaggedSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdpDataset {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub scenario: Option<ScenarioConfig>,
    pub positions: Vec<Point>,
    pub adps: Vec<AdpMatrix>,
}

impl CsiDataset {
    pub fn generate(scenario: &ScenarioConfig) -> Result<Self> {
        Ok(CsiDataset {
            n_antennas: scenario.n_antennas,
            n_subcarriers: scenario.n_subcarriers,
            scenario: Some(scenario.clone()),
            samples: channel_sim::generate_dataset(scenario)?,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_adp(&self) -> Result<AdpDataset> {
        let transform = AdpTransform::new(self.n_antennas, self.n_subcarriers)?;
        let adps = self
            .samples
            .par_iter()
            .map(|s| transform.apply(&s.csi))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdpDataset {
            n_antennas: self.n_antennas,
            n_subcarriers: self.n_subcarriers,
            scenario: self.scenario.clone(),
            positions: self.samples.iter().map(|s| s.position).collect(),
            adps,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(
            w,
            CSI_DTYPE,
            self.len(),
            self.n_antennas,
            self.n_subcarriers,
            &self.scenario,
        )?;
        let mut rec = Vec::with_capacity(2 + 2 * self.n_antennas * self.n_subcarriers);
        for s in &self.samples {
            rec.clear();
            rec.extend_from_slice(&s.position);
            for v in s.csi.entries().iter() {
                rec.push(v.re);
                rec.push(v.im);
            }
            container::write_f64s(w, &rec)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h = read_header(r, CSI_DTYPE)?;
        let (nt, nc) = (h.n_antennas, h.n_subcarriers);
        let mut samples = Vec::with_capacity(h.n_records);
        for _ in 0..h.n_records {
            let rec = container::read_f64s(r, 2 + 2 * nt * nc)?;
            let entries = DMatrix::from_iterator(
                nt,
                nc,
                rec[2..].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])),
            );
            samples.push(GeoTaggedSample {
                position: [rec[0], rec[1]],
                csi: CsiMatrix::new(entries),
            });
        }
        container::expect_eof(r)?;
        Ok(CsiDataset {
            n_antennas: nt,
            n_subcarriers: nc,
            scenario: h.scenario,
            samples,
        })
    }
}

impl AdpDataset {
    pub fn len(&self) -> usize {
        self.adps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adps.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.n_antennas * self.n_subcarriers
    }

    /// Unit-Frobenius-norm vectorized ADPs.
    pub fn normalized_vectors(&self) -> Result<Vec<Vec<f64>>> {
        self.adps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.normalized_vec()
                    .map_err(|_| Error::Domain(format!("record {i} has an all-zero ADP")))
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(
            w,
            ADP_DTYPE,
            self.len(),
            self.n_antennas,
            self.n_subcarriers,
            &self.scenario,
        )?;
        for (p, a) in self.positions.iter().zip(&self.adps) {
            container::write_f64s(w, p)?;
            container::write_f64s(w, a.entries().as_slice())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h = read_header(r, ADP_DTYPE)?;
        let (nt, nc) = (h.n_antennas, h.n_subcarriers);
        let mut positions = Vec::with_capacity(h.n_records);
        let mut adps = Vec::with_capacity(h.n_records);
        for _ in 0..h.n_records {
            let rec = container::read_f64s(r, 2 + nt * nc)?;
            positions.push([rec[0], rec[1]]);
            adps.push(AdpMatrix::new(DMatrix::from_column_slice(
                nt,
                nc,
                &rec[2..],
            )));
        }
        container::expect_eof(r)?;
        Ok(AdpDataset {
            n_antennas: nt,
            n_subcarriers: nc,
            scenario: h.scenario,
            positions,
            adps,
        })
    }

    /// Concatenates datasets of equal ADP size.
    pub fn concat(parts: &[AdpDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("nothing to concatenate".into()))?;
        let mut out = AdpDataset {
            n_antennas: first.n_antennas,
            n_subcarriers: first.n_subcarriers,
            scenario: None,
            positions: Vec::new(),
            adps: Vec::new(),
        };
        for p in parts {
            if (p.n_antennas, p.n_subcarriers) != (out.n_antennas, out.n_subcarriers) {
                return Err(Error::shape(
                    format!("{}x{} ADPs", out.n_antennas, out.n_subcarriers),
                    format!("{}x{}", p.n_antennas, p.n_subcarriers),
                ));
            }
            out.positions.extend_from_slice(&p.positions);
            out.adps.extend(p.adps.iter().cloned());
        }
        Ok(out)
    }
}

/// Reads either kind of dataset file, converting CSI to ADPs.
pub fn read_as_adp<R: Read>(r: &mut R) -> Result<AdpDataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let h: DatasetHeader = container::read_header(&mut bytes.as_slice())?;
    match h.dtype.as_str() {
        CSI_DTYPE => CsiDataset::read_from(&mut bytes.as_slice())?.to_adp(),
        ADP_DTYPE => AdpDataset::read_from(&mut bytes.as_slice()),
        other => Err(Error::Format(format!("unknown dataset dtype {other:?}"))),
    }
}

fn write_header<W: Write>(
    w: &mut W,
    dtype: &str,
    n_records: usize,
    n_antennas: usize,
    n_subcarriers: usize,
    scenario: &Option<ScenarioConfig>,
) -> Result<()> {
    container::write_header(
        w,
        &DatasetHeader {
            format: DATASET_FORMAT.into(),
            dtype: dtype.into(),
            n_records,
            n_antennas,
            n_subcarriers,
            scenario: scenario.clone(),
        },
    )
}

fn read_header<R: Read>(r: &mut R, dtype: &str) -> Result<DatasetHeader> {
    let h: DatasetHeader = container::read_header(r)?;
    if h.format != DATASET_FORMAT {
        return Err(Error::Format(format!(
            "expected a {DATASET_FORMAT} file, found {}",
            h.format
        )));
    }
    if h.dtype != dtype {
        return Err(Error::Format(format!(
            "expected dtype {dtype}, found {}",
            h.dtype
        )));
    }
    Ok(h)
}
