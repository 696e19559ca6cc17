//! Offline training phases, gated online localization and the evaluation
//! harness.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adp::{compute_adp, CsiMatrix};
use crate::autoencoder::{self, score_reconstruction, AutoencoderConfig, AutoencoderModel};
use crate::channel_sim::{Point, ScenarioConfig};
use crate::dataset::{AdpDataset, CsiDataset};
use crate::error::{Error, Result};
use crate::gpr_core::{self, GprModel, KernelKind};
use crate::gpr_train::{
    optimize_hyperparams, train_position_models, OptimizationBudget, PositionModels,
    MIN_OPTIMIZE_SAMPLES,
};
use crate::seed::{derive_indexed, derive_seed, rng_from_seed};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Training fractions used in the reference experiments.
pub const REFERENCE_FRACTIONS: [f64; 6] = [0.10, 0.05, 0.01, 0.005, 0.0025, 0.001];

/// Anything that maps ADP vectors to codes and back.
/// Codes alongside the reconstructions they decode to.
pub type CodesAndReconstructions = (Vec<Vec<f64>>, Vec<Vec<f64>>);

pub trait Codec: Sync {
    fn input_width(&self) -> usize;
    fn encode(&self, adp_vector: &[f64]) -> Result<Vec<f64>>;
    fn decode(&self, code: &[f64]) -> Result<Vec<f64>>;

    /// Codes and reconstructions for many vectors.
    fn encode_decode_all(&self, vectors: &[Vec<f64>]) -> Result<CodesAndReconstructions> {
        let mut codes = Vec::with_capacity(vectors.len());
        let mut outs = Vec::with_capacity(vectors.len());
        for v in vectors {
            let c = self.encode(v)?;
            outs.push(self.decode(&c)?);
            codes.push(c);
        }
        Ok((codes, outs))
    }
}

impl Codec for AutoencoderModel {
    fn input_width(&self) -> usize {
        AutoencoderModel::input_width(self)
    }

    fn encode(&self, adp_vector: &[f64]) -> Result<Vec<f64>> {
        AutoencoderModel::encode(self, adp_vector)
    }

    fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        AutoencoderModel::decode(self, code)
    }

    fn encode_decode_all(&self, vectors: &[Vec<f64>]) -> Result<CodesAndReconstructions> {
        let width = self.input_width();
        if let Some(bad) = vectors.iter().find(|v| v.len() != width) {
            return Err(Error::shape(format!("width {width}"), bad.len()));
        }
        let x = DMatrix::from_fn(width, vectors.len(), |r, c| vectors[c][r]);
        let codes = self.encode_batch(&x)?;
        let outs = self.decode_batch(&codes)?;
        let cols = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.column_iter()
                .map(|c| c.iter().copied().collect())
                .collect()
        };
        Ok((cols(&codes), cols(&outs)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub n_trials: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

/// Disjoint train and test indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, n_trials: usize, rng_seed: u64) -> Result<Self> {
        let s = SplitSpec {
            train_fraction,
            n_trials,
            rng_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        Ok(())
    }

    /// `ceil(fraction * n)`, ignoring floating-point fuzz just above an integer.
    pub fn train_count(&self, n: usize) -> usize {
        let exact = self.train_fraction * n as f64;
        let rounded = exact.round();
        if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
            rounded as usize
        } else {
            exact.ceil() as usize
        }
    }

    /// Seeded split for one trial.
    pub fn split(&self, n: usize, trial: usize) -> Result<Split> {
        self.validate()?;
        let k = self.train_count(n);
        if k >= n {
            return Err(Error::Domain(format!(
                "fraction {} of {n} samples leaves nothing to test",
                self.train_fraction
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(derive_indexed(
            self.rng_seed,
            "split",
            trial as u64,
        )));
        let mut train = idx[..k].to_vec();
        let mut test = idx[k..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LocalizationOutcome {
    Estimate { position: Point, similarity: f64 },
    Rejected { similarity: f64 },
}

impl LocalizationOutcome {
    pub fn similarity(&self) -> f64 {
        match *self {
            LocalizationOutcome::Estimate { similarity, .. }
            | LocalizationOutcome::Rejected { similarity } => similarity,
        }
    }

    pub fn estimate(&self) -> Option<Point> {
        match *self {
            LocalizationOutcome::Estimate { position, .. } => Some(position),
            LocalizationOutcome::Rejected { .. } => None,
        }
    }
}

/// An estimate is trusted only when the similarity is strictly above the
/// threshold.
pub fn passes_gate(similarity: f64, threshold: f64) -> bool {
    similarity > threshold
}

/// Trains the autoencoder on one or more concatenated ADP datasets.
pub fn offline_phase1(
    datasets: &[&AdpDataset],
    config: &AutoencoderConfig,
) -> Result<AutoencoderModel> {
    config.validate()?;
    let mut vectors = Vec::new();
    for d in datasets {
        if d.input_width() != config.input_width {
            return Err(Error::shape(
                format!("ADP width {}", config.input_width),
                d.input_width(),
            ));
        }
        vectors.extend(d.normalized_vectors()?);
    }
    if vectors.is_empty() {
        return Err(Error::Domain("autoencoder training set is empty".into()));
    }
    autoencoder::train(config, &vectors)
}

/// GPR inputs: raw normalized ADP vectors, or their codes when a codec is given.
pub fn features<C: Codec + ?Sized>(
    codec: Option<&C>,
    vectors: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let rows = match codec {
        Some(c) => c.encode_decode_all(vectors)?.0,
        None => vectors.to_vec(),
    };
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

#[derive(Debug, Clone)]
pub struct Phase2Output {
    pub models: PositionModels,
    pub split: Split,
}

/// Trains the coordinate models on a seeded subsample of `data`.
pub fn offline_phase2<C: Codec + ?Sized>(
    codec: Option<&C>,
    data: &AdpDataset,
    split: &SplitSpec,
    trial: usize,
    budget: &OptimizationBudget,
) -> Result<Phase2Output> {
    if let Some(c) = codec {
        if c.input_width() != data.input_width() {
            return Err(Error::shape(
                format!("ADP width {}", c.input_width()),
                data.input_width(),
            ));
        }
    }
    let split_idx = split.split(data.len(), trial)?;
    if split_idx.train.len() < MIN_OPTIMIZE_SAMPLES {
        return Err(Error::Domain(format!(
            "fraction {} of {} samples gives {} training samples, need at least {MIN_OPTIMIZE_SAMPLES}",
            split.train_fraction,
            data.len(),
            split_idx.train.len()
        )));
    }
    let vectors: Vec<Vec<f64>> = split_idx
        .train
        .iter()
        .map(|&i| data.adps[i].normalized_vec())
        .collect::<Result<_>>()?;
    let positions: Vec<Point> = split_idx.train.iter().map(|&i| data.positions[i]).collect();
    let x = features(codec, &vectors)?;
    let trial_budget = budget.with_seed(derive_indexed(budget.rng_seed, "trial", trial as u64));
    let models = train_position_models(&x, &positions, &trial_budget)?;
    Ok(Phase2Output {
        models,
        split: split_idx,
    })
}

/// Single-CSI localization with the similarity gate.
pub fn online_localize<C: Codec + ?Sized>(
    codec: &C,
    gpr_x: &GprModel,
    gpr_y: &GprModel,
    csi: &CsiMatrix,
    threshold: f64,
) -> Result<LocalizationOutcome> {
    let v = compute_adp(csi)?.normalized_vec()?;
    localize_vector(codec, gpr_x, gpr_y, &v, threshold)
}

/// Gate and predict from a normalized ADP vector.
pub fn localize_vector<C: Codec + ?Sized>(
    codec: &C,
    gpr_x: &GprModel,
    gpr_y: &GprModel,
    adp_vector: &[f64],
    threshold: f64,
) -> Result<LocalizationOutcome> {
    let code = codec.encode(adp_vector)?;
    let similarity = score_reconstruction(adp_vector, &codec.decode(&code)?)?;
    if !passes_gate(similarity, threshold) {
        return Ok(LocalizationOutcome::Rejected { similarity });
    }
    let x = DMatrix::from_row_slice(1, code.len(), &code);
    let position = [gpr_x.predict_mean(&x)?[0], gpr_y.predict_mean(&x)?[0]];
    Ok(LocalizationOutcome::Estimate {
        position,
        similarity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse_m: f64,
    /// RMSE of predicting the training centroid everywhere.
    pub baseline_rmse_m: f64,
    pub kernel_x: KernelKind,
    pub kernel_y: KernelKind,
    pub degraded: bool,
    pub reject_rate: f64,
    pub fit_ms: f64,
    pub predict_ms: f64,
    /// Euclidean error of every test sample, in test-index order.
    pub errors_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigEcho {
    pub n_samples: usize,
    pub input_width: usize,
    pub split: SplitSpec,
    pub budget: OptimizationBudget,
    pub autoencoder: Option<AutoencoderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fraction: f64,
    pub bypass_ae: bool,
    pub threshold: f64,
    pub trials: Vec<TrialResult>,
    pub mean_rmse_m: f64,
    pub mean_baseline_rmse_m: f64,
    pub mean_reject_rate: f64,
    pub config: EvalConfigEcho,
}

pub const EVAL_CSV_HEADER: &str =
    "trial,fraction,rmse_m,kernel_x,kernel_y,reject_rate,fit_ms,predict_ms";

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for t in &self.trials {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                t.trial,
                self.fraction,
                t.rmse_m,
                t.kernel_x.name(),
                t.kernel_y.name(),
                t.reject_rate,
                t.fit_ms,
                t.predict_ms
            )?;
        }
        Ok(())
    }
}

/// Writes one CSV covering several reports.
pub fn write_eval_csv<W: Write>(reports: &[EvalReport], w: &mut W) -> Result<()> {
    writeln!(w, "{EVAL_CSV_HEADER}")?;
    for r in reports {
        r.write_csv_rows(w)?;
    }
    Ok(())
}

pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

fn euclidean(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Repeated train/test evaluation. With `codec = None` the GPR runs on raw
/// ADP vectors. RMSE covers every test sample regardless of the gate; the gate
/// only feeds the rejection rate.
pub fn evaluate<C: Codec + ?Sized>(
    data: &AdpDataset,
    codec: Option<&C>,
    split: &SplitSpec,
    budget: &OptimizationBudget,
    threshold: f64,
) -> Result<EvalReport> {
    split.validate()?;
    budget.validate()?;
    let vectors = data.normalized_vectors()?;
    let run = |trial: usize| -> Result<TrialResult> {
        let t0 = Instant::now();
        let phase2 = offline_phase2(codec, data, split, trial, budget)?;
        let fit_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let test_vectors: Vec<Vec<f64>> = phase2
            .split
            .test
            .iter()
            .map(|&i| vectors[i].clone())
            .collect();
        let (inputs, similarities) = match codec {
            Some(c) => {
                let (codes, outs) = c.encode_decode_all(&test_vectors)?;
                let sims = test_vectors
                    .iter()
                    .zip(&outs)
                    .map(|(v, o)| score_reconstruction(v, o))
                    .collect::<Result<Vec<f64>>>()?;
                (codes, Some(sims))
            }
            None => (test_vectors, None),
        };
        let d = inputs.first().map_or(0, Vec::len);
        let x = DMatrix::from_fn(inputs.len(), d, |i, j| inputs[i][j]);
        let predicted = phase2.models.predict(&x)?;
        let predict_ms = t1.elapsed().as_secs_f64() * 1e3;

        let truth: Vec<Point> = phase2
            .split
            .test
            .iter()
            .map(|&i| data.positions[i])
            .collect();
        let errors_m: Vec<f64> = predicted
            .iter()
            .zip(&truth)
            .map(|(p, t)| euclidean(*p, *t))
            .collect();
        let n_train = phase2.split.train.len() as f64;
        let centroid = phase2.split.train.iter().fold([0.0, 0.0], |acc, &i| {
            [
                acc[0] + data.positions[i][0] / n_train,
                acc[1] + data.positions[i][1] / n_train,
            ]
        });
        let baseline: Vec<f64> = truth.iter().map(|t| euclidean(centroid, *t)).collect();
        let reject_rate = similarities.map_or(0.0, |s| {
            s.iter().filter(|&&v| !passes_gate(v, threshold)).count() as f64 / s.len() as f64
        });
        Ok(TrialResult {
            trial,
            fraction: split.train_fraction,
            n_train: phase2.split.train.len(),
            n_test: phase2.split.test.len(),
            rmse_m: rmse(&errors_m),
            baseline_rmse_m: rmse(&baseline),
            kernel_x: phase2.models.report_x.winner,
            kernel_y: phase2.models.report_y.winner,
            degraded: phase2.models.report_x.degraded || phase2.models.report_y.degraded,
            reject_rate,
            fit_ms,
            predict_ms,
            errors_m,
        })
    };
    let mut trials = (0..split.n_trials)
        .into_par_iter()
        .map(run)
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| t.trial);

    let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
    Ok(EvalReport {
        fraction: split.train_fraction,
        bypass_ae: codec.is_none(),
        threshold,
        mean_rmse_m: mean(|t| t.rmse_m),
        mean_baseline_rmse_m: mean(|t| t.baseline_rmse_m),
        mean_reject_rate: mean(|t| t.reject_rate),
        config: EvalConfigEcho {
            n_samples: data.len(),
            input_width: data.input_width(),
            split: *split,
            budget: *budget,
            autoencoder: None,
        },
        trials,
    })
}

/// [`evaluate`] with the autoencoder configuration recorded in the report.
pub fn evaluate_with_autoencoder(
    data: &AdpDataset,
    ae: Option<&AutoencoderModel>,
    split: &SplitSpec,
    budget: &OptimizationBudget,
    threshold: f64,
) -> Result<EvalReport> {
    let mut report = evaluate(data, ae, split, budget, threshold)?;
    report.config.autoencoder = ae.map(|m| m.config().clone());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub n: usize,
    pub d: usize,
    pub median_ms: f64,
    pub runs_ms: Vec<f64>,
}

pub const TIMING_CSV_HEADER: &str = "n,d,median_ms,runs";

pub fn write_timing_csv<W: Write>(cells: &[TimingCell], w: &mut W) -> Result<()> {
    writeln!(w, "{TIMING_CSV_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.n, c.d, c.median_ms, c.runs_ms.len())?;
    }
    Ok(())
}

/// Scenario with a square `sqrt(d) x sqrt(d)` array, bandwidth scaled so the
/// delay span in meters matches `base`.
pub fn scenario_for_dim(base: &ScenarioConfig, d: usize) -> Result<ScenarioConfig> {
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d || !side.is_multiple_of(2) || side == 0 {
        return Err(Error::Config(format!(
            "ADP length {d} is not the square of an even size"
        )));
    }
    Ok(ScenarioConfig {
        n_antennas: side,
        n_subcarriers: side,
        bandwidth: base.bandwidth * side as f64 / base.n_subcarriers as f64,
        ..base.clone()
    })
}

/// Wall-clock time of hyperparameter search plus the final fit for a
/// squared-exponential x-coordinate model, median over `repetitions`.
pub fn timing_study(
    base: &ScenarioConfig,
    dims: &[usize],
    sizes: &[usize],
    budget: &OptimizationBudget,
    repetitions: usize,
) -> Result<Vec<TimingCell>> {
    if repetitions == 0 || dims.is_empty() || sizes.is_empty() {
        return Err(Error::Config(
            "timing study needs dims, sizes and at least one repetition".into(),
        ));
    }
    let mut cells = Vec::with_capacity(dims.len() * sizes.len());
    for &d in dims {
        let scenario = scenario_for_dim(base, d)?;
        let data = CsiDataset::generate(&scenario)?.to_adp()?;
        let vectors = data.normalized_vectors()?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(budget.rng_seed, "timing")));
        for &n in sizes {
            if n > data.len() || n < MIN_OPTIMIZE_SAMPLES {
                return Err(Error::Config(format!(
                    "sample size {n} outside [{MIN_OPTIMIZE_SAMPLES}, {}]",
                    data.len()
                )));
            }
            let x = DMatrix::from_fn(n, d, |i, j| vectors[order[i]][j]);
            let y: Vec<f64> = order[..n].iter().map(|&i| data.positions[i][0]).collect();
            let mut runs_ms = Vec::with_capacity(repetitions);
            for _ in 0..repetitions {
                let t = Instant::now();
                let opt = optimize_hyperparams(&x, &y, KernelKind::SquaredExponential, budget)?;
                gpr_core::fit(&x, &y, &opt.spec)?;
                runs_ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
            let mut sorted = runs_ms.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median_ms = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };
            log::info!("timing n={n} d={d}: {median_ms:.1} ms");
            cells.push(TimingCell {
                n,
                d,
                median_ms,
                runs_ms,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_counts() {
        let s = SplitSpec::new(0.10, 1, 0).unwrap();
        assert_eq!(s.train_count(72_400), 7_240);
        assert_eq!(
            SplitSpec::new(0.05, 1, 0).unwrap().train_count(72_400),
            3_620
        );
        assert_eq!(SplitSpec::new(0.01, 1, 0).unwrap().train_count(72_400), 724);
        assert_eq!(SplitSpec::new(0.001, 1, 0).unwrap().train_count(1_000), 1);
        assert_eq!(SplitSpec::new(0.001, 1, 0).unwrap().train_count(4_050), 5);
        assert!(SplitSpec::new(1.5, 1, 0).is_err());
        assert!(SplitSpec::new(0.0, 1, 0).is_err());
        assert!(SplitSpec::new(0.5, 0, 0).is_err());
    }

    #[test]
    fn split_is_disjoint_cover_and_seeded() {
        let s = SplitSpec::new(0.3, 3, 11).unwrap();
        let a = s.split(50, 0).unwrap();
        assert_eq!(a.train.len(), 15);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(a, s.split(50, 0).unwrap());
        assert_ne!(a, s.split(50, 1).unwrap());
    }

    #[test]
    fn gate_is_strict() {
        assert!(passes_gate(0.81, 0.8));
        assert!(!passes_gate(0.8, 0.8));
        assert!(!passes_gate(0.63, 0.8));
    }

    #[test]
    fn outcome_json_shape() {
        let o = LocalizationOutcome::Rejected { similarity: 0.5 };
        let json = serde_json::to_string(&o).unwrap();
        assert_eq!(json, r#"{"outcome":"rejected","similarity":0.5}"#);
        assert_eq!(o.estimate(), None);
    }

    #[test]
    fn rmse_formula() {
        assert_eq!(rmse(&[3.0, 4.0]), (12.5f64).sqrt());
    }

    #[test]
    fn dims_map_to_square_arrays() {
        let base = ScenarioConfig::default();
        let s = scenario_for_dim(&base, 64).unwrap();
        assert_eq!((s.n_antennas, s.n_subcarriers), (8, 8));
        assert!((s.meters_per_tap() * 8.0 - base.meters_per_tap() * 16.0).abs() < 1e-9);
        assert!(scenario_for_dim(&base, 20).is_err());
        assert!(scenario_for_dim(&base, 9).is_err());
    }
}
