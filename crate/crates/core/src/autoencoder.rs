//! Fully-connected autoencoder for vectorized ADPs, with hand-written
//! backpropagation and Adam.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

const MODEL_FORMAT: &str = "csiloc-ae-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    /// Length of the vectorized ADP.
    pub input_width: usize,
    /// Encoder widths ending at the bottleneck. The decoder mirrors them.
    pub layer_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub rng_seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_width: 256,
            layer_widths: vec![256, 144, 64, 16],
            leaky_slope: 0.01,
            learning_rate: 5e-4,
            epochs: 1000,
            batch_size: 256,
            adam: AdamParams::default(),
            rng_seed: 0,
        }
    }
}

impl AutoencoderConfig {
    /// Reference architecture for an `n_antennas x n_subcarriers` ADP. Only
    /// 16x16 and 8x8 inputs have one.
    pub fn for_adp(n_antennas: usize, n_subcarriers: usize) -> Result<Self> {
        let layer_widths = match (n_antennas, n_subcarriers) {
            (16, 16) => vec![256, 144, 64, 16],
            (8, 8) => vec![64, 36, 16],
            _ => {
                return Err(Error::Config(format!(
                    "no reference autoencoder for {n_antennas}x{n_subcarriers} ADPs"
                )))
            }
        };
        Ok(AutoencoderConfig {
            input_width: n_antennas * n_subcarriers,
            layer_widths,
            ..Default::default()
        })
    }

    pub fn code_width(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(0)
    }

    /// Widths of every activation from input to bottleneck.
    pub fn encoder_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_width)
            .chain(self.layer_widths.iter().copied())
            .collect()
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut d = self.encoder_dims();
        d.reverse();
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.layer_widths.is_empty() {
            return Err(Error::Config(
                "autoencoder needs an input width and at least one layer".into(),
            ));
        }
        let dims = self.encoder_dims();
        if dims[1] > dims[0] || dims.contains(&0) {
            return Err(Error::Config(format!(
                "first layer width {} exceeds the input width {}",
                dims[1], dims[0]
            )));
        }
        if dims[1..].windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!(
                "layer widths must shrink toward the bottleneck, got {:?}",
                self.layer_widths
            )));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config("leaky_slope must be >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::Config(
                "adam needs beta1, beta2 in [0, 1) and epsilon > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            weights: DMatrix::zeros(n_out, n_in),
            bias: DVector::zeros(n_out),
        }
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    config: AutoencoderConfig,
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
    history: Vec<f64>,
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

impl AutoencoderModel {
    /// Seeded uniform initialization in `+-1/sqrt(fan_in)`, zero biases.
    pub fn new(config: &AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.rng_seed, "ae_init"));
        let mut build = |dims: &[usize]| -> Vec<DenseLayer> {
            dims.windows(2)
                .map(|w| {
                    let bound = 1.0 / (w[0] as f64).sqrt();
                    let mut layer = DenseLayer::zeros(w[0], w[1]);
                    for v in layer.weights.iter_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                    layer
                })
                .collect()
        };
        let encoder = build(&config.encoder_dims());
        let decoder = build(&config.decoder_dims());
        Ok(AutoencoderModel {
            config: config.clone(),
            encoder,
            decoder,
            history: Vec::new(),
        })
    }

    /// A model with every weight and bias set to zero.
    pub fn zeroed(config: &AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let build = |dims: &[usize]| -> Vec<DenseLayer> {
            dims.windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect()
        };
        Ok(AutoencoderModel {
            config: config.clone(),
            encoder: build(&config.encoder_dims()),
            decoder: build(&config.decoder_dims()),
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    /// Mean training loss per epoch.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width
    }

    pub fn code_width(&self) -> usize {
        self.config.code_width()
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn n_parameters(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters flattened layer by layer: column-major weights, then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_parameters());
        for l in self.layers() {
            p.extend_from_slice(l.weights.as_slice());
            p.extend_from_slice(l.bias.as_slice());
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_parameters() {
            return Err(Error::shape(self.n_parameters(), p.len()));
        }
        let mut at = 0;
        for l in self.layers_mut() {
            let nw = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    fn check_batch(&self, x: &DMatrix<f64>, width: usize) -> Result<()> {
        if x.nrows() != width {
            return Err(Error::shape(format!("width {width}"), x.nrows()));
        }
        Ok(())
    }

    /// Encodes the columns of `x`.
    pub fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(x, self.input_width())?;
        let slope = self.config.leaky_slope;
        let mut h = x.clone();
        for l in &self.encoder {
            h = l.affine(&h).map(|v| leaky(v, slope));
        }
        Ok(h)
    }

    /// Decodes the columns of `codes`. The last layer is linear.
    pub fn decode_batch(&self, codes: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(codes, self.code_width())?;
        let slope = self.config.leaky_slope;
        let last = self.decoder.len() - 1;
        let mut h = codes.clone();
        for (i, l) in self.decoder.iter().enumerate() {
            h = l.affine(&h);
            if i < last {
                h.apply(|v| *v = leaky(*v, slope));
            }
        }
        Ok(h)
    }

    pub fn encode(&self, adp_vector: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(adp_vector.len(), 1, adp_vector);
        Ok(self.encode_batch(&x)?.as_slice().to_vec())
    }

    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(code.len(), 1, code);
        Ok(self.decode_batch(&x)?.as_slice().to_vec())
    }

    pub fn reconstruct(&self, adp_vector: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(adp_vector)?)
    }

    /// Reconstruction MSE over the columns of `x` and its gradient, flattened
    /// in [`AutoencoderModel::parameters`] order.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x, self.input_width())?;
        let (loss, grads) = self.backprop(x);
        let mut flat = Vec::with_capacity(self.n_parameters());
        for l in &grads {
            flat.extend_from_slice(l.weights.as_slice());
            flat.extend_from_slice(l.bias.as_slice());
        }
        Ok((loss, flat))
    }

    pub fn loss(&self, x: &DMatrix<f64>) -> Result<f64> {
        let out = self.decode_batch(&self.encode_batch(x)?)?;
        Ok((out - x).norm_squared() / x.len() as f64)
    }

    fn backprop(&self, x: &DMatrix<f64>) -> (f64, Vec<DenseLayer>) {
        let slope = self.config.leaky_slope;
        let layers: Vec<&DenseLayer> = self.layers().collect();
        let last = layers.len() - 1;

        // Inputs to each layer and their pre-activations.
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut h = x.clone();
        for (i, l) in layers.iter().enumerate() {
            let z = l.affine(&h);
            let next = if i < last {
                z.map(|v| leaky(v, slope))
            } else {
                z.clone()
            };
            inputs.push(h);
            pre.push(z);
            h = next;
        }

        let diff = h - x;
        let count = x.len() as f64;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);

        let mut grads = vec![None; layers.len()];
        for i in (0..layers.len()).rev() {
            if i < last {
                delta.zip_apply(&pre[i], |d, z| *d *= leaky_grad(z, slope));
            }
            let gw = &delta * inputs[i].transpose();
            let gb = delta.column_sum();
            if i > 0 {
                delta = layers[i].weights.tr_mul(&delta);
            }
            grads[i] = Some(DenseLayer {
                weights: gw,
                bias: gb,
            });
        }
        (
            loss,
            grads.into_iter().map(|g| g.expect("filled")).collect(),
        )
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            config: self.config.clone(),
            epochs_trained: self.history.len(),
            history: self.history.clone(),
        };
        container::write_header(w, &header)?;
        for l in self.layers() {
            let rows: Vec<f64> = l.weights.transpose().as_slice().to_vec();
            container::write_f64s(w, &rows)?;
            container::write_f64s(w, l.bias.as_slice())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header: ModelHeader = container::read_header(r)?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "expected a {MODEL_FORMAT} file, found {}",
                header.format
            )));
        }
        let mut model = AutoencoderModel::zeroed(&header.config)?;
        for l in model.layers_mut() {
            let (rows, cols) = l.weights.shape();
            let w = container::read_f64s(r, rows * cols)?;
            l.weights = DMatrix::from_row_slice(rows, cols, &w);
            l.bias = DVector::from_vec(container::read_f64s(r, rows)?);
        }
        container::expect_eof(r)?;
        model.history = header.history;
        Ok(model)
    }

    pub fn write_history_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "epoch,mean_loss")?;
        for (i, l) in self.history.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    config: AutoencoderConfig,
    epochs_trained: usize,
    history: Vec<f64>,
}

/// Adam state for a sequence of parameter tensors, addressed by slot.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    learning_rate: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: AdamParams, learning_rate: f64, sizes: &[usize]) -> Self {
        Adam {
            params,
            learning_rate,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advances the step counter. Call once per optimizer step, before the
    /// per-slot updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, slot: usize, theta: &mut [f64], grad: &[f64]) {
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let m = &mut self.first[slot];
        let v = &mut self.second[slot];
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

/// Trains a freshly initialized model on unit-norm ADP vectors.
pub fn train(config: &AutoencoderConfig, dataset: &[Vec<f64>]) -> Result<AutoencoderModel> {
    let model = AutoencoderModel::new(config)?;
    train_from(model, dataset)
}

/// Continues training `model` for `config.epochs` more epochs.
pub fn train_from(mut model: AutoencoderModel, dataset: &[Vec<f64>]) -> Result<AutoencoderModel> {
    let cfg = model.config.clone();
    if dataset.is_empty() {
        return Err(Error::Domain("autoencoder training set is empty".into()));
    }
    if let Some(bad) = dataset.iter().find(|v| v.len() != cfg.input_width) {
        return Err(Error::shape(
            format!("ADP vectors of length {}", cfg.input_width),
            bad.len(),
        ));
    }
    let n = dataset.len();
    let batch = cfg.batch_size.min(n);
    let sizes: Vec<usize> = model
        .layers()
        .flat_map(|l| [l.weights.len(), l.bias.len()])
        .collect();
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate, &sizes);
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, "ae_shuffle"));
    let mut order: Vec<usize> = (0..n).collect();
    let first_epoch = model.history.len();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let x = DMatrix::from_fn(cfg.input_width, chunk.len(), |r, c| dataset[chunk[c]][r]);
            let (loss, grads) = model.backprop(&x);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "autoencoder loss diverged at epoch {}",
                    first_epoch + epoch + 1
                )));
            }
            total += loss * chunk.len() as f64;
            adam.begin_step();
            for (i, (layer, g)) in model.layers_mut().zip(&grads).enumerate() {
                adam.update(2 * i, layer.weights.as_mut_slice(), g.weights.as_slice());
                adam.update(2 * i + 1, layer.bias.as_mut_slice(), g.bias.as_slice());
            }
        }
        let mean = total / n as f64;
        model.history.push(mean);
        if (epoch + 1) % 100 == 0 {
            log::info!(
                "autoencoder epoch {}: loss {mean:.3e}",
                first_epoch + epoch + 1
            );
        }
    }
    Ok(model)
}

/// Normalized correlation between an ADP vector and its reconstruction,
/// clamped to `[0, 1]`. A zero reconstruction scores 0.
pub fn reconstruction_similarity(model: &AutoencoderModel, adp_vector: &[f64]) -> Result<f64> {
    if !adp_vector.iter().any(|v| *v != 0.0) {
        return Err(Error::Domain("similarity of a zero-norm profile".into()));
    }
    score_reconstruction(adp_vector, &model.reconstruct(adp_vector)?)
}

/// Similarity between an input and its reconstruction, clamped to `[0, 1]`.
/// A zero reconstruction scores 0.
pub fn score_reconstruction(input: &[f64], output: &[f64]) -> Result<f64> {
    if !input.iter().any(|v| *v != 0.0) {
        return Err(Error::Domain("similarity of a zero-norm profile".into()));
    }
    if !output.iter().any(|v| *v != 0.0) {
        if input.len() != output.len() {
            return Err(Error::shape(input.len(), output.len()));
        }
        return Ok(0.0);
    }
    Ok(crate::adp::similarity(input, output)?.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> AutoencoderConfig {
        AutoencoderConfig {
            input_width: 6,
            layer_widths: vec![4, 2],
            batch_size: 4,
            epochs: 5,
            rng_seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn reference_shapes() {
        let cfg = AutoencoderConfig::for_adp(16, 16).unwrap();
        assert_eq!(cfg.encoder_dims(), vec![256, 256, 144, 64, 16]);
        assert_eq!(cfg.decoder_dims(), vec![16, 64, 144, 256, 256]);
        let m = AutoencoderModel::new(&cfg).unwrap();
        let code = m.encode(&vec![1.0 / 16.0; 256]).unwrap();
        assert_eq!(code.len(), 16);
        assert_eq!(m.decode(&code).unwrap().len(), 256);

        let cfg8 = AutoencoderConfig::for_adp(8, 8).unwrap();
        assert_eq!(cfg8.encoder_dims(), vec![64, 64, 36, 16]);
        assert!(AutoencoderConfig::for_adp(4, 4).is_err());
    }

    #[test]
    fn rejects_bad_widths() {
        let mut cfg = small_config();
        cfg.layer_widths = vec![4, 4];
        assert!(cfg.validate().is_err());
        cfg.layer_widths = vec![8, 2];
        assert!(cfg.validate().is_err());
        let m = AutoencoderModel::new(&small_config()).unwrap();
        assert!(matches!(m.encode(&[0.0; 5]), Err(Error::Shape { .. })));
        assert!(matches!(m.decode(&[0.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_model_gives_zero_code_and_output() {
        let m = AutoencoderModel::zeroed(&small_config()).unwrap();
        let x = [0.3, -0.1, 0.5, 0.2, 0.0, 0.7];
        assert!(m.encode(&x).unwrap().iter().all(|v| *v == 0.0));
        assert!(m.decode(&[0.4, 0.9]).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(reconstruction_similarity(&m, &x).unwrap(), 0.0);
        assert!(reconstruction_similarity(&m, &[0.0; 6]).is_err());
    }

    #[test]
    fn parameter_round_trip() {
        let mut m = AutoencoderModel::new(&small_config()).unwrap();
        let p = m.parameters();
        assert_eq!(p.len(), m.n_parameters());
        // 6->4->2 then 2->4->6
        assert_eq!(p.len(), (24 + 4) + (8 + 2) + (8 + 4) + (24 + 6));
        let q: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        m.set_parameters(&q).unwrap();
        assert_eq!(m.parameters(), q);
        assert!(m.set_parameters(&q[1..]).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let data: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..6).map(|j| ((i * 6 + j) as f64).sin().abs()).collect())
            .collect();
        let m = train(&small_config(), &data).unwrap();
        assert_eq!(m.history().len(), 5);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = AutoencoderModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);

        let mut csv = Vec::new();
        m.write_history_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("epoch,mean_loss\n1,"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let mut cfg = small_config();
        cfg.learning_rate = 0.0;
        let data = vec![vec![0.5, 0.1, 0.2, 0.3, 0.0, 0.4]; 3];
        let before = AutoencoderModel::new(&cfg).unwrap();
        let after = train(&cfg, &data).unwrap();
        assert_eq!(before.parameters(), after.parameters());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(train(&small_config(), &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..6).map(|j| ((i + 2 * j) as f64).cos().abs()).collect())
            .collect();
        let a = train(&small_config(), &data).unwrap();
        let b = train(&small_config(), &data).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_eq!(a.history(), b.history());
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut cfg = small_config();
        cfg.learning_rate = 1e300;
        cfg.epochs = 50;
        let data = vec![vec![1e200, 1.0, 1.0, 1.0, 1.0, 1.0]];
        match train(&cfg, &data) {
            Err(Error::Training(msg)) => assert!(msg.contains("epoch"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
