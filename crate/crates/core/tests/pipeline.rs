use csiloc::adp::CsiMatrix;
use csiloc::autoencoder::{self, reconstruction_similarity, AutoencoderConfig, AutoencoderModel};
use csiloc::channel_sim::ScenarioConfig;
use csiloc::dataset::{AdpDataset, CsiDataset};
use csiloc::gpr_core::{self, KernelKind, KernelSpec};
use csiloc::gpr_train::OptimizationBudget;
use csiloc::pipeline::{
    self, evaluate, evaluate_with_autoencoder, localize_vector, offline_phase1, offline_phase2,
    online_localize, passes_gate, rmse, timing_study, Codec, LocalizationOutcome, SplitSpec,
};
use csiloc::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

/// Passes codes through unchanged and decodes to a vector whose similarity
/// with the two-element input `[1, 0]` is exactly `cos`.
struct FixedSimilarity {
    cos: f64,
}

impl Codec for FixedSimilarity {
    fn input_width(&self) -> usize {
        2
    }

    fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }

    fn decode(&self, _code: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.cos, (1.0 - self.cos * self.cos).max(0.0).sqrt()])
    }
}

fn stub_models() -> (gpr_core::GprModel, gpr_core::GprModel) {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
    let spec = KernelSpec::new(KernelKind::SquaredExponential, 1.0, 1.0, 0.1);
    (
        gpr_core::fit(&x, &[1.0, 2.0, 3.0], &spec).unwrap(),
        gpr_core::fit(&x, &[-1.0, 0.0, 1.0], &spec).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gate_returns_estimate_iff_similarity_exceeds_threshold(
        cos in 0.0f64..=1.0,
        threshold in 0.0f64..=1.0,
        on_boundary in any::<bool>(),
    ) {
        let (gx, gy) = stub_models();
        let codec = FixedSimilarity { cos };
        let s = csiloc::autoencoder::score_reconstruction(&[1.0, 0.0], &codec.decode(&[])?)?;
        let threshold = if on_boundary { s } else { threshold };
        let out = localize_vector(&codec, &gx, &gy, &[1.0, 0.0], threshold)?;
        prop_assert_eq!(out.similarity(), s);
        prop_assert_eq!(out.estimate().is_some(), s > threshold);
        prop_assert_eq!(out.estimate().is_some(), passes_gate(s, threshold));
        if on_boundary {
            prop_assert!(out.estimate().is_none());
        }
    }

    #[test]
    fn splits_partition_the_dataset(
        n in 1usize..3000,
        fraction in 0.001f64..0.999,
        trial in 0usize..50,
        seed in any::<u64>(),
    ) {
        let spec = SplitSpec::new(fraction, 50, seed)?;
        if spec.train_count(n) >= n {
            prop_assert!(spec.split(n, trial).is_err());
            return Ok(());
        }
        let s = spec.split(n, trial)?;
        prop_assert_eq!(s.train.len(), spec.train_count(n));
        let exact = fraction * n as f64;
        prop_assert!(s.train.len() as f64 >= exact - 1e-6 && (s.train.len() as f64) < exact + 1.0);
        let mut seen = vec![false; n];
        for &i in s.train.iter().chain(&s.test) {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        prop_assert!(seen.iter().all(|&b| b));
    }
}

#[test]
fn gate_boundary_cases() {
    let (gx, gy) = stub_models();
    let accepted = FixedSimilarity { cos: 1.0 };
    let out = localize_vector(&accepted, &gx, &gy, &[1.0, 0.0], 0.8).unwrap();
    assert!(matches!(out, LocalizationOutcome::Estimate { .. }));
    let out = localize_vector(&accepted, &gx, &gy, &[1.0, 0.0], 1.0).unwrap();
    assert!(matches!(out, LocalizationOutcome::Rejected { similarity } if similarity == 1.0));

    // An out-of-distribution profile reconstructed at 0.63 is turned away.
    let ood = FixedSimilarity { cos: 0.63 };
    let out = localize_vector(&ood, &gx, &gy, &[1.0, 0.0], pipeline::DEFAULT_THRESHOLD).unwrap();
    assert_eq!(out.estimate(), None);
    assert!((out.similarity() - 0.63).abs() < 1e-12);
}

fn scenario_4x4(rows: usize, cols: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_antennas: 4,
        n_subcarriers: 4,
        bandwidth: 25e6,
        grid_rows: rows,
        grid_cols: cols,
        grid_spacing: 8.0 / rows.max(cols) as f64,
        ..ScenarioConfig::default()
    }
}

fn scenario_8x8(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_antennas: 8,
        n_subcarriers: 8,
        bandwidth: 50e6,
        grid_rows: 20,
        grid_cols: 20,
        grid_spacing: 0.3,
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

fn adp_data(scenario: &ScenarioConfig) -> AdpDataset {
    CsiDataset::generate(scenario).unwrap().to_adp().unwrap()
}

fn small_budget() -> OptimizationBudget {
    OptimizationBudget {
        n_restarts: 1,
        max_iterations: 10,
        ..OptimizationBudget::default()
    }
}

#[test]
fn training_counts() {
    let spec = SplitSpec::new(0.10, 1, 0).unwrap();
    assert_eq!(spec.train_count(72_400), 7240);
    assert_eq!(
        SplitSpec::new(0.05, 1, 0).unwrap().train_count(72_400),
        3620
    );
    assert_eq!(SplitSpec::new(0.01, 1, 0).unwrap().train_count(72_400), 724);
    assert!(SplitSpec::new(1.0, 1, 0).is_err());
    assert!(SplitSpec::new(0.0, 1, 0).is_err());
    assert!(SplitSpec::new(0.5, 0, 0).is_err());
}

#[test]
fn subsample_is_seeded() {
    let spec = SplitSpec::new(0.1, 5, 42).unwrap();
    assert_eq!(spec.split(500, 3).unwrap(), spec.split(500, 3).unwrap());
    assert_ne!(spec.split(500, 3).unwrap(), spec.split(500, 4).unwrap());
    let other = SplitSpec::new(0.1, 5, 43).unwrap();
    assert_ne!(spec.split(500, 3).unwrap(), other.split(500, 3).unwrap());
}

#[test]
fn too_few_training_samples_is_an_error() {
    let data = adp_data(&scenario_4x4(40, 25));
    assert_eq!(data.len(), 1000);
    let split = SplitSpec::new(0.001, 1, 0).unwrap();
    let r = offline_phase2::<AutoencoderModel>(None, &data, &split, 0, &small_budget());
    assert!(matches!(r, Err(Error::Domain(_))));
}

#[test]
fn report_statistics_are_consistent() {
    let data = adp_data(&scenario_4x4(12, 10));
    let split = SplitSpec::new(0.25, 3, 5).unwrap();
    let budget = small_budget().with_seed(5);
    let report = evaluate::<AutoencoderModel>(&data, None, &split, &budget, 0.8).unwrap();
    assert!(report.bypass_ae);
    assert_eq!(report.trials.len(), 3);

    let mut mean = 0.0;
    for (i, t) in report.trials.iter().enumerate() {
        assert_eq!(t.trial, i);
        assert_eq!(t.n_train, 30);
        assert_eq!(t.n_test, 90);
        assert_eq!(t.errors_m.len(), t.n_test);
        assert_eq!(t.reject_rate, 0.0);
        let recomputed =
            (t.errors_m.iter().map(|e| e * e).sum::<f64>() / t.errors_m.len() as f64).sqrt();
        assert!((recomputed - t.rmse_m).abs() < 1e-12);
        assert_eq!(rmse(&t.errors_m), t.rmse_m);

        let s = split.split(data.len(), i).unwrap();
        let c = s.train.iter().fold([0.0, 0.0], |a, &j| {
            [a[0] + data.positions[j][0], a[1] + data.positions[j][1]]
        });
        let c = [c[0] / s.train.len() as f64, c[1] / s.train.len() as f64];
        let sq: f64 = s
            .test
            .iter()
            .map(|&j| (data.positions[j][0] - c[0]).powi(2) + (data.positions[j][1] - c[1]).powi(2))
            .sum();
        assert!((t.baseline_rmse_m - (sq / s.test.len() as f64).sqrt()).abs() < 1e-12);
        mean += t.rmse_m / 3.0;
    }
    assert!((report.mean_rmse_m - mean).abs() < 1e-12);
    assert!(report.mean_rmse_m < report.mean_baseline_rmse_m);

    let again = evaluate::<AutoencoderModel>(&data, None, &split, &budget, 0.8).unwrap();
    for (a, b) in again.trials.iter().zip(&report.trials) {
        assert_eq!(a.errors_m, b.errors_m);
        assert_eq!((a.kernel_x, a.kernel_y), (b.kernel_x, b.kernel_y));
    }

    let mut csv = Vec::new();
    pipeline::write_eval_csv(&[report.clone(), again], &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), pipeline::EVAL_CSV_HEADER);
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn raw_models_fit_training_positions_better_than_held_out() {
    let data = adp_data(&scenario_4x4(40, 181));
    assert_eq!(data.input_width(), 16);
    let split = SplitSpec::new(0.1, 1, 9).unwrap();
    assert_eq!(split.train_count(data.len()), 724);
    let out = offline_phase2::<AutoencoderModel>(None, &data, &split, 0, &small_budget()).unwrap();
    let vectors = data.normalized_vectors().unwrap();
    let err = |idx: &[usize]| {
        let x = DMatrix::from_fn(idx.len(), 16, |i, j| vectors[idx[i]][j]);
        let p = out.models.predict(&x).unwrap();
        let e: Vec<f64> = idx
            .iter()
            .zip(&p)
            .map(|(&i, q)| (q[0] - data.positions[i][0]).hypot(q[1] - data.positions[i][1]))
            .collect();
        rmse(&e)
    };
    let train = err(&out.split.train);
    let held_out = err(&out.split.test[..2000]);
    assert!(train < held_out, "train {train} vs held-out {held_out}");
}

fn pool_vectors(
    seeds: std::ops::RangeInclusive<u64>,
    base: impl Fn(u64) -> ScenarioConfig,
    n_scatterers: usize,
) -> Vec<AdpDataset> {
    seeds
        .map(|s| {
            let sc = base(s).with_random_scatterers(n_scatterers, 3.0).unwrap();
            let full = adp_data(&sc);
            let keep: Vec<usize> = (0..full.len()).step_by(8).collect();
            AdpDataset {
                positions: keep.iter().map(|&i| full.positions[i]).collect(),
                adps: keep.iter().map(|&i| full.adps[i].clone()).collect(),
                ..full
            }
        })
        .collect()
}

fn mean_similarity(ae: &AutoencoderModel, sets: &[AdpDataset]) -> f64 {
    let v: Vec<Vec<f64>> = sets
        .iter()
        .flat_map(|d| d.normalized_vectors().unwrap())
        .collect();
    v.iter()
        .map(|x| reconstruction_similarity(ae, x).unwrap())
        .sum::<f64>()
        / v.len() as f64
}

fn ae_config() -> AutoencoderConfig {
    AutoencoderConfig {
        epochs: 200,
        batch_size: 32,
        learning_rate: 1e-3,
        ..AutoencoderConfig::for_adp(8, 8).unwrap()
    }
}

#[test]
fn autoencoder_transfers_across_scenarios() {
    let pool = pool_vectors(1..=20, scenario_8x8, 4);
    let refs: Vec<&AdpDataset> = pool.iter().collect();
    let ae = offline_phase1(&refs, &ae_config()).unwrap();

    let unseen = pool_vectors(100..=100, scenario_8x8, 4);
    let inside = mean_similarity(&ae, &pool);
    let across = mean_similarity(&ae, &unseen);
    assert!(
        (inside - across).abs() <= 0.05,
        "in-pool {inside} vs unseen {across}"
    );

    // A scene with the base station on the other side and twice the clutter.
    let moved = |s: u64| ScenarioConfig {
        bs_position: [20.0, 0.0],
        ..scenario_8x8(s)
    };
    let mut wider = pool.clone();
    wider.extend(pool_vectors(200..=209, moved, 8));
    let refs: Vec<&AdpDataset> = wider.iter().collect();
    let ae_wider = offline_phase1(&refs, &ae_config()).unwrap();
    let inside_wider = mean_similarity(&ae_wider, &pool);
    assert!(
        inside - inside_wider <= 0.02,
        "similarity on the original pool fell from {inside} to {inside_wider}"
    );
}

#[test]
fn phase1_rejects_bad_inputs() {
    let data = adp_data(&scenario_4x4(3, 3));
    let err = offline_phase1(&[&data], &ae_config()).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
    assert!(offline_phase1(&[], &ae_config()).is_err());
}

#[test]
fn online_and_batch_paths_agree() {
    let scenario = scenario_8x8(3).with_random_scatterers(4, 3.0).unwrap();
    let csi = CsiDataset::generate(&scenario).unwrap();
    let data = csi.to_adp().unwrap();
    let config = AutoencoderConfig {
        epochs: 100,
        ..ae_config()
    };
    let ae = autoencoder::train(&config, &data.normalized_vectors().unwrap()).unwrap();
    let split = SplitSpec::new(0.2, 1, 1).unwrap();
    let out = offline_phase2(Some(&ae), &data, &split, 0, &small_budget()).unwrap();
    assert_eq!(out.models.x.input_dim(), 16);

    let test: Vec<usize> = out.split.test.iter().copied().take(20).collect();
    let vectors: Vec<Vec<f64>> = test
        .iter()
        .map(|&i| data.adps[i].normalized_vec().unwrap())
        .collect();
    let codes = pipeline::features(Some(&ae), &vectors).unwrap();
    let batch = out.models.predict(&codes).unwrap();
    for (k, &i) in test.iter().enumerate() {
        let online =
            online_localize(&ae, &out.models.x, &out.models.y, &csi.samples[i].csi, -1.0).unwrap();
        let p = online.estimate().expect("gate disabled");
        assert!((p[0] - batch[k][0]).abs() < 1e-9 && (p[1] - batch[k][1]).abs() < 1e-9);
        let s = reconstruction_similarity(&ae, &vectors[k]).unwrap();
        assert!((online.similarity() - s).abs() < 1e-12);
    }

    let zero = CsiMatrix::new(DMatrix::from_element(8, 8, Complex64::new(0.0, 0.0)));
    let r = online_localize(&ae, &out.models.x, &out.models.y, &zero, 0.8);
    assert!(matches!(r, Err(Error::Domain(_))));
    let wrong = CsiMatrix::new(DMatrix::from_element(4, 4, Complex64::new(1.0, 0.0)));
    assert!(online_localize(&ae, &out.models.x, &out.models.y, &wrong, 0.8).is_err());

    let report = evaluate_with_autoencoder(
        &data,
        Some(&ae),
        &SplitSpec::new(0.2, 2, 1).unwrap(),
        &small_budget(),
        0.8,
    )
    .unwrap();
    assert!(!report.bypass_ae);
    assert!(report.config.autoencoder.is_some());
    assert!((0.0..=1.0).contains(&report.mean_reject_rate));
}

#[test]
fn tiny_timing_cell_is_fast() {
    let cells = timing_study(&scenario_4x4(5, 5), &[16], &[10], &small_budget(), 1).unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!((cells[0].n, cells[0].d), (10, 16));
    assert!(cells[0].median_ms < 1000.0, "{} ms", cells[0].median_ms);
    assert!(timing_study(&scenario_4x4(5, 5), &[15], &[10], &small_budget(), 1).is_err());
    assert!(timing_study(&scenario_4x4(5, 5), &[16], &[10], &small_budget(), 0).is_err());
}
