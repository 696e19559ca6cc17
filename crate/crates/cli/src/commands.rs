use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;

use csiloc::autoencoder::{AutoencoderConfig, AutoencoderModel};
use csiloc::channel_sim::ScenarioConfig;
use csiloc::dataset::{self, AdpDataset, CsiDataset};
use csiloc::gpr_core::GprModel;
use csiloc::gpr_train::OptimizationBudget;
use csiloc::pipeline::{self, SplitSpec};
use csiloc::seed::derive_seed;

use crate::manifest::Recorder;
use crate::{
    BenchArgs, BudgetArgs, Cli, CodecArgs, EvaluateArgs, GenerateArgs, LocalizeArgs, TrainAeArgs,
    TrainGprArgs,
};

pub const DATASET_FILE: &str = "dataset.bin";
pub const ADP_FILE: &str = "adp.bin";
pub const AE_MODEL_FILE: &str = "ae_model.bin";
pub const GPR_X_FILE: &str = "gpr_x.bin";
pub const GPR_Y_FILE: &str = "gpr_y.bin";

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_adp(path: &Path) -> Result<AdpDataset> {
    dataset::read_as_adp(&mut open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_ae(path: &Path) -> Result<AutoencoderModel> {
    AutoencoderModel::read_from(&mut open(path)?)
        .with_context(|| format!("reading {}", path.display()))
}

fn read_gpr(path: &Path) -> Result<GprModel> {
    GprModel::read_from(&mut open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes `bytes` to `dir/name` and records it as an output.
fn emit(rec: &mut Recorder, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    rec.output(&path)?;
    Ok(path)
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> csiloc::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn resolve_budget(cli: &Cli, args: &BudgetArgs, rec: &mut Recorder) -> Result<OptimizationBudget> {
    let mut b = match &args.budget_config {
        Some(p) => {
            rec.input(p)?;
            read_json(p)?
        }
        None => OptimizationBudget::default(),
    };
    if let Some(v) = args.restarts {
        b.n_restarts = v;
    }
    if let Some(v) = args.max_iterations {
        b.max_iterations = v;
    }
    if let Some(v) = args.tolerance {
        b.tolerance = v;
    }
    if let Some(s) = cli.seed {
        b.rng_seed = derive_seed(s, "gpr");
    }
    b.validate()?;
    rec.seed("gpr", b.rng_seed);
    Ok(b)
}

fn split_seed(cli: &Cli, rec: &mut Recorder) -> u64 {
    let s = cli.seed.map_or(0, |s| derive_seed(s, "split"));
    rec.seed("split", s);
    s
}

fn load_codec(args: &CodecArgs, rec: &mut Recorder) -> Result<Option<AutoencoderModel>> {
    match (&args.ae, args.no_ae) {
        (Some(p), false) => {
            rec.input(p)?;
            Ok(Some(read_ae(p)?))
        }
        (None, true) => Ok(None),
        _ => bail!("pass exactly one of --ae and --no-ae"),
    }
}

pub fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut rec = Recorder::new("generate");
    let mut scenario = match &args.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None => ScenarioConfig::default(),
    };
    rec.config(args.config.as_deref())?;
    if let Some(v) = args.grid_rows {
        scenario.grid_rows = v;
    }
    if let Some(v) = args.grid_cols {
        scenario.grid_cols = v;
    }
    if let Some(s) = cli.seed {
        scenario.rng_seed = derive_seed(s, "scenario");
    }
    if let Some(k) = args.random_scatterers {
        scenario = scenario.with_random_scatterers(k, args.margin)?;
    }
    rec.seed("scenario", scenario.rng_seed);
    scenario.validate()?;

    let data = CsiDataset::generate(&scenario)?;
    prepare_dir(&args.out)?;
    emit(
        &mut rec,
        &args.out,
        "scenario.json",
        &json_bytes(&scenario)?,
    )?;
    let path = emit(
        &mut rec,
        &args.out,
        DATASET_FILE,
        &to_bytes(|b| data.write_to(b))?,
    )?;
    let back = CsiDataset::read_from(&mut open(&path)?)?;
    if back.len() != data.len() {
        bail!("{} did not read back intact", path.display());
    }
    if args.adp {
        let adp = data.to_adp()?;
        let path = emit(
            &mut rec,
            &args.out,
            ADP_FILE,
            &to_bytes(|b| adp.write_to(b))?,
        )?;
        AdpDataset::read_from(&mut open(&path)?)?;
    }
    rec.finish(&args.out)?;
    println!("wrote {} records to {}", data.len(), args.out.display());
    Ok(())
}

pub fn train_ae(cli: &Cli, args: &TrainAeArgs) -> Result<()> {
    let mut rec = Recorder::new("train-ae");
    let mut parts = Vec::with_capacity(args.data.len());
    for p in &args.data {
        rec.input(p)?;
        parts.push(read_adp(p)?);
    }
    let mut config = match &args.config {
        Some(p) => read_json::<AutoencoderConfig>(p)?,
        None => AutoencoderConfig::for_adp(parts[0].n_antennas, parts[0].n_subcarriers)?,
    };
    rec.config(args.config.as_deref())?;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(s) = cli.seed {
        config.rng_seed = derive_seed(s, "autoencoder");
    }
    rec.seed("autoencoder", config.rng_seed);
    config.validate()?;
    for (p, d) in args.data.iter().zip(&parts) {
        if d.input_width() != config.input_width {
            bail!(
                "{} holds ADPs of length {} but the autoencoder expects {}",
                p.display(),
                d.input_width(),
                config.input_width
            );
        }
    }

    let refs: Vec<&AdpDataset> = parts.iter().collect();
    let model = pipeline::offline_phase1(&refs, &config)?;
    prepare_dir(&args.out)?;
    emit(&mut rec, &args.out, "ae_config.json", &json_bytes(&config)?)?;
    let path = emit(
        &mut rec,
        &args.out,
        AE_MODEL_FILE,
        &to_bytes(|b| model.write_to(b))?,
    )?;
    if read_ae(&path)? != model {
        bail!("{} did not read back intact", path.display());
    }
    emit(
        &mut rec,
        &args.out,
        "ae_history.csv",
        &to_bytes(|b| model.write_history_csv(b))?,
    )?;
    rec.finish(&args.out)?;
    println!(
        "trained on {} samples, final loss {:.3e}",
        refs.iter().map(|d| d.len()).sum::<usize>(),
        model.history().last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn train_gpr(cli: &Cli, args: &TrainGprArgs) -> Result<()> {
    let mut rec = Recorder::new("train-gpr");
    rec.input(&args.data)?;
    let data = read_adp(&args.data)?;
    let ae = load_codec(&args.codec, &mut rec)?;
    let budget = resolve_budget(cli, &args.budget, &mut rec)?;
    let split = SplitSpec::new(args.fraction, args.trial + 1, split_seed(cli, &mut rec))?;

    let out = pipeline::offline_phase2(ae.as_ref(), &data, &split, args.trial, &budget)?;
    let m = &out.models;
    prepare_dir(&args.out)?;
    for (name, model) in [(GPR_X_FILE, &m.x), (GPR_Y_FILE, &m.y)] {
        let path = emit(&mut rec, &args.out, name, &to_bytes(|b| model.write_to(b))?)?;
        read_gpr(&path)?;
    }
    for (axis, report) in [("x", &m.report_x), ("y", &m.report_y)] {
        emit(
            &mut rec,
            &args.out,
            &format!("selection_{axis}.json"),
            &json_bytes(report)?,
        )?;
        emit(
            &mut rec,
            &args.out,
            &format!("surface_{axis}.csv"),
            &to_bytes(|b| report.write_surface_csv(b))?,
        )?;
    }
    emit(&mut rec, &args.out, "split.json", &json_bytes(&out.split)?)?;
    rec.finish(&args.out)?;
    println!(
        "trained on {} samples: x uses {}, y uses {}",
        out.split.train.len(),
        m.report_x.winner,
        m.report_y.winner
    );
    Ok(())
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let mut rec = Recorder::new("evaluate");
    rec.input(&args.data)?;
    let data = read_adp(&args.data)?;
    let ae = load_codec(&args.codec, &mut rec)?;
    let budget = resolve_budget(cli, &args.budget, &mut rec)?;
    let seed = split_seed(cli, &mut rec);

    let mut reports = Vec::with_capacity(args.fractions.len());
    for &f in &args.fractions {
        let split = SplitSpec::new(f, args.trials, seed)?;
        let report = pipeline::evaluate_with_autoencoder(
            &data,
            ae.as_ref(),
            &split,
            &budget,
            args.threshold,
        )?;
        println!(
            "fraction {f}: mean RMSE {:.3} m (centroid baseline {:.3} m, rejected {:.1}%)",
            report.mean_rmse_m,
            report.mean_baseline_rmse_m,
            100.0 * report.mean_reject_rate
        );
        reports.push(report);
    }
    prepare_dir(&args.out)?;
    emit(&mut rec, &args.out, "eval.json", &json_bytes(&reports)?)?;
    emit(
        &mut rec,
        &args.out,
        "eval.csv",
        &to_bytes(|b| pipeline::write_eval_csv(&reports, b))?,
    )?;
    rec.finish(&args.out)
}

pub fn localize(_cli: &Cli, args: &LocalizeArgs) -> Result<()> {
    let ae = read_ae(&args.ae)?;
    let gx = read_gpr(&args.models.join(GPR_X_FILE))?;
    let gy = read_gpr(&args.models.join(GPR_Y_FILE))?;
    let data = CsiDataset::read_from(&mut open(&args.data)?)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let Some(sample) = data.samples.get(args.index) else {
        bail!(
            "record {} out of range: {} holds {} records",
            args.index,
            args.data.display(),
            data.len()
        );
    };
    let outcome = pipeline::online_localize(&ae, &gx, &gy, &sample.csi, args.threshold)?;
    println!("{}", serde_json::to_string(&outcome)?);
    Ok(())
}

pub fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let mut rec = Recorder::new("bench");
    let base = match &args.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None => ScenarioConfig::default(),
    };
    rec.config(args.config.as_deref())?;
    let budget = resolve_budget(cli, &args.budget, &mut rec)?;
    let cells = pipeline::timing_study(&base, &args.dims, &args.sizes, &budget, args.repetitions)?;
    for c in &cells {
        println!("n={} d={}: median {:.1} ms", c.n, c.d, c.median_ms);
    }
    prepare_dir(&args.out)?;
    emit(&mut rec, &args.out, "timing.json", &json_bytes(&cells)?)?;
    emit(
        &mut rec,
        &args.out,
        "timing.csv",
        &to_bytes(|b| pipeline::write_timing_csv(&cells, b))?,
    )?;
    rec.finish(&args.out)
}
