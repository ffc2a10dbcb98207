use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use poselift::dataset::{read_dataset, split_counts, write_dataset, DatasetHeader, PairedDataset, SampleRecord, Split};
use poselift::eval::{
    capacity_sweep, evaluate_with_cr_toggle, mpjpe, run_ablation, HeatmapStage, IdentityStage, ReportMeta, TwoDStage,
};
use poselift::gradcheck::{grad_check, randomize_affine};
use poselift::model::{CheckpointHeader, LiftingModel};
use poselift::nn::LiftingNetwork;
use poselift::preprocess::{Pose2D, SkeletonSpec};
use poselift::synth::{default_camera_pool, make_dataset, SkeletonTemplate, SynthParams};
use poselift::train::{train, TrainingData};
use poselift::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Precision, RunConfig};
use crate::error::{io_error, validation, CliError, CliResult};

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Loads a dataset file and checks it was written for `spec`.
fn load_records(path: &Path, spec: &SkeletonSpec) -> CliResult<Vec<SampleRecord>> {
    let (header, records) = read_dataset(path)?;
    if let Some(h) = header {
        let file_spec = h.spec()?;
        if file_spec.joint_names() != spec.joint_names() || file_spec.root_index() != spec.root_index() {
            return Err(validation(format!(
                "{} was generated for a different skeleton than the configured one",
                path.display()
            )));
        }
    }
    Ok(records)
}

fn training_data<T: Scalar>(records: &[SampleRecord], config: &RunConfig) -> CliResult<TrainingData<T>> {
    let spec = config.skeleton_spec()?;
    let train = PairedDataset::from_records(records, &spec, Split::Train)?;
    let val = PairedDataset::from_records(records, &spec, Split::Val)?;
    Ok(TrainingData::new(&train, &val, config.eval.mpjpe_joints)?)
}

pub fn synth(config: &RunConfig, hash: &str, out: &Path) -> CliResult<()> {
    let spec = config.skeleton_spec()?;
    let s = &config.synth;
    let records = make_dataset(
        &SkeletonTemplate::<f64>::h36m(),
        &spec,
        &default_camera_pool(),
        &SynthParams {
            samples: s.samples,
            noise_sigma: s.noise_sigma,
            seed: s.seed,
        },
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_dataset(out, &DatasetHeader::new(&spec, hash), &records)?;
    let [train, val, test] = split_counts(&records);
    println!("train {train} val {val} test {test}");
    println!("wrote {}", out.display());
    Ok(())
}

pub struct TrainPaths {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

pub fn train_cmd(config: &RunConfig, hash: &str, data: &Path, paths: &TrainPaths) -> CliResult<()> {
    match config.model.precision {
        Precision::F32 => train_typed::<f32>(config, hash, data, paths),
        Precision::F64 => train_typed::<f64>(config, hash, data, paths),
    }
}

fn train_typed<T: Scalar>(config: &RunConfig, hash: &str, data_path: &Path, paths: &TrainPaths) -> CliResult<()> {
    let spec = config.skeleton_spec()?;
    let records = load_records(data_path, &spec)?;
    let data = training_data::<T>(&records, config)?;
    let arch = config.model.architecture();
    let training = config.train.training();
    let mut net = LiftingNetwork::<T>::init(spec.input_dim(), spec.output_dim(), arch, training.seed)?;
    println!(
        "training {} parameters ({} blocks x {} wide, {}) on {} samples for {} epochs",
        net.parameter_count(),
        arch.blocks,
        arch.width,
        T::NAME,
        data.train_x.nrows(),
        training.epochs
    );
    let log = train(&mut net, &data, &training)?;

    let mut csv = ReportMeta {
        config_hash: hash.into(),
        seed: training.seed,
        averaging: data.averaging,
    }
    .header_line("trainlog");
    csv.push_str(&log.to_csv(training.learning_rate));
    for dir in [&paths.log, &paths.checkpoint].iter().filter_map(|p| p.parent()) {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    write_file(&paths.log, csv.as_bytes())?;
    println!("wrote {}", paths.log.display());
    if let Some(epoch) = log.diverged() {
        return Err(CliError::Numerical(format!("training diverged at epoch {epoch}")));
    }

    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "train loss {:.6} -> {:.6}; val MPJPE {} -> {} mm",
        log.initial_train_loss,
        log.final_train_loss().unwrap_or(log.initial_train_loss),
        fmt(log.initial_val_mpjpe),
        fmt(log.final_val_mpjpe().or(log.initial_val_mpjpe)),
    );
    LiftingModel::from_training(net, &data).save(&paths.checkpoint, hash, training.seed)?;
    println!("wrote {}", paths.checkpoint.display());
    Ok(())
}

fn peek_header(path: &Path) -> CliResult<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(LiftingModel::<f64>::from_checkpoint_bytes(&bytes)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StageKind {
    /// Pass the joints through unchanged.
    Identity,
    /// Render and re-decode coarse Gaussian heatmaps.
    Heatmap,
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub split: Split,
    pub cr_stage: Option<StageKind>,
    pub out_dir: &'a Path,
}

pub fn eval_cmd(config: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    match peek_header(args.checkpoint)?.scalar.as_str() {
        "f32" => eval_typed::<f32>(config, args),
        _ => eval_typed::<f64>(config, args),
    }
}

fn eval_typed<T: Scalar>(config: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    let (model, header) = LiftingModel::<T>::load(args.checkpoint)?;
    let (file_header, records) = read_dataset(args.data)?;
    let data_spec = match file_header {
        Some(h) => h.spec()?,
        None => config.skeleton_spec()?,
    };
    model.check_spec(&data_spec)?;
    let records: Vec<SampleRecord> = records.into_iter().filter(|r| r.split == args.split).collect();
    if records.is_empty() {
        return Err(validation(format!(
            "{} has no {} samples",
            args.data.display(),
            args.split.as_str()
        )));
    }
    let poses: Vec<Pose2D<T>> = records.iter().map(|r| r.pose_2d()).collect();
    let gts: Vec<_> = records.iter().map(|r| r.pose_3d::<T>()).collect();
    let score = mpjpe(&model.predict(&poses)?, &gts, &model.spec, model.averaging)?.as_f64();
    println!(
        "{} split: {} samples, MPJPE {score} mm ({})",
        args.split.as_str(),
        records.len(),
        model.averaging.as_str()
    );

    let meta = ReportMeta {
        config_hash: header.config.clone(),
        seed: header.seed,
        averaging: model.averaging,
    };
    let mut csv = meta.header_line("eval");
    csv.push_str("split,samples,mpjpe,mpjpe_with_cr,mpjpe_without_cr\n");
    let (with_cr, without_cr) = match args.cr_stage {
        None => (String::new(), String::new()),
        Some(kind) => {
            let stage: &dyn TwoDStage<T> = match kind {
                StageKind::Identity => &IdentityStage,
                StageKind::Heatmap => &HeatmapStage::default(),
            };
            let cmp = evaluate_with_cr_toggle(
                &records,
                &model,
                stage,
                T::lit(config.eval.crop_margin),
                T::lit(config.eval.input_size),
            )?;
            println!(
                "with CR {} mm, without CR (full frame) {} mm",
                cmp.with_cr, cmp.without_cr
            );
            (cmp.with_cr.to_string(), cmp.without_cr.to_string())
        }
    };
    writeln!(
        csv,
        "{},{},{score},{with_cr},{without_cr}",
        args.split.as_str(),
        records.len()
    )
    .unwrap();
    ensure_dir(args.out_dir)?;
    let path = args.out_dir.join(format!(
        "{}.csv",
        meta.file_stem(&format!("eval-{}", args.split.as_str()))
    ));
    write_file(&path, csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_report(out_dir: &Path, stem: &str, csv: &str, text: &str) -> CliResult<()> {
    ensure_dir(out_dir)?;
    for (ext, body) in [("csv", csv), ("txt", text)] {
        let path = out_dir.join(format!("{stem}.{ext}"));
        write_file(&path, body.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn ablate_cmd(config: &RunConfig, hash: &str, data: &Path, out_dir: &Path) -> CliResult<()> {
    match config.model.precision {
        Precision::F32 => ablate_typed::<f32>(config, hash, data, out_dir),
        Precision::F64 => ablate_typed::<f64>(config, hash, data, out_dir),
    }
}

fn ablate_typed<T: Scalar>(config: &RunConfig, hash: &str, data_path: &Path, out_dir: &Path) -> CliResult<()> {
    let records = load_records(data_path, &config.skeleton_spec()?)?;
    let data = training_data::<T>(&records, config)?;
    let report = run_ablation(&data, config.model.architecture(), &config.train.training(), hash)?;
    let text = report.to_text();
    print!("{text}");
    write_report(out_dir, &report.meta.file_stem("ablation"), &report.to_csv(), &text)
}

pub fn sweep_cmd(config: &RunConfig, hash: &str, data: &Path, out_dir: &Path) -> CliResult<()> {
    match config.model.precision {
        Precision::F32 => sweep_typed::<f32>(config, hash, data, out_dir),
        Precision::F64 => sweep_typed::<f64>(config, hash, data, out_dir),
    }
}

fn sweep_typed<T: Scalar>(config: &RunConfig, hash: &str, data_path: &Path, out_dir: &Path) -> CliResult<()> {
    let records = load_records(data_path, &config.skeleton_spec()?)?;
    let data = training_data::<T>(&records, config)?;
    let report = capacity_sweep(
        &data,
        config.model.architecture(),
        &config.train.training(),
        &config.eval.sweep_blocks,
        &config.eval.sweep_widths,
        hash,
    )?;
    let text = report.to_text();
    print!("{text}");
    write_report(out_dir, &report.meta.file_stem("sweep"), &report.to_csv(), &text)
}

pub fn gradcheck_cmd(config: &RunConfig) -> CliResult<()> {
    let g = &config.gradcheck;
    let spec = config.skeleton_spec()?;
    let arch = poselift::nn::Architecture {
        width: g.width,
        blocks: g.blocks,
        ..config.model.architecture()
    };
    let mut net = LiftingNetwork::<f64>::init(spec.input_dim(), spec.output_dim(), arch, g.seed)?;
    // move biases and batch-norm affine terms off their exact initial values
    // so no unit sits on a ReLU kink
    randomize_affine(&mut net, g.seed.wrapping_add(1));
    net.apply_max_norm(arch.maxnorm_c);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(2));
    let x = ndarray::Array2::from_shape_simple_fn((g.batch, spec.input_dim()), || rng.random_range(-1.5..1.5));
    let y = ndarray::Array2::from_shape_simple_fn((g.batch, spec.output_dim()), || rng.random_range(-1.5..1.5));
    let report = grad_check(&net, x.view(), y.view(), g.eps, g.seed.wrapping_add(3))?;
    let worst = report
        .worst
        .as_ref()
        .map(|(name, i)| format!(" (worst: {name}[{i}])"))
        .unwrap_or_default();
    println!(
        "max relative error {:e} over {} parameters{worst}; {}; {} blocks x {} wide",
        report.max_rel_error, report.checked, arch.flags, arch.blocks, arch.width
    );
    if !(report.max_rel_error <= g.tolerance) {
        return Err(CliError::Numerical(format!(
            "gradient check error {:e} exceeds tolerance {:e}",
            report.max_rel_error, g.tolerance
        )));
    }
    Ok(())
}

/// One line of a predict input file; dataset records qualify too.
#[derive(Debug, Deserialize)]
struct PredictInput {
    id: serde_json::Value,
    joints_2d: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct PredictOutput<'a> {
    id: &'a serde_json::Value,
    joints_3d: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize)]
struct PredictHeader<'a> {
    format: &'static str,
    version: u32,
    config: &'a str,
    seed: u64,
    joints: &'a [String],
}

pub fn predict_cmd(checkpoint: &Path, input: &Path, out: &Path) -> CliResult<()> {
    match peek_header(checkpoint)?.scalar.as_str() {
        "f32" => predict_typed::<f32>(checkpoint, input, out),
        _ => predict_typed::<f64>(checkpoint, input, out),
    }
}

fn predict_typed<T: Scalar>(checkpoint: &Path, input: &Path, out: &Path) -> CliResult<()> {
    let (model, header) = LiftingModel::<T>::load(checkpoint)?;
    let file = fs::File::open(input).map_err(|e| io_error(input, e))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(input, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let item: PredictInput =
            serde_json::from_str(line).map_err(|e| validation(format!("{} line {}: {e}", input.display(), n + 1)))?;
        if item.joints_2d.len() != model.spec.joint_count() {
            return Err(validation(format!(
                "{} line {}: {} joints, checkpoint expects {}",
                input.display(),
                n + 1,
                item.joints_2d.len(),
                model.spec.joint_count()
            )));
        }
        items.push(item);
    }
    let poses: Vec<Pose2D<T>> = items
        .iter()
        .map(|i| Pose2D::new(i.joints_2d.iter().map(|p| p.map(T::lit)).collect()))
        .collect();
    let preds = model.predict(&poses)?;

    let mut buf = Vec::new();
    let head = PredictHeader {
        format: "poselift-predictions",
        version: 1,
        config: &header.config,
        seed: header.seed,
        joints: model.spec.joint_names(),
    };
    writeln!(buf, "# {}", serde_json::to_string(&head).expect("header serializes")).unwrap();
    for (item, pose) in items.iter().zip(&preds) {
        let line = PredictOutput {
            id: &item.id,
            joints_3d: pose.joints().iter().map(|p| p.map(|v| v.as_f64())).collect(),
        };
        writeln!(buf, "{}", serde_json::to_string(&line).expect("prediction serializes")).unwrap();
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_file(out, &buf)?;
    println!("predicted {} poses; wrote {}", preds.len(), out.display());
    Ok(())
}
