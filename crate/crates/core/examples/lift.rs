//! Generates a synthetic dataset, trains a small lifting network on it and
//! lifts a few validation poses.
//!
//! `cargo run --release --example lift -- [epochs]`

use poselift::dataset::{PairedDataset, Split};
use poselift::eval::JointAveraging;
use poselift::model::LiftingModel;
use poselift::nn::{Architecture, Flags, LiftingNetwork};
use poselift::preprocess::SkeletonSpec;
use poselift::synth::{default_camera_pool, make_dataset, SkeletonTemplate, SynthParams};
use poselift::train::{train, TrainingConfig, TrainingData};

fn main() -> poselift::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let spec = SkeletonSpec::h36m();
    let records = make_dataset(
        &SkeletonTemplate::<f64>::h36m(),
        &spec,
        &default_camera_pool(),
        &SynthParams {
            samples: 2000,
            noise_sigma: 3.0,
            seed: 7,
        },
    )?;
    let train_split = PairedDataset::from_records(&records, &spec, Split::Train)?;
    let val_split = PairedDataset::from_records(&records, &spec, Split::Val)?;
    let data = TrainingData::<f64>::new(&train_split, &val_split, JointAveraging::AllJoints)?;

    let arch = Architecture::new(128, 1, Flags::ALL);
    let mut net = LiftingNetwork::init(spec.input_dim(), spec.output_dim(), arch, 0)?;
    let config = TrainingConfig {
        epochs,
        ..TrainingConfig::default()
    };
    let log = train(&mut net, &data, &config)?;
    println!(
        "val MPJPE {:.1} mm -> {:.1} mm after {epochs} epochs",
        log.initial_val_mpjpe.unwrap_or(f64::NAN),
        log.final_val_mpjpe().unwrap_or(f64::NAN)
    );

    let model = LiftingModel::from_training(net, &data);
    let val: Vec<_> = records.iter().filter(|r| r.split == Split::Val).take(3).collect();
    let poses: Vec<_> = val.iter().map(|r| r.pose_2d()).collect();
    for (record, pose) in val.iter().zip(model.predict(&poses)?) {
        let gt = poselift::preprocess::root_center(&record.pose_3d::<f64>(), &spec)?;
        let [x, y, z] = pose.joints()[10];
        let [gx, gy, gz] = gt.joints()[10];
        println!(
            "sample {}: head at ({x:.0}, {y:.0}, {z:.0}) mm, truth ({gx:.0}, {gy:.0}, {gz:.0})",
            record.id
        );
    }
    Ok(())
}
