mod common;

use poselift::dataset::{read_dataset, write_dataset, DatasetHeader, Split};
use poselift::eval::{capacity_sweep, run_ablation, JointAveraging};
use poselift::eval::{evaluate_with_cr_toggle, HeatmapStage, IdentityStage};
use poselift::model::LiftingModel;
use poselift::nn::{Architecture, Flags, LiftingNetwork};
use poselift::preprocess::SkeletonSpec;
use poselift::train::{train, TrainingConfig};
use poselift::Error;

fn quick_config(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        epochs,
        ..TrainingConfig::default()
    }
}

fn trained_model(seed: u64, epochs: usize) -> (LiftingModel<f64>, Vec<poselift::dataset::SampleRecord>) {
    let records = common::records(400, 2.0, seed);
    let data = common::training_data::<f64>(&records);
    let mut net = LiftingNetwork::init(
        data.spec.input_dim(),
        data.spec.output_dim(),
        Architecture::new(64, 1, Flags::ALL),
        seed,
    )
    .unwrap();
    train(&mut net, &data, &quick_config(epochs)).unwrap();
    (LiftingModel::from_training(net, &data), records)
}

#[test]
fn ablation_has_eight_rows_in_grid_order() {
    let records = common::records(120, 2.0, 5);
    let data = common::training_data::<f64>(&records);
    let report = run_ablation(&data, Architecture::new(16, 1, Flags::ALL), &quick_config(2), "abc").unwrap();
    assert_eq!(report.rows.len(), 8);
    let flags: Vec<Flags> = report.rows.iter().map(|r| r.flags).collect();
    assert_eq!(flags, Flags::grid());
    assert_eq!(report.rows[0].flags, Flags::NONE);
    assert_eq!(report.rows[7].flags, Flags::ALL);
    assert!(report
        .rows
        .iter()
        .all(|r| r.val_mpjpe.is_some_and(f64::is_finite) && !r.diverged));

    let csv = report.to_csv();
    assert!(csv.starts_with("# poselift ablation config=abc seed=0 mpjpe_joints=all_joints\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 9);
    assert_eq!(report.to_text().lines().filter(|l| !l.starts_with('#')).count(), 9);
    assert_eq!(report.meta.file_stem("ablation"), "ablation-abc-seed0");
}

#[test]
fn ablation_is_deterministic() {
    let records = common::records(120, 2.0, 5);
    let data = common::training_data::<f64>(&records);
    let run = || run_ablation(&data, Architecture::new(16, 1, Flags::ALL), &quick_config(2), "h").unwrap();
    assert_eq!(run().to_csv(), run().to_csv());
}

#[test]
fn divergent_rows_are_flagged_not_fatal() {
    let records = common::records(120, 2.0, 5);
    let data = common::training_data::<f64>(&records);
    let config = TrainingConfig {
        epochs: 3,
        learning_rate: 1e6,
        optimizer: poselift::optim::OptimizerKind::Sgd,
        ..TrainingConfig::default()
    };
    let report = run_ablation(&data, Architecture::new(16, 1, Flags::ALL), &config, "h").unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.rows.iter().any(|r| r.diverged));
    for r in report.rows.iter().filter(|r| r.diverged) {
        assert!(r.val_mpjpe.is_none());
    }
    assert!(report.to_text().contains("diverged"));
}

#[test]
fn sweep_cells_are_row_major() {
    let records = common::records(120, 2.0, 5);
    let data = common::training_data::<f64>(&records);
    let base = Architecture::new(16, 1, Flags::ALL);
    let report = capacity_sweep(&data, base, &quick_config(1), &[1, 2], &[8, 16], "h").unwrap();
    let cells: Vec<(usize, usize)> = report.cells.iter().map(|c| (c.blocks, c.width)).collect();
    assert_eq!(cells, vec![(1, 8), (1, 16), (2, 8), (2, 16)]);
    assert!(report.cells.iter().all(|c| c.val_mpjpe.is_some_and(f64::is_finite)));

    let single = capacity_sweep(&data, base, &quick_config(1), &[1], &[64], "h").unwrap();
    assert_eq!(single.cells.len(), 1);
    assert!(matches!(
        capacity_sweep(&data, base, &quick_config(1), &[], &[64], "h"),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn identity_stage_cr_path_matches_direct() {
    let (model, records) = trained_model(3, 2);
    let cmp = evaluate_with_cr_toggle(&records, &model, &IdentityStage, 0.15, 224.0).unwrap();
    assert!((cmp.with_cr - cmp.direct).abs() < 1e-9, "{cmp:?}");
    assert!((cmp.without_cr - cmp.direct).abs() < 1e-9, "{cmp:?}");
    assert!(cmp.max_cr_shift < 1e-9);
}

#[test]
fn cr_path_beats_naive_rescale_with_heatmap_stage() {
    let mut diffs = Vec::new();
    for seed in [1, 2, 3] {
        let (model, records) = trained_model(seed, 15);
        let val: Vec<_> = records.into_iter().filter(|r| r.split == Split::Val).collect();
        let cmp = evaluate_with_cr_toggle(&val, &model, &HeatmapStage::default(), 0.15, 224.0).unwrap();
        diffs.push(cmp.without_cr - cmp.with_cr);
    }
    diffs.sort_by(f64::total_cmp);
    assert!(diffs[1] >= 0.0, "{diffs:?}");
}

#[test]
fn cr_toggle_rejects_missing_boxes() {
    let (model, mut records) = trained_model(3, 0);
    records[0].bbox = [0.0, 0.0, 0.0, 0.0];
    assert!(matches!(
        evaluate_with_cr_toggle(&records, &model, &IdentityStage, 0.15, 224.0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let (model, records) = trained_model(4, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path, "cafe", 4).unwrap();
    let (loaded, header) = LiftingModel::<f64>::load(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(header.config, "cafe");
    assert_eq!(header.seed, 4);
    assert_eq!(std::fs::read(&path).unwrap(), model.to_checkpoint_bytes("cafe", 4));

    let poses: Vec<_> = records.iter().take(5).map(|r| r.pose_2d()).collect();
    assert_eq!(loaded.predict(&poses).unwrap(), model.predict(&poses).unwrap());

    let other = SkeletonSpec::new((0..17).map(|i| format!("j{i}")).collect(), 0).unwrap();
    assert!(matches!(loaded.check_spec(&other), Err(Error::InvalidInput(_))));
    assert!(loaded.check_spec(&SkeletonSpec::h36m()).is_ok());
}

#[test]
fn dataset_file_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let header = DatasetHeader::new(&SkeletonSpec::h36m(), "seed7");
    let write = |name: &str| {
        let path = dir.path().join(name);
        write_dataset(&path, &header, &common::records(200, 3.0, 7)).unwrap();
        std::fs::read(path).unwrap()
    };
    let a = write("a.jsonl");
    assert_eq!(a, write("b.jsonl"));
    let (hdr, recs) = read_dataset(&dir.path().join("a.jsonl")).unwrap();
    assert_eq!(hdr.unwrap(), header);
    assert_eq!(recs, common::records(200, 3.0, 7));
}

#[test]
fn averaging_convention_is_recorded() {
    let records = common::records(120, 2.0, 5);
    let spec = SkeletonSpec::h36m();
    let train = poselift::dataset::PairedDataset::<f64>::from_records(&records, &spec, Split::Train).unwrap();
    let val = poselift::dataset::PairedDataset::from_records(&records, &spec, Split::Val).unwrap();
    let data = poselift::train::TrainingData::new(&train, &val, JointAveraging::NonRoot).unwrap();
    let report = capacity_sweep(
        &data,
        Architecture::new(8, 1, Flags::ALL),
        &quick_config(0),
        &[1],
        &[8],
        "h",
    )
    .unwrap();
    assert!(report.to_csv().contains("mpjpe_joints=non_root"));
}
