#![allow(dead_code)]

use poselift::dataset::{PairedDataset, SampleRecord, Split};
use poselift::eval::JointAveraging;
use poselift::preprocess::SkeletonSpec;
use poselift::synth::{default_camera_pool, make_dataset, SkeletonTemplate, SynthParams};
use poselift::train::TrainingData;
use poselift::Scalar;

pub fn records(samples: usize, noise_sigma: f64, seed: u64) -> Vec<SampleRecord> {
    make_dataset(
        &SkeletonTemplate::<f64>::h36m(),
        &SkeletonSpec::h36m(),
        &default_camera_pool(),
        &SynthParams {
            samples,
            noise_sigma,
            seed,
        },
    )
    .unwrap()
}

pub fn training_data<T: Scalar>(records: &[SampleRecord]) -> TrainingData<T> {
    let spec = SkeletonSpec::h36m();
    let train = PairedDataset::from_records(records, &spec, Split::Train).unwrap();
    let val = PairedDataset::from_records(records, &spec, Split::Val).unwrap();
    TrainingData::new(&train, &val, JointAveraging::AllJoints).unwrap()
}
