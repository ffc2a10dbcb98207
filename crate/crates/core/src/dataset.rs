//! Line-delimited sample files and the paired input/target matrices built
//! from them.
//!
//! File layout: an optional first line `# {header json}` followed by one JSON
//! object per line:
//!
//! ```text
//! # {"format":"poselift-dataset","version":1,"joints":["hip",...],"root":0,"config":"9c1e..."}
//! {"id":0,"split":"train","camera":2,"image":[1000.0,1000.0],"bbox":[x,y,w,h],"joints_2d":[[u,v],...],"joints_3d":[[x,y,z],...]}
//! ```
//!
//! `joints_2d` are raw image pixels (with detector noise), `joints_3d` are
//! camera-frame millimeters, both in the header's joint order. Neither is
//! root-centered on disk. Lines starting with `#` after the first are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::BoundingBox;
use crate::preprocess::{root_center, to_input_vector, to_output_vector, Pose2D, Pose3D, SkeletonSpec};
use crate::scalar::Scalar;

pub const DATASET_FORMAT: &str = "poselift-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!("unknown split {other:?}, expected train|val|test"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub joints: Vec<String>,
    pub root: usize,
    pub config: String,
}

impl DatasetHeader {
    pub fn new(spec: &SkeletonSpec, config_hash: impl Into<String>) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            joints: spec.joint_names().to_vec(),
            root: spec.root_index(),
            config: config_hash.into(),
        }
    }

    pub fn spec(&self) -> Result<SkeletonSpec> {
        SkeletonSpec::new(self.joints.clone(), self.root)
    }
}

/// One sample as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub split: Split,
    pub camera: usize,
    /// Image width and height in pixels.
    pub image: [f64; 2],
    /// Detector box `[x, y, w, h]` in image pixels.
    pub bbox: [f64; 4],
    pub joints_2d: Vec<[f64; 2]>,
    pub joints_3d: Vec<[f64; 3]>,
}

impl SampleRecord {
    pub fn pose_2d<T: Scalar>(&self) -> Pose2D<T> {
        Pose2D::new(self.joints_2d.iter().map(|p| p.map(T::lit)).collect())
    }

    pub fn pose_3d<T: Scalar>(&self) -> Pose3D<T> {
        Pose3D::new(self.joints_3d.iter().map(|p| p.map(T::lit)).collect())
    }

    pub fn bounding_box<T: Scalar>(&self) -> Result<BoundingBox<T>> {
        let [x, y, w, h] = self.bbox.map(T::lit);
        BoundingBox::new(x, y, w, h)
    }
}

pub fn write_records<W: Write>(mut w: W, header: &DatasetHeader, records: &[SampleRecord]) -> std::io::Result<()> {
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_records<R: Read>(r: R) -> Result<(Option<DatasetHeader>, Vec<SampleRecord>)> {
    let reader = BufReader::new(r);
    let mut header = None;
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format {
            what: "dataset",
            message: format!("line {}: {e}", lineno + 1),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if lineno == 0 {
                header = Some(serde_json::from_str(rest.trim()).map_err(|e| Error::Format {
                    what: "dataset header",
                    message: e.to_string(),
                })?);
            }
            continue;
        }
        records.push(serde_json::from_str(trimmed).map_err(|e| Error::Format {
            what: "dataset",
            message: format!("line {}: {e}", lineno + 1),
        })?);
    }
    Ok((header, records))
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, records: &[SampleRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), header, records).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<(Option<DatasetHeader>, Vec<SampleRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file)
}

/// Root-centered network vectors for one split: inputs in pixels, targets in
/// millimeters. Rows follow record order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset<T> {
    pub spec: SkeletonSpec,
    pub split: Split,
    pub ids: Vec<u64>,
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

impl<T: Scalar> PairedDataset<T> {
    pub fn from_records(records: &[SampleRecord], spec: &SkeletonSpec, split: Split) -> Result<Self> {
        let chosen: Vec<&SampleRecord> = records.iter().filter(|r| r.split == split).collect();
        let mut inputs = Array2::zeros((chosen.len(), spec.input_dim()));
        let mut targets = Array2::zeros((chosen.len(), spec.output_dim()));
        for (row, r) in chosen.iter().enumerate() {
            let x = to_input_vector(&root_center(&r.pose_2d::<T>(), spec)?, spec)?;
            let y = to_output_vector(&root_center(&r.pose_3d::<T>(), spec)?, spec)?;
            inputs.row_mut(row).assign(&ndarray::ArrayView1::from(&x));
            targets.row_mut(row).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(Self {
            spec: spec.clone(),
            split,
            ids: chosen.iter().map(|r| r.id).collect(),
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn split_counts(records: &[SampleRecord]) -> [usize; 3] {
    let mut c = [0; 3];
    for r in records {
        c[r.split as usize] += 1;
    }
    c
}
