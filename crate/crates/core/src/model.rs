//! A trained network bundled with its skeleton and standardization
//! statistics, and the binary checkpoint that stores it.
//!
//! Checkpoint layout (all integers and reals little-endian):
//!
//! | bytes        | content                                               |
//! |--------------|-------------------------------------------------------|
//! | 8            | magic `POSELIFT`                                      |
//! | 4            | format version, `u32` (currently 1)                   |
//! | 4            | header length `H`, `u32`                              |
//! | H            | UTF-8 JSON header (run hash and seed, architecture,   |
//! |              | skeleton, tensor list)                                |
//! | rest         | every tensor in header order as `f64`, row-major      |
//!
//! Tensor order: `input_stats.mean`, `input_stats.std`, `output_stats.mean`,
//! `output_stats.std`, then per stage (input stage, then each block's two
//! stages) `weight`, `bias` and, with batch norm, `bn.gamma`, `bn.beta`,
//! `bn.running_mean`, `bn.running_var`; finally `output.weight`, `output.bias`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::eval::JointAveraging;
use crate::nn::{Architecture, LiftingNetwork};
use crate::preprocess::{root_center, to_input_vector, NormStats, Pose2D, Pose3D, SkeletonSpec};
use crate::scalar::Scalar;
use crate::train::{predict_poses, TrainingData};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"POSELIFT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftingModel<T> {
    pub spec: SkeletonSpec,
    pub net: LiftingNetwork<T>,
    pub input_stats: NormStats<T>,
    pub output_stats: NormStats<T>,
    pub averaging: JointAveraging,
}

impl<T: Scalar> LiftingModel<T> {
    /// Bundles a network with the statistics it was trained against.
    pub fn from_training(net: LiftingNetwork<T>, data: &TrainingData<T>) -> Self {
        Self {
            spec: data.spec.clone(),
            net,
            input_stats: data.input_stats.clone(),
            output_stats: data.output_stats.clone(),
            averaging: data.averaging,
        }
    }

    /// Image-pixel 2D poses to root-relative millimeter 3D poses.
    pub fn predict(&self, poses: &[Pose2D<T>]) -> Result<Vec<Pose3D<T>>> {
        if poses.is_empty() {
            return Ok(Vec::new());
        }
        let mut x = Array2::zeros((poses.len(), self.spec.input_dim()));
        for (row, p) in poses.iter().enumerate() {
            let v = self
                .input_stats
                .normalize(&to_input_vector(&root_center(p, &self.spec)?, &self.spec)?)?;
            x.row_mut(row).assign(&ndarray::ArrayView1::from(&v));
        }
        predict_poses(&self.net, x.view(), &self.output_stats, &self.spec)
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let mut out = vec![
            (
                "input_stats.mean".into(),
                vec![self.input_stats.dim()],
                f(&self.input_stats.mean),
            ),
            (
                "input_stats.std".into(),
                vec![self.input_stats.dim()],
                f(&self.input_stats.std),
            ),
            (
                "output_stats.mean".into(),
                vec![self.output_stats.dim()],
                f(&self.output_stats.mean),
            ),
            (
                "output_stats.std".into(),
                vec![self.output_stats.dim()],
                f(&self.output_stats.std),
            ),
        ];
        let net = &self.net;
        let stages = std::iter::once(("input".to_string(), &net.input)).chain(net.blocks.iter().enumerate().flat_map(
            |(b, blk)| {
                blk.stages
                    .iter()
                    .enumerate()
                    .map(move |(k, s)| (format!("block{b}.stage{k}"), s))
            },
        ));
        for (prefix, s) in stages {
            let w = &s.dense.weight;
            out.push((
                format!("{prefix}.weight"),
                vec![w.nrows(), w.ncols()],
                w.iter().map(|x| x.as_f64()).collect(),
            ));
            out.push((
                format!("{prefix}.bias"),
                vec![s.dense.bias.len()],
                s.dense.bias.iter().map(|x| x.as_f64()).collect(),
            ));
            if let Some(bn) = &s.bn {
                for (name, v) in [
                    ("gamma", &bn.gamma),
                    ("beta", &bn.beta),
                    ("running_mean", &bn.running_mean),
                    ("running_var", &bn.running_var),
                ] {
                    out.push((
                        format!("{prefix}.bn.{name}"),
                        vec![v.len()],
                        v.iter().map(|x| x.as_f64()).collect(),
                    ));
                }
            }
        }
        let w = &net.output.weight;
        out.push((
            "output.weight".into(),
            vec![w.nrows(), w.ncols()],
            w.iter().map(|x| x.as_f64()).collect(),
        ));
        out.push((
            "output.bias".into(),
            vec![net.output.bias.len()],
            net.output.bias.iter().map(|x| x.as_f64()).collect(),
        ));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![
            &mut self.input_stats.mean,
            &mut self.input_stats.std,
            &mut self.output_stats.mean,
            &mut self.output_stats.std,
        ];
        let net = &mut self.net;
        let stages = std::iter::once(&mut net.input).chain(net.blocks.iter_mut().flat_map(|b| b.stages.iter_mut()));
        for s in stages {
            out.push(s.dense.weight.as_slice_mut().expect("standard layout"));
            out.push(s.dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut s.bn {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
                out.push(bn.running_mean.as_slice_mut().expect("standard layout"));
                out.push(bn.running_var.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(net.output.weight.as_slice_mut().expect("standard layout"));
        out.push(net.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// `config_hash` and `seed` identify the run that produced the model.
    pub fn to_checkpoint_bytes(&self, config_hash: &str, seed: u64) -> Vec<u8> {
        let tensors = self.tensors();
        let header = CheckpointHeader {
            config: config_hash.to_string(),
            seed,
            scalar: T::NAME.to_string(),
            joints: self.spec.joint_names().to_vec(),
            root: self.spec.root_index(),
            exclude_root: self.spec.excludes_root(),
            mpjpe_joints: self.averaging,
            architecture: self.net.arch,
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut bytes = Vec::with_capacity(16 + header.len() + 8 * self.net.parameter_count());
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header);
        for (_, _, values) in &tensors {
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, CheckpointHeader)> {
        let bad = |m: &str| Error::Format {
            what: "checkpoint",
            message: m.to_string(),
        };
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing POSELIFT magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        let spec = SkeletonSpec::with_root_policy(header.joints.clone(), header.root, header.exclude_root)?;
        let net = LiftingNetwork::init(spec.input_dim(), spec.output_dim(), header.architecture, 0)?;
        let (din, dout) = (spec.input_dim(), spec.output_dim());
        let mut model = LiftingModel {
            spec,
            net,
            input_stats: NormStats {
                mean: vec![T::zero(); din],
                std: vec![T::one(); din],
            },
            output_stats: NormStats {
                mean: vec![T::zero(); dout],
                std: vec![T::one(); dout],
            },
            averaging: header.mpjpe_joints,
        };
        let expected = model.tensors();
        if expected.len() != header.tensors.len()
            || expected
                .iter()
                .zip(&header.tensors)
                .any(|((n, s, _), e)| *n != e.name || *s != e.shape)
        {
            return Err(bad("tensor directory does not match the architecture"));
        }
        let mut payload = &bytes[16 + hlen..];
        for slot in model.tensors_mut() {
            for v in slot.iter_mut() {
                let (head, rest) = payload
                    .split_first_chunk::<8>()
                    .ok_or_else(|| bad("truncated payload"))?;
                *v = T::lit(f64::from_le_bytes(*head));
                payload = rest;
            }
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok((model, header))
    }

    pub fn save(&self, path: &Path, config_hash: &str, seed: u64) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes(config_hash, seed)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    pub fn check_spec(&self, other: &SkeletonSpec) -> Result<()> {
        if self.spec.joint_names() != other.joint_names() || self.spec.root_index() != other.root_index() {
            return Err(invalid("checkpoint skeleton does not match the dataset skeleton"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: String,
    pub seed: u64,
    pub scalar: String,
    pub joints: Vec<String>,
    pub root: usize,
    pub exclude_root: bool,
    pub mpjpe_joints: JointAveraging,
    pub architecture: Architecture,
    pub tensors: Vec<TensorEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Flags;

    fn model(flags: Flags) -> LiftingModel<f64> {
        let spec = SkeletonSpec::h36m();
        let net = LiftingNetwork::init(32, 48, Architecture::new(8, 2, flags), 4).unwrap();
        LiftingModel {
            spec,
            net,
            input_stats: NormStats {
                mean: (0..32).map(|i| i as f64).collect(),
                std: vec![2.0; 32],
            },
            output_stats: NormStats {
                mean: vec![-1.0; 48],
                std: (0..48).map(|i| 1.0 + i as f64).collect(),
            },
            averaging: JointAveraging::AllJoints,
        }
    }

    #[test]
    fn checkpoint_restores_everything() {
        for flags in [Flags::ALL, Flags::NONE] {
            let mut m = model(flags);
            if let Some(bn) = m.net.input.bn.as_mut() {
                bn.running_var.fill(3.5);
            }
            let bytes = m.to_checkpoint_bytes("cafe", 1);
            assert_eq!(&bytes[..8], b"POSELIFT");
            let (back, header) = LiftingModel::<f64>::from_checkpoint_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(header.config, "cafe");
            assert_eq!(back.to_checkpoint_bytes("cafe", 1), bytes);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = model(Flags::ALL).to_checkpoint_bytes("x", 0);
        assert!(LiftingModel::<f64>::from_checkpoint_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(LiftingModel::<f64>::from_checkpoint_bytes(&extra).is_err());
        assert!(LiftingModel::<f64>::from_checkpoint_bytes(b"NOTALIFT").is_err());
    }
}
