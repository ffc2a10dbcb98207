//! Error metric and the experiment harnesses built on it.

mod ablation;
mod cr;

pub use ablation::{capacity_sweep, run_ablation, AblationReport, AblationRow, ReportMeta, SweepCell, SweepReport};
pub use cr::{
    evaluate_with_cr_toggle, through_crop, through_full_frame, CrComparison, HeatmapStage, IdentityStage, TwoDStage,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::preprocess::{root_center, Pose3D, SkeletonSpec};
use crate::scalar::Scalar;

/// Which joints enter the per-pose average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointAveraging {
    /// Every joint, the root contributing a zero distance.
    #[default]
    AllJoints,
    NonRoot,
}

impl JointAveraging {
    pub fn as_str(self) -> &'static str {
        match self {
            JointAveraging::AllJoints => "all_joints",
            JointAveraging::NonRoot => "non_root",
        }
    }
}

/// Mean per-joint position error after root-centering both sides.
pub fn mpjpe<T: Scalar>(
    preds: &[Pose3D<T>],
    gts: &[Pose3D<T>],
    spec: &SkeletonSpec,
    averaging: JointAveraging,
) -> Result<T> {
    if preds.len() != gts.len() {
        return Err(invalid(format!(
            "{} predictions but {} ground-truth poses",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(invalid("mpjpe needs at least one pose"));
    }
    let root = spec.root_index();
    let per_pose = match averaging {
        JointAveraging::AllJoints => spec.joint_count(),
        JointAveraging::NonRoot => spec.joint_count() - 1,
    };
    // one running sum over every (sample, joint) pair, divided once
    let mut total = T::zero();
    for (p, g) in preds.iter().zip(gts) {
        let p = root_center(p, spec)?;
        let g = root_center(g, spec)?;
        for (j, (a, b)) in p.joints().iter().zip(g.joints()).enumerate() {
            if averaging == JointAveraging::NonRoot && j == root {
                continue;
            }
            let d: T = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
            total += d.sqrt();
        }
    }
    Ok(total / T::from_usize(per_pose * preds.len()).unwrap())
}
