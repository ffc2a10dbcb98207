//! Scoring a lifting model behind the 2D stage, with and without the square
//! crop-and-resize around the detector box.

use crate::dataset::SampleRecord;
use crate::error::{invalid, Result};
use crate::geometry::{decode_heatmap, make_square_crop, Heatmap};
use crate::model::LiftingModel;
use crate::preprocess::{Pose2D, Pose3D};
use crate::scalar::Scalar;

use super::mpjpe;

/// Stand-in for the 2D estimator, operating in network-input pixels.
pub trait TwoDStage<T: Scalar>: Sync {
    fn estimate(&self, joints: &Pose2D<T>, input_size: T) -> Result<Pose2D<T>>;
}

/// Returns the joints unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStage;

impl<T: Scalar> TwoDStage<T> for IdentityStage {
    fn estimate(&self, joints: &Pose2D<T>, _input_size: T) -> Result<Pose2D<T>> {
        Ok(joints.clone())
    }
}

/// Renders a Gaussian heatmap per joint on a grid `stride` times coarser
/// than the input, then reads positions back by peak picking. Positions are
/// quantized to cell centers, the way a heatmap-based 2D estimator would.
#[derive(Debug, Clone, Copy)]
pub struct HeatmapStage {
    pub stride: usize,
    pub sigma_cells: f64,
}

impl Default for HeatmapStage {
    fn default() -> Self {
        Self {
            stride: 4,
            sigma_cells: 1.5,
        }
    }
}

impl<T: Scalar> TwoDStage<T> for HeatmapStage {
    fn estimate(&self, joints: &Pose2D<T>, input_size: T) -> Result<Pose2D<T>> {
        if self.stride == 0 {
            return Err(invalid("heatmap stride must be positive"));
        }
        let cells = (input_size.as_f64() / self.stride as f64).ceil().max(1.0) as usize;
        let stride = self.stride as f64;
        let inv_two_sigma_sq = 1.0 / (2.0 * self.sigma_cells * self.sigma_cells);
        let grids = joints
            .joints()
            .iter()
            .map(|p| {
                let (gx, gy) = (p[0].as_f64() / stride - 0.5, p[1].as_f64() / stride - 0.5);
                let mut g = Vec::with_capacity(cells * cells);
                for row in 0..cells {
                    for col in 0..cells {
                        let d2 = (col as f64 - gx).powi(2) + (row as f64 - gy).powi(2);
                        g.push(T::lit((-d2 * inv_two_sigma_sq).exp()));
                    }
                }
                g
            })
            .collect();
        let peaks = decode_heatmap(&Heatmap::new(cells, cells, grids)?)?;
        let s = T::lit(stride);
        let half = T::lit(0.5);
        Ok(Pose2D::new(
            peaks
                .joints()
                .iter()
                .map(|c| [(c[0] + half) * s, (c[1] + half) * s])
                .collect(),
        ))
    }
}

/// Image joints → square crop → 2D stage → inverse crop.
pub fn through_crop<T: Scalar>(
    record: &SampleRecord,
    stage: &dyn TwoDStage<T>,
    margin_frac: T,
    input_size: T,
) -> Result<Pose2D<T>> {
    let [w, h] = record.image.map(T::lit);
    let crop = make_square_crop(&record.bounding_box()?, margin_frac, w, h, input_size)?;
    let inside = Pose2D::new(record.pose_2d::<T>().joints().iter().map(|p| crop.apply(*p)).collect());
    let est = stage.estimate(&inside, input_size)?;
    Ok(Pose2D::new(est.joints().iter().map(|p| crop.invert(*p)).collect()))
}

/// Image joints → whole image rescaled to the input size → 2D stage → back.
pub fn through_full_frame<T: Scalar>(
    record: &SampleRecord,
    stage: &dyn TwoDStage<T>,
    input_size: T,
) -> Result<Pose2D<T>> {
    let [w, h] = record.image.map(T::lit);
    if !(w > T::zero() && h > T::zero()) {
        return Err(invalid(format!("record {} has no valid image size", record.id)));
    }
    let (sx, sy) = (input_size / w, input_size / h);
    let inside = Pose2D::new(
        record
            .pose_2d::<T>()
            .joints()
            .iter()
            .map(|p| [p[0] * sx, p[1] * sy])
            .collect(),
    );
    let est = stage.estimate(&inside, input_size)?;
    Ok(Pose2D::new(
        est.joints().iter().map(|p| [p[0] / sx, p[1] / sy]).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrComparison {
    /// MPJPE with the square crop around the detector box.
    pub with_cr: f64,
    /// MPJPE with the full frame naively rescaled.
    pub without_cr: f64,
    /// MPJPE on the raw joints, bypassing the 2D stage.
    pub direct: f64,
    /// Largest image-pixel deviation the crop path introduced.
    pub max_cr_shift: f64,
}

/// Scores `model` on `records` through both 2D paths.
pub fn evaluate_with_cr_toggle<T: Scalar>(
    records: &[SampleRecord],
    model: &LiftingModel<T>,
    stage: &dyn TwoDStage<T>,
    margin_frac: T,
    input_size: T,
) -> Result<CrComparison> {
    if records.is_empty() {
        return Err(invalid("no records to evaluate"));
    }
    let mut cr = Vec::with_capacity(records.len());
    let mut full = Vec::with_capacity(records.len());
    let mut raw = Vec::with_capacity(records.len());
    let mut gts: Vec<Pose3D<T>> = Vec::with_capacity(records.len());
    let mut max_shift = 0.0f64;
    for r in records {
        if !(r.bbox[2] > 0.0 && r.bbox[3] > 0.0) {
            return Err(invalid(format!("record {} has no detector box", r.id)));
        }
        let direct = r.pose_2d::<T>();
        let via_crop = through_crop(r, stage, margin_frac, input_size)?;
        for (a, b) in via_crop.joints().iter().zip(direct.joints()) {
            max_shift = max_shift
                .max((a[0] - b[0]).abs().as_f64())
                .max((a[1] - b[1]).abs().as_f64());
        }
        cr.push(via_crop);
        full.push(through_full_frame(r, stage, input_size)?);
        raw.push(direct);
        gts.push(r.pose_3d());
    }
    let score = |poses: &[Pose2D<T>]| -> Result<f64> {
        let preds = model.predict(poses)?;
        Ok(mpjpe(&preds, &gts, &model.spec, model.averaging)?.as_f64())
    };
    Ok(CrComparison {
        with_cr: score(&cr)?,
        without_cr: score(&full)?,
        direct: score(&raw)?,
        max_cr_shift: max_shift,
    })
}
