//! Square crop-and-resize around a detected person, its exact inverse, and
//! per-joint heatmap peak decoding.
//!
//! Coordinates are continuous pixel positions. The crop square is never
//! clamped to the image, so the forward and inverse maps are an exact pair.

use crate::error::{invalid, Result};
use crate::preprocess::Pose2D;
use crate::scalar::Scalar;

pub const DEFAULT_MARGIN_FRAC: f64 = 0.15;
pub const DEFAULT_OUT_SIZE: f64 = 224.0;

/// Axis-aligned detector box in image pixels; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > T::zero() && self.h > T::zero()) || !self.w.is_finite() || !self.h.is_finite() {
            return Err(invalid(format!(
                "bounding box needs positive finite size, got w={} h={}",
                self.w, self.h
            )));
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(invalid("bounding box origin must be finite"));
        }
        Ok(())
    }

    pub fn center(&self) -> [T; 2] {
        let half = T::lit(0.5);
        [self.x + self.w * half, self.y + self.h * half]
    }

    /// Tightest box around a set of points. Degenerate extents are widened to
    /// `min_extent` so the result is always a valid box.
    pub fn enclosing(points: &[[T; 2]], min_extent: T) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| invalid("cannot bound an empty point set"))?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
        let half = T::lit(0.5);
        let fix = |lo: &mut T, hi: &mut T| {
            if *hi - *lo < min_extent {
                let c = (*lo + *hi) * half;
                *lo = c - min_extent * half;
                *hi = c + min_extent * half;
            }
        };
        let (mut lx, mut hx, mut ly, mut hy) = (lo[0], hi[0], lo[1], hi[1]);
        fix(&mut lx, &mut hx);
        fix(&mut ly, &mut hy);
        Self::new(lx, ly, hx - lx, hy - ly)
    }
}

/// Square crop of side `side` at `origin`, resampled to `out_size` × `out_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform<T> {
    pub origin_x: T,
    pub origin_y: T,
    pub side: T,
    pub out_size: T,
}

impl<T: Scalar> CropTransform<T> {
    pub fn new(origin_x: T, origin_y: T, side: T, out_size: T) -> Result<Self> {
        if !(side > T::zero()) || !(out_size > T::zero()) {
            return Err(invalid(format!(
                "crop side and output size must be positive, got side={side} out={out_size}"
            )));
        }
        Ok(Self {
            origin_x,
            origin_y,
            side,
            out_size,
        })
    }

    /// Pixels in the crop per pixel in the image.
    #[inline]
    pub fn scale(&self) -> T {
        self.out_size / self.side
    }

    /// Image pixels → crop pixels.
    #[inline]
    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        let s = self.scale();
        [(p[0] - self.origin_x) * s, (p[1] - self.origin_y) * s]
    }

    /// Crop pixels → image pixels.
    #[inline]
    pub fn invert(&self, p: [T; 2]) -> [T; 2] {
        let s = self.side / self.out_size;
        [p[0] * s + self.origin_x, p[1] * s + self.origin_y]
    }
}

/// Builds the square crop around `bbox`: side is the longest box side grown
/// by `margin_frac`, centered on the box center. Image size is accepted for
/// interface symmetry but never used to clamp.
pub fn make_square_crop<T: Scalar>(
    bbox: &BoundingBox<T>,
    margin_frac: T,
    image_w: T,
    image_h: T,
    out_size: T,
) -> Result<CropTransform<T>> {
    bbox.validate()?;
    if !(margin_frac >= T::zero()) || !margin_frac.is_finite() {
        return Err(invalid(format!("margin fraction must be >= 0, got {margin_frac}")));
    }
    if !(image_w > T::zero() && image_h > T::zero()) {
        return Err(invalid("image dimensions must be positive"));
    }
    let side = bbox.w.max(bbox.h) * (T::one() + margin_frac);
    let [cx, cy] = bbox.center();
    let half = side * T::lit(0.5);
    CropTransform::new(cx - half, cy - half, side, out_size)
}

pub fn apply_crop<T: Scalar>(t: &CropTransform<T>, p: [T; 2]) -> [T; 2] {
    t.apply(p)
}

pub fn invert_crop<T: Scalar>(t: &CropTransform<T>, p: [T; 2]) -> [T; 2] {
    t.invert(p)
}

/// One non-negative activation grid per joint, each stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    width: usize,
    height: usize,
    grids: Vec<Vec<T>>,
}

impl<T: Scalar> Heatmap<T> {
    pub fn new(width: usize, height: usize, grids: Vec<Vec<T>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("heatmap grid must be non-empty"));
        }
        if grids.is_empty() {
            return Err(invalid("heatmap needs at least one joint grid"));
        }
        for (j, g) in grids.iter().enumerate() {
            if g.len() != width * height {
                return Err(invalid(format!(
                    "joint {j} grid has {} cells, expected {}",
                    g.len(),
                    width * height
                )));
            }
            if let Some(v) = g.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
                return Err(invalid(format!("joint {j} grid has invalid activation {v}")));
            }
        }
        Ok(Self { width, height, grids })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn joint_count(&self) -> usize {
        self.grids.len()
    }

    pub fn grid(&self, joint: usize) -> &[T] {
        &self.grids[joint]
    }

    pub fn at(&self, joint: usize, col: usize, row: usize) -> T {
        self.grids[joint][row * self.width + col]
    }
}

/// Picks the maximum cell of every joint grid and returns its `(col, row)`.
/// Ties go to the smallest row-major index.
pub fn decode_heatmap<T: Scalar>(hm: &Heatmap<T>) -> Result<Pose2D<T>> {
    let mut joints = Vec::with_capacity(hm.joint_count());
    for grid in &hm.grids {
        let mut best = 0usize;
        for (i, v) in grid.iter().enumerate().skip(1) {
            // strict comparison keeps the first maximum
            if *v > grid[best] {
                best = i;
            }
        }
        let col = best % hm.width;
        let row = best / hm.width;
        joints.push([T::from_usize(col).unwrap(), T::from_usize(row).unwrap()]);
    }
    Ok(Pose2D::new(joints))
}
