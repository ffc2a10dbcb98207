//! Synthetic paired 2D/3D data: forward kinematics over a joint tree with
//! randomized bone directions, projected through pinhole cameras.
//!
//! World frame is millimeters with +y pointing down (image convention) and
//! the root joint at the origin.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{SampleRecord, Split};
use crate::error::{invalid, Error, Result};
use crate::geometry::BoundingBox;
use crate::preprocess::{Pose2D, Pose3D, SkeletonSpec};
use crate::scalar::Scalar;

pub type Mat3<T> = [[T; 3]; 3];

/// Pinhole camera: `p_cam = R·p + t`, `u = fx·x/z + cx`, `v = fy·y/z + cy`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub rotation: Mat3<T>,
    pub translation: [T; 3],
    pub image_w: T,
    pub image_h: T,
}

impl<T: Scalar> CameraModel<T> {
    pub fn new(
        focal: [T; 2],
        principal: [T; 2],
        rotation: Mat3<T>,
        translation: [T; 3],
        image: [T; 2],
    ) -> Result<Self> {
        let cam = Self {
            fx: focal[0],
            fy: focal[1],
            cx: principal[0],
            cy: principal[1],
            rotation,
            translation,
            image_w: image[0],
            image_h: image[1],
        };
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
        for i in 0..3 {
            for j in 0..3 {
                let dot: T = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { T::one() } else { T::zero() };
                if (dot - want).abs() > tol {
                    return Err(invalid("camera rotation is not orthonormal"));
                }
            }
        }
        if !(cam.fx > T::zero() && cam.fy > T::zero()) {
            return Err(invalid("focal lengths must be positive"));
        }
        if !(cam.image_w > T::zero() && cam.image_h > T::zero()) {
            return Err(invalid("image size must be positive"));
        }
        Ok(cam)
    }

    /// Rigid transform of every joint into the camera frame.
    pub fn to_camera(&self, pose: &Pose3D<T>) -> Pose3D<T> {
        let r = &self.rotation;
        let t = &self.translation;
        Pose3D::new(
            pose.joints()
                .iter()
                .map(|p| std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i]))
                .collect(),
        )
    }

    /// Perspective division of camera-frame points.
    pub fn project_camera_frame(&self, pose: &Pose3D<T>) -> Result<Pose2D<T>> {
        let mut out = Vec::with_capacity(pose.len());
        for (j, p) in pose.joints().iter().enumerate() {
            if !(p[2] > T::zero()) {
                return Err(Error::DegenerateGeometry(format!(
                    "joint {j} has non-positive depth {}",
                    p[2]
                )));
            }
            out.push([self.fx * (p[0] / p[2]) + self.cx, self.fy * (p[1] / p[2]) + self.cy]);
        }
        Ok(Pose2D::new(out))
    }
}

/// Projects world-frame joints to image pixels.
pub fn project<T: Scalar>(cam: &CameraModel<T>, pose: &Pose3D<T>) -> Result<Pose2D<T>> {
    cam.project_camera_frame(&cam.to_camera(pose))
}

fn rot_y<T: Scalar>(angle: f64) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]].map(|r| r.map(T::lit))
}

fn rot_x<T: Scalar>(angle: f64) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]].map(|r| r.map(T::lit))
}

fn matmul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Four cameras circling the subject at 45° + k·90°, tilted 10° and placed
/// 4 to 6 m away; focal 1150 px, principal point (500, 500), 1000×1000 images.
pub fn default_camera_pool<T: Scalar>() -> Vec<CameraModel<T>> {
    let distances = [4000.0, 4700.0, 5300.0, 6000.0];
    let pitch = 10f64.to_radians();
    (0..4)
        .map(|k| {
            let azimuth = (45.0 + 90.0 * k as f64).to_radians();
            let rotation = matmul(&rot_x::<T>(pitch), &rot_y::<T>(azimuth));
            CameraModel::new(
                [T::lit(1150.0); 2],
                [T::lit(500.0); 2],
                rotation,
                [T::zero(), T::zero(), T::lit(distances[k])],
                [T::lit(1000.0); 2],
            )
            .expect("default camera is valid")
        })
        .collect()
}

/// Joint tree with bone lengths, rest directions and per-bone cone limits.
///
/// Joints are ordered so every parent precedes its children; joint 0 is the
/// root. A sampled bone direction lies within `cone[j]` radians of
/// `rest_dir[j]`, and the whole body is then turned about the vertical axis by
/// up to `yaw_range` radians either way.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTemplate<T> {
    pub parents: Vec<Option<usize>>,
    pub bone_lengths: Vec<T>,
    pub rest_dirs: Vec<[T; 3]>,
    pub cones: Vec<T>,
    pub yaw_range: T,
}

impl<T: Scalar> SkeletonTemplate<T> {
    pub fn validate(&self) -> Result<()> {
        let n = self.parents.len();
        if n < 2 || self.bone_lengths.len() != n || self.rest_dirs.len() != n || self.cones.len() != n {
            return Err(invalid(
                "template arrays must all have one entry per joint (at least two)",
            ));
        }
        if self.parents[0].is_some() {
            return Err(invalid("joint 0 must be the root"));
        }
        for j in 1..n {
            match self.parents[j] {
                Some(p) if p < j => {}
                _ => return Err(invalid(format!("joint {j} must have a parent with a smaller index"))),
            }
            if !(self.bone_lengths[j] > T::zero()) {
                return Err(invalid(format!("bone {j} must have positive length")));
            }
            let d = self.rest_dirs[j];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (norm - T::one()).abs() > T::lit(1e-9) {
                return Err(invalid(format!("rest direction of joint {j} is not unit length")));
            }
            if !(self.cones[j] >= T::zero()) {
                return Err(invalid("cone angles must be non-negative"));
            }
        }
        if !(self.yaw_range >= T::zero()) {
            return Err(invalid("yaw range must be non-negative"));
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// Default 17-joint body in Human3.6M order with round anthropometric
    /// bone lengths (mm).
    pub fn h36m() -> Self {
        const DOWN: [f64; 3] = [0.0, 1.0, 0.0];
        const UP: [f64; 3] = [0.0, -1.0, 0.0];
        const LEFT: [f64; 3] = [1.0, 0.0, 0.0];
        const RIGHT: [f64; 3] = [-1.0, 0.0, 0.0];
        #[rustfmt::skip]
        let bones: [(Option<usize>, f64, [f64; 3], f64); 17] = [
            (None, 0.0, [0.0, 0.0, 0.0], 0.0),
            (Some(0), 130.0, RIGHT, 0.1),   // r_hip
            (Some(1), 450.0, DOWN, 0.6),    // r_knee
            (Some(2), 440.0, DOWN, 0.6),    // r_foot
            (Some(0), 130.0, LEFT, 0.1),    // l_hip
            (Some(4), 450.0, DOWN, 0.6),    // l_knee
            (Some(5), 440.0, DOWN, 0.6),    // l_foot
            (Some(0), 230.0, UP, 0.25),     // spine
            (Some(7), 230.0, UP, 0.25),     // thorax
            (Some(8), 110.0, UP, 0.3),      // neck_nose
            (Some(9), 120.0, UP, 0.3),      // head
            (Some(8), 160.0, LEFT, 0.2),    // l_shoulder
            (Some(11), 280.0, DOWN, 1.0),   // l_elbow
            (Some(12), 250.0, DOWN, 1.2),   // l_wrist
            (Some(8), 160.0, RIGHT, 0.2),   // r_shoulder
            (Some(14), 280.0, DOWN, 1.0),   // r_elbow
            (Some(15), 250.0, DOWN, 1.2),   // r_wrist
        ];
        Self {
            parents: bones.iter().map(|b| b.0).collect(),
            bone_lengths: bones.iter().map(|b| T::lit(b.1)).collect(),
            rest_dirs: bones.iter().map(|b| b.2.map(T::lit)).collect(),
            cones: bones.iter().map(|b| T::lit(b.3)).collect(),
            yaw_range: T::lit(std::f64::consts::FRAC_PI_4),
        }
    }

    /// Same tree with every angular range set to zero.
    pub fn rigid(&self) -> Self {
        Self {
            cones: vec![T::zero(); self.cones.len()],
            yaw_range: T::zero(),
            ..self.clone()
        }
    }

    /// Joint positions with every bone along its rest direction.
    pub fn rest_pose(&self) -> Pose3D<T> {
        let mut joints = vec![[T::zero(); 3]; self.joint_count()];
        for j in 1..self.joint_count() {
            let p = joints[self.parents[j].unwrap()];
            let d = self.rest_dirs[j];
            let len = self.bone_lengths[j];
            joints[j] = std::array::from_fn(|k| p[k] + len * d[k]);
        }
        Pose3D::new(joints)
    }
}

/// Unit vector within `cone` radians of unit vector `axis`, uniform over the
/// spherical cap.
fn direction_in_cone<T: Scalar, R: Rng + ?Sized>(axis: [T; 3], cone: T, rng: &mut R) -> [T; 3] {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let cos_max = cone.cos();
    let cos_t = T::one() - T::lit(u1) * (T::one() - cos_max);
    let sin_t = (T::one() - cos_t * cos_t).max(T::zero()).sqrt();
    let phi = T::lit(u2 * std::f64::consts::TAU);
    // any unit vector orthogonal to the axis
    let helper = if axis[0].abs() < T::lit(0.9) {
        [T::one(), T::zero(), T::zero()]
    } else {
        [T::zero(), T::one(), T::zero()]
    };
    let cross = |a: [T; 3], b: [T; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let mut e1 = cross(axis, helper);
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = e1.map(|v| v / n);
    let e2 = cross(axis, e1);
    let (s, c) = (phi.sin(), phi.cos());
    let dir: [T; 3] = std::array::from_fn(|k| cos_t * axis[k] + sin_t * (c * e1[k] + s * e2[k]));
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    dir.map(|v| v / norm)
}

/// Forward-kinematics sample with the root at the origin.
pub fn sample_pose<T: Scalar, R: Rng + ?Sized>(template: &SkeletonTemplate<T>, rng: &mut R) -> Pose3D<T> {
    let n = template.joint_count();
    let mut joints = vec![[T::zero(); 3]; n];
    for j in 1..n {
        let p = joints[template.parents[j].unwrap()];
        let d = direction_in_cone(template.rest_dirs[j], template.cones[j], rng);
        let len = template.bone_lengths[j];
        joints[j] = std::array::from_fn(|k| p[k] + len * d[k]);
    }
    let yaw = T::lit(2.0 * rng.random::<f64>() - 1.0) * template.yaw_range;
    let (s, c) = (yaw.sin(), yaw.cos());
    for p in &mut joints {
        *p = [c * p[0] + s * p[2], p[1], c * p[2] - s * p[0]];
    }
    Pose3D::new(joints)
}

/// Counts for a 70/15/15 split; test takes whatever rounding leaves over.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    [train, val, n - train - val]
}

/// Relative padding added to each side of the tight joint box to form the
/// simulated detector box.
pub const DETECTOR_PAD_FRAC: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Generates `samples` records: pose, camera draw, projection, isotropic
/// Gaussian pixel noise on the 2D joints, simulated detector box, and a
/// seeded 70/15/15 split. Sample `i` draws from its own stream derived from
/// `(seed, i)`, so records are independent of generation order.
pub fn make_dataset<T: Scalar>(
    template: &SkeletonTemplate<T>,
    spec: &SkeletonSpec,
    cameras: &[CameraModel<T>],
    params: &SynthParams,
) -> Result<Vec<SampleRecord>> {
    template.validate()?;
    if params.samples == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if cameras.is_empty() {
        return Err(invalid("camera pool is empty"));
    }
    if template.joint_count() != spec.joint_count() || spec.root_index() != 0 {
        return Err(invalid("template and skeleton spec disagree on joints or root"));
    }
    if !(params.noise_sigma >= 0.0) || !params.noise_sigma.is_finite() {
        return Err(invalid("noise sigma must be a non-negative number"));
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..params.samples).collect();
    order.shuffle(&mut split_rng);
    let [n_train, n_val, _] = split_sizes(params.samples);
    let mut splits = vec![Split::Test; params.samples];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let mut records = Vec::with_capacity(params.samples);
    for (i, split) in splits.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64 + 1);
        let pose = sample_pose(template, &mut rng);
        let camera = rng.random_range(0..cameras.len());
        let cam = &cameras[camera];
        let cam_pose = cam.to_camera(&pose);
        let mut uv = cam.project_camera_frame(&cam_pose)?;
        if params.noise_sigma > 0.0 {
            for p in uv.joints_mut() {
                for c in p.iter_mut() {
                    *c += T::lit(noise.sample(&mut rng));
                }
            }
        }
        let tight = BoundingBox::enclosing(uv.joints(), T::one())?;
        let pad_x = tight.w * T::lit(DETECTOR_PAD_FRAC);
        let pad_y = tight.h * T::lit(DETECTOR_PAD_FRAC);
        records.push(SampleRecord {
            id: i as u64,
            split,
            camera,
            image: [cam.image_w.as_f64(), cam.image_h.as_f64()],
            bbox: [
                (tight.x - pad_x).as_f64(),
                (tight.y - pad_y).as_f64(),
                (tight.w + pad_x + pad_x).as_f64(),
                (tight.h + pad_y + pad_y).as_f64(),
            ],
            joints_2d: uv.joints().iter().map(|p| p.map(T::as_f64)).collect(),
            joints_3d: cam_pose.joints().iter().map(|p| p.map(T::as_f64)).collect(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn template_is_valid() {
        SkeletonTemplate::<f64>::h36m().validate().unwrap();
        let mut bad = SkeletonTemplate::<f64>::h36m();
        bad.parents[3] = Some(5);
        assert!(bad.validate().is_err());
        let mut bad = SkeletonTemplate::<f64>::h36m();
        bad.bone_lengths[4] = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_ranges_give_rest_pose() {
        let t = SkeletonTemplate::<f64>::h36m().rigid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(sample_pose(&t, &mut rng), t.rest_pose());
    }

    #[test]
    fn bone_lengths_are_preserved() {
        let t = SkeletonTemplate::<f64>::h36m();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = sample_pose(&t, &mut rng);
            for j in 1..17 {
                let d = dist(p.joints()[j], p.joints()[t.parents[j].unwrap()]);
                assert!((d - t.bone_lengths[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn directions_respect_cones() {
        let t = SkeletonTemplate::<f64> {
            yaw_range: 0.0,
            ..SkeletonTemplate::h36m()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = sample_pose(&t, &mut rng);
            for j in 1..17 {
                let parent = p.joints()[t.parents[j].unwrap()];
                let d: Vec<f64> = (0..3)
                    .map(|k| (p.joints()[j][k] - parent[k]) / t.bone_lengths[j])
                    .collect();
                let cos: f64 = (0..3).map(|k| d[k] * t.rest_dirs[j][k]).sum();
                assert!(cos >= t.cones[j].cos() - 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_pose() {
        let t = SkeletonTemplate::<f64>::h36m();
        let a = sample_pose(&t, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_pose(&t, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    fn axis_camera() -> CameraModel<f64> {
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        CameraModel::new([1150.0, 1100.0], [500.0, 480.0], eye, [0.0, 0.0, 0.0], [1000.0, 1000.0]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let cam = axis_camera();
        let on_axis = project(&cam, &Pose3D::new(vec![[0.0, 0.0, 3000.0]])).unwrap();
        assert_eq!(on_axis.joints()[0], [500.0, 480.0]);
        let near = project(&cam, &Pose3D::new(vec![[100.0, -50.0, 2000.0]]))
            .unwrap()
            .joints()[0];
        let far = project(&cam, &Pose3D::new(vec![[100.0, -50.0, 4000.0]]))
            .unwrap()
            .joints()[0];
        assert!(((near[0] - 500.0) / 2.0 - (far[0] - 500.0)).abs() < 1e-12);
        assert!(((near[1] - 480.0) / 2.0 - (far[1] - 480.0)).abs() < 1e-12);
        assert!(matches!(
            project(&cam, &Pose3D::new(vec![[0.0, 0.0, 0.0]])),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraModel::new([1.0, 1.0], [0.0, 0.0], skew, [0.0; 3], [10.0, 10.0]).is_err());
    }

    #[test]
    fn default_pool_sees_everything() {
        let t = SkeletonTemplate::<f64>::h36m();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for cam in default_camera_pool::<f64>() {
            for _ in 0..50 {
                let uv = project(&cam, &sample_pose(&t, &mut rng)).unwrap();
                let ys: Vec<f64> = uv.joints().iter().map(|p| p[1]).collect();
                let height = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
                assert!(height > 100.0 && height < 500.0, "height {height}");
                assert!(uv
                    .joints()
                    .iter()
                    .all(|p| p[0] > 0.0 && p[0] < 1000.0 && p[1] > 0.0 && p[1] < 1000.0));
            }
        }
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10), [7, 1, 2]);
        assert_eq!(split_sizes(5000), [3500, 750, 750]);
        assert_eq!(split_sizes(1), [0, 0, 1]);
    }

    #[test]
    fn noiseless_fixed_camera_is_deterministic_projection() {
        let spec = SkeletonSpec::h36m();
        let t = SkeletonTemplate::<f64>::h36m();
        let cams = vec![default_camera_pool::<f64>().remove(1)];
        let params = SynthParams {
            samples: 20,
            noise_sigma: 0.0,
            seed: 3,
        };
        let recs = make_dataset(&t, &spec, &cams, &params).unwrap();
        assert_eq!(crate::dataset::split_counts(&recs), [14, 3, 3]);
        for r in &recs {
            let uv = cams[0].project_camera_frame(&r.pose_3d::<f64>()).unwrap();
            for (a, b) in uv.joints().iter().zip(&r.joints_2d) {
                assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
        }
        assert_eq!(recs, make_dataset(&t, &spec, &cams, &params).unwrap());
        let zero = SynthParams { samples: 0, ..params };
        assert!(make_dataset(&t, &spec, &cams, &zero).is_err());
    }
}
