//! Pose containers, hip-centering, flattening to network vectors, and
//! per-dimension standardization.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{contract, invalid, Result};
use crate::scalar::Scalar;

/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Joint names in the 17-joint Human3.6M order, root (hip) first.
pub const H36M_JOINTS: [&str; 17] = [
    "hip",
    "r_hip",
    "r_knee",
    "r_foot",
    "l_hip",
    "l_knee",
    "l_foot",
    "spine",
    "thorax",
    "neck_nose",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

/// Fixed joint ordering plus the root joint every pose is centered on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    joint_names: Vec<String>,
    root_index: usize,
    /// When set (the default), the always-zero root joint is left out of the
    /// network vectors.
    exclude_root: bool,
}

impl SkeletonSpec {
    pub fn new(joint_names: Vec<String>, root_index: usize) -> Result<Self> {
        Self::with_root_policy(joint_names, root_index, true)
    }

    pub fn with_root_policy(joint_names: Vec<String>, root_index: usize, exclude_root: bool) -> Result<Self> {
        if joint_names.len() < 2 {
            return Err(invalid("a skeleton needs at least two joints"));
        }
        if root_index >= joint_names.len() {
            return Err(invalid(format!(
                "root index {root_index} out of range for {} joints",
                joint_names.len()
            )));
        }
        for (i, a) in joint_names.iter().enumerate() {
            if joint_names[..i].contains(a) {
                return Err(invalid(format!("duplicate joint name {a:?}")));
            }
        }
        Ok(Self {
            joint_names,
            root_index,
            exclude_root,
        })
    }

    pub fn h36m() -> Self {
        Self::new(H36M_JOINTS.iter().map(|s| s.to_string()).collect(), 0).unwrap()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn excludes_root(&self) -> bool {
        self.exclude_root
    }

    /// Number of joints carried in network vectors.
    pub fn vector_joints(&self) -> usize {
        if self.exclude_root {
            self.joint_count() - 1
        } else {
            self.joint_count()
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.vector_joints()
    }

    pub fn output_dim(&self) -> usize {
        3 * self.vector_joints()
    }

    fn vector_joint_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.joint_count()).filter(move |&j| !(self.exclude_root && j == self.root_index))
    }
}

/// Joint coordinates of one skeleton in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose<T, const D: usize> {
    joints: Vec<[T; D]>,
}

pub type Pose2D<T> = Pose<T, 2>;
pub type Pose3D<T> = Pose<T, 3>;

impl<T: Scalar, const D: usize> Pose<T, D> {
    pub fn new(joints: Vec<[T; D]>) -> Self {
        Self { joints }
    }

    pub fn zeros(count: usize) -> Self {
        Self {
            joints: vec![[T::zero(); D]; count],
        }
    }

    pub fn joints(&self) -> &[[T; D]] {
        &self.joints
    }

    pub fn joints_mut(&mut self) -> &mut [[T; D]] {
        &mut self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|v| v.is_finite())
    }

    pub fn check(&self, spec: &SkeletonSpec) -> Result<()> {
        if self.joints.len() != spec.joint_count() {
            return Err(invalid(format!(
                "pose has {} joints, skeleton expects {}",
                self.joints.len(),
                spec.joint_count()
            )));
        }
        if !self.is_finite() {
            return Err(invalid("pose contains non-finite coordinates"));
        }
        Ok(())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Pose<U, D> {
        Pose {
            joints: self.joints.iter().map(|p| p.map(&f)).collect(),
        }
    }
}

/// Subtracts the root joint from every joint; the root becomes exactly zero.
pub fn root_center<T: Scalar, const D: usize>(pose: &Pose<T, D>, spec: &SkeletonSpec) -> Result<Pose<T, D>> {
    pose.check(spec)?;
    let root = pose.joints[spec.root_index()];
    let joints = pose
        .joints
        .iter()
        .map(|p| std::array::from_fn(|k| p[k] - root[k]))
        .collect();
    Ok(Pose { joints })
}

fn ensure_centered<T: Scalar, const D: usize>(pose: &Pose<T, D>, spec: &SkeletonSpec) -> Result<()> {
    pose.check(spec)?;
    let tol = T::lit(1e-9);
    if pose.joints[spec.root_index()].iter().any(|v| v.abs() > tol) {
        return Err(contract("pose is not root-centered"));
    }
    Ok(())
}

fn flatten<T: Scalar, const D: usize>(pose: &Pose<T, D>, spec: &SkeletonSpec) -> Result<Vec<T>> {
    ensure_centered(pose, spec)?;
    let mut out = Vec::with_capacity(D * spec.vector_joints());
    for j in spec.vector_joint_indices() {
        out.extend_from_slice(&pose.joints[j]);
    }
    Ok(out)
}

fn unflatten<T: Scalar, const D: usize>(v: &[T], spec: &SkeletonSpec) -> Result<Pose<T, D>> {
    let expected = D * spec.vector_joints();
    if v.len() != expected {
        return Err(invalid(format!("vector has length {}, expected {expected}", v.len())));
    }
    let mut pose = Pose::<T, D>::zeros(spec.joint_count());
    for (chunk, j) in v.chunks_exact(D).zip(spec.vector_joint_indices()) {
        pose.joints[j].copy_from_slice(chunk);
    }
    Ok(pose)
}

/// Flattens a root-centered 2D pose into the network input vector.
pub fn to_input_vector<T: Scalar>(pose: &Pose2D<T>, spec: &SkeletonSpec) -> Result<Vec<T>> {
    flatten(pose, spec)
}

pub fn from_input_vector<T: Scalar>(v: &[T], spec: &SkeletonSpec) -> Result<Pose2D<T>> {
    unflatten(v, spec)
}

/// Flattens a root-centered 3D pose into the network target vector.
pub fn to_output_vector<T: Scalar>(pose: &Pose3D<T>, spec: &SkeletonSpec) -> Result<Vec<T>> {
    flatten(pose, spec)
}

/// Rebuilds a 3D pose from a network output vector; the root sits at the origin.
pub fn from_output_vector<T: Scalar>(v: &[T], spec: &SkeletonSpec) -> Result<Pose3D<T>> {
    unflatten(v, spec)
}

/// Per-dimension mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> NormStats<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (*x - *m) / *s)
            .collect())
    }

    pub fn denormalize(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| *x * *s + *m)
            .collect())
    }

    /// Normalizes every row of a sample matrix.
    pub fn normalize_rows(&self, rows: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_len(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - *m) / *s;
            }
        }
        Ok(out)
    }

    pub fn denormalize_rows(&self, rows: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_len(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = *x * *s + *m;
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.mean.len() {
            return Err(invalid(format!(
                "vector length {len} does not match statistics of dimension {}",
                self.mean.len()
            )));
        }
        Ok(())
    }
}

/// Fits per-column mean and population standard deviation over the rows of
/// `data` with a sequential Welford reduction. Standard deviations are floored
/// at [`STD_FLOOR`].
pub fn fit_stats<T: Scalar>(data: ArrayView2<T>) -> Result<NormStats<T>> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(invalid("cannot fit statistics on an empty dataset"));
    }
    let dim = data.ncols();
    let mut mean = vec![T::zero(); dim];
    let mut m2 = vec![T::zero(); dim];
    for (k, row) in data.axis_iter(Axis(0)).enumerate() {
        let count = T::from_usize(k + 1).unwrap();
        for ((x, m), s) in row.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
            let delta = *x - *m;
            *m += delta / count;
            *s += delta * (*x - *m);
        }
    }
    let n = T::from_usize(data.nrows()).unwrap();
    let floor = T::lit(STD_FLOOR);
    let std = m2.into_iter().map(|s| (s / n).sqrt().max(floor)).collect();
    Ok(NormStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> SkeletonSpec {
        SkeletonSpec::new(vec!["root".into(), "tip".into()], 0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(SkeletonSpec::new(vec!["a".into()], 0).is_err());
        assert!(SkeletonSpec::new(vec!["a".into(), "b".into()], 2).is_err());
        assert!(SkeletonSpec::new(vec!["a".into(), "a".into()], 0).is_err());
        let h = SkeletonSpec::h36m();
        assert_eq!((h.joint_count(), h.input_dim(), h.output_dim()), (17, 32, 48));
    }

    #[test]
    fn root_center_subtracts_root() {
        let p = Pose2D::new(vec![[5.0, 7.0], [8.0, 11.0]]);
        let c = root_center(&p, &tiny_spec()).unwrap();
        assert_eq!(c.joints(), &[[0.0, 0.0], [3.0, 4.0]]);
        assert_eq!(root_center(&c, &tiny_spec()).unwrap(), c);
    }

    #[test]
    fn root_center_matches_loop_oracle() {
        let spec = SkeletonSpec::h36m();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let joints: Vec<[f64; 3]> = (0..17)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1000.0..1000.0)))
            .collect();
        let pose = Pose3D::new(joints.clone());
        let c = root_center(&pose, &spec).unwrap();
        for (got, raw) in c.joints().iter().zip(&joints) {
            for k in 0..3 {
                assert_eq!(got[k], raw[k] - joints[0][k]);
            }
        }
        assert_eq!(c.joints()[0], [0.0; 3]);
    }

    #[test]
    fn root_center_rejects_wrong_size() {
        let p = Pose2D::new(vec![[0.0, 0.0]; 3]);
        assert!(root_center(&p, &tiny_spec()).is_err());
    }

    #[test]
    fn vector_examples() {
        let spec = tiny_spec();
        let p = Pose2D::new(vec![[0.0, 0.0], [3.0, 4.0]]);
        assert_eq!(to_input_vector(&p, &spec).unwrap(), vec![3.0, 4.0]);
        let off = Pose2D::new(vec![[1.0, 0.0], [3.0, 4.0]]);
        assert!(matches!(
            to_input_vector(&off, &spec),
            Err(crate::Error::ContractViolation(_))
        ));

        let h = SkeletonSpec::h36m();
        let v: Vec<f64> = (0..48).map(|i| i as f64).collect();
        let pose = from_output_vector(&v, &h).unwrap();
        assert_eq!(pose.joints()[0], [0.0; 3]);
        assert_eq!(to_output_vector(&pose, &h).unwrap(), v);
        assert!(from_output_vector(&v[..47], &h).is_err());
        let zero = from_output_vector(&[0.0; 48], &h).unwrap();
        assert!(zero.joints().iter().all(|j| *j == [0.0; 3]));
        let centered = Pose2D::new(vec![[0.0, 0.0]; 17]);
        assert_eq!(to_input_vector(&centered, &h).unwrap().len(), 32);
    }

    #[test]
    fn root_included_policy() {
        let spec = SkeletonSpec::with_root_policy(vec!["r".into(), "a".into(), "b".into()], 1, false).unwrap();
        assert_eq!(spec.input_dim(), 6);
        let p = Pose2D::new(vec![[1.0, 2.0], [0.0, 0.0], [3.0, 4.0]]);
        assert_eq!(to_input_vector(&p, &spec).unwrap(), vec![1.0, 2.0, 0.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn two_point_and_constant_stats() {
        let s = fit_stats(array![[0.0], [2.0]].view()).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        let c = fit_stats(array![[5.0, 1.0], [5.0, 1.0], [5.0, 1.0]].view()).unwrap();
        assert_eq!(c.std, vec![STD_FLOOR, STD_FLOOR]);
        let z = c.normalize(&[5.0, 1.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(fit_stats(Array2::<f64>::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn normalize_round_trip_and_mean() {
        let s = NormStats {
            mean: vec![1.0, -2.0, 3.5],
            std: vec![0.5, 2.0, 10.0],
        };
        let v = [3.0f64, 7.0, -1.25];
        let back = s.denormalize(&s.normalize(&v).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(s.normalize(&s.mean).unwrap(), vec![0.0; 3]);
        assert!(s.normalize(&[1.0]).is_err());
        assert!(s.denormalize(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }
}
