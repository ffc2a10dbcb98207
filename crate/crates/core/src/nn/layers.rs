use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::scalar::Scalar;

/// Fully connected layer computing `x · Wᵀ + b`; `weight` is `d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Array2::zeros((d_out, d_in)),
            bias: Array1::zeros(d_out),
        }
    }

    /// Weights uniform in ±sqrt(6 / d_in), biases zero.
    pub fn kaiming_uniform<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / d_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((d_out, d_in), || T::lit(bound * (2.0 * rng.random::<f64>() - 1.0)));
        Self {
            weight,
            bias: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    /// Rescales every weight row whose Euclidean norm exceeds `c` back onto
    /// the ball of radius `c`. Returns how many rows were touched.
    pub fn project_rows(&mut self, c: T) -> usize {
        let mut touched = 0;
        for mut row in self.weight.rows_mut() {
            let norm = row_norm(row.view());
            if norm > c {
                let mut scale = c / norm;
                // rounding can leave the scaled row a few ulps above c
                loop {
                    let scaled = row.mapv(|w| w * scale);
                    if row_norm(scaled.view()) <= c {
                        row.assign(&scaled);
                        break;
                    }
                    scale *= T::one() - T::epsilon();
                }
                touched += 1;
            }
        }
        touched
    }

    pub fn max_row_norm(&self) -> T {
        self.weight.rows().into_iter().map(row_norm).fold(T::zero(), T::max)
    }
}

/// Euclidean norm of one weight row; shared by projection and inspection so
/// both always agree to the last bit.
fn row_norm<T: Scalar>(row: ArrayView1<T>) -> T {
    row.dot(&row).sqrt()
}

/// Per-feature batch normalization with learned scale/shift and running
/// statistics for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    /// Unbiased batch variance, exponentially averaged.
    pub running_var: Array1<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(dim: usize, momentum: T, epsilon: T) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum,
            epsilon,
        }
    }

    pub fn update_running(&mut self, batch_mean: &Array1<T>, batch_var_unbiased: &Array1<T>) {
        let keep = T::one() - self.momentum;
        let m = self.momentum;
        Zip::from(&mut self.running_mean)
            .and(batch_mean)
            .for_each(|r, &b| *r = keep * *r + m * b);
        Zip::from(&mut self.running_var)
            .and(batch_var_unbiased)
            .for_each(|r, &b| *r = keep * *r + m * b);
    }
}

/// Dense layer, optional batch norm, ReLU, then dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub dense: Dense<T>,
    pub bn: Option<BatchNorm<T>>,
}

/// Two stages of equal width whose output is added to the block input when
/// the skip path is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub stages: [Stage<T>; 2],
}

pub(crate) fn column_mean<T: Scalar>(a: &Array2<T>) -> Array1<T> {
    let n = T::from_usize(a.nrows()).unwrap();
    a.sum_axis(Axis(0)) / n
}
