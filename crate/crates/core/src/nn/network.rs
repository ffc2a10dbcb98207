use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{column_mean, BatchNorm, Dense, ResidualBlock, Stage};
use crate::error::{contract, invalid, Result};
use crate::scalar::Scalar;

/// The three architecture toggles of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flags {
    pub max_norm: bool,
    pub batch_norm: bool,
    pub residual: bool,
}

impl Flags {
    pub const ALL: Flags = Flags {
        max_norm: true,
        batch_norm: true,
        residual: true,
    };
    pub const NONE: Flags = Flags {
        max_norm: false,
        batch_norm: false,
        residual: false,
    };

    /// All eight combinations with max-norm as the slowest-varying toggle and
    /// the skip path as the fastest.
    pub fn grid() -> [Flags; 8] {
        std::array::from_fn(|i| Flags {
            max_norm: i & 4 != 0,
            batch_norm: i & 2 != 0,
            residual: i & 1 != 0,
        })
    }
}

impl std::fmt::Display for Flags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let on = |b: bool| if b { "on" } else { "off" };
        write!(
            f,
            "max-norm {}, batch-norm {}, residual {}",
            on(self.max_norm),
            on(self.batch_norm),
            on(self.residual)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub width: usize,
    pub blocks: usize,
    pub flags: Flags,
    pub dropout_rate: f64,
    pub maxnorm_c: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Architecture {
    pub fn new(width: usize, blocks: usize, flags: Flags) -> Self {
        Self {
            width,
            blocks,
            flags,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(invalid("network width must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.maxnorm_c > 0.0) || !self.maxnorm_c.is_finite() {
            return Err(invalid(format!(
                "max-norm radius must be positive, got {}",
                self.maxnorm_c
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(invalid(format!(
                "batch-norm momentum must lie in (0, 1], got {}",
                self.bn_momentum
            )));
        }
        if !(self.bn_epsilon > 0.0) {
            return Err(invalid("batch-norm epsilon must be positive"));
        }
        Ok(())
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            width: 1024,
            blocks: 1,
            flags: Flags::ALL,
            dropout_rate: 0.5,
            maxnorm_c: 1.0,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything one stage's backward pass needs.
#[derive(Debug, Clone)]
pub struct StageCache<T> {
    pub input: Array2<T>,
    /// Batch-normalized activations before scale and shift.
    pub xhat: Option<Array2<T>>,
    pub inv_std: Option<Array1<T>>,
    /// Pre-ReLU activations.
    pub pre_relu: Array2<T>,
    /// Dropout multipliers: 0 or 1/keep.
    pub mask: Option<Array2<T>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    batch: usize,
    input_stage: StageCache<T>,
    blocks: Vec<[StageCache<T>; 2]>,
    head_input: Array2<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Stage caches in forward order.
    pub fn stages(&self) -> impl Iterator<Item = &StageCache<T>> {
        std::iter::once(&self.input_stage).chain(self.blocks.iter().flatten())
    }

    /// Dropout masks in forward order; `None` where dropout was inactive.
    pub fn masks(&self) -> Vec<Option<Array2<T>>> {
        self.stages().map(|s| s.mask.clone()).collect()
    }
}

/// Per-parameter gradients in the network's canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }

    pub fn squared_norm(&self) -> T {
        self.tensors.iter().flatten().map(|g| *g * *g).sum()
    }
}

struct StageGrads<T> {
    weight: Array2<T>,
    bias: Array1<T>,
    gamma: Option<Array1<T>>,
    beta: Option<Array1<T>>,
}

impl<T: Scalar> StageGrads<T> {
    fn push_into(self, out: &mut Vec<Vec<T>>) {
        out.push(self.weight.iter().copied().collect());
        out.push(self.bias.to_vec());
        if let (Some(g), Some(b)) = (self.gamma, self.beta) {
            out.push(g.to_vec());
            out.push(b.to_vec());
        }
    }
}

/// Source of dropout decisions during a forward pass.
enum Dropout<'a, T, R: ?Sized> {
    Off,
    Sample(&'a mut R),
    Replay(std::slice::Iter<'a, Option<Array2<T>>>),
}

/// Residual 2D→3D regressor: input stage, `blocks` residual blocks of width
/// `width`, and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingNetwork<T> {
    pub arch: Architecture,
    pub input: Stage<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub output: Dense<T>,
}

impl<T: Scalar> LiftingNetwork<T> {
    /// Deterministic initialization from `seed`.
    pub fn init(input_dim: usize, output_dim: usize, arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("network input and output dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.width;
        let bn = || {
            arch.flags
                .batch_norm
                .then(|| BatchNorm::new(d, T::lit(arch.bn_momentum), T::lit(arch.bn_epsilon)))
        };
        let input = Stage {
            dense: Dense::kaiming_uniform(input_dim, d, &mut rng),
            bn: bn(),
        };
        let blocks = (0..arch.blocks)
            .map(|_| ResidualBlock {
                stages: [
                    Stage {
                        dense: Dense::kaiming_uniform(d, d, &mut rng),
                        bn: bn(),
                    },
                    Stage {
                        dense: Dense::kaiming_uniform(d, d, &mut rng),
                        bn: bn(),
                    },
                ],
            })
            .collect();
        let output = Dense::kaiming_uniform(d, output_dim, &mut rng);
        Ok(Self {
            arch,
            input,
            blocks,
            output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input.dense.d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.output.d_out()
    }

    /// Hidden stages in forward order, matching [`ForwardCache::stages`].
    pub fn stages(&self) -> impl Iterator<Item = &Stage<T>> {
        std::iter::once(&self.input).chain(self.blocks.iter().flat_map(|b| b.stages.iter()))
    }

    fn stages_mut(&mut self) -> impl Iterator<Item = &mut Stage<T>> {
        std::iter::once(&mut self.input).chain(self.blocks.iter_mut().flat_map(|b| b.stages.iter_mut()))
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.stages().map(|s| &s.dense).chain(std::iter::once(&self.output))
    }

    /// Names of the trainable tensors in canonical order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut stage = |prefix: String, s: &Stage<T>| {
            names.push(format!("{prefix}.weight"));
            names.push(format!("{prefix}.bias"));
            if s.bn.is_some() {
                names.push(format!("{prefix}.bn.gamma"));
                names.push(format!("{prefix}.bn.beta"));
            }
        };
        stage("input".into(), &self.input);
        for (b, block) in self.blocks.iter().enumerate() {
            for (k, s) in block.stages.iter().enumerate() {
                stage(format!("block{b}.stage{k}"), s);
            }
        }
        names.push("output.weight".into());
        names.push("output.bias".into());
        names
    }

    /// Trainable tensors in canonical order (the order of [`Gradients`]).
    pub fn parameters(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for s in self.stages() {
            out.push(s.dense.weight.as_slice().expect("standard layout"));
            out.push(s.dense.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &s.bn {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        out.push(self.output.weight.as_slice().expect("standard layout"));
        out.push(self.output.bias.as_slice().expect("standard layout"));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let Self {
            input, blocks, output, ..
        } = self;
        for s in std::iter::once(input).chain(blocks.iter_mut().flat_map(|b| b.stages.iter_mut())) {
            out.push(s.dense.weight.as_slice_mut().expect("standard layout"));
            out.push(s.dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut s.bn {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(output.weight.as_slice_mut().expect("standard layout"));
        out.push(output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm<T>> {
        self.stages().filter_map(|s| s.bn.as_ref())
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm<T>> {
        self.stages_mut().filter_map(|s| s.bn.as_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_batch(&self, x: &ArrayView2<T>, mode: Mode) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(invalid(format!(
                "batch has width {}, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(invalid("batch must contain at least one sample"));
        }
        if mode == Mode::Train && self.arch.flags.batch_norm && x.nrows() < 2 {
            return Err(invalid("batch-norm training needs at least two samples per batch"));
        }
        Ok(())
    }

    /// Full forward pass. In train mode batch statistics feed the running
    /// averages, and dropout masks are drawn from `rng` in stage order.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_batch(&x, mode)?;
        let dropout = if mode == Mode::Train && self.arch.dropout_rate > 0.0 {
            Dropout::Sample(rng)
        } else {
            Dropout::Off
        };
        let (out, cache, stats) = self.run(x, mode, dropout);
        for (bn, (mean, var)) in self.batch_norms_mut().zip(stats) {
            bn.update_running(&mean, &var);
        }
        Ok((out, cache))
    }

    /// Train- or eval-mode forward that leaves the running statistics alone.
    pub fn forward_frozen<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_batch(&x, mode)?;
        let dropout = if mode == Mode::Train && self.arch.dropout_rate > 0.0 {
            Dropout::Sample(rng)
        } else {
            Dropout::Off
        };
        let (out, cache, _) = self.run(x, mode, dropout);
        Ok((out, cache))
    }

    /// Train-mode forward that reuses previously drawn dropout masks, as
    /// returned by [`ForwardCache::masks`]. Running statistics are untouched.
    pub fn forward_with_masks(
        &self,
        x: ArrayView2<T>,
        masks: &[Option<Array2<T>>],
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_batch(&x, Mode::Train)?;
        if masks.len() != 1 + 2 * self.blocks.len() {
            return Err(contract("mask count does not match the number of stages"));
        }
        for m in masks.iter().flatten() {
            if m.dim() != (x.nrows(), self.arch.width) {
                return Err(contract("mask shape does not match the batch"));
            }
        }
        let (out, cache, _) = self.run::<ChaCha8Rng>(x, Mode::Train, Dropout::Replay(masks.iter()));
        Ok((out, cache))
    }

    /// Eval-mode inference.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_batch(&x, Mode::Eval)?;
        let (out, _, _) = self.run::<ChaCha8Rng>(x, Mode::Eval, Dropout::Off);
        Ok(out)
    }

    #[allow(clippy::type_complexity)]
    fn run<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<T>,
        mode: Mode,
        mut dropout: Dropout<'_, T, R>,
    ) -> (Array2<T>, ForwardCache<T>, Vec<(Array1<T>, Array1<T>)>) {
        let rate = self.arch.dropout_rate;
        let mut stats = Vec::new();
        let (mut h, input_stage) = stage_forward(&self.input, x, mode, rate, &mut dropout, &mut stats);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (h1, c1) = stage_forward(&block.stages[0], h.view(), mode, rate, &mut dropout, &mut stats);
            let (mut h2, c2) = stage_forward(&block.stages[1], h1.view(), mode, rate, &mut dropout, &mut stats);
            if self.arch.flags.residual {
                h2 += &h;
            }
            h = h2;
            blocks.push([c1, c2]);
        }
        let out = self.output.forward(h.view());
        let cache = ForwardCache {
            mode,
            batch: x.nrows(),
            input_stage,
            blocks,
            head_input: h,
        };
        (out, cache, stats)
    }

    /// Exact gradients of `Σ grad_output ⊙ output` with respect to every
    /// parameter and to the network input.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>)> {
        if cache.mode != Mode::Train {
            return Err(contract("backward needs a cache from a train-mode forward pass"));
        }
        if grad_output.dim() != (cache.batch, self.output_dim()) {
            return Err(contract(format!(
                "output gradient has shape {:?}, cache expects ({}, {})",
                grad_output.dim(),
                cache.batch,
                self.output_dim()
            )));
        }
        if cache.blocks.len() != self.blocks.len() || cache.head_input.ncols() != self.arch.width {
            return Err(contract("cache was produced by a different architecture"));
        }

        let head_w = grad_output.t().dot(&cache.head_input);
        let head_b = grad_output.sum_axis(Axis(0));
        let mut grad = grad_output.dot(&self.output.weight);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, caches) in self.blocks.iter().zip(&cache.blocks).rev() {
            let skip = self.arch.flags.residual.then(|| grad.clone());
            let (g2, d1) = stage_backward(&block.stages[1], &caches[1], grad);
            let (g1, mut d0) = stage_backward(&block.stages[0], &caches[0], d1);
            if let Some(s) = skip {
                d0 += &s;
            }
            grad = d0;
            block_grads.push((g1, g2));
        }
        let (gin, grad_input) = stage_backward(&self.input, &cache.input_stage, grad);

        let mut tensors = Vec::new();
        gin.push_into(&mut tensors);
        for (g1, g2) in block_grads.into_iter().rev() {
            g1.push_into(&mut tensors);
            g2.push_into(&mut tensors);
        }
        tensors.push(head_w.iter().copied().collect());
        tensors.push(head_b.to_vec());
        Ok((Gradients { tensors }, grad_input))
    }

    /// Projects each dense layer's incoming-weight rows onto the ball of
    /// radius `c`. Only acts when the max-norm flag is set; returns the number
    /// of rows rescaled.
    pub fn apply_max_norm(&mut self, c: T) -> usize {
        if !self.arch.flags.max_norm {
            return 0;
        }
        let mut touched = 0;
        for s in self.stages_mut() {
            touched += s.dense.project_rows(c);
        }
        touched + self.output.project_rows(c)
    }

    pub fn max_row_norm(&self) -> T {
        self.dense_layers().map(Dense::max_row_norm).fold(T::zero(), T::max)
    }

    /// Same network with every value converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LiftingNetwork<U> {
        let dense = |d: &Dense<T>| Dense {
            weight: d.weight.mapv(|v| U::lit(v.as_f64())),
            bias: d.bias.mapv(|v| U::lit(v.as_f64())),
        };
        let stage = |s: &Stage<T>| Stage {
            dense: dense(&s.dense),
            bn: s.bn.as_ref().map(|bn| BatchNorm {
                gamma: bn.gamma.mapv(|v| U::lit(v.as_f64())),
                beta: bn.beta.mapv(|v| U::lit(v.as_f64())),
                running_mean: bn.running_mean.mapv(|v| U::lit(v.as_f64())),
                running_var: bn.running_var.mapv(|v| U::lit(v.as_f64())),
                momentum: U::lit(bn.momentum.as_f64()),
                epsilon: U::lit(bn.epsilon.as_f64()),
            }),
        };
        LiftingNetwork {
            arch: self.arch,
            input: stage(&self.input),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResidualBlock {
                    stages: [stage(&b.stages[0]), stage(&b.stages[1])],
                })
                .collect(),
            output: dense(&self.output),
        }
    }
}

fn stage_forward<T: Scalar, R: Rng + ?Sized>(
    stage: &Stage<T>,
    x: ArrayView2<T>,
    mode: Mode,
    rate: f64,
    dropout: &mut Dropout<'_, T, R>,
    stats: &mut Vec<(Array1<T>, Array1<T>)>,
) -> (Array2<T>, StageCache<T>) {
    let z = stage.dense.forward(x);
    let (pre_relu, xhat, inv_std) = match &stage.bn {
        None => (z, None, None),
        Some(bn) => match mode {
            Mode::Train => {
                let n = z.nrows();
                let mean = column_mean(&z);
                let mut centered = z;
                centered -= &mean;
                let var = column_mean(&centered.mapv(|v| v * v));
                let inv_std = var.mapv(|v| T::one() / (v + bn.epsilon).sqrt());
                let xhat = centered * &inv_std;
                let y = &xhat * &bn.gamma + &bn.beta;
                let bessel = T::from_usize(n).unwrap() / T::from_usize(n - 1).unwrap();
                stats.push((mean, var.mapv(|v| v * bessel)));
                (y, Some(xhat), Some(inv_std))
            }
            Mode::Eval => {
                let inv_std = bn.running_var.mapv(|v| T::one() / (v + bn.epsilon).sqrt());
                let mut y = z;
                y -= &bn.running_mean;
                y *= &(&inv_std * &bn.gamma);
                y += &bn.beta;
                (y, None, None)
            }
        },
    };
    let mut out = pre_relu.mapv(|v| v.max(T::zero()));
    let mask = match dropout {
        Dropout::Off => None,
        Dropout::Sample(rng) => {
            let keep = 1.0 - rate;
            let scale = T::lit(1.0 / keep);
            let mask =
                Array2::from_shape_simple_fn(out.dim(), || if rng.random::<f64>() < keep { scale } else { T::zero() });
            Some(mask)
        }
        Dropout::Replay(it) => it.next().cloned().flatten(),
    };
    if let Some(m) = &mask {
        out *= m;
    }
    (
        out,
        StageCache {
            input: x.to_owned(),
            xhat,
            inv_std,
            pre_relu,
            mask,
        },
    )
}

fn stage_backward<T: Scalar>(
    stage: &Stage<T>,
    cache: &StageCache<T>,
    mut grad: Array2<T>,
) -> (StageGrads<T>, Array2<T>) {
    if let Some(m) = &cache.mask {
        grad *= m;
    }
    Zip::from(&mut grad).and(&cache.pre_relu).for_each(|g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    let (dz, gamma, beta) = match (&stage.bn, &cache.xhat, &cache.inv_std) {
        (Some(bn), Some(xhat), Some(inv_std)) => {
            let n = T::from_usize(grad.nrows()).unwrap();
            let dgamma = (&grad * xhat).sum_axis(Axis(0));
            let dbeta = grad.sum_axis(Axis(0));
            let dxhat = grad * &bn.gamma;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
            let scale = inv_std / n;
            let mut dz = dxhat * n;
            dz -= &sum_dxhat;
            dz -= &(xhat * &sum_dxhat_xhat);
            dz *= &scale;
            (dz, Some(dgamma), Some(dbeta))
        }
        _ => (grad, None, None),
    };
    let weight = dz.t().dot(&cache.input);
    let bias = dz.sum_axis(Axis(0));
    let dx = dz.dot(&stage.dense.weight);
    (
        StageGrads {
            weight,
            bias,
            gamma,
            beta,
        },
        dx,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn rand_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let arch = Architecture::new(1024, 1, Flags::ALL);
        let a = LiftingNetwork::<f64>::init(32, 48, arch, 9).unwrap();
        let b = LiftingNetwork::<f64>::init(32, 48, arch, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.input.dense.weight.dim(), (1024, 32));
        assert_eq!(a.output.weight.dim(), (48, 1024));
        let bound = (6.0f64 / 32.0).sqrt();
        assert!(a.input.dense.weight.iter().all(|w| w.abs() <= bound));
        assert!(a.input.dense.bias.iter().all(|b| *b == 0.0));
        let bn = a.input.bn.as_ref().unwrap();
        assert!(bn.gamma.iter().all(|g| *g == 1.0) && bn.beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(LiftingNetwork::<f64>::init(4, 6, Architecture::new(0, 1, Flags::ALL), 0).is_err());
        assert!(LiftingNetwork::<f64>::init(0, 6, Architecture::new(4, 1, Flags::ALL), 0).is_err());
    }

    #[test]
    fn zero_blocks_is_dense_relu_dense() {
        let arch = Architecture {
            dropout_rate: 0.0,
            ..Architecture::new(5, 0, Flags::NONE)
        };
        let net = LiftingNetwork::<f64>::init(4, 3, arch, 1).unwrap();
        assert!(net.blocks.is_empty());
        let x = rand_batch(3, 4, 2);
        let manual = net
            .output
            .forward(net.input.dense.forward(x.view()).mapv(|v| v.max(0.0)).view());
        assert_eq!(net.predict(x.view()).unwrap(), manual);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let arch = Architecture::new(
            6,
            2,
            Flags {
                batch_norm: false,
                ..Flags::ALL
            },
        );
        let mut net = LiftingNetwork::<f64>::init(4, 3, arch, 1).unwrap();
        for p in net.parameters_mut() {
            p.fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = net.forward(rand_batch(5, 4, 3).view(), Mode::Train, &mut rng).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_ignores_dropout_rng() {
        let mut net = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        let x = rand_batch(6, 4, 4);
        let (a, _) = net
            .forward(x.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let (b, _) = net
            .forward(x.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, net.predict(x.view()).unwrap());
    }

    #[test]
    fn train_mode_bn_needs_two_samples() {
        let mut net = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(net.forward(rand_batch(1, 4, 1).view(), Mode::Train, &mut rng).is_err());
        assert!(net.forward(rand_batch(1, 4, 1).view(), Mode::Eval, &mut rng).is_ok());
        assert!(net.forward(rand_batch(3, 5, 1).view(), Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn zero_block_is_identity_with_skip() {
        for bn in [false, true] {
            let arch = Architecture {
                dropout_rate: 0.0,
                ..Architecture::new(
                    6,
                    1,
                    Flags {
                        batch_norm: bn,
                        residual: true,
                        max_norm: false,
                    },
                )
            };
            let mut net = LiftingNetwork::<f64>::init(4, 3, arch, 5).unwrap();
            for s in &mut net.blocks[0].stages {
                s.dense.weight.fill(0.0);
                s.dense.bias.fill(0.0);
            }
            let x = rand_batch(5, 4, 6);
            let (_, cache) = net
                .forward_frozen(x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
            // head input equals the input-stage output when the block contributes nothing
            let stage_out = cache.input_stage.pre_relu.mapv(|v| v.max(0.0));
            assert_eq!(cache.head_input, stage_out);
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut net = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        let x = rand_batch(5, 4, 2);
        let (_, cache) = net
            .forward(x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros((5, 3)).view()).unwrap();
        assert!(g.tensors.iter().flatten().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
        assert_eq!(g.tensors.len(), net.parameters().len());
        for (gt, p) in g.tensors.iter().zip(net.parameters()) {
            assert_eq!(gt.len(), p.len());
        }
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let mut net = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        let x = rand_batch(5, 4, 2);
        let (_, cache) = net
            .forward(x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(matches!(
            net.backward(&cache, Array2::zeros((4, 3)).view()),
            Err(crate::Error::ContractViolation(_))
        ));
        let (_, eval_cache) = net
            .forward(x.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(net.backward(&eval_cache, Array2::zeros((5, 3)).view()).is_err());
        let other = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 2, Flags::ALL), 1).unwrap();
        assert!(other.backward(&cache, Array2::zeros((5, 3)).view()).is_err());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let arch = Architecture {
            dropout_rate: 0.0,
            ..Architecture::new(
                3,
                0,
                Flags {
                    batch_norm: true,
                    ..Flags::NONE
                },
            )
        };
        let mut net = LiftingNetwork::<f64>::init(2, 2, arch, 1).unwrap();
        let x = rand_batch(4, 2, 8);
        let z = net.input.dense.forward(x.view());
        let mean = z.mean_axis(Axis(0)).unwrap();
        let var = z.var_axis(Axis(0), 1.0);
        net.forward(x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let bn = net.input.bn.as_ref().unwrap();
        for k in 0..3 {
            assert!((bn.running_mean[k] - 0.1 * mean[k]).abs() < 1e-12);
            assert!((bn.running_var[k] - (0.9 + 0.1 * var[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn max_norm_only_with_flag() {
        let mut off = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::NONE), 1).unwrap();
        let before = off.clone();
        assert_eq!(off.apply_max_norm(0.1), 0);
        assert_eq!(off, before);
        let mut on = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        assert!(on.apply_max_norm(0.1) > 0);
        assert!(on.max_row_norm() <= 0.1);
    }

    #[test]
    fn cast_round_trips_through_f32() {
        let net = LiftingNetwork::<f64>::init(4, 3, Architecture::new(8, 1, Flags::ALL), 1).unwrap();
        let single: LiftingNetwork<f32> = net.cast();
        let x = rand_batch(3, 4, 1);
        let a = net.predict(x.view()).unwrap();
        let b = single.predict(x.mapv(|v| v as f32).view()).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - *q as f64).abs() < 1e-4);
        }
    }
}
