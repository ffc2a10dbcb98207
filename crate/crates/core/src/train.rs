//! Mini-batch training of the lifting network on standardized, root-centered
//! pairs.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{invalid, Result};
use crate::eval::{mpjpe, JointAveraging};
use crate::nn::{LiftingNetwork, Mode};
use crate::optim::{mse_loss, Optimizer, OptimizerKind};
use crate::preprocess::{fit_stats, from_output_vector, NormStats, Pose3D, SkeletonSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 200,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            lr_decay: 0.96,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, batch_norm: bool) -> Result<()> {
        if self.batch_size == 0 || (batch_norm && self.batch_size < 2) {
            return Err(invalid(format!(
                "batch size {} too small{}",
                self.batch_size,
                if batch_norm { " for batch-norm training" } else { "" }
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0) || !self.lr_decay.is_finite() {
            return Err(invalid("learning-rate decay must be positive"));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(invalid("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch_index: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch_index as i32)
    }
}

/// Standardized training/validation matrices with statistics fit on the
/// training split only.
#[derive(Debug, Clone)]
pub struct TrainingData<T> {
    pub spec: SkeletonSpec,
    pub input_stats: NormStats<T>,
    pub output_stats: NormStats<T>,
    pub train_x: Array2<T>,
    pub train_y: Array2<T>,
    pub val_x: Array2<T>,
    /// Validation ground truth in millimeters.
    pub val_poses: Vec<Pose3D<T>>,
    pub averaging: JointAveraging,
}

impl<T: Scalar> TrainingData<T> {
    pub fn new(train: &PairedDataset<T>, val: &PairedDataset<T>, averaging: JointAveraging) -> Result<Self> {
        if train.is_empty() {
            return Err(invalid("training split is empty"));
        }
        if train.spec != val.spec {
            return Err(invalid("training and validation splits use different skeletons"));
        }
        let input_stats = fit_stats(train.inputs.view())?;
        let output_stats = fit_stats(train.targets.view())?;
        let val_poses = val
            .targets
            .rows()
            .into_iter()
            .map(|r| from_output_vector(r.as_slice().expect("row-major"), &train.spec))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: train.spec.clone(),
            train_x: input_stats.normalize_rows(train.inputs.view())?,
            train_y: output_stats.normalize_rows(train.targets.view())?,
            val_x: input_stats.normalize_rows(val.inputs.view())?,
            input_stats,
            output_stats,
            val_poses,
            averaging,
        })
    }

    /// Millimeter MPJPE of `net` on the validation split, `None` when it is empty.
    pub fn val_mpjpe(&self, net: &LiftingNetwork<T>) -> Result<Option<T>> {
        if self.val_poses.is_empty() {
            return Ok(None);
        }
        let preds = predict_poses(net, self.val_x.view(), &self.output_stats, &self.spec)?;
        mpjpe(&preds, &self.val_poses, &self.spec, self.averaging).map(Some)
    }

    /// Eval-mode loss over the full normalized training split.
    pub fn train_loss_eval(&self, net: &LiftingNetwork<T>) -> Result<T> {
        let pred = net.predict(self.train_x.view())?;
        Ok(mse_loss(pred.view(), self.train_y.view())?.0)
    }
}

/// Eval-mode prediction of normalized inputs, returned as millimeter poses.
pub fn predict_poses<T: Scalar>(
    net: &LiftingNetwork<T>,
    x_norm: ArrayView2<T>,
    output_stats: &NormStats<T>,
    spec: &SkeletonSpec,
) -> Result<Vec<Pose3D<T>>> {
    let out = output_stats.denormalize_rows(net.predict(x_norm)?.view())?;
    out.rows()
        .into_iter()
        .map(|r| from_output_vector(r.as_slice().expect("row-major"), spec))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean train-mode mini-batch loss over the epoch (normalized units).
    pub train_loss: f64,
    pub val_mpjpe: Option<f64>,
    pub lr: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Eval-mode loss of the untrained network over the training split.
    pub initial_train_loss: f64,
    pub initial_val_mpjpe: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn diverged(&self) -> Option<usize> {
        self.epochs.iter().find(|e| e.diverged).map(|e| e.epoch)
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn final_val_mpjpe(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_mpjpe)
    }

    /// Comma-separated table `epoch,train_loss,val_mpjpe,lr`; row 0 holds the
    /// untrained network with the initial learning rate.
    pub fn to_csv(&self, initial_lr: f64) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        let mut s = String::from("epoch,train_loss,val_mpjpe,lr\n");
        writeln!(
            s,
            "0,{},{},{}",
            self.initial_train_loss,
            opt(self.initial_val_mpjpe),
            initial_lr
        )
        .unwrap();
        for e in &self.epochs {
            writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, opt(e.val_mpjpe), e.lr).unwrap();
        }
        if let Some(epoch) = self.diverged() {
            writeln!(s, "# diverged at epoch {epoch}").unwrap();
        }
        s
    }
}

/// Runs `config.epochs` passes over the training split. Shuffling and dropout
/// draw from one generator seeded by `config.seed`. A non-finite loss or
/// parameter stops training and is recorded as a diverged epoch.
pub fn train<T: Scalar>(
    net: &mut LiftingNetwork<T>,
    data: &TrainingData<T>,
    config: &TrainingConfig,
) -> Result<TrainingLog> {
    config.validate(net.arch.flags.batch_norm)?;
    let n = data.train_x.nrows();
    if n == 0 {
        return Err(invalid("training split is empty"));
    }
    if data.train_x.ncols() != net.input_dim() || data.train_y.ncols() != net.output_dim() {
        return Err(invalid("dataset dimensions do not match the network"));
    }

    let mut log = TrainingLog {
        initial_train_loss: data.train_loss_eval(net)?.as_f64(),
        initial_val_mpjpe: data.val_mpjpe(net)?.map(T::as_f64),
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(config.optimizer, net);
    let mut order: Vec<usize> = (0..n).collect();
    let min_batch = if net.arch.flags.batch_norm { 2 } else { 1 };

    for e in 0..config.epochs {
        let lr = config.lr_at(e);
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut diverged = false;
        for idx in order.chunks(config.batch_size) {
            if idx.len() < min_batch {
                continue;
            }
            let x = data.train_x.select(Axis(0), idx);
            let y = data.train_y.select(Axis(0), idx);
            let (pred, cache) = net.forward(x.view(), Mode::Train, &mut rng)?;
            let (loss, grad) = mse_loss(pred.view(), y.view())?;
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            let (grads, _) = net.backward(&cache, grad.view())?;
            optimizer.step(net, &grads, T::lit(lr))?;
            loss_sum += loss.as_f64();
            batches += 1;
            if !net.is_finite() {
                diverged = true;
                break;
            }
        }
        let train_loss = if diverged || batches == 0 {
            if diverged {
                f64::NAN
            } else {
                0.0
            }
        } else {
            loss_sum / batches as f64
        };
        let val_mpjpe = if diverged {
            None
        } else {
            data.val_mpjpe(net)?.map(T::as_f64)
        };
        let diverged = diverged || val_mpjpe.is_some_and(|v| !v.is_finite());
        log.epochs.push(EpochRecord {
            epoch: e + 1,
            train_loss,
            val_mpjpe,
            lr,
            diverged,
        });
        if diverged {
            break;
        }
    }
    Ok(log)
}
