//! Central finite-difference check of the analytic backward pass.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::nn::{LiftingNetwork, Mode};
use crate::optim::mse_loss;
use crate::scalar::Scalar;

/// Denominator floor for the relative error. Gradients that vanish exactly
/// (a bias feeding batch norm, a unit that is always dropped) leave only
/// finite-difference roundoff of order `loss · 1e-11`, which this floor
/// judges on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares every analytic parameter gradient of the batch MSE loss with
/// `(L(p + eps) − L(p − eps)) / 2eps`. Dropout masks are drawn once from
/// `seed` and held fixed for every evaluation.
pub fn grad_check<T: Scalar>(
    net: &LiftingNetwork<T>,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, first) = net.forward_frozen(x, Mode::Train, &mut rng)?;
    let masks = first.masks();

    let (pred, cache) = net.forward_with_masks(x, &masks)?;
    let (_, grad_out) = mse_loss(pred.view(), y)?;
    let (grads, _) = net.backward(&cache, grad_out.view())?;

    let loss_at = |probe: &LiftingNetwork<T>| -> Result<f64> {
        let (p, _) = probe.forward_with_masks(x, &masks)?;
        Ok(mse_loss(p.view(), y)?.0.as_f64())
    };

    let names = net.parameter_names();
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let h = T::lit(eps);
    for (t, analytic) in grads.tensors.iter().enumerate() {
        for (i, a) in analytic.iter().enumerate() {
            let original = probe.parameters()[t][i];
            probe.parameters_mut()[t][i] = original + h;
            let plus = loss_at(&probe)?;
            probe.parameters_mut()[t][i] = original - h;
            let minus = loss_at(&probe)?;
            probe.parameters_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a.as_f64(), numeric);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = Some((names[t].clone(), i));
            }
        }
    }
    Ok(report)
}

/// Moves every bias, batch-norm scale and shift off its initial value.
///
/// Freshly initialized networks have zero biases, so a sample whose hidden
/// row is entirely inactive feeds the next layer an exact zero and sits on
/// the ReLU kink, where the loss is not differentiable. Random affine
/// parameters put the check at a generic point.
pub fn randomize_affine<T: Scalar>(net: &mut LiftingNetwork<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |v: &mut T, center: f64| *v = T::lit(center + rng.random_range(-0.5..0.5));
    let stages = std::iter::once(&mut net.input).chain(net.blocks.iter_mut().flat_map(|b| b.stages.iter_mut()));
    for s in stages {
        s.dense.bias.iter_mut().for_each(|b| draw(b, 0.0));
        if let Some(bn) = &mut s.bn {
            bn.gamma.iter_mut().for_each(|g| draw(g, 1.0));
            bn.beta.iter_mut().for_each(|b| draw(b, 0.0));
        }
    }
    net.output.bias.iter_mut().for_each(|b| draw(b, 0.0));
}
