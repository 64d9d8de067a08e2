//! Losses expressed as (value, gradient w.r.t. final pre-activations), so that
//! composite objectives can be assembled before a single backward pass.

use ndarray::{Array2, ArrayView2};

use super::mlp::{clamp_prob, sigmoid, softmax_rows, Mlp};
use crate::error::{Error, Result};

/// Per-sample binary cross-entropy terms of a logistic network.
pub struct BceTerms {
    /// `-[y log p + (1 - y) log(1 - p)]` with `p` clamped to `[eps, 1 - eps]`.
    pub loss: Vec<f64>,
    /// Derivative of each loss w.r.t. its logit: `p - y` inside the clamp
    /// range and 0 where the clamp is active.
    pub dlogit: Vec<f64>,
    pub prob: Vec<f64>,
}

pub fn bce_terms(logits: &[f64], targets: &[f64], eps: f64) -> BceTerms {
    let mut loss = Vec::with_capacity(logits.len());
    let mut dlogit = Vec::with_capacity(logits.len());
    let mut prob = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let raw = sigmoid(z);
        let p = clamp_prob(raw, eps);
        loss.push(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()));
        dlogit.push(if raw == p { p - y } else { 0.0 });
        prob.push(p);
    }
    BceTerms { loss, dlogit, prob }
}

fn check_targets(targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if let Some(y) = targets.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::Usage(format!("target {y} outside [0, 1]")));
    }
    Ok(())
}

/// `Σ_i w_i · bce(p_i, y_i)` and its parameter gradient.
pub fn weighted_bce_loss_and_grad(
    mlp: &Mlp,
    x: ArrayView2<f64>,
    targets: &[f64],
    weights: &[f64],
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    check_targets(targets)?;
    if x.nrows() != targets.len() || weights.len() != targets.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: targets.len(),
        });
    }
    let cache = mlp.forward_cached(x)?;
    let logits: Vec<f64> = cache.logits.iter().copied().collect();
    let terms = bce_terms(&logits, targets, eps);
    let loss = terms.loss.iter().zip(weights).map(|(l, w)| l * w).sum();
    let d: Vec<f64> = terms.dlogit.iter().zip(weights).map(|(d, w)| d * w).collect();
    let d = Array2::from_shape_vec((d.len(), 1), d).expect("column");
    Ok((loss, mlp.backward(&cache, d.view())))
}

/// Mean soft-target binary cross-entropy over a batch and its gradient.
pub fn soft_bce_loss_and_grad(mlp: &Mlp, x: ArrayView2<f64>, targets: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    let w = vec![1.0 / targets.len().max(1) as f64; targets.len()];
    weighted_bce_loss_and_grad(mlp, x, targets, &w, eps)
}

/// `Σ_i w_i · (-log π(a_i | x_i))` for a softmax network, and its gradient.
pub fn weighted_categorical_ce(
    mlp: &Mlp,
    x: ArrayView2<f64>,
    actions: &[usize],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if actions.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let cache = mlp.forward_cached(x)?;
    let probs = softmax_rows(&cache.logits);
    let mut d = probs.clone();
    let mut loss = 0.0;
    for (i, (&a, &w)) in actions.iter().zip(weights).enumerate() {
        if a >= mlp.output_dim() {
            return Err(Error::Usage(format!("action {a} out of range")));
        }
        loss -= w * probs[[i, a]].max(f64::MIN_POSITIVE).ln();
        for (j, v) in d.row_mut(i).iter_mut().enumerate() {
            *v = w * (*v - if j == a { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, mlp.backward(&cache, d.view())))
}

/// Mean of `½ (Q(x_i, a_i) - y_i)²` for a linear-head critic, and its gradient.
pub fn td_loss_and_grad(
    critic: &Mlp,
    x: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if actions.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let cache = critic.forward_cached(x)?;
    let n = actions.len() as f64;
    let mut d = Array2::zeros(cache.logits.raw_dim());
    let mut loss = 0.0;
    for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let err = cache.logits[[i, a]] - y;
        loss += 0.5 * err * err / n;
        d[[i, a]] = err / n;
    }
    Ok((loss, critic.backward(&cache, d.view())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Head;
    use ndarray::Array2;

    fn zero_net(dim: usize) -> Mlp {
        let sizes = vec![dim, 4, 1];
        let n = Mlp::param_count(&sizes);
        Mlp::from_parts(sizes, Head::Logistic, vec![0.0; n]).unwrap()
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let net = zero_net(3);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let (loss, _) = soft_bce_loss_and_grad(&net, x.view(), &[0.0, 1.0, 0.3, 0.9], 1e-6).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_hand_value() {
        // logit of 0.8
        let z = (0.8f64 / 0.2).ln();
        let t = bce_terms(&[z], &[1.0], 1e-6);
        assert!((t.loss[0] - 0.223_143_551_314_209_7).abs() < 1e-12);
    }

    #[test]
    fn matched_targets_give_zero_logit_gradient() {
        let zs = [-1.2, 0.0, 2.5];
        let ys: Vec<f64> = zs.iter().map(|&z| sigmoid(z)).collect();
        let t = bce_terms(&zs, &ys, 1e-6);
        assert!(t.dlogit.iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn clamped_samples_have_zero_gradient() {
        let t = bce_terms(&[40.0], &[0.0], 1e-6);
        assert_eq!(t.dlogit[0], 0.0);
        assert!((t.loss[0] + (1e-6f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn empty_batch_rejected() {
        let net = zero_net(2);
        let x = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            soft_bce_loss_and_grad(&net, x.view(), &[], 1e-6),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn targets_outside_unit_interval_rejected() {
        let net = zero_net(2);
        let x = Array2::<f64>::zeros((1, 2));
        assert!(soft_bce_loss_and_grad(&net, x.view(), &[1.5], 1e-6).is_err());
    }
}
