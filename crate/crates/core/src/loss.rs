//! Sigmoid cross-entropy and the finite-difference gradient checker.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{sigmoid_raw, GradientBundle, NetworkParams};

/// Multi-label sigmoid cross-entropy.
///
/// Returns the batch-mean loss and its gradient w.r.t. the logits,
/// `(sigmoid(z) - t) / batch`. The loss is evaluated in the log-sum-exp
/// form `max(z, 0) - z*t + ln(1 + exp(-|z|))`, which cannot overflow.
pub fn sigmoid_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.rows() || logits.cols() != targets.cols() {
        return Err(Error::shape(format!(
            "logits {}x{} vs targets {}x{}",
            logits.rows(),
            logits.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::validation(
            "targets must be exactly 0 or 1".to_string(),
        ));
    }
    let batch = logits.rows();
    if batch == 0 {
        return Err(Error::data("empty batch in sigmoid cross-entropy".to_string()));
    }

    let inv_batch = 1.0 / batch as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        for c in 0..logits.cols() {
            let z = logits.get(r, c);
            let t = targets.get(r, c);
            total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            grad.set(r, c, (sigmoid_raw(z) - t) * inv_batch);
        }
    }
    Ok((total * inv_batch, grad))
}

/// Compare an analytic gradient against central finite differences.
///
/// `evaluator` must deterministically map parameters to a scalar loss and
/// its gradient bundle; the finite-difference probe only uses the scalar.
/// Returns the maximum over all weight and bias coordinates of
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-12)`.
pub fn gradient_check<F>(evaluator: &F, params: &NetworkParams, epsilon: f64) -> Result<f64>
where
    F: Fn(&NetworkParams) -> Result<(f64, GradientBundle)>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::config(format!(
            "epsilon must be in (0, 1e-3], got {epsilon}"
        )));
    }
    let (loss_a, analytic) = evaluator(params)?;
    let (loss_b, _) = evaluator(params)?;
    if loss_a.to_bits() != loss_b.to_bits() {
        return Err(Error::validation(
            "loss evaluator is not deterministic".to_string(),
        ));
    }

    let mut max_rel = 0.0f64;
    let mut probe = |perturb: &dyn Fn(&mut NetworkParams, f64), analytic_coord: f64| -> Result<()> {
        let mut plus = params.clone();
        perturb(&mut plus, epsilon);
        let mut minus = params.clone();
        perturb(&mut minus, -epsilon);
        let lp = evaluator(&plus)?.0;
        let lm = evaluator(&minus)?.0;
        let fd = (lp - lm) / (2.0 * epsilon);
        let rel = (analytic_coord - fd).abs() / analytic_coord.abs().max(fd.abs()).max(1e-12);
        if rel > max_rel {
            max_rel = rel;
        }
        Ok(())
    };

    for li in 0..params.layers.len() {
        let n_weights = params.layers[li].weight.data().len();
        for wi in 0..n_weights {
            probe(
                &|p, eps| p.layers[li].weight.data_mut()[wi] += eps,
                analytic.layers[li].weight.data()[wi],
            )?;
        }
        for bi in 0..params.layers[li].bias.len() {
            probe(
                &|p, eps| p.layers[li].bias[bi] += eps,
                analytic.layers[li].bias[bi],
            )?;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{backward, forward, init_network, HiddenActivation, NetworkConfig};

    #[test]
    fn ce_at_zero_logit_is_ln2() {
        let z = Matrix::new(1, 1, vec![0.0]).unwrap();
        let t = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (loss, _) = sigmoid_cross_entropy(&z, &t).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ce_saturates_without_overflow() {
        let z = Matrix::new(1, 1, vec![50.0]).unwrap();
        let t = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (loss, grad) = sigmoid_cross_entropy(&z, &t).unwrap();
        assert!(loss < 1e-20);
        assert!(loss >= 0.0);
        assert!(grad.get(0, 0).is_finite());

        let z = Matrix::new(1, 1, vec![-745.0]).unwrap();
        let t = Matrix::new(1, 1, vec![0.0]).unwrap();
        let (loss, _) = sigmoid_cross_entropy(&z, &t).unwrap();
        assert!(loss >= 0.0 && loss < 1e-20);
    }

    #[test]
    fn ce_rejects_non_binary_targets() {
        let z = Matrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        let t = Matrix::new(1, 2, vec![0.5, 1.0]).unwrap();
        assert!(matches!(
            sigmoid_cross_entropy(&z, &t),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ce_is_non_negative() {
        let z = Matrix::new(2, 3, vec![-3.0, 0.2, 5.0, 1.0, -0.5, 0.0]).unwrap();
        let t = Matrix::new(2, 3, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let (loss, _) = sigmoid_cross_entropy(&z, &t).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn gradient_check_on_quadratic_loss_is_exact() {
        // L = w^2 over a 1x1 "network": analytic gradient 2w = 6 at w = 3.
        let cfg = NetworkConfig::new(vec![1, 1], HiddenActivation::Relu, 0).unwrap();
        let mut params = init_network(&cfg).unwrap();
        params.layers[0].weight.data_mut()[0] = 3.0;
        let evaluator = |p: &NetworkParams| {
            let w = p.layers[0].weight.get(0, 0);
            let mut g = GradientBundle::zeros_like(p);
            g.layers[0].weight.data_mut()[0] = 2.0 * w;
            Ok((w * w, g))
        };
        let err = gradient_check(&evaluator, &params, 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn gradient_check_detects_nondeterminism() {
        let cfg = NetworkConfig::new(vec![1, 1], HiddenActivation::Relu, 0).unwrap();
        let params = init_network(&cfg).unwrap();
        let counter = std::cell::Cell::new(0.0f64);
        let evaluator = |p: &NetworkParams| {
            counter.set(counter.get() + 1.0);
            let mut g = GradientBundle::zeros_like(p);
            g.layers[0].weight.data_mut()[0] = 1.0;
            Ok((counter.get(), g))
        };
        assert!(matches!(
            gradient_check(&evaluator, &params, 1e-5),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn gradient_check_rejects_bad_epsilon() {
        let cfg = NetworkConfig::new(vec![1, 1], HiddenActivation::Relu, 0).unwrap();
        let params = init_network(&cfg).unwrap();
        let evaluator =
            |p: &NetworkParams| Ok((0.0, GradientBundle::zeros_like(p)));
        assert!(gradient_check(&evaluator, &params, 0.0).is_err());
        assert!(gradient_check(&evaluator, &params, 1e-2).is_err());
    }

    #[test]
    fn ce_gradients_match_finite_differences() {
        let cfg = NetworkConfig::new(vec![4, 6, 3], HiddenActivation::Tanh, 17).unwrap();
        let params = init_network(&cfg).unwrap();
        let x = Matrix::from_fn(5, 4, |r, c| ((r * 7 + c * 3) % 11) as f64 * 0.1 - 0.5).unwrap();
        let t = Matrix::from_fn(5, 3, |r, c| ((r + c) % 2) as f64).unwrap();
        let evaluator = move |p: &NetworkParams| {
            let trace = forward(p, &x)?;
            let (loss, dl) = sigmoid_cross_entropy(trace.logits(), &t)?;
            let grads = backward(p, &trace, &dl)?;
            Ok((loss, grads))
        };
        let err = gradient_check(&evaluator, &params, 1e-5).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }
}
