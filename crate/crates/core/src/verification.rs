//! Standard gradient checks for every registered loss.
//!
//! Each check builds deterministic random data for a seed, evaluates the
//! loss through the full network path, and compares analytic gradients
//! against central finite differences. The hinge-bearing losses resample
//! their data until every triplet margin sits clear of the kink, where
//! finite differences are meaningless.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attributes::{binarize_top_p, AttributeVector};
use crate::error::{Error, Result};
use crate::loss::{gradient_check, sigmoid_cross_entropy};
use crate::matrix::Matrix;
use crate::net::{
    backward, forward, init_network, score_grad_to_logit_grad, GradientBundle, NetworkConfig,
    NetworkParams,
};
use crate::seeding::derive_seed;
use crate::triplet::{attributes_triplet_loss, hinge_triplet_loss, LossParams, Triplet};

/// Acceptance threshold for every gradient check.
pub const GRADIENT_CHECK_THRESHOLD: f64 = 1e-4;

/// Margins closer to the hinge kink than this get their data resampled.
const KINK_GUARD: f64 = 1e-2;

/// Outcome of one loss across all requested seeds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LossCheckReport {
    pub loss: String,
    pub max_relative_error: f64,
    pub seeds: usize,
    pub epsilon: f64,
    pub pass: bool,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Result<Matrix> {
    Matrix::from_fn(rows, cols, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

fn random_targets(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Matrix> {
    Matrix::from_fn(rows, cols, |_, _| f64::from(rng.random::<bool>()))
}

fn fixed_triplets() -> Vec<Triplet> {
    vec![
        Triplet {
            anchor: 0,
            positive: 1,
            negative: 2,
        },
        Triplet {
            anchor: 3,
            positive: 4,
            negative: 5,
        },
        Triplet {
            anchor: 1,
            positive: 3,
            negative: 5,
        },
    ]
}

/// Mean triplet loss over fixed triplets, with gradients chained through
/// the sigmoid scores into the network.
fn triplet_evaluator(
    features: Matrix,
    triplets: Vec<Triplet>,
    tilde: Option<Vec<AttributeVector>>,
    loss_params: LossParams,
) -> impl Fn(&NetworkParams) -> Result<(f64, GradientBundle)> {
    move |params: &NetworkParams| {
        let trace = forward(params, &features)?;
        let scores = trace.scores();
        let inv = 1.0 / triplets.len() as f64;
        let mut total = 0.0;
        let mut dscores = Matrix::zeros(scores.rows(), scores.cols());
        for t in &triplets {
            let (loss, grads) = match &tilde {
                Some(labels) => attributes_triplet_loss(
                    scores.row(t.anchor),
                    scores.row(t.positive),
                    scores.row(t.negative),
                    &labels[t.anchor],
                    &labels[t.positive],
                    &labels[t.negative],
                    &loss_params,
                )?,
                None => hinge_triplet_loss(
                    scores.row(t.anchor),
                    scores.row(t.positive),
                    scores.row(t.negative),
                    &loss_params,
                )?,
            };
            total += loss * inv;
            for (role, g) in [
                (t.anchor, &grads.anchor),
                (t.positive, &grads.positive),
                (t.negative, &grads.negative),
            ] {
                for (c, gv) in g.iter().enumerate() {
                    dscores.set(role, c, dscores.get(role, c) + gv * inv);
                }
            }
        }
        let dlogits = score_grad_to_logit_grad(&dscores, scores)?;
        let grads = backward(params, &trace, &dlogits)?;
        Ok((total, grads))
    }
}

/// Distance of every triplet margin from the hinge kink, on the current
/// parameters.
fn min_margin_distance(
    params: &NetworkParams,
    features: &Matrix,
    triplets: &[Triplet],
    theta: f64,
) -> Result<f64> {
    let trace = forward(params, features)?;
    let scores = trace.scores();
    let mut min_dist = f64::INFINITY;
    for t in triplets {
        let d_ap = crate::attributes::squared_euclidean(scores.row(t.anchor), scores.row(t.positive))?;
        let d_an = crate::attributes::squared_euclidean(scores.row(t.anchor), scores.row(t.negative))?;
        let margin = d_ap + theta - d_an;
        min_dist = min_dist.min(margin.abs());
    }
    Ok(min_dist)
}

/// Sample features for the triplet losses whose margins avoid the kink.
fn kink_free_features(
    net_cfg: &NetworkConfig,
    params: &NetworkParams,
    triplets: &[Triplet],
    theta: f64,
    seed: u64,
) -> Result<Matrix> {
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[71, attempt]));
        let features = random_matrix(&mut rng, 6, net_cfg.input_dim(), 1.0)?;
        if min_margin_distance(params, &features, triplets, theta)? > KINK_GUARD {
            return Ok(features);
        }
    }
    Err(Error::data(
        "could not sample triplet data away from the hinge kink".to_string(),
    ))
}

/// Run the registered losses (`sigmoid_cross_entropy`, `hinge_triplet_loss`,
/// `attributes_triplet_loss`) over the given seeds and report the worst
/// relative error per loss.
///
/// `inject_fault` deliberately corrupts one analytic gradient coordinate in
/// every evaluation; a healthy checker must then fail. It exists so the
/// failure path can be exercised end to end.
pub fn run_standard_gradient_checks(
    net_cfg: &NetworkConfig,
    seeds: &[u64],
    epsilon: f64,
    inject_fault: bool,
) -> Result<Vec<LossCheckReport>> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required".to_string()));
    }
    net_cfg.validate()?;
    let loss_params = LossParams::default();
    let mut worst = [0.0f64; 3];

    for &seed in seeds {
        let mut cfg = net_cfg.clone();
        cfg.init_seed = derive_seed(seed, &[1]);
        let params = init_network(&cfg)?;

        let corrupt = |evaluator: Box<dyn Fn(&NetworkParams) -> Result<(f64, GradientBundle)>>| {
            move |p: &NetworkParams| {
                let (loss, mut grads) = evaluator(p)?;
                if inject_fault {
                    let g = &mut grads.layers[0].weight.data_mut()[0];
                    *g = *g * 2.0 + 1.0;
                }
                Ok((loss, grads))
            }
        };

        // Sigmoid cross-entropy.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
            let features = random_matrix(&mut rng, 5, cfg.input_dim(), 1.0)?;
            let targets = random_targets(&mut rng, 5, cfg.output_dim())?;
            let evaluator = corrupt(Box::new(move |p: &NetworkParams| {
                let trace = forward(p, &features)?;
                let (loss, dl) = sigmoid_cross_entropy(trace.logits(), &targets)?;
                let grads = backward(p, &trace, &dl)?;
                Ok((loss, grads))
            }));
            worst[0] = worst[0].max(gradient_check(&evaluator, &params, epsilon)?);
        }

        // Hinge triplet loss.
        {
            let triplets = fixed_triplets();
            let features =
                kink_free_features(&cfg, &params, &triplets, loss_params.theta, seed)?;
            let evaluator = corrupt(Box::new(triplet_evaluator(
                features,
                triplets,
                None,
                LossParams {
                    theta: loss_params.theta,
                    gamma: 0.0,
                },
            )));
            worst[1] = worst[1].max(gradient_check(&evaluator, &params, epsilon)?);
        }

        // Attributes triplet loss with frozen initial labels.
        {
            let triplets = fixed_triplets();
            let features =
                kink_free_features(&cfg, &params, &triplets, loss_params.theta, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
            let p = (cfg.output_dim() / 2).max(1);
            let tilde: Vec<AttributeVector> = (0..6)
                .map(|_| {
                    let scores: Vec<f64> = (0..cfg.output_dim()).map(|_| rng.random()).collect();
                    binarize_top_p(&scores, p)
                })
                .collect::<Result<_>>()?;
            let evaluator = corrupt(Box::new(triplet_evaluator(
                features,
                triplets,
                Some(tilde),
                loss_params,
            )));
            worst[2] = worst[2].max(gradient_check(&evaluator, &params, epsilon)?);
        }
    }

    let names = [
        "sigmoid_cross_entropy",
        "hinge_triplet_loss",
        "attributes_triplet_loss",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, err)| LossCheckReport {
            loss: (*name).to_string(),
            max_relative_error: err,
            seeds: seeds.len(),
            epsilon,
            pass: err <= GRADIENT_CHECK_THRESHOLD,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::HiddenActivation;

    #[test]
    fn standard_checks_pass_on_small_net() {
        let cfg = NetworkConfig::new(vec![5, 7, 6], HiddenActivation::Tanh, 0).unwrap();
        let reports = run_standard_gradient_checks(&cfg, &[0, 1, 2], 1e-5, false).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.pass, "{} failed with {}", r.loss, r.max_relative_error);
        }
    }

    #[test]
    fn injected_fault_is_detected() {
        let cfg = NetworkConfig::new(vec![5, 7, 6], HiddenActivation::Tanh, 0).unwrap();
        let reports = run_standard_gradient_checks(&cfg, &[0], 1e-5, true).unwrap();
        assert!(reports.iter().any(|r| !r.pass));
    }
}
