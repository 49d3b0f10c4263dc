//! Attributes triplet loss and the hard-mining policy.
//!
//! The hinge term pulls same-person attribute predictions together and
//! pushes different-person predictions apart:
//!
//! `L = max(0, D(A_a, A_p) + theta - D(A_a, A_n))`
//!
//! with `D` the squared Euclidean distance over the network's continuous
//! sigmoid scores. The regularized variant adds `gamma * E` where
//! `E = D(A_a, ~A_a) + D(A_p, ~A_p) + D(A_n, ~A_n)` measures drift away
//! from the initial labels `~A` frozen at the start of fine-tuning; no
//! gradient flows into the frozen labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attributes::{squared_euclidean, AttributeVector};
use crate::error::{Error, Result};

/// Margin and drift weight of the triplet objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub theta: f64,
    pub gamma: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            theta: 1.0,
            gamma: 0.01,
        }
    }
}

impl LossParams {
    pub fn new(theta: f64, gamma: f64) -> Result<Self> {
        if !(theta >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::config(format!(
                "theta and gamma must be non-negative, got theta={theta}, gamma={gamma}"
            )));
        }
        Ok(LossParams { theta, gamma })
    }
}

/// Anchor/positive/negative sample indices into an id-labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// The initial attribute labels `~A`, fixed for a whole fine-tuning stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialLabels {
    pub labels: Vec<AttributeVector>,
}

impl InitialLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Gradients of a per-triplet loss w.r.t. the three score vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrads {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

fn check_equal_lengths(vectors: &[&[f64]]) -> Result<usize> {
    let k = vectors[0].len();
    if vectors.iter().any(|v| v.len() != k) {
        return Err(Error::shape(
            "triplet loss vectors must share one length".to_string(),
        ));
    }
    Ok(k)
}

/// Hinge triplet loss on score vectors with exact subgradients.
///
/// At the hinge kink the zero branch is taken, so a loss of exactly zero
/// always comes with zero gradients.
pub fn hinge_triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    params: &LossParams,
) -> Result<(f64, TripletGrads)> {
    let k = check_equal_lengths(&[anchor, positive, negative])?;
    let d_ap = squared_euclidean(anchor, positive)?;
    let d_an = squared_euclidean(anchor, negative)?;
    let margin = d_ap + params.theta - d_an;
    if margin > 0.0 {
        let mut ga = vec![0.0; k];
        let mut gp = vec![0.0; k];
        let mut gn = vec![0.0; k];
        for i in 0..k {
            let ap = anchor[i] - positive[i];
            let an = anchor[i] - negative[i];
            ga[i] = 2.0 * ap - 2.0 * an;
            gp[i] = -2.0 * ap;
            gn[i] = 2.0 * an;
        }
        Ok((
            margin,
            TripletGrads {
                anchor: ga,
                positive: gp,
                negative: gn,
            },
        ))
    } else {
        Ok((
            0.0,
            TripletGrads {
                anchor: vec![0.0; k],
                positive: vec![0.0; k],
                negative: vec![0.0; k],
            },
        ))
    }
}

/// Hinge term plus the drift regularizer `gamma * E` towards the frozen
/// initial labels.
///
/// With `gamma == 0` this is byte-for-byte the hinge loss: the drift term
/// is skipped entirely rather than multiplied out, so not even a signed
/// zero can differ.
pub fn attributes_triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    tilde_anchor: &AttributeVector,
    tilde_positive: &AttributeVector,
    tilde_negative: &AttributeVector,
    params: &LossParams,
) -> Result<(f64, TripletGrads)> {
    let k = check_equal_lengths(&[anchor, positive, negative])?;
    if tilde_anchor.len() != k || tilde_positive.len() != k || tilde_negative.len() != k {
        return Err(Error::shape(
            "initial labels must match the score vector length".to_string(),
        ));
    }
    let (mut loss, mut grads) = hinge_triplet_loss(anchor, positive, negative, params)?;
    if params.gamma != 0.0 {
        // Drift accumulates per vector and the three distances add in the
        // formula's order, so the result is bit-identical to summing three
        // squared Euclidean distances.
        let mut drift = 0.0;
        for (scores, tilde, grad) in [
            (anchor, tilde_anchor, &mut grads.anchor),
            (positive, tilde_positive, &mut grads.positive),
            (negative, tilde_negative, &mut grads.negative),
        ] {
            let mut d = 0.0;
            for i in 0..k {
                let diff = scores[i] - tilde.get(i) as f64;
                d += diff * diff;
                grad[i] += params.gamma * 2.0 * diff;
            }
            drift += d;
        }
        loss += params.gamma * drift;
    }
    Ok((loss, grads))
}

/// Mine hard triplets from an id-labeled pool.
///
/// Anchors are drawn uniformly (resampling any anchor whose id has no
/// second sample). The positive is the same-id sample with the *largest*
/// Hamming distance between predicted attribute labels, the negative the
/// different-id sample with the *smallest*; ties go to the lowest index.
pub fn mine_triplets(
    person_ids: &[u32],
    predicted: &[AttributeVector],
    count: usize,
    seed: u64,
) -> Result<TripletBatch> {
    if count == 0 {
        return Err(Error::config("triplet count must be positive".to_string()));
    }
    let m = person_ids.len();
    if predicted.len() != m {
        return Err(Error::shape(format!(
            "{} predictions for {} samples",
            predicted.len(),
            m
        )));
    }
    let has_partner: Vec<bool> = (0..m)
        .map(|i| {
            person_ids
                .iter()
                .enumerate()
                .any(|(j, &id)| j != i && id == person_ids[i])
        })
        .collect();
    if !has_partner.iter().any(|&b| b) {
        return Err(Error::data(
            "no person id has a second sample; no anchor is valid".to_string(),
        ));
    }
    let distinct = {
        let mut ids: Vec<u32> = person_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    if distinct < 2 {
        return Err(Error::data(
            "at least two distinct person ids are required to mine negatives".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(count);
    while triplets.len() < count {
        let anchor = rng.random_range(0..m);
        if !has_partner[anchor] {
            continue;
        }
        let mut positive = None;
        let mut best_pos = 0usize;
        let mut negative = None;
        let mut best_neg = usize::MAX;
        for j in 0..m {
            if j == anchor {
                continue;
            }
            let dist = predicted[anchor].hamming(&predicted[j])?;
            if person_ids[j] == person_ids[anchor] {
                if positive.is_none() || dist > best_pos {
                    positive = Some(j);
                    best_pos = dist;
                }
            } else if negative.is_none() || dist < best_neg {
                negative = Some(j);
                best_neg = dist;
            }
        }
        triplets.push(Triplet {
            anchor,
            positive: positive.expect("anchor has a same-id partner"),
            negative: negative.expect("a different id exists"),
        });
    }
    Ok(TripletBatch { triplets })
}
