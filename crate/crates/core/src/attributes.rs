//! Attribute-space primitives: binarization rules, distances, and the
//! per-image attribute classification accuracy.
//!
//! Confidence scores are raw logits by convention; both binarization rules
//! operate on them directly (the sigmoid is monotone, so top-p on logits
//! equals top-p on scores, and a logit threshold of 0 corresponds to a
//! score threshold of 0.5).

use crate::error::{Error, Result};

/// A K-dimensional binary attribute label, each element 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeVector {
    bits: Vec<u8>,
}

impl AttributeVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::validation(
                "attribute vector elements must be 0 or 1".to_string(),
            ));
        }
        Ok(AttributeVector { bits })
    }

    pub fn zeros(len: usize) -> Self {
        AttributeVector { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Indices of the positive attributes, ascending.
    pub fn positive_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// The vector as reals, for distance computations.
    pub fn to_reals(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }

    pub fn hamming(&self, other: &AttributeVector) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "hamming distance over lengths {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::validation("empty score vector".to_string()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("non-finite confidence score".to_string()));
    }
    Ok(())
}

/// Set exactly the `p` highest-scoring attributes; ties go to the lowest
/// index.
pub fn binarize_top_p(scores: &[f64], p: usize) -> Result<AttributeVector> {
    check_scores(scores)?;
    if p == 0 || p > scores.len() {
        return Err(Error::validation(format!(
            "p = {p} out of range 1..={}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort by descending score keeps lower indices first on ties.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut bits = vec![0u8; scores.len()];
    for &i in order.iter().take(p) {
        bits[i] = 1;
    }
    Ok(AttributeVector { bits })
}

/// Set every attribute whose score is strictly greater than `tau`.
pub fn binarize_threshold(scores: &[f64], tau: f64) -> Result<AttributeVector> {
    check_scores(scores)?;
    let bits = scores.iter().map(|&s| u8::from(s > tau)).collect();
    Ok(AttributeVector { bits })
}

/// Cosine distance `1 - a.b / (|a||b|)`; 1 when either norm is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "cosine distance over lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): identical vectors
    // then yield exactly zero.
    Ok(1.0 - dot / (na * nb).sqrt())
}

/// Squared Euclidean distance, the realization of the triplet-loss
/// distance function.
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "squared euclidean over lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Fraction of the top-n predicted attributes that are true positives,
/// where n is the number of ground-truth positives.
pub fn attribute_accuracy(scores: &[f64], ground_truth: &AttributeVector) -> Result<f64> {
    if scores.len() != ground_truth.len() {
        return Err(Error::shape(format!(
            "scores length {} vs label length {}",
            scores.len(),
            ground_truth.len()
        )));
    }
    let n = ground_truth.count_ones();
    if n == 0 {
        return Err(Error::validation(
            "ground truth has no positive attribute; accuracy is undefined".to_string(),
        ));
    }
    let top_n = binarize_top_p(scores, n)?;
    let hits = top_n
        .bits
        .iter()
        .zip(ground_truth.bits())
        .filter(|(&p, &t)| p == 1 && t == 1)
        .count();
    Ok(hits as f64 / n as f64)
}
