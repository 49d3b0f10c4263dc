//! Person re-identification evaluation harness: gallery ranking, CMC over
//! random splits, retrieval-style mAP with tracklet pooling, and attribute
//! accuracy aggregation.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attributes::{attribute_accuracy, cosine_distance, squared_euclidean};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{forward, NetworkParams};
use crate::pipeline::LabeledSet;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Cosine,
    SquaredEuclidean,
}

impl DistanceKind {
    fn eval(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistanceKind::Cosine => cosine_distance(a, b),
            DistanceKind::SquaredEuclidean => squared_euclidean(a, b),
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(DistanceKind::Cosine),
            "squared_euclidean" => Ok(DistanceKind::SquaredEuclidean),
            other => Err(Error::config(format!("unknown distance `{other}`"))),
        }
    }
}

/// Probe and gallery features with identity and camera labels.
///
/// Every probe identity must appear in the gallery; gallery identities
/// with no probe are distractors and their count is recorded.
#[derive(Debug, Clone)]
pub struct ProbeGallery {
    pub probe_features: Matrix,
    pub probe_ids: Vec<u32>,
    pub probe_camera_ids: Vec<u32>,
    pub gallery_features: Matrix,
    pub gallery_ids: Vec<u32>,
    pub gallery_camera_ids: Vec<u32>,
    pub distractor_count: usize,
}

impl ProbeGallery {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        probe_features: Matrix,
        probe_ids: Vec<u32>,
        probe_camera_ids: Vec<u32>,
        gallery_features: Matrix,
        gallery_ids: Vec<u32>,
        gallery_camera_ids: Vec<u32>,
    ) -> Result<Self> {
        if probe_features.rows() != probe_ids.len()
            || probe_ids.len() != probe_camera_ids.len()
            || gallery_features.rows() != gallery_ids.len()
            || gallery_ids.len() != gallery_camera_ids.len()
        {
            return Err(Error::shape(
                "probe/gallery feature rows and id lists disagree".to_string(),
            ));
        }
        if probe_ids.is_empty() || gallery_ids.is_empty() {
            return Err(Error::data("empty probe or gallery set".to_string()));
        }
        let gallery_id_set: HashSet<u32> = gallery_ids.iter().copied().collect();
        if let Some(missing) = probe_ids.iter().find(|id| !gallery_id_set.contains(id)) {
            return Err(Error::data(format!(
                "probe id {missing} has no gallery entry"
            )));
        }
        let probe_id_set: HashSet<u32> = probe_ids.iter().copied().collect();
        let distractor_count = gallery_id_set
            .iter()
            .filter(|id| !probe_id_set.contains(id))
            .count();
        Ok(ProbeGallery {
            probe_features,
            probe_ids,
            probe_camera_ids,
            gallery_features,
            gallery_ids,
            gallery_camera_ids,
            distractor_count,
        })
    }

    /// Same identities and cameras, different feature matrices (for example
    /// after mapping raw features through a model).
    pub fn with_features(&self, probe_features: Matrix, gallery_features: Matrix) -> Result<Self> {
        ProbeGallery::new(
            probe_features,
            self.probe_ids.clone(),
            self.probe_camera_ids.clone(),
            gallery_features,
            self.gallery_ids.clone(),
            self.gallery_camera_ids.clone(),
        )
    }
}

/// Cumulative match characteristic; `scores[r-1]` is the percentage of
/// probes whose first correct match appears within rank `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    pub scores: Vec<f64>,
}

impl CmcCurve {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::data("empty CMC curve".to_string()));
        }
        let mut prev = 0.0;
        for &s in &scores {
            if !(s >= prev && s <= 100.0 + 1e-9) {
                return Err(Error::validation(format!(
                    "CMC curve must be non-decreasing within [0, 100], got {s} after {prev}"
                )));
            }
            prev = s;
        }
        Ok(CmcCurve { scores })
    }

    /// Score at 1-based rank `r`, saturating at the final value.
    pub fn at_rank(&self, r: usize) -> f64 {
        if r == 0 {
            return 0.0;
        }
        let idx = (r - 1).min(self.scores.len() - 1);
        self.scores[idx]
    }

    pub fn rank1(&self) -> f64 {
        self.at_rank(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Single,
    MultiAvg,
    MultiMax,
}

impl QueryMode {
    pub fn tag(self) -> &'static str {
        match self {
            QueryMode::Single => "single",
            QueryMode::MultiAvg => "multi_avg",
            QueryMode::MultiMax => "multi_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map_percent: f64,
    pub rank1_percent: f64,
    pub mode: QueryMode,
}

/// Random-split protocol for averaged CMC.
#[derive(Debug, Clone, Copy)]
pub struct SplitProtocol {
    pub num_tests: usize,
    pub probe_size: usize,
    pub seed: u64,
}

impl SplitProtocol {
    pub fn new(num_tests: usize, probe_size: usize, seed: u64) -> Result<Self> {
        if num_tests == 0 {
            return Err(Error::config("num_tests must be at least 1".to_string()));
        }
        if probe_size == 0 {
            return Err(Error::config("probe_size must be at least 1".to_string()));
        }
        Ok(SplitProtocol {
            num_tests,
            probe_size,
            seed,
        })
    }
}

/// Gallery indices sorted by ascending distance to the probe; ties go to
/// the lowest index.
pub fn rank_gallery(
    probe: &[f64],
    gallery: &Matrix,
    distance: DistanceKind,
) -> Result<Vec<usize>> {
    if probe.len() != gallery.cols() {
        return Err(Error::shape(format!(
            "probe dim {} vs gallery dim {}",
            probe.len(),
            gallery.cols()
        )));
    }
    let mut dists = Vec::with_capacity(gallery.rows());
    for g in 0..gallery.rows() {
        dists.push(distance.eval(probe, gallery.row(g))?);
    }
    let mut order: Vec<usize> = (0..gallery.rows()).collect();
    order.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(a.cmp(&b)));
    Ok(order)
}

/// CMC from per-probe gallery rankings under the closed-set protocol.
pub fn cmc(rankings: &[Vec<usize>], probe_ids: &[u32], gallery_ids: &[u32]) -> Result<CmcCurve> {
    if rankings.len() != probe_ids.len() {
        return Err(Error::shape(format!(
            "{} rankings for {} probes",
            rankings.len(),
            probe_ids.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::data("no probes to evaluate".to_string()));
    }
    let gallery_len = gallery_ids.len();
    let mut hits_at = vec![0usize; gallery_len];
    for (ranking, &pid) in rankings.iter().zip(probe_ids) {
        if ranking.len() != gallery_len {
            return Err(Error::shape(
                "ranking length does not match the gallery".to_string(),
            ));
        }
        let first = ranking
            .iter()
            .position(|&g| gallery_ids[g] == pid)
            .ok_or_else(|| {
                Error::data(format!("probe id {pid} has no correct gallery match"))
            })?;
        hits_at[first] += 1;
    }
    let total = rankings.len() as f64;
    let mut scores = Vec::with_capacity(gallery_len);
    let mut cum = 0usize;
    for h in hits_at {
        cum += h;
        scores.push(100.0 * cum as f64 / total);
    }
    CmcCurve::new(scores)
}

/// Mean CMC over `protocol.num_tests` random identity splits.
///
/// Each test draws `probe_size` distinct probe identities (deterministic in
/// `protocol.seed`), keeps their probes, and ranks them against the gallery
/// restricted to the drawn identities plus every distractor identity.
pub fn averaged_cmc(
    pg: &ProbeGallery,
    protocol: &SplitProtocol,
    distance: DistanceKind,
) -> Result<CmcCurve> {
    let unique_ids: BTreeSet<u32> = pg.probe_ids.iter().copied().collect();
    let unique_ids: Vec<u32> = unique_ids.into_iter().collect();
    if protocol.probe_size > unique_ids.len() {
        return Err(Error::data(format!(
            "protocol asks for {} probe identities, only {} available",
            protocol.probe_size,
            unique_ids.len()
        )));
    }
    let probe_id_set: HashSet<u32> = pg.probe_ids.iter().copied().collect();

    let mut curves: Vec<CmcCurve> = Vec::with_capacity(protocol.num_tests);
    for test in 0..protocol.num_tests {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(protocol.seed, &[test as u64]));
        // Partial Fisher-Yates over the sorted unique id list.
        let mut pool = unique_ids.clone();
        for i in 0..protocol.probe_size {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        let chosen: HashSet<u32> = pool[..protocol.probe_size].iter().copied().collect();

        let probe_rows: Vec<usize> = (0..pg.probe_ids.len())
            .filter(|&i| chosen.contains(&pg.probe_ids[i]))
            .collect();
        let gallery_rows: Vec<usize> = (0..pg.gallery_ids.len())
            .filter(|&g| {
                chosen.contains(&pg.gallery_ids[g]) || !probe_id_set.contains(&pg.gallery_ids[g])
            })
            .collect();
        let sub_gallery = pg.gallery_features.select_rows(&gallery_rows)?;
        let sub_gallery_ids: Vec<u32> = gallery_rows.iter().map(|&g| pg.gallery_ids[g]).collect();

        let mut rankings = Vec::with_capacity(probe_rows.len());
        let mut sub_probe_ids = Vec::with_capacity(probe_rows.len());
        for &pr in &probe_rows {
            rankings.push(rank_gallery(pg.probe_features.row(pr), &sub_gallery, distance)?);
            sub_probe_ids.push(pg.probe_ids[pr]);
        }
        curves.push(cmc(&rankings, &sub_probe_ids, &sub_gallery_ids)?);
    }

    // Elementwise mean; shorter curves are flat past their gallery size.
    let max_len = curves.iter().map(|c| c.scores.len()).max().unwrap();
    let mut mean = vec![0.0; max_len];
    for curve in &curves {
        for (r, m) in mean.iter_mut().enumerate() {
            *m += curve.at_rank(r + 1);
        }
    }
    for m in &mut mean {
        *m /= curves.len() as f64;
    }
    CmcCurve::new(mean)
}

/// Retrieval-style mean average precision plus rank-1 accuracy.
///
/// AP uses precision at each relevant hit, no interpolation. `relevance[q]`
/// holds the gallery indices relevant to query `q` and must be non-empty.
pub fn mean_average_precision(
    rankings: &[Vec<usize>],
    relevance: &[HashSet<usize>],
    mode: QueryMode,
) -> Result<MapResult> {
    if rankings.len() != relevance.len() {
        return Err(Error::shape(format!(
            "{} rankings for {} relevance sets",
            rankings.len(),
            relevance.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::data("no queries to evaluate".to_string()));
    }
    let mut ap_sum = 0.0;
    let mut rank1_hits = 0usize;
    for (ranking, relevant) in rankings.iter().zip(relevance) {
        if relevant.is_empty() {
            return Err(Error::data("query with empty relevance set".to_string()));
        }
        if let Some(bad) = relevant.iter().find(|&&g| g >= ranking.len()) {
            return Err(Error::shape(format!(
                "relevant index {bad} outside the ranking"
            )));
        }
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (pos, &g) in ranking.iter().enumerate() {
            if relevant.contains(&g) {
                hits += 1;
                precision_sum += hits as f64 / (pos + 1) as f64;
            }
        }
        if hits != relevant.len() {
            return Err(Error::data(
                "ranking does not cover every relevant item".to_string(),
            ));
        }
        ap_sum += precision_sum / relevant.len() as f64;
        if relevant.contains(&ranking[0]) {
            rank1_hits += 1;
        }
    }
    let queries = rankings.len() as f64;
    Ok(MapResult {
        map_percent: 100.0 * ap_sum / queries,
        rank1_percent: 100.0 * rank1_hits as f64 / queries,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Pool a tracklet of feature vectors into one vector.
pub fn pool_tracklet(features: &[&[f64]], mode: PoolMode) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::data("cannot pool an empty tracklet".to_string()))?;
    let dim = first.len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::shape("tracklet features differ in length".to_string()));
    }
    let mut pooled = first.to_vec();
    match mode {
        PoolMode::Avg => {
            for f in &features[1..] {
                for (p, v) in pooled.iter_mut().zip(*f) {
                    *p += v;
                }
            }
            let inv = 1.0 / features.len() as f64;
            for p in &mut pooled {
                *p *= inv;
            }
        }
        PoolMode::Max => {
            for f in &features[1..] {
                for (p, v) in pooled.iter_mut().zip(*f) {
                    if *v > *p {
                        *p = *v;
                    }
                }
            }
        }
    }
    Ok(pooled)
}

/// Relevance sets for a probe/gallery pair: same identity, and by default
/// only gallery entries seen from a different camera than the probe.
pub fn relevance_from_ids(pg: &ProbeGallery, same_camera_relevant: bool) -> Vec<HashSet<usize>> {
    pg.probe_ids
        .iter()
        .zip(&pg.probe_camera_ids)
        .map(|(&pid, &pcam)| {
            (0..pg.gallery_ids.len())
                .filter(|&g| {
                    pg.gallery_ids[g] == pid
                        && (same_camera_relevant || pg.gallery_camera_ids[g] != pcam)
                })
                .collect()
        })
        .collect()
}

/// Mean per-image attribute classification accuracy, in percent.
pub fn aggregate_attribute_accuracy(params: &NetworkParams, test: &LabeledSet) -> Result<f64> {
    if test.len() == 0 {
        return Err(Error::data("empty labeled test set".to_string()));
    }
    let trace = forward(params, &test.features)?;
    let logits = trace.logits();
    let mut sum = 0.0;
    for (i, label) in test.labels.iter().enumerate() {
        if label.count_ones() == 0 {
            return Err(Error::data(format!("test label {i} has no positive attribute")));
        }
        sum += attribute_accuracy(logits.row(i), label)?;
    }
    Ok(100.0 * sum / test.len() as f64)
}
