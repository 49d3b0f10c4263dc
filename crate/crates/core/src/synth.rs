//! Deterministic synthetic world: identity attribute prototypes, a fixed
//! random linear map into feature space, per-camera feature offsets, and
//! per-sample attribute flips plus feature noise.
//!
//! Cameras corrupt both views of a sample. Each sample carries a *visible*
//! attribute code: the identity prototype with bits flipped at the camera
//! flip rate. The feature vector encodes that visible code through the
//! fixed linear map, shifted by a camera-specific offset and Gaussian
//! noise, and the emitted label is the same visible code. Flip corruption
//! therefore lives inside the identity-signal subspace of feature space,
//! where no offset correction can remove it, while a per-attribute decoder
//! can still read it out bit by bit. Everything derives from
//! `SynthConfig.seed` through per-(identity, camera, sample) sub-seeds, so
//! generation is order-independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attributes::AttributeVector;
use crate::error::{Error, Result};
use crate::eval::ProbeGallery;
use crate::matrix::Matrix;
use crate::pipeline::{IdSet, LabeledSet};
use crate::seeding::derive_seed;

const STREAM_PROTOTYPE: u64 = 11;
const STREAM_FEATURE_MAP: u64 = 12;
const STREAM_CAMERA_OFFSET: u64 = 13;
const STREAM_NOISE: u64 = 14;
const STREAM_FLIPS: u64 = 15;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_identities: usize,
    /// Attribute count K.
    pub attribute_count: usize,
    pub feature_dim: usize,
    pub cameras: usize,
    pub samples_per_identity_per_camera: usize,
    /// Expected positives per identity prototype.
    pub mean_positive_attributes: f64,
    /// Probability of flipping each label bit, applied in every camera.
    pub attribute_flip_rate: f64,
    pub feature_noise_sigma: f64,
    /// Standard deviation of the per-camera feature offsets.
    pub camera_offset_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_identities: 100,
            attribute_count: 105,
            feature_dim: 32,
            cameras: 2,
            samples_per_identity_per_camera: 1,
            mean_positive_attributes: 15.0,
            attribute_flip_rate: 0.0,
            feature_noise_sigma: 0.0,
            camera_offset_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities == 0
            || self.attribute_count == 0
            || self.feature_dim == 0
            || self.cameras == 0
            || self.samples_per_identity_per_camera == 0
        {
            return Err(Error::config(
                "all synthetic world counts must be at least 1".to_string(),
            ));
        }
        if !(0.0..0.5).contains(&self.attribute_flip_rate) {
            return Err(Error::config(format!(
                "attribute_flip_rate must be in [0, 0.5), got {}",
                self.attribute_flip_rate
            )));
        }
        if !(self.mean_positive_attributes >= 1.0
            && self.mean_positive_attributes <= self.attribute_count as f64)
        {
            return Err(Error::config(format!(
                "mean_positive_attributes must be in [1, {}], got {}",
                self.attribute_count, self.mean_positive_attributes
            )));
        }
        if !(self.feature_noise_sigma >= 0.0) || !(self.camera_offset_scale >= 0.0) {
            return Err(Error::config(
                "noise sigma and camera offset scale must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// A fully generated world; all emit operations read from it without
/// further randomness beyond the per-sample derived streams.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    prototypes: Vec<AttributeVector>,
    /// Fixed random linear map, feature_dim x attribute_count.
    feature_map: Matrix,
    camera_offsets: Vec<Vec<f64>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let k = config.attribute_count;
    let positive_rate = config.mean_positive_attributes / k as f64;

    let mut prototypes = Vec::with_capacity(config.num_identities);
    for identity in 0..config.num_identities {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[STREAM_PROTOTYPE, identity as u64],
        ));
        let mut bits: Vec<u8> = (0..k)
            .map(|_| u8::from(rng.random::<f64>() < positive_rate))
            .collect();
        // A prototype without any positive attribute would make accuracy
        // undefined downstream; give it one deterministic positive.
        if bits.iter().all(|&b| b == 0) {
            bits[identity % k] = 1;
        }
        prototypes.push(AttributeVector::new(bits)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_FEATURE_MAP]));
    let map_scale = 1.0 / (k as f64).sqrt();
    let feature_map = Matrix::from_fn(config.feature_dim, k, |_, _| normal(&mut rng) * map_scale)?;

    let mut camera_offsets = Vec::with_capacity(config.cameras);
    for camera in 0..config.cameras {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[STREAM_CAMERA_OFFSET, camera as u64],
        ));
        camera_offsets.push(
            (0..config.feature_dim)
                .map(|_| normal(&mut rng) * config.camera_offset_scale)
                .collect(),
        );
    }

    Ok(SynthWorld {
        config: config.clone(),
        prototypes,
        feature_map,
        camera_offsets,
    })
}

impl SynthWorld {
    pub fn prototype(&self, identity: usize) -> &AttributeVector {
        &self.prototypes[identity]
    }

    pub fn num_identities(&self) -> usize {
        self.prototypes.len()
    }

    /// The visible attribute code of one sample: prototype bits flipped at
    /// the camera flip rate. A flip pattern that would zero out the code
    /// keeps the lowest positive prototype bit so the label stays usable.
    fn visible_code(&self, identity: usize, camera: usize, sample: usize) -> AttributeVector {
        let proto = &self.prototypes[identity];
        if self.config.attribute_flip_rate == 0.0 {
            return proto.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.seed,
            &[STREAM_FLIPS, identity as u64, camera as u64, sample as u64],
        ));
        let mut bits: Vec<u8> = proto
            .bits()
            .iter()
            .map(|&b| {
                if rng.random::<f64>() < self.config.attribute_flip_rate {
                    1 - b
                } else {
                    b
                }
            })
            .collect();
        if bits.iter().all(|&b| b == 0) {
            if let Some(first) = proto.positive_indices().first() {
                bits[*first] = 1;
            }
        }
        AttributeVector::new(bits).expect("bits are binary by construction")
    }

    /// Feature vector of one sample: linear map of the sample's visible
    /// code, camera offset, and per-sample Gaussian noise.
    pub fn sample_feature(&self, identity: usize, camera: usize, sample: usize) -> Vec<f64> {
        let code = self.visible_code(identity, camera, sample);
        let mut feature = Vec::with_capacity(self.config.feature_dim);
        for d in 0..self.config.feature_dim {
            let mut acc = self.camera_offsets[camera][d];
            for (k, &bit) in code.bits().iter().enumerate() {
                if bit == 1 {
                    acc += self.feature_map.get(d, k);
                }
            }
            feature.push(acc);
        }
        if self.config.feature_noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                self.config.seed,
                &[STREAM_NOISE, identity as u64, camera as u64, sample as u64],
            ));
            for f in &mut feature {
                *f += normal(&mut rng) * self.config.feature_noise_sigma;
            }
        }
        feature
    }

    /// Corrupted attribute label of one sample: exactly the visible code
    /// its features encode.
    pub fn sample_label(&self, identity: usize, camera: usize, sample: usize) -> AttributeVector {
        self.visible_code(identity, camera, sample)
    }

    fn check_subset(&self, identities: &[usize]) -> Result<()> {
        if identities.is_empty() {
            return Err(Error::data("empty identity subset".to_string()));
        }
        if let Some(&bad) = identities.iter().find(|&&i| i >= self.num_identities()) {
            return Err(Error::data(format!(
                "identity {bad} outside the world ({} identities)",
                self.num_identities()
            )));
        }
        Ok(())
    }

    /// Attribute-labeled set over the given identities: all cameras, all
    /// samples, labels corrupted by the per-camera flips.
    pub fn emit_labeled_set(&self, identities: &[usize]) -> Result<LabeledSet> {
        self.check_subset(identities)?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &identity in identities {
            for camera in 0..self.config.cameras {
                for sample in 0..self.config.samples_per_identity_per_camera {
                    rows.extend(self.sample_feature(identity, camera, sample));
                    labels.push(self.sample_label(identity, camera, sample));
                }
            }
        }
        let features = Matrix::new(labels.len(), self.config.feature_dim, rows)?;
        LabeledSet::new(features, labels)
    }

    /// Id-labeled set over the given identities: person and camera ids, no
    /// attribute labels.
    pub fn emit_id_set(&self, identities: &[usize]) -> Result<IdSet> {
        self.check_subset(identities)?;
        let mut rows = Vec::new();
        let mut person_ids = Vec::new();
        let mut camera_ids = Vec::new();
        for &identity in identities {
            for camera in 0..self.config.cameras {
                for sample in 0..self.config.samples_per_identity_per_camera {
                    rows.extend(self.sample_feature(identity, camera, sample));
                    person_ids.push(identity as u32);
                    camera_ids.push(camera as u32);
                }
            }
        }
        let features = Matrix::new(person_ids.len(), self.config.feature_dim, rows)?;
        IdSet::new(features, person_ids, camera_ids)
    }

    /// Probe/gallery split: `probe_samples` probes per identity from the
    /// probe camera, the gallery holds every sample of the subset plus the
    /// distractor identities from the gallery cameras.
    pub fn emit_probe_gallery(
        &self,
        identities: &[usize],
        probe_camera: usize,
        gallery_cameras: &[usize],
        distractor_ids: &[usize],
        options: &ProbeGalleryOptions,
    ) -> Result<ProbeGallery> {
        self.check_subset(identities)?;
        if probe_camera >= self.config.cameras {
            return Err(Error::config(format!(
                "probe camera {probe_camera} outside {} cameras",
                self.config.cameras
            )));
        }
        if gallery_cameras.is_empty() {
            return Err(Error::config("no gallery camera given".to_string()));
        }
        if let Some(&bad) = gallery_cameras.iter().find(|&&c| c >= self.config.cameras) {
            return Err(Error::config(format!(
                "gallery camera {bad} outside {} cameras",
                self.config.cameras
            )));
        }
        if !options.allow_shared_camera && gallery_cameras.contains(&probe_camera) {
            return Err(Error::config(
                "probe camera also serves as gallery camera; set allow_shared_camera".to_string(),
            ));
        }
        if let Some(&bad) = distractor_ids.iter().find(|&&i| i >= self.num_identities()) {
            return Err(Error::data(format!("distractor identity {bad} outside the world")));
        }
        if distractor_ids.iter().any(|d| identities.contains(d)) {
            return Err(Error::data(
                "distractor identities overlap the probe identities".to_string(),
            ));
        }
        let probe_samples = options
            .probe_samples_per_identity
            .min(self.config.samples_per_identity_per_camera)
            .max(1);

        let mut probe_rows = Vec::new();
        let mut probe_ids = Vec::new();
        let mut probe_cameras = Vec::new();
        for &identity in identities {
            for sample in 0..probe_samples {
                probe_rows.extend(self.sample_feature(identity, probe_camera, sample));
                probe_ids.push(identity as u32);
                probe_cameras.push(probe_camera as u32);
            }
        }

        let mut gallery_rows = Vec::new();
        let mut gallery_ids = Vec::new();
        let mut gallery_cams = Vec::new();
        for &identity in identities.iter().chain(distractor_ids) {
            for &camera in gallery_cameras {
                for sample in 0..self.config.samples_per_identity_per_camera {
                    gallery_rows.extend(self.sample_feature(identity, camera, sample));
                    gallery_ids.push(identity as u32);
                    gallery_cams.push(camera as u32);
                }
            }
        }

        ProbeGallery::new(
            Matrix::new(probe_ids.len(), self.config.feature_dim, probe_rows)?,
            probe_ids,
            probe_cameras,
            Matrix::new(gallery_ids.len(), self.config.feature_dim, gallery_rows)?,
            gallery_ids,
            gallery_cams,
        )
    }
}

/// Options for probe/gallery emission. The defaults match the standard
/// protocol: one probe per identity, probe camera excluded from the
/// gallery.
#[derive(Debug, Clone)]
pub struct ProbeGalleryOptions {
    pub allow_shared_camera: bool,
    pub probe_samples_per_identity: usize,
}

impl Default for ProbeGalleryOptions {
    fn default() -> Self {
        ProbeGalleryOptions {
            allow_shared_camera: false,
            probe_samples_per_identity: 1,
        }
    }
}
