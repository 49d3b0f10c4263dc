//! `synth`: generate the dataset CSVs from the configured world.

use ssdal_core::{generate_world, ProbeGalleryOptions, SynthConfig, SynthWorld};

use crate::config::RunConfig;
use crate::csvio::{write_attributes_csv, write_features_csv};
use crate::errors::{CliError, CliResult};

use super::{ensure_dir, DataPaths};

pub struct SynthPlan {
    pub world: SynthWorld,
    pub train_identities: Vec<usize>,
    pub id_identities: Vec<usize>,
    pub distractor_identities: Vec<usize>,
    pub probe_camera: usize,
    pub gallery_cameras: Vec<usize>,
}

/// Build the world and the identity partition from the configuration. The
/// identity space is `[train | id | distractors]` in that order; probe and
/// gallery draw from the id identities.
pub fn plan(cfg: &RunConfig) -> CliResult<SynthPlan> {
    let n_train = cfg.require_usize("synth.train_identities")?;
    let n_id = cfg.require_usize("synth.id_identities")?;
    let n_distract = cfg.usize_or("synth.distractor_identities", 0)?;
    let cameras = cfg.require_usize("synth.cameras")?;
    if cameras < 2 {
        return Err(CliError::Config(
            "synth.cameras must be at least 2 so a gallery camera exists".to_string(),
        ));
    }
    let probe_camera = cfg.usize_or("synth.probe_camera", 0)?;
    if probe_camera >= cameras {
        return Err(CliError::Config(format!(
            "synth.probe_camera {probe_camera} outside {cameras} cameras"
        )));
    }

    let synth_cfg = SynthConfig {
        num_identities: n_train + n_id + n_distract,
        attribute_count: cfg.require_usize("synth.attribute_count")?,
        feature_dim: cfg.require_usize("synth.feature_dim")?,
        cameras,
        samples_per_identity_per_camera: cfg
            .require_usize("synth.samples_per_identity_per_camera")?,
        mean_positive_attributes: cfg.require_f64("synth.mean_positive_attributes")?,
        attribute_flip_rate: cfg.require_f64("synth.attribute_flip_rate")?,
        feature_noise_sigma: cfg.require_f64("synth.feature_noise_sigma")?,
        camera_offset_scale: cfg.f64_or("synth.camera_offset_scale", 1.0)?,
        seed: cfg.require_u64("synth.seed")?,
    };
    let world = generate_world(&synth_cfg)?;

    Ok(SynthPlan {
        world,
        train_identities: (0..n_train).collect(),
        id_identities: (n_train..n_train + n_id).collect(),
        distractor_identities: (n_train + n_id..n_train + n_id + n_distract).collect(),
        probe_camera,
        gallery_cameras: (0..cameras).filter(|&c| c != probe_camera).collect(),
    })
}

/// Person/camera ids for rows emitted in (identity, camera, sample) order.
fn row_ids(identities: &[usize], cameras: usize, samples: usize) -> (Vec<i64>, Vec<i64>) {
    let mut person = Vec::new();
    let mut camera = Vec::new();
    for &identity in identities {
        for cam in 0..cameras {
            for _ in 0..samples {
                person.push(identity as i64);
                camera.push(cam as i64);
            }
        }
    }
    (person, camera)
}

pub fn execute(cfg: &RunConfig) -> CliResult<SynthPlan> {
    let data_dir = cfg.require_path("data_dir")?;
    ensure_dir(&data_dir)?;
    let paths = DataPaths::new(&data_dir);
    let plan = plan(cfg)?;
    let world = &plan.world;
    let wc = &world.config;

    // T-analogue: features plus corrupted attribute labels.
    let t = world.emit_labeled_set(&plan.train_identities)?;
    let (person, camera) = row_ids(
        &plan.train_identities,
        wc.cameras,
        wc.samples_per_identity_per_camera,
    );
    let sample_ids: Vec<u64> = (0..t.len() as u64).collect();
    write_features_csv(&paths.train_features, &sample_ids, &camera, &person, &t.features)?;
    write_attributes_csv(&paths.train_attributes, &sample_ids, &t.labels)?;

    // U-analogue: id-labeled features; prototypes alongside as evaluation
    // ground truth for attribute accuracy.
    let u = world.emit_id_set(&plan.id_identities)?;
    let (person, camera) = row_ids(
        &plan.id_identities,
        wc.cameras,
        wc.samples_per_identity_per_camera,
    );
    let sample_ids: Vec<u64> = (0..u.len() as u64).collect();
    write_features_csv(&paths.id_features, &sample_ids, &camera, &person, &u.features)?;
    let truth: Vec<_> = u
        .person_ids
        .iter()
        .map(|&pid| world.prototype(pid as usize).clone())
        .collect();
    write_attributes_csv(&paths.eval_attributes, &sample_ids, &truth)?;

    // Probe/gallery split over the id identities plus distractors.
    let pg = world.emit_probe_gallery(
        &plan.id_identities,
        plan.probe_camera,
        &plan.gallery_cameras,
        &plan.distractor_identities,
        &ProbeGalleryOptions::default(),
    )?;
    let probe_sample_ids: Vec<u64> = (0..pg.probe_ids.len() as u64).collect();
    write_features_csv(
        &paths.probe_features,
        &probe_sample_ids,
        &pg.probe_camera_ids.iter().map(|&c| c as i64).collect::<Vec<_>>(),
        &pg.probe_ids.iter().map(|&p| p as i64).collect::<Vec<_>>(),
        &pg.probe_features,
    )?;
    let gallery_sample_ids: Vec<u64> = (0..pg.gallery_ids.len() as u64).collect();
    write_features_csv(
        &paths.gallery_features,
        &gallery_sample_ids,
        &pg.gallery_camera_ids.iter().map(|&c| c as i64).collect::<Vec<_>>(),
        &pg.gallery_ids.iter().map(|&p| p as i64).collect::<Vec<_>>(),
        &pg.gallery_features,
    )?;

    println!(
        "synth: {} train rows, {} id rows, {} probes, {} gallery rows ({} distractor identities) -> {}",
        t.len(),
        u.len(),
        pg.probe_ids.len(),
        pg.gallery_ids.len(),
        pg.distractor_count,
        data_dir.display()
    );
    Ok(plan)
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    execute(cfg).map(|_| ())
}
