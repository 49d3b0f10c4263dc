//! Scratch harness for tuning the trend-suite hyperparameters. Ignored by
//! default; run explicitly while calibrating.

use std::time::Instant;

use ssdal_core::net::HiddenActivation;
use ssdal_core::seeding::derive_seed;
use ssdal_core::{
    averaged_cmc, embed, embedding_triplet_baseline, generate_world, predict_deep_attributes,
    predict_initial_labels, stage1_train, stage2_finetune, stage3_combine, DistanceKind,
    LossParams, Matrix, NetworkConfig, NetworkParams, ProbeGalleryOptions, SplitProtocol,
    StageConfig, SynthConfig,
};

fn attrs_matrix(params: &NetworkParams, features: &Matrix, tau: f64) -> Matrix {
    let attrs = predict_deep_attributes(params, features, tau).unwrap();
    let k = attrs[0].len();
    let mut data = Vec::with_capacity(attrs.len() * k);
    for a in &attrs {
        data.extend(a.bits().iter().map(|&b| b as f64));
    }
    Matrix::new(attrs.len(), k, data).unwrap()
}

#[test]
#[ignore]
fn trend_calibration() {
    let started = Instant::now();
    let mut wins_vs_stage1 = 0;
    let mut wins_vs_baseline = 0;
    let mut sum_impr = 0.0;
    let offset: f64 = std::env::var("CAL_OFFSET").map(|v| v.parse().unwrap()).unwrap_or(0.6);
    let sigma: f64 = std::env::var("CAL_SIGMA").map(|v| v.parse().unwrap()).unwrap_or(0.25);
    let width: usize = std::env::var("CAL_WIDTH").map(|v| v.parse().unwrap()).unwrap_or(24);
    println!("offset {offset} sigma {sigma} width {width}: seed  stage1  ssdal  s13  baseline  random  s2gain  meanpos  acc1  acc3  pq1  pq2");
    for seed in 0..10u64 {
        let world_cfg = SynthConfig {
            num_identities: 340,
            attribute_count: 32,
            feature_dim: std::env::var("CAL_DIM").map(|v| v.parse().unwrap()).unwrap_or(96),
            cameras: 2,
            samples_per_identity_per_camera: std::env::var("CAL_SAMPLES").map(|v| v.parse().unwrap()).unwrap_or(4),
            mean_positive_attributes: 8.0,
            attribute_flip_rate: 0.15,
            feature_noise_sigma: sigma,
            camera_offset_scale: offset,
            seed: 1000 + seed,
        };
        let world = generate_world(&world_cfg).unwrap();
        let train_ids: Vec<usize> = (0..40).collect();
        let id_ids: Vec<usize> = (40..100).collect();
        let eval_ids: Vec<usize> = (100..340).collect();
        let t_full = world.emit_labeled_set(&train_ids).unwrap();
        // Labeled set kept small: first sample per (identity, camera).
        let spc = world_cfg.samples_per_identity_per_camera;
        let t_rows: Vec<usize> = (0..t_full.len()).filter(|r| r % spc == 0).collect();
        let t = ssdal_core::LabeledSet::new(
            t_full.features.select_rows(&t_rows).unwrap(),
            t_rows.iter().map(|&r| t_full.labels[r].clone()).collect(),
        )
        .unwrap();
        let u = world.emit_id_set(&id_ids).unwrap();

        let net_cfg = NetworkConfig::new(
            vec![world_cfg.feature_dim, width, 32],
            HiddenActivation::Tanh,
            derive_seed(seed, &[7]),
        )
        .unwrap();
        let base_seed = derive_seed(seed, &[8]);
        let loss = LossParams {
            theta: 1.0,
            gamma: 0.01,
        };
        let cfg1 = StageConfig {
            epochs: std::env::var("CAL_S1_EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(60),
            batch_size: 16,
            learning_rate: std::env::var("CAL_S1_LR").map(|v| v.parse().unwrap()).unwrap_or(0.5),
            loss,
            p: 10,
            tau: 0.0,
            seed: derive_seed(base_seed, &[1]),
            ..StageConfig::default()
        };
        let cfg2 = StageConfig {
            epochs: std::env::var("CAL_S2_EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(20),
            batch_size: 24,
            triplets_per_epoch: std::env::var("CAL_S2_TRIPLETS").map(|v| v.parse().unwrap()).unwrap_or(128),
            learning_rate: std::env::var("CAL_S2_LR").map(|v| v.parse().unwrap()).unwrap_or(0.05),
            loss,
            p: 10,
            tau: 0.0,
            seed: derive_seed(base_seed, &[2]),
            ..StageConfig::default()
        };
        let cfg3 = StageConfig {
            epochs: std::env::var("CAL_S3_EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(10),
            batch_size: 16,
            learning_rate: std::env::var("CAL_S3_LR").map(|v| v.parse().unwrap()).unwrap_or(0.1),
            loss,
            p: 10,
            tau: 0.0,
            seed: derive_seed(base_seed, &[3]),
            ..StageConfig::default()
        };
        let cfgb = StageConfig {
            epochs: 10,
            batch_size: 24,
            triplets_per_epoch: 96,
            learning_rate: 0.05,
            loss,
            p: 10,
            tau: 0.0,
            seed: derive_seed(base_seed, &[4]),
            ..StageConfig::default()
        };

        let s1 = stage1_train(&t, &cfg1, &net_cfg).unwrap();
        let tilde = predict_initial_labels(&s1.params, &u, cfg2.p).unwrap();
        let s2 = stage2_finetune(&s1.params, &u, &tilde, &cfg2).unwrap();
        let s3 = stage3_combine(&s2.params, &t, &u, &cfg3).unwrap();
        let s13 = stage3_combine(&s1.params, &t, &u, &cfg3).unwrap();
        // Pseudo-label quality: mean overlap of top-p labels with prototypes.
        let pseudo_quality = |params: &NetworkParams| -> f64 {
            let labels = predict_initial_labels(params, &u, cfg2.p).unwrap();
            let mut total = 0.0;
            for (r, lab) in labels.labels.iter().enumerate() {
                let proto = world.prototype(u.person_ids[r] as usize);
                let hits = lab
                    .bits()
                    .iter()
                    .zip(proto.bits())
                    .filter(|(&a, &b)| a == 1 && b == 1)
                    .count();
                total += hits as f64 / proto.count_ones().max(1) as f64;
            }
            100.0 * total / labels.labels.len() as f64
        };
        let pq1 = pseudo_quality(&s1.params);
        let pq2 = pseudo_quality(&s2.params);
        let fresh = ssdal_core::init_network(&net_cfg).unwrap();
        let bl = embedding_triplet_baseline(&fresh, &u, &cfgb).unwrap();

        let pg = world
            .emit_probe_gallery(&eval_ids, 0, &[1], &[], &ProbeGalleryOptions::default())
            .unwrap();
        let protocol = SplitProtocol::new(1, 240, derive_seed(seed, &[9])).unwrap();

        let rank1_attrs = |params: &NetworkParams| -> f64 {
            let pgm = pg
                .with_features(
                    attrs_matrix(params, &pg.probe_features, 0.0),
                    attrs_matrix(params, &pg.gallery_features, 0.0),
                )
                .unwrap();
            averaged_cmc(&pgm, &protocol, DistanceKind::Cosine)
                .unwrap()
                .rank1()
        };
        let r1_stage1 = rank1_attrs(&s1.params);
        let r1_s13 = rank1_attrs(&s13.params);
        let r1_ssdal = rank1_attrs(&s3.params);
        let r1_s2 = rank1_attrs(&s2.params);
        let pgb = pg
            .with_features(
                embed(&bl.params, &pg.probe_features).unwrap(),
                embed(&bl.params, &pg.gallery_features).unwrap(),
            )
            .unwrap();
        let r1_baseline = averaged_cmc(&pgb, &protocol, DistanceKind::Cosine)
            .unwrap()
            .rank1();
        let pgr = pg
            .with_features(
                embed(&fresh, &pg.probe_features).unwrap(),
                embed(&fresh, &pg.gallery_features).unwrap(),
            )
            .unwrap();
        let r1_random = averaged_cmc(&pgr, &protocol, DistanceKind::Cosine)
            .unwrap()
            .rank1();

        let acc_of = |params: &NetworkParams| -> f64 {
            let trace = ssdal_core::forward(params, &pg.probe_features).unwrap();
            let mut total = 0.0;
            for (r, &pid) in pg.probe_ids.iter().enumerate() {
                total += ssdal_core::attribute_accuracy(
                    trace.logits().row(r),
                    world.prototype(pid as usize),
                )
                .unwrap();
            }
            100.0 * total / pg.probe_ids.len() as f64
        };
        let acc1 = acc_of(&s1.params);
        let acc3 = acc_of(&s3.params);
        let test_features = pg.probe_features.vstack(&pg.gallery_features).unwrap();
        let attrs = predict_deep_attributes(&s3.params, &test_features, 0.0).unwrap();
        let mean_pos: f64 =
            attrs.iter().map(|a| a.count_ones() as f64).sum::<f64>() / attrs.len() as f64;

        if r1_ssdal >= r1_stage1 {
            wins_vs_stage1 += 1;
        }
        if r1_ssdal >= r1_baseline {
            wins_vs_baseline += 1;
        }
        sum_impr += r1_ssdal - r1_stage1;
        println!(
            "{seed:>4}  {r1_stage1:>6.2}  {rate:>5.2}  {r1_s13:>5.2}  {r1_baseline:>8.2}  {r1_random:>6.2}  {:>6.2}  {mean_pos:>7.2}  {acc1:>5.1}  {acc3:>5.1}  {pq1:>5.1}  {pq2:>5.1}",
            r1_s2 - r1_stage1, rate = r1_ssdal
        );
    }
    println!(
        "wins vs stage1: {wins_vs_stage1}/10, wins vs baseline: {wins_vs_baseline}/10, mean improvement {:.3}, elapsed {:?}",
        sum_impr / 10.0,
        started.elapsed()
    );
}
