//! Semi-supervised deep attribute learning at desk scale.
//!
//! The crate trains a small feed-forward attribute detector in three
//! stages (supervised cross-entropy, triplet fine-tuning on person ids,
//! merged-set fine-tuning), binarizes its outputs into attribute vectors,
//! and evaluates them on person re-identification protocols (CMC over
//! random splits, retrieval-style mAP) against a deterministic synthetic
//! world.

pub mod attributes;
pub mod error;
pub mod eval;
pub mod loss;
pub mod matrix;
pub mod net;
pub mod pipeline;
pub mod seeding;
pub mod synth;
pub mod triplet;
pub mod verification;

pub use attributes::{
    attribute_accuracy, binarize_threshold, binarize_top_p, cosine_distance, squared_euclidean,
    AttributeVector,
};
pub use error::{Error, Result};
pub use eval::{
    aggregate_attribute_accuracy, averaged_cmc, cmc, mean_average_precision, pool_tracklet,
    rank_gallery, relevance_from_ids, CmcCurve, DistanceKind, MapResult, PoolMode, ProbeGallery,
    QueryMode, SplitProtocol,
};
pub use loss::{gradient_check, sigmoid_cross_entropy};
pub use matrix::Matrix;
pub use net::{
    backward, backward_from_layer, forward, init_network, load_checkpoint, save_checkpoint,
    sgd_step, Activation, ForwardTrace, GradientBundle, HiddenActivation, Layer, NetworkConfig,
    NetworkParams,
};
pub use pipeline::{
    embed, embedding_triplet_baseline, predict_deep_attributes, predict_initial_labels,
    stage1_train, stage2_finetune, stage3_combine, to_sorted_json, train_supervised, IdSet,
    LabeledSet, PipelineReport, StageConfig, StageReport, StageResult,
};
pub use synth::{generate_world, ProbeGalleryOptions, SynthConfig, SynthWorld};
pub use verification::{run_standard_gradient_checks, LossCheckReport, GRADIENT_CHECK_THRESHOLD};
pub use triplet::{
    attributes_triplet_loss, hinge_triplet_loss, mine_triplets, InitialLabels, LossParams,
    Triplet, TripletBatch, TripletGrads,
};
