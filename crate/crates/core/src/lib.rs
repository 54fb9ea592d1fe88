//! Split-learning simulator with label-inference attacks on what crosses the cut.
//!
//! A [`SplitModel`] is trained with [`train`], which records every sample's
//! cut-layer gradient and smashed data on a [`Tape`]. The attacks in
//! [`attack`] cluster those vectors and recover labels from one known
//! example per class.

pub mod attack;
pub mod config;
pub mod data;
pub mod defenses;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod nn;
pub mod split;

pub use attack::{
    logit_sign_attack, run_clustering_attack, score, weight_sign_attack, AnchorSet, AttackFlag, AttackInput,
    AttackOptions, AttackReport, ClusteringOutcome,
};
pub use config::{read_config, write_config, DatasetKind, EpochSelect, ExperimentConfig};
pub use data::{gen_blobs, load_idx, write_results_csv, Dataset};
pub use defenses::{CompressionDefense, DefenseConfig, NoiseDefense};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{Activation, Network, NetworkSpec};
pub use split::{collect_smashed, train, SplitModel, Source, Tape, TapeEntry, TapeView, TrainingConfig};
