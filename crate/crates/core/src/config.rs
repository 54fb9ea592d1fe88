//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and falls
//! back to the desk-scale MNIST defaults below; unknown keys are errors.
//!
//! | key | meaning |
//! |-----|---------|
//! | `dataset` | `mnist` or `blobs` |
//! | `data_dir` | directory holding `train-*` and `t10k-*` IDX files |
//! | `train_limit`, `test_limit` | keep the first N records of each split |
//! | `blob_classes`, `blob_dim`, `blob_counts` | blob layout; counts are comma separated, one per class |
//! | `blob_centroid_scale`, `blob_within_std`, `blob_seed` | blob geometry and seed |
//! | `blob_holdout` | every N-th blob sample goes to the test split |
//! | `widths` | comma-separated layer widths, input first, classes last |
//! | `cut` | layers held by the non-label party |
//! | `epochs`, `batch`, `lr` | SGD schedule |
//! | `lr_reference_batch` | when set, the step size is `lr * batch / lr_reference_batch` |
//! | `seed`, `shuffle_seed` | weight init and per-epoch shuffle seeds |
//! | `attack_source` | `gradients` or `smashed` |
//! | `attack_epoch` | `first`, `last`, `all` (pooled) or a 0-based epoch |
//! | `smashed_cut` | cut used for the after-training smashed-data attack (defaults to `cut`) |
//! | `pca_dim` | PCA target dimension, `0` disables |
//! | `anchor_seed` | seed for picking one known-label sample per class |
//! | `anchor_free` | `true` maps clusters to labels by class frequency |
//! | `class_prior` | comma-separated class frequencies for anchor-free mode |
//! | `noise_clip`, `noise_sigma`, `noise_seed` | clipped Gaussian noise defense, active when `noise_sigma` is set |
//! | `compression_ratio` | gradient compression defense, active when set |
//! | `reported_epsilon`, `reported_delta` | informational privacy labels |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::defenses::{CompressionDefense, DefenseConfig, NoiseDefense};
use crate::error::{Error, Result};
use crate::split::{Source, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Blobs,
}

/// Which training epoch's gradients the attack uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochSelect {
    First,
    Last,
    /// Pool every epoch into one point set.
    All,
    Index(usize),
}

impl EpochSelect {
    /// Concrete epoch for a run of `epochs` epochs; `None` means pooled.
    pub fn resolve(self, epochs: usize) -> Result<Option<usize>> {
        match self {
            EpochSelect::First => Ok(Some(0)),
            EpochSelect::Last => Ok(Some(epochs.saturating_sub(1))),
            EpochSelect::All => Ok(None),
            EpochSelect::Index(e) if e < epochs => Ok(Some(e)),
            EpochSelect::Index(e) => {
                Err(Error::InvalidArgument(format!("attack epoch {e} out of range for {epochs} epochs")))
            }
        }
    }
}

impl std::fmt::Display for EpochSelect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpochSelect::First => f.write_str("first"),
            EpochSelect::Last => f.write_str("last"),
            EpochSelect::All => f.write_str("all"),
            EpochSelect::Index(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for EpochSelect {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "first" => Ok(EpochSelect::First),
            "last" => Ok(EpochSelect::Last),
            "all" => Ok(EpochSelect::All),
            n => n.parse().map(EpochSelect::Index).map_err(|_| "expected first, last, all or an epoch number".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub blob_classes: usize,
    pub blob_dim: usize,
    pub blob_counts: Vec<usize>,
    pub blob_centroid_scale: f64,
    pub blob_within_std: f64,
    pub blob_seed: u64,
    pub blob_holdout: usize,
    pub widths: Vec<usize>,
    pub cut: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_reference_batch: Option<usize>,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub attack_source: Source,
    pub attack_epoch: EpochSelect,
    pub smashed_cut: Option<usize>,
    pub pca_dim: Option<usize>,
    pub anchor_seed: u64,
    pub anchor_free: bool,
    pub class_prior: Option<Vec<f64>>,
    pub noise_clip: f64,
    pub noise_sigma: Option<f64>,
    pub noise_seed: u64,
    pub compression_ratio: Option<f64>,
    pub reported_epsilon: Option<f64>,
    pub reported_delta: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: PathBuf::from("data/mnist-desk"),
            train_limit: Some(8000),
            test_limit: Some(2000),
            blob_classes: 3,
            blob_dim: 20,
            blob_counts: vec![200, 200, 200],
            blob_centroid_scale: 1.0,
            blob_within_std: 1.0,
            blob_seed: 7,
            blob_holdout: 5,
            widths: vec![784, 128, 64, 32, 10],
            cut: 1,
            epochs: 5,
            batch: 128,
            lr: 0.17,
            lr_reference_batch: None,
            seed: 42,
            shuffle_seed: 1234,
            attack_source: Source::Gradients,
            attack_epoch: EpochSelect::First,
            smashed_cut: None,
            pca_dim: None,
            anchor_seed: 2023,
            anchor_free: false,
            class_prior: None,
            noise_clip: 1.0,
            noise_sigma: None,
            noise_seed: 99,
            compression_ratio: None,
            reported_epsilon: None,
            reported_delta: None,
        }
    }
}

/// Every accepted key, in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "train_limit",
    "test_limit",
    "blob_classes",
    "blob_dim",
    "blob_counts",
    "blob_centroid_scale",
    "blob_within_std",
    "blob_seed",
    "blob_holdout",
    "widths",
    "cut",
    "epochs",
    "batch",
    "lr",
    "lr_reference_batch",
    "seed",
    "shuffle_seed",
    "attack_source",
    "attack_epoch",
    "smashed_cut",
    "pca_dim",
    "anchor_seed",
    "anchor_free",
    "class_prior",
    "noise_clip",
    "noise_sigma",
    "noise_seed",
    "compression_ratio",
    "reported_epsilon",
    "reported_delta",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        detail: format!("cannot parse `{value}` as {}", std::any::type_name::<T>()),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// `none`/empty map to `None`.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset" => {
                self.dataset = match value {
                    "mnist" => DatasetKind::Mnist,
                    "blobs" => DatasetKind::Blobs,
                    other => {
                        return Err(Error::Config {
                            key: key.into(),
                            detail: format!("unknown dataset `{other}` (mnist or blobs)"),
                        })
                    }
                }
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "train_limit" => self.train_limit = parse_opt(key, value)?,
            "test_limit" => self.test_limit = parse_opt(key, value)?,
            "blob_classes" => self.blob_classes = parse(key, value)?,
            "blob_dim" => self.blob_dim = parse(key, value)?,
            "blob_counts" => self.blob_counts = parse_list(key, value)?,
            "blob_centroid_scale" => self.blob_centroid_scale = parse(key, value)?,
            "blob_within_std" => self.blob_within_std = parse(key, value)?,
            "blob_seed" => self.blob_seed = parse(key, value)?,
            "blob_holdout" => self.blob_holdout = parse(key, value)?,
            "widths" => self.widths = parse_list(key, value)?,
            "cut" => self.cut = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_reference_batch" => self.lr_reference_batch = parse_opt(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "shuffle_seed" => self.shuffle_seed = parse(key, value)?,
            "attack_source" => {
                self.attack_source =
                    value.parse().map_err(|e: Error| Error::Config { key: key.into(), detail: e.to_string() })?
            }
            "attack_epoch" => {
                self.attack_epoch = value.parse().map_err(|detail| Error::Config { key: key.into(), detail })?
            }
            "smashed_cut" => self.smashed_cut = parse_opt(key, value)?,
            "pca_dim" => self.pca_dim = parse_opt::<usize>(key, value)?.filter(|&d| d > 0),
            "anchor_seed" => self.anchor_seed = parse(key, value)?,
            "anchor_free" => self.anchor_free = parse(key, value)?,
            "class_prior" => {
                self.class_prior =
                    if value.is_empty() || value == "none" { None } else { Some(parse_list(key, value)?) }
            }
            "noise_clip" => self.noise_clip = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_opt(key, value)?,
            "noise_seed" => self.noise_seed = parse(key, value)?,
            "compression_ratio" => self.compression_ratio = parse_opt(key, value)?,
            "reported_epsilon" => self.reported_epsilon = parse_opt(key, value)?,
            "reported_delta" => self.reported_delta = parse_opt(key, value)?,
            unknown => {
                return Err(Error::Config { key: unknown.to_string(), detail: "unknown key".into() });
            }
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    key: line.to_string(),
                    detail: format!("line {} is not `key = value`", n + 1),
                });
            };
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut out = String::new();
        for &key in CONFIG_KEYS {
            let value = match key {
                "dataset" => match self.dataset {
                    DatasetKind::Mnist => "mnist".into(),
                    DatasetKind::Blobs => "blobs".into(),
                },
                "data_dir" => self.data_dir.display().to_string(),
                "train_limit" => opt(self.train_limit.map(|v| v.to_string())),
                "test_limit" => opt(self.test_limit.map(|v| v.to_string())),
                "blob_classes" => self.blob_classes.to_string(),
                "blob_dim" => self.blob_dim.to_string(),
                "blob_counts" => join(&self.blob_counts),
                "blob_centroid_scale" => self.blob_centroid_scale.to_string(),
                "blob_within_std" => self.blob_within_std.to_string(),
                "blob_seed" => self.blob_seed.to_string(),
                "blob_holdout" => self.blob_holdout.to_string(),
                "widths" => join(&self.widths),
                "cut" => self.cut.to_string(),
                "epochs" => self.epochs.to_string(),
                "batch" => self.batch.to_string(),
                "lr" => self.lr.to_string(),
                "lr_reference_batch" => opt(self.lr_reference_batch.map(|v| v.to_string())),
                "seed" => self.seed.to_string(),
                "shuffle_seed" => self.shuffle_seed.to_string(),
                "attack_source" => self.attack_source.as_str().into(),
                "attack_epoch" => self.attack_epoch.to_string(),
                "smashed_cut" => opt(self.smashed_cut.map(|v| v.to_string())),
                "pca_dim" => self.pca_dim.unwrap_or(0).to_string(),
                "anchor_seed" => self.anchor_seed.to_string(),
                "anchor_free" => self.anchor_free.to_string(),
                "class_prior" => opt(self.class_prior.as_deref().map(join)),
                "noise_clip" => self.noise_clip.to_string(),
                "noise_sigma" => opt(self.noise_sigma.map(|v| v.to_string())),
                "noise_seed" => self.noise_seed.to_string(),
                "compression_ratio" => opt(self.compression_ratio.map(|v| v.to_string())),
                "reported_epsilon" => opt(self.reported_epsilon.map(|v| v.to_string())),
                "reported_delta" => opt(self.reported_delta.map(|v| v.to_string())),
                _ => unreachable!("CONFIG_KEYS and to_text disagree"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn defense(&self) -> DefenseConfig {
        DefenseConfig {
            noise: self.noise_sigma.map(|sigma| NoiseDefense { clip_norm: self.noise_clip, sigma, seed: self.noise_seed }),
            compression: self.compression_ratio.map(|ratio| CompressionDefense { ratio }),
            reported_epsilon: self.reported_epsilon,
            reported_delta: self.reported_delta,
        }
    }

    /// Step size after optional linear batch scaling.
    pub fn effective_lr(&self) -> f64 {
        match self.lr_reference_batch {
            Some(r) if r > 0 => self.lr * self.batch as f64 / r as f64,
            _ => self.lr,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.effective_lr(),
            shuffle_seed: self.shuffle_seed,
            defense: self.defense(),
            record_output_probe: false,
        }
    }
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse_str(&text)
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::write(path, cfg.to_text()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_file() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetKind::Blobs;
        cfg.blob_counts = vec![50, 30, 20];
        cfg.lr = 0.0125;
        cfg.pca_dim = Some(3);
        cfg.attack_epoch = EpochSelect::Index(2);
        cfg.class_prior = Some(vec![0.5, 0.3, 0.2]);
        cfg.noise_sigma = Some(0.7);
        cfg.train_limit = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        write_config(&path, &cfg).unwrap();
        assert_eq!(read_config(&path).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse_str("cut = 1\ncutt = 2\n").unwrap_err();
        assert!(err.to_string().contains("`cutt`"), "{err}");
    }

    #[test]
    fn ill_typed_value_is_named() {
        let err = ExperimentConfig::parse_str("epochs = five").unwrap_err();
        assert!(err.to_string().contains("`epochs`"), "{err}");
        assert!(ExperimentConfig::parse_str("attack_source = labels").is_err());
        assert!(ExperimentConfig::parse_str("just words").is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let cfg = ExperimentConfig::parse_str("# header\n\nbatch = 16  # small\n").unwrap();
        assert_eq!(cfg.batch, 16);
    }

    #[test]
    fn every_key_is_settable() {
        let text = ExperimentConfig::default().to_text();
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
        assert_eq!(ExperimentConfig::parse_str(&text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn linear_batch_scaling() {
        let mut cfg = ExperimentConfig::parse_str("lr = 0.16\nbatch = 16\nlr_reference_batch = 128").unwrap();
        assert!((cfg.effective_lr() - 0.02).abs() < 1e-15);
        cfg.lr_reference_batch = None;
        assert_eq!(cfg.effective_lr(), 0.16);
    }

    #[test]
    fn epoch_selection() {
        assert_eq!(EpochSelect::Last.resolve(5).unwrap(), Some(4));
        assert_eq!(EpochSelect::All.resolve(5).unwrap(), None);
        assert!(EpochSelect::Index(5).resolve(5).is_err());
    }
}
