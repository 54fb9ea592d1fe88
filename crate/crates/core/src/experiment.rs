//! Train-then-attack arms and one-axis sweeps driven by an [`ExperimentConfig`].

use std::fmt;
use std::str::FromStr;

use crate::attack::{run_clustering_attack, AnchorSet, AttackInput, AttackOptions, AttackReport};
use crate::config::{DatasetKind, EpochSelect, ExperimentConfig};
use crate::data::{gen_blobs, load_idx_dir, Dataset};
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::split::{collect_smashed, train, SplitModel, Source, Tape, TapeView};

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the IDX pair from `data_dir`, or generates blobs and holds out every
/// `blob_holdout`-th sample.
pub fn load_data(cfg: &ExperimentConfig) -> Result<DataSplits> {
    match cfg.dataset {
        DatasetKind::Mnist => Ok(DataSplits {
            train: load_idx_dir(&cfg.data_dir, "train", cfg.train_limit)?,
            test: load_idx_dir(&cfg.data_dir, "t10k", cfg.test_limit)?,
        }),
        DatasetKind::Blobs => {
            let all = gen_blobs(
                cfg.blob_classes,
                cfg.blob_dim,
                &cfg.blob_counts,
                cfg.blob_centroid_scale,
                cfg.blob_within_std,
                cfg.blob_seed,
            )?;
            let (train, test) = all.split_holdout(cfg.blob_holdout)?;
            Ok(DataSplits { train, test })
        }
    }
}

pub fn network_spec(cfg: &ExperimentConfig, data: &Dataset) -> Result<NetworkSpec> {
    match (cfg.widths.first(), cfg.widths.last()) {
        (Some(&d), Some(&k)) if d == data.dim() && k == data.classes => Ok(NetworkSpec::relu(&cfg.widths, cfg.seed)),
        _ => Err(Error::Config {
            key: "widths".into(),
            detail: format!(
                "{:?} must start at the input width {} and end at the class count {}",
                cfg.widths,
                data.dim(),
                data.classes
            ),
        }),
    }
}

/// A trained split model with its cut-layer tape.
#[derive(Debug, Clone)]
pub struct TrainedArm {
    pub model: SplitModel,
    pub tape: Tape,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn train_arm(cfg: &ExperimentConfig, data: &DataSplits) -> Result<TrainedArm> {
    let spec = network_spec(cfg, &data.train)?;
    let split = SplitModel::new(&spec, cfg.cut)?;
    let (model, tape) = train(split, &data.train, &cfg.training())?;
    Ok(TrainedArm {
        train_accuracy: model.accuracy(&data.train)?,
        test_accuracy: model.accuracy(&data.test)?,
        model,
        tape,
    })
}

/// Attack output together with the points it was run on.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub view: TapeView,
    pub report: AttackReport,
}

/// Clusters `view` using either one anchor per class picked with
/// `anchor_seed`, or the class prior (configured, else the empirical class
/// frequencies of `view`) when `anchor_free` is set.
pub fn attack_view(cfg: &ExperimentConfig, view: TapeView, source: Source, classes: usize) -> Result<AttackRun> {
    let options = AttackOptions { pca_dim: cfg.pca_dim, seed: cfg.anchor_seed, ..AttackOptions::default() };
    let input = AttackInput::new(view.points.clone(), source, classes)?;
    let outcome = if cfg.anchor_free {
        let prior = match &cfg.class_prior {
            Some(p) => p.clone(),
            None => {
                let mut counts = vec![0.0; classes];
                for &t in &view.truth {
                    counts[t] += 1.0;
                }
                counts
            }
        };
        run_clustering_attack(&input, None, Some(&prior), &options)?
    } else {
        let anchors = AnchorSet::choose(&view.points, &view.truth, classes, cfg.anchor_seed)?;
        run_clustering_attack(&input, Some(&anchors), None, &options)?
    };
    let report = outcome.report(&view.truth, classes)?;
    Ok(AttackRun { view, report })
}

/// Attack on the recorded cut gradients of the configured epoch.
pub fn gradient_attack(cfg: &ExperimentConfig, tape: &Tape, classes: usize) -> Result<AttackRun> {
    let epoch = cfg.attack_epoch.resolve(cfg.epochs)?;
    attack_view(cfg, tape.view(Source::Gradients, epoch)?, Source::Gradients, classes)
}

/// Attack on smashed data of the training set, taken from the trained model
/// at `smashed_cut` (or the training cut).
pub fn smashed_attack(cfg: &ExperimentConfig, model: &SplitModel, train_data: &Dataset) -> Result<AttackRun> {
    let cut = cfg.smashed_cut.unwrap_or(cfg.cut);
    let model = if cut == model.cut_index { model.clone() } else { model.recut(cut)? };
    let tape = collect_smashed(&model, train_data)?;
    attack_view(cfg, tape.view(Source::SmashedData, None)?, Source::SmashedData, train_data.classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Cut,
    /// Which epoch's gradients are attacked; training runs at least that long.
    Epoch,
    Batch,
    PcaDim,
    NoiseSigma,
    CompressionRatio,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::Cut,
        SweepAxis::Epoch,
        SweepAxis::Batch,
        SweepAxis::PcaDim,
        SweepAxis::NoiseSigma,
        SweepAxis::CompressionRatio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Cut => "cut",
            SweepAxis::Epoch => "epoch",
            SweepAxis::Batch => "batch",
            SweepAxis::PcaDim => "pca_dim",
            SweepAxis::NoiseSigma => "noise_sigma",
            SweepAxis::CompressionRatio => "compression_ratio",
        }
    }

    /// Base config with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Cut => {
                cfg.set("cut", value)?;
                cfg.smashed_cut = None;
            }
            SweepAxis::Epoch => {
                cfg.set("attack_epoch", value)?;
                if let EpochSelect::Index(e) = cfg.attack_epoch {
                    cfg.epochs = cfg.epochs.max(e + 1);
                }
            }
            other => cfg.set(other.as_str(), value)?,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = SweepAxis::ALL.iter().map(|a| a.as_str()).collect();
            Error::InvalidArgument(format!("unknown sweep axis `{s}` (one of {})", names.join(", ")))
        })
    }
}

/// One long-form sweep row. Failed arms carry `error` and no numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub source: Source,
    pub accuracy: Option<f64>,
    pub model_test_accuracy: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 6] = ["axis", "value", "source", "accuracy", "model_test_accuracy", "error"];

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn to_record(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        vec![
            self.axis.to_string(),
            self.value.clone(),
            self.source.as_str().to_string(),
            num(self.accuracy),
            num(self.model_test_accuracy),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn arm_rows(base: &ExperimentConfig, data: &DataSplits, axis: SweepAxis, value: &str) -> Vec<SweepRow> {
    let row = |source, result: Result<f64>, test: Option<f64>| match result {
        Ok(acc) => SweepRow {
            axis,
            value: value.to_string(),
            source,
            accuracy: Some(acc),
            model_test_accuracy: test,
            error: None,
        },
        Err(e) => SweepRow {
            axis,
            value: value.to_string(),
            source,
            accuracy: None,
            model_test_accuracy: test,
            error: Some(e.to_string()),
        },
    };
    let trained = axis.apply(base, value).and_then(|cfg| train_arm(&cfg, data).map(|arm| (cfg, arm)));
    match trained {
        Ok((cfg, arm)) => {
            let test = Some(arm.test_accuracy);
            let g = gradient_attack(&cfg, &arm.tape, data.train.classes).map(|r| r.report.accuracy);
            let s = smashed_attack(&cfg, &arm.model, &data.train).map(|r| r.report.accuracy);
            vec![row(Source::Gradients, g, test), row(Source::SmashedData, s, test)]
        }
        Err(e) => {
            let msg = e.to_string();
            [Source::Gradients, Source::SmashedData]
                .into_iter()
                .map(|s| row(s, Err(Error::InvalidArgument(msg.clone())), None))
                .collect()
        }
    }
}

/// Retrains and attacks once per value. Data is loaded once; arm failures
/// become error rows. Rows come out in value order, gradients before smashed.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>> {
    let data = load_data(base)?;
    Ok(values.iter().flat_map(|v| arm_rows(base, &data, axis, v)).collect())
}
