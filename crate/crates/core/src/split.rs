//! Two-party split-learning simulation.
//!
//! The non-label party (client) holds the bottom layers and the raw features;
//! the label party (server) holds the top layers and the labels. Each batch
//! runs client forward, server loss and backprop, gradient return and client
//! backprop. Everything the client legitimately observes at the cut is
//! recorded on a [`Tape`].

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::defenses::{clip_and_noise, clip_factor, compress, DefenseConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{argmax, logit_gradient, softmax_cross_entropy, Network, NetworkSpec};

/// A network cut into a client-side bottom and a server-side top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitModel {
    pub bottom: Network,
    pub top: Network,
    /// Number of layers held by the client.
    pub cut_index: usize,
}

impl SplitModel {
    /// Initializes the full network from `spec` and cuts it after
    /// `cut_index` layers.
    pub fn new(spec: &NetworkSpec, cut_index: usize) -> Result<Self> {
        Self::from_network(Network::init(spec)?, cut_index)
    }

    pub fn from_network(network: Network, cut_index: usize) -> Result<Self> {
        let total = network.num_layers();
        if cut_index == 0 || cut_index >= total {
            return Err(Error::InvalidArgument(format!(
                "cut index {cut_index} must be in 1..={} for a {total}-layer network",
                total.saturating_sub(1)
            )));
        }
        let mut layers = network.layers;
        let top = layers.split_off(cut_index);
        Ok(Self { bottom: Network::from_layers(layers)?, top: Network::from_layers(top)?, cut_index })
    }

    /// Concatenates bottom and top back into one network.
    pub fn join(&self) -> Network {
        let mut layers = self.bottom.layers.clone();
        layers.extend(self.top.layers.iter().cloned());
        Network { layers }
    }

    /// Moves the cut without touching any weights.
    pub fn recut(&self, cut_index: usize) -> Result<Self> {
        Self::from_network(self.join(), cut_index)
    }

    pub fn cut_width(&self) -> usize {
        self.bottom.output_width()
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(features.rows());
        for chunk in row_chunks(features.rows(), EVAL_CHUNK) {
            let batch = features.select_rows(&chunk);
            let smashed = self.bottom.forward(&batch)?;
            let logits = self.top.forward(smashed.output())?;
            out.extend(logits.output().row_iter().map(argmax));
        }
        Ok(out)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let predicted = self.predict(&data.features)?;
        Ok(crate::nn::accuracy(&predicted, &data.labels))
    }
}

const EVAL_CHUNK: usize = 1024;

fn row_chunks(n: usize, size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(size.max(1)).map(move |start| (start..(start + size).min(n)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
    pub defense: DefenseConfig,
    /// Also record the server-side logits gradient and last hidden
    /// activation per sample. This is instrumentation for the sign-attack
    /// baselines; a practical client never sees these.
    pub record_output_probe: bool,
}

impl TrainingConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, shuffle_seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            shuffle_seed,
            defense: DefenseConfig::none(),
            record_output_probe: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        self.defense.validate()
    }
}

/// Server-side view of one sample at the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputProbe {
    /// `probs - onehot(label)`, undefended.
    pub logit_gradient: Vec<f64>,
    /// Input to the last layer.
    pub last_hidden: Vec<f64>,
}

impl OutputProbe {
    /// Unreduced last-layer weight gradient: row `i` is `logit_gradient[i] * last_hidden`.
    pub fn last_layer_weight_gradient(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self
            .logit_gradient
            .iter()
            .map(|g| self.last_hidden.iter().map(|a| g * a).collect())
            .collect();
        Matrix::from_rows(&rows).expect("outer product of finite vectors")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeEntry {
    pub epoch: usize,
    pub batch_index: usize,
    pub sample_id: usize,
    /// `d loss_s / d a_cut` as received by the client, after defenses. Empty
    /// for smashed-only tapes.
    pub cut_gradient: Vec<f64>,
    /// `a_cut` as sent by the client.
    pub smashed: Vec<f64>,
    /// Ground truth, kept for scoring only.
    pub true_label: usize,
    pub probe: Option<OutputProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeMeta {
    pub cut_index: usize,
    pub config: Option<TrainingConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub cut_width: usize,
    pub entries: Vec<TapeEntry>,
    /// Not part of the binary format.
    pub meta: Option<TapeMeta>,
}

/// Which recorded vector the attack sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Gradients,
    SmashedData,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gradients => "gradients",
            Source::SmashedData => "smashed",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradients" | "gradient" => Ok(Source::Gradients),
            "smashed" | "smashed_data" => Ok(Source::SmashedData),
            other => Err(Error::InvalidArgument(format!("unknown attack source `{other}`"))),
        }
    }
}

/// Rows of a tape selected for one attack, with labels split off.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeView {
    pub sample_ids: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// Held-out ground truth, parallel to `points`.
    pub truth: Vec<usize>,
}

pub const TAPE_MAGIC: &[u8; 8] = b"SLTAPE01";
const RECORD_HEADER_WORDS: usize = 5;
const FLAG_HAS_GRADIENT: u64 = 1;

impl Tape {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct epochs in ascending order.
    pub fn epochs(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.entries.iter().map(|t| t.epoch).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Entries of `epoch` (all epochs when `None`), in recording order.
    pub fn view(&self, source: Source, epoch: Option<usize>) -> Result<TapeView> {
        let mut view = TapeView { sample_ids: Vec::new(), points: Vec::new(), truth: Vec::new() };
        for e in self.entries.iter().filter(|e| epoch.is_none_or(|ep| e.epoch == ep)) {
            let v = match source {
                Source::Gradients => &e.cut_gradient,
                Source::SmashedData => &e.smashed,
            };
            if v.len() != self.cut_width {
                return Err(Error::InvalidArgument(format!(
                    "tape entry for sample {} has no {} vector",
                    e.sample_id,
                    source.as_str()
                )));
            }
            view.sample_ids.push(e.sample_id);
            view.points.push(v.clone());
            view.truth.push(e.true_label);
        }
        if view.points.is_empty() {
            return Err(Error::InvalidArgument(format!("tape has no entries for epoch {epoch:?}")));
        }
        Ok(view)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(TAPE_MAGIC)?;
        w.write_all(&(self.cut_width as u64).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        let zeros = vec![0.0; self.cut_width];
        for e in &self.entries {
            let has_grad = !e.cut_gradient.is_empty();
            for word in [
                e.epoch as u64,
                e.batch_index as u64,
                e.sample_id as u64,
                e.true_label as u64,
                if has_grad { FLAG_HAS_GRADIENT } else { 0 },
            ] {
                w.write_all(&word.to_le_bytes())?;
            }
            let grad = if has_grad { &e.cut_gradient } else { &zeros };
            for v in grad.iter().chain(&e.smashed) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::format("tape", e.to_string()))?;
        if buf.len() < 24 || &buf[..8] != TAPE_MAGIC {
            return Err(Error::format("tape", "missing SLTAPE01 header"));
        }
        let word = |at: usize| u64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
        let cut_width = word(8) as usize;
        let count = word(16) as usize;
        let record = 8 * (RECORD_HEADER_WORDS + 2 * cut_width);
        let expected = count
            .checked_mul(record)
            .and_then(|n| n.checked_add(24))
            .ok_or_else(|| Error::format("tape", "entry count overflows"))?;
        if buf.len() != expected {
            return Err(Error::format(
                "tape",
                format!("{} bytes for {count} records of width {cut_width}, expected {expected}", buf.len()),
            ));
        }
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let base = 24 + i * record;
            let floats = |from: usize| -> Vec<f64> {
                (0..cut_width)
                    .map(|j| f64::from_le_bytes(buf[from + 8 * j..from + 8 * j + 8].try_into().unwrap()))
                    .collect()
            };
            let flags = word(base + 32);
            let grad_at = base + 8 * RECORD_HEADER_WORDS;
            entries.push(TapeEntry {
                epoch: word(base) as usize,
                batch_index: word(base + 8) as usize,
                sample_id: word(base + 16) as usize,
                true_label: word(base + 24) as usize,
                cut_gradient: if flags & FLAG_HAS_GRADIENT != 0 { floats(grad_at) } else { Vec::new() },
                smashed: floats(grad_at + 8 * cut_width),
                probe: None,
            });
        }
        Ok(Tape { cut_width, entries, meta: None })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// Lossless CSV export: floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> =
            ["epoch", "batch_index", "sample_id", "true_label", "has_gradient"].map(String::from).to_vec();
        header.extend((0..self.cut_width).map(|j| format!("g{j}")));
        header.extend((0..self.cut_width).map(|j| format!("s{j}")));
        out.write_record(&header)?;
        for e in &self.entries {
            let has_grad = !e.cut_gradient.is_empty();
            let mut rec = vec![
                e.epoch.to_string(),
                e.batch_index.to_string(),
                e.sample_id.to_string(),
                e.true_label.to_string(),
                u8::from(has_grad).to_string(),
            ];
            if has_grad {
                rec.extend(e.cut_gradient.iter().map(f64::to_string));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), self.cut_width));
            }
            rec.extend(e.smashed.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::format("tape csv", e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let cols = rdr.headers()?.len();
        if cols < RECORD_HEADER_WORDS || (cols - RECORD_HEADER_WORDS) % 2 != 0 {
            return Err(Error::format("tape csv", format!("{cols} columns")));
        }
        let cut_width = (cols - RECORD_HEADER_WORDS) / 2;
        let bad = |what: &str| Error::format("tape csv", format!("bad {what}"));
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(&format!("integer in column {i}")));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&format!("float in column {i}")));
            let has_grad = int(4)? == 1;
            let g0 = RECORD_HEADER_WORDS;
            let cut_gradient = if has_grad { (g0..g0 + cut_width).map(float).collect::<Result<_>>()? } else { Vec::new() };
            let smashed = (g0 + cut_width..g0 + 2 * cut_width).map(float).collect::<Result<_>>()?;
            entries.push(TapeEntry {
                epoch: int(0)?,
                batch_index: int(1)?,
                sample_id: int(2)?,
                true_label: int(3)?,
                cut_gradient,
                smashed,
                probe: None,
            });
        }
        Ok(Tape { cut_width, entries, meta: None })
    }
}

/// Per-epoch sample order: a Fisher-Yates shuffle seeded by `shuffle_seed ^ epoch`.
pub fn shuffled_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Runs split training and returns the trained model with its tape.
pub fn train(mut split: SplitModel, data: &Dataset, config: &TrainingConfig) -> Result<(SplitModel, Tape)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.features.cols() != split.bottom.input_width() {
        return Err(Error::Shape(format!(
            "dataset has {} features, bottom model expects {}",
            data.features.cols(),
            split.bottom.input_width()
        )));
    }
    if data.classes > split.top.output_width() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, top model outputs {}",
            data.classes,
            split.top.output_width()
        )));
    }

    let defense = config.defense;
    let mut noise_rng = defense.noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    let cut_width = split.cut_width();
    let mut entries = Vec::with_capacity(config.epochs * data.len());

    for epoch in 0..config.epochs {
        let order = shuffled_order(data.len(), config.shuffle_seed, epoch);
        for (batch_index, ids) in order.chunks(config.batch_size).enumerate() {
            let x = data.features.select_rows(ids);
            let labels: Vec<usize> = ids.iter().map(|&i| data.labels[i]).collect();

            // client
            let bottom_trace = split.bottom.forward(&x)?;
            let smashed = bottom_trace.output();

            // server
            let top_trace = split.top.forward(smashed)?;
            let (_, probs) = softmax_cross_entropy(top_trace.output(), &labels)?;
            let logit_grad = logit_gradient(&probs, &labels)?;
            let mut top_grads = split.top.backward_from(&top_trace, &logit_grad, true)?;
            if let Some(noise) = defense.noise {
                // clip each sample's whole contribution so the top model also
                // trains on clipped per-sample gradients
                let cut = top_grads.input.as_ref().expect("input gradient requested");
                let factors: Vec<f64> = cut.row_iter().map(|g| clip_factor(g, noise.clip_norm)).collect();
                if factors.iter().any(|&f| f < 1.0) {
                    let mut scaled = logit_grad.clone();
                    for (r, f) in factors.iter().enumerate() {
                        scaled.row_mut(r).iter_mut().for_each(|v| *v *= f);
                    }
                    top_grads = split.top.backward_from(&top_trace, &scaled, true)?;
                }
            }
            let mut cut_grad = top_grads.input.take().expect("input gradient requested");
            split.top.sgd_step(&top_grads, config.learning_rate)?;

            for r in 0..cut_grad.rows() {
                let row = cut_grad.row_mut(r);
                let defended = if let (Some(noise), Some(rng)) = (defense.noise, noise_rng.as_mut()) {
                    clip_and_noise(row, noise.clip_norm, noise.sigma, rng)?
                } else if let Some(c) = defense.compression {
                    compress(row, c.ratio)?
                } else {
                    continue;
                };
                row.copy_from_slice(&defended);
            }

            for (r, (&sample_id, &label)) in ids.iter().zip(&labels).enumerate() {
                let probe = config.record_output_probe.then(|| OutputProbe {
                    logit_gradient: logit_grad.row(r).to_vec(),
                    last_hidden: top_trace.layer_input(split.top.num_layers() - 1).row(r).to_vec(),
                });
                entries.push(TapeEntry {
                    epoch,
                    batch_index,
                    sample_id,
                    cut_gradient: cut_grad.row(r).to_vec(),
                    smashed: smashed.row(r).to_vec(),
                    true_label: label,
                    probe,
                });
            }

            // client
            let bottom_grads = split.bottom.backward_from(&bottom_trace, &cut_grad, false)?;
            split.bottom.sgd_step(&bottom_grads, config.learning_rate)?;
        }
        if !split.bottom.layers.iter().chain(&split.top.layers).all(|l| l.weights.all_finite()) {
            return Err(Error::NonFinite(format!("weights after epoch {epoch}; learning rate too large?")));
        }
    }

    let tape = Tape {
        cut_width,
        entries,
        meta: Some(TapeMeta { cut_index: split.cut_index, config: Some(config.clone()) }),
    };
    Ok((split, tape))
}

/// Smashed data for every sample, as the client can compute it at any time
/// by running its own bottom model. Gradients are left empty.
pub fn collect_smashed(split: &SplitModel, data: &Dataset) -> Result<Tape> {
    if data.features.cols() != split.bottom.input_width() {
        return Err(Error::Shape(format!(
            "dataset has {} features, bottom model expects {}",
            data.features.cols(),
            split.bottom.input_width()
        )));
    }
    let mut entries = Vec::with_capacity(data.len());
    for (batch_index, chunk) in row_chunks(data.len(), EVAL_CHUNK).enumerate() {
        let trace = split.bottom.forward(&data.features.select_rows(&chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            entries.push(TapeEntry {
                epoch: 0,
                batch_index,
                sample_id: i,
                cut_gradient: Vec::new(),
                smashed: trace.output().row(r).to_vec(),
                true_label: data.labels[i],
                probe: None,
            });
        }
    }
    Ok(Tape {
        cut_width: split.cut_width(),
        entries,
        meta: Some(TapeMeta { cut_index: split.cut_index, config: None }),
    })
}
