//! Datasets: MNIST-family IDX files, seeded Gaussian blobs, and CSV output.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x d`; image data is scaled into `[0, 1]`.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize, provenance: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { features, labels, classes, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            provenance: format!("{} (subset of {})", self.provenance, indices.len()),
        }
    }

    /// Splits off every `every`-th sample (indices `every-1, 2*every-1, ...`)
    /// as a holdout set. Returns `(rest, holdout)`.
    pub fn split_holdout(&self, every: usize) -> Result<(Dataset, Dataset)> {
        if every < 2 {
            return Err(Error::InvalidArgument(format!("holdout stride must be at least 2, got {every}")));
        }
        let (held, rest): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|i| i % every == every - 1);
        Ok((self.subset(&rest), self.subset(&held)))
    }

    /// Count of each class label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn read_u32(buf: &[u8], at: usize, what: &'static str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(what, "truncated header"))
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn parse(buf: &[u8]) -> Result<Self> {
        let magic = read_u32(buf, 0, "IDX images")?;
        if magic != IDX_IMAGES_MAGIC {
            return Err(Error::format("IDX images", format!("magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
        }
        let count = read_u32(buf, 4, "IDX images")? as usize;
        let rows = read_u32(buf, 8, "IDX images")? as usize;
        let cols = read_u32(buf, 12, "IDX images")? as usize;
        let need = count * rows * cols;
        let payload = &buf[16..];
        if payload.len() != need {
            return Err(Error::format(
                "IDX images",
                format!("payload is {} bytes, header declares {count}x{rows}x{cols} = {need}", payload.len()),
            ));
        }
        Ok(Self { count, rows, cols, pixels: payload.to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IDX_IMAGES_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn parse_idx_labels(buf: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(buf, 0, "IDX labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format("IDX labels", format!("magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let count = read_u32(buf, 4, "IDX labels")? as usize;
    let payload = &buf[8..];
    if payload.len() != count {
        return Err(Error::format(
            "IDX labels",
            format!("payload is {} bytes, header declares {count}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

pub fn idx_labels_to_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an IDX image/label pair, keeping the first `limit` records when given.
/// Pixels are scaled by `1/255`; the class count is 10.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images = IdxImages::parse(&images)?;
    let labels = parse_idx_labels(&labels)?;
    if images.count != labels.len() {
        return Err(Error::format(
            "IDX pair",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let n = limit.map_or(labels.len(), |l| l.min(labels.len()));
    let d = images.rows * images.cols;
    let features: Vec<f64> = images.pixels[..n * d].iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels[..n].iter().map(|&l| usize::from(l)).collect();
    let provenance = format!("idx:{}[..{n}]", images_path.display());
    Dataset::new(Matrix::from_vec(n, d, features)?, labels, 10, provenance)
}

/// Loads `<dir>/<prefix>-images-idx3-ubyte` and `<dir>/<prefix>-labels-idx1-ubyte`.
pub fn load_idx_dir(dir: &Path, prefix: &str, limit: Option<usize>) -> Result<Dataset> {
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        limit,
    )
}

/// Gaussian blobs around class centroids drawn uniformly from
/// `[-centroid_scale, centroid_scale]^dim`. Samples are grouped by class in
/// label order; class `k` gets `per_class_counts[k]` samples.
pub fn gen_blobs(
    classes: usize,
    dim: usize,
    per_class_counts: &[usize],
    centroid_scale: f64,
    within_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("blob dimension must be positive".into()));
    }
    if per_class_counts.len() != classes || per_class_counts.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "need {classes} positive class counts, got {per_class_counts:?}"
        )));
    }
    if !(centroid_scale > 0.0 && centroid_scale.is_finite()) || !(within_std >= 0.0 && within_std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "centroid scale {centroid_scale} must be positive and std {within_std} non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-centroid_scale..=centroid_scale)).collect())
        .collect();
    let n: usize = per_class_counts.iter().sum();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (k, &count) in per_class_counts.iter().enumerate() {
        for _ in 0..count {
            for c in &centroids[k] {
                let z: f64 = rng.sample(StandardNormal);
                data.push(c + within_std * z);
            }
            labels.push(k);
        }
    }
    let provenance = format!("blobs(k={classes}, d={dim}, counts={per_class_counts:?}, seed={seed})");
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, classes, provenance)
}

/// Writes an RFC 4180 CSV with a header row. Empty `rows` give a header-only file.
pub fn write_results_csv<W: Write, S: AsRef<str>>(w: W, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Shape(format!("row {i} has {} fields for {} columns", row.len(), header.len())));
        }
        out.write_record(row.iter().map(AsRef::as_ref))?;
    }
    out.flush().map_err(|e| Error::format("csv", e.to_string()))
}

pub fn write_results_csv_file<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut buf = Vec::new();
    write_results_csv(&mut buf, header, rows)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
