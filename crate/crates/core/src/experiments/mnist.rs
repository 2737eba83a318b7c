//! MNIST IDX ingestion and the reduced-width maxout-in-maxout run.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::network::{build_mim_with, InitScheme, MimOptions, MimVariant, NetworkSpec};
use crate::numerics::{derive_seed, SeededRng, Tensor};
use crate::training::{train_observed, Dataset, EpochRecord, LabeledSet, RunReport, TrainConfig, STREAM_INIT};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(bytes.len(), format!("truncated header, expected 4 bytes at {at}")))
}

/// Reads a file, transparently gunzipping it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decoded IDX image file: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Parses at most `limit` images of a big-endian IDX image file.
pub fn parse_idx_images(bytes: &[u8], limit: Option<usize>) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(0, format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let declared = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let count = limit.map_or(declared, |l| l.min(declared));
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated image data: {count} images of {rows}x{cols} need {need} bytes"),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..need].to_vec(),
    })
}

/// Parses at most `limit` labels of a big-endian IDX label file.
pub fn parse_idx_labels(bytes: &[u8], limit: Option<usize>) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(0, format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let declared = be_u32(bytes, 4)? as usize;
    let count = limit.map_or(declared, |l| l.min(declared));
    if bytes.len() < 8 + count {
        return Err(format_err(bytes.len(), format!("truncated label data: {count} labels need {} bytes", 8 + count)));
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Images scaled to `[0, 1]` (before centring) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSet {
    /// `[n, 1, rows, cols]`, centred by `mean`.
    pub set: LabeledSet,
    /// Mean pixel value that was subtracted.
    pub mean: f64,
}

fn assemble(images: IdxImages, labels: Vec<u8>, mean: Option<f64>) -> Result<MnistSet> {
    if labels.len() != images.count {
        return Err(format_err(4, format!("{} images but {} labels", images.count, labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(format_err(8, format!("label {bad} outside 0..=9")));
    }
    let scaled: Vec<f64> = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let mean = mean.unwrap_or_else(|| scaled.iter().sum::<f64>() / scaled.len().max(1) as f64);
    let x = Tensor::from_vec(
        &[images.count, 1, images.rows, images.cols],
        scaled.into_iter().map(|v| v - mean).collect(),
    )?;
    Ok(MnistSet {
        set: LabeledSet::new(x, labels.into_iter().map(usize::from).collect())?,
        mean,
    })
}

/// Loads the first `limit` examples (all when `None`), scales pixels to
/// `[0, 1]` and subtracts their global mean. Gzipped files are accepted.
pub fn load_mnist_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<MnistSet> {
    load_mnist_idx_centred(images, labels, limit, None)
}

/// Like [`load_mnist_idx`] but subtracts the given mean (e.g. a training-set mean).
pub fn load_mnist_idx_centred(
    images: &Path,
    labels: &Path,
    limit: Option<usize>,
    mean: Option<f64>,
) -> Result<MnistSet> {
    let imgs = parse_idx_images(&read_maybe_gz(images)?, limit)?;
    let labs = parse_idx_labels(&read_maybe_gz(labels)?, limit)?;
    assemble(imgs, labs, mean)
}

/// File locations of the four IDX files.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    /// Standard file names inside `dir`, preferring gzipped copies when present.
    pub fn in_dir(dir: &Path) -> Self {
        let pick = |name: &str| {
            let gz = dir.join(format!("{name}.gz"));
            if gz.exists() {
                gz
            } else {
                dir.join(name)
            }
        };
        MnistPaths {
            train_images: pick("train-images-idx3-ubyte"),
            train_labels: pick("train-labels-idx1-ubyte"),
            test_images: pick("t10k-images-idx3-ubyte"),
            test_labels: pick("t10k-labels-idx1-ubyte"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistMiniConfig {
    pub paths: MnistPaths,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub width_scale: f64,
    pub k: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    pub init: InitScheme,
}

impl MnistMiniConfig {
    /// Quarter width, a 10000-example training subset, 10 epochs.
    pub fn new(paths: MnistPaths) -> Self {
        MnistMiniConfig {
            paths,
            train_limit: Some(10_000),
            test_limit: None,
            width_scale: 0.25,
            k: 2,
            dropout: 0.5,
            train: TrainConfig {
                batch_size: 100,
                schedule: vec![(0.1, 6), (0.02, 2), (0.004, 2)],
                momentum: 0.9,
                weight_decay: 0.0005,
                seed: 0,
                dropout: None,
                eval_train_each_epoch: false,
            },
            init: InitScheme::mim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnistMiniReport {
    pub report: RunReport,
    pub network: NetworkSpec,
    pub train_examples: usize,
    pub test_examples: usize,
}

/// Loads the data and trains a reduced maxout-in-maxout network on it.
pub fn mnist_mini(cfg: &MnistMiniConfig) -> Result<MnistMiniReport> {
    mnist_mini_observed(cfg, &mut |_| {})
}

/// [`mnist_mini`] reporting each epoch to `observer`.
pub fn mnist_mini_observed(
    cfg: &MnistMiniConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<MnistMiniReport> {
    let p = &cfg.paths;
    let train = load_mnist_idx(&p.train_images, &p.train_labels, cfg.train_limit)?;
    let test = load_mnist_idx_centred(&p.test_images, &p.test_labels, cfg.test_limit, Some(train.mean))?;
    let data = Dataset {
        train: train.set,
        test: test.set,
        classes: 10,
    };
    let opts = MimOptions {
        width_scale: cfg.width_scale,
        dropout: cfg.dropout,
        k: cfg.k,
        classes: None,
    };
    let mut net = build_mim_with(MimVariant::Mnist, &opts)?;
    if data.train.x.shape()[1..] != *net.input_dims() {
        return Err(Error::dim(format!(
            "images {:?} do not fit network input {:?}",
            &data.train.x.shape()[1..],
            net.input_dims()
        )));
    }
    net.init_params(&mut SeededRng::new(derive_seed(cfg.train.seed, STREAM_INIT)), &cfg.init)?;
    let report = train_observed(&mut net, &data, &cfg.train, observer)?;
    Ok(MnistMiniReport {
        report,
        network: net,
        train_examples: data.train.len(),
        test_examples: data.test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: usize, rows: usize, cols: usize, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for v in [n, rows, cols] {
            b.extend_from_slice(&(v as u32).to_be_bytes());
        }
        b.extend((0..n * rows * cols).map(fill));
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn header_declares_shape() {
        let imgs = parse_idx_images(&idx_images(3, 28, 28, |i| (i % 256) as u8), None).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (3, 28, 28));
        let set = assemble(imgs, vec![1, 2, 3], None).unwrap();
        assert_eq!(set.set.x.shape(), &[3, 1, 28, 28]);
    }

    #[test]
    fn limit_takes_leading_examples() {
        let bytes = idx_images(5, 2, 2, |i| i as u8);
        let imgs = parse_idx_images(&bytes, Some(2)).unwrap();
        assert_eq!(imgs.pixels, (0..8).collect::<Vec<u8>>());
        assert_eq!(parse_idx_labels(&idx_labels(&[4, 5, 6]), Some(2)).unwrap(), vec![4, 5]);
    }

    #[test]
    fn white_pixel_scales_to_one() {
        let imgs = parse_idx_images(&idx_images(1, 1, 2, |i| if i == 0 { 255 } else { 0 }), None).unwrap();
        let s = assemble(imgs, vec![0], Some(0.0)).unwrap();
        assert_eq!(s.set.x.data(), &[1.0, 0.0]);
        let imgs = parse_idx_images(&idx_images(1, 1, 2, |i| if i == 0 { 255 } else { 0 }), None).unwrap();
        let s = assemble(imgs, vec![0], None).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.set.x.data(), &[0.5, -0.5]);
    }

    #[test]
    fn bad_magic_and_truncation_report_offsets() {
        let mut bytes = idx_images(2, 2, 2, |_| 0);
        bytes[3] = 0x01;
        match parse_idx_images(&bytes, None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        let mut bytes = idx_images(2, 2, 2, |_| 0);
        bytes.truncate(20);
        match parse_idx_images(&bytes, None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        match parse_idx_labels(&idx_labels(&[1, 2])[..9], None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_idx_labels(&[0, 0], None), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_is_a_format_error() {
        let imgs = parse_idx_images(&idx_images(2, 1, 1, |_| 0), None).unwrap();
        assert!(matches!(assemble(imgs, vec![1], None), Err(Error::Format { .. })));
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let raw = idx_images(2, 2, 2, |i| i as u8);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        let gz = dir.path().join("img.gz");
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(read_maybe_gz(&gz).unwrap(), raw);
        let plain = dir.path().join("img");
        std::fs::write(&plain, &raw).unwrap();
        assert_eq!(read_maybe_gz(&plain).unwrap(), raw);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let r = load_mnist_idx(Path::new("/nonexistent/a"), Path::new("/nonexistent/b"), None);
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
