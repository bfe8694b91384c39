//! Datasets: IDX loading, the synthetic blob generator, test/validation
//! splitting and IID sharding.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::ids::ClientId;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

/// Feature rows scaled to `[0, 1]` with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>) -> Self {
        assert_eq!(features.nrows(), labels.len(), "features/labels length mismatch");
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }
}

/// Training set plus the original test set divided into test and validation
/// parts.
#[derive(Clone, Debug)]
pub struct EvalSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub validation: Dataset,
}

impl EvalSplit {
    /// Shuffle `original_test` and keep `round(test_fraction · n)` samples
    /// for test, the rest for validation.
    pub fn new<R: Rng + ?Sized>(train: Dataset, original_test: Dataset, test_fraction: f64, rng: &mut R) -> Self {
        assert!((0.0..=1.0).contains(&test_fraction));
        let n = original_test.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let cut = (test_fraction * n as f64).round() as usize;
        let (test_idx, val_idx) = order.split_at(cut);
        Self {
            test: original_test.subset(test_idx),
            validation: original_test.subset(val_idx),
            train,
        }
    }
}

/// One client's private data.
#[derive(Clone, Debug)]
pub struct DataShard {
    pub owner: ClientId,
    pub data: Dataset,
    /// Row indices into the training set this shard was cut from.
    pub indices: Vec<usize>,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Seeded shuffle followed by a contiguous split into `n` shards whose sizes
/// differ by at most one.
pub fn shard_dataset<R: Rng + ?Sized>(train: &Dataset, n: usize, rng: &mut R) -> Vec<DataShard> {
    assert!(n >= 1 && n <= train.len(), "cannot cut {} samples into {n} shards", train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let base = train.len() / n;
    let extra = train.len() % n;
    let mut start = 0;
    (0..n)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let indices = order[start..start + size].to_vec();
            start += size;
            DataShard {
                owner: ClientId(k as u32),
                data: train.subset(&indices),
                indices,
            }
        })
        .collect()
}

/// Ten-or-more-class Gaussian blobs in `[0, 1]^dim`. Each class has a sparse
/// random prototype; samples add isotropic noise and clip.
pub fn synthetic_blobs<R: Rng + ?Sized>(
    samples: usize,
    dim: usize,
    classes: usize,
    noise: f64,
    rng: &mut R,
    prototypes: Option<&Array2<f64>>,
) -> (Dataset, Array2<f64>) {
    let protos = match prototypes {
        Some(p) => p.clone(),
        None => Array2::from_shape_fn((classes, dim), |_| {
            if rng.random_bool(0.25) {
                rng.random_range(0.5..1.0)
            } else {
                0.0
            }
        }),
    };
    let normal = Normal::new(0.0, noise).expect("non-negative noise");
    let mut features = Array2::zeros((samples, dim));
    let mut labels = Vec::with_capacity(samples);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let y = i % classes;
        for (v, &p) in row.iter_mut().zip(protos.row(y)) {
            *v = (p + normal.sample(rng)).clamp(0.0, 1.0);
        }
        labels.push(y as u8);
    }
    (Dataset::new(features, labels), protos)
}

/// Train and test sets drawn from the same synthetic class prototypes.
pub fn synthetic_pair<R: Rng + ?Sized>(
    train: usize,
    test: usize,
    dim: usize,
    classes: usize,
    noise: f64,
    rng: &mut R,
) -> (Dataset, Dataset) {
    let (train_set, protos) = synthetic_blobs(train, dim, classes, noise, rng, None);
    let (test_set, _) = synthetic_blobs(test, dim, classes, noise, rng, Some(&protos));
    (train_set, test_set)
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn open(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    open(path)?
        .read_to_end(&mut buf)
        .map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Parse an IDX image file (`0x00000803`, count, rows, cols, u8 pixels)
/// into rows of `rows·cols` features scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Array2<f64>, DataError> {
    let bad = |msg: String| DataError::Format {
        path: path.to_owned(),
        msg,
    };
    let magic = be_u32(bytes, 0).ok_or_else(|| bad("truncated header".into()))?;
    if magic != IDX_IMAGES {
        return Err(bad(format!("bad image magic {magic:#010x}")));
    }
    let dims: Vec<usize> = (1..4)
        .map(|k| be_u32(bytes, 4 * k).map(|v| v as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| bad("truncated header".into()))?;
    let (n, width) = (dims[0], dims[1] * dims[2]);
    let body = &bytes[16..];
    if body.len() != n * width {
        return Err(bad(format!("expected {} pixel bytes, found {}", n * width, body.len())));
    }
    Ok(Array2::from_shape_fn((n, width), |(i, j)| body[i * width + j] as f64 / 255.0))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let bad = |msg: String| DataError::Format {
        path: path.to_owned(),
        msg,
    };
    let magic = be_u32(bytes, 0).ok_or_else(|| bad("truncated header".into()))?;
    if magic != IDX_LABELS {
        return Err(bad(format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4).ok_or_else(|| bad("truncated header".into()))? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(bad(format!("expected {n} labels, found {}", body.len())));
    }
    Ok(body.to_vec())
}

/// Load an image/label IDX pair; `.gz` files are decompressed on the fly.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let features = parse_idx_images(&read_all(images)?, images)?;
    let labels_vec = parse_idx_labels(&read_all(labels)?, labels)?;
    if features.nrows() != labels_vec.len() {
        return Err(DataError::Format {
            path: labels.to_owned(),
            msg: format!(
                "{} labels for {} images",
                labels_vec.len(),
                features.nrows()
            ),
        });
    }
    if features.nrows() == 0 {
        return Err(DataError::Format {
            path: images.to_owned(),
            msg: "no samples".into(),
        });
    }
    Ok(Dataset::new(features, labels_vec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::RngStream;
    use std::collections::HashSet;

    fn toy(n: usize) -> Dataset {
        Dataset::new(
            Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64),
            (0..n).map(|i| (i % 10) as u8).collect(),
        )
    }

    #[test]
    fn shards_partition_the_training_set() {
        for (n_samples, n) in [(60_000, 10), (60_000, 100), (1_003, 10)] {
            let train = Dataset::new(Array2::zeros((n_samples, 1)), vec![0; n_samples]);
            let shards = shard_dataset(&train, n, &mut RngStream::new(1, "shard"));
            assert_eq!(shards.len(), n);
            let sizes: Vec<usize> = shards.iter().map(DataShard::len).collect();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            assert!(hi - lo <= 1);
            if n_samples % n == 0 {
                assert_eq!(lo, n_samples / n);
            }
            let mut seen = HashSet::new();
            for s in &shards {
                for &i in &s.indices {
                    assert!(seen.insert(i), "index {i} in two shards");
                }
            }
            assert_eq!(seen.len(), n_samples);
        }
    }

    #[test]
    fn shard_rows_match_indices() {
        let train = toy(25);
        let shards = shard_dataset(&train, 4, &mut RngStream::new(4, "shard"));
        for s in &shards {
            for (row, &i) in s.indices.iter().enumerate() {
                assert_eq!(s.data.features.row(row), train.features.row(i));
                assert_eq!(s.data.labels[row], train.labels[i]);
            }
        }
    }

    #[test]
    fn test_validation_split_is_30_70() {
        let split = EvalSplit::new(toy(10), toy(1000), 0.3, &mut RngStream::new(1, "eval-split"));
        assert_eq!(split.test.len(), 300);
        assert_eq!(split.validation.len(), 700);
        let first = |d: &Dataset| -> HashSet<u64> {
            d.features.rows().into_iter().map(|r| r[0] as u64).collect()
        };
        assert!(first(&split.test).is_disjoint(&first(&split.validation)));
    }

    #[test]
    fn idx_round_trip() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0u8, 255, 51, 102, 1, 2, 3, 4]);
        let lbl = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        let p = Path::new("mem");
        let x = parse_idx_images(&img, p).unwrap();
        assert_eq!(x.dim(), (2, 4));
        assert_eq!(x[[0, 1]], 1.0);
        assert!((x[[0, 2]] - 0.2).abs() < 1e-12);
        assert_eq!(parse_idx_labels(&lbl, p).unwrap(), vec![7, 3]);
        assert!(parse_idx_labels(&img, p).is_err());
        assert!(parse_idx_images(&img[..20], p).is_err());
    }

    #[test]
    fn synthetic_is_seeded_and_in_range() {
        let (a, _) = synthetic_pair(200, 50, 16, 10, 0.3, &mut RngStream::new(1, "synthetic-data"));
        let (b, _) = synthetic_pair(200, 50, 16, 10, 0.3, &mut RngStream::new(1, "synthetic-data"));
        assert_eq!(a, b);
        assert!(a.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.class_counts(10), vec![20; 10]);
    }
}
