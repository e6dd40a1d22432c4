//! MNIST ingestion from uncompressed IDX files, and seeded mini-batching.
//!
//! IDX is big-endian: a 4-byte magic (`0x00000803` for rank-3 `u8` images,
//! `0x00000801` for rank-1 `u8` labels), one `u32` per dimension, then the
//! raw bytes. Gzipped downloads must be decompressed first.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Images `[N, 1, rows, cols]` scaled into `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    split: Split,
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Idx {
            path: path.to_path_buf(),
            offset: offset as u64,
            msg: format!("truncated header: file has {} bytes", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}"),
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, path: &Path) -> Result<()> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            msg: format!("truncated payload: expected {expected} bytes in total"),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: expected as u64,
            msg: format!("{} unexpected trailing bytes", bytes.len() - expected),
        });
    }
    Ok(())
}

/// Parses an IDX image file already in memory. `path` is used for diagnostics.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 4,
            msg: format!("empty dimensions {count}x{rows}x{cols}"),
        });
    }
    check_payload(bytes, 16, count * rows * cols, path)?;
    let data = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![count, 1, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    check_payload(bytes, 8, count, path)?;
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_idx_images(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(&bytes, path)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_labels(&bytes, path)
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, split: Split) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(Error::Dataset(format!("images must be [N,C,H,W], got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        Ok(Dataset { images, labels, split })
    }

    pub fn load(images: &Path, labels: &Path, split: Split) -> Result<Self> {
        let imgs = load_idx_images(images)?;
        let lbls = load_idx_labels(labels)?;
        if imgs.shape()[0] != lbls.len() {
            return Err(Error::Dataset(format!(
                "{} holds {} images but {} holds {} labels",
                images.display(),
                imgs.shape()[0],
                labels.display(),
                lbls.len()
            )));
        }
        Dataset::new(imgs, lbls, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-sample image shape `[C, H, W]`.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        self.gather(&(0..n).collect::<Vec<_>>())
    }

    /// Copies the samples at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Dataset {
        let [c, h, w] = self.sample_shape();
        let per = c * h * w;
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        Dataset {
            images: Tensor::new(vec![indices.len(), c, h, w], data).expect("gathered shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }
}

/// One mini-batch; `indices` are positions in the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Iterator over a seeded permutation of a dataset in chunks of `batch_size`;
/// the final partial batch is included.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let sub = self.dataset.gather(&indices);
        Some(Batch {
            images: sub.images,
            labels: sub.labels,
            indices,
        })
    }
}

pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument {
            op: "batches",
            msg: "batch_size must be at least 1".into(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Batches {
        dataset,
        order,
        batch_size,
        cursor: 0,
    })
}
