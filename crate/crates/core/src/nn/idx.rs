//! Big-endian IDX image/label parsing with deterministic subset draws.

use super::Dataset;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:#010x} at byte offset 0 (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated file: needed {needed} bytes at byte offset {offset}, have {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("label {label} out of range 0..{classes} at byte offset {offset}")]
    LabelOutOfRange { label: u8, offset: usize, classes: usize },
    #[error("images hold {images} records but labels hold {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("subset of {requested} requested but only {available} records exist")]
    SubsetTooLarge { requested: usize, available: usize },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        if self.offset + n > self.bytes.len() {
            return Err(IdxError::Truncated {
                offset: self.offset,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Pixels normalized to `[0, 1]`, one row per image.
fn parse_images(bytes: &[u8]) -> Result<DMatrix<f64>, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic { found: magic, expected: IMAGE_MAGIC });
    }
    let count = cur.read_u32()? as usize;
    let rows = cur.read_u32()? as usize;
    let cols = cur.read_u32()? as usize;
    let pixels = cur.take(count * rows * cols)?;
    let dim = rows * cols;
    Ok(DMatrix::from_fn(count, dim, |i, j| pixels[i * dim + j] as f64 / 255.0))
}

/// One-hot rows over the ten digit classes.
fn parse_labels(bytes: &[u8]) -> Result<DMatrix<f64>, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic { found: magic, expected: LABEL_MAGIC });
    }
    let count = cur.read_u32()? as usize;
    let base = cur.offset;
    let raw = cur.take(count)?;
    let mut targets = DMatrix::zeros(count, CLASSES);
    for (i, &label) in raw.iter().enumerate() {
        if label as usize >= CLASSES {
            return Err(IdxError::LabelOutOfRange {
                label,
                offset: base + i,
                classes: CLASSES,
            });
        }
        targets[(i, label as usize)] = 1.0;
    }
    Ok(targets)
}

/// Parse an IDX image/label pair and draw a deterministic subset.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    subset_size: usize,
    seed: u64,
) -> Result<Dataset, IdxError> {
    let images = parse_images(&std::fs::read(images_path)?)?;
    let labels = parse_labels(&std::fs::read(labels_path)?)?;
    if images.nrows() != labels.nrows() {
        return Err(IdxError::CountMismatch { images: images.nrows(), labels: labels.nrows() });
    }
    let available = images.nrows();
    if subset_size > available {
        return Err(IdxError::SubsetTooLarge { requested: subset_size, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, available, subset_size).into_vec();
    picked.sort_unstable();
    let inputs = DMatrix::from_fn(subset_size, images.ncols(), |i, j| images[(picked[i], j)]);
    let targets = DMatrix::from_fn(subset_size, CLASSES, |i, j| labels[(picked[i], j)]);
    Ok(Dataset { inputs, targets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// 4 images of 2x2 pixels with values 0, 51, 102, ... and labels
    /// 1, 0, 7, 9.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        images.extend_from_slice(&4u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        for i in 0..16u8 {
            images.push(i.wrapping_mul(51));
        }
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        labels.extend_from_slice(&4u32.to_be_bytes());
        labels.extend_from_slice(&[1, 0, 7, 9]);
        (images, labels)
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(bytes).unwrap();
        path
    }

    #[test]
    fn parses_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture();
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        let data = load_idx(&ip, &lp, 4, 0).unwrap();
        assert_eq!(data.inputs.nrows(), 4);
        assert_eq!(data.inputs.ncols(), 4);
        // First image pixels 0, 51, 102, 153 normalized by 255.
        assert_eq!(data.inputs[(0, 0)], 0.0);
        assert!((data.inputs[(0, 1)] - 0.2).abs() < 1e-12);
        assert!((data.inputs[(0, 3)] - 0.6).abs() < 1e-12);
        // One-hot rows: label of image 0 is 1, of image 3 is 9.
        assert_eq!(data.targets[(0, 1)], 1.0);
        assert_eq!(data.targets[(3, 9)], 1.0);
        for i in 0..4 {
            assert_eq!(data.targets.row(i).sum(), 1.0);
        }
    }

    #[test]
    fn subset_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture();
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        let a = load_idx(&ip, &lp, 2, 42).unwrap();
        let b = load_idx(&ip, &lp, 2, 42).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let (mut images, labels) = fixture();
        images[3] = 0x05;
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        let err = load_idx(&ip, &lp, 2, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("offset 0"), "{msg}");
    }

    #[test]
    fn truncation_and_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let (images, mut labels) = fixture();
        let ip = write_tmp(&dir, "img", &images[..images.len() - 3]);
        let lp = write_tmp(&dir, "lbl", &labels);
        assert!(matches!(load_idx(&ip, &lp, 2, 0), Err(IdxError::Truncated { .. })));
        let ip = write_tmp(&dir, "img2", &images);
        labels[8 + 2] = 12;
        let lp = write_tmp(&dir, "lbl2", &labels);
        let err = load_idx(&ip, &lp, 2, 0).unwrap_err();
        assert!(matches!(err, IdxError::LabelOutOfRange { label: 12, offset: 10, .. }), "{err}");
        let (images, labels) = fixture();
        let ip = write_tmp(&dir, "img3", &images);
        let lp = write_tmp(&dir, "lbl3", &labels);
        assert!(matches!(
            load_idx(&ip, &lp, 5, 0),
            Err(IdxError::SubsetTooLarge { requested: 5, available: 4 })
        ));
    }
}
