//! Big-endian IDX containers: `0x00000803` images (count×rows×cols u8) and
//! `0x00000801` labels (count u8).

use std::path::Path;

use super::{DatasetError, LabeledDigitSet, Source};
use crate::imaging::GrayImage;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DatasetError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DatasetError::TruncatedFile {
            needed: at + 4,
            have: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DatasetError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(DatasetError::BadMagic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>, DatasetError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let px = rows * cols;
    let needed = 16 + n * px;
    if bytes.len() < needed {
        return Err(DatasetError::TruncatedFile {
            needed,
            have: bytes.len(),
        });
    }
    Ok(bytes[16..needed]
        .chunks_exact(px.max(1))
        .take(n)
        .map(|c| GrayImage::from_u8(cols, rows, c).expect("sized chunk"))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(DatasetError::TruncatedFile {
            needed,
            have: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!((img.height(), img.width()), (rows, cols), "uniform image size");
        out.extend(img.to_u8());
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads an IDX image/label file pair. Values are raw intensities scaled to
/// `[0, 1]`, so standard digit sets come out ink-high.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDigitSet, DatasetError> {
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    LabeledDigitSet::new(images, labels, 10, Source::Mnist)
}

/// EMNIST stores each image transposed relative to MNIST.
pub fn read_idx_emnist(images_path: &Path, labels_path: &Path) -> Result<LabeledDigitSet, DatasetError> {
    let mut set = read_idx(images_path, labels_path)?;
    for img in &mut set.images {
        let (w, h) = (img.width(), img.height());
        let mut t = GrayImage::filled(h, w, 0.0);
        for y in 0..h {
            for x in 0..w {
                t.set(y, x, img.get(x, y));
            }
        }
        *img = t;
    }
    set.source = Source::EmnistDigits;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_two_images() {
        let a = GrayImage::from_u8(3, 2, &[0, 255, 10, 20, 30, 40]).unwrap();
        let b = GrayImage::from_u8(3, 2, &[1, 2, 3, 4, 5, 6]).unwrap();
        let bytes = encode_idx_images(&[a.clone(), b.clone()]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_images(&bytes).unwrap(), vec![a, b]);
        assert_eq!(parse_idx_labels(&encode_idx_labels(&[3, 7])).unwrap(), vec![3, 7]);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let images = encode_idx_images(&[GrayImage::filled(2, 2, 0.5)]);
        assert!(matches!(
            parse_idx_labels(&images),
            Err(DatasetError::BadMagic { expected: 0x801, found: 0x803 })
        ));
        assert!(matches!(
            parse_idx_images(&images[..images.len() - 1]),
            Err(DatasetError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, encode_idx_images(&[GrayImage::filled(2, 2, 0.5)])).unwrap();
        std::fs::write(&lp, encode_idx_labels(&[1, 2])).unwrap();
        assert!(matches!(read_idx(&ip, &lp), Err(DatasetError::CountMismatch { images: 1, labels: 2 })));
    }

    #[test]
    fn emnist_is_transposed() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let img = GrayImage::from_u8(2, 2, &[0, 255, 0, 0]).unwrap();
        std::fs::write(&ip, encode_idx_images(&[img])).unwrap();
        std::fs::write(&lp, encode_idx_labels(&[4])).unwrap();
        let set = read_idx_emnist(&ip, &lp).unwrap();
        assert_eq!(set.images[0].get(0, 1), 1.0);
        assert_eq!(set.source, Source::EmnistDigits);
    }
}
