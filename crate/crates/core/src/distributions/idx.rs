//! IDX binary files (the MNIST container format): big-endian `u32` magic,
//! big-endian `u32` dimensions, then unsigned bytes.

use std::path::Path;

use crate::distributions::LabeledSample;
use crate::engine::PointSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Malformed("truncated IDX header".into()))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Malformed(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    if size == 0 {
        return Err(Error::Malformed("zero-sized images".into()));
    }
    let body = &bytes[16..];
    if body.len() != count * size {
        return Err(Error::Malformed(format!(
            "expected {} pixel bytes, found {}",
            count * size,
            body.len()
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.chunks(size).map(<[u8]>::to_vec).collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Malformed(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Malformed(format!(
            "expected {count} labels, found {}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Keeps classes `a` (label +1) and `b` (label −1). Each image is flattened,
/// scaled by `1/(255·√d)` and then divided by `max(1, ‖x‖)`.
pub fn class_pair_sample(images: &IdxImages, labels: &[u8], pair: (u8, u8)) -> Result<LabeledSample> {
    let (a, b) = pair;
    if a == b {
        return Err(Error::invalid(format!("class pair ({a}, {b}) is degenerate")));
    }
    if images.pixels.len() != labels.len() {
        return Err(Error::Malformed(format!(
            "{} images but {} labels",
            images.pixels.len(),
            labels.len()
        )));
    }
    let d = images.rows * images.cols;
    let scale = 1.0 / (255.0 * (d as f64).sqrt());
    let mut data = Vec::new();
    let mut ys = Vec::new();
    for (img, &lab) in images.pixels.iter().zip(labels) {
        let y = if lab == a {
            1.0
        } else if lab == b {
            -1.0
        } else {
            continue;
        };
        let x: Vec<f64> = img.iter().map(|&p| p as f64 * scale).collect();
        let n = crate::matrix::norm(&x).max(1.0);
        data.extend(x.into_iter().map(|v| v / n));
        ys.push(y);
    }
    if !ys.contains(&1.0) || !ys.contains(&-1.0) {
        return Err(Error::invalid(format!("class pair ({a}, {b}) absent from the data")));
    }
    let points = Matrix::from_vec(ys.len(), d, data)?;
    Ok(LabeledSample::new(PointSet::new(points), ys, None))
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, pair: (u8, u8)) -> Result<LabeledSample> {
    let images = parse_images(&std::fs::read(images)?)?;
    let labels = parse_labels(&std::fs::read(labels)?)?;
    class_pair_sample(&images, &labels, pair)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_image_fixture() {
        let imgs = parse_images(&fixtures::images(6, 3, 3, |i, p| ((i * 40 + p * 25) % 256) as u8)).unwrap();
        let labels = parse_labels(&fixtures::labels(&[1, 5, 7, 5, 1, 0])).unwrap();
        let s = class_pair_sample(&imgs, &labels, (1, 5)).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.labels(), &[1.0, -1.0, -1.0, 1.0]);
        for x in s.inputs().iter() {
            assert!(crate::matrix::norm(x) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn saturated_image_has_unit_norm() {
        let imgs = parse_images(&fixtures::images(2, 2, 2, |_, _| 255)).unwrap();
        let s = class_pair_sample(&imgs, &[3, 4], (3, 4)).unwrap();
        assert!((crate::matrix::norm(s.inputs().point(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let imgs = parse_images(&fixtures::images(2, 2, 2, |_, _| 1)).unwrap();
        assert!(class_pair_sample(&imgs, &[3, 3], (3, 3)).is_err());
        assert!(class_pair_sample(&imgs, &[3, 3], (3, 4)).is_err());
        let mut bytes = fixtures::images(2, 2, 2, |_, _| 1);
        bytes.pop();
        assert!(matches!(parse_images(&bytes), Err(Error::Malformed(_))));
        assert!(matches!(parse_images(&bytes[..10]), Err(Error::Malformed(_))));
        assert!(matches!(parse_labels(&fixtures::images(1, 1, 1, |_, _| 0)), Err(Error::Malformed(_))));
    }
}
