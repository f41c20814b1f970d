//! IDX binary arrays: two zero bytes, a type byte, a dimension count, then
//! one big-endian `u32` per dimension followed by the raw values.

use std::io::{self, Write};
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const UNSIGNED_BYTE: u8 = 0x08;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn truncated(what: &str) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::UnexpectedEof,
        format!("truncated IDX file: {what}"),
    ))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(truncated("missing header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!(
            "bad IDX magic {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != UNSIGNED_BYTE {
        return Err(Error::Format(format!(
            "unsupported IDX element type 0x{:02x}; only unsigned bytes are read",
            bytes[2]
        )));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::Format("IDX file declares no dimensions".into()));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(truncated("dimension sizes"));
    }
    let mut dims = Vec::with_capacity(ndims);
    let mut len = 1usize;
    for chunk in bytes[4..header].chunks_exact(4) {
        let d = u32::from_be_bytes(chunk.try_into().expect("chunks of four")) as usize;
        if d == 0 {
            return Err(Error::Format("IDX dimension of size 0".into()));
        }
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
        dims.push(d);
    }
    let body = &bytes[header..];
    if body.len() < len {
        return Err(truncated("values"));
    }
    if body.len() > len {
        return Err(Error::Format(format!(
            "{} bytes after the declared {len} values",
            body.len() - len
        )));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

fn read(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path)?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads an image file of shape `(N, H, W)` or `(N, C, H, W)` and a label
/// file of shape `(N)`. Pixels are scaled by `1/255`. The class count is the
/// largest label plus one unless given.
pub fn load_idx(images: &Path, labels: &Path, num_classes: Option<usize>, split: Split) -> Result<Dataset> {
    let img = read(images)?;
    let lab = read(labels)?;
    let shape = match img.dims[..] {
        [n, h, w] => vec![n, 1, h, w],
        [n, c, h, w] => vec![n, c, h, w],
        _ => {
            return Err(Error::Format(format!(
                "image file must have 3 or 4 dimensions, got {:?}",
                img.dims
            )))
        }
    };
    if lab.dims.len() != 1 {
        return Err(Error::Format(format!(
            "label file must have 1 dimension, got {:?}",
            lab.dims
        )));
    }
    if lab.dims[0] != shape[0] {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            shape[0], lab.dims[0]
        )));
    }
    let labels: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let data = img.data.iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(DenseTensor::new(shape, data)?, labels, classes, split)
}

fn header(out: &mut impl Write, dims: &[usize]) -> Result<()> {
    out.write_all(&[0, 0, UNSIGNED_BYTE, dims.len() as u8])?;
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_be_bytes())?;
    }
    Ok(())
}

/// Writes images as a 4-dimensional unsigned-byte array, rounding
/// `255 * value` after clamping to `[0, 1]`.
pub fn write_idx_images(path: &Path, images: &DenseTensor) -> Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    header(&mut out, images.shape())?;
    let bytes: Vec<u8> = images
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    header(&mut out, &[labels.len()])?;
    let bytes = labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit a byte"))))
        .collect::<Result<Vec<u8>>>()?;
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(dims: &[u32], body: &[u8]) -> Vec<u8> {
        let mut v = vec![0, 0, 8, dims.len() as u8];
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn hand_built_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, idx(&[2, 2, 2], &[0, 255, 51, 102, 255, 0, 0, 255])).unwrap();
        std::fs::write(&lp, idx(&[2], &[1, 0])).unwrap();
        let ds = load_idx(&ip, &lp, None, Split::Train).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 2, 2]);
        assert_eq!(&ds.images().data()[..4], &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, idx(&[2, 1, 1], &[0, 1])).unwrap();
        std::fs::write(&lp, idx(&[3], &[0, 1, 0])).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp, None, Split::Train),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(parse_idx(&[]), Err(Error::Io(_))));
        assert!(matches!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 1, 7]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 9, 1, 0, 0, 0, 1, 7]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&idx(&[4], &[1, 2])), Err(Error::Io(_))));
        assert!(matches!(parse_idx(&idx(&[1], &[1, 2])), Err(Error::Format(_))));
        let huge = idx(&[u32::MAX, u32::MAX, u32::MAX], &[]);
        assert!(matches!(parse_idx(&huge), Err(Error::Format(_))));
    }

    #[test]
    fn write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let images = DenseTensor::from_fn(&[2, 3, 2, 2], |i| (i[0] + i[1] + i[3]) as f64 / 255.0).unwrap();
        write_idx_images(&dir.path().join("i"), &images).unwrap();
        write_idx_labels(&dir.path().join("l"), &[4, 1]).unwrap();
        let ds = load_idx(&dir.path().join("i"), &dir.path().join("l"), Some(5), Split::Test).unwrap();
        assert_eq!(ds.images(), &images);
        assert_eq!(ds.num_classes(), 5);
    }
}
