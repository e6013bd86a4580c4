//! IDX container reader/writer (the MNIST distribution format).
//!
//! Header: big-endian `u32` magic (`0x00000803` images, `0x00000801`
//! labels), then one big-endian `u32` per dimension, then the raw unsigned
//! byte payload. Gzipped files (as distributed) are detected by their magic
//! bytes and decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let result = if gz {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes).and_then(|_| enc.finish().map(|_| ()))
    } else {
        fs::write(path, bytes)
    };
    result.map_err(|e| Error::io(path, e))
}

struct Header {
    dims: Vec<usize>,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path, magic: u32, n_dims: usize) -> Result<Header> {
    let header_len = 4 * (1 + n_dims);
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            path: path.into(),
            expected: header_len,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::TruncatedFile {
            path: path.into(),
            expected: header_len,
            found: bytes.len(),
        });
    }
    Ok(Header {
        dims: (1..=n_dims).map(|i| word(i) as usize).collect(),
        payload_start: header_len,
    })
}

fn payload<'a>(bytes: &'a [u8], path: &Path, header: &Header) -> Result<&'a [u8]> {
    let expected: usize = header.dims.iter().product();
    let available = bytes.len() - header.payload_start;
    if available < expected {
        return Err(Error::TruncatedFile {
            path: path.into(),
            expected,
            found: available,
        });
    }
    Ok(&bytes[header.payload_start..header.payload_start + expected])
}

/// Images as a `(rows·cols)×count` matrix, one image per column, pixels
/// scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let header = parse_header(&bytes, path, IMAGES_MAGIC, 3)?;
    let pixels = payload(&bytes, path, &header)?;
    let (count, rows, cols) = (header.dims[0], header.dims[1], header.dims[2]);
    let n = rows * cols;
    let mut data = vec![0.0; n * count];
    for (img, chunk) in pixels.chunks_exact(n.max(1)).enumerate().take(count) {
        for (p, &b) in chunk.iter().enumerate() {
            data[p * count + img] = b as f64 / 255.0;
        }
    }
    Matrix::new(n, count, data)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let header = parse_header(&bytes, path, LABELS_MAGIC, 1)?;
    Ok(payload(&bytes, path, &header)?.to_vec())
}

/// Writes images stored one per column with entries in `[0, 1]`; each entry
/// is stored as `round(255·v)`. Gzips when the path ends in `.gz`.
pub fn write_idx_images(
    path: impl AsRef<Path>,
    images: &Matrix,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let path = path.as_ref();
    if images.rows() != rows * cols {
        return Err(Error::shape(
            "write_idx_images",
            images.shape(),
            (rows, cols),
        ));
    }
    if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!(
            "pixel value {v} outside [0, 1]"
        )));
    }
    let count = images.cols();
    let mut bytes = Vec::with_capacity(16 + images.rows() * count);
    for word in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        bytes.extend_from_slice(&word.to_be_bytes());
    }
    for img in 0..count {
        for p in 0..images.rows() {
            bytes.push((images[(p, img)] * 255.0).round() as u8);
        }
    }
    write_bytes(path, &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_bytes(path.as_ref(), &bytes)
}
