//! Binary model checkpoints.
//!
//! Layout, all little-endian: 8-byte magic `FBLCKPT\0`, `u32` format
//! version, `u32` layer count, then per layer `u32 in_dim`, `u32 out_dim`,
//! `u8` activation tag and two `f64` activation parameters. After the
//! headers come, per layer, the weights, the per-weight rates and the
//! previous error signs as row-major `f64` payloads of `(in_dim+1)·out_dim`
//! entries each.

use std::fs;
use std::path::Path;

use crate::deep::{DeepModel, Layer};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"FBLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn activation_tag(act: &Activation) -> (u8, f64, f64) {
    match *act {
        Activation::Identity => (0, 0.0, 0.0),
        Activation::Tanh => (1, 0.0, 0.0),
        Activation::Softmax => (2, 0.0, 0.0),
        Activation::LeakyRelu { slope } => (3, slope, 0.0),
        Activation::Staircase {
            step_width,
            step_height,
        } => (4, step_width, step_height),
    }
}

fn activation_from_tag(tag: u8, p1: f64, p2: f64) -> Result<Activation> {
    let act = match tag {
        0 => Activation::Identity,
        1 => Activation::Tanh,
        2 => Activation::Softmax,
        3 => Activation::LeakyRelu { slope: p1 },
        4 => Activation::Staircase {
            step_width: p1,
            step_height: p2,
        },
        other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
    };
    act.validate()
        .map_err(|e| Error::Checkpoint(format!("activation parameters: {e}")))?;
    Ok(act)
}

pub fn to_bytes(model: &DeepModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.parameter_count() * 24 + model.layers().len() * 25);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for spec in model.specs() {
        out.extend_from_slice(&(spec.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(spec.out_dim as u32).to_le_bytes());
        let (tag, p1, p2) = activation_tag(&spec.activation);
        out.push(tag);
        out.extend_from_slice(&p1.to_le_bytes());
        out.extend_from_slice(&p2.to_le_bytes());
    }
    let payloads = model
        .layers()
        .iter()
        .zip(model.rates())
        .zip(model.prev_error_signs());
    for ((layer, rates), signs) in payloads {
        for m in [&layer.weights, rates, signs] {
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let data = (0..rows * cols)
            .map(|_| self.f64())
            .collect::<Result<Vec<_>>>()?;
        Matrix::new(rows, cols, data).map_err(|e| Error::Checkpoint(format!("payload: {e}")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<DeepModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Checkpoint("no layers".into()));
    }
    let mut headers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag = r.u8()?;
        let (p1, p2) = (r.f64()?, r.f64()?);
        headers.push((in_dim, out_dim, activation_from_tag(tag, p1, p2)?));
    }
    let mut layers = Vec::with_capacity(count);
    let mut rates = Vec::with_capacity(count);
    let mut signs = Vec::with_capacity(count);
    for (in_dim, out_dim, activation) in headers {
        layers.push(Layer {
            weights: r.matrix(in_dim + 1, out_dim)?,
            activation,
        });
        rates.push(r.matrix(in_dim + 1, out_dim)?);
        signs.push(r.matrix(in_dim + 1, out_dim)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    DeepModel::from_parts(layers, rates, signs).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(model: &DeepModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DeepModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
