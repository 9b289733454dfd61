//! Binary checkpoint layout (all integers little-endian u32):
//!
//! ```text
//! magic   b"RVMSCKPT"
//! version 1
//! json_len, json bytes         training configuration, UTF-8
//! n_layers
//! per layer: out_c, in_c, kh, kw, weights (f32 LE), biases (f32 LE)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::conv::Conv3x3;
use super::net::SegNet;

pub const MAGIC: &[u8; 8] = b"RVMSCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: SegNet<f32>,
    pub config_json: String,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.net, &self.config_json)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let json_len = r.u32()? as usize;
        let config_json = String::from_utf8(r.take(json_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (out_c, in_c, kh, kw) = (r.u32()? as usize, r.u32()? as usize, r.u32()?, r.u32()?);
            if (kh, kw) != (3, 3) {
                return Err(Error::Checkpoint(format!("unsupported kernel {kh}x{kw}")));
            }
            let weight = r.f32s(out_c * in_c * 9)?;
            let bias = r.f32s(out_c)?;
            layers.push(Conv3x3 {
                in_c,
                out_c,
                weight,
                bias,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let net = SegNet::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self { net, config_json })
    }
}

/// Serializes any network; parameters are narrowed to f32.
pub fn encode<T: Scalar>(net: &SegNet<T>, config_json: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + config_json.len() + 4 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for l in &net.layers {
        for v in [l.out_c as u32, l.in_c as u32, 3, 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &w in l.weight.iter().chain(&l.bias) {
            out.extend_from_slice(&(w.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint<T: Scalar>(net: &SegNet<T>, config_json: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(net, config_json)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
