//! `S2SN` checkpoints, all little-endian:
//!
//! ```text
//! "S2SN"  u32 depth  u32 base_channels  u32 kernel_size
//! u64 step_count  u32 epoch  u32 layer_count
//! per layer: u32 out_ch  u32 in_ch  u32 size
//!            f32 weights[out*in*size*size]  f32 bias[out]
//!            f32 m_weights  f32 m_bias  f32 v_weights  f32 v_bias
//! ```

use std::path::Path;

use super::model::{ConvLayer, NetworkParams, NetworkSpec};
use super::ops::Kernel;
use crate::error::{Error, Result};
use crate::grid::write_file;

const MAGIC: &[u8; 4] = b"S2SN";

/// Network parameters plus the number of completed training epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub epoch: u32,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(32 + 16 * p.spec.parameter_count());
        out.extend_from_slice(MAGIC);
        for v in [p.spec.depth, p.spec.base_channels, p.spec.kernel_size] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.step_count.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(p.layers.len() as u32).to_le_bytes());
        let put = |out: &mut Vec<u8>, vals: &[f64]| {
            for &v in vals {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        };
        for ((l, m), v) in p.layers.iter().zip(&p.adam_m).zip(&p.adam_v) {
            let (o, i, k) = l.shape();
            for d in [o, i, k] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for part in [l, m, v] {
                put(&mut out, &part.kernel.data);
                put(&mut out, &part.bias);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg);
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not an S2SN checkpoint"));
        }
        let u32_ = |r: &mut Reader| r.u32().ok_or_else(|| bad("truncated header"));
        let spec = NetworkSpec {
            depth: u32_(&mut r)?,
            base_channels: u32_(&mut r)?,
            kernel_size: u32_(&mut r)?,
        };
        spec.validate()
            .map_err(|e| bad(&format!("invalid network spec: {e}")))?;
        let step_count = r.u64().ok_or_else(|| bad("truncated header"))?;
        let epoch = u32_(&mut r)?;
        let count = u32_(&mut r)? as usize;
        let shapes = spec.layer_shapes();
        if count != shapes.len() {
            return Err(bad(&format!(
                "{count} layers, but the spec implies {}",
                shapes.len()
            )));
        }
        let (mut layers, mut adam_m, mut adam_v) = (Vec::new(), Vec::new(), Vec::new());
        for &(o, i, k) in &shapes {
            let got = (
                u32_(&mut r)? as usize,
                u32_(&mut r)? as usize,
                u32_(&mut r)? as usize,
            );
            if got != (o, i, k) {
                return Err(bad(&format!(
                    "layer shape {got:?}, expected {:?}",
                    (o, i, k)
                )));
            }
            let mut part = || -> Result<ConvLayer> {
                let w = r
                    .f32s(o * i * k * k)
                    .ok_or_else(|| bad("truncated layer payload"))?;
                let b = r.f32s(o).ok_or_else(|| bad("truncated layer payload"))?;
                Ok(ConvLayer {
                    kernel: Kernel::from_vec(o, i, k, w)?,
                    bias: b,
                })
            };
            layers.push(part()?);
            adam_m.push(part()?);
            adam_v.push(part()?);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after the last layer"));
        }
        let params = NetworkParams {
            spec,
            layers,
            adam_m,
            adam_v,
            step_count,
        };
        params
            .validate()
            .map_err(|e| bad(&format!("invalid parameters: {e}")))?;
        Ok(Self { params, epoch })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f32s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(4)?)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        )
    }
}
