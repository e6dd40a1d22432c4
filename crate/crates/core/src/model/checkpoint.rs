//! Network checkpoint container.
//!
//! Little-endian binary layout, version 1:
//!
//! ```text
//! magic        8 bytes   "EVSYNCKP"
//! version      u32       1
//! generation   u32
//! config_len   u64
//! config       config_len bytes, ArchConfig as UTF-8 JSON
//! layers       u32       number of parametric layers
//! per layer, in network order:
//!   n_weights  u64
//!   weights    n_weights × f64
//!   n_bias     u64
//!   bias       n_bias × f64
//!   mask       n_weights × u8 (0 or 1)
//! ```
//!
//! Weight and bias shapes are recovered from the config.

use std::fs;
use std::path::Path;

use super::{ArchConfig, NetworkArch, ParamLayer};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EVSYNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(net: &NetworkArch) -> Vec<u8> {
    let config = serde_json::to_vec(net.config()).expect("ArchConfig serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.generation().to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.weights.len() as u64).to_le_bytes());
        for w in p.weights.data() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&(p.bias.len() as u64).to_le_bytes());
        for b in p.bias.data() {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.extend(p.mask.data().iter().map(|&m| u8::from(m != 0.0)));
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!("truncated while reading {what} at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<NetworkArch, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let generation = r.u32("generation")?;
    let config_len = r.u64("config length")? as usize;
    let config: ArchConfig =
        serde_json::from_slice(r.take(config_len, "config")?).map_err(|e| format!("config: {e}"))?;
    config.validate().map_err(|e| e.to_string())?;
    let names = config.param_layer_names();
    let specs: Vec<_> = config.layers.iter().copied().filter(|l| l.is_parametric()).collect();
    let n_layers = r.u32("layer count")? as usize;
    if n_layers != specs.len() {
        return Err(format!("{n_layers} layers stored, config has {}", specs.len()));
    }
    let mut params = Vec::with_capacity(n_layers);
    for (spec, name) in specs.into_iter().zip(names) {
        let shape = spec.weight_shape().expect("parametric");
        let n_w = r.u64("weight count")? as usize;
        if n_w != shape.iter().product::<usize>() {
            return Err(format!("{name}: {n_w} weights stored, expected shape {shape:?}"));
        }
        let weights = r.f64s(n_w, "weights")?;
        let n_b = r.u64("bias count")? as usize;
        if n_b != shape[0] {
            return Err(format!("{name}: {n_b} biases stored, expected {}", shape[0]));
        }
        let bias = r.f64s(n_b, "bias")?;
        let mask = r.take(n_w, "mask")?;
        if let Some(bad) = mask.iter().find(|&&b| b > 1) {
            return Err(format!("{name}: mask byte {bad} is not 0 or 1"));
        }
        let mask = mask.iter().map(|&b| f64::from(b)).collect();
        params.push(ParamLayer {
            name,
            spec,
            weights: Tensor::new(shape.clone(), weights).map_err(|e| e.to_string())?,
            bias: Tensor::new(vec![shape[0]], bias).map_err(|e| e.to_string())?,
            mask: Tensor::new(shape, mask).map_err(|e| e.to_string())?,
        });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    NetworkArch::from_parts(config, params, generation).map_err(|e| e.to_string())
}

pub fn write_checkpoint(net: &NetworkArch, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkArch> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}
