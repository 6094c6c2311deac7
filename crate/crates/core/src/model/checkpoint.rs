//! `SPFW` weight files: magic, `u32` version, `u32` tensor count, then per
//! tensor a `u32` name length, UTF-8 name, `u32` rank, `u32` dims and `f32`
//! data. All integers and floats are little-endian.

use std::path::Path;

use super::{Detector, ModelConfig, Param, ParamSet};
use crate::error::{Error, Result};

pub const SPFW_MAGIC: [u8; 4] = *b"SPFW";
pub const SPFW_VERSION: u32 = 1;

const INPUT_SHAPE: &str = "input.shape";
const INPUT_MEAN: &str = "input.mean";
const INPUT_STD: &str = "input.std";

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn push_tensor(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    push_u32(buf, name.len());
    buf.extend_from_slice(name.as_bytes());
    push_u32(buf, shape.len());
    for &d in shape {
        push_u32(buf, d);
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a detector.
pub fn write_checkpoint(model: &Detector<f32>) -> Vec<u8> {
    let cfg = model.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(&SPFW_MAGIC);
    buf.extend_from_slice(&SPFW_VERSION.to_le_bytes());
    push_u32(&mut buf, 3 + Param::ALL.len());
    push_tensor(&mut buf, INPUT_SHAPE, &[2], &[cfg.input_rows as f32, cfg.input_cols as f32]);
    push_tensor(&mut buf, INPUT_MEAN, &[cfg.input_rows], &model.input_mean);
    push_tensor(&mut buf, INPUT_STD, &[cfg.input_rows], &model.input_std);
    for (p, shape) in Param::ALL.iter().zip(cfg.param_shapes()) {
        push_tensor(&mut buf, p.name(), &shape, model.params.get(*p));
    }
    buf
}

pub fn save_checkpoint(model: &Detector<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Parses a detector from `SPFW` bytes.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Detector<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SPFW_MAGIC {
        return Err(Error::Parse("not an SPFW checkpoint".into()));
    }
    let version = r.u32()?;
    if version != SPFW_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut tensors = std::collections::HashMap::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Parse("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Parse(format!("tensor {name} is too large")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Parse("tensor too large".into()))?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, (shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after checkpoint".into()));
    }

    let missing = |name: &str| Error::Parse(format!("checkpoint has no tensor {name}"));
    let shape_of = |name: &str| tensors.get(name).map(|(s, _)| s.clone()).ok_or_else(|| missing(name));
    let conv2_shape = shape_of(Param::Conv2Weight.name())?;
    let dense1_shape = shape_of(Param::Dense1Weight.name())?;
    let mut get = |name: &str| tensors.remove(name).ok_or_else(|| missing(name));
    let (_, shape) = get(INPUT_SHAPE)?;
    if shape.len() != 2 || conv2_shape.len() != 4 || dense1_shape.len() != 2 {
        return Err(Error::Parse("unexpected tensor ranks".into()));
    }
    let config = ModelConfig {
        input_rows: shape[0] as usize,
        input_cols: shape[1] as usize,
        conv1_channels: conv2_shape[1],
        conv2_channels: conv2_shape[0],
        hidden: dense1_shape[0],
    };
    config.validate().map_err(|e| Error::Parse(e.to_string()))?;
    let shapes = config.param_shapes();
    let mut params = ParamSet::<f32>::zeros(&config);
    for p in Param::ALL {
        let (s, data) = get(p.name())?;
        if s != shapes[p.index()] {
            return Err(Error::Parse(format!(
                "tensor {} has shape {s:?}, expected {:?}",
                p.name(),
                shapes[p.index()]
            )));
        }
        params.tensors[p.index()] = data;
    }
    let (ms, input_mean) = get(INPUT_MEAN)?;
    let (ss, input_std) = get(INPUT_STD)?;
    if ms != [config.input_rows] || ss != [config.input_rows] {
        return Err(Error::Parse("input statistics do not match the input shape".into()));
    }
    Ok(Detector {
        config,
        input_mean,
        input_std,
        params,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Detector<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

impl Detector<f32> {
    /// Bytes of the frozen-by-stage-2 part: input statistics and both
    /// convolutions.
    pub fn extractor_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let cfg = self.config();
        push_tensor(&mut buf, INPUT_MEAN, &[cfg.input_rows], &self.input_mean);
        push_tensor(&mut buf, INPUT_STD, &[cfg.input_rows], &self.input_std);
        for (p, shape) in Param::ALL.iter().zip(cfg.param_shapes()) {
            if p.in_extractor() {
                push_tensor(&mut buf, p.name(), &shape, self.params.get(*p));
            }
        }
        buf
    }
}
