//! Checkpoint container: versioned header with the architecture config,
//! global step and optimizer hyperparameters, followed by length-prefixed
//! named tensors as little-endian 32-bit floats. Loading validates every
//! name and shape against the architecture.

use super::params::{ArchConfig, NetParams, RotMode};
use super::tensor::Param;
use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"MPGCKPT\0";
const VERSION: u32 = 1;

const KIND_PARAM: u8 = 0;
const KIND_BUFFER: u8 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f32_slice(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_name(buf: &mut Vec<u8>, name: &str) {
    let bytes = name.as_bytes();
    buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(bytes);
}

/// Serializes parameters (values plus Adam moments and per-tensor step
/// counts) and batch-norm buffers.
pub fn serialize(params: &NetParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    let a = &params.arch;
    put_u32(&mut buf, a.enc_channels[0] as u32);
    put_u32(&mut buf, a.enc_channels[1] as u32);
    put_u32(&mut buf, a.enc_channels[2] as u32);
    put_u32(&mut buf, a.head_hidden as u32);
    buf.push(match a.rot_mode {
        RotMode::Bilinear => 0,
        RotMode::Nearest => 1,
    });
    put_f64(&mut buf, a.bn_eps);
    put_f64(&mut buf, a.bn_momentum);
    put_u64(&mut buf, params.global_step);

    let mut records: Vec<u8> = Vec::new();
    let mut count: u32 = 0;
    params.for_each_param(&mut |name, p| {
        records.push(KIND_PARAM);
        put_name(&mut records, name);
        records.push(p.shape.len() as u8);
        for &d in &p.shape {
            put_u32(&mut records, d as u32);
        }
        put_u64(&mut records, p.steps);
        put_f32_slice(&mut records, &p.value);
        put_f32_slice(&mut records, &p.m);
        put_f32_slice(&mut records, &p.v);
        count += 1;
    });
    let mut bufs: Vec<(String, Vec<f64>)> = Vec::new();
    {
        let mut p = params.clone();
        p.for_each_buffer_mut(&mut |name, b| bufs.push((name.to_string(), b.clone())));
    }
    for (name, b) in &bufs {
        records.push(KIND_BUFFER);
        put_name(&mut records, name);
        records.push(1);
        put_u32(&mut records, b.len() as u32);
        put_f32_slice(&mut records, b);
        count += 1;
    }
    put_u32(&mut buf, count);
    buf.extend_from_slice(&records);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Checkpoint("bad tensor name".into()))
    }
}

/// Deserializes a checkpoint, validating architecture, names and shapes.
pub fn deserialize(bytes: &[u8]) -> Result<NetParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let enc_channels = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let head_hidden = r.u32()? as usize;
    let rot_mode = match r.u8()? {
        0 => RotMode::Bilinear,
        1 => RotMode::Nearest,
        m => return Err(Error::Checkpoint(format!("bad rotation mode {m}"))),
    };
    let bn_eps = r.f64()?;
    let bn_momentum = r.f64()?;
    let global_step = r.u64()?;
    let arch = ArchConfig {
        enc_channels,
        head_hidden,
        bn_eps,
        bn_momentum,
        rot_mode,
    };
    let count = r.u32()?;

    let mut params = NetParams::init(arch, 0);
    params.global_step = global_step;

    let mut loaded: Vec<(String, u8, Vec<f64>, Vec<f64>, Vec<f64>, u64, Vec<usize>)> = Vec::new();
    for _ in 0..count {
        let kind = r.u8()?;
        let name = r.name()?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        match kind {
            KIND_PARAM => {
                let steps = r.u64()?;
                let value = r.f32_vec(n)?;
                let m = r.f32_vec(n)?;
                let v = r.f32_vec(n)?;
                loaded.push((name, kind, value, m, v, steps, shape));
            }
            KIND_BUFFER => {
                let value = r.f32_vec(n)?;
                loaded.push((name, kind, value, Vec::new(), Vec::new(), 0, shape));
            }
            k => return Err(Error::Checkpoint(format!("bad record kind {k}"))),
        }
    }

    let find = |name: &str, kind: u8| {
        loaded
            .iter()
            .find(|rec| rec.0 == name && rec.1 == kind)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))
    };

    let mut err: Option<Error> = None;
    params.for_each_param_mut(&mut |name, p: &mut Param| {
        if err.is_some() {
            return;
        }
        match find(name, KIND_PARAM) {
            Ok(rec) => {
                if rec.6 != p.shape {
                    err = Some(Error::Checkpoint(format!(
                        "shape mismatch for '{name}': file {:?}, arch {:?}",
                        rec.6, p.shape
                    )));
                    return;
                }
                p.value = rec.2.clone();
                p.m = rec.3.clone();
                p.v = rec.4.clone();
                p.steps = rec.5;
            }
            Err(e) => err = Some(e),
        }
    });
    params.for_each_buffer_mut(&mut |name, b: &mut Vec<f64>| {
        if err.is_some() {
            return;
        }
        match find(name, KIND_BUFFER) {
            Ok(rec) => {
                if rec.2.len() != b.len() {
                    err = Some(Error::Checkpoint(format!("shape mismatch for '{name}'")));
                    return;
                }
                *b = rec.2.clone();
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    // running variance must stay positive
    for b in &params.branches {
        if b.head.bn.running_var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Checkpoint("non-positive running variance".into()));
        }
    }
    Ok(params)
}

pub fn save(params: &NetParams, path: &Path) -> Result<()> {
    let bytes = serialize(params);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetParams> {
    let bytes = std::fs::read(path)?;
    deserialize(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_quantized_values() {
        let params = NetParams::init(ArchConfig::toy(), 33);
        let bytes = serialize(&params);
        let back = deserialize(&bytes).unwrap();
        // save(load(x)) is byte-identical
        assert_eq!(bytes, serialize(&back));
        // and values survive within f32 precision
        let mut max_err = 0.0f64;
        params.for_each_param(&mut |name, p| {
            let mut q = back.clone();
            q.for_each_param_mut(&mut |n2, p2| {
                if n2 == name {
                    for (a, b) in p.value.iter().zip(p2.value.iter()) {
                        max_err = max_err.max((a - b).abs());
                    }
                }
            });
        });
        assert!(max_err < 1e-6);
    }

    #[test]
    fn rejects_architecture_mismatch() {
        let params = NetParams::init(ArchConfig::toy(), 1);
        let mut bytes = serialize(&params);
        // corrupt the head_hidden field in the header
        bytes[8 + 4 + 12] = 99;
        assert!(matches!(
            deserialize(&bytes),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            deserialize(b"NOTACKPT...."),
            Err(Error::Checkpoint(_))
        ));
    }
}
