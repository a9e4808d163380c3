//! Binary model checkpoints.
//!
//! Layout: the magic bytes `NFMP1`; a `u64` length and that many bytes of
//! UTF-8 configuration text (the effective config plus `dims.*` lines); a
//! `u64` array count; then per array a `u64` name length, the name, a `u64`
//! element count and the elements as little-endian `f64`. All integers are
//! little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::config::Config;
use crate::error::{NfmpError, Result};
use crate::fields::MotionField;
use crate::model::{init_model, ModelDims, NfmpModel};

pub const MAGIC: &[u8; 5] = b"NFMP1";

fn dims_text(d: &ModelDims) -> String {
    format!(
        "dims.scene_dim = {}\ndims.channels = {}\ndims.joints = {}\ndims.demos = {}\ndims.implicit = {}\ndims.motion_scale = {}\n",
        d.scene_dim, d.channels, d.joints, d.demos, d.implicit, d.motion_scale
    )
}

/// Effective config followed by the model dimensions.
pub fn header_text(model: &NfmpModel) -> String {
    format!("{}{}", model.config.to_text(), dims_text(&model.dims))
}

fn bad(message: impl Into<String>) -> NfmpError {
    NfmpError::format("checkpoint", message)
}

fn parse_header(text: &str) -> Result<(Config, ModelDims)> {
    let mut cfg_lines = String::new();
    let mut dims = ModelDims { scene_dim: 0, channels: 0, joints: 0, demos: 0, implicit: false, motion_scale: 1.0 };
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("dims.") else {
            cfg_lines.push_str(line);
            cfg_lines.push('\n');
            continue;
        };
        let (key, value) = rest.split_once('=').ok_or_else(|| bad(format!("bad dims line `{line}`")))?;
        let value = value.trim();
        let int = || value.parse::<usize>().map_err(|e| bad(format!("dims.{}: {e}", key.trim())));
        match key.trim() {
            "scene_dim" => dims.scene_dim = int()?,
            "channels" => dims.channels = int()?,
            "joints" => dims.joints = int()?,
            "demos" => dims.demos = int()?,
            "implicit" => dims.implicit = value.parse().map_err(|e| bad(format!("dims.implicit: {e}")))?,
            "motion_scale" => dims.motion_scale = value.parse().map_err(|e| bad(format!("dims.motion_scale: {e}")))?,
            other => return Err(bad(format!("unknown dims key `{other}`"))),
        }
    }
    Ok((Config::parse(&cfg_lines)?, dims))
}

fn arrays(model: &NfmpModel) -> Vec<(&'static str, &[f64])> {
    let mut a = model.param_vectors();
    a.push(("embeddings", &model.embeddings));
    a
}

pub fn to_bytes(model: &NfmpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let header = header_text(model);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    let arrays = arrays(model);
    out.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for (name, values) in arrays {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes"))).map_err(|_| bad("length overflow"))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<NfmpModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(bad("missing NFMP1 magic"));
    }
    let hlen = c.u64()?;
    let header = std::str::from_utf8(c.take(hlen)?).map_err(|e| bad(format!("config block: {e}")))?;
    let (config, dims) = parse_header(header)?;
    let mut model = init_model(&config, &dims)?;

    let count = c.u64()?;
    let mut loaded = std::collections::HashMap::new();
    for _ in 0..count {
        let nlen = c.u64()?;
        let name = std::str::from_utf8(c.take(nlen)?).map_err(|e| bad(format!("array name: {e}")))?.to_string();
        let len = c.u64()?;
        let raw = c.take(len.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        loaded.insert(name, values);
    }
    if c.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }

    let mut fill = |name: &str, dst: &mut Vec<f64>| -> Result<()> {
        let src = loaded.remove(name).ok_or_else(|| bad(format!("missing array `{name}`")))?;
        if src.len() != dst.len() {
            return Err(bad(format!("array `{name}` has {} values, expected {}", src.len(), dst.len())));
        }
        *dst = src;
        Ok(())
    };
    fill("scene.template", &mut model.scene.template)?;
    fill("scene.deformation", &mut model.scene.deformation)?;
    match &mut model.motion {
        MotionField::Explicit(e) => fill("motion.hyper", &mut e.hyper)?,
        MotionField::Implicit(f) => {
            fill("motion.template", &mut f.template)?;
            fill("motion.deformation", &mut f.deformation)?;
        }
    }
    fill("embeddings", &mut model.embeddings)?;
    if let Some(extra) = loaded.keys().next() {
        return Err(bad(format!("unexpected array `{extra}`")));
    }
    Ok(model)
}

pub fn save(model: &NfmpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| NfmpError::io(path, e))?;
    f.write_all(&to_bytes(model)).map_err(|e| NfmpError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<NfmpModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| NfmpError::io(path, e))?;
    from_bytes(&bytes)
}
