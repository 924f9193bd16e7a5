//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `ANNACKPT`, u32 version, u32 header length, header text (`key = value`
//! lines: step, vocab_hash, vocab_size, then the stack configuration),
//! u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//! u64 per dimension, and the `f64` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use crate::encoder::{build_model, EncoderStackConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"ANNACKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab_hash: String,
    pub step: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::format("checkpoint", msg)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("non-UTF-8 string"))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

impl Checkpoint {
    pub fn header(&self) -> String {
        let mut lines = vec![
            format!("step = {}", self.step),
            format!("vocab_hash = {}", self.vocab_hash),
            format!("vocab_size = {}", self.params.vocab_size),
        ];
        lines.extend(self.params.config.to_kv().into_iter().map(|(k, v)| format!("{k} = {v}")));
        lines.join("\n") + "\n"
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_string(&mut w, &self.header())?;
        w.write_all(&(self.params.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            write_string(&mut w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.numel() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let header = read_string(&mut r)?;
        let mut config = EncoderStackConfig::default();
        let (mut step, mut vocab_hash, mut vocab_size) = (None, None, None);
        for line in header.lines() {
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(format!("bad header line `{line}`")))?;
            match k {
                "step" => step = Some(v.parse().map_err(|_| bad("bad step"))?),
                "vocab_hash" => vocab_hash = Some(v.to_string()),
                "vocab_size" => vocab_size = Some(v.parse().map_err(|_| bad("bad vocab_size"))?),
                _ => {
                    if !config.set(k, v)? {
                        return Err(bad(format!("unknown header key `{k}`")));
                    }
                }
            }
        }
        let (Some(step), Some(vocab_hash), Some(vocab_size)) = (step, vocab_hash, vocab_size) else {
            return Err(bad("header lacks step, vocab_hash or vocab_size"));
        };
        let mut params = build_model(&config, vocab_size, 0)?;
        let count = read_u32(&mut r)? as usize;
        if count != params.tensors.len() {
            return Err(bad(format!("{count} tensors, configuration implies {}", params.tensors.len())));
        }
        for i in 0..count {
            let name = read_string(&mut r)?;
            if name != params.names[i] {
                return Err(bad(format!("tensor {i} is `{name}`, expected `{}`", params.names[i])));
            }
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if shape != params.tensors[i].shape() {
                return Err(bad(format!("tensor `{name}` has shape {shape:?}")));
            }
            let mut raw = vec![0u8; params.tensors[i].numel() * 8];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.tensors[i] = Tensor::new(&shape, data)?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint { params, vocab_hash, step })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
