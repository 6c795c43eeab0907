//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SYLBCKPT"
//! version    u32
//! arch       u32 length + UTF-8 tag
//! config     u32 length + UTF-8 JSON
//! vocab      u32 count, then one u32 code point per id
//! params     u32 count, then per parameter:
//!              u32 length + UTF-8 name
//!              u32 rank, u64 per dimension
//!              f64 per value
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::vocab::Vocabulary;
use super::{Parameterized, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SYLBCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub config: serde_json::Value,
    pub vocab: Vocabulary,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model<M: Parameterized>(
        arch: &str,
        config: serde_json::Value,
        vocab: &Vocabulary,
        model: &M,
    ) -> Self {
        let params = model.parameters().into_iter().map(|(n, t)| (n, t.clone())).collect();
        Self { arch: arch.to_string(), config, vocab: vocab.clone(), params }
    }

    /// Copies stored parameters into `model`, matching names and shapes.
    pub fn load_into<M: Parameterized>(&self, model: &mut M) -> Result<()> {
        let targets = model.parameters_mut();
        if targets.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} parameter arrays, checkpoint has {}",
                targets.len(),
                self.params.len()
            )));
        }
        for ((name, dst), (src_name, src)) in targets.into_iter().zip(&self.params) {
            if &name != src_name || dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {src_name} {:?} does not fit {name} {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.arch)?;
        write_str(w, &serde_json::to_string(&self.config)?)?;
        write_len(w, self.vocab.size())?;
        for &ch in self.vocab.symbols() {
            w.write_all(&(ch as u32).to_le_bytes())?;
        }
        write_len(w, self.params.len())?;
        for (name, t) in &self.params {
            write_str(w, name)?;
            write_len(w, t.shape().len())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let arch = read_str(r)?;
        let config = serde_json::from_str(&read_str(r)?)?;
        let n = read_u32(r)? as usize;
        let symbols = (0..n)
            .map(|_| {
                let code = read_u32(r)?;
                char::from_u32(code).ok_or_else(|| Error::Checkpoint(format!("bad code point {code}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let vocab = Vocabulary::from_symbols(symbols)?;
        let count = read_u32(r)? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(r)?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank).map(|_| Ok(read_u64(r)? as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes).map_err(|_| Error::Checkpoint(format!("truncated data for {name}")))?;
            let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            params.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Self { arch, config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint("length exceeds u32".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_len(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dense = Dense::new(&mut rng, 5, 3);
        let ck = Checkpoint::from_model("dense", serde_json::json!({"in": 5}), &Vocabulary::standard(), &dense);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut restored = Dense::zeros(5, 3);
        back.load_into(&mut restored).unwrap();
        assert_eq!(restored, dense);
    }

    #[test]
    fn rejects_corruption_and_mismatches() {
        let dense = Dense::zeros(2, 2);
        let ck = Checkpoint::from_model("dense", serde_json::Value::Null, &Vocabulary::standard(), &dense);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        assert!(ck.load_into(&mut Dense::zeros(3, 2)).is_err());
    }
}
