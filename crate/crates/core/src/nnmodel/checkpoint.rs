//! Binary checkpoint format.
//!
//! ```text
//! "DKPT" | version u32 LE | metadata length u64 LE | metadata (UTF-8 key=value lines)
//! tensor count u64 LE
//! per tensor: name length u64 | name bytes | rank u64 | dims u64 x rank | values f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::params::{ModelDims, ModelParams, Tensor, INIT_SCALE};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Training state stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    /// Epoch that produced the stored parameters (0 = initialization).
    pub epoch: u64,
    pub lr: f64,
    pub best_score: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn ensure_dims(&self, expected: &ModelDims) -> Result<()> {
        if self.dims() != *expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint dims {:?} do not match requested {:?}",
                self.dims(),
                expected
            )));
        }
        Ok(())
    }

    fn metadata_text(&self) -> String {
        let d = self.dims();
        let best = self
            .meta
            .best_score
            .map_or_else(|| "none".to_string(), |b| b.to_string());
        format!(
            "src_vocab={}\ntgt_vocab={}\nembed_dim={}\nhidden_dim={}\nepoch={}\nlr={}\nbest_score={}\nseed={}\ninit=uniform(-{INIT_SCALE},{INIT_SCALE})\n",
            d.src_vocab, d.tgt_vocab, d.embed_dim, d.hidden_dim, self.meta.epoch, self.meta.lr, best, self.meta.seed
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata_text();
        let mut out = Vec::with_capacity(self.dims().num_params() * 8 + 1024);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("missing DKPT magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.u64()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let (dims, meta) = parse_metadata(meta_text)?;

        let count = r.u64()? as usize;
        let mut tensors = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = r.u64()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u64()? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!("tensor `{name}` has implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` shape overflows")))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        let params = ModelParams::from_tensors(dims, tensors)?;
        Ok(Checkpoint { params, meta })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_metadata(text: &str) -> Result<(ModelDims, TrainingMeta)> {
    let get = |key: &str| -> Result<&str> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
            .ok_or_else(|| Error::Checkpoint(format!("metadata is missing `{key}`")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("metadata `{key}` has invalid value {v:?}")))
    }
    let dims = ModelDims {
        src_vocab: num("src_vocab", get("src_vocab")?)?,
        tgt_vocab: num("tgt_vocab", get("tgt_vocab")?)?,
        embed_dim: num("embed_dim", get("embed_dim")?)?,
        hidden_dim: num("hidden_dim", get("hidden_dim")?)?,
    };
    dims.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let best = get("best_score")?;
    let meta = TrainingMeta {
        epoch: num("epoch", get("epoch")?)?,
        lr: num("lr", get("lr")?)?,
        best_score: if best == "none" { None } else { Some(num("best_score", best)?) },
        seed: num("seed", get("seed")?)?,
    };
    Ok((dims, meta))
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = ModelDims::new(6, 7, 3, 4).unwrap();
        Checkpoint {
            params: ModelParams::init(dims, 5),
            meta: TrainingMeta {
                epoch: 3,
                lr: 0.1 + 0.2,
                best_score: Some(0.123456789012345),
                seed: 5,
            },
        }
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let none = Checkpoint {
            meta: TrainingMeta {
                best_score: None,
                ..ck.meta.clone()
            },
            ..ck
        };
        assert_eq!(Checkpoint::from_bytes(&none.to_bytes()).unwrap(), none);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample();
        save_checkpoint(&ck, &path).unwrap();
        let first = fs::read(&path).unwrap();
        save_checkpoint(&load_checkpoint(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Checkpoint(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn header_shape_disagreement() {
        let ck = sample();
        let text = ck.metadata_text();
        let bad_text = text.replace("hidden_dim=4", "hidden_dim=5");
        let mut bytes = ck.to_bytes();
        let start = 16;
        bytes.splice(start..start + text.len(), bad_text.bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }

    #[test]
    fn dims_mismatch() {
        let ck = sample();
        let other = ModelDims::new(6, 7, 3, 5).unwrap();
        assert!(ck.ensure_dims(&other).is_err());
        assert!(ck.ensure_dims(&ck.dims()).is_ok());
    }
}
