use std::path::Path;

use crate::agent::{AgentConfig, Mode};
use crate::autodiff::{ParamStore, Tensor};

use super::TrainerError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XLNV";
pub const CHECKPOINT_VERSION: u32 = 1;

// Metadata travels as ordinary named arrays under this prefix.
const META_AGENT: &str = "meta.agent";
const META_ITERATION: &str = "meta.iteration";
const META_RNG: &str = "meta.rng";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub agent: AgentConfig,
    pub params: ParamStore,
    pub iteration: u64,
    /// Fingerprint of the training rng state when the snapshot was taken.
    pub rng_fingerprint: u64,
}

fn err(msg: impl Into<String>) -> TrainerError {
    TrainerError::Checkpoint(msg.into())
}

impl Checkpoint {
    fn arrays(&self) -> Vec<(String, Tensor)> {
        let a = &self.agent;
        let agent = vec![
            a.vocab_size as f64,
            a.d_embed as f64,
            a.d_enc as f64,
            a.d_dec as f64,
            a.d_view as f64,
            a.dropout,
            (a.mode == Mode::Xli) as u8 as f64,
            a.shared_embedding as u8 as f64,
        ];
        let mut out = vec![
            (META_AGENT.to_string(), Tensor::row(agent)),
            (
                META_ITERATION.to_string(),
                Tensor::row(vec![self.iteration as f64]),
            ),
            (
                META_RNG.to_string(),
                Tensor::row(vec![
                    (self.rng_fingerprint >> 32) as f64,
                    (self.rng_fingerprint & 0xffff_ffff) as f64,
                ]),
            ),
        ];
        out.extend(
            self.params
                .iter()
                .map(|(n, p)| (n.to_string(), p.value.clone())),
        );
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arrays = self.arrays();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, t) in arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(err("bad magic bytes"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported format version {version}")));
        }
        let count = r.u32()?;
        let mut params = ParamStore::new();
        let mut meta: Vec<(String, Tensor)> = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| err("array name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let t = Tensor::new(shape, data).map_err(|e| err(format!("array `{name}`: {e}")))?;
            if name.starts_with("meta.") {
                meta.push((name, t));
            } else if params.contains(&name) {
                return Err(err(format!("array `{name}` appears twice")));
            } else {
                params.insert(name, t);
            }
        }
        if r.pos != bytes.len() {
            return Err(err("trailing bytes after the last array"));
        }
        let get = |key: &str, len: usize| -> Result<Vec<f64>, TrainerError> {
            let (_, t) = meta
                .iter()
                .find(|(n, _)| n == key)
                .ok_or_else(|| err(format!("missing `{key}`")))?;
            if t.numel() != len {
                return Err(err(format!(
                    "`{key}` has {} values, expected {len}",
                    t.numel()
                )));
            }
            Ok(t.data().to_vec())
        };
        let a = get(META_AGENT, 8)?;
        let agent = AgentConfig {
            vocab_size: a[0] as usize,
            d_embed: a[1] as usize,
            d_enc: a[2] as usize,
            d_dec: a[3] as usize,
            d_view: a[4] as usize,
            dropout: a[5],
            mode: if a[6] == 1.0 { Mode::Xli } else { Mode::Mono },
            shared_embedding: a[7] == 1.0,
        };
        agent.validate()?;
        for (name, shape) in agent.shapes() {
            let t = params
                .value(&name)
                .map_err(|_| err(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(err(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let iteration = get(META_ITERATION, 1)?[0] as u64;
        let rng = get(META_RNG, 2)?;
        Ok(Self {
            agent,
            params,
            iteration,
            rng_fingerprint: ((rng[0] as u64) << 32) | rng[1] as u64,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| err("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainerError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, TrainerError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
