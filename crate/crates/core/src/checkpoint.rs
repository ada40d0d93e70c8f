//! Binary checkpoint format.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! "BTF1" | version
//! config_len | config (UTF-8 `key = value` lines)
//! vocab_count | { token_len | token }*
//! param_count | { path_len | path | rank | dims* | f32 payload }*
//! ```

use std::fs;
use std::path::Path;

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"BTF1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Run configuration plus `meta.*` entries, as `key = value` lines.
    pub config: String,
    pub vocab: Vec<String>,
    pub params: ParamStore<f32>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

impl Checkpoint {
    pub fn new(config: String, vocab: &Vocab, params: ParamStore<f32>) -> Self {
        Checkpoint {
            config,
            vocab: vocab.tokens().to_vec(),
            params,
        }
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::from_tokens(self.vocab.clone())
    }

    /// Value of a `meta.{key}` entry in the config block.
    pub fn meta(&self, key: &str) -> Option<&str> {
        let want = format!("meta.{key}");
        self.config.lines().find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == want).then(|| v.trim())
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize)?;
        put_str(&mut out, &self.config)?;
        put_u32(&mut out, self.vocab.len())?;
        for t in &self.vocab {
            put_str(&mut out, t)?;
        }
        put_u32(&mut out, self.params.len())?;
        for (path, t) in self.params.iter() {
            put_str(&mut out, path)?;
            put_u32(&mut out, t.shape().len())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let config = r.string("config")?;
        let n_vocab = r.u32("vocab size")?;
        let vocab = (0..n_vocab).map(|_| r.string("vocab token")).collect::<Result<Vec<_>>>()?;
        let n_params = r.u32("parameter count")?;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let path = r.string("parameter path")?;
            let rank = r.u32("rank")?;
            let shape = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("shape {shape:?} overflows")))?;
            let bytes = r.take(numel.saturating_mul(4), "payload")?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data)?;
            params
                .insert(path, t)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)
            .map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
