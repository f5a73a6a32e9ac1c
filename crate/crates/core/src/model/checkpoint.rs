//! Checkpoint files: a `key=value` text header, a blank line, then every
//! tensor as little-endian f32 in layout order.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::{count_params, ModelConfig};
use crate::model::params::ParameterSet;

const MAGIC: &str = "ehr-scaling-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet<f32>,
    /// Free-form metadata such as `val_loss` or `step`.
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(params: ParameterSet<f32>) -> Self {
        Checkpoint { params, meta: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut header = format!("format={MAGIC}\nversion={VERSION}\n");
        for (k, v) in [
            ("vocab_size", c.vocab_size.to_string()),
            ("d_model", c.d_model.to_string()),
            ("n_layers", c.n_layers.to_string()),
            ("n_heads", c.n_heads.to_string()),
            ("n_kv_heads", c.n_kv_heads.to_string()),
            ("d_ff", c.d_ff.to_string()),
            ("context_len", c.context_len.to_string()),
            ("rope_base", c.rope_base.to_string()),
            ("n_params", self.params.len().to_string()),
        ] {
            header.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.meta {
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        header.push('\n');
        let mut out = header.into_bytes();
        out.reserve(self.params.len() * 4);
        for x in &self.params.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Format { what: "checkpoint", message: m };
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("missing header terminator".into()))?;
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
        let mut kv = BTreeMap::new();
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("header line without '=': {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        if kv.get("format").map(String::as_str) != Some(MAGIC) {
            return Err(bad("not a checkpoint file".into()));
        }
        if kv.get("version").map(String::as_str) != Some("1") {
            return Err(bad(format!("unsupported version {:?}", kv.get("version"))));
        }
        let num = |k: &str| -> Result<usize> {
            kv.get(k).ok_or_else(|| bad(format!("missing {k}")))?.parse().map_err(|_| bad(format!("bad {k}")))
        };
        let config = ModelConfig {
            vocab_size: num("vocab_size")?,
            d_model: num("d_model")?,
            n_layers: num("n_layers")?,
            n_heads: num("n_heads")?,
            n_kv_heads: num("n_kv_heads")?,
            d_ff: num("d_ff")?,
            context_len: num("context_len")?,
            rope_base: kv
                .get("rope_base")
                .ok_or_else(|| bad("missing rope_base".into()))?
                .parse()
                .map_err(|_| bad("bad rope_base".into()))?,
        };
        config.validate()?;
        let n = num("n_params")?;
        if n as u64 != count_params(&config) {
            return Err(bad(format!("n_params {n} does not match configuration")));
        }
        let body = &bytes[end + 2..];
        if body.len() != n * 4 {
            return Err(bad(format!("expected {} bytes of weights, found {}", n * 4, body.len())));
        }
        let mut params = ParameterSet::<f32>::zeros(&config)?;
        for (x, chunk) in params.data.iter_mut().zip(body.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        let meta = kv.into_iter().filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v))).collect();
        Ok(Checkpoint { params, meta })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::DEFAULT_ROPE_BASE;
    use crate::model::params::init_params;

    #[test]
    fn round_trip() {
        let c = ModelConfig {
            vocab_size: 9,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            n_kv_heads: 1,
            d_ff: 16,
            context_len: 64,
            rope_base: 500.0,
        };
        let ck = Checkpoint::new(init_params::<f32>(&c, 3).unwrap()).with_meta("val_loss", 1.25);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta_f64("val_loss"), Some(1.25));
    }

    #[test]
    fn rejects_truncation() {
        let c = ModelConfig {
            vocab_size: 5,
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            n_kv_heads: 1,
            d_ff: 4,
            context_len: 4,
            rope_base: DEFAULT_ROPE_BASE,
        };
        let mut b = Checkpoint::new(init_params::<f32>(&c, 0).unwrap()).to_bytes();
        b.pop();
        assert!(Checkpoint::from_bytes(&b).is_err());
        assert!(Checkpoint::from_bytes(b"hello").is_err());
    }
}
