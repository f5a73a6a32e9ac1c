//! Binary token-stream persistence.
//!
//! Layout (little-endian): magic `EHRT`, version byte, vocabulary size (u32),
//! patient count (u64), one u64 start offset per patient, then u32 tokens.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::{PatientTimeline, TokenId};

pub const STREAM_MAGIC: &[u8; 4] = b"EHRT";
pub const STREAM_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 8;

/// Flat concatenation of patient timelines with per-patient offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub vocab_size: u32,
    pub tokens: Vec<TokenId>,
    pub patient_offsets: Vec<u64>,
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Format { what: "token stream", message: message.into() }
}

impl TokenStream {
    pub fn new(vocab_size: u32, tokens: Vec<TokenId>, patient_offsets: Vec<u64>) -> Result<Self> {
        let s = TokenStream { vocab_size, tokens, patient_offsets };
        s.validate()?;
        Ok(s)
    }

    pub fn from_timelines(timelines: &[PatientTimeline], vocab_size: usize) -> Result<Self> {
        let mut tokens = Vec::with_capacity(timelines.iter().map(PatientTimeline::len).sum());
        let mut offsets = Vec::with_capacity(timelines.len());
        for t in timelines {
            offsets.push(tokens.len() as u64);
            tokens.extend_from_slice(&t.tokens);
        }
        Self::new(vocab_size as u32, tokens, offsets)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&first) = self.patient_offsets.first() {
            if first != 0 {
                return Err(malformed("first patient offset must be 0"));
            }
        } else if !self.tokens.is_empty() {
            return Err(malformed("tokens present without patients"));
        }
        if self.patient_offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(malformed("patient offsets must be strictly increasing"));
        }
        if let Some(&last) = self.patient_offsets.last() {
            if last >= self.tokens.len() as u64 {
                return Err(malformed("last patient segment is empty"));
            }
        }
        if let Some(t) = self.tokens.iter().find(|t| t.0 >= self.vocab_size) {
            return Err(Error::TokenOutOfRange { id: t.0, size: self.vocab_size as usize });
        }
        Ok(())
    }

    pub fn patient_count(&self) -> usize {
        self.patient_offsets.len()
    }

    /// Tokens of patient `i`.
    pub fn patient(&self, i: usize) -> &[TokenId] {
        let start = self.patient_offsets[i] as usize;
        let end = self.patient_offsets.get(i + 1).map_or(self.tokens.len(), |&o| o as usize);
        &self.tokens[start..end]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.patient_offsets.len() + 4 * self.tokens.len());
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.extend_from_slice(&self.vocab_size.to_le_bytes());
        out.extend_from_slice(&(self.patient_offsets.len() as u64).to_le_bytes());
        for o in &self.patient_offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for t in &self.tokens {
            out.extend_from_slice(&t.0.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(malformed("truncated header"));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(malformed("bad magic"));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(malformed(format!("unsupported version {}", bytes[4])));
        }
        let vocab_size = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
        let count = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
        let offsets_len = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(8))
            .filter(|&l| l <= bytes.len() - HEADER_LEN)
            .ok_or_else(|| malformed("patient count exceeds file size"))?;
        let body = &bytes[HEADER_LEN..];
        let patient_offsets =
            body[..offsets_len].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let rest = &body[offsets_len..];
        if rest.len() % 4 != 0 {
            return Err(malformed("token section is not a multiple of 4 bytes"));
        }
        let tokens = rest.chunks_exact(4).map(|c| TokenId(u32::from_le_bytes(c.try_into().expect("4 bytes")))).collect();
        Self::new(vocab_size, tokens, patient_offsets)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let s = TokenStream::new(300, vec![TokenId(1), TokenId(2), TokenId(299)], vec![0, 2]).unwrap();
        let b = s.to_bytes();
        assert_eq!(&b[..4], b"EHRT");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..9], &300u32.to_le_bytes());
        assert_eq!(&b[9..17], &2u64.to_le_bytes());
        assert_eq!(&b[17..25], &0u64.to_le_bytes());
        assert_eq!(&b[25..33], &2u64.to_le_bytes());
        assert_eq!(&b[33..37], &1u32.to_le_bytes());
        assert_eq!(b.len(), 17 + 16 + 12);
        assert_eq!(s.patient(0), &[TokenId(1), TokenId(2)]);
        assert_eq!(s.patient(1), &[TokenId(299)]);
    }

    #[test]
    fn rejects_bad_invariants() {
        assert!(TokenStream::new(10, vec![TokenId(1)], vec![1]).is_err());
        assert!(TokenStream::new(10, vec![TokenId(1), TokenId(1)], vec![0, 0]).is_err());
        assert!(TokenStream::new(10, vec![TokenId(1)], vec![0, 1]).is_err());
        assert!(TokenStream::new(10, vec![TokenId(10)], vec![0]).is_err());
        let mut b = TokenStream::new(10, vec![TokenId(1)], vec![0]).unwrap().to_bytes();
        b[0] = b'X';
        assert!(TokenStream::from_bytes(&b).is_err());
        assert!(TokenStream::from_bytes(&b[..10]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(lengths in prop::collection::vec(1usize..50, 0..20), seed in any::<u32>()) {
            let mut tokens = Vec::new();
            let mut offsets = Vec::new();
            for (i, &n) in lengths.iter().enumerate() {
                offsets.push(tokens.len() as u64);
                tokens.extend((0..n).map(|j| TokenId((seed as usize + i * 31 + j) as u32 % 500)));
            }
            let s = TokenStream::new(500, tokens, offsets).unwrap();
            let bytes = s.to_bytes();
            let back = TokenStream::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, s);
        }
    }
}
