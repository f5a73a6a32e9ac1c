use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::event::EventKind;
use crate::tokenizer::interval::{INTERVAL_CLASS_COUNT, INTERVAL_TOKENS};

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ids of the tokens the rest of the pipeline reasons about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Specials {
    pub death: TokenId,
    pub discharge: TokenId,
    pub admission: TokenId,
    pub icu_admission: TokenId,
    pub icu_discharge: TokenId,
    pub intervals: [TokenId; INTERVAL_CLASS_COUNT],
}

/// Bijective map between token text and [`TokenId`].
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    specials: Specials,
    interval_of: HashMap<TokenId, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

pub fn quantile_token(bin: usize) -> String {
    format!("Q{}", bin + 1)
}

pub fn age_bucket_token(bucket: i64) -> String {
    format!("AGE_{}_{}", bucket * 5, bucket * 5 + 5)
}

pub fn year_bucket_token(bucket: i64) -> String {
    format!("YEAR_{}_{}", bucket * 5, bucket * 5 + 5)
}

/// Age buckets always present: 0 through 125 years.
const BASE_AGE_BUCKETS: i64 = 25;

impl Vocabulary {
    /// Build from an ordered token list; ids follow list order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(['\t', '\n', '\r']) {
                return Err(Error::Format { what: "vocabulary", message: format!("invalid token text {t:?}") });
            }
            if index.insert(t.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Format { what: "vocabulary", message: format!("duplicate token {t:?}") });
            }
        }
        let id = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownToken(s.to_string()));
        let mut intervals = [TokenId(0); INTERVAL_CLASS_COUNT];
        let mut interval_of = HashMap::new();
        for (class, name) in INTERVAL_TOKENS.iter().enumerate() {
            intervals[class] = id(name)?;
            interval_of.insert(intervals[class], class);
        }
        let specials = Specials {
            death: id(EventKind::Death.kind_token())?,
            discharge: id(EventKind::Discharge.kind_token())?,
            admission: id(EventKind::Admission.kind_token())?,
            icu_admission: id(EventKind::IcuAdmission.kind_token())?,
            icu_discharge: id(EventKind::IcuDischarge.kind_token())?,
            intervals,
        };
        Ok(Vocabulary { tokens, index, specials, interval_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> &Specials {
        &self.specials
    }

    pub fn encode(&self, token: &str) -> Result<TokenId> {
        self.index.get(token).copied().ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn decode(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id.index())
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange { id: id.0, size: self.tokens.len() })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Interval class of a token, if it is an interval token.
    pub fn interval_class(&self, id: TokenId) -> Option<usize> {
        self.interval_of.get(&id).copied()
    }

    /// Serialize as `id<TAB>token` lines, ids dense from zero.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{t}");
        }
        out
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            let (id, tok) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse { line: n + 1, message: "expected `id<TAB>token`".into() })?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Parse { line: n + 1, message: format!("bad token id {id:?}") })?;
            if id != tokens.len() {
                return Err(Error::Parse { line: n + 1, message: format!("ids must be dense: expected {}, got {id}", tokens.len()) });
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

/// Collects every token text a corpus needs.
///
/// Fixed tokens (kinds, intervals, quantiles, base age buckets) come first in a
/// canonical order; observed code and year tokens follow sorted.
#[derive(Debug, Clone)]
pub struct VocabularyBuilder {
    bin_count: usize,
    observed: BTreeSet<String>,
}

impl VocabularyBuilder {
    pub fn new(bin_count: usize) -> Self {
        VocabularyBuilder { bin_count, observed: BTreeSet::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>) {
        self.observed.insert(token.into());
    }

    pub fn extend<I: IntoIterator<Item = String>>(&mut self, tokens: I) {
        self.observed.extend(tokens);
    }

    pub fn build(self) -> Result<Vocabulary> {
        let mut fixed: Vec<String> = Vec::new();
        // stay markers first so their ids are small and stable
        for kind in [
            EventKind::Death,
            EventKind::Discharge,
            EventKind::Admission,
            EventKind::IcuAdmission,
            EventKind::IcuDischarge,
        ] {
            fixed.push(kind.kind_token().to_string());
        }
        fixed.extend(INTERVAL_TOKENS.iter().map(|s| s.to_string()));
        for kind in EventKind::ALL {
            if !kind.is_stay_marker() {
                fixed.push(kind.kind_token().to_string());
            }
        }
        fixed.extend((0..self.bin_count).map(quantile_token));
        fixed.extend((0..BASE_AGE_BUCKETS).map(age_bucket_token));
        let known: BTreeSet<&String> = fixed.iter().collect();
        let rest: Vec<String> = self.observed.iter().filter(|t| !known.contains(t)).cloned().collect();
        let mut tokens = fixed;
        tokens.extend(rest);
        Vocabulary::from_tokens(tokens)
    }
}
