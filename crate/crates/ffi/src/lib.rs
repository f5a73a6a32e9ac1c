//! C ABI for the `ehr-scaling` library.
//!
//! Every fallible function returns an [`EhrStatus`]; on failure the message
//! is available from [`ehr_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Panics never unwind into C; they become
//! `EHR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ehr_scaling::error::Error;
use ehr_scaling::flops::{forward_flops_per_token, palm_ratio, tokens_for_budget, training_flops};
use ehr_scaling::isoflop::fit_power_law;
use ehr_scaling::metrics::{empirical_auc, ScoredCohort};
use ehr_scaling::model::{count_params, forward, init_params, Checkpoint, ModelConfig, ParameterSet};
use ehr_scaling::tokenizer::{TokenId, Vocabulary};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EhrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    BudgetTooSmall = 5,
    DegenerateFit = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Unsigned 128-bit integer as two 64-bit halves.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EhrU128 {
    pub hi: u64,
    pub lo: u64,
}

impl From<u128> for EhrU128 {
    fn from(v: u128) -> Self {
        EhrU128 { hi: (v >> 64) as u64, lo: v as u64 }
    }
}

impl From<EhrU128> for u128 {
    fn from(v: EhrU128) -> Self {
        (v.hi as u128) << 64 | v.lo as u128
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub rope_base: f64,
}

impl From<&ModelConfig> for EhrModelConfig {
    fn from(c: &ModelConfig) -> Self {
        EhrModelConfig {
            vocab_size: c.vocab_size,
            d_model: c.d_model,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            n_kv_heads: c.n_kv_heads,
            d_ff: c.d_ff,
            context_len: c.context_len,
            rope_base: c.rope_base,
        }
    }
}

impl EhrModelConfig {
    fn to_config(self) -> Result<ModelConfig, Failure> {
        let c = ModelConfig {
            vocab_size: self.vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            n_kv_heads: self.n_kv_heads,
            d_ff: self.d_ff,
            context_len: self.context_len,
            rope_base: self.rope_base,
        };
        c.validate()?;
        Ok(c)
    }
}

/// `ln Y = log_coefficient + exponent * ln C`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrPowerLaw {
    pub exponent: f64,
    pub log_coefficient: f64,
    pub r2: f64,
    pub c_min: f64,
    pub c_max: f64,
}

/// Opaque token vocabulary.
pub struct EhrVocabulary(Vocabulary);

/// Opaque model parameters.
pub struct EhrModel(ParameterSet<f32>);

struct Failure(EhrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => EhrStatus::Io,
            Error::Parse { .. } | Error::Format { .. } | Error::UnknownToken(_) => EhrStatus::Parse,
            Error::BudgetTooSmall { .. } => EhrStatus::BudgetTooSmall,
            Error::DegenerateFit(_) | Error::SingleClass(_) => EhrStatus::DegenerateFit,
            _ => EhrStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EhrStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EhrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EhrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EhrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(EhrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(EhrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(EhrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(EhrStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ehr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ehr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `vocab.txt` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_vocabulary_open(path: *const c_char, out_vocab: *mut *mut EhrVocabulary) -> EhrStatus {
    guard(|| {
        let slot = out(out_vocab, "out_vocab")?;
        let v = Vocabulary::read(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(EhrVocabulary(v)));
        Ok(())
    })
}

/// Number of tokens; 0 for a null handle.
///
/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ehr_vocabulary_len(vocab: *const EhrVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `vocab` must be a live handle, `token` NUL-terminated, `out_id` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_vocabulary_encode(
    vocab: *const EhrVocabulary,
    token: *const c_char,
    out_id: *mut u32,
) -> EhrStatus {
    guard(|| {
        let v = deref(vocab, "vocab")?;
        let slot = out(out_id, "out_id")?;
        *slot = v.0.encode(text(token, "token")?)?.0;
        Ok(())
    })
}

/// Writes the token text and a NUL into `buf`. `out_len` receives the text
/// length without the NUL, also when the buffer is too small.
///
/// # Safety
/// `vocab` must be a live handle, `buf` valid for `capacity` bytes and
/// `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_vocabulary_decode(
    vocab: *const EhrVocabulary,
    id: u32,
    buf: *mut c_char,
    capacity: usize,
    out_len: *mut usize,
) -> EhrStatus {
    guard(|| {
        let v = deref(vocab, "vocab")?;
        let len = out(out_len, "out_len")?;
        let t = v.0.decode(TokenId(id))?;
        *len = t.len();
        if capacity < t.len() + 1 {
            return Err(Failure(EhrStatus::BufferTooSmall, format!("need {} bytes", t.len() + 1)));
        }
        if buf.is_null() {
            return Err(Failure(EhrStatus::NullPointer, "buf is null".into()));
        }
        std::ptr::copy_nonoverlapping(t.as_ptr().cast::<c_char>(), buf, t.len());
        *buf.add(t.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `vocab` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ehr_vocabulary_free(vocab: *mut EhrVocabulary) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_open(path: *const c_char, out_model: *mut *mut EhrModel) -> EhrStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let ck = Checkpoint::read(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(EhrModel(ck.params)));
        Ok(())
    })
}

/// Randomly initialized model for `config`.
///
/// # Safety
/// `config` must be readable and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_init(config: *const EhrModelConfig, seed: u64, out_model: *mut *mut EhrModel) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        let slot = out(out_model, "out_model")?;
        *slot = Box::into_raw(Box::new(EhrModel(init_params(&c, seed)?)));
        Ok(())
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_save(model: *const EhrModel, path: *const c_char) -> EhrStatus {
    guard(|| {
        let m = deref(model, "model")?;
        Checkpoint::new(m.0.clone()).write(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out_config` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_config(model: *const EhrModel, out_config: *mut EhrModelConfig) -> EhrStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out(out_config, "out_config")? = EhrModelConfig::from(&m.0.config);
        Ok(())
    })
}

/// Next-token logits after `tokens`, written to `out_logits` (at least
/// `vocab_size` floats).
///
/// # Safety
/// `model` must be a live handle, `tokens` valid for `n_tokens` values and
/// `out_logits` valid for `capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_next_logits(
    model: *const EhrModel,
    tokens: *const u32,
    n_tokens: usize,
    out_logits: *mut f32,
    capacity: usize,
) -> EhrStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ids: Vec<TokenId> = slice(tokens, n_tokens, "tokens")?.iter().map(|&t| TokenId(t)).collect();
        let v = m.0.config.vocab_size;
        if capacity < v {
            return Err(Failure(EhrStatus::BufferTooSmall, format!("need {v} floats")));
        }
        if out_logits.is_null() {
            return Err(Failure(EhrStatus::NullPointer, "out_logits is null".into()));
        }
        let logits = forward(&m.0, &ids)?;
        let last = logits.row(logits.rows() - 1);
        std::ptr::copy_nonoverlapping(last.as_ptr(), out_logits, v);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ehr_model_free(model: *mut EhrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Exact parameter count.
///
/// # Safety
/// `config` must be readable and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_count_params(config: *const EhrModelConfig, out_count: *mut u64) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        *out(out_count, "out_count")? = count_params(&c);
        Ok(())
    })
}

/// Forward FLOPs per token at context `seq_len`.
///
/// # Safety
/// `config` must be readable and `out_flops` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_forward_flops_per_token(
    config: *const EhrModelConfig,
    seq_len: usize,
    out_flops: *mut EhrU128,
) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        *out(out_flops, "out_flops")? = forward_flops_per_token(&c, seq_len).into();
        Ok(())
    })
}

/// Training FLOPs for `n_tokens` tokens.
///
/// # Safety
/// `config` must be readable and `out_flops` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_training_flops(
    config: *const EhrModelConfig,
    n_tokens: EhrU128,
    seq_len: usize,
    out_flops: *mut EhrU128,
) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        let per = 3 * forward_flops_per_token(&c, seq_len);
        u128::from(n_tokens).checked_mul(per).ok_or_else(|| invalid("training FLOPs overflow 128 bits"))?;
        *out(out_flops, "out_flops")? = training_flops(&c, n_tokens.into(), seq_len).into();
        Ok(())
    })
}

/// Largest token count whose training cost fits in `budget`.
///
/// # Safety
/// `config` must be readable and `out_tokens` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_tokens_for_budget(
    config: *const EhrModelConfig,
    budget: EhrU128,
    seq_len: usize,
    out_tokens: *mut EhrU128,
) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        *out(out_tokens, "out_tokens")? = tokens_for_budget(&c, budget.into(), seq_len)?.into();
        Ok(())
    })
}

/// Ratio of the PaLM-style per-token estimate to the exact count.
///
/// # Safety
/// `config` must be readable and `out_ratio` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_palm_ratio(config: *const EhrModelConfig, seq_len: usize, out_ratio: *mut f64) -> EhrStatus {
    guard(|| {
        let c = deref(config, "config")?.to_config()?;
        *out(out_ratio, "out_ratio")? = palm_ratio(&c, seq_len);
        Ok(())
    })
}

/// Empirical ROC AUC; `labels` holds 0 or 1 per score.
///
/// # Safety
/// `scores` and `labels` must be valid for `n` values and `out_auc` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_empirical_auc(scores: *const f64, labels: *const u8, n: usize, out_auc: *mut f64) -> EhrStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        if let Some(bad) = l.iter().find(|&&x| x > 1) {
            return Err(invalid(format!("label {bad} is not 0 or 1")));
        }
        let cohort = ScoredCohort::new(s.to_vec(), l.iter().map(|&x| x == 1).collect())?;
        *out(out_auc, "out_auc")? = empirical_auc(&cohort)?;
        Ok(())
    })
}

/// Least-squares power law through `(c[i], y[i])` in log-log space.
///
/// # Safety
/// `c` and `y` must be valid for `n` values and `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn ehr_fit_power_law(c: *const f64, y: *const f64, n: usize, out_fit: *mut EhrPowerLaw) -> EhrStatus {
    guard(|| {
        let cs = slice(c, n, "c")?;
        let ys = slice(y, n, "y")?;
        let pairs: Vec<(f64, f64)> = cs.iter().copied().zip(ys.iter().copied()).collect();
        let f = fit_power_law(&pairs)?;
        *out(out_fit, "out_fit")? =
            EhrPowerLaw { exponent: f.exponent, log_coefficient: f.log_coefficient, r2: f.r2, c_min: f.c_min, c_max: f.c_max };
        Ok(())
    })
}
