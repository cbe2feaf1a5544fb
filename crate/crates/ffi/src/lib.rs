//! C ABI over the autoseqrec serving path.
//!
//! Handles are opaque: `AsrModel` owns frozen weights loaded from a
//! checkpoint, `AsrSession` owns matrix state plus cached embeddings and keeps
//! its model alive. Every fallible call returns an [`AsrStatus`]; the message
//! for the most recent failure on the calling thread is available from
//! [`asr_last_error_message`]. Panics never cross the boundary.
//!
//! Sessions are not thread-safe: one writer at a time per session. Distinct
//! sessions may be used from different threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use autoseqrec::incremental::predict_next;
use autoseqrec::scoring::{self, ComponentSet, TransitionEmbedding};
use autoseqrec::{persist, EmbeddingCache, Error, InferenceConfig, MatrixState, ModelParams, Normalization};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Io = 4,
    /// Bad magic, unsupported version, truncated or malformed container.
    Format = 5,
    VocabularyDrift = 6,
    DimensionMismatch = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// Scoring options. Obtain defaults from [`asr_score_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsrScoreConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// 1 disables the multi-hop term.
    pub hops: u32,
    /// Min-max normalize each component before mixing.
    pub normalize: bool,
    /// Push already-seen items to the bottom.
    pub filter_seen: bool,
}

pub struct AsrModel {
    params: Arc<ModelParams>,
    num_users: usize,
    vocab_digest: String,
}

pub struct AsrSession {
    params: Arc<ModelParams>,
    state: MatrixState,
    cache: EmbeddingCache,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AsrStatus {
    match e {
        Error::Io { .. } => AsrStatus::Io,
        Error::BadMagic | Error::Version { .. } | Error::Truncated { .. } | Error::Format(_) => AsrStatus::Format,
        Error::VocabularyDrift { .. } => AsrStatus::VocabularyDrift,
        Error::OutOfRange { .. } | Error::UnknownKey(_) => AsrStatus::OutOfRange,
        Error::Dimension(_) => AsrStatus::DimensionMismatch,
        Error::Config(_) | Error::UnknownFormat(_) | Error::Empty(_) | Error::DegenerateSplit(_) => {
            AsrStatus::InvalidArgument
        }
        _ => AsrStatus::Internal,
    }
}

fn fail(status: AsrStatus, msg: impl AsRef<str>) -> AsrStatus {
    set_last_error(msg.as_ref());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), AsrStatus>) -> AsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            AsrStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(AsrStatus::Internal, "internal panic"),
    }
}

fn lib(e: Error) -> AsrStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, AsrStatus> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AsrStatus> {
    if p.is_null() {
        return Err(fail(AsrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AsrStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, AsrStatus> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, AsrStatus> {
    p.as_ref().ok_or_else(|| fail(AsrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AsrStatus> {
    p.as_mut().ok_or_else(|| fail(AsrStatus::NullPointer, format!("{what} is null")))
}

fn inference_config(cfg: Option<&AsrScoreConfig>) -> Result<InferenceConfig, AsrStatus> {
    let Some(c) = cfg else {
        return Ok(InferenceConfig::default());
    };
    let out = InferenceConfig {
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        hops: c.hops as usize,
        normalization: if c.normalize { Normalization::MinMax } else { Normalization::None },
        components: ComponentSet::ALL,
        transition_embedding: TransitionEmbedding::Personalized,
        filter_seen: c.filter_seen,
    };
    out.validate().map_err(lib)?;
    Ok(out)
}

fn new_session(params: Arc<ModelParams>, state: MatrixState) -> Result<*mut AsrSession, AsrStatus> {
    let cache = EmbeddingCache::warm(&state, &params).map_err(lib)?;
    Ok(Box::into_raw(Box::new(AsrSession { params, state, cache })))
}

impl AsrSession {
    fn scores(&self, user: u32, cfg: &InferenceConfig) -> Result<(Vec<f64>, bool), AsrStatus> {
        let pred = predict_next(user, &self.state, &self.cache, &self.params, cfg).map_err(lib)?;
        Ok((pred.scores.values, pred.fallback))
    }

    fn apply(&mut self, user: u32, item: u32) -> Result<(), AsrStatus> {
        let touched = self.state.apply(user, item).map_err(lib)?;
        self.cache.refresh(&self.state, &self.params, &touched);
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn asr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread ("" after a success).
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn asr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn asr_score_config_default() -> AsrScoreConfig {
    let d = InferenceConfig::default();
    AsrScoreConfig {
        lambda1: d.lambda1,
        lambda2: d.lambda2,
        hops: d.hops as u32,
        normalize: d.normalization == Normalization::MinMax,
        filter_seen: d.filter_seen,
    }
}

/// Loads a checkpoint. `expected_digest` may be NULL to skip the vocabulary check.
///
/// # Safety
/// `path` (and `expected_digest` if non-NULL) must be valid NUL-terminated
/// strings; `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn asr_model_load(
    path: *const c_char,
    expected_digest: *const c_char,
    out: *mut *mut AsrModel,
) -> AsrStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let digest = opt_str_arg(expected_digest, "expected_digest")?;
        let (params, meta) = persist::load_checkpoint(&path, digest).map_err(lib)?;
        *out = Box::into_raw(Box::new(AsrModel {
            params: Arc::new(params),
            num_users: meta.num_users,
            vocab_digest: meta.vocab_digest,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`asr_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asr_model_free(model: *mut AsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes (users the model was trained for, items, hidden size). Any out
/// pointer may be NULL.
///
/// # Safety
/// `model` must be a live handle; non-NULL out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn asr_model_dims(
    model: *const AsrModel,
    num_users: *mut usize,
    num_items: *mut usize,
    hidden: *mut usize,
) -> AsrStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if let Some(p) = num_users.as_mut() {
            *p = m.num_users;
        }
        if let Some(p) = num_items.as_mut() {
            *p = m.params.num_items();
        }
        if let Some(p) = hidden.as_mut() {
            *p = m.params.hidden();
        }
        Ok(())
    })
}

/// Copies the checkpoint's vocabulary digest (hex, NUL-terminated) into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn asr_model_vocab_digest(model: *const AsrModel, buf: *mut c_char, len: usize) -> AsrStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if buf.is_null() {
            return Err(fail(AsrStatus::NullPointer, "buf is null"));
        }
        let bytes = m.vocab_digest.as_bytes();
        if len < bytes.len() + 1 {
            return Err(fail(AsrStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// Empty session (no interactions) for `num_users` users. The session keeps
/// the model's weights alive; the model handle may be freed afterwards.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asr_session_new(
    model: *const AsrModel,
    num_users: usize,
    out: *mut *mut AsrSession,
) -> AsrStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = ref_arg(model, "model")?;
        let state = MatrixState::new(num_users, m.params.num_items());
        *out = new_session(m.params.clone(), state)?;
        Ok(())
    })
}

/// Session resumed from a matrix-state snapshot; the snapshot's digest must
/// match the model's.
///
/// # Safety
/// `model` must be a live handle, `path` a valid string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asr_session_load_state(
    model: *const AsrModel,
    path: *const c_char,
    out: *mut *mut AsrSession,
) -> AsrStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = ref_arg(model, "model")?;
        let path = path_arg(path, "path")?;
        let state = persist::load_state(&path, Some(&m.vocab_digest)).map_err(lib)?;
        if state.num_items() != m.params.num_items() {
            return Err(fail(
                AsrStatus::DimensionMismatch,
                format!("state has {} items, model {}", state.num_items(), m.params.num_items()),
            ));
        }
        *out = new_session(m.params.clone(), state)?;
        Ok(())
    })
}

/// Writes the session's matrix state as a snapshot bound to `vocab_digest`.
///
/// # Safety
/// `session` must be a live handle and both strings valid.
#[no_mangle]
pub unsafe extern "C" fn asr_session_save_state(
    session: *const AsrSession,
    path: *const c_char,
    vocab_digest: *const c_char,
) -> AsrStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let path = path_arg(path, "path")?;
        let digest = str_arg(vocab_digest, "vocab_digest")?;
        persist::save_state(&s.state, digest, &path).map_err(lib)
    })
}

/// # Safety
/// `session` must be NULL or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asr_session_free(session: *mut AsrSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Number of interactions applied so far (including those in a loaded snapshot).
///
/// # Safety
/// `session` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asr_session_applied(session: *const AsrSession, out: *mut u64) -> AsrStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        *mut_arg(out, "out")? = s.state.applied();
        Ok(())
    })
}

/// Records interaction (user, item) and refreshes the affected embeddings.
///
/// # Safety
/// `session` must be a live handle with no concurrent callers.
#[no_mangle]
pub unsafe extern "C" fn asr_session_apply(session: *mut AsrSession, user: u32, item: u32) -> AsrStatus {
    guard(|| mut_arg(session, "session")?.apply(user, item))
}

/// Scores every item for `user` into `out` (`len` must equal the item
/// count). `cfg` may be NULL for defaults; `fallback` (nullable) is set when
/// the user has no history and only collaborative scores were used.
///
/// # Safety
/// `session` must be live; `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn asr_session_scores(
    session: *const AsrSession,
    user: u32,
    cfg: *const AsrScoreConfig,
    out: *mut f64,
    len: usize,
    fallback: *mut bool,
) -> AsrStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let cfg = inference_config(cfg.as_ref())?;
        if out.is_null() {
            return Err(fail(AsrStatus::NullPointer, "out is null"));
        }
        let n = s.params.num_items();
        if len < n {
            return Err(fail(AsrStatus::BufferTooSmall, format!("need {n} slots, got {len}")));
        }
        let (scores, fb) = s.scores(user, &cfg)?;
        ptr::copy_nonoverlapping(scores.as_ptr(), out, n);
        if let Some(f) = fallback.as_mut() {
            *f = fb;
        }
        Ok(())
    })
}

/// Top `k` items (descending score, ties by lower index) for `user`.
/// Writes `min(k, items)` entries and their count to `written`.
/// `out_scores` may be NULL.
///
/// # Safety
/// `session` must be live; `out_items` (and `out_scores` if non-NULL)
/// writable for `k` elements; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn asr_session_top_k(
    session: *const AsrSession,
    user: u32,
    cfg: *const AsrScoreConfig,
    k: usize,
    out_items: *mut u32,
    out_scores: *mut f64,
    written: *mut usize,
) -> AsrStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let written = mut_arg(written, "written")?;
        *written = 0;
        let cfg = inference_config(cfg.as_ref())?;
        if out_items.is_null() {
            return Err(fail(AsrStatus::NullPointer, "out_items is null"));
        }
        let (scores, _) = s.scores(user, &cfg)?;
        // Requests beyond the catalogue return every item.
        let top = scoring::top_k(&scores, k.min(scores.len())).map_err(lib)?;
        for (slot, &item) in top.iter().enumerate() {
            *out_items.add(slot) = item;
            if !out_scores.is_null() {
                *out_scores.add(slot) = scores[item as usize];
            }
        }
        *written = top.len();
        Ok(())
    })
}

/// Predict-then-update for one event: ranks `item` among all items for
/// `user` (1 = best) and then applies the interaction.
///
/// # Safety
/// `session` must be live with no concurrent callers; `rank` writable.
#[no_mangle]
pub unsafe extern "C" fn asr_session_step(
    session: *mut AsrSession,
    user: u32,
    item: u32,
    cfg: *const AsrScoreConfig,
    rank: *mut usize,
) -> AsrStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        let rank = mut_arg(rank, "rank")?;
        let cfg = inference_config(cfg.as_ref())?;
        if item as usize >= s.params.num_items() {
            return Err(fail(
                AsrStatus::OutOfRange,
                format!("item index {item} out of range (size {})", s.params.num_items()),
            ));
        }
        let (scores, _) = s.scores(user, &cfg)?;
        *rank = scoring::rank_of(&scores, item as usize);
        s.apply(user, item)
    })
}
