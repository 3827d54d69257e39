//! C ABI over the `ilmtr` library.
//!
//! Objects cross the boundary as opaque handles (`IlmtrConfig`,
//! `IlmtrIndex`) that the caller frees with the matching `_free` function.
//! Every fallible call returns an `IlmtrStatus`; on failure a message for
//! the calling thread is available from `ilmtr_last_error`. Strings returned
//! through out-parameters are owned by the caller and released with
//! `ilmtr_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::{c_char, size_t};

use ilmtr::bench::score_niah;
use ilmtr::config::{LcsGranularity, RunConfig};
use ilmtr::gateway::http::{OpenAiEmbedder, RoutedChat};
use ilmtr::gateway::mock::{ExtractiveChat, HashedBagEmbedder};
use ilmtr::gateway::Backends;
use ilmtr::index::{collapsed_retrieve, load_index, save_index, RetrievalIndex};
use ilmtr::inner_loop::{convergence_ratio, run_query, QueryMode};
use ilmtr::tree::build_tree;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlmtrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Backend = 6,
    Input = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlmtrMode {
    Single = 0,
    NoLoop = 1,
    Full = 2,
}

impl From<IlmtrMode> for QueryMode {
    fn from(m: IlmtrMode) -> Self {
        match m {
            IlmtrMode::Single => QueryMode::SingleShot,
            IlmtrMode::NoLoop => QueryMode::NoLoop,
            IlmtrMode::Full => QueryMode::Full,
        }
    }
}

/// Opaque run configuration.
pub struct IlmtrConfig {
    inner: RunConfig,
}

/// Opaque, immutable retrieval index.
pub struct IlmtrIndex {
    inner: RetrievalIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(IlmtrStatus, String);

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, turning errors and panics into a status plus thread-local
/// message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> IlmtrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IlmtrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IlmtrStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(IlmtrStatus::NullArgument, format!("{name} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the caller's contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(IlmtrStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` must be null or a valid pointer to a live `T`.
unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    // SAFETY: per the caller's contract.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(IlmtrStatus::NullArgument, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> FfiResult<*mut T> {
    if p.is_null() {
        Err(Failure(IlmtrStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

fn to_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("NULs were replaced")
        .into_raw()
}

fn backends(config: &RunConfig, use_mock: bool) -> Backends {
    if use_mock {
        Backends::new(
            ExtractiveChat::new(&config.mock.needle_patterns),
            HashedBagEmbedder::default(),
        )
    } else {
        Backends::new(RoutedChat::from_config(config), OpenAiEmbedder::from_config(config))
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `ilmtr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ilmtr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML config (null or empty for all defaults) into `*out`.
///
/// # Safety
/// `toml` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_config_new(toml: *const c_char, out: *mut *mut IlmtrConfig) -> IlmtrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = if toml.is_null() {
            ""
        } else {
            // SAFETY: non-null, NUL-terminated per contract.
            unsafe { str_arg(toml, "toml") }?
        };
        let inner = RunConfig::from_toml_str(text).map_err(|e| Failure(IlmtrStatus::Config, e.to_string()))?;
        // SAFETY: `out` is non-null and writable per contract.
        unsafe { *out = Box::into_raw(Box::new(IlmtrConfig { inner })) };
        Ok(())
    })
}

/// Applies one `section.key=value` override.
///
/// # Safety
/// `config` must come from `ilmtr_config_new`; `assignment` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_config_set(config: *mut IlmtrConfig, assignment: *const c_char) -> IlmtrStatus {
    guard(|| {
        // SAFETY: per contract.
        let cfg = unsafe { config.as_mut() }
            .ok_or_else(|| Failure(IlmtrStatus::NullArgument, "config is null".into()))?;
        // SAFETY: per contract.
        let assignment = unsafe { str_arg(assignment, "assignment") }?;
        let text = cfg.inner.to_toml_string();
        cfg.inner = RunConfig::with_overrides(&text, &[assignment])
            .map_err(|e| Failure(IlmtrStatus::Config, e.to_string()))?;
        Ok(())
    })
}

/// Serializes the config to TOML into `*out` (free with
/// `ilmtr_string_free`).
///
/// # Safety
/// `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_config_to_toml(config: *const IlmtrConfig, out: *mut *mut c_char) -> IlmtrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        // SAFETY: per contract.
        let cfg = unsafe { ref_arg(config, "config") }?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = to_c_string(&cfg.inner.to_toml_string()) };
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from `ilmtr_config_new` and not be freed
/// already.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_config_free(config: *mut IlmtrConfig) {
    if !config.is_null() {
        // SAFETY: allocated by `Box::into_raw` in `ilmtr_config_new`.
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Builds an index over `text`. With `use_mock` nonzero the offline mock
/// backends are used; otherwise the endpoints in `config`.
///
/// # Safety
/// `config` must be valid, `text` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_build(
    config: *const IlmtrConfig,
    text: *const c_char,
    use_mock: i32,
    out: *mut *mut IlmtrIndex,
) -> IlmtrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        // SAFETY: per contract.
        let cfg = unsafe { ref_arg(config, "config") }?;
        // SAFETY: per contract.
        let text = unsafe { str_arg(text, "text") }?;
        let b = backends(&cfg.inner, use_mock != 0);
        let tree = build_tree(text, &cfg.inner, &b).map_err(|e| {
            let status = if e.is_backend() {
                IlmtrStatus::Backend
            } else {
                IlmtrStatus::Input
            };
            Failure(status, e.to_string())
        })?;
        let index = IlmtrIndex {
            inner: RetrievalIndex::from_tree(tree),
        };
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(index)) };
        Ok(())
    })
}

/// # Safety
/// `index` must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_index_save(index: *const IlmtrIndex, path: *const c_char) -> IlmtrStatus {
    guard(|| {
        // SAFETY: per contract.
        let index = unsafe { ref_arg(index, "index") }?;
        // SAFETY: per contract.
        let path = unsafe { str_arg(path, "path") }?;
        save_index(&index.inner, Path::new(path)).map_err(|e| Failure(IlmtrStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_index_load(path: *const c_char, out: *mut *mut IlmtrIndex) -> IlmtrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        // SAFETY: per contract.
        let path = unsafe { str_arg(path, "path") }?;
        let inner = load_index(Path::new(path)).map_err(|e| {
            let status = match e {
                ilmtr::index::PersistError::Io(_) => IlmtrStatus::Io,
                _ => IlmtrStatus::Format,
            };
            Failure(status, e.to_string())
        })?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(IlmtrIndex { inner })) };
        Ok(())
    })
}

/// Number of nodes in the index; 0 for a null handle.
///
/// # Safety
/// `index` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_index_len(index: *const IlmtrIndex) -> size_t {
    // SAFETY: per contract.
    unsafe { index.as_ref() }.map_or(0, |i| i.inner.len())
}

/// # Safety
/// `index` must be null or come from `ilmtr_build`/`ilmtr_index_load` and
/// not be freed already.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_index_free(index: *mut IlmtrIndex) {
    if !index.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(index) });
    }
}

/// Retrieves for `query` and writes the assembled context text to `*out`.
///
/// # Safety
/// Handles must be valid, `query` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_retrieve(
    index: *const IlmtrIndex,
    config: *const IlmtrConfig,
    query: *const c_char,
    use_mock: i32,
    out: *mut *mut c_char,
) -> IlmtrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        // SAFETY: per contract.
        let index = unsafe { ref_arg(index, "index") }?;
        // SAFETY: per contract.
        let cfg = unsafe { ref_arg(config, "config") }?;
        // SAFETY: per contract.
        let query = unsafe { str_arg(query, "query") }?;
        let b = backends(&cfg.inner, use_mock != 0);
        let info = collapsed_retrieve(&index.inner, query, &cfg.inner.retriever, b.embed.as_ref())
            .map_err(|e| Failure(IlmtrStatus::Backend, e.to_string()))?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = to_c_string(&info.assembled_text) };
        Ok(())
    })
}

/// Answers `question`. The final answer goes to `*answer_out`; the number
/// of rounds run goes to `*rounds_out` when that pointer is non-null. A
/// mid-loop backend failure returns `Backend` and leaves `*answer_out`
/// untouched.
///
/// # Safety
/// Handles must be valid, `question` NUL-terminated, `answer_out` writable,
/// `rounds_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_query(
    index: *const IlmtrIndex,
    config: *const IlmtrConfig,
    question: *const c_char,
    mode: IlmtrMode,
    use_mock: i32,
    answer_out: *mut *mut c_char,
    rounds_out: *mut u32,
) -> IlmtrStatus {
    guard(|| {
        let answer_out = out_arg(answer_out, "answer_out")?;
        // SAFETY: per contract.
        let index = unsafe { ref_arg(index, "index") }?;
        // SAFETY: per contract.
        let cfg = unsafe { ref_arg(config, "config") }?;
        // SAFETY: per contract.
        let question = unsafe { str_arg(question, "question") }?;
        let b = backends(&cfg.inner, use_mock != 0);
        let trace = run_query(&index.inner, question, mode.into(), &cfg.inner, &b);
        if !rounds_out.is_null() {
            // SAFETY: non-null and writable per contract.
            unsafe { *rounds_out = trace.rounds.len() as u32 };
        }
        if let Some(f) = trace.error {
            return Err(Failure(
                IlmtrStatus::Backend,
                format!("round {}: {}", f.round, f.message),
            ));
        }
        // SAFETY: `answer_out` is non-null and writable.
        unsafe { *answer_out = to_c_string(&trace.final_answer) };
        Ok(())
    })
}

/// Word-level normalized LCS between two texts; negative on bad input.
///
/// # Safety
/// Both pointers must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_convergence_ratio(prev: *const c_char, curr: *const c_char) -> f64 {
    let mut ratio = -1.0;
    let status = guard(|| {
        // SAFETY: per contract.
        let (a, b) = unsafe { (str_arg(prev, "prev")?, str_arg(curr, "curr")?) };
        ratio = convergence_ratio(a, b, LcsGranularity::Word);
        Ok(())
    });
    if status == IlmtrStatus::Ok {
        ratio
    } else {
        -1.0
    }
}

/// Rubric score (1, 3, 7 or 10) of `answer` against `n` keywords; 0 on bad
/// input.
///
/// # Safety
/// `answer` must be NUL-terminated; `keywords` must point to `n`
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_score_niah(answer: *const c_char, keywords: *const *const c_char, n: size_t) -> u32 {
    let mut score = 0;
    guard(|| {
        // SAFETY: per contract.
        let answer = unsafe { str_arg(answer, "answer") }?;
        if keywords.is_null() && n > 0 {
            return Err(Failure(IlmtrStatus::NullArgument, "keywords is null".into()));
        }
        let mut kws = Vec::with_capacity(n);
        for i in 0..n {
            // SAFETY: `keywords` points to `n` entries per contract.
            let p = unsafe { *keywords.add(i) };
            // SAFETY: each entry is NUL-terminated per contract.
            kws.push(unsafe { str_arg(p, "keyword") }?.to_string());
        }
        score = u32::from(score_niah(answer, &kws));
        Ok(())
    });
    score
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned through an out-parameter of this
/// library, not freed already.
#[no_mangle]
pub unsafe extern "C" fn ilmtr_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by `CString::into_raw` in `to_c_string`.
        drop(unsafe { CString::from_raw(s) });
    }
}
