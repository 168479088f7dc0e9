//! C interface to the compatkg knowledge graph.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Strings returned through `out`
//! parameters are NUL-terminated UTF-8 and must be released with
//! [`ckg_string_free`]. Every fallible call returns a [`CkgStatus`]; the
//! message for the most recent failure on the calling thread is available
//! from [`ckg_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use compatkg::checker::{check_with_unknown, EnvironmentSpec, Issue, UnknownPair};
use compatkg::query::{parse_query, resolve};
use compatkg::recognizer::VersionedComponent;
use compatkg::{
    confidence_score, load_graph, normalize_version, Dictionary, Error, KnowledgeGraph, Recognizer,
    SCHEMA_VERSION,
};
use serde::Serialize;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CkgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    Config = 5,
    UnrecognizedQuery = 6,
    InvalidVersion = 7,
    EmptyEvidence = 8,
    Panic = 99,
}

/// Component dictionary plus the recognizer built from it.
pub struct CkgDictionary {
    recognizer: Recognizer,
}

/// A loaded, immutable knowledge graph.
pub struct CkgGraph {
    graph: KnowledgeGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg.into()));
}

fn status_of(err: &Error) -> CkgStatus {
    match err {
        Error::Io { .. } => CkgStatus::Io,
        Error::Config(_) => CkgStatus::Config,
        Error::UnrecognizedQuery { .. } => CkgStatus::UnrecognizedQuery,
        Error::InvalidVersion(_) => CkgStatus::InvalidVersion,
        Error::EmptyEvidence => CkgStatus::EmptyEvidence,
        Error::Stage { source, .. } => status_of(source),
        _ => CkgStatus::Data,
    }
}

fn fail(err: Error) -> CkgStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f`, turning panics into [`CkgStatus::Panic`].
fn guard(f: impl FnOnce() -> CkgStatus) -> CkgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            CkgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, CkgStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        return Err(CkgStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        CkgStatus::InvalidUtf8
    })
}

fn into_c_string(s: String) -> *mut c_char {
    // Serialized JSON and version text never contain NUL.
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn write_out<T>(out: *mut T, value: T) -> CkgStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return CkgStatus::NullArgument;
    }
    out.write(value);
    CkgStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Creates a handle for the bundled component dictionary.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ckg_dictionary_default(out: *mut *mut CkgDictionary) -> CkgStatus {
    guard(|| {
        let handle = Box::new(CkgDictionary {
            recognizer: Recognizer::new(Dictionary::builtin()),
        });
        write_out(out, Box::into_raw(handle))
    })
}

/// Loads a component dictionary from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ckg_dictionary_load(
    path: *const c_char,
    out: *mut *mut CkgDictionary,
) -> CkgStatus {
    guard(|| {
        let path = tri!(read_str(path, "path"));
        match Dictionary::load(Path::new(path)) {
            Ok(dict) => write_out(
                out,
                Box::into_raw(Box::new(CkgDictionary {
                    recognizer: Recognizer::new(dict),
                })),
            ),
            Err(e) => fail(e),
        }
    })
}

/// Releases a dictionary handle. Null is ignored.
///
/// # Safety
/// `dict` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ckg_dictionary_free(dict: *mut CkgDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Loads a graph file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ckg_graph_load(path: *const c_char, out: *mut *mut CkgGraph) -> CkgStatus {
    guard(|| {
        let path = tri!(read_str(path, "path"));
        match load_graph(Path::new(path)) {
            Ok(graph) => write_out(out, Box::into_raw(Box::new(CkgGraph { graph }))),
            Err(e) => fail(e),
        }
    })
}

/// Releases a graph handle. Null is ignored.
///
/// # Safety
/// `graph` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ckg_graph_free(graph: *mut CkgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of versioned-component nodes; 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ckg_graph_node_count(graph: *const CkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.nodes().len())
}

/// Number of relations; 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ckg_graph_link_count(graph: *const CkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.links().len())
}

/// Answers a search query. On success `*out_json` holds the same document
/// the command line prints with `--format machine`.
///
/// `dict` may be null to use the bundled dictionary.
///
/// # Safety
/// `graph` must be a live handle, `dict` null or a live handle, `text`
/// NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ckg_query(
    graph: *const CkgGraph,
    dict: *const CkgDictionary,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> CkgStatus {
    guard(|| {
        let Some(graph) = graph.as_ref() else {
            set_error("graph is null");
            return CkgStatus::NullArgument;
        };
        let text = tri!(read_str(text, "text"));
        let fallback;
        let recognizer = match dict.as_ref() {
            Some(d) => &d.recognizer,
            None => {
                fallback = Recognizer::new(Dictionary::builtin());
                &fallback
            }
        };
        match parse_query(text, recognizer) {
            Ok(q) => {
                let resp = resolve(&graph.graph, &q);
                let json = serde_json::to_string_pretty(&resp).expect("response serializes");
                write_out(out_json, into_c_string(json))
            }
            Err(e) => fail(e),
        }
    })
}

#[derive(Serialize)]
struct CheckOutput {
    schema_version: u32,
    entries: Vec<VersionedComponent>,
    issues: Vec<Issue>,
    unknown_pairs: Vec<UnknownPair>,
    diagnostics: Vec<String>,
}

/// Checks environment text (one `name==version` or `name version [@layer]`
/// per line) against the graph. `*out_json` receives
/// `{schema_version, entries, issues, unknown_pairs, diagnostics}`.
///
/// # Safety
/// As for [`ckg_query`].
#[no_mangle]
pub unsafe extern "C" fn ckg_check_environment(
    graph: *const CkgGraph,
    dict: *const CkgDictionary,
    env_text: *const c_char,
    out_json: *mut *mut c_char,
) -> CkgStatus {
    guard(|| {
        let Some(graph) = graph.as_ref() else {
            set_error("graph is null");
            return CkgStatus::NullArgument;
        };
        let text = tri!(read_str(env_text, "env_text"));
        let builtin;
        let dictionary = match dict.as_ref() {
            Some(d) => d.recognizer.dictionary(),
            None => {
                builtin = Dictionary::builtin();
                &builtin
            }
        };
        match EnvironmentSpec::parse_str(text, "<input>", dictionary) {
            Ok(env) => {
                let (issues, unknown_pairs) = check_with_unknown(&graph.graph, &env);
                let out = CheckOutput {
                    schema_version: SCHEMA_VERSION,
                    entries: env.entries,
                    issues,
                    unknown_pairs,
                    diagnostics: env.diagnostics,
                };
                let json = serde_json::to_string_pretty(&out).expect("check output serializes");
                write_out(out_json, into_c_string(json))
            }
            Err(e) => fail(e),
        }
    })
}

/// Normalizes a version token (`v1.13` becomes `1.13`, `3.X` becomes `3.x`).
///
/// # Safety
/// `raw` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ckg_normalize_version(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> CkgStatus {
    guard(|| {
        let raw = tri!(read_str(raw, "raw"));
        match normalize_version(raw) {
            Ok(v) => write_out(out, into_c_string(v.normalized())),
            Err(e) => fail(e),
        }
    })
}

/// `(compatible - incompatible) / (compatible + incompatible)`.
/// Fails with [`CkgStatus::EmptyEvidence`] when both counts are zero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ckg_confidence_score(
    n_compatible: u64,
    n_incompatible: u64,
    out: *mut f64,
) -> CkgStatus {
    guard(|| match confidence_score(n_compatible, n_incompatible) {
        Ok(c) => write_out(out, c.value()),
        Err(e) => fail(e),
    })
}

/// Copy of the last error message on this thread, or null when the last
/// call succeeded. Release with [`ckg_string_free`].
#[no_mangle]
pub extern "C" fn ckg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().clone().map_or(ptr::null_mut(), into_c_string))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ckg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string. Do not free.
#[no_mangle]
pub extern "C" fn ckg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
