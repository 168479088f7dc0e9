use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use compatkg_ffi::*;

fn fixture(rel: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(rel);
    CString::new(p.to_str().unwrap()).unwrap()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    ckg_string_free(s);
    out
}

unsafe fn last_error() -> Option<String> {
    let p = ckg_last_error_message();
    (!p.is_null()).then(|| take(p))
}

struct Graph(*mut CkgGraph);

impl Graph {
    fn load() -> Graph {
        let mut g = ptr::null_mut();
        let path = fixture("checker/graph.json");
        assert_eq!(
            unsafe { ckg_graph_load(path.as_ptr(), &mut g) },
            CkgStatus::Ok
        );
        Graph(g)
    }
}

impl Drop for Graph {
    fn drop(&mut self) {
        unsafe { ckg_graph_free(self.0) }
    }
}

#[test]
fn graph_handle_counts() {
    let g = Graph::load();
    unsafe {
        assert_eq!(ckg_graph_link_count(g.0), 26);
        assert!(ckg_graph_node_count(g.0) > 26);
        assert_eq!(ckg_graph_node_count(ptr::null()), 0);
    }
}

#[test]
fn missing_graph_is_io_error() {
    let mut g = ptr::null_mut();
    let path = CString::new("/nonexistent/graph.json").unwrap();
    unsafe {
        assert_eq!(ckg_graph_load(path.as_ptr(), &mut g), CkgStatus::Io);
        assert!(g.is_null());
        assert!(last_error().unwrap().contains("/nonexistent/graph.json"));
    }
}

#[test]
fn corrupt_graph_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.json");
    std::fs::write(&file, "{\"format_version\": 1, \"nodes\": [").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(ckg_graph_load(path.as_ptr(), &mut g), CkgStatus::Data);
    }
}

#[test]
fn query_returns_json() {
    let g = Graph::load();
    let text = CString::new("does tensorflow 1.13 work with cuda 10.1?").unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ckg_query(g.0, ptr::null(), text.as_ptr(), &mut out),
            CkgStatus::Ok
        );
        let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(json["kind"], "pair");
        assert_eq!(json["summary"]["verdict"], "incompatible");
        assert!(last_error().is_none());
    }
}

#[test]
fn query_with_explicit_dictionary() {
    let g = Graph::load();
    let mut dict = ptr::null_mut();
    let text = CString::new("tf").unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(ckg_dictionary_default(&mut dict), CkgStatus::Ok);
        assert_eq!(ckg_query(g.0, dict, text.as_ptr(), &mut out), CkgStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(json["kind"], "component");
        assert_eq!(json["query"]["first"]["component"], "tensorflow");
        ckg_dictionary_free(dict);
    }
}

#[test]
fn unrecognized_query_status() {
    let g = Graph::load();
    let text = CString::new("how to bake bread").unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ckg_query(g.0, ptr::null(), text.as_ptr(), &mut out),
            CkgStatus::UnrecognizedQuery
        );
        assert!(out.is_null());
        assert!(last_error().unwrap().contains("tensorflow"));
    }
}

#[test]
fn check_environment_reports_issue() {
    let g = Graph::load();
    let env = CString::new("tensorflow==1.13.1\ncuda 10.1 @driver\nleftpad==1.0\n").unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ckg_check_environment(g.0, ptr::null(), env.as_ptr(), &mut out),
            CkgStatus::Ok
        );
        let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(json["issues"].as_array().unwrap().len(), 1);
        assert_eq!(json["diagnostics"].as_array().unwrap().len(), 1);
    }
    let empty = CString::new("leftpad==1.0\n").unwrap();
    unsafe {
        assert_eq!(
            ckg_check_environment(g.0, ptr::null(), empty.as_ptr(), &mut out),
            CkgStatus::Data
        );
    }
}

#[test]
fn normalize_and_confidence() {
    let mut out = ptr::null_mut();
    let mut value = 0.0;
    unsafe {
        let raw = CString::new("v1.13").unwrap();
        assert_eq!(ckg_normalize_version(raw.as_ptr(), &mut out), CkgStatus::Ok);
        assert_eq!(take(out), "1.13");
        let raw = CString::new("2.X").unwrap();
        assert_eq!(ckg_normalize_version(raw.as_ptr(), &mut out), CkgStatus::Ok);
        assert_eq!(take(out), "2.x");
        let bad = CString::new("banana").unwrap();
        assert_eq!(
            ckg_normalize_version(bad.as_ptr(), &mut out),
            CkgStatus::InvalidVersion
        );

        assert_eq!(ckg_confidence_score(3, 1, &mut value), CkgStatus::Ok);
        assert_eq!(value, 0.5);
        assert_eq!(
            ckg_confidence_score(0, 0, &mut value),
            CkgStatus::EmptyEvidence
        );
    }
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ckg_normalize_version(ptr::null(), &mut out),
            CkgStatus::NullArgument
        );
        let raw = CString::new("1.0").unwrap();
        assert_eq!(
            ckg_normalize_version(raw.as_ptr(), ptr::null_mut()),
            CkgStatus::NullArgument
        );
        assert_eq!(
            ckg_query(ptr::null(), ptr::null(), raw.as_ptr(), &mut out),
            CkgStatus::NullArgument
        );
        assert_eq!(
            ckg_confidence_score(1, 0, ptr::null_mut()),
            CkgStatus::NullArgument
        );
        ckg_graph_free(ptr::null_mut());
        ckg_dictionary_free(ptr::null_mut());
        ckg_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_rejected() {
    let bytes = CString::new(vec![0xffu8, 0xfe]).unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ckg_normalize_version(bytes.as_ptr(), &mut out),
            CkgStatus::InvalidUtf8
        );
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/compatkg.h"),
    )
    .unwrap();
    for name in [
        "ckg_dictionary_default",
        "ckg_dictionary_load",
        "ckg_graph_load",
        "ckg_graph_free",
        "ckg_query",
        "ckg_check_environment",
        "ckg_normalize_version",
        "ckg_confidence_score",
        "ckg_last_error_message",
        "ckg_string_free",
        "typedef struct CkgGraph CkgGraph",
        "CKG_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ckg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
