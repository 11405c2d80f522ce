use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use region_atlas_ffi::*;

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    ra_string_free(p);
    s
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ra_last_error()).to_string_lossy().into_owned()
}

unsafe fn fixture(name: &str) -> *mut RaGraph {
    let name = CString::new(name).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(ra_graph_fixture(name.as_ptr(), &mut g), RaStatus::Ok);
    g
}

#[test]
fn bounds_through_the_c_abi() {
    unsafe {
        let g = fixture("path3");
        assert_eq!(ra_graph_node_count(g), 3);
        let widths = [2usize, 2, 3];
        let mut out = ptr::null_mut();
        assert_eq!(ra_bounds_json(g, widths.as_ptr(), 3, &mut out), RaStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
        assert_eq!(v["multi_lower"], "343");
        assert_eq!(v["multi_upper"], "29824");
        assert!(ra_last_error().is_null());
        ra_graph_free(g);
    }
}

#[test]
fn exact_count_and_patterns() {
    unsafe {
        let g = fixture("single1");
        let widths = [1usize, 1];
        let mut n = ptr::null_mut();
        assert_eq!(ra_network_kaiming(g, widths.as_ptr(), 2, 7, &mut n), RaStatus::Ok);
        let mut count = ptr::null_mut();
        assert_eq!(ra_exact_count(n, 1e4, &mut count), RaStatus::Ok);
        assert_eq!(take_string(count), "2");

        assert_eq!(ra_network_input_dim(n), 1);
        assert_eq!(ra_network_neuron_count(n), 1);
        let mut signs = [9u8; 1];
        let x = [1e3f64];
        assert_eq!(ra_activation_pattern(n, x.as_ptr(), 1, signs.as_mut_ptr(), 1), RaStatus::Ok);
        let flipped = [-1e3f64];
        let mut other = [9u8; 1];
        assert_eq!(ra_activation_pattern(n, flipped.as_ptr(), 1, other.as_mut_ptr(), 1), RaStatus::Ok);
        assert_ne!(signs, other);
        assert_eq!(
            ra_activation_pattern(n, x.as_ptr(), 2, signs.as_mut_ptr(), 1),
            RaStatus::InvalidArgument
        );
        ra_network_free(n);
        ra_graph_free(g);
    }
}

#[test]
fn estimate_and_witness() {
    unsafe {
        let g = fixture("path3");
        let widths = [1usize, 2, 1];
        let mut n = ptr::null_mut();
        assert_eq!(ra_network_witness(g, widths.as_ptr(), 3, 0, &mut n), RaStatus::Ok);
        let mut count = ptr::null_mut();
        assert_eq!(ra_exact_count(n, 1e4, &mut count), RaStatus::Ok);
        assert!(take_string(count).parse::<u64>().unwrap() >= 64);

        let dist = CString::new("uniform:1").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(ra_estimate_json(n, dist.as_ptr(), 1000, 3, &mut out), RaStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
        assert_eq!(v["samples_used"], 1000);

        let mut params = ptr::null_mut();
        assert_eq!(ra_network_params_json(n, &mut params), RaStatus::Ok);
        let json = CString::new(take_string(params)).unwrap();
        let mut copy = ptr::null_mut();
        assert_eq!(ra_network_from_json(g, widths.as_ptr(), 3, json.as_ptr(), &mut copy), RaStatus::Ok);
        ra_network_free(copy);
        ra_network_free(n);
        ra_graph_free(g);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut g = ptr::null_mut();
        let bad = CString::new("nope").unwrap();
        assert_eq!(ra_graph_fixture(bad.as_ptr(), &mut g), RaStatus::InvalidArgument);
        assert!(last_error().contains("available fixtures"));
        assert_eq!(ra_graph_fixture(ptr::null(), &mut g), RaStatus::NullPointer);

        let edges = [0usize, 0];
        assert_eq!(ra_graph_from_edges(2, edges.as_ptr(), 1, &mut g), RaStatus::InvalidArgument);
        let json = CString::new(r#"{"nodes": 3, "edges": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(ra_graph_from_json(json.as_ptr(), &mut g), RaStatus::Ok);

        let narrow = [2usize, 1, 2];
        let mut n = ptr::null_mut();
        assert_eq!(ra_network_witness(g, narrow.as_ptr(), 3, 0, &mut n), RaStatus::Hypothesis);
        assert!(last_error().contains("N_l >= N_0"));

        let wide = [1usize, 10, 10];
        assert_eq!(ra_network_kaiming(g, wide.as_ptr(), 3, 0, &mut n), RaStatus::Ok);
        let mut count = ptr::null_mut();
        assert_eq!(ra_exact_count(n, 1e4, &mut count), RaStatus::CapExceeded);
        assert!(count.is_null());
        ra_network_free(n);
        ra_graph_free(g);
        ra_graph_free(ptr::null_mut());
        ra_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/region_atlas.h")).unwrap();
    for f in ["ra_graph_fixture", "ra_bounds_json", "ra_exact_count", "ra_estimate_json", "ra_last_error", "RA_STATUS_CAP_EXCEEDED"] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

/// Compiles the C example against the header and static library when a C
/// compiler is available.
#[test]
fn c_example_links_and_runs() {
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libregion_atlas_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no C compiler", lib.display());
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("region_atlas_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("examples/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C example failed to compile");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("\"multi_upper\":\"29824\""), "{stdout}");
    assert!(stdout.contains("count 27"), "{stdout}");
}
