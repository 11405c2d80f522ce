//! C ABI for region-atlas.
//!
//! Graphs and networks are opaque handles created and released through this
//! API. Every fallible call returns a [`RaStatus`]; on failure a message is
//! available from [`ra_last_error`] on the same thread. Strings returned
//! through `char **` out-parameters are owned by the caller and must be
//! released with [`ra_string_free`]. Region counts are decimal strings
//! because they can exceed 64 bits.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use region_atlas::arrangement::{exact_count_multi, CountOptions};
use region_atlas::bounds::BoundReport;
use region_atlas::gcn::{init_kaiming, ActivationPattern, Evaluator, GcnSpec, Parameters};
use region_atlas::graph::{fixture, normalize, Graph, NormalizedAdjacency};
use region_atlas::sampler::{estimate_regions, standard_sweep_with, InputDistribution, SamplingConfig};
use region_atlas::witness::build_witness;
use region_atlas::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    /// A hypothesis of the requested construction does not hold.
    Hypothesis = 4,
    /// Input exceeds the exact counter's caps; use the estimator.
    CapExceeded = 5,
    Solver = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque graph with its normalized adjacency.
pub struct RaGraph {
    graph: Graph,
    adj: NormalizedAdjacency,
}

/// Opaque network: architecture, parameters and the graph it runs on.
pub struct RaNetwork {
    spec: GcnSpec,
    adj: NormalizedAdjacency,
    params: Parameters,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Hypothesis { .. } => RaStatus::Hypothesis,
            Error::CapExceeded { .. } => RaStatus::CapExceeded,
            Error::IterationCap { .. } | Error::SolverAt { .. } => RaStatus::Solver,
            Error::Io(_) => RaStatus::Io,
            _ => RaStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(RaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn read_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = CString::new(s).map_err(|e| Failure(RaStatus::InvalidArgument, e.to_string()))?.into_raw();
    Ok(())
}

unsafe fn graph_ref<'a>(g: *const RaGraph) -> Result<&'a RaGraph, Failure> {
    g.as_ref().ok_or_else(|| null("graph"))
}

unsafe fn network_ref<'a>(n: *const RaNetwork) -> Result<&'a RaNetwork, Failure> {
    n.as_ref().ok_or_else(|| null("network"))
}

unsafe fn read_spec(widths: *const usize, len: usize) -> Result<GcnSpec, Failure> {
    Ok(GcnSpec::new(read_slice(widths, len, "widths")?.to_vec())?)
}

fn wrap_graph(graph: Graph) -> RaGraph {
    let adj = normalize(&graph);
    RaGraph { graph, adj }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Named fixture graph (`path3`, `star3`, `fig2_graph4`, `triangle3`, `single1`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_graph_fixture(name: *const c_char, out: *mut *mut RaGraph) -> RaStatus {
    guard(|| {
        let g = fixture(read_str(name, "name")?)?;
        write_out(out, wrap_graph(g))
    })
}

/// Graph from JSON `{"nodes": n, "edges": [[i, j], ...]}` with 0-based nodes.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_graph_from_json(json: *const c_char, out: *mut *mut RaGraph) -> RaStatus {
    guard(|| {
        let g = Graph::from_json_str(read_str(json, "json")?)?;
        write_out(out, wrap_graph(g))
    })
}

/// Graph from `edge_count` pairs stored flat in `edges` (0-based).
///
/// # Safety
/// `edges` must point to `2 * edge_count` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_graph_from_edges(
    nodes: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut RaGraph,
) -> RaStatus {
    guard(|| {
        let flat = read_slice(edges, 2 * edge_count, "edges")?;
        let g = Graph::new(nodes, flat.chunks(2).map(|p| (p[0], p[1])))?;
        write_out(out, wrap_graph(g))
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn ra_graph_node_count(g: *const RaGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.node_count())
}

/// # Safety
/// `g` must be null or a graph handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_graph_free(g: *mut RaGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Bound report for `widths` on `g`, as JSON.
///
/// # Safety
/// `widths` must point to `len` values; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_bounds_json(
    g: *const RaGraph,
    widths: *const usize,
    len: usize,
    out_json: *mut *mut c_char,
) -> RaStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let spec = read_spec(widths, len)?;
        let report = BoundReport::new(&spec, &g.adj);
        write_string(out_json, serde_json::to_string(&report).map_err(Error::from)?)
    })
}

/// Network with Kaiming-initialized parameters drawn from `seed`.
///
/// # Safety
/// `widths` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_network_kaiming(
    g: *const RaGraph,
    widths: *const usize,
    len: usize,
    seed: u64,
    out: *mut *mut RaNetwork,
) -> RaStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let spec = read_spec(widths, len)?;
        let params = init_kaiming(&spec, seed);
        write_out(out, RaNetwork { spec, adj: g.adj.clone(), params })
    })
}

/// Lower-bound witness network; `seed` drives the generic last layer.
///
/// # Safety
/// `widths` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_network_witness(
    g: *const RaGraph,
    widths: *const usize,
    len: usize,
    seed: u64,
    out: *mut *mut RaNetwork,
) -> RaStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let spec = read_spec(widths, len)?;
        let (params, _) = build_witness(&spec, &g.adj, seed)?;
        write_out(out, RaNetwork { spec, adj: g.adj.clone(), params })
    })
}

/// Network with parameters from JSON `{"weights": [...], "biases": [...]}`.
///
/// # Safety
/// `widths` must point to `len` values; `json` must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_network_from_json(
    g: *const RaGraph,
    widths: *const usize,
    len: usize,
    json: *const c_char,
    out: *mut *mut RaNetwork,
) -> RaStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let spec = read_spec(widths, len)?;
        let params: Parameters = serde_json::from_str(read_str(json, "json")?).map_err(Error::from)?;
        params.check(&spec)?;
        write_out(out, RaNetwork { spec, adj: g.adj.clone(), params })
    })
}

/// Parameters of `n` as JSON.
///
/// # Safety
/// `n` must be a live network handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_network_params_json(n: *const RaNetwork, out_json: *mut *mut c_char) -> RaStatus {
    guard(|| {
        let n = network_ref(n)?;
        write_string(out_json, serde_json::to_string(&n.params).map_err(Error::from)?)
    })
}

/// Length of the input vector (nodes × input features), or 0 for null.
///
/// # Safety
/// `n` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn ra_network_input_dim(n: *const RaNetwork) -> usize {
    n.as_ref().map_or(0, |n| n.spec.input_dim(n.adj.node_count()))
}

/// Number of neurons (nodes × hidden and output widths), or 0 for null.
///
/// # Safety
/// `n` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn ra_network_neuron_count(n: *const RaNetwork) -> usize {
    n.as_ref().map_or(0, |n| n.spec.neuron_count(n.adj.node_count()))
}

/// # Safety
/// `n` must be null or a network handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_network_free(n: *mut RaNetwork) {
    if !n.is_null() {
        drop(Box::from_raw(n));
    }
}

/// Activation pattern of the row-major input `x` (`nodes × N_0`): writes 1
/// (active) or 0 per neuron into `out_signs`, ordered by layer, node, feature.
///
/// # Safety
/// `x` must point to `x_len` values and `out_signs` to `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ra_activation_pattern(
    n: *const RaNetwork,
    x: *const f64,
    x_len: usize,
    out_signs: *mut u8,
    out_len: usize,
) -> RaStatus {
    guard(|| {
        let n = network_ref(n)?;
        let dim = n.spec.input_dim(n.adj.node_count());
        let neurons = n.spec.neuron_count(n.adj.node_count());
        if x_len != dim || out_len != neurons {
            return Err(Failure(
                RaStatus::InvalidArgument,
                format!("expected {dim} inputs and {neurons} outputs, got {x_len} and {out_len}"),
            ));
        }
        let x = read_slice(x, x_len, "x")?;
        if out_signs.is_null() {
            return Err(null("out_signs"));
        }
        let mut ev = Evaluator::new(&n.spec, &n.adj, &n.params)?;
        let mut pat = ActivationPattern::new(0);
        ev.pattern_into(x, 0.0, &mut pat);
        let out = std::slice::from_raw_parts_mut(out_signs, out_len);
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from(pat.is_active(i));
        }
        Ok(())
    })
}

/// Exact region count inside the box `[−box, box]^d`, as a decimal string.
///
/// # Safety
/// `n` must be a live network handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_exact_count(n: *const RaNetwork, bound: f64, out_count: *mut *mut c_char) -> RaStatus {
    guard(|| {
        let n = network_ref(n)?;
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Failure(RaStatus::InvalidArgument, format!("box must be positive, got {bound}")));
        }
        let c = exact_count_multi(&n.spec, &n.adj, &n.params, CountOptions::with_bound(bound))?;
        write_string(out_count, c.count.to_string())
    })
}

/// Monte Carlo estimate as JSON. `dist` is `normal:<sigma>` or
/// `uniform:<u>`; null runs every standard distribution with `samples` each.
///
/// # Safety
/// `n` must be a live network handle; `dist` must be null or NUL-terminated;
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_estimate_json(
    n: *const RaNetwork,
    dist: *const c_char,
    samples: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> RaStatus {
    guard(|| {
        let n = network_ref(n)?;
        let report = if dist.is_null() {
            standard_sweep_with(&n.spec, &n.adj, &n.params, seed, samples)?
        } else {
            let d: InputDistribution = read_str(dist, "dist")?.parse()?;
            estimate_regions(&n.spec, &n.adj, &n.params, &SamplingConfig::new(d, samples, seed))?
        };
        write_string(out_json, serde_json::to_string(&report).map_err(Error::from)?)
    })
}
