//! C ABI for the analysis library.
//!
//! Every function returns an [`AfxStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read back with
//! [`afx_last_error_message`]. Panics never cross the boundary.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use airdrop_forensics::flows::{weighted_cosine_distance, FeatureVector, Weights};
use airdrop_forensics::graphs::{
    attracting_components, degree_assortativity, reciprocity, AssortativityVariant, Digraph,
};
use airdrop_forensics::pipeline::{assemble_report, synth_to_dir, Pipeline, PipelineError, RunConfig, Stage};
use airdrop_forensics::synth::ScenarioSpec;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigInvalid = 3,
    MissingArtifact = 4,
    ValidationFailed = 5,
    /// The metric is undefined on this input (no edges, zero variance).
    Undefined = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfxStage {
    Ingest = 0,
    Graph = 1,
    Cluster = 2,
    Detect = 3,
    Eligibility = 4,
    Stats = 5,
    Report = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfxAssortativity {
    OutIn = 0,
    TotalTotal = 1,
}

/// Directed graph over nodes `0..n`.
pub struct AfxGraph(Digraph);

/// Pipeline bound to one run configuration.
pub struct AfxPipeline(Pipeline);

struct Failure(AfxStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::ConfigInvalid(_) => AfxStatus::ConfigInvalid,
            PipelineError::MissingArtifact { .. } => AfxStatus::MissingArtifact,
            PipelineError::Validation(_) => AfxStatus::ValidationFailed,
            PipelineError::Internal(_) => AfxStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AfxStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AfxStatus::Ok,
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
            AfxStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AfxStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AfxStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn afx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn afx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn afx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a graph from `m` edges `from[i] -> to[i]`. Self-loops and repeated
/// edges are dropped.
///
/// # Safety
/// `from` and `to` must point to `m` readable values (may be NULL when `m` is 0).
#[no_mangle]
pub unsafe extern "C" fn afx_graph_new(
    n: usize,
    from: *const u32,
    to: *const u32,
    m: usize,
    graph: *mut *mut AfxGraph,
) -> AfxStatus {
    guard(|| {
        let slot = out(graph, "graph")?;
        let (f, t) = if m == 0 {
            (&[][..], &[][..])
        } else {
            if from.is_null() || to.is_null() {
                return Err(null("edge array"));
            }
            (std::slice::from_raw_parts(from, m), std::slice::from_raw_parts(to, m))
        };
        if let Some(bad) = f.iter().chain(t).find(|v| **v as usize >= n) {
            return Err(invalid(format!("node {bad} out of range for {n} nodes")));
        }
        let g = Digraph::from_edges(n, f.iter().zip(t).map(|(a, b)| (*a as usize, *b as usize)));
        *slot = Box::into_raw(Box::new(AfxGraph(g)));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from [`afx_graph_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn afx_graph_free(graph: *mut AfxGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; `edges` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_graph_edge_count(graph: *const AfxGraph, edges: *mut usize) -> AfxStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        *out(edges, "edges")? = g.0.edge_count();
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_graph_reciprocity(graph: *const AfxGraph, value: *mut f64) -> AfxStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let slot = out(value, "value")?;
        *slot = reciprocity(&g.0).map_err(|e| Failure(AfxStatus::Undefined, e.to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_graph_assortativity(
    graph: *const AfxGraph,
    variant: AfxAssortativity,
    value: *mut f64,
) -> AfxStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let slot = out(value, "value")?;
        let v = match variant {
            AfxAssortativity::OutIn => AssortativityVariant::OutIn,
            AfxAssortativity::TotalTotal => AssortativityVariant::TotalTotal,
        };
        *slot = degree_assortativity(&g.0, v).map_err(|e| Failure(AfxStatus::Undefined, e.to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_graph_attracting_components(graph: *const AfxGraph, count: *mut usize) -> AfxStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        *out(count, "count")? = attracting_components(&g.0);
        Ok(())
    })
}

/// Weighted cosine distance between two operation sets given as bitmasks
/// (bit 0 upward: buy, sell, lp_add, lp_remove, stake, unstake, send, receive).
/// `weights` points to 8 positive values, or is NULL for uniform weights.
///
/// # Safety
/// `weights` must be NULL or point to 8 readable doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_cosine_distance(a: u8, b: u8, weights: *const f64, value: *mut f64) -> AfxStatus {
    guard(|| {
        let slot = out(value, "value")?;
        let w = if weights.is_null() {
            Weights::uniform()
        } else {
            let mut arr = [0.0; 8];
            arr.copy_from_slice(std::slice::from_raw_parts(weights, 8));
            Weights::new(arr).map_err(|e| invalid(e.to_string()))?
        };
        let d = weighted_cosine_distance(&FeatureVector::from_bits(a, w), &FeatureVector::from_bits(b, w))
            .map_err(|e| invalid(e.to_string()))?;
        *slot = d;
        Ok(())
    })
}

/// Generates a synthetic corpus from a JSON scenario into `dir`, along with
/// ground truth and a `run.toml` for [`afx_pipeline_open`].
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn afx_synth_write(spec_json: *const c_char, dir: *const c_char) -> AfxStatus {
    guard(|| {
        let spec: ScenarioSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)
            .map_err(|e| Failure(AfxStatus::ConfigInvalid, e.to_string()))?;
        synth_to_dir(&spec, &PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Opens a run configuration (TOML file).
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `pipeline` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_open(config_path: *const c_char, pipeline: *mut *mut AfxPipeline) -> AfxStatus {
    guard(|| {
        let slot = out(pipeline, "pipeline")?;
        let cfg = RunConfig::load(&PathBuf::from(str_arg(config_path, "config_path")?))?;
        *slot = Box::into_raw(Box::new(AfxPipeline(Pipeline::new(cfg)?)));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must come from [`afx_pipeline_open`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_free(pipeline: *mut AfxPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// # Safety
/// `pipeline` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_set_out_dir(pipeline: *mut AfxPipeline, dir: *const c_char) -> AfxStatus {
    guard(|| {
        let p = pipeline.as_mut().ok_or_else(|| null("pipeline"))?;
        p.0.config.out_dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_run_stage(pipeline: *const AfxPipeline, stage: AfxStage) -> AfxStatus {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        let s = match stage {
            AfxStage::Ingest => Stage::Ingest,
            AfxStage::Graph => Stage::Graph,
            AfxStage::Cluster => Stage::Cluster,
            AfxStage::Detect => Stage::Detect,
            AfxStage::Eligibility => Stage::Eligibility,
            AfxStage::Stats => Stage::Stats,
            AfxStage::Report => Stage::Report,
        };
        Ok(p.0.run_stage(s)?)
    })
}

/// # Safety
/// `pipeline` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_run_all(pipeline: *const AfxPipeline) -> AfxStatus {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        Ok(p.0.run_all()?)
    })
}

/// Report assembled from the stage artifacts, as JSON. Free the string with
/// [`afx_string_free`].
///
/// # Safety
/// `pipeline` must be a live handle; `json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn afx_pipeline_report_json(pipeline: *const AfxPipeline, json: *mut *mut c_char) -> AfxStatus {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        let slot = out(json, "json")?;
        let report = assemble_report(&p.0)?;
        let text = serde_json::to_string(&report).map_err(|e| Failure(AfxStatus::Internal, e.to_string()))?;
        *slot = CString::new(text).map_err(|e| Failure(AfxStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(s, AfxStatus::Panic);
        let msg = unsafe { CStr::from_ptr(afx_last_error_message()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
    }

    #[test]
    fn success_clears_last_error() {
        set_error("old".into());
        assert_eq!(guard(|| Ok(())), AfxStatus::Ok);
        assert!(afx_last_error_message().is_null());
    }
}
