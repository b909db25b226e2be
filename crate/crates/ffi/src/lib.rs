//! C ABI for the quench toolkit.
//!
//! Objects are exposed as opaque handles created by `*_new` / `*_prepare`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`QuenchStatus`]; on failure a message is available from
//! [`quench_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quench::harness::{run_job, JobConfig};
use quench::prep::{product_state, sample_beta};
use quench::statevec::{evolve_diagonal, measurement_distribution};
use quench::{Architecture, Error, IsingCouplings, Lattice, ProbTable, RandomStream};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuenchStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TooLarge = 3,
    BufferTooSmall = 4,
    Runtime = 5,
    Panic = 6,
}

/// Lattice geometry for one architecture.
pub struct QuenchLattice {
    inner: Lattice,
}

/// Output distribution of one prepared and quenched resource state.
pub struct QuenchState {
    table: ProbTable,
    beta: CString,
}

/// Serialized report of a harness job.
pub struct QuenchReport {
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> QuenchStatus {
    match err {
        Error::TooLarge { .. } => QuenchStatus::TooLarge,
        e if e.is_validation() => QuenchStatus::InvalidArgument,
        _ => QuenchStatus::Runtime,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (QuenchStatus, String)>) -> QuenchStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QuenchStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QuenchStatus::Panic
        }
    }
}

fn lib<T>(r: quench::Result<T>) -> Result<T, (QuenchStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (QuenchStatus, String) {
    (QuenchStatus::NullPointer, format!("{name} is null"))
}

fn arch_of(code: u32) -> Result<Architecture, (QuenchStatus, String)> {
    match code {
        1 => Ok(Architecture::I),
        2 => Ok(Architecture::II),
        3 => Ok(Architecture::III),
        _ => Err((QuenchStatus::InvalidArgument, format!("unknown architecture {code}"))),
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn quench_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn quench_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a lattice. `arch` is 1, 2 or 3.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn quench_lattice_new(
    arch: u32,
    rows: usize,
    cols: usize,
    out: *mut *mut QuenchLattice,
) -> QuenchStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(Lattice::build(arch_of(arch)?, rows, cols))?;
        *out = Box::into_raw(Box::new(QuenchLattice { inner }));
        Ok(())
    })
}

/// # Safety
/// `lattice` must be null or a handle from [`quench_lattice_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quench_lattice_free(lattice: *mut QuenchLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Number of qubits on the lattice, or 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn quench_lattice_n_sites(lattice: *const QuenchLattice) -> usize {
    lattice.as_ref().map_or(0, |l| l.inner.n_sites())
}

/// Sample preparation angles from `seed`, quench and compute the exact
/// measurement distribution.
///
/// # Safety
/// `lattice` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn quench_state_prepare(
    lattice: *const QuenchLattice,
    seed: u64,
    out: *mut *mut QuenchState,
) -> QuenchStatus {
    guard(|| {
        let lattice = &lattice.as_ref().ok_or_else(|| null("lattice"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let beta = lib(sample_beta(lattice.arch, lattice, &RandomStream::new(seed)))?;
        let psi = lib(product_state(&beta, lattice))?;
        let psi = lib(evolve_diagonal(&psi, &IsingCouplings::from_lattice(lattice), lattice))?;
        let table = lib(measurement_distribution(&psi, lattice))?;
        let beta = CString::new(beta.bitstring()).unwrap_or_default();
        *out = Box::into_raw(Box::new(QuenchState { table, beta }));
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle from [`quench_state_prepare`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quench_state_free(state: *mut QuenchState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of outcome probabilities (2 to the number of qubits), or 0 for null.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn quench_state_len(state: *const QuenchState) -> usize {
    state.as_ref().map_or(0, |s| s.table.len())
}

/// Preparation-angle bits as a NUL-terminated string owned by the handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn quench_state_beta(state: *const QuenchState) -> *const c_char {
    state.as_ref().map_or(ptr::null(), |s| s.beta.as_ptr())
}

/// Copy the outcome probabilities (little-endian outcome index) into `buf`.
///
/// # Safety
/// `state` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn quench_state_probabilities(
    state: *const QuenchState,
    buf: *mut f64,
    len: usize,
) -> QuenchStatus {
    guard(|| {
        let table = &state.as_ref().ok_or_else(|| null("state"))?.table;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < table.len() {
            return Err((
                QuenchStatus::BufferTooSmall,
                format!("buffer holds {len}, need {}", table.len()),
            ));
        }
        ptr::copy_nonoverlapping(table.probs.as_ptr(), buf, table.len());
        Ok(())
    })
}

/// Draw `shots` outcome indices from the distribution using `seed`.
///
/// # Safety
/// `state` must be a live handle and `buf` valid for `shots` values.
#[no_mangle]
pub unsafe extern "C" fn quench_state_sample(
    state: *const QuenchState,
    seed: u64,
    shots: usize,
    buf: *mut u64,
) -> QuenchStatus {
    guard(|| {
        let table = &state.as_ref().ok_or_else(|| null("state"))?.table;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let idx = lib(table.sample_indices(shots, &RandomStream::new(seed)))?;
        for (k, v) in idx.into_iter().enumerate() {
            *buf.add(k) = v as u64;
        }
        Ok(())
    })
}

/// Run a harness job described by a JSON configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn quench_run_job(config_json: *const c_char, out: *mut *mut QuenchReport) -> QuenchStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| (QuenchStatus::InvalidArgument, "config is not UTF-8".to_string()))?;
        let cfg = JobConfig::from_json(text).map_err(|e| (QuenchStatus::InvalidArgument, e.to_string()))?;
        let report = lib(run_job(&cfg))?;
        let json = serde_json_string(&report)?;
        *out = Box::into_raw(Box::new(QuenchReport { json }));
        Ok(())
    })
}

fn serde_json_string(report: &quench::harness::RunReport) -> Result<CString, (QuenchStatus, String)> {
    let text = lib(report.to_json())?;
    CString::new(text).map_err(|e| (QuenchStatus::Runtime, e.to_string()))
}

/// Report as a NUL-terminated JSON string owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn quench_report_json(report: *const QuenchReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must be null or a handle from [`quench_run_job`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quench_report_free(report: *mut QuenchReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
