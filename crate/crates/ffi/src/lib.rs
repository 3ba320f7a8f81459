//! C ABI for cocycle-lab.
//!
//! Objects cross the boundary as opaque handles created by `*_new_*`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`CocycleStatus`]; on failure the message is available through
//! [`cocycle_last_error`] on the same thread.

use cocycle_lab::arithmetic::dc1_membership;
use cocycle_lab::cocycle::{trace_closed_form, SchrodingerLoop};
use cocycle_lab::lyapunov::{herman_lower_bound, le_estimate, LeOptions};
use cocycle_lab::reduce::{cheap_trick_reduce, ReduceOptions, Reduction};
use cocycle_lab::rotation::rotation_number;
use cocycle_lab::{Error, Frequency, Potential};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CocycleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Unsupported = 4,
    Precondition = 5,
    Numerical = 6,
    Panic = 7,
}

impl From<&Error> for CocycleStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Config { .. } | Error::Io(_) => CocycleStatus::InvalidArgument,
            Error::StripViolation { .. } | Error::Domain(_) => CocycleStatus::Domain,
            Error::Unsupported(_) => CocycleStatus::Unsupported,
            Error::Precondition(_) | Error::NotElliptic { .. } | Error::Regularity { .. } => {
                CocycleStatus::Precondition
            }
            Error::Resonance { .. } | Error::Numerical(_) | Error::Consistency(_) => CocycleStatus::Numerical,
            Error::Stage { source, .. } => CocycleStatus::from(source.as_ref()),
        }
    }
}

/// A potential on the circle.
pub struct CocyclePotential(Potential);

/// A rotation frequency.
pub struct CocycleFrequency(Frequency);

/// Result of the reduction pipeline.
pub struct CocycleReduction(Reduction);

/// One row of the reduction ledger.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CocycleLedgerRow {
    pub step: usize,
    pub norm_phi_drift: f64,
    pub norm_z: f64,
    pub norm_f: f64,
    pub residual: f64,
}

/// Lyapunov exponent with its dispersion.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CocycleLe {
    pub value: f64,
    pub std_error: f64,
    pub convergence_gap: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> CocycleStatus
where
    F: FnOnce() -> Result<(), CocycleStatus>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CocycleStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            CocycleStatus::Panic
        }
    }
}

fn fail(e: Error) -> CocycleStatus {
    let s = CocycleStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(name: &str) -> CocycleStatus {
    set_error(format!("{name} is null"));
    CocycleStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, CocycleStatus> {
    // SAFETY: caller passes a handle from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(name))
}

unsafe fn write<T>(out: *mut T, v: T, name: &str) -> Result<(), CocycleStatus> {
    if out.is_null() {
        return Err(null(name));
    }
    // SAFETY: non-null and, per the contract, writable.
    unsafe { out.write(v) };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cocycle_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `K / (1 + 4 lambda sin^2(pi x))`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_potential_new_poisson_peak(
    height: f64,
    lambda: f64,
    out: *mut *mut CocyclePotential,
) -> CocycleStatus {
    guard(|| {
        let (v, _) = Potential::poisson_peak(height, lambda).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocyclePotential(v))), "out") }
    })
}

/// Smooth bump of height `K` supported on `(lo, hi)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_potential_new_peaky_bump(
    lo: f64,
    hi: f64,
    height: f64,
    sharpness: f64,
    out: *mut *mut CocyclePotential,
) -> CocycleStatus {
    guard(|| {
        let v = Potential::peaky_bump(lo, hi, height, sharpness).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocyclePotential(v))), "out") }
    })
}

/// Constant potential; `0` gives the free cocycle.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_potential_new_constant(value: f64, out: *mut *mut CocyclePotential) -> CocycleStatus {
    guard(|| {
        let v = Potential::constant(value).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocyclePotential(v))), "out") }
    })
}

/// Value of the potential at `x`.
///
/// # Safety
/// `v` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_potential_eval(v: *const CocyclePotential, x: f64, out: *mut f64) -> CocycleStatus {
    guard(|| {
        let v = unsafe { deref(v, "potential") }?;
        unsafe { write(out, v.0.eval(x), "out") }
    })
}

/// # Safety
/// `v` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cocycle_potential_free(v: *mut CocyclePotential) {
    if !v.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(v) });
    }
}

/// Reduced fraction `p/q`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_frequency_new_rational(
    p: u64,
    q: u64,
    out: *mut *mut CocycleFrequency,
) -> CocycleStatus {
    guard(|| {
        let f = Frequency::rational(p, q).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocycleFrequency(f))), "out") }
    })
}

/// Irrational frequency with continued-fraction denominators up to `cap`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_frequency_new_irrational(
    value: f64,
    cap: u64,
    out: *mut *mut CocycleFrequency,
) -> CocycleStatus {
    guard(|| {
        let f = Frequency::irrational(value, cap).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocycleFrequency(f))), "out") }
    })
}

/// `(sqrt(5) - 1)/2`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_frequency_new_golden(out: *mut *mut CocycleFrequency) -> CocycleStatus {
    guard(|| unsafe {
        write(
            out,
            Box::into_raw(Box::new(CocycleFrequency(Frequency::golden()))),
            "out",
        )
    })
}

/// # Safety
/// `f` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cocycle_frequency_free(f: *mut CocycleFrequency) {
    if !f.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(f) });
    }
}

/// Lyapunov exponent of `(alpha, S_{E - V})` on the circle `Im x = nu`.
///
/// # Safety
/// `v` and `alpha` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_le_estimate(
    v: *const CocyclePotential,
    energy: f64,
    nu: f64,
    alpha: *const CocycleFrequency,
    n: usize,
    phases: usize,
    seed: u64,
    out: *mut CocycleLe,
) -> CocycleStatus {
    guard(|| {
        let v = unsafe { deref(v, "potential") }?;
        let a = unsafe { deref(alpha, "alpha") }?;
        let le = le_estimate(&v.0, energy, nu, &a.0, &LeOptions { n, phases, seed }).map_err(fail)?;
        let r = CocycleLe {
            value: le.value,
            std_error: le.stderr,
            convergence_gap: le.convergence_gap,
        };
        unsafe { write(out, r, "out") }
    })
}

/// Fibered rotation number in `[0, 1/2]`.
///
/// # Safety
/// `v` and `alpha` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_rotation_number(
    v: *const CocyclePotential,
    energy: f64,
    alpha: *const CocycleFrequency,
    n: usize,
    out: *mut f64,
) -> CocycleStatus {
    guard(|| {
        let v = unsafe { deref(v, "potential") }?;
        let a = unsafe { deref(alpha, "alpha") }?;
        let r = rotation_number(&v.0, energy, &a.0, n, 0.0, 0.0).map_err(fail)?;
        unsafe { write(out, r.rho, "out") }
    })
}

/// Subharmonic lower bound on the exponent of the analytic peak, `|E| > 2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_herman_bound(height: f64, lambda: f64, energy: f64, out: *mut f64) -> CocycleStatus {
    guard(|| {
        let b = herman_lower_bound(height, lambda, energy).map_err(fail)?;
        unsafe { write(out, b.value, "out") }
    })
}

/// Closed-form trace of the q-step product at a rational frequency.
///
/// # Safety
/// `v` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_qstep_trace(
    v: *const CocyclePotential,
    energy: f64,
    q: u64,
    x: f64,
    out: *mut f64,
) -> CocycleStatus {
    guard(|| {
        let v = unsafe { deref(v, "potential") }?;
        let t = trace_closed_form(&v.0, energy, q, x).map_err(fail)?;
        unsafe { write(out, t.value, "out") }
    })
}

/// Whether `|alpha - k/l| >= eta / l^sigma` holds for all `l <= cap`.
///
/// # Safety
/// `alpha` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_dc1_member(
    alpha: *const CocycleFrequency,
    eta: f64,
    sigma: f64,
    cap: u64,
    out: *mut bool,
) -> CocycleStatus {
    guard(|| {
        let a = unsafe { deref(alpha, "alpha") }?;
        let c = dc1_membership(&a.0, eta, sigma, cap).map_err(fail)?;
        unsafe { write(out, c.is_member(), "out") }
    })
}

/// Conjugates `(alpha, S_{E - V})` towards a constant rotation using the
/// exact normal form at `p/q`, `j_max` inductive steps and default options.
///
/// # Safety
/// `v` and `alpha` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduce(
    v: *const CocyclePotential,
    energy: f64,
    alpha: *const CocycleFrequency,
    p: u64,
    q: u64,
    j_max: usize,
    tolerance: f64,
    out: *mut *mut CocycleReduction,
) -> CocycleStatus {
    guard(|| {
        let v = unsafe { deref(v, "potential") }?;
        let a = unsafe { deref(alpha, "alpha") }?;
        let lp = SchrodingerLoop {
            potential: &v.0,
            energy,
        };
        let r = cheap_trick_reduce(&lp, &a.0, p, q, j_max, tolerance, &ReduceOptions::default()).map_err(fail)?;
        unsafe { write(out, Box::into_raw(Box::new(CocycleReduction(r))), "out") }
    })
}

/// Final conjugacy residual on the construction grid.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduction_residual(r: *const CocycleReduction, out: *mut f64) -> CocycleStatus {
    guard(|| {
        let r = unsafe { deref(r, "reduction") }?;
        unsafe { write(out, r.0.final_residual, "out") }
    })
}

/// Angle of the constant rotation reached.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduction_angle(r: *const CocycleReduction, out: *mut f64) -> CocycleStatus {
    guard(|| {
        let r = unsafe { deref(r, "reduction") }?;
        unsafe { write(out, r.0.theta0, "out") }
    })
}

/// Number of ledger rows (initial state plus one per step).
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduction_ledger_len(r: *const CocycleReduction) -> usize {
    unsafe { r.as_ref() }.map_or(0, |r| r.0.ledger.len())
}

/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduction_ledger_row(
    r: *const CocycleReduction,
    index: usize,
    out: *mut CocycleLedgerRow,
) -> CocycleStatus {
    guard(|| {
        let r = unsafe { deref(r, "reduction") }?;
        let row = r.0.ledger.get(index).ok_or_else(|| {
            fail(Error::Parameter(format!(
                "ledger index {index} out of range {}",
                r.0.ledger.len()
            )))
        })?;
        let c = CocycleLedgerRow {
            step: row.step,
            norm_phi_drift: row.norm_phi_drift,
            norm_z: row.norm_z,
            norm_f: row.norm_f,
            residual: row.residual,
        };
        unsafe { write(out, c, "out") }
    })
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cocycle_reduction_free(r: *mut CocycleReduction) {
    if !r.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(r) });
    }
}
