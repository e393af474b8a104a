//! C interface to `exemplar-ps`.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns an [`EpsStatus`]; on failure the
//! message is available from [`eps_last_error`] until the next failing call
//! on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use exemplar_ps::brdf::{BrdfDictionary, HalfDiffGrid, ParametricSweep, Vec3};
use exemplar_ps::geometry::{CandidatePyramid, DEFAULT_SCHEDULE};
use exemplar_ps::normals::{match_normal_c2f, refine_normal, RefineOptions, SearchOptions};
use exemplar_ps::reflectance::{fit_pixel_sparse, LassoOptions};
use exemplar_ps::render::{render_exemplar, ExemplarBank, LightingRig};
use exemplar_ps::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Format = 3,
    Numeric = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

pub struct EpsDictionary(Arc<BrdfDictionary>);
pub struct EpsRig(LightingRig);
pub struct EpsBank(ExemplarBank);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EpsStatus {
    match e {
        Error::InvalidArgument(_) => EpsStatus::InvalidArgument,
        Error::Config(_) => EpsStatus::Config,
        Error::Format(_) => EpsStatus::Format,
        Error::Numeric(_) | Error::GradientUnavailable(_) => EpsStatus::Numeric,
        Error::Io(_) => EpsStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EpsStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            EpsStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            EpsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Lib(Error::InvalidArgument("path is not UTF-8".into())))
}

fn invalid(msg: &str) -> Failure {
    Failure::Lib(Error::InvalidArgument(msg.into()))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default 20-atom parametric dictionary on the grid with divisor `r`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_default(divisor: u32, out: *mut *mut EpsDictionary) -> EpsStatus {
    guard(|| {
        let grid = HalfDiffGrid::with_divisor(divisor as usize)?;
        let d = BrdfDictionary::from_sweep(&ParametricSweep::default(), grid)?;
        store(out, EpsDictionary(Arc::new(d)))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_load(path: *const c_char, out: *mut *mut EpsDictionary) -> EpsStatus {
    guard(|| {
        let d = BrdfDictionary::load(c_path(path)?)?;
        store(out, EpsDictionary(Arc::new(d)))
    })
}

/// # Safety
/// `dict` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_save(dict: *const EpsDictionary, path: *const c_char) -> EpsStatus {
    guard(|| {
        deref(dict, "dict")?.0.save(c_path(path)?)?;
        Ok(())
    })
}

/// Number of atoms, or 0 for a null handle.
///
/// # Safety
/// `dict` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_len(dict: *const EpsDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dict` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_channels(dict: *const EpsDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.0.channels())
}

/// # Safety
/// `dict` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_dictionary_free(dict: *mut EpsDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Spiral rig of `q` unit-intensity lights with the view along +z.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eps_rig_hemisphere(q: usize, out: *mut *mut EpsRig) -> EpsStatus {
    guard(|| store(out, EpsRig(LightingRig::hemisphere(q)?)))
}

/// Rig from `q` light directions (`3q` doubles, normalized on input) and
/// optional per-light intensities (null for all ones).
///
/// # Safety
/// `xyz` must hold `3q` doubles; `intensities` null or `q` doubles.
#[no_mangle]
pub unsafe extern "C" fn eps_rig_new(
    xyz: *const f64,
    intensities: *const f64,
    q: usize,
    out: *mut *mut EpsRig,
) -> EpsStatus {
    guard(|| {
        let xyz = slice(xyz, 3 * q, "xyz")?;
        let lights: Vec<Vec3> = xyz.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2]).normalize()).collect();
        let intens = if intensities.is_null() { vec![1.0; q] } else { slice(intensities, q, "intensities")?.to_vec() };
        store(out, EpsRig(LightingRig::new(lights, intens, Vec3::z())?))
    })
}

/// # Safety
/// `rig` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_rig_len(rig: *const EpsRig) -> usize {
    rig.as_ref().map_or(0, |r| r.0.q())
}

/// # Safety
/// `rig` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_rig_free(rig: *mut EpsRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// Renders the exemplar bank. `schedule` lists candidate spacings in
/// degrees, coarse to fine; pass null to use the default five levels.
///
/// # Safety
/// Handles must come from this library; `schedule` null or `levels` doubles.
#[no_mangle]
pub unsafe extern "C" fn eps_bank_build(
    dict: *const EpsDictionary,
    rig: *const EpsRig,
    schedule: *const f64,
    levels: usize,
    out: *mut *mut EpsBank,
) -> EpsStatus {
    guard(|| {
        let d = deref(dict, "dict")?;
        let r = deref(rig, "rig")?;
        let sched = if schedule.is_null() { DEFAULT_SCHEDULE.to_vec() } else { slice(schedule, levels, "schedule")?.to_vec() };
        let pyramid = CandidatePyramid::new(&sched, &Vec3::z())?;
        store(out, EpsBank(ExemplarBank::build(d.0.clone(), pyramid, r.0.clone())?))
    })
}

/// # Safety
/// `bank` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eps_bank_free(bank: *mut EpsBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Estimates one pixel's normal from its profile (`C·Q` values, channel-major).
///
/// Writes the unit normal to `normal_out[0..3]`, the abundances to
/// `abundances_out` (`C·M` entries, may be null when `abundances_len` is 0)
/// and the residual norm to `residual_out` (may be null).
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn eps_estimate_normal(
    bank: *const EpsBank,
    profile: *const f64,
    profile_len: usize,
    refine: c_int,
    normal_out: *mut f64,
    abundances_out: *mut f64,
    abundances_len: usize,
    residual_out: *mut f64,
) -> EpsStatus {
    guard(|| {
        let bank = &deref(bank, "bank")?.0;
        let profile = slice(profile, profile_len, "profile")?;
        if profile_len != bank.channels() * bank.q() {
            return Err(invalid("profile length must be channels * lights"));
        }
        let opts = SearchOptions::default();
        let mut est = match_normal_c2f(profile, bank, &opts)?;
        if refine != 0 {
            est = refine_normal(profile, &est, bank, &RefineOptions::default(), &opts)?;
        }
        let n = slice_mut(normal_out, 3, "normal_out")?;
        n.copy_from_slice(est.normal.as_slice());
        if abundances_len > 0 {
            if abundances_len != est.abundances.len() {
                return Err(invalid("abundance buffer must hold channels * atoms values"));
            }
            slice_mut(abundances_out, abundances_len, "abundances_out")?.copy_from_slice(&est.abundances);
        }
        if let Some(r) = residual_out.as_mut() {
            *r = est.residual;
        }
        Ok(())
    })
}

/// Non-negative sparse reflectance fit at a known normal.
///
/// # Safety
/// `normal` must hold 3 doubles, `profile` `C·Q` and `out` `C·M`.
#[no_mangle]
pub unsafe extern "C" fn eps_fit_pixel(
    dict: *const EpsDictionary,
    rig: *const EpsRig,
    normal: *const f64,
    profile: *const f64,
    profile_len: usize,
    lambda: f64,
    out: *mut f64,
    out_len: usize,
) -> EpsStatus {
    guard(|| {
        let d = &deref(dict, "dict")?.0;
        let r = &deref(rig, "rig")?.0;
        let n = slice(normal, 3, "normal")?;
        let profile = slice(profile, profile_len, "profile")?;
        if profile_len != d.channels() * r.q() || out_len != d.channels() * d.len() {
            return Err(invalid("buffer lengths must be channels * lights and channels * atoms"));
        }
        let b = render_exemplar(d, &Vec3::new(n[0], n[1], n[2]), r)?;
        let c = fit_pixel_sparse(profile, &b, lambda, &LassoOptions::default())?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&c);
        Ok(())
    })
}

/// Renders the profile `B(n)·c` (`C·Q` values) for abundances `c` (`C·M`).
///
/// # Safety
/// `normal` must hold 3 doubles, `coeffs` `C·M` and `out` `C·Q`.
#[no_mangle]
pub unsafe extern "C" fn eps_render_profile(
    dict: *const EpsDictionary,
    rig: *const EpsRig,
    normal: *const f64,
    coeffs: *const f64,
    coeffs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> EpsStatus {
    guard(|| {
        let d = &deref(dict, "dict")?.0;
        let r = &deref(rig, "rig")?.0;
        let n = slice(normal, 3, "normal")?;
        if coeffs_len != d.channels() * d.len() || out_len != d.channels() * r.q() {
            return Err(invalid("buffer lengths must be channels * atoms and channels * lights"));
        }
        let c = slice(coeffs, coeffs_len, "coeffs")?;
        let b = render_exemplar(d, &Vec3::new(n[0], n[1], n[2]), r)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&b.apply(c));
        Ok(())
    })
}
