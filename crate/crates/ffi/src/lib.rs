//! C ABI over `kfp-core`.
//!
//! Every function returns a [`KfpStatus`]; results come back through out
//! pointers. Objects are opaque heap handles released with their `_free`
//! function. After a non-zero status, [`kfp_last_error`] describes the failure
//! on the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;

use kfp_core::analysis::free_norm_1_to_inf;
use kfp_core::kernels::{maxwellian_sqrt, time_profiles};
use kfp_core::phase_space::{lp_norm, pairing, read_field, write_field, Axis, Field, PhaseGrid};
use kfp_core::potential::Potential;
use kfp_core::propagator::{free_step, split_step, Backend, FreeStepper, Interpolation, PropagatorPlan, Splitting};
use kfp_core::Error;

pub const KFP_BACKEND_FOURIER_FACTORIZED: u32 = 0;
pub const KFP_BACKEND_DIRECT_KERNEL: u32 = 1;

pub const KFP_SPLITTING_STRANG: u32 = 0;
pub const KFP_SPLITTING_LIE: u32 = 1;

pub const KFP_INTERPOLATION_LINEAR: u32 = 0;
pub const KFP_INTERPOLATION_CUBIC: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KfpStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Capability = 3,
    Grid = 4,
    Data = 5,
    Config = 6,
    Format = 7,
    Io = 8,
    BufferSize = 9,
    Panic = 10,
}

/// Scalar time functions of the free kernel at one time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KfpTimeProfile {
    pub t: f64,
    pub sigma: f64,
    pub theta: f64,
    pub gamma: f64,
    pub omega: f64,
}

/// Opaque phase-space grid.
pub struct KfpGrid(PhaseGrid);

/// Opaque complex field on a grid.
pub struct KfpField(Field);

/// Opaque splitting propagator: a plan, a potential and a prepared free step.
pub struct KfpPropagator {
    grid: PhaseGrid,
    potential: Potential,
    plan: PropagatorPlan,
    free: FreeStepper,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(KfpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => KfpStatus::Domain,
            Error::Capability(_) => KfpStatus::Capability,
            Error::Grid(_) => KfpStatus::Grid,
            Error::Data(_) => KfpStatus::Data,
            Error::Config(_) => KfpStatus::Config,
            Error::Format(_) => KfpStatus::Format,
            Error::Io(_) => KfpStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(KfpStatus::NullPointer, format!("{what} is null"))
}

fn domain(msg: impl Into<String>) -> Failure {
    Failure(KfpStatus::Domain, msg.into())
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> KfpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            KfpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            KfpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| domain("path is not valid UTF-8"))
}

fn backend(code: u32) -> Result<Backend, Failure> {
    match code {
        KFP_BACKEND_FOURIER_FACTORIZED => Ok(Backend::FourierFactorized),
        KFP_BACKEND_DIRECT_KERNEL => Ok(Backend::DirectKernel),
        other => Err(domain(format!("unknown backend code {other}"))),
    }
}

fn potential(n: usize, c: f64, rho: f64) -> Result<Potential, Failure> {
    if c == 0.0 {
        Ok(Potential::zero(n))
    } else {
        Ok(Potential::inverse_power(n, c, rho)?)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kfp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next `kfp_` call on the same thread.
#[no_mangle]
pub extern "C" fn kfp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_time_profiles(t: f64, out: *mut KfpTimeProfile) -> KfpStatus {
    guard(|| {
        let p = time_profiles(t)?;
        let value = KfpTimeProfile {
            t: p.t,
            sigma: p.sigma,
            theta: p.theta,
            gamma: p.gamma,
            omega: p.omega,
        };
        write_out(out, value, "out")
    })
}

/// Exact `1 -> inf` norm of the free semigroup in dimension `n`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_free_norm_1_to_inf(t: f64, n: usize, out: *mut f64) -> KfpStatus {
    guard(|| write_out(out, free_norm_1_to_inf(t, n)?, "out"))
}

/// Uniform grid in dimension `n`, the same axis in every x and every v direction.
///
/// # Safety
/// `out` must be valid for one write; the handle is released with [`kfp_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn kfp_grid_new(
    n: usize,
    x_half_width: f64,
    x_points: usize,
    v_half_width: f64,
    v_points: usize,
    out: *mut *mut KfpGrid,
) -> KfpStatus {
    guard(|| {
        let g = PhaseGrid::uniform(
            n,
            Axis::new(x_half_width, x_points)?,
            Axis::new(v_half_width, v_points)?,
        )?;
        write_out(out, Box::into_raw(Box::new(KfpGrid(g))), "out")
    })
}

/// # Safety
/// `grid` must be null or a handle from [`kfp_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kfp_grid_free(grid: *mut KfpGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of grid cells, 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kfp_grid_len(grid: *const KfpGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Field from row-major samples; `im` may be null for a real field.
///
/// # Safety
/// `re` (and `im` unless null) must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_from_values(
    grid: *const KfpGrid,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut KfpField,
) -> KfpStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        if re.is_null() {
            return Err(null("re"));
        }
        if len != g.len() {
            return Err(Failure(
                KfpStatus::BufferSize,
                format!("buffer holds {len} values, grid has {}", g.len()),
            ));
        }
        let re = std::slice::from_raw_parts(re, len);
        let values = if im.is_null() {
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect()
        } else {
            let im = std::slice::from_raw_parts(im, len);
            re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
        };
        let f = Field::from_values(g, values)?;
        write_out(out, Box::into_raw(Box::new(KfpField(f))), "out")
    })
}

/// Square-root Maxwellian of `c <x>^-rho` on `grid`; `c = 0` gives the free one.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_maxwellian(
    grid: *const KfpGrid,
    c: f64,
    rho: f64,
    out: *mut *mut KfpField,
) -> KfpStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        let pot = potential(g.dim(), c, rho)?;
        let f = Field::from_fn(g, |x, v| maxwellian_sqrt(x, v, &pot).unwrap_or(0.0));
        write_out(out, Box::into_raw(Box::new(KfpField(f))), "out")
    })
}

/// # Safety
/// `field` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_free(field: *mut KfpField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of samples, 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_len(field: *const KfpField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copies the samples out; `im` may be null to skip imaginary parts.
///
/// # Safety
/// `re` (and `im` unless null) must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_values(field: *const KfpField, re: *mut f64, im: *mut f64, len: usize) -> KfpStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        if re.is_null() {
            return Err(null("re"));
        }
        let values = f.values();
        if len != values.len() {
            return Err(Failure(
                KfpStatus::BufferSize,
                format!("buffer holds {len} values, field has {}", values.len()),
            ));
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        for (dst, z) in re.iter_mut().zip(values) {
            *dst = z.re;
        }
        if !im.is_null() {
            let im = std::slice::from_raw_parts_mut(im, len);
            for (dst, z) in im.iter_mut().zip(values) {
                *dst = z.im;
            }
        }
        Ok(())
    })
}

/// Discrete `L^p` norm; pass `INFINITY` for the grid maximum.
///
/// # Safety
/// `field` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_norm(field: *const KfpField, p: f64, out: *mut f64) -> KfpStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        write_out(out, lp_norm(f, p)?, "out")
    })
}

/// Real part of the discrete pairing `<a, b>`.
///
/// # Safety
/// `a`, `b` must be live handles and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_pairing(a: *const KfpField, b: *const KfpField, out: *mut f64) -> KfpStatus {
    guard(|| {
        let z = pairing(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        write_out(out, z.re, "out")
    })
}

/// Reads a binary field file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_read(path: *const c_char, out: *mut *mut KfpField) -> KfpStatus {
    guard(|| {
        let f = read_field(path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(KfpField(f))), "out")
    })
}

/// Writes a binary field file atomically.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kfp_field_write(field: *const KfpField, path: *const c_char) -> KfpStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        Ok(write_field(path_arg(path)?, f)?)
    })
}

/// One free step `e^{-t P0}` into a new field.
///
/// # Safety
/// `field` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_free_step(
    field: *const KfpField,
    t: f64,
    backend_code: u32,
    out: *mut *mut KfpField,
) -> KfpStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        let g = free_step(f, t, backend(backend_code)?)?;
        write_out(out, Box::into_raw(Box::new(KfpField(g))), "out")
    })
}

/// Splitting propagator for the potential `c <x>^-rho` (`c = 0` for none).
///
/// # Safety
/// `grid` must be a live handle and `out` valid for one write; release the
/// result with [`kfp_propagator_free`].
#[no_mangle]
pub unsafe extern "C" fn kfp_propagator_new(
    grid: *const KfpGrid,
    dt: f64,
    c: f64,
    rho: f64,
    backend_code: u32,
    splitting_code: u32,
    interpolation_code: u32,
    out: *mut *mut KfpPropagator,
) -> KfpStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        let splitting = match splitting_code {
            KFP_SPLITTING_STRANG => Splitting::Strang,
            KFP_SPLITTING_LIE => Splitting::Lie,
            other => return Err(domain(format!("unknown splitting code {other}"))),
        };
        let interpolation = match interpolation_code {
            KFP_INTERPOLATION_LINEAR => Interpolation::Linear,
            KFP_INTERPOLATION_CUBIC => Interpolation::Cubic,
            other => return Err(domain(format!("unknown interpolation code {other}"))),
        };
        let plan = PropagatorPlan::new(dt)?
            .with_backend(backend(backend_code)?)
            .with_splitting(splitting)
            .with_interpolation(interpolation);
        plan.validate(g)?;
        let prop = KfpPropagator {
            grid: g.clone(),
            potential: potential(g.dim(), c, rho)?,
            free: FreeStepper::new(g, dt, plan.backend)?,
            plan,
        };
        write_out(out, Box::into_raw(Box::new(prop)), "out")
    })
}

/// # Safety
/// `prop` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kfp_propagator_free(prop: *mut KfpPropagator) {
    if !prop.is_null() {
        drop(Box::from_raw(prop));
    }
}

/// Advances `field` by `steps` splitting steps into a new field. The optional
/// `shifted_out` receives the mass the drift pushed out of the velocity box.
///
/// # Safety
/// `prop` and `field` must be live handles, `out` valid for one write and
/// `shifted_out` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kfp_propagator_advance(
    prop: *const KfpPropagator,
    field: *const KfpField,
    steps: usize,
    out: *mut *mut KfpField,
    shifted_out: *mut f64,
) -> KfpStatus {
    guard(|| {
        let p = deref(prop, "propagator")?;
        let f = &deref(field, "field")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if f.grid() != &p.grid {
            return Err(Failure(
                KfpStatus::Grid,
                "field grid differs from the propagator grid".into(),
            ));
        }
        let mut u = f.clone();
        let mut lost = 0.0;
        for _ in 0..steps {
            let (next, report) = split_step(&u, &p.potential, &p.plan, &p.free)?;
            u = next;
            lost += report.shifted_out_mass;
        }
        if !shifted_out.is_null() {
            shifted_out.write(lost);
        }
        write_out(out, Box::into_raw(Box::new(KfpField(u))), "out")
    })
}

/// Static lowercase name of a status code; `"unknown"` outside the enum.
#[no_mangle]
pub extern "C" fn kfp_status_name(status: i32) -> *const c_char {
    let s: &'static str = match status {
        0 => "ok\0",
        1 => "null_pointer\0",
        2 => "domain\0",
        3 => "capability\0",
        4 => "grid\0",
        5 => "data\0",
        6 => "config\0",
        7 => "format\0",
        8 => "io\0",
        9 => "buffer_size\0",
        10 => "panic\0",
        _ => "unknown\0",
    };
    s.as_ptr().cast()
}
