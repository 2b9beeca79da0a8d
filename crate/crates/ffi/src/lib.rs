//! C ABI over the contact-hj toolkit.
//!
//! Every function returns a `ChjStatus`; on failure the message is kept per
//! thread and read with `chj_last_error_message`. Handles are opaque and owned
//! by the caller, who releases them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use contact_hj::cli::{self, Args};
use contact_hj::expr::Expr;
use contact_hj::geometry::{self, shared, ContactSystem, DarbouxChart};
use contact_hj::refint::{self, Trajectory};
use contact_hj::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Unparsable expression or configuration.
    Config = 3,
    /// Singular system or solver without convergence.
    Numerical = 4,
    Io = 5,
    /// Output buffer shorter than the result.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// A contact Hamiltonian system in Darboux coordinates.
pub struct ChjSystem(ContactSystem);

/// A sampled trajectory: increasing times and one phase point per time.
pub struct ChjTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|err| *err.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> ChjStatus {
    match err {
        Error::Expr(_) | Error::Config(_) => ChjStatus::Config,
        Error::Precondition(_) => ChjStatus::InvalidArgument,
        Error::Singular(_) | Error::Convergence(_) => ChjStatus::Numerical,
        Error::Io(_) => ChjStatus::Io,
    }
}

struct Failure(ChjStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn fail<T>(status: ChjStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Run `body`, recording any error or panic for `chj_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ChjStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            ChjStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ChjStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return fail(ChjStatus::NullPointer, &format!("{what} is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .or_else(|_| fail(ChjStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return fail(ChjStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().map_or_else(
        || fail(ChjStatus::NullPointer, &format!("{what} is null")),
        Ok,
    )
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return fail(ChjStatus::NullPointer, "output buffer is null");
    }
    if out_len < values.len() {
        return fail(
            ChjStatus::BufferTooSmall,
            &format!(
                "output needs {} values, buffer holds {out_len}",
                values.len()
            ),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn point_len(system: &ContactSystem, len: usize) -> Result<(), Failure> {
    if len != system.dim() {
        return fail(
            ChjStatus::InvalidArgument,
            &format!("point has {len} coordinates, system has {}", system.dim()),
        );
    }
    Ok(())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn chj_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|err| {
        let msg = err.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a system from a Hamiltonian over `x1..xn, y1..yn, z` with `η = y_i dx^i + dz`.
///
/// # Safety
/// `hamiltonian` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chj_system_new(
    n: usize,
    hamiltonian: *const c_char,
    out: *mut *mut ChjSystem,
) -> ChjStatus {
    guard(|| {
        if out.is_null() {
            return fail(ChjStatus::NullPointer, "out is null");
        }
        let text = c_str(hamiltonian, "hamiltonian")?;
        let chart = DarbouxChart::new(n)?;
        let ham = Expr::parse(text, chart.names()).map_err(Error::from)?;
        let system = ContactSystem::new(chart, shared(ham))?;
        *out = Box::into_raw(Box::new(ChjSystem(system)));
        Ok(())
    })
}

/// Rescale the contact form to `gη` with `g` given over the chart coordinates.
///
/// # Safety
/// `system` must come from `chj_system_new`; `g` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn chj_system_set_conformal(
    system: *mut ChjSystem,
    factor: *const c_char,
) -> ChjStatus {
    guard(|| {
        let sys = system
            .as_mut()
            .map_or_else(|| fail(ChjStatus::NullPointer, "system is null"), Ok)?;
        let text = c_str(factor, "g")?;
        let factor = Expr::parse(text, sys.0.chart.names()).map_err(Error::from)?;
        sys.0 = sys.0.clone().with_conformal(shared(factor))?;
        Ok(())
    })
}

/// # Safety
/// `system` must be null or come from `chj_system_new`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn chj_system_free(system: *mut ChjSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Phase-space dimension `2n + 1`, or 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chj_system_dim(system: *const ChjSystem) -> usize {
    system.as_ref().map_or(0, |sys| sys.0.dim())
}

/// Contact Hamiltonian field at `point` (length `dim`) into `out`.
///
/// # Safety
/// `point` must hold `len` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn chj_contact_field(
    system: *const ChjSystem,
    point: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> ChjStatus {
    guard(|| {
        let sys = &handle(system, "system")?.0;
        point_len(sys, len)?;
        let v = geometry::contact_field(sys, slice(point, len, "point")?)?;
        write_out(v.as_slice(), out, out_len)
    })
}

/// Reeb field of the (possibly rescaled) contact form at `point`.
///
/// # Safety
/// As for `chj_contact_field`.
#[no_mangle]
pub unsafe extern "C" fn chj_reeb_field(
    system: *const ChjSystem,
    point: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> ChjStatus {
    guard(|| {
        let sys = &handle(system, "system")?.0;
        point_len(sys, len)?;
        let v = geometry::reeb_field(sys, slice(point, len, "point")?)?;
        write_out(v.as_slice(), out, out_len)
    })
}

/// Largest residual of the defining identities of the contact and Reeb fields at `point`.
///
/// # Safety
/// `point` must hold `len` values and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chj_identity_residual(
    system: *const ChjSystem,
    point: *const f64,
    len: usize,
    out: *mut f64,
) -> ChjStatus {
    guard(|| {
        let sys = &handle(system, "system")?.0;
        point_len(sys, len)?;
        let r = geometry::identity_residuals(sys, slice(point, len, "point")?)?;
        write_out(&[r.max()], out, 1)
    })
}

/// Fixed-step RK4 trajectory of the contact field from `start` over `[0, t_end]`.
///
/// # Safety
/// `start` must hold `len` values and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chj_rk4(
    system: *const ChjSystem,
    start: *const f64,
    len: usize,
    t_end: f64,
    step: f64,
    out: *mut *mut ChjTrajectory,
) -> ChjStatus {
    guard(|| {
        let sys = &handle(system, "system")?.0;
        point_len(sys, len)?;
        if out.is_null() {
            return fail(ChjStatus::NullPointer, "out is null");
        }
        let tr = refint::rk4(sys, slice(start, len, "start")?, t_end, step)?;
        *out = Box::into_raw(Box::new(ChjTrajectory(tr)));
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be null or a live handle, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn chj_trajectory_free(trajectory: *mut ChjTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chj_trajectory_len(trajectory: *const ChjTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |traj| traj.0.len())
}

/// Phase dimension of the samples, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chj_trajectory_dim(trajectory: *const ChjTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |traj| traj.0.dim())
}

/// Time and phase point of sample `index`.
///
/// # Safety
/// `time` must be valid and `out` hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn chj_trajectory_sample(
    trajectory: *const ChjTrajectory,
    index: usize,
    time: *mut f64,
    out: *mut f64,
    out_len: usize,
) -> ChjStatus {
    guard(|| {
        let tr = &handle(trajectory, "trajectory")?.0;
        if index >= tr.len() {
            return fail(
                ChjStatus::InvalidArgument,
                &format!("index {index} out of range for {} samples", tr.len()),
            );
        }
        write_out(&[tr.times[index]], time, 1)?;
        write_out(&tr.points[index], out, out_len)
    })
}

/// Largest componentwise distance between two trajectories, resampling `second` onto `first`.
///
/// # Safety
/// Both handles must be live and `max_abs` valid.
#[no_mangle]
pub unsafe extern "C" fn chj_trajectory_compare(
    first: *const ChjTrajectory,
    second: *const ChjTrajectory,
    max_abs: *mut f64,
) -> ChjStatus {
    guard(|| {
        let diff = refint::compare(&handle(first, "first")?.0, &handle(second, "second")?.0)?;
        write_out(&[diff.max_abs], max_abs, 1)
    })
}

/// Run a TOML configuration like the command line does. `out_dir` may be null
/// to keep the configured directory; `exit_code` receives the command's exit code.
///
/// # Safety
/// `config_path` must be NUL-terminated, `out_dir` null or NUL-terminated, and
/// `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn chj_run_config(
    config_path: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut i32,
) -> ChjStatus {
    guard(|| {
        if exit_code.is_null() {
            return fail(ChjStatus::NullPointer, "exit_code is null");
        }
        let config = PathBuf::from(c_str(config_path, "config_path")?);
        let out = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(c_str(out_dir, "out_dir")?))
        };
        *exit_code = cli::execute(&Args {
            config,
            task: Vec::new(),
            out,
            seed: None,
            tolerance: Vec::new(),
        });
        Ok(())
    })
}
