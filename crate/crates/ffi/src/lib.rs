//! C ABI for `riesz-lab`.
//!
//! Every function returns an [`RlStatus`]; results are written through out
//! pointers. On failure the message is kept per thread and can be copied out
//! with [`rl_last_error_message`]. Paths are opaque handles owned by the
//! caller and released with [`rl_path_free`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use riesz_lab::mc_lab::ks_two_sample;
use riesz_lab::riesz_core::{c_d_sigma, eta, mean_eta, riesz_composition_constant};
use riesz_lab::spectral::SpectralWeight;
use riesz_lab::stable_sim::sample_path;
use riesz_lab::variational::{
    collapse_time, ldp_rate_constant, lil_constant, polymer_growth_constant, solve_lattice, LatticeProblem,
    SolverOptions,
};
use riesz_lab::{LabError, Lane, QuadratureSpec, RieszParams, StableParams, StablePath};

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    Parameter = 1,
    Regime = 2,
    Singular = 3,
    Domain = 4,
    Resolution = 5,
    Range = 6,
    Window = 7,
    Coverage = 8,
    Convergence = 9,
    Replica = 10,
    Config = 11,
    Io = 12,
    NullPointer = 13,
    Panic = 14,
}

/// Opaque path handle.
pub struct RlPath {
    inner: StablePath,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &LabError) -> RlStatus {
    match e {
        LabError::Parameter(_) => RlStatus::Parameter,
        LabError::Regime(_) => RlStatus::Regime,
        LabError::Singular(_) => RlStatus::Singular,
        LabError::Domain(_) => RlStatus::Domain,
        LabError::Resolution(_) => RlStatus::Resolution,
        LabError::Range(_) => RlStatus::Range,
        LabError::Window(_) => RlStatus::Window,
        LabError::Coverage(_) => RlStatus::Coverage,
        LabError::Convergence { .. } => RlStatus::Convergence,
        LabError::Replica { .. } => RlStatus::Replica,
        LabError::Config(_) => RlStatus::Config,
        LabError::Io(_) => RlStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), RlStatus>>(f: F) -> RlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RlStatus::Panic
        }
    }
}

fn lab<T>(r: riesz_lab::Result<T>) -> Result<T, RlStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), RlStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(RlStatus::NullPointer);
    }
    Ok(())
}

unsafe fn write_out(out: *mut f64, v: f64) -> Result<(), RlStatus> {
    non_null(out, "output pointer")?;
    *out = v;
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Samples a path on `n` uniform steps of `[0, t]` from lane `(seed, stream)`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn rl_path_sample(
    d: usize,
    beta: f64,
    t: f64,
    n: usize,
    seed: u64,
    stream: u64,
    out: *mut *mut RlPath,
) -> RlStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = lab(StableParams::new(d, beta))?;
        let inner = lab(sample_path(&params, t, n, Lane::new(seed, stream)))?;
        *out = Box::into_raw(Box::new(RlPath { inner }));
        Ok(())
    })
}

/// Releases a path handle; null is ignored.
///
/// # Safety
/// `path` must come from [`rl_path_sample`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_path_free(path: *mut RlPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of steps of a path (0 for null).
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_path_steps(path: *const RlPath) -> usize {
    path.as_ref().map(|p| p.inner.steps()).unwrap_or(0)
}

/// Copies coordinate `axis` of the `steps + 1` samples into `buf`.
///
/// # Safety
/// `path` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_path_coordinates(path: *const RlPath, axis: usize, buf: *mut f64, len: usize) -> RlStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(buf, "buf")?;
        let p = &(*path).inner;
        if axis >= p.dim() || len < p.steps() + 1 {
            set_error("axis out of range or buffer too short".into());
            return Err(RlStatus::Parameter);
        }
        std::ptr::copy_nonoverlapping(p.coords()[axis].as_ptr(), buf, p.steps() + 1);
        Ok(())
    })
}

/// Riemann estimate of `η([0,t]²_<)` on the path.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_eta(path: *const RlPath, sigma: f64, mean_correction: bool, out: *mut f64) -> RlStatus {
    guard(|| {
        non_null(path, "path")?;
        let p = &(*path).inner;
        let rp = lab(RieszParams::new(*p.params(), sigma))?;
        let mut q = QuadratureSpec::default();
        q.mean_correction = mean_correction;
        let v = lab(eta(p, &rp, &q))?;
        write_out(out, v)
    })
}

/// Exact `E η([0,t]²_<)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_mean_eta(d: usize, beta: f64, sigma: f64, t: f64, out: *mut f64) -> RlStatus {
    guard(|| {
        let rp = lab(RieszParams::from_dims(d, beta, sigma))?;
        write_out(out, lab(mean_eta(&rp, t))?)
    })
}

/// `C_{d,σ}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_c_d_sigma(d: usize, sigma: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(c_d_sigma(d, sigma))?))
}

/// The composition constant C.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_composition_constant(d: usize, sigma: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(riesz_composition_constant(d, sigma))?))
}

/// Solves the lattice problem at period `m`; writes `ρ_{α,ε,M}` and
/// `(2π/M)^d ρ_{α,ε,M}`.
///
/// # Safety
/// Both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_solve_lattice(
    d: usize,
    beta: f64,
    sigma: f64,
    alpha: f64,
    epsilon: f64,
    m: f64,
    restarts: usize,
    seed: u64,
    out_value: *mut f64,
    out_continuum: *mut f64,
) -> RlStatus {
    guard(|| {
        non_null(out_value, "out_value")?;
        non_null(out_continuum, "out_continuum")?;
        let rp = lab(RieszParams::from_dims(d, beta, sigma))?;
        let sw = lab(SpectralWeight::new(rp, alpha, epsilon))?;
        let opts = SolverOptions {
            restarts,
            seed,
            ..SolverOptions::default()
        };
        let lp = lab(LatticeProblem::new(sw, m, opts))?;
        let sol = lab(solve_lattice(&lp))?;
        *out_value = sol.value;
        *out_continuum = sol.continuum_value;
        Ok(())
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rl_ks_two_sample(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out_statistic: *mut f64,
    out_p_value: *mut f64,
) -> RlStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out_statistic, "out_statistic")?;
        non_null(out_p_value, "out_p_value")?;
        let xs = std::slice::from_raw_parts(a, na);
        let ys = std::slice::from_raw_parts(b, nb);
        let r = lab(ks_two_sample(xs, ys))?;
        *out_statistic = r.statistic;
        *out_p_value = r.p_value;
        Ok(())
    })
}

/// Large-deviation rate constant of η.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_ldp_rate_constant(beta: f64, sigma: f64, rho: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(ldp_rate_constant(beta, sigma, rho))?))
}

/// Growth constant of the self-attracting polymer.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_polymer_growth_constant(beta: f64, sigma: f64, rho: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(polymer_growth_constant(beta, sigma, rho))?))
}

/// Law of the iterated logarithm constant.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_lil_constant(beta: f64, sigma: f64, rho: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(lil_constant(beta, sigma, rho))?))
}

/// Collapse time `1/ρ`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_collapse_time(rho: f64, out: *mut f64) -> RlStatus {
    guard(|| write_out(out, lab(collapse_time(rho))?))
}
