//! C ABI over the dilute-bose library.
//!
//! Every function returns a `DbStatus`. On failure the message is kept per
//! thread and can be read with `db_last_error`. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dilute_bose::bogoliubov::{self, BogoliubovCoefficients};
use dilute_bose::energy::{self, EnergyCutoffs};
use dilute_bose::potentials::RadialPotential;
use dilute_bose::scattering::{self, ScatteringSolution};
use dilute_bose::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Precondition = 3,
    DivergentTransform = 4,
    Quadrature = 5,
    NotBracketed = 6,
    Solver = 7,
    HyperbolicDomain = 8,
    Provenance = 9,
    Budget = 10,
    DegenerateFit = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 99,
}

impl From<&Error> for DbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput { .. } => DbStatus::InvalidInput,
            Error::Precondition { .. } => DbStatus::Precondition,
            Error::DivergentTransform(_) => DbStatus::DivergentTransform,
            Error::Quadrature(_) => DbStatus::Quadrature,
            Error::NotBracketed(_) => DbStatus::NotBracketed,
            Error::Solver(_) => DbStatus::Solver,
            Error::HyperbolicDomain { .. } => DbStatus::HyperbolicDomain,
            Error::Provenance(_) => DbStatus::Provenance,
            Error::Budget(_) => DbStatus::Budget,
            Error::DegenerateFit(_) => DbStatus::DegenerateFit,
            Error::Io { .. } => DbStatus::Io,
        }
    }
}

/// Opaque radial potential.
pub struct DbPotential(RadialPotential);

/// Opaque Neumann-problem solution. Keeps its own copy of the potential.
pub struct DbSolution {
    potential: RadialPotential,
    sol: ScatteringSolution,
}

/// Opaque coefficient table.
pub struct DbCoefficients(BogoliubovCoefficients);

/// The four terms of the energy expansion and their sum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DbEnergy {
    pub a: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub term4: f64,
    pub total: f64,
    pub e_lambda_band: f64,
}

/// e_Λ with its oscillation band.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DbELambda {
    pub value: f64,
    pub band: f64,
    pub half_value: f64,
    pub half_band: f64,
    pub flagged: bool,
}

/// The order-one constants and the matching identity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DbIdentity {
    pub c_gn: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), (DbStatus, String)>>(f: F) -> DbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DbStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {m}"));
            DbStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DbStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(name: &str) -> (DbStatus, String) {
    (DbStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (DbStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, name: &str, v: T) -> Result<(), (DbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (nul
/// terminated). Returns the message length without the terminator, or 0 if
/// there is none. Truncates when `len` is too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn db_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Square barrier V₀ on r < R₀.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_potential_square_barrier(v0: f64, radius: f64, out: *mut *mut DbPotential) -> DbStatus {
    guard(|| {
        let p = RadialPotential::square_barrier(v0, radius).map_err(lib)?;
        write(out, "out", Box::into_raw(Box::new(DbPotential(p))))
    })
}

/// C² bump of height V₀ supported on r < R₀.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_potential_smooth_bump(v0: f64, radius: f64, out: *mut *mut DbPotential) -> DbStatus {
    guard(|| {
        let p = RadialPotential::smooth_bump(v0, radius).map_err(lib)?;
        write(out, "out", Box::into_raw(Box::new(DbPotential(p))))
    })
}

/// Piecewise-linear potential through `len` samples (r[i], v[i]).
///
/// # Safety
/// `r` and `v` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_potential_tabulated(
    r: *const f64,
    v: *const f64,
    len: usize,
    out: *mut *mut DbPotential,
) -> DbStatus {
    guard(|| {
        if r.is_null() || v.is_null() {
            return Err(null("samples"));
        }
        let rs = std::slice::from_raw_parts(r, len);
        let vs = std::slice::from_raw_parts(v, len);
        let p = RadialPotential::tabulated(rs.iter().copied().zip(vs.iter().copied()).collect()).map_err(lib)?;
        write(out, "out", Box::into_raw(Box::new(DbPotential(p))))
    })
}

/// # Safety
/// `p` must be null or come from a `db_potential_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn db_potential_free(p: *mut DbPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_scattering_length(p: *const DbPotential, out: *mut f64) -> DbStatus {
    guard(|| {
        let p = deref(p, "potential")?;
        write(out, "out", scattering::scattering_length(&p.0).map_err(lib)?)
    })
}

/// Neumann problem on the ball of radius Nℓ.
///
/// # Safety
/// `p` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_solution_new(p: *const DbPotential, n: u64, ell: f64, out: *mut *mut DbSolution) -> DbStatus {
    guard(|| {
        let p = deref(p, "potential")?;
        let sol = scattering::solve_neumann(&p.0, n, ell).map_err(lib)?;
        write(out, "out", Box::into_raw(Box::new(DbSolution { potential: p.0.clone(), sol })))
    })
}

/// # Safety
/// `s` must be null or come from `db_solution_new`.
#[no_mangle]
pub unsafe extern "C" fn db_solution_free(s: *mut DbSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Eigenvalue λ_ℓ, ∫Vf and the scattering length of a solution.
///
/// # Safety
/// All pointers must be valid; any of the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn db_solution_summary(
    s: *const DbSolution,
    lambda: *mut f64,
    integral_vf: *mut f64,
    a: *mut f64,
) -> DbStatus {
    guard(|| {
        let s = deref(s, "solution")?;
        if !lambda.is_null() {
            *lambda = s.sol.lambda;
        }
        if !integral_vf.is_null() {
            *integral_vf = s.sol.integral_vf();
        }
        if !a.is_null() {
            *a = s.sol.a;
        }
        Ok(())
    })
}

/// f(r) of the solution.
///
/// # Safety
/// `s` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_solution_f(s: *const DbSolution, r: f64, out: *mut f64) -> DbStatus {
    guard(|| {
        let s = deref(s, "solution")?;
        write(out, "out", s.sol.f_at(r))
    })
}

/// Coefficient table over |n|² ≤ max_norm2.
///
/// # Safety
/// `s` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_coefficients_new(
    s: *const DbSolution,
    max_norm2: u64,
    out: *mut *mut DbCoefficients,
) -> DbStatus {
    guard(|| {
        let s = deref(s, "solution")?;
        let c = BogoliubovCoefficients::build(&s.potential, &s.sol, max_norm2).map_err(lib)?;
        write(out, "out", Box::into_raw(Box::new(DbCoefficients(c))))
    })
}

/// # Safety
/// `c` must be null or come from `db_coefficients_new`.
#[no_mangle]
pub unsafe extern "C" fn db_coefficients_free(c: *mut DbCoefficients) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// η, σ and γ on the shell |n|² = n2.
///
/// # Safety
/// `c` must be valid; any of the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn db_coefficients_shell(
    c: *const DbCoefficients,
    n2: u64,
    eta: *mut f64,
    sigma: *mut f64,
    gamma: *mut f64,
) -> DbStatus {
    guard(|| {
        let c = &deref(c, "coefficients")?.0;
        let i = n2 as usize;
        if i >= c.eta.len() {
            return Err(lib(Error::invalid("n2", format!("must be <= {}, got {n2}", c.eta.len() - 1))));
        }
        for (p, v) in [(eta, c.eta[i]), (sigma, c.sigma[i]), (gamma, c.gamma[i])] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `c` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_identity_check(c: *const DbCoefficients, out: *mut DbIdentity) -> DbStatus {
    guard(|| {
        let c = &deref(c, "coefficients")?.0;
        let r = bogoliubov::c_o1_identity_check(c);
        write(out, "out", DbIdentity { c_gn: r.c_gn.value, lhs: r.lhs, rhs: r.rhs, diff: r.diff })
    })
}

/// # Safety
/// `c` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_c_tilde_full(c: *const DbCoefficients, out: *mut f64) -> DbStatus {
    guard(|| {
        let c = &deref(c, "coefficients")?.0;
        write(out, "out", energy::c_tilde_full(c).value)
    })
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_e_lambda(m_max: u32, out: *mut DbELambda) -> DbStatus {
    guard(|| {
        let e = bogoliubov::e_lambda(m_max).map_err(lib)?;
        write(
            out,
            "out",
            DbELambda { value: e.value, band: e.band, half_value: e.half_value, half_band: e.half_band, flagged: e.flagged },
        )
    })
}

/// −64π(4π/3 − √3).
#[no_mangle]
pub extern "C" fn db_third_order_constant() -> f64 {
    energy::third_order_constant()
}

/// Third-order term from the integral approximation.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_c_tilde_integral(a: f64, n: f64, out: *mut f64) -> DbStatus {
    guard(|| write(out, "out", energy::c_tilde_integral(a, n).map_err(lib)?))
}

/// Third-order term from the lattice double sum.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_c_tilde_lattice(a: f64, n: f64, out: *mut f64) -> DbStatus {
    guard(|| write(out, "out", energy::c_tilde_lattice(a, n).map_err(lib)?))
}

/// Four-term energy expansion.
///
/// # Safety
/// `p` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_energy(
    p: *const DbPotential,
    n: u64,
    ell: f64,
    m_max: u32,
    second_order_k: u32,
    out: *mut DbEnergy,
) -> DbStatus {
    guard(|| {
        let p = deref(p, "potential")?;
        let e = energy::energy_expansion(&p.0, n, ell, &EnergyCutoffs { m_max, second_order_k }).map_err(lib)?;
        write(
            out,
            "out",
            DbEnergy {
                a: e.a,
                term1: e.term1,
                term2: e.term2,
                term3: e.term3,
                term4: e.term4,
                total: e.total,
                e_lambda_band: e.e_lambda_band,
            },
        )
    })
}

/// Runs the command-line interface on `argc` arguments (without the program
/// name) and returns its JSON document in `*out_json`, to be released with
/// `db_string_free`. `*exit_code` receives the CLI exit code.
///
/// # Safety
/// `argv` must hold `argc` nul-terminated strings; `out_json` and
/// `exit_code` must be valid.
#[no_mangle]
pub unsafe extern "C" fn db_cli_run(
    argc: c_int,
    argv: *const *const c_char,
    out_json: *mut *mut c_char,
    exit_code: *mut c_int,
) -> DbStatus {
    guard(|| {
        if out_json.is_null() || exit_code.is_null() || (argc > 0 && argv.is_null()) {
            return Err(null("argument"));
        }
        let mut args = vec!["dilute-bose".to_string()];
        for i in 0..argc.max(0) as usize {
            let a = *argv.add(i);
            if a.is_null() {
                return Err(null("argv[i]"));
            }
            args.push(CStr::from_ptr(a).to_string_lossy().into_owned());
        }
        let mut buf = Vec::new();
        let code = dilute_bose::cli::run(args, None, &mut buf);
        let text = CString::new(buf).map_err(|e| (DbStatus::Io, e.to_string()))?;
        *out_json = text.into_raw();
        *exit_code = code;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or come from `db_cli_run`.
#[no_mangle]
pub unsafe extern "C" fn db_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
