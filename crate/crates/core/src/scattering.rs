//! Zero-energy scattering and the Neumann problem on the ball of radius
//! R = Nℓ, in unscaled variables.
//!
//! With u(r) = r f(r) the radial equation is −u'' + (V/2)u = λu. Inside the
//! support [0, R₀] it is integrated with classical RK4 on a uniform grid
//! (rescaling the state to survive exp(κR₀) growth for tall barriers).
//! Outside the support the solution is a sinusoid in closed form, so the
//! long stretch [R₀, R] costs nothing and carries no step-size error.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, NeumaierSum, Vec3};
use crate::potentials::{self, RadialPotential};
use crate::quadrature::{self, composite_gl};

/// Step-count controls for the interior integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub min_steps: usize,
    /// Steps per decay length 1/κ of the barrier, κ = √(max V / 2).
    pub steps_per_decay: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { min_steps: 4096, steps_per_decay: 40.0 }
    }
}

impl ShootingOptions {
    fn steps(&self, v: &RadialPotential) -> usize {
        let kappa = (0.5 * v.amplitude()).sqrt();
        let n = (v.support_radius() * kappa * self.steps_per_decay).ceil() as usize;
        n.max(self.min_steps).max(2)
    }
}

#[derive(Debug, Clone)]
struct Interior {
    h: f64,
    u: Vec<f64>,
    du: Vec<f64>,
}

/// RK4 on [0, R₀] for u'' = (V/2 − λ)u, u(0) = 0, u'(0) = 1. Returns the
/// end state normalized to unit length and, if requested, the whole grid
/// on the same normalization.
fn integrate_interior(v: &RadialPotential, lambda: f64, steps: usize, keep: bool) -> (f64, f64, Option<Interior>) {
    let r0 = v.support_radius();
    let h = r0 / steps as f64;
    let coef = |r: f64| 0.5 * v.value(r) - lambda;
    let (mut u, mut du) = (0.0f64, 1.0f64);
    let mut log_scale = 0.0f64;
    let mut grid = keep.then(|| (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)));
    if let Some(g) = grid.as_mut() {
        g.0.push(u);
        g.1.push(du);
        g.2.push(0.0);
    }
    // evaluate V at the step's left end just inside the support so a jump
    // at R₀ never leaks into the last step
    let mut c0 = coef(0.0);
    for i in 0..steps {
        let r = i as f64 * h;
        let cm = coef(r + 0.5 * h);
        let c1 = coef(if i + 1 == steps { r0 * (1.0 - 1e-15) } else { r + h });
        let k1u = du;
        let k1v = c0 * u;
        let k2u = du + 0.5 * h * k1v;
        let k2v = cm * (u + 0.5 * h * k1u);
        let k3u = du + 0.5 * h * k2v;
        let k3v = cm * (u + 0.5 * h * k2u);
        let k4u = du + h * k3v;
        let k4v = c1 * (u + h * k3u);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        du += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        c0 = c1;
        let size = u.abs().max(du.abs());
        if size > 1e100 {
            u /= size;
            du /= size;
            log_scale += size.ln();
        }
        if let Some(g) = grid.as_mut() {
            g.0.push(u);
            g.1.push(du);
            g.2.push(log_scale);
        }
    }
    let norm = u.hypot(du);
    let interior = grid.map(|(us, dus, ls)| {
        let mut ui = Vec::with_capacity(us.len());
        let mut dui = Vec::with_capacity(us.len());
        for i in 0..us.len() {
            let f = (ls[i] - log_scale).exp() / norm;
            ui.push(us[i] * f);
            dui.push(dus[i] * f);
        }
        Interior { h, u: ui, du: dui }
    });
    (u / norm, du / norm, interior)
}

/// Scattering length 𝔞 = R₀ − u(R₀)/u'(R₀) of the zero-energy problem.
pub fn scattering_length(v: &RadialPotential) -> Result<f64> {
    scattering_length_with(v, &ShootingOptions::default())
}

pub fn scattering_length_with(v: &RadialPotential, opts: &ShootingOptions) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    let (u, du, _) = integrate_interior(v, 0.0, opts.steps(v), false);
    if !(du > 0.0) {
        return Err(Error::Solver(format!("u'(R0) = {du} <= 0 at the edge of the support")));
    }
    Ok(v.support_radius() - u / du)
}

/// Closed-form solution on [R₀, ∞): u = A cos(κs) + B sin(κs)/κ, s = r − R₀.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Exterior {
    r0: f64,
    a: f64,
    b: f64,
    kappa: f64,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl Exterior {
    fn u(&self, r: f64) -> f64 {
        let s = r - self.r0;
        let ks = self.kappa * s;
        self.a * ks.cos() + self.b * s * sinc(ks)
    }

    fn du(&self, r: f64) -> f64 {
        let s = r - self.r0;
        let ks = self.kappa * s;
        -self.a * self.kappa * ks.sin() + self.b * ks.cos()
    }
}

/// Shooting mismatch u'(R) − u(R)/R for a trial eigenvalue.
fn mismatch(v: &RadialPotential, lambda: f64, radius: f64, steps: usize) -> f64 {
    let (u0, du0, _) = integrate_interior(v, lambda, steps, false);
    let ext = Exterior { r0: v.support_radius(), a: u0, b: du0, kappa: lambda.max(0.0).sqrt() };
    ext.du(radius) - ext.u(radius) / radius
}

/// Solution of the Neumann problem on the ball of radius R = Nℓ,
/// normalized so that f(R) = 1.
#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub a: f64,
    /// Ball radius R = Nℓ.
    pub radius: f64,
    pub lambda: f64,
    pub n_particles: u64,
    pub ell: f64,
    /// Samples (r, u(r)) on [0, R], clustered near the origin and R₀.
    pub u_grid: Vec<(f64, f64)>,
    /// Samples (r, w(r)) on the same grid.
    pub w_grid: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
    potential: RadialPotential,
    interior: Interior,
    ext: Exterior,
    /// Interior Gauss nodes (r, weight, u(r), V(r)).
    nodes: Vec<[f64; 4]>,
    /// Gauss nodes on [R₀, R] for the non-oscillatory moments.
    ext_nodes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScatteringSummary {
    pub a: f64,
    pub lambda: f64,
    pub radius: f64,
    pub n: u64,
    pub ell: f64,
    pub integral_vf: f64,
    pub eta_zero: f64,
    pub warnings: Vec<String>,
}

pub fn solve_neumann(v: &RadialPotential, n: u64, ell: f64) -> Result<ScatteringSolution> {
    solve_neumann_with(v, n, ell, &ShootingOptions::default())
}

pub fn solve_neumann_with(v: &RadialPotential, n: u64, ell: f64, opts: &ShootingOptions) -> Result<ScatteringSolution> {
    if !(ell > 0.0 && ell < 0.5) {
        return Err(Error::invalid("ell", format!("must lie in (0, 1/2), got {ell}")));
    }
    if n < 1 {
        return Err(Error::invalid("N", "must be >= 1"));
    }
    let radius = n as f64 * ell;
    let r0 = v.support_radius();
    let mut warnings = Vec::new();
    if radius <= r0 {
        return Err(Error::precondition(
            "scattering",
            format!("ball radius N*ell = {radius} does not exceed the support radius {r0}"),
        ));
    }
    if radius < 5.0 * r0 {
        warnings.push(format!("N*ell = {radius} < 5 R0: finite-ball corrections are not small"));
    }
    let steps = opts.steps(v);
    let a = scattering_length_with(v, opts)?;
    let lambda = if v.is_zero() {
        0.0
    } else {
        let mut lo = 0.0;
        let m_lo = mismatch(v, lo, radius, steps);
        if !(m_lo > 0.0) {
            return Err(Error::NotBracketed(format!("mismatch at lambda = 0 is {m_lo}, expected > 0")));
        }
        let mut hi = 30.0 * a / radius.powi(3);
        let mut expansions = 0;
        while mismatch(v, hi, radius, steps) >= 0.0 {
            hi *= 4.0;
            expansions += 1;
            if expansions > 20 || !hi.is_finite() {
                return Err(Error::NotBracketed(format!("no sign change of the mismatch up to lambda = {hi}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if mismatch(v, mid, radius, steps) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let (interior, ext) = if v.is_zero() {
        let h = r0 / steps as f64;
        let interior = Interior {
            h,
            u: (0..=steps).map(|i| i as f64 * h).collect(),
            du: vec![1.0; steps + 1],
        };
        (interior, Exterior { r0, a: r0, b: 1.0, kappa: 0.0 })
    } else {
        let (u0, du0, grid) = integrate_interior(v, lambda, steps, true);
        let mut interior = grid.expect("grid kept");
        let mut ext = Exterior { r0, a: u0, b: du0, kappa: lambda.sqrt() };
        let scale = radius / ext.u(radius);
        interior.u.iter_mut().for_each(|x| *x *= scale);
        interior.du.iter_mut().for_each(|x| *x *= scale);
        ext.a *= scale;
        ext.b *= scale;
        (interior, ext)
    };

    let mut sol = ScatteringSolution {
        a,
        radius,
        lambda,
        n_particles: n,
        ell,
        u_grid: Vec::new(),
        w_grid: Vec::new(),
        warnings,
        potential: v.clone(),
        interior,
        ext,
        nodes: Vec::new(),
        ext_nodes: composite_gl(r0, radius, 16),
    };
    sol.nodes = interior_nodes(v)
        .into_iter()
        .map(|(r, w)| [r, w, sol.u_at(r), v.value(r)])
        .collect();
    let grid = profile_grid(r0, radius);
    sol.u_grid = grid.iter().map(|&r| (r, sol.u_at(r))).collect();
    sol.w_grid = grid.iter().map(|&r| (r, sol.w_at(r))).collect();
    Ok(sol)
}

fn interior_nodes(v: &RadialPotential) -> Vec<(f64, f64)> {
    let r0 = v.support_radius();
    let kappa = (0.5 * v.amplitude()).sqrt();
    let panels = ((kappa * r0).ceil() as usize).max(16);
    let breaks = v.breakpoints();
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let share = ((panels as f64 * (w[1] - w[0]) / r0).ceil() as usize).max(1);
        out.extend(composite_gl(w[0], w[1], share));
    }
    out
}

/// Geometric grid clustered at 0 and at R₀, then out to R.
fn profile_grid(r0: f64, radius: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    let n_in = 128;
    for i in 1..=n_in {
        // cosine spacing clusters at both ends of [0, R₀]
        let t = i as f64 / n_in as f64;
        g.push(r0 * 0.5 * (1.0 - (PI * t).cos()));
    }
    let n_out = 256;
    let ratio = radius / r0;
    for i in 1..=n_out {
        g.push(r0 * ratio.powf(i as f64 / n_out as f64));
    }
    *g.last_mut().unwrap() = radius;
    g
}

impl ScatteringSolution {
    pub fn potential(&self) -> &RadialPotential {
        &self.potential
    }

    pub fn summary(&self) -> ScatteringSummary {
        ScatteringSummary {
            a: self.a,
            lambda: self.lambda,
            radius: self.radius,
            n: self.n_particles,
            ell: self.ell,
            integral_vf: self.integral_vf(),
            eta_zero: self.eta(0.0),
            warnings: self.warnings.clone(),
        }
    }

    /// u(r) = r f(r); u(r) = r for r ≥ R.
    pub fn u_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.radius {
            return r;
        }
        if r >= self.ext.r0 {
            return self.ext.u(r);
        }
        let (i, t) = self.locate(r);
        let h = self.interior.h;
        let (y0, y1) = (self.interior.u[i], self.interior.u[i + 1]);
        let (m0, m1) = (self.interior.du[i] * h, self.interior.du[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
    }

    pub fn du_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.radius {
            return 1.0;
        }
        if r >= self.ext.r0 {
            return self.ext.du(r);
        }
        let (i, t) = self.locate(r);
        let h = self.interior.h;
        let (y0, y1) = (self.interior.u[i], self.interior.u[i + 1]);
        let (m0, m1) = (self.interior.du[i] * h, self.interior.du[i + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1) / h
    }

    fn locate(&self, r: f64) -> (usize, f64) {
        let steps = self.interior.u.len() - 1;
        let x = r / self.interior.h;
        let i = (x.floor() as usize).min(steps - 1);
        (i, x - i as f64)
    }

    pub fn f_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r == 0.0 {
            return self.interior.du[0];
        }
        self.u_at(r) / r
    }

    pub fn w_at(&self, r: f64) -> f64 {
        if r.abs() >= self.radius {
            return 0.0;
        }
        1.0 - self.f_at(r)
    }

    /// w'(r) = −(r u' − u)/r².
    pub fn dw_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.radius || r == 0.0 {
            return 0.0;
        }
        -(r * self.du_at(r) - self.u_at(r)) / (r * r)
    }

    /// 4π∫ V f r² dr.
    pub fn integral_vf(&self) -> f64 {
        let mut acc = NeumaierSum::default();
        for &[r, w, u, v] in &self.nodes {
            acc.add(w * v * u * r);
        }
        4.0 * PI * acc.value()
    }

    /// Radial Fourier transform of V f at momentum k (unscaled variables).
    pub fn vf_transform(&self, k: f64) -> f64 {
        let k = k.abs();
        if k == 0.0 {
            return self.integral_vf();
        }
        if k * self.ext.r0 > 4.0 * self.nodes.len() as f64 / 32.0 {
            // beyond the resolution of the stored nodes
            let v = &self.potential;
            return potentials::fourier_radial_with(|r| v.value(r) * self.f_at(r), &v.breakpoints(), k, 1e-11)
                .unwrap_or(f64::NAN);
        }
        let mut acc = NeumaierSum::default();
        for &[r, w, u, v] in &self.nodes {
            acc.add(w * v * u * (k * r).sin());
        }
        4.0 * PI * acc.value() / k
    }

    /// ∫₀^R u(r) sin(kr) dr for k > 0.
    fn u_sine_moment(&self, k: f64) -> f64 {
        let mut inner = NeumaierSum::default();
        if k * self.ext.r0 > 4.0 * self.nodes.len() as f64 / 32.0 {
            let est = quadrature::Integrator::new(1e-12, 0.0)
                .integrate_breaks(|r| self.u_at(r) * (k * r).sin(), &self.potential.breakpoints());
            inner.add(est.map(|e| e.value).unwrap_or(f64::NAN));
        } else {
            for &[r, w, u, _] in &self.nodes {
                inner.add(w * u * (k * r).sin());
            }
        }
        // outside the support u'' = −κ²u, so two integrations by parts give
        // (k² − κ²) ∫ u sin(kr) = [u' sin(kr) − k u cos(kr)]
        let (r0, rr) = (self.ext.r0, self.radius);
        let kap2 = self.ext.kappa * self.ext.kappa;
        let boundary = |r: f64| self.ext.du(r) * (k * r).sin() - k * self.ext.u(r) * (k * r).cos();
        let outer = if (k * k - kap2).abs() > 1e-6 * k * k {
            (boundary(rr) - boundary(r0)) / (k * k - kap2)
        } else {
            let nodes = composite_gl(r0, rr, ((k * (rr - r0)).ceil() as usize).max(16));
            nodes.iter().map(|&(r, w)| w * self.ext.u(r) * (k * r).sin()).sum()
        };
        inner.add(outer);
        inner.value()
    }

    /// ŵ(k): radial Fourier transform of w = 1 − f (zero beyond R).
    pub fn w_transform(&self, k: f64) -> f64 {
        let k = k.abs();
        let rr = self.radius;
        if self.potential.is_zero() {
            return 0.0;
        }
        if k == 0.0 {
            let mut acc = NeumaierSum::default();
            for &[r, w, u, _] in &self.nodes {
                acc.add(w * (r - u) * r);
            }
            for &(r, w) in &self.ext_nodes {
                acc.add(w * (r - self.ext.u(r)) * r);
            }
            return 4.0 * PI * acc.value();
        }
        let x = k * rr;
        // ∫₀^R r sin(kr) dr
        let lin = if x < 1e-2 {
            k * rr.powi(3) * (1.0 / 3.0 - x * x / 30.0 + x.powi(4) / 840.0)
        } else {
            (x.sin() - x * x.cos()) / (k * k)
        };
        4.0 * PI * (lin - self.u_sine_moment(k)) / k
    }

    /// η at lattice momentum p: −N⁻² ŵ(|p|/N).
    pub fn eta(&self, p: f64) -> f64 {
        let n = self.n_particles as f64;
        -self.w_transform(p / n) / (n * n)
    }
}

/// Radial function of momentum on a log grid with a natural cubic spline in
/// log q and a power-law tail value·(q_max/q)^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_exponent: f64,
    second: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, tail_exponent: f64) -> Result<Self> {
        if grid.len() < 3 || grid.len() != values.len() {
            return Err(Error::invalid("profile", "need at least 3 nodes and matching values"));
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("profile", "grid must be positive and strictly increasing"));
        }
        let x: Vec<f64> = grid.iter().map(|q| q.ln()).collect();
        let second = natural_spline(&x, &values);
        Ok(RadialProfile { grid, values, tail_exponent, second })
    }

    pub fn eval(&self, q: f64) -> f64 {
        let q = q.abs();
        let n = self.grid.len();
        if q <= self.grid[0] {
            return self.values[0];
        }
        if q >= self.grid[n - 1] {
            return self.values[n - 1] * (self.grid[n - 1] / q).powf(self.tail_exponent);
        }
        let i = self.grid.partition_point(|&g| g <= q) - 1;
        let (x0, x1) = (self.grid[i].ln(), self.grid[i + 1].ln());
        let h = x1 - x0;
        let x = q.ln();
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }
}

fn natural_spline(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    // Thomas algorithm on the interior equations
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

pub const ETA_GRID_POINTS_PER_DECADE: usize = 64;

/// η sampled on a log grid from 2π·10⁻² to q_max, 64 points per decade.
pub fn eta_profile(sol: &ScatteringSolution, q_max: f64) -> Result<RadialProfile> {
    if !(q_max >= 2.0 * PI) {
        return Err(Error::precondition("scattering", format!("q_max = {q_max} is below the first shell 2π")));
    }
    let q_min = 2.0 * PI * 1e-2;
    let decades = (q_max / q_min).log10();
    let n = ((decades * ETA_GRID_POINTS_PER_DECADE as f64).ceil() as usize).max(3) + 1;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { q_max } else { q_min * 10f64.powf(i as f64 / ETA_GRID_POINTS_PER_DECADE as f64) })
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|&q| sol.eta(q)).collect();
    RadialProfile::new(grid, values, 4.0)
}

/// Per-shell report of the momentum-space scattering equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub cutoff_shells: u32,
    /// (n2, lhs, rhs)
    pub shells: Vec<(u64, f64, f64)>,
    pub max_residual: f64,
    /// max_p p²|η_p| over the tested shells.
    pub scale: f64,
}

fn representative(n2: u64) -> Option<Vec3> {
    let k = (n2 as f64).sqrt() as i32 + 1;
    for x in 0..=k {
        for y in 0..=x {
            for z in 0..=y {
                if (x * x + y * y + z * z) as u64 == n2 {
                    return Some([x, y, z]);
                }
            }
        }
    }
    None
}

/// Both sides of
///   p²η_p + ½V̂(p/N) + (1/2N)Σ_q V̂((p−q)/N)η_q
///     = N³λχ̂_ℓ(p) + N²λΣ_q χ̂_ℓ(p−q)η_q
/// on the given shells, with q running over |q| ≤ 2πK (origin included).
pub fn scattering_residual(sol: &ScatteringSolution, shells: &[u64], cutoff_shells: u32) -> Result<ResidualReport> {
    let v = sol.potential();
    let n = sol.n_particles as f64;
    let qmax2 = cutoff_shells as u64 * cutoff_shells as u64;
    let targets: Vec<(u64, Vec3)> = shells.iter().filter_map(|&s| representative(s).map(|r| (s, r))).collect();
    let max_target = targets.iter().map(|t| t.0).max().unwrap_or(0);
    if max_target > qmax2 {
        return Err(Error::precondition(
            "scattering",
            format!("tested shell |n|^2 = {max_target} lies beyond the convolution cutoff {qmax2}"),
        ));
    }
    let reach = ((max_target as f64).sqrt() + cutoff_shells as f64).ceil() as u64;
    let reach2 = reach * reach + 1;
    let eta: Vec<f64> = (0..=qmax2).into_par_iter().map(|m| sol.eta(lattice::shell_momentum(m))).collect();
    let vhat: Vec<f64> = (0..=reach2)
        .into_par_iter()
        .map(|m| potentials::v_hat(v, lattice::shell_momentum(m) / n))
        .collect::<Result<_>>()?;
    let chi: Vec<f64> = (0..=reach2).map(|m| potentials::ball_transform(sol.ell, lattice::shell_momentum(m))).collect();
    let mut qs = lattice::ball_points(qmax2);
    qs.push([0, 0, 0]);
    let rows: Vec<(u64, f64, f64)> = targets
        .par_iter()
        .map(|&(n2, p)| {
            let mut conv_v = NeumaierSum::default();
            let mut conv_c = NeumaierSum::default();
            for q in &qs {
                let d = lattice::norm2(&lattice::sub(&p, q)) as usize;
                let e = eta[lattice::norm2(q) as usize];
                conv_v.add(vhat[d] * e);
                conv_c.add(chi[d] * e);
            }
            let p2 = 4.0 * PI * PI * n2 as f64;
            let lhs = p2 * eta[n2 as usize] + 0.5 * vhat[n2 as usize] + conv_v.value() / (2.0 * n);
            let rhs = n.powi(3) * sol.lambda * chi[n2 as usize] + n * n * sol.lambda * conv_c.value();
            (n2, lhs, rhs)
        })
        .collect();
    let max_residual = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let scale = rows
        .iter()
        .map(|r| 4.0 * PI * PI * r.0 as f64 * sol.eta(lattice::shell_momentum(r.0)).abs())
        .fold(0.0, f64::max);
    Ok(ResidualReport { cutoff_shells, shells: rows, max_residual, scale })
}
