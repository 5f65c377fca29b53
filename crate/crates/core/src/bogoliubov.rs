//! Bogoliubov coefficient families, the dispersion, the second-order sum,
//! the cube-sum constant e_Λ and the order-one constants with their
//! matching identity.
//!
//! Coefficients are tabulated exactly per integer |n|² (p = 2πn): every
//! momentum appearing in a sum is a lattice norm, so nothing is
//! interpolated.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    self, cube_layer_sums, dot, norm2, shell_momentum, sum_pairs_multi, sum_shells, NeumaierSum, ShellTable,
    SummationResult, Tail, Truncation, Vec3,
};
use crate::potentials::{v_hat, RadialPotential};
use crate::scattering::ScatteringSolution;

const TWO_PI_SQ: f64 = 4.0 * PI * PI;

/// g_N(q): Fourier transform of N³V(N·)f_{N,ℓ} at lattice momentum q,
/// computed in position space. g_N(0) equals ∫V f.
pub fn renormalized_potential(v: &RadialPotential, sol: &ScatteringSolution, q: f64) -> Result<f64> {
    check_provenance(v, sol)?;
    Ok(sol.vf_transform(q / sol.n_particles as f64))
}

fn check_provenance(v: &RadialPotential, sol: &ScatteringSolution) -> Result<()> {
    if sol.potential() != v {
        return Err(Error::Provenance(
            "the scattering solution was computed for a different potential".into(),
        ));
    }
    Ok(())
}

/// F̃ and G̃ built from (q², g, η).
pub fn tilde_coefficients(q: f64, eta: f64, g: f64) -> (f64, f64) {
    let (s2, c2) = ((2.0 * eta).sinh(), (2.0 * eta).cosh());
    let p2 = q * q;
    ((p2 + g) * c2 + g * s2, (p2 + g) * s2 + g * c2)
}

/// τ = ½ atanh(−G̃/F̃).
pub fn tau_of(q: f64, eta: f64, g: f64) -> Result<f64> {
    let (ft, gt) = tilde_coefficients(q, eta, g);
    if !(gt.abs() < ft) {
        return Err(Error::HyperbolicDomain { q, f_tilde: ft, g_tilde: gt });
    }
    Ok(0.5 * (-gt / ft).atanh())
}

/// ε(q) = √(q⁴ + 16π𝔞q²).
pub fn dispersion(q: f64, a: f64) -> f64 {
    q.abs() * (q * q + 16.0 * PI * a).sqrt()
}

/// Coefficient table indexed by |n|² from 0 to 4·max_norm2, so that p ± q
/// stays in range for p, q in the ball |n|² ≤ max_norm2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BogoliubovCoefficients {
    pub n: u64,
    /// Truncation of Λ*₊ used by the sums: |n|² ≤ max_norm2.
    pub max_norm2: u64,
    pub eta: Vec<f64>,
    pub g: Vec<f64>,
    /// V̂(p/N).
    pub vhat: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub tau: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    /// F = p² cosh 2μ + g e^{2μ}.
    pub f: Vec<f64>,
    /// G = p² sinh 2μ + g e^{2μ}.
    pub g_coef: Vec<f64>,
}

impl BogoliubovCoefficients {
    pub fn build(v: &RadialPotential, sol: &ScatteringSolution, max_norm2: u64) -> Result<Self> {
        check_provenance(v, sol)?;
        if max_norm2 < 1 {
            return Err(Error::precondition("bogoliubov", "cutoff must contain at least one shell"));
        }
        let n = sol.n_particles;
        let nf = n as f64;
        let top = 4 * max_norm2;
        let rows: Vec<[f64; 11]> = (0..=top)
            .into_par_iter()
            .map(|n2| -> Result<[f64; 11]> {
                let p = shell_momentum(n2);
                let eta = sol.eta(p);
                let g = sol.vf_transform(p / nf);
                let vh = v_hat(v, p / nf)?;
                if n2 == 0 {
                    return Ok([eta, g, vh, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
                }
                let (ft, gt) = tilde_coefficients(p, eta, g);
                let tau = tau_of(p, eta, g)?;
                let mu = eta + tau;
                let p2 = p * p;
                let e2 = (2.0 * mu).exp();
                let f = p2 * (2.0 * mu).cosh() + g * e2;
                let gc = p2 * (2.0 * mu).sinh() + g * e2;
                Ok([eta, g, vh, ft, gt, tau, mu, mu.sinh(), mu.cosh(), f, gc])
            })
            .collect::<Result<_>>()?;
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        Ok(BogoliubovCoefficients {
            n,
            max_norm2,
            eta: col(0),
            g: col(1),
            vhat: col(2),
            f_tilde: col(3),
            g_tilde: col(4),
            tau: col(5),
            mu: col(6),
            sigma: col(7),
            gamma: col(8),
            f: col(9),
            g_coef: col(10),
        })
    }

    pub fn shells(&self) -> ShellTable {
        ShellTable::from_max_norm2(self.max_norm2)
    }

    pub fn domain(&self) -> Truncation {
        Truncation::Ball { max_norm2: self.max_norm2 }
    }

    /// Largest |n|² held by the table.
    pub fn table_norm2(&self) -> u64 {
        self.eta.len() as u64 - 1
    }

    /// Momentum cutoff 2π√max_norm2.
    pub fn cutoff(&self) -> f64 {
        shell_momentum(self.max_norm2)
    }

    /// Checks the per-shell identities and bounds on every represented
    /// shell of the truncation.
    pub fn invariants(&self) -> CoefficientInvariants {
        let mut out = CoefficientInvariants::default();
        out.min_f_tilde_margin = f64::INFINITY;
        for (n2, _) in self.shells().shells {
            let i = n2 as usize;
            let p2 = TWO_PI_SQ * n2 as f64;
            let (s, c) = (self.sigma[i], self.gamma[i]);
            out.max_hyperbolic_defect = out.max_hyperbolic_defect.max((c * c - s * s - 1.0).abs());
            out.max_g_over_f = out.max_g_over_f.max(self.g_coef[i].abs() / self.f[i]);
            let exact = (p2 * p2 + 2.0 * self.g[i] * p2).sqrt();
            out.max_f_rel_error = out.max_f_rel_error.max((self.f[i] - exact).abs() / exact);
            out.min_f_tilde_margin = out.min_f_tilde_margin.min((self.f_tilde[i] - 0.5 * p2) / self.f_tilde[i]);
            out.max_gt_over_ft = out.max_gt_over_ft.max(self.g_tilde[i].abs() / self.f_tilde[i]);
            out.max_tau_p4 = out.max_tau_p4.max(self.tau[i].abs() * p2 * p2);
            out.max_sigma_eta_p4 = out.max_sigma_eta_p4.max((self.sigma[i] - self.eta[i]).abs() * p2 * p2);
            out.max_eta_p2 = out.max_eta_p2.max(self.eta[i].abs() * p2);
            out.shells += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInvariants {
    pub shells: usize,
    /// max |γ² − σ² − 1|
    pub max_hyperbolic_defect: f64,
    /// max |G|/F
    pub max_g_over_f: f64,
    /// max |F − √(p⁴ + 2gp²)| / F
    pub max_f_rel_error: f64,
    /// min (F̃ − p²/2)/F̃, nonnegative when p²/2 ≤ F̃
    pub min_f_tilde_margin: f64,
    /// max |G̃|/F̃
    pub max_gt_over_ft: f64,
    pub max_tau_p4: f64,
    pub max_sigma_eta_p4: f64,
    pub max_eta_p2: f64,
}

/// Σ_{p ∈ Λ*₊} [p² + 8π𝔞 − √(p⁴ + 16π𝔞p²) − (8π𝔞)²/(2p²)] over |n| ≤ K with
/// a power-law tail estimate.
pub fn second_order_sum(a: f64, k: u32) -> Result<SummationResult> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("must be finite and >= 0, got {a}")));
    }
    if k < 4 {
        return Err(Error::precondition("bogoliubov", format!("second-order sum needs K >= 4, got {k}")));
    }
    let table = ShellTable::build(k)?;
    lattice::sum_radial(&table, |q| second_order_summand(q, a), Tail::PowerLaw(4.0))
}

/// The bracket of the second-order sum in a cancellation-free form. With
/// x = c/q², c = 8π𝔞, it equals −(c³/q⁴)(1 + 2/(1 + √(1+2x))) / (2D),
/// D = 1 + x + √(1+2x).
pub fn second_order_summand(q: f64, a: f64) -> f64 {
    let c = 8.0 * PI * a;
    let q2 = q * q;
    let x = c / q2;
    let s = (1.0 + 2.0 * x).sqrt();
    let d = 1.0 + x + s;
    -(c * c * c / (q2 * q2)) * (1.0 + 2.0 / (1.0 + s)) / (2.0 * d)
}

/// S(M) = Σ_{n ∈ Z³\{0}, |n_i| ≤ M} cos|n| / |n|².
pub fn cube_partial_sums(m_max: u32) -> Vec<f64> {
    let layers = cube_layer_sums(m_max, |n2| (n2 as f64).sqrt().cos() / n2 as f64);
    let mut acc = NeumaierSum::default();
    layers
        .iter()
        .map(|l| {
            acc.add(*l);
            acc.value()
        })
        .collect()
}

pub const ELAMBDA_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ELambdaResult {
    pub m_max: u32,
    /// 2 − A(M_max), A the window average of the cube sums.
    pub value: f64,
    /// Oscillation band of A over the trailing 2·window values at M_max.
    pub band: f64,
    /// Same quantities at M_max/2.
    pub half_value: f64,
    pub half_band: f64,
    pub band_shrinking: bool,
    pub halves_agree: bool,
    /// Set when the diagnostics do not indicate convergence.
    pub flagged: bool,
    pub window: usize,
    /// (M, S(M)) for the whole ladder.
    pub partial_sums: Vec<(u32, f64)>,
}

/// e_Λ from window-averaged cube sums, with convergence diagnostics.
pub fn e_lambda(m_max: u32) -> Result<ELambdaResult> {
    if m_max < 8 {
        return Err(Error::precondition("bogoliubov", format!("e_Lambda needs M_max >= 8, got {m_max}")));
    }
    let s = cube_partial_sums(m_max);
    let avg = |m: usize| {
        let lo = m.saturating_sub(ELAMBDA_WINDOW - 1).max(1);
        s[lo..=m].iter().sum::<f64>() / (m - lo + 1) as f64
    };
    let band = |m: usize| {
        let lo = m.saturating_sub(2 * ELAMBDA_WINDOW).max(1);
        let vals: Vec<f64> = (lo..=m).map(avg).collect();
        vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min)
    };
    let m = m_max as usize;
    let h = m / 2;
    let (a_full, a_half) = (avg(m), avg(h));
    let (b_full, b_half) = (band(m), band(h));
    let band_shrinking = b_full <= 0.5 * b_half;
    let halves_agree = (a_full - a_half).abs() <= b_half;
    Ok(ELambdaResult {
        m_max,
        value: 2.0 - a_full,
        band: b_full,
        half_value: 2.0 - a_half,
        half_band: b_half,
        band_shrinking,
        halves_agree,
        flagged: !(band_shrinking && halves_agree),
        window: ELAMBDA_WINDOW,
        partial_sums: s.iter().enumerate().map(|(i, v)| (i as u32, *v)).collect(),
    })
}

fn check_cutoff(c: &BogoliubovCoefficients, factor: f64, what: &str) -> Option<String> {
    let need = factor * c.n as f64;
    (c.cutoff() < need).then(|| format!("{what}: momentum cutoff {:.3} is below {factor}N = {need}", c.cutoff()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub value: f64,
    /// Named contributions, summing to `value`.
    pub terms: Vec<(String, f64)>,
    pub comp_bound: f64,
    pub warning: Option<String>,
}

struct PairSums {
    /// Σ V̂(p−q) σγ_p σγ_q
    sg: f64,
    /// Σ V̂(p−q) η_p η_q
    ee: f64,
    /// Σ V̂(p+q) η_p σ_q²
    es2: f64,
    /// Σ V̂(p−q) (ch sh)(η_p) (ch sh)(η_q)
    cs: f64,
    comp: f64,
}

fn pair_sums(c: &BogoliubovCoefficients, brute: bool) -> PairSums {
    let sg: Vec<f64> = c.sigma.iter().zip(&c.gamma).map(|(s, g)| s * g).collect();
    let cs: Vec<f64> = c.eta.iter().map(|e| e.sinh() * e.cosh()).collect();
    let s2: Vec<f64> = c.sigma.iter().map(|s| s * s).collect();
    let dom = c.domain();
    let f = |p: &Vec3, q: &Vec3| {
        let ip = norm2(p) as usize;
        let iq = norm2(q) as usize;
        let pq = dot(p, q);
        let dm = (ip as i64 + iq as i64 - 2 * pq) as usize;
        let dp = (ip as i64 + iq as i64 + 2 * pq) as usize;
        let vm = c.vhat[dm];
        [
            vm * sg[ip] * sg[iq],
            vm * c.eta[ip] * c.eta[iq],
            c.vhat[dp] * c.eta[ip] * s2[iq],
            vm * cs[ip] * cs[iq],
        ]
    };
    if brute {
        let part = |k: usize| lattice::sum_pairs_brute(|p, q| f(p, q)[k], dom, dom);
        return PairSums { sg: part(0), ee: part(1), es2: part(2), cs: part(3), comp: 0.0 };
    }
    let [a, b, d, e] = sum_pairs_multi(f, dom, dom, true);
    PairSums {
        sg: a.value,
        ee: b.value,
        es2: d.value,
        cs: e.value,
        comp: a.comp_bound + b.comp_bound + d.comp_bound + e.comp_bound,
    }
}

struct Singles {
    p2s2: f64,
    v_sg_s2: f64,
    p2e2: f64,
    v_eta: f64,
    s2: f64,
    eta_family: f64,
    fg: f64,
    comp: f64,
}

fn single_sums(c: &BogoliubovCoefficients) -> Singles {
    let t = c.shells();
    let mut comp = 0.0;
    let mut run = |f: &dyn Fn(usize, f64) -> f64| {
        let r = sum_shells(&t, |n2| f(n2 as usize, TWO_PI_SQ * n2 as f64));
        comp += r.comp_bound;
        r.value
    };
    let p2s2 = run(&|i, p2| p2 * c.sigma[i] * c.sigma[i]);
    let v_sg_s2 = run(&|i, _| c.vhat[i] * (c.sigma[i] * c.gamma[i] + c.sigma[i] * c.sigma[i]));
    let p2e2 = run(&|i, p2| p2 * c.eta[i] * c.eta[i]);
    let v_eta = run(&|i, _| c.vhat[i] * c.eta[i]);
    let s2 = run(&|i, _| c.sigma[i] * c.sigma[i]);
    let eta_family = run(&|i, p2| {
        let (sh, ch) = (c.eta[i].sinh(), c.eta[i].cosh());
        p2 * sh * sh + c.vhat[i] * ch * sh + c.g[i] * sh * sh
    });
    let fg = run(&|i, _| {
        let (ft, gt) = (c.f_tilde[i], c.g_tilde[i]);
        -ft + ((ft - gt) * (ft + gt)).sqrt()
    });
    Singles { p2s2, v_sg_s2, p2e2, v_eta, s2, eta_family, fg, comp }
}

/// Everything needed for C_{G_N}, C_{O(1)} and the η-based constant, from
/// one pass of pair sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: u64,
    pub cutoff: f64,
    pub c_gn: ConstantReport,
    /// C_{O(1)} = C_{G_N} + (1/N)Σ(V̂(p/N) + V̂((p+q)/N))η_p σ_q².
    pub lhs: f64,
    /// C̃^η + ½Σ(−F̃ + √(F̃² − G̃²)).
    pub rhs: f64,
    pub diff: f64,
    /// The η-based constant alone.
    pub c_eta: f64,
    /// ½Σ(−F̃ + √(F̃² − G̃²)) alone.
    pub quadratic_correction: f64,
    pub warning: Option<String>,
}

fn evaluate(c: &BogoliubovCoefficients, brute: bool) -> IdentityReport {
    let nf = c.n as f64;
    let ps = pair_sums(c, brute);
    let s = single_sums(c);
    let eta0 = c.eta[0];
    let v0 = c.vhat[0];
    let t0 = 0.5 * (nf - 1.0) * v0;
    let t1 = s.p2s2 + s.v_sg_s2;
    let t2 = ps.sg / (2.0 * nf);
    // (V̂∗η)_p includes the q = 0 term V̂(p/N)η_0
    let conv_eta = ps.ee + eta0 * s.v_eta;
    let t3 = (s.p2e2 + conv_eta / (2.0 * nf)) / nf;
    let full_v_eta = v0 * eta0 + s.v_eta;
    let t4 = -full_v_eta * s.s2 / nf;
    let value = t0 + t1 + t2 + t3 + t4;
    let comp = s.comp + ps.comp;
    let c_gn = ConstantReport {
        value,
        terms: vec![
            ("(N-1)/2 V(0)".into(), t0),
            ("sum p^2 s^2 + V(s g + s^2)".into(), t1),
            ("(1/2N) sum V(p-q) sg sg".into(), t2),
            ("(1/N) sum p^2 eta^2 + (V*eta) eta/(2N)".into(), t3),
            ("-(1/N) sum V eta * sum s^2".into(), t4),
        ],
        comp_bound: comp,
        warning: check_cutoff(c, 3.0, "C_GN"),
    };
    let extra = (s.v_eta * s.s2 + ps.es2) / nf;
    let lhs = value + extra;
    let c_eta = t0 + s.eta_family + ps.cs / (2.0 * nf) + t3;
    let quad = 0.5 * s.fg;
    let rhs = c_eta + quad;
    IdentityReport {
        n: c.n,
        cutoff: c.cutoff(),
        warning: c_gn.warning.clone(),
        c_gn,
        lhs,
        rhs,
        diff: lhs - rhs,
        c_eta,
        quadratic_correction: quad,
    }
}

/// C_{G_N}: the five sum groups of the quadratic renormalization constant.
pub fn c_gn_constant(c: &BogoliubovCoefficients) -> ConstantReport {
    evaluate(c, false).c_gn
}

/// The factorized product −(1/N)[Σ_{p ∈ Λ*} V̂(p/N)η_p][Σ_{q ∈ Λ*₊} σ_q²].
pub fn c_gn_product_term(c: &BogoliubovCoefficients) -> f64 {
    let s = single_sums(c);
    -(c.vhat[0] * c.eta[0] + s.v_eta) * s.s2 / c.n as f64
}

/// C_{O(1)} against C̃^η + ½Σ(−F̃ + √(F̃² − G̃²)).
pub fn c_o1_identity_check(c: &BogoliubovCoefficients) -> IdentityReport {
    evaluate(c, false)
}

/// `c_o1_identity_check` with every double sum done by the plain nested
/// loop. Oracle for the reduced, parallel path.
pub fn c_o1_identity_check_brute(c: &BogoliubovCoefficients) -> IdentityReport {
    evaluate(c, true)
}

/// 4π𝔞(N−1) + e_Λ𝔞² − ½ Σ[second-order bracket].
pub fn bogoliubov_closed_form(a: f64, n: u64, e_lambda: f64, second_order: f64) -> f64 {
    4.0 * PI * a * (n as f64 - 1.0) + e_lambda * a * a - 0.5 * second_order
}

/// ν_{r,v} = 2r²η_r σ_v / (|r+v|² + r² + v²).
pub fn cubic_kernel_nu(r: &Vec3, v: &Vec3, c: &BogoliubovCoefficients) -> Result<f64> {
    let s = lattice::add(r, v);
    let (ir, iv, is) = (norm2(r), norm2(v), norm2(&s));
    if ir == 0 || iv == 0 || is == 0 {
        return Err(Error::precondition("bogoliubov", "nu needs r, v and r + v nonzero"));
    }
    let top = c.table_norm2() as i64;
    if ir > top || iv > top {
        return Err(Error::precondition("bogoliubov", "momentum outside the coefficient table"));
    }
    Ok(2.0 * ir as f64 * c.eta[ir as usize] * c.sigma[iv as usize] / (is + ir + iv) as f64)
}

/// Right side of the ν_{p,q} + ν_{q,p} decomposition.
pub fn nu_sum_decomposition(p: &Vec3, q: &Vec3, c: &BogoliubovCoefficients) -> f64 {
    let (ip, iq) = (norm2(p) as usize, norm2(q) as usize);
    let d = (ip as i64 + iq as i64 + norm2(&lattice::add(p, q))) as f64;
    let (ep, eq, sp, sq) = (c.eta[ip], c.eta[iq], c.sigma[ip], c.sigma[iq]);
    ep * sq - 2.0 * iq as f64 / d * (ep * (sq - eq) - eq * (sp - ep)) - ep * sq * 2.0 * dot(p, q) as f64 / d
}

/// The three quantities bounding the cubic-phase coefficients α_{r,v}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaDiagnostics {
    pub n: u64,
    pub k: u32,
    /// Σ_v sup_r |α_{r,v}|²
    pub sum_sup_sq: f64,
    /// (1/N) Σ_v sup_z Σ_r |α_{r,v}|² / (r+z)², z ∈ {0} ∪ shells 1, 2
    pub weighted: f64,
    /// N^{1/2} sup_{r,v} |α_{r,v}| |v|
    pub sup_v: f64,
}

fn fft_size(min: usize) -> usize {
    (min..).find(|&m| {
        let mut x = m;
        for p in [2, 3, 5] {
            while x % p == 0 {
                x /= p;
            }
        }
        x == 1
    })
    .expect("smooth size exists")
}

struct Fft3 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 { m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    /// In-place 3D transform of a cube stored x-major; three passes along
    /// the contiguous axis with axis rotation in between.
    fn run(&self, data: &mut Vec<Complex<f64>>, scratch: &mut Vec<Complex<f64>>, inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for _ in 0..3 {
            plan.process(data);
            // (x, y, z) -> (z, x, y)
            for x in 0..m {
                for y in 0..m {
                    let row = (x * m + y) * m;
                    for z in 0..m {
                        scratch[(z * m + x) * m + y] = data[row + z];
                    }
                }
            }
            std::mem::swap(data, scratch);
        }
    }
}

/// α_{r,v} = N^{-1/2} Σ_s V̂((r−s)/N) η_s [2η_{s+v}s² − 2σ_v(v·s)]/(s²+v²+|s+v|²)
/// for r, v, s in the ball |n| ≤ K, via FFT convolution in s.
pub fn alpha_bound_check(c: &BogoliubovCoefficients, k: u32) -> Result<AlphaDiagnostics> {
    let k2 = k as u64 * k as u64;
    if k < 1 || 4 * k2 > c.table_norm2() {
        return Err(Error::precondition(
            "bogoliubov",
            format!("alpha needs the coefficient table through 4K^2 = {}", 4 * k2),
        ));
    }
    let nf = c.n as f64;
    let m = fft_size(4 * k as usize + 1);
    let fft = Fft3::new(m);
    let idx = |v: &Vec3| -> usize {
        let w = |x: i32| x.rem_euclid(m as i32) as usize;
        (w(v[0]) * m + w(v[1])) * m + w(v[2])
    };
    let total = m * m * m;
    let kk = 2 * k as i32;
    let mut kernel = vec![Complex::new(0.0, 0.0); total];
    for x in -kk..=kk {
        for y in -kk..=kk {
            for z in -kk..=kk {
                let n2 = (x * x + y * y + z * z) as u64;
                if n2 <= 4 * k2 {
                    kernel[idx(&[x, y, z])] = Complex::new(c.vhat[n2 as usize], 0.0);
                }
            }
        }
    }
    let mut scratch = vec![Complex::new(0.0, 0.0); total];
    fft.run(&mut kernel, &mut scratch, false);
    // kernel is real and even, so its transform is real: two real inputs
    // ride in one complex transform
    let dom = Truncation::Ball { max_norm2: k2 };
    let ball = dom.points();
    let reps = dom.fundamental_domain();
    let z_set: Vec<Vec3> = std::iter::once([0, 0, 0]).chain(lattice::ball_points(2)).collect();
    let coeff = |s: &Vec3, v: &Vec3| -> f64 {
        let sv = lattice::add(s, v);
        let (is, iv, isv) = (norm2(s), norm2(v), norm2(&sv));
        if isv == 0 {
            return 0.0;
        }
        let d = (is + iv + isv) as f64;
        c.eta[is as usize] * (2.0 * c.eta[isv as usize] * is as f64 - 2.0 * c.sigma[iv as usize] * dot(v, s) as f64) / d
    };
    let per_v: Vec<[f64; 3]> = reps
        .par_chunks(2)
        .map_init(
            || (vec![Complex::new(0.0, 0.0); total], vec![Complex::new(0.0, 0.0); total]),
            |(buf, scr), pair| {
                buf.iter_mut().for_each(|x| *x = Complex::new(0.0, 0.0));
                for s in &ball {
                    let re = coeff(s, &pair[0].0);
                    let im = if pair.len() > 1 { coeff(s, &pair[1].0) } else { 0.0 };
                    buf[idx(s)] = Complex::new(re, im);
                }
                fft.run(buf, scr, false);
                for (b, w) in buf.iter_mut().zip(&kernel) {
                    *b *= w.re;
                }
                fft.run(buf, scr, true);
                let norm = 1.0 / (total as f64 * nf.sqrt());
                let mut out = [0.0; 6];
                for (j, (v, mult)) in pair.iter().enumerate() {
                    let alpha = |r: &Vec3| {
                        let z = buf[idx(r)];
                        norm * if j == 0 { z.re } else { z.im }
                    };
                    let mut sup: f64 = 0.0;
                    let mut weighted: f64 = 0.0;
                    for zv in &z_set {
                        let mut acc = NeumaierSum::default();
                        for r in &ball {
                            let rz = norm2(&lattice::add(r, zv));
                            if rz == 0 {
                                continue;
                            }
                            acc.add(alpha(r).powi(2) / (TWO_PI_SQ * rz as f64));
                        }
                        weighted = weighted.max(acc.value());
                    }
                    for r in &ball {
                        sup = sup.max(alpha(r).abs());
                    }
                    let vmag = shell_momentum(norm2(v) as u64);
                    out[3 * j] = *mult as f64 * sup * sup;
                    out[3 * j + 1] = *mult as f64 * weighted / nf;
                    out[3 * j + 2] = nf.sqrt() * sup * vmag;
                }
                [out[0] + out[3], out[1] + out[4], out[2].max(out[5])]
            },
        )
        .collect();
    let mut q1 = NeumaierSum::default();
    let mut q2 = NeumaierSum::default();
    let mut q3: f64 = 0.0;
    for row in &per_v {
        q1.add(row[0]);
        q2.add(row[1]);
        q3 = q3.max(row[2]);
    }
    Ok(AlphaDiagnostics { n: c.n, k, sum_sup_sq: q1.value(), weighted: q2.value(), sup_v: q3 })
}

/// Direct O(K⁶) evaluation of one α_{r,v}; oracle for the FFT path.
pub fn alpha_direct(c: &BogoliubovCoefficients, k: u32, r: &Vec3, v: &Vec3) -> f64 {
    let k2 = k as u64 * k as u64;
    let mut acc = NeumaierSum::default();
    for s in lattice::ball_points(k2) {
        let sv = lattice::add(&s, v);
        let isv = norm2(&sv);
        if isv == 0 {
            continue;
        }
        let (is, iv) = (norm2(&s), norm2(v));
        let d = (is + iv + isv) as f64;
        let bracket = 2.0 * c.eta[isv as usize] * is as f64 - 2.0 * c.sigma[iv as usize] * dot(v, &s) as f64;
        acc.add(c.vhat[norm2(&lattice::sub(r, &s)) as usize] * c.eta[is as usize] * bracket / d);
    }
    acc.value() / (c.n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::solve_neumann;
    use proptest::prelude::*;

    fn table(n: u64, factor: f64) -> BogoliubovCoefficients {
        let v = RadialPotential::square_barrier(2.0, 1.0).unwrap();
        let sol = solve_neumann(&v, n, 0.25).unwrap();
        BogoliubovCoefficients::build(&v, &sol, lattice::max_norm2_for_momentum(factor * n as f64)).unwrap()
    }

    fn zero_table(n: u64) -> BogoliubovCoefficients {
        let v = RadialPotential::zero();
        let sol = solve_neumann(&v, n, 0.25).unwrap();
        BogoliubovCoefficients::build(&v, &sol, 9).unwrap()
    }

    #[test]
    fn renormalized_potential_basics() {
        let v = RadialPotential::square_barrier(2.0, 1.0).unwrap();
        let sol = solve_neumann(&v, 20, 0.25).unwrap();
        assert_eq!(renormalized_potential(&v, &sol, 0.0).unwrap(), sol.integral_vf());
        let other = RadialPotential::square_barrier(3.0, 1.0).unwrap();
        assert!(matches!(renormalized_potential(&other, &sol, 1.0), Err(Error::Provenance(_))));
        let z = RadialPotential::zero();
        let zs = solve_neumann(&z, 20, 0.25).unwrap();
        assert_eq!(renormalized_potential(&z, &zs, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn renormalized_potential_flat_at_small_momentum() {
        let v = RadialPotential::square_barrier(2.0, 1.0).unwrap();
        let mut consts = Vec::new();
        for n in [10u64, 20, 40] {
            let sol = solve_neumann(&v, n, 0.25).unwrap();
            let g0 = sol.integral_vf();
            let mut c: f64 = 0.0;
            for i in 1..=n {
                let q = 2.0 * PI * i as f64;
                let g = renormalized_potential(&v, &sol, q).unwrap();
                c = c.max((g - g0).abs() * (n * n) as f64 / (q * q));
            }
            consts.push(c);
        }
        let (lo, hi) = consts.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi / lo < 1.5, "{consts:?}");
    }

    #[test]
    fn tau_trivial_and_f_g_identities() {
        assert_eq!(tau_of(3.0, 0.0, 0.0).unwrap(), 0.0);
        for &(q, eta, g) in &[(6.3, -0.02, 6.0), (20.0, -0.001, 5.5), (2.0, -0.3, 8.0)] {
            let tau = tau_of(q, eta, g).unwrap();
            let mu = eta + tau;
            let p2: f64 = q * q;
            let e2 = (2.0 * mu).exp();
            let f = p2 * (2.0 * mu).cosh() + g * e2;
            let gg = p2 * (2.0 * mu).sinh() + g * e2;
            assert!(gg.abs() < 1e-12 * f);
            let exact = (p2 * p2 + 2.0 * g * p2).sqrt();
            assert!((f - exact).abs() < 1e-12 * exact);
        }
        assert!(matches!(tau_of(0.0, 0.0, 1.0), Err(Error::HyperbolicDomain { .. })));
    }

    #[test]
    fn dispersion_values() {
        assert_eq!(dispersion(3.0, 0.0), 9.0);
        let d = dispersion(2.0 * PI, 1.0);
        assert!((d - 2.0 * PI * (4.0 * PI * PI + 16.0 * PI).sqrt()).abs() < 1e-12);
        assert!((d - 59.52).abs() < 0.01);
        for q in [1e2, 1e3, 1e4] {
            let gap = dispersion(q, 0.3) - q * q - 8.0 * PI * 0.3;
            assert!(gap.abs() < 2.0 * (8.0 * PI * 0.3).powi(2) / (q * q));
        }
    }

    #[test]
    fn second_order_sum_oracles() {
        assert_eq!(second_order_sum(0.0, 8).unwrap().value, 0.0);
        assert!(second_order_sum(1.0, 3).is_err());
        // small-a limit against the n^-4 lattice sum
        let t = ShellTable::build(200).unwrap();
        let z4 = lattice::sum_radial(&t, |q| (q / (2.0 * PI)).powi(-4), Tail::PowerLaw(4.0)).unwrap().total();
        assert!((z4 - 16.5323).abs() < 1e-3, "{z4}");
        let a = 1e-3;
        let r = second_order_sum(a, 40).unwrap().total() / a.powi(3);
        let oracle = -256.0 * PI.powi(3) * (2.0 * PI).powi(-4) * z4;
        assert!((r / oracle - 1.0).abs() < 0.01, "{r} vs {oracle}");
        // cutoff stability with tail corrections
        let x = second_order_sum(1.0, 50).unwrap().total();
        let y = second_order_sum(1.0, 100).unwrap().total();
        assert!((x - y).abs() < 1e-6 * y.abs(), "{x} vs {y}");
    }

    #[test]
    fn summand_matches_naive_form_where_stable() {
        for &(q, a) in &[(6.0, 1.0), (12.0, 0.3), (3.0, 2.0)] {
            let c = 8.0 * PI * a;
            let naive = q * q + c - (q.powi(4) + 2.0 * c * q * q).sqrt() - c * c / (2.0 * q * q);
            let stable = second_order_summand(q, a);
            assert!((naive - stable).abs() < 1e-10 * naive.abs().max(1.0), "{naive} {stable}");
        }
    }

    #[test]
    fn cube_sum_small_cases() {
        let s = cube_partial_sums(1);
        assert_eq!(2.0 - s[0], 2.0);
        let exact = 6.0 * 1f64.cos() + 6.0 * 2f64.sqrt().cos() + 8.0 / 3.0 * 3f64.sqrt().cos();
        assert!((s[1] - exact).abs() < 1e-14);
        assert!((2.0 - s[1] + 1.7493).abs() < 1e-4);
        assert!(e_lambda(7).is_err());
    }

    #[test]
    fn e_lambda_diagnostics() {
        let e = e_lambda(100).unwrap();
        assert!(e.value.is_finite() && e.band > 0.0);
        assert_eq!(e.partial_sums.len(), 101);
    }

    #[test]
    fn zero_potential_constants_vanish() {
        let c = zero_table(10);
        let rep = c_o1_identity_check(&c);
        assert_eq!(rep.c_gn.value, 0.0);
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
        let d = alpha_bound_check(&c, 1).unwrap();
        assert_eq!((d.sum_sup_sq, d.weighted, d.sup_v), (0.0, 0.0, 0.0));
        assert_eq!(cubic_kernel_nu(&[1, 0, 0], &[0, 1, 0], &c).unwrap(), 0.0);
    }

    #[test]
    fn coefficient_invariants_hold() {
        let c = table(20, 3.0);
        let inv = c.invariants();
        assert!(inv.max_hyperbolic_defect < 1e-12);
        assert!(inv.max_g_over_f < 1e-10);
        assert!(inv.max_f_rel_error < 1e-12);
        assert!(inv.min_f_tilde_margin >= 0.0);
        assert!(inv.max_gt_over_ft < 1.0);
        assert!(inv.max_tau_p4.is_finite());
    }

    #[test]
    fn product_term_factorizes() {
        let c = table(10, 3.0);
        let rep = c_gn_constant(&c);
        let t4 = rep.terms[4].1;
        let t = c.shells();
        let a = c.vhat[0] * c.eta[0] + sum_shells(&t, |n2| c.vhat[n2 as usize] * c.eta[n2 as usize]).value;
        let b = sum_shells(&t, |n2| c.sigma[n2 as usize].powi(2)).value;
        assert!((t4 - (-a * b / 10.0)).abs() <= 1e-12 * t4.abs());
        assert!((c_gn_product_term(&c) - t4).abs() <= 1e-12 * t4.abs());
    }

    #[test]
    fn pair_sums_match_brute_force() {
        let c = table(10, 3.0);
        let dom = Truncation::ball(4);
        let sg: Vec<f64> = c.sigma.iter().zip(&c.gamma).map(|(s, g)| s * g).collect();
        let f = |p: &Vec3, q: &Vec3| c.vhat[norm2(&lattice::sub(p, q)) as usize] * sg[norm2(p) as usize] * sg[norm2(q) as usize];
        let fast = lattice::sum_pairs(f, dom, dom, true).value;
        let brute = lattice::sum_pairs_brute(f, dom, dom);
        assert!((fast - brute).abs() <= 1e-12 * brute.abs());
    }

    #[test]
    fn nu_decomposition() {
        let c = table(20, 3.0);
        let mut worst: f64 = 0.0;
        let mut bound: f64 = 0.0;
        let pts = lattice::ball_points(16);
        for p in pts.iter().step_by(3) {
            for q in pts.iter().step_by(5) {
                if norm2(&lattice::add(p, q)) == 0 {
                    assert!(cubic_kernel_nu(p, q, &c).is_err());
                    continue;
                }
                let lhs = cubic_kernel_nu(p, q, &c).unwrap() + cubic_kernel_nu(q, p, &c).unwrap();
                let rhs = nu_sum_decomposition(p, q, &c);
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-300));
                let (ip, iq) = (norm2(p) as f64, norm2(q) as f64);
                bound = bound.max(cubic_kernel_nu(p, q, &c).unwrap().abs() * ip * iq * TWO_PI_SQ * TWO_PI_SQ);
            }
        }
        assert!(worst < 1e-12, "{worst}");
        assert!(bound.is_finite());
    }

    #[test]
    fn alpha_fft_matches_direct_sum() {
        let c = table(10, 3.0);
        let k = 2;
        // all r, v with |n| ≤ 2: compare the largest |α| to the direct sum
        let dom = Truncation::ball(k);
        let ball = dom.points();
        let mut sup_direct = Vec::new();
        for (v, mult) in dom.fundamental_domain() {
            let s: f64 = ball.iter().map(|r| alpha_direct(&c, k, r, &v).abs()).fold(0.0, f64::max);
            sup_direct.push(mult as f64 * s * s);
        }
        let d = alpha_bound_check(&c, k).unwrap();
        let q1: f64 = sup_direct.iter().sum();
        assert!((d.sum_sup_sq - q1).abs() < 1e-10 * q1, "{} vs {q1}", d.sum_sup_sq);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hyperbolic_construction(q in 6.0f64..400.0, eta in -0.2f64..0.0, g in 0.0f64..30.0) {
            if let Ok(tau) = tau_of(q, eta, g) {
                let mu = eta + tau;
                prop_assert!((mu.cosh().powi(2) - mu.sinh().powi(2) - 1.0).abs() < 1e-12);
                let p2 = q * q;
                let e2 = (2.0 * mu).exp();
                let f = p2 * (2.0 * mu).cosh() + g * e2;
                let gg = p2 * (2.0 * mu).sinh() + g * e2;
                prop_assert!(gg.abs() <= 1e-10 * f);
            }
        }

        #[test]
        fn summand_is_nonpositive(q in 1.0f64..1e4, a in 0.0f64..5.0) {
            prop_assert!(second_order_summand(q, a) <= 0.0);
        }
    }
}
