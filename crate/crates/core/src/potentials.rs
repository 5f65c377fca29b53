//! Radial interaction potentials and their three-dimensional Fourier
//! transforms.
//!
//! Units: torus units with hbar = 2m = 1; momenta live in 2πZ³.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Integrator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    SquareBarrier,
    SmoothBump,
    Tabulated,
}

impl PotentialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PotentialKind::SquareBarrier => "square_barrier",
            PotentialKind::SmoothBump => "smooth_bump",
            PotentialKind::Tabulated => "tabulated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "square_barrier" => Ok(PotentialKind::SquareBarrier),
            "smooth_bump" => Ok(PotentialKind::SmoothBump),
            "tabulated" => Ok(PotentialKind::Tabulated),
            other => Err(Error::invalid(
                "potential.kind",
                format!("unknown kind `{other}` (expected square_barrier, smooth_bump or tabulated)"),
            )),
        }
    }
}

/// Nonnegative, compactly supported, bounded radial potential.
///
/// * `SquareBarrier`: V₀ on [0, R₀].
/// * `SmoothBump`: V₀(1 − r²/R₀²)³ on [0, R₀], C² at the edge.
/// * `Tabulated`: piecewise linear through the samples, zero past the last
///   node (which sets R₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPotential {
    kind: PotentialKind,
    v0: f64,
    radius: f64,
    samples: Option<Vec<(f64, f64)>>,
}

impl RadialPotential {
    pub fn square_barrier(v0: f64, radius: f64) -> Result<Self> {
        check_amplitude(v0)?;
        check_radius(radius)?;
        Ok(RadialPotential { kind: PotentialKind::SquareBarrier, v0, radius, samples: None })
    }

    pub fn smooth_bump(v0: f64, radius: f64) -> Result<Self> {
        check_amplitude(v0)?;
        check_radius(radius)?;
        Ok(RadialPotential { kind: PotentialKind::SmoothBump, v0, radius, samples: None })
    }

    /// V ≡ 0, represented as a zero-height barrier of unit range.
    pub fn zero() -> Self {
        RadialPotential { kind: PotentialKind::SquareBarrier, v0: 0.0, radius: 1.0, samples: None }
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("potential.table", "need at least two samples"));
        }
        if samples[0].0 < 0.0 {
            return Err(Error::invalid("potential.table", "radii must be nonnegative"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid(
                    "potential.table",
                    format!("radii must be strictly increasing (at r = {})", w[1].0),
                ));
            }
        }
        for &(r, v) in &samples {
            if !r.is_finite() || !v.is_finite() {
                return Err(Error::invalid("potential.table", "non-finite sample"));
            }
            if v < 0.0 {
                return Err(Error::invalid("potential.table", format!("V({r}) = {v} is negative")));
            }
        }
        let radius = samples.last().unwrap().0;
        check_radius(radius)?;
        let v0 = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        Ok(RadialPotential { kind: PotentialKind::Tabulated, v0, radius, samples: Some(samples) })
    }

    /// Reads a two-column text table (r, V(r)); `#` starts a comment.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), reason: e.to_string() })?;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::invalid("potential.table", format!("line {}: cannot parse `{s}`", lineno + 1))
                })
            };
            if cols.len() != 2 {
                return Err(Error::invalid(
                    "potential.table",
                    format!("line {}: expected two columns", lineno + 1),
                ));
            }
            samples.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::tabulated(samples)
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// Peak height V₀ (the sample maximum for tables).
    pub fn amplitude(&self) -> f64 {
        self.v0
    }

    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    pub fn samples(&self) -> Option<&[(f64, f64)]> {
        self.samples.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.v0 == 0.0
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.radius {
            return 0.0;
        }
        match self.kind {
            PotentialKind::SquareBarrier => self.v0,
            PotentialKind::SmoothBump => {
                let t = 1.0 - (r / self.radius).powi(2);
                self.v0 * t * t * t
            }
            PotentialKind::Tabulated => {
                let s = self.samples.as_ref().expect("tabulated has samples");
                if r <= s[0].0 {
                    return s[0].1;
                }
                let i = s.partition_point(|p| p.0 < r);
                let (r0, v0) = s[i - 1];
                let (r1, v1) = s[i];
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// Points where V is not smooth; quadratures split there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.samples {
            Some(s) => {
                let mut b: Vec<f64> = s.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
                b.insert(0, 0.0);
                b
            }
            None => vec![0.0, self.radius],
        }
    }

    /// ∫₀^∞ V(r)³ r² dr.
    pub fn l3_integral(&self) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let est = Integrator::new(1e-12, 0.0)
            .integrate_breaks(|r| self.value(r).powi(3) * r * r, &self.breakpoints())?;
        Ok(est.value)
    }
}

fn check_amplitude(v0: f64) -> Result<()> {
    if !v0.is_finite() || v0 < 0.0 {
        return Err(Error::invalid("potential.v0", format!("must be finite and >= 0, got {v0}")));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid("potential.radius", format!("must be finite and > 0, got {r}")));
    }
    Ok(())
}

/// Switch to half-period panels above this many radians across the support.
pub const OSCILLATORY_THRESHOLD: f64 = 50.0;

/// Radial 3D Fourier transform (4π/q)∫₀^R f(r) r sin(qr) dr of a function
/// supported in [0, R], with `breaks` a partition of [0, R] (first 0, last R).
pub fn fourier_radial_with<F: Fn(f64) -> f64>(f: F, breaks: &[f64], q: f64, rel_tol: f64) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::invalid("q", format!("momentum must be finite and >= 0, got {q}")));
    }
    let support = *breaks.last().unwrap_or(&0.0);
    if support <= 0.0 {
        return Ok(0.0);
    }
    let integ = Integrator::new(rel_tol, 0.0);
    let wrap = |e: Error| match e {
        Error::Quadrature(msg) => Error::DivergentTransform(msg),
        other => other,
    };
    if q == 0.0 {
        let est = integ.integrate_breaks(|r| f(r) * r * r, breaks).map_err(wrap)?;
        return Ok(4.0 * PI * est.value);
    }
    let mut parts: Vec<f64> = breaks.to_vec();
    if q * support > OSCILLATORY_THRESHOLD {
        // panel edges at the zeros of sin(qr)
        let half = PI / q;
        let n = (support / half).floor() as usize;
        parts.extend((1..=n).map(|k| k as f64 * half).filter(|&x| x < support));
        parts.sort_by(f64::total_cmp);
        parts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * support);
    }
    let est = integ.integrate_breaks(|r| f(r) * r * (q * r).sin(), &parts).map_err(wrap)?;
    Ok(4.0 * PI * est.value / q)
}

/// Radial Fourier transform of `f` supported in [0, support].
pub fn fourier_radial<F: Fn(f64) -> f64>(f: F, support: f64, q: f64) -> Result<f64> {
    fourier_radial_with(f, &[0.0, support], q, 1e-10)
}

/// Fourier transform of the indicator of the ball of radius `radius`:
/// 4π(sin x − x cos x)/q³ with x = q·radius.
pub fn ball_transform(radius: f64, q: f64) -> f64 {
    let q = q.abs();
    let x = q * radius;
    if x < 2e-2 {
        let x2 = x * x;
        return 4.0 * PI * radius.powi(3) * (1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0);
    }
    4.0 * PI * (x.sin() - x * x.cos()) / (q * q * q)
}

/// V̂(q); even in q, V̂(0) = 4π∫V r² dr.
pub fn v_hat(v: &RadialPotential, q: f64) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    let q = q.abs();
    match v.kind {
        PotentialKind::SquareBarrier => Ok(v.v0 * ball_transform(v.radius, q)),
        _ => fourier_radial_with(|r| v.value(r), &v.breakpoints(), q, 1e-11),
    }
}
