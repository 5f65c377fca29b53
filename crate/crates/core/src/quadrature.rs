//! One-dimensional quadrature: a globally adaptive Gauss–Kronrod (7, 15)
//! driver and cached Gauss–Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::lattice::NeumaierSum;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// Integral of |f|, used as the round-off floor.
    pub abs_integral: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    // ties broken by position so the refinement order is fully determined
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand at x = {c}")));
    }
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv = [(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand near x = {}", c - dx)));
        }
        fv[j] = (f1, f2);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let value = resk * h;
    let abs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut error = ((resk - resg) * h).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs);
    }
    Ok(Segment { a, b, value, error, abs })
}

/// Globally adaptive Gauss–Kronrod integrator. Deterministic: the segment to
/// bisect is always the one with the largest error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator { rel_tol: 1e-10, abs_tol: 0.0, max_segments: 4000 }
    }
}

impl Integrator {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Integrator { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Estimate> {
        self.integrate_breaks(f, &[a, b])
    }

    /// Integrates over `[breaks[0], breaks[last]]` starting from the given
    /// partition (use it to put kinks and jumps on segment edges).
    pub fn integrate_breaks<F: FnMut(f64) -> f64>(&self, mut f: F, breaks: &[f64]) -> Result<Estimate> {
        if breaks.len() < 2 {
            return Err(Error::Quadrature("need at least one interval".into()));
        }
        let mut heap = BinaryHeap::with_capacity(2 * breaks.len());
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                heap.push(gk15(&mut f, w[0], w[1])?);
            }
        }
        loop {
            let (value, error, abs) = totals(&heap);
            let tol = self
                .abs_tol
                .max(self.rel_tol * value.abs())
                .max(64.0 * f64::EPSILON * abs);
            if error <= tol {
                return Ok(Estimate { value, error, abs_integral: abs, segments: heap.len() });
            }
            if heap.len() >= self.max_segments {
                let worst = heap.peek().copied();
                return Err(Error::Quadrature(format!(
                    "{} segments, value {value:e}, error {error:e} > tol {tol:e}, worst segment {:?}",
                    heap.len(),
                    worst.map(|s| (s.a, s.b, s.error))
                )));
            }
            let worst = heap.pop().expect("non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // interval exhausted at machine resolution; accept what we have
                heap.push(Segment { error: 0.0, ..worst });
                continue;
            }
            heap.push(gk15(&mut f, worst.a, mid)?);
            heap.push(gk15(&mut f, mid, worst.b)?);
        }
    }
}

fn totals(heap: &BinaryHeap<Segment>) -> (f64, f64, f64) {
    // sum in position order, not heap order
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut v = NeumaierSum::default();
    let mut e = 0.0;
    let mut s = 0.0;
    for seg in segs {
        v.add(seg.value);
        e += seg.error;
        s += seg.abs;
    }
    (v.value(), e, s)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

/// The 32-point rule used for fixed panel quadrature.
pub fn gl32() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// Nodes and weights of a composite Gauss–Legendre rule on `[a, b]`.
pub fn composite_gl(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let rule = gl32();
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.len());
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let c = lo + 0.5 * h;
        for &(x, w) in rule {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let est = Integrator::default().integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0).unwrap();
        assert!((est.value - 0.0).abs() < 1e-14);
        let est = Integrator::default().integrate(|x| x.powi(4), -1.0, 1.0).unwrap();
        assert!((est.value - 0.4).abs() < 1e-15);
    }

    #[test]
    fn endpoint_singularity() {
        // integrable 1/sqrt singularity at 0
        let est = Integrator::new(1e-10, 0.0).integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert!((est.value - 2.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn divergent_integrand_reports() {
        let r = Integrator::new(1e-10, 0.0).integrate(|x| 1.0 / (x * x), 0.0, 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn gl_rule_integrates_exactly() {
        let s: f64 = composite_gl(0.0, 3.0, 4).iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert!((s - 3f64.powi(10) / 10.0).abs() < 1e-9);
    }
}
