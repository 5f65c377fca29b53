//! Sums over the dual lattice 2πZ³: shell tables, octahedral symmetry
//! reduction, compensated summation with a thread-count independent
//! reduction order, and integral tail estimates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Integrator;

pub type Vec3 = [i32; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> i64 {
    a[0] as i64 * b[0] as i64 + a[1] as i64 * b[1] as i64 + a[2] as i64 * b[2] as i64
}

#[inline]
pub fn norm2(a: &Vec3) -> i64 {
    dot(a, a)
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Momentum magnitude 2π√n2 of a shell.
#[inline]
pub fn shell_momentum(n2: u64) -> f64 {
    2.0 * PI * (n2 as f64).sqrt()
}

/// Largest n2 with 2π√n2 ≤ p.
pub fn max_norm2_for_momentum(p: f64) -> u64 {
    if !(p > 0.0) {
        return 0;
    }
    let mut m = (p * p / (4.0 * PI * PI)).floor() as u64;
    while m > 0 && shell_momentum(m) > p {
        m -= 1;
    }
    while shell_momentum(m + 1) <= p {
        m += 1;
    }
    m
}

/// Truncation of the index set: a ball |n|² ≤ max_norm2 (every sum
/// except e_Λ) or a cube max|n_i| ≤ half_width (e_Λ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Ball { max_norm2: u64 },
    Cube { half_width: u32 },
}

impl Truncation {
    /// Ball |n| ≤ k.
    pub fn ball(k: u32) -> Self {
        Truncation::Ball { max_norm2: k as u64 * k as u64 }
    }

    pub fn cube(k: u32) -> Self {
        Truncation::Cube { half_width: k }
    }

    /// Largest |n|² inside the truncation.
    pub fn max_norm2(&self) -> u64 {
        match *self {
            Truncation::Ball { max_norm2 } => max_norm2,
            Truncation::Cube { half_width } => 3 * half_width as u64 * half_width as u64,
        }
    }

    pub fn contains(&self, v: &Vec3) -> bool {
        match *self {
            Truncation::Ball { max_norm2 } => (norm2(v) as u64) <= max_norm2,
            Truncation::Cube { half_width } => v.iter().all(|c| c.unsigned_abs() <= half_width),
        }
    }

    fn extent(&self) -> i32 {
        match *self {
            Truncation::Ball { max_norm2 } => isqrt(max_norm2) as i32,
            Truncation::Cube { half_width } => half_width as i32,
        }
    }

    /// Nonzero lattice points inside, lexicographic order.
    pub fn points(&self) -> Vec<Vec3> {
        match *self {
            Truncation::Ball { max_norm2 } => ball_points(max_norm2),
            Truncation::Cube { .. } => {
                let k = self.extent();
                let mut out = Vec::new();
                for x in -k..=k {
                    for y in -k..=k {
                        for z in -k..=k {
                            if x != 0 || y != 0 || z != 0 {
                                out.push([x, y, z]);
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Orbit representatives x ≥ y ≥ z ≥ 0 with orbit sizes, ordered by
    /// (|n|², lexicographic).
    pub fn fundamental_domain(&self) -> Vec<(Vec3, u64)> {
        let k = self.extent();
        let mut out = Vec::new();
        for x in 0..=k {
            for y in 0..=x {
                for z in 0..=y {
                    let v = [x, y, z];
                    if (x, y, z) == (0, 0, 0) || !self.contains(&v) {
                        continue;
                    }
                    out.push((v, orbit_size(&v)));
                }
            }
        }
        out.sort_by_key(|(v, _)| (norm2(v), *v));
        out
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
    abs: f64,
    n: u64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += x.abs();
        self.n += 1;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        let (n, abs) = (self.n, self.abs);
        self.add(other.sum);
        self.comp += other.comp;
        self.abs = abs + other.abs;
        self.n = n + other.n;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn abs_sum(&self) -> f64 {
        self.abs
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Bound on the rounding error left after compensation,
    /// 2u|S| + n u² Σ|x|.
    pub fn error_bound(&self) -> f64 {
        let u = f64::EPSILON / 2.0;
        2.0 * u * self.value().abs() + self.n as f64 * u * u * self.abs
    }
}

/// Pairwise tree reduction with a fixed shape for a given input length.
pub fn tree_reduce(parts: &[NeumaierSum]) -> NeumaierSum {
    match parts.len() {
        0 => NeumaierSum::default(),
        1 => parts[0],
        n => {
            let mut left = tree_reduce(&parts[..n / 2]);
            left.merge(&tree_reduce(&parts[n / 2..]));
            left
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummationResult {
    pub value: f64,
    /// Rounding-error bound after compensation (always ≥ 0).
    pub comp_bound: f64,
    /// Integral estimate of the omitted terms beyond the cutoff; NaN when
    /// no tail model was declared or the summand oscillates.
    pub tail_estimate: f64,
    /// Momentum cutoff 2π√max_norm2.
    pub cutoff: f64,
    pub max_norm2: u64,
    pub n_terms: u64,
}

impl SummationResult {
    fn from_acc(acc: &NeumaierSum, max_norm2: u64, n_terms: u64) -> Self {
        SummationResult {
            value: acc.value(),
            comp_bound: acc.error_bound(),
            tail_estimate: f64::NAN,
            cutoff: shell_momentum(max_norm2),
            max_norm2,
            n_terms,
        }
    }

    /// Value plus tail when a finite tail estimate exists.
    pub fn total(&self) -> f64 {
        if self.tail_estimate.is_finite() {
            self.value + self.tail_estimate
        } else {
            self.value
        }
    }
}

/// Number of distinct images of `rep` under the 48 signed permutations.
pub fn orbit_size(rep: &Vec3) -> u64 {
    let mut a = [rep[0].unsigned_abs(), rep[1].unsigned_abs(), rep[2].unsigned_abs()];
    a.sort_unstable();
    let perms = if a[0] == a[1] && a[1] == a[2] {
        1
    } else if a[0] == a[1] || a[1] == a[2] {
        3
    } else {
        6
    };
    let nonzero = a.iter().filter(|&&x| x != 0).count() as u32;
    perms * 2u64.pow(nonzero)
}

/// The 48 elements of the octahedral group as (permutation, signs).
pub fn octahedral_group() -> Vec<([usize; 3], [i32; 3])> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut g = Vec::with_capacity(48);
    for p in PERMS {
        for s in 0..8 {
            let signs = [
                if s & 1 == 0 { 1 } else { -1 },
                if s & 2 == 0 { 1 } else { -1 },
                if s & 4 == 0 { 1 } else { -1 },
            ];
            g.push((p, signs));
        }
    }
    g
}

#[inline]
pub fn apply_group(g: &([usize; 3], [i32; 3]), v: &Vec3) -> Vec3 {
    [g.1[0] * v[g.0[0]], g.1[1] * v[g.0[1]], g.1[2] * v[g.0[2]]]
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// All n ∈ Z³ \ {0} with |n|² ≤ max_norm2, in lexicographic order.
pub fn ball_points(max_norm2: u64) -> Vec<Vec3> {
    let k = isqrt(max_norm2) as i32;
    let mut out = Vec::new();
    for x in -k..=k {
        let rx = max_norm2 - (x as i64 * x as i64) as u64;
        let ky = isqrt(rx) as i32;
        for y in -ky..=ky {
            let ry = rx - (y as i64 * y as i64) as u64;
            let kz = isqrt(ry) as i32;
            for z in -kz..=kz {
                if x != 0 || y != 0 || z != 0 {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Squared-norm shells of a truncated nonzero lattice with representation
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellTable {
    pub truncation: Truncation,
    /// Largest |n|² present (K² for a ball of radius K).
    pub max_norm2: u64,
    /// (n2, count) for every represented n2 in increasing order.
    pub shells: Vec<(u64, u64)>,
    /// Number of nonzero lattice points inside the truncation.
    pub total_points: u64,
}

pub const DEFAULT_MAX_SHELL_RADIUS: u32 = 2048;

impl ShellTable {
    /// Ball shells with |n| ≤ K.
    pub fn build(k: u32) -> Result<Self> {
        Self::build_with_limit(k, DEFAULT_MAX_SHELL_RADIUS)
    }

    pub fn build_with_limit(k: u32, limit: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::precondition("lattice", "shell cutoff K must be >= 1"));
        }
        if k > limit {
            return Err(Error::Budget(format!("shell cutoff K = {k} exceeds the memory guard {limit}")));
        }
        Ok(Self::new(Truncation::ball(k)))
    }

    /// Ball shells with |n|² ≤ max_norm2.
    pub fn from_max_norm2(max_norm2: u64) -> Self {
        Self::new(Truncation::Ball { max_norm2 })
    }

    pub fn new(truncation: Truncation) -> Self {
        let max_norm2 = truncation.max_norm2();
        let mut counts = vec![0u64; max_norm2 as usize + 1];
        for (v, m) in truncation.fundamental_domain() {
            counts[norm2(&v) as usize] += m;
        }
        let shells: Vec<(u64, u64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(n2, &c)| (n2 as u64, c))
            .collect();
        let total_points = shells.iter().map(|s| s.1).sum();
        ShellTable { truncation, max_norm2, shells, total_points }
    }

    pub fn count(&self, n2: u64) -> u64 {
        match self.shells.binary_search_by_key(&n2, |s| s.0) {
            Ok(i) => self.shells[i].1,
            Err(_) => 0,
        }
    }

    /// Radius (in units of 2π) of the ball whose volume equals the number
    /// of lattice points inside the truncation, origin included.
    pub fn effective_radius(&self) -> f64 {
        (3.0 * (self.total_points + 1) as f64 / (4.0 * PI)).cbrt()
    }
}

/// Declared large-|p| behaviour of a radial summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "exponent")]
pub enum Tail {
    /// No tail estimate requested.
    None,
    /// |f(q)| ~ q^(-k) with k > 3: the tail integral converges.
    PowerLaw(f64),
    /// Oscillating summand: no tail estimate is meaningful.
    Oscillatory,
}

/// (2π)⁻³ 4π ∫_{q0}^∞ f(q) q² dq for a summand decaying faster than q⁻³.
pub fn tail_integral<F: Fn(f64) -> f64>(f: &F, q0: f64, exponent: f64) -> Result<f64> {
    if !(exponent > 3.0) {
        return Err(Error::precondition(
            "lattice",
            format!("tail exponent {exponent} <= 3: the tail sum diverges"),
        ));
    }
    // q = q0/t maps [q0, ∞) onto (0, 1]
    let est = Integrator::new(1e-12, 0.0).integrate(
        |t| {
            if t <= 0.0 {
                return 0.0;
            }
            let q = q0 / t;
            f(q) * q0 * q0 * q0 / (t * t * t * t)
        },
        0.0,
        1.0,
    )?;
    Ok(4.0 * PI * est.value / (2.0 * PI).powi(3))
}

/// Σ over shells of count·f(n2), shells in increasing order.
pub fn sum_shells<F: Fn(u64) -> f64>(table: &ShellTable, f: F) -> SummationResult {
    let mut acc = NeumaierSum::default();
    for &(n2, c) in &table.shells {
        acc.add(c as f64 * f(n2));
    }
    SummationResult::from_acc(&acc, table.max_norm2, table.total_points)
}

/// Σ_{p ∈ 2πZ³\{0}, |p| ≤ cutoff} f(|p|), with an optional tail estimate
/// starting at the effective radius of the truncated ball.
pub fn try_sum_radial<F: Fn(f64) -> Result<f64>>(table: &ShellTable, f: F, tail: Tail) -> Result<SummationResult> {
    let mut acc = NeumaierSum::default();
    for &(n2, c) in &table.shells {
        let v = f(shell_momentum(n2))?;
        acc.add(c as f64 * v);
    }
    let mut res = SummationResult::from_acc(&acc, table.max_norm2, table.total_points);
    if let Tail::PowerLaw(k) = tail {
        let q0 = 2.0 * PI * table.effective_radius();
        let failure = std::cell::RefCell::new(None);
        let g = |q: f64| match f(q) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let t = tail_integral(&g, q0, k)?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        res.tail_estimate = t;
    }
    Ok(res)
}

pub fn sum_radial<F: Fn(f64) -> f64>(table: &ShellTable, f: F, tail: Tail) -> Result<SummationResult> {
    try_sum_radial(table, |q| Ok(f(q)), tail)
}

/// Representatives per parallel work unit.
const PAIR_CHUNK: usize = 8;

fn check_invariance<const M: usize, F>(f: &F, reps: &[(Vec3, u64)], vs: &[Vec3])
where
    F: Fn(&Vec3, &Vec3) -> [f64; M],
{
    let group = octahedral_group();
    for (r, _) in reps.iter().take(3) {
        for v in vs.iter().step_by((vs.len() / 4).max(1)).take(4) {
            let base = f(r, v);
            for g in &group {
                let moved = f(&apply_group(g, r), &apply_group(g, v));
                for m in 0..M {
                    let scale = base[m].abs().max(1e-300);
                    assert!(
                        (moved[m] - base[m]).abs() <= 1e-9 * scale,
                        "sum_pairs: summand component {m} is not octahedrally invariant at r={r:?}, v={v:?}"
                    );
                }
            }
        }
    }
}

/// Σ_{r,v} F(r, v) for nonzero r inside `r_dom` and nonzero v inside
/// `v_dom`, componentwise for `M` summands at once. With `symmetry` the r sum runs over a fundamental domain of the
/// octahedral group weighted by orbit sizes; F must then satisfy
/// F(gr, gv) = F(r, v) (checked on samples in debug builds).
///
/// Work is split into fixed chunks of representatives; chunk partial sums
/// are combined by a fixed pairwise tree, so the result does not depend on
/// the number of threads.
pub fn sum_pairs_multi<const M: usize, F>(
    f: F,
    r_dom: Truncation,
    v_dom: Truncation,
    symmetry: bool,
) -> [SummationResult; M]
where
    F: Fn(&Vec3, &Vec3) -> [f64; M] + Sync,
{
    let reps: Vec<(Vec3, u64)> = if symmetry {
        r_dom.fundamental_domain()
    } else {
        r_dom.points().into_iter().map(|v| (v, 1)).collect()
    };
    let vs = v_dom.points();
    if symmetry && cfg!(debug_assertions) {
        check_invariance(&f, &reps, &vs);
    }
    let partials: Vec<[NeumaierSum; M]> = reps
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut acc = [NeumaierSum::default(); M];
            for (r, mult) in chunk {
                let w = *mult as f64;
                let mut inner = [NeumaierSum::default(); M];
                for v in &vs {
                    let vals = f(r, v);
                    for m in 0..M {
                        inner[m].add(vals[m]);
                    }
                }
                for m in 0..M {
                    let mut scaled = inner[m];
                    scaled.sum *= w;
                    scaled.comp *= w;
                    scaled.abs *= w;
                    scaled.n *= *mult;
                    acc[m].merge(&scaled);
                }
            }
            acc
        })
        .collect();
    let n_terms = reps.iter().map(|r| r.1).sum::<u64>() * vs.len() as u64;
    let max_n2 = r_dom.max_norm2().max(v_dom.max_norm2());
    std::array::from_fn(|m| {
        let column: Vec<NeumaierSum> = partials.iter().map(|p| p[m]).collect();
        let total = tree_reduce(&column);
        SummationResult::from_acc(&total, max_n2, n_terms)
    })
}

pub fn sum_pairs<F>(f: F, r_dom: Truncation, v_dom: Truncation, symmetry: bool) -> SummationResult
where
    F: Fn(&Vec3, &Vec3) -> f64 + Sync,
{
    let [res] = sum_pairs_multi(|r, v| [f(r, v)], r_dom, v_dom, symmetry);
    res
}

/// Plain nested loop over both balls, no symmetry, no threads, naive
/// summation order. Oracle for `sum_pairs`.
pub fn sum_pairs_brute<F: Fn(&Vec3, &Vec3) -> f64>(f: F, r_dom: Truncation, v_dom: Truncation) -> f64 {
    let rs = r_dom.points();
    let vs = v_dom.points();
    let mut acc = NeumaierSum::default();
    for r in &rs {
        for v in &vs {
            acc.add(f(r, v));
        }
    }
    acc.value()
}

/// Cube-layer sums L(M) = Σ_{max|n_i| = M} f(|n|²) for M = 0..=m_max
/// (L(0) = 0). Partial cube sums are prefix sums of the layers.
pub fn cube_layer_sums<F: Fn(u64) -> f64 + Sync>(m_max: u32, f: F) -> Vec<f64> {
    let m = m_max as u64;
    let cache: Vec<f64> = (0..=3 * m * m).into_par_iter().map(|n2| if n2 == 0 { 0.0 } else { f(n2) }).collect();
    let mut layers = vec![0.0; m_max as usize + 1];
    for mm in 1..=m_max as i32 {
        let mut acc = NeumaierSum::default();
        for b in 0..=mm {
            for c in 0..=b {
                let rep = [mm, b, c];
                let n2 = norm2(&rep) as usize;
                acc.add(orbit_size(&rep) as f64 * cache[n2]);
            }
        }
        layers[mm as usize] = acc.value();
    }
    layers
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn legendre_excluded(mut n: u64) -> bool {
        if n == 0 {
            return false;
        }
        while n % 4 == 0 {
            n /= 4;
        }
        n % 8 == 7
    }

    #[test]
    fn first_shells() {
        // the unit cube around the origin
        let t = ShellTable::new(Truncation::cube(1));
        assert_eq!(t.shells, vec![(1, 6), (2, 12), (3, 8)]);
        let t = ShellTable::new(Truncation::cube(2));
        for (n2, c) in [(1, 6), (2, 12), (3, 8), (4, 6), (5, 24), (6, 24), (8, 12)] {
            assert_eq!(t.count(n2), c);
        }
        assert_eq!(t.count(7), 0);
        // the ball of radius 1 only has the unit vectors
        assert_eq!(ShellTable::build(1).unwrap().shells, vec![(1, 6)]);
    }

    #[test]
    fn counts_match_enumeration() {
        for k in 1..=20u32 {
            let t = ShellTable::build(k).unwrap();
            let brute = ball_points(k as u64 * k as u64).len() as u64;
            let mut direct = 0;
            let kk = k as i32;
            for x in -kk..=kk {
                for y in -kk..=kk {
                    for z in -kk..=kk {
                        let n2 = x * x + y * y + z * z;
                        if n2 > 0 && n2 <= kk * kk {
                            direct += 1;
                        }
                    }
                }
            }
            assert_eq!(t.total_points, direct);
            assert_eq!(brute, direct);
        }
    }

    #[test]
    fn legendre_three_square() {
        let t = ShellTable::build(100).unwrap();
        for n2 in 1..=10_000u64 {
            assert_eq!(t.count(n2) == 0, legendre_excluded(n2), "n2 = {n2}");
        }
    }

    #[test]
    fn memory_guard() {
        assert!(matches!(ShellTable::build(5000), Err(Error::Budget(_))));
        assert!(ShellTable::build(0).is_err());
    }

    #[test]
    fn radial_point_count() {
        let t = ShellTable::new(Truncation::cube(1));
        assert_eq!(sum_radial(&t, |_| 1.0, Tail::None).unwrap().value, 26.0);
        let t = ShellTable::build(1).unwrap();
        assert_eq!(sum_radial(&t, |_| 1.0, Tail::None).unwrap().value, 6.0);
    }

    #[test]
    fn power_law_tail_tracks_cutoff_change() {
        let f = |q: f64| q.powi(-4);
        let a = sum_radial(&ShellTable::build(20).unwrap(), f, Tail::PowerLaw(4.0)).unwrap();
        let b = sum_radial(&ShellTable::build(40).unwrap(), f, Tail::PowerLaw(4.0)).unwrap();
        let diff = b.value - a.value;
        let tail_diff = a.tail_estimate - b.tail_estimate;
        assert!((diff - tail_diff).abs() < 0.02 * diff.abs(), "{diff} vs {tail_diff}");
        // totals agree far better than the raw values
        assert!((a.total() - b.total()).abs() < 0.05 * diff.abs());
    }

    #[test]
    fn oscillatory_refuses_tail() {
        let t = ShellTable::build(5).unwrap();
        let r = sum_radial(&t, |q| (0.7 * q).cos(), Tail::Oscillatory).unwrap();
        assert!(r.tail_estimate.is_nan());
        assert!(sum_radial(&t, |q| q.powi(-2), Tail::PowerLaw(2.0)).is_err());
    }

    #[test]
    fn radial_errors_propagate() {
        let t = ShellTable::build(3).unwrap();
        let r = try_sum_radial(&t, |q| if q > 10.0 { Err(Error::Solver("boom".into())) } else { Ok(1.0) }, Tail::None);
        assert!(r.is_err());
    }

    #[test]
    fn pair_count_and_parity() {
        let c = Truncation::cube(1);
        assert_eq!(sum_pairs(|_, _| 1.0, c, c, true).value, 676.0);
        let b = Truncation::ball(1);
        assert_eq!(sum_pairs(|_, _| 1.0, b, b, true).value, 36.0);
        let odd = sum_pairs(
            |r, v| dot(r, v) as f64 / (norm2(r) as f64 * norm2(v) as f64),
            Truncation::ball(3),
            Truncation::ball(3),
            true,
        );
        assert!(odd.value.abs() < 1e-12, "{}", odd.value);
    }

    #[test]
    fn symmetry_reduction_matches_brute_force() {
        let fs: [fn(&Vec3, &Vec3) -> f64; 5] = [
            |r, v| 1.0 / (norm2(r) as f64 * (1.0 + norm2(v) as f64)),
            |r, v| (dot(r, v) as f64).powi(2) / ((norm2(r) * norm2(v)) as f64).powf(1.5),
            |r, v| (0.3 * norm2(&add(r, v)) as f64).cos() / norm2(r) as f64,
            |r, v| (dot(r, v) as f64 - norm2(v) as f64) / ((norm2(r) + norm2(v) + dot(r, v)) as f64 * norm2(r) as f64),
            |r, v| (-(norm2(&sub(r, v)) as f64) / 7.0).exp() * (1.0 + dot(r, v) as f64),
        ];
        for k in 1..=6u32 {
            for dom in [Truncation::ball(k), Truncation::cube(k)] {
              for f in fs {
                let red = sum_pairs(f, dom, dom, true).value;
                let brute = sum_pairs_brute(f, dom, dom);
                assert!((red - brute).abs() <= 1e-12 * brute.abs().max(1e-300), "k={k}: {red} vs {brute}");
              }
            }
        }
    }

    #[test]
    fn pair_sums_identical_across_thread_counts() {
        let f = |r: &Vec3, v: &Vec3| {
            let s = add(r, v);
            (norm2(&s) as f64 + 1.0).ln() / (norm2(r) as f64 * norm2(v) as f64)
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sum_pairs(f, Truncation::ball(6), Truncation::ball(6), true))
        };
        let a = run(1);
        for t in [4, 16] {
            let b = run(t);
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.comp_bound.to_bits(), b.comp_bound.to_bits());
        }
    }

    #[test]
    #[should_panic(expected = "not octahedrally invariant")]
    fn debug_mode_catches_non_invariant_summand() {
        sum_pairs(|r, _| r[0] as f64, Truncation::ball(2), Truncation::ball(2), true);
    }

    #[test]
    fn cube_layers_small() {
        let l = cube_layer_sums(2, |_| 1.0);
        assert_eq!(l, vec![0.0, 26.0, 98.0]);
    }

    #[test]
    fn momentum_cutoff_conversion() {
        assert_eq!(max_norm2_for_momentum(2.0 * PI), 1);
        assert_eq!(max_norm2_for_momentum(2.0 * PI - 1e-9), 0);
        assert_eq!(max_norm2_for_momentum(4.0 * PI), 4);
        assert_eq!(max_norm2_for_momentum(48.0), 58);
    }

    proptest! {
        #[test]
        fn orbit_sizes_match_group_images(x in -6i32..=6, y in -6i32..=6, z in -6i32..=6) {
            let v = [x, y, z];
            let mut imgs: Vec<Vec3> = octahedral_group().iter().map(|g| apply_group(g, &v)).collect();
            imgs.sort();
            imgs.dedup();
            prop_assert_eq!(imgs.len() as u64, orbit_size(&v));
        }

        #[test]
        fn neumaier_beats_cancellation(big in 1e10f64..1e15, small in prop::collection::vec(-1.0f64..1.0, 1..50)) {
            let mut acc = NeumaierSum::default();
            acc.add(big);
            for s in &small { acc.add(*s); }
            acc.add(-big);
            let exact: f64 = small.iter().sum();
            prop_assert!((acc.value() - exact).abs() <= 1e-12 * small.len() as f64);
            prop_assert!(acc.error_bound() >= 0.0);
        }
    }
}
