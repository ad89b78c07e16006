//! Lattice geometry on ℤ³: the Fermi ball, lunes, spherical shells,
//! octahedral orbits and the spectral midpoint ζ.
//!
//! Every membership test is done in integer arithmetic against ⌊k_F²⌋, which
//! is why k_F must have an exactly representable square.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LatticeVec {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl LatticeVec {
    pub const ZERO: LatticeVec = LatticeVec { x: 0, y: 0, z: 0 };

    pub const fn new(x: i64, y: i64, z: i64) -> Self {
        LatticeVec { x, y, z }
    }

    #[inline]
    pub fn norm_sq(self) -> i64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    #[inline]
    pub fn dot(self, o: LatticeVec) -> i64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO
    }

    pub fn linf(self) -> i64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// The 48 signed coordinate permutations of `self`, with repetitions
    /// when `self` has a nontrivial stabiliser.
    pub fn octahedral_images(self) -> [LatticeVec; 48] {
        let c = [self.x, self.y, self.z];
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = [LatticeVec::ZERO; 48];
        let mut i = 0;
        for p in PERMS {
            for s in 0..8u8 {
                let sx = if s & 1 == 0 { 1 } else { -1 };
                let sy = if s & 2 == 0 { 1 } else { -1 };
                let sz = if s & 4 == 0 { 1 } else { -1 };
                out[i] = LatticeVec::new(sx * c[p[0]], sy * c[p[1]], sz * c[p[2]]);
                i += 1;
            }
        }
        out
    }

    /// Lexicographic minimum of the octahedral orbit: (−a, −b, −c) with
    /// a ≥ b ≥ c ≥ 0 the sorted absolute coordinates.
    pub fn orbit_rep(self) -> LatticeVec {
        let mut a = [self.x.abs(), self.y.abs(), self.z.abs()];
        a.sort_unstable_by(|u, v| v.cmp(u));
        LatticeVec::new(-a[0], -a[1], -a[2])
    }

    /// Size of the octahedral orbit.
    pub fn orbit_size(self) -> u64 {
        let mut a = [self.x.abs(), self.y.abs(), self.z.abs()];
        a.sort_unstable();
        let perms = if a[0] == a[1] && a[1] == a[2] {
            1
        } else if a[0] == a[1] || a[1] == a[2] {
            3
        } else {
            6
        };
        let nonzero = a.iter().filter(|&&c| c != 0).count() as u32;
        perms * 2u64.pow(nonzero)
    }

    fn canonical_key(self) -> (i64, i64, i64, i64) {
        (self.norm_sq(), self.x, self.y, self.z)
    }
}

/// Canonical order: by |p|², then lexicographically. All summation orders
/// and all fermionic signs derive from it.
impl Ord for LatticeVec {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_key().cmp(&other.canonical_key())
    }
}

impl PartialOrd for LatticeVec {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for LatticeVec {
    type Output = LatticeVec;
    fn add(self, o: LatticeVec) -> LatticeVec {
        LatticeVec::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for LatticeVec {
    type Output = LatticeVec;
    fn sub(self, o: LatticeVec) -> LatticeVec {
        LatticeVec::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for LatticeVec {
    type Output = LatticeVec;
    fn neg(self) -> LatticeVec {
        LatticeVec::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for LatticeVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

pub(crate) fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// ⌊k_F²⌋, refusing k_F whose square is not exact in binary floating point.
pub fn kf_sq_floor(k_f: f64) -> Result<i64> {
    if !k_f.is_finite() || k_f <= 0.0 {
        return Err(Error::validation(format!("k_F must be positive and finite, got {k_f}")));
    }
    let sq = k_f * k_f;
    if k_f.mul_add(k_f, -sq) != 0.0 {
        return Err(Error::validation(format!(
            "k_F = {k_f} has no exactly representable square; use an integer or dyadic grid value"
        )));
    }
    if sq > 1e12 {
        return Err(Error::validation(format!("k_F = {k_f} is too large")));
    }
    Ok(sq.floor() as i64)
}

#[derive(Clone, Debug)]
pub struct FermiBall {
    pub k_f: f64,
    /// ⌊k_F²⌋; p ∈ B_F ⟺ |p|² ≤ kf2.
    pub kf2: i64,
    pub points: Vec<LatticeVec>,
}

impl FermiBall {
    pub fn new(k_f: f64) -> Result<Self> {
        let kf2 = kf_sq_floor(k_f)?;
        Ok(FermiBall { k_f, kf2, points: ball_points(kf2) })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn contains(&self, p: LatticeVec) -> bool {
        p.norm_sq() <= self.kf2
    }

    /// Largest |p| in the ball, as an integer bound on coordinates.
    pub fn radius_bound(&self) -> i64 {
        isqrt(self.kf2)
    }
}

/// All p with |p|² ≤ n_max, canonically ordered.
pub fn ball_points(n_max: i64) -> Vec<LatticeVec> {
    let r = isqrt(n_max);
    let mut pts = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            let rest = n_max - x * x - y * y;
            if rest < 0 {
                continue;
            }
            let zr = isqrt(rest);
            for z in -zr..=zr {
                pts.push(LatticeVec::new(x, y, z));
            }
        }
    }
    pts.sort_unstable();
    pts
}

pub fn fermi_ball(k_f: f64) -> Result<FermiBall> {
    FermiBall::new(k_f)
}

/// L_k = {p : |p−k| ≤ k_F < |p|} with λ_{k,p} = (|p|² − |p−k|²)/2.
#[derive(Clone, Debug)]
pub struct Lune {
    pub k: LatticeVec,
    pub k_f: f64,
    pub points: Vec<LatticeVec>,
    pub lambdas: Vec<f64>,
    /// 2λ_{k,p}, exact.
    pub twice_lambda: Vec<i64>,
}

impl Lune {
    pub fn new(ball: &FermiBall, k: LatticeVec) -> Result<Self> {
        if k.is_zero() {
            return Err(Error::validation("lune requested for k = 0"));
        }
        let mut points: Vec<LatticeVec> = ball
            .points
            .iter()
            .map(|&q| q + k)
            .filter(|p| p.norm_sq() > ball.kf2)
            .collect();
        points.sort_unstable();
        let twice_lambda: Vec<i64> = points.iter().map(|&p| p.norm_sq() - (p - k).norm_sq()).collect();
        let lambdas = twice_lambda.iter().map(|&t| t as f64 * 0.5).collect();
        Ok(Lune { k, k_f: ball.k_f, points, lambdas, twice_lambda })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, p: LatticeVec) -> Option<usize> {
        self.points.binary_search(&p).ok()
    }

    pub fn spectrum(&self) -> LuneSpectrum {
        LuneSpectrum::from_twice_lambdas(self.k, self.twice_lambda.iter().copied())
    }
}

pub fn lune(k_f: f64, k: LatticeVec) -> Result<Lune> {
    Lune::new(&FermiBall::new(k_f)?, k)
}

/// The multiset {λ_{k,p} : p ∈ L_k} as distinct values with multiplicities.
/// Every radial quantity of a mode depends on the lune only through this.
#[derive(Clone, Debug, PartialEq)]
pub struct LuneSpectrum {
    pub k: LatticeVec,
    /// Distinct 2λ values, increasing.
    pub twice_lambda: Vec<i64>,
    pub counts: Vec<u64>,
}

impl LuneSpectrum {
    pub fn from_twice_lambdas(k: LatticeVec, it: impl IntoIterator<Item = i64>) -> Self {
        let mut v: Vec<i64> = it.into_iter().collect();
        v.sort_unstable();
        let mut twice_lambda = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for t in v {
            if twice_lambda.last() == Some(&t) {
                *counts.last_mut().unwrap() += 1;
            } else {
                twice_lambda.push(t);
                counts.push(1);
            }
        }
        LuneSpectrum { k, twice_lambda, counts }
    }

    /// Histogram of 2λ over L_k without materialising the lune.
    pub fn compute(ball: &FermiBall, k: LatticeVec, scratch: &mut Vec<u64>) -> Result<Self> {
        if k.is_zero() {
            return Err(Error::validation("lune requested for k = 0"));
        }
        // 2λ = 2q·k + |k|² for q = p − k ∈ B_F, and |2q·k| ≤ 2|k|_1 r.
        let k2 = k.norm_sq();
        let r = ball.radius_bound();
        let span = 2 * r * (k.x.abs() + k.y.abs() + k.z.abs());
        let lo = k2 - span;
        let width = (2 * span + 1) as usize;
        scratch.clear();
        scratch.resize(width, 0);
        for &q in &ball.points {
            let qk = q.dot(k);
            // |q+k|² > kf2  ⟺  |q|² + 2q·k + |k|² > kf2
            if q.norm_sq() + 2 * qk + k2 > ball.kf2 {
                scratch[(2 * qk + k2 - lo) as usize] += 1;
            }
        }
        let mut twice_lambda = Vec::new();
        let mut counts = Vec::new();
        for (i, &c) in scratch.iter().enumerate() {
            if c > 0 {
                twice_lambda.push(lo + i as i64);
                counts.push(c);
            }
        }
        Ok(LuneSpectrum { k, twice_lambda, counts })
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn groups(&self) -> usize {
        self.twice_lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.twice_lambda.is_empty()
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.twice_lambda[j] as f64 * 0.5
    }

    pub fn max_lambda(&self) -> f64 {
        self.twice_lambda.last().map_or(0.0, |&t| t as f64 * 0.5)
    }

    pub fn min_lambda(&self) -> f64 {
        self.twice_lambda.first().map_or(0.0, |&t| t as f64 * 0.5)
    }

    pub fn sum_lambda(&self) -> f64 {
        let mut s = crate::sum::Neumaier::new();
        for (j, &c) in self.counts.iter().enumerate() {
            s.add(c as f64 * self.lambda(j));
        }
        s.value()
    }

    pub fn sum_inv_lambda(&self) -> f64 {
        let mut s = crate::sum::Neumaier::new();
        for (&t, &c) in self.twice_lambda.iter().zip(&self.counts) {
            s.add(2.0 * c as f64 / t as f64);
        }
        s.value()
    }

    /// Λ(t) = Σ_p λ_p/(λ_p² + t²).
    pub fn lindhard(&self, t: f64) -> f64 {
        let t2 = t * t;
        let mut s = crate::sum::Neumaier::new();
        for (&tl, &c) in self.twice_lambda.iter().zip(&self.counts) {
            let l = tl as f64 * 0.5;
            s.add(c as f64 * l / (l * l + t2));
        }
        s.value()
    }

    /// Σ_{p,q ∈ L_k} 1/(λ_p + λ_q).
    pub fn pair_inv_sum(&self) -> f64 {
        let mut s = crate::sum::Neumaier::new();
        for (a, (&ta, &ca)) in self.twice_lambda.iter().zip(&self.counts).enumerate() {
            let mut row = crate::sum::Neumaier::new();
            row.add(ca as f64 / ta as f64);
            for (&tb, &cb) in self.twice_lambda[a + 1..].iter().zip(&self.counts[a + 1..]) {
                row.add(4.0 * cb as f64 / (ta + tb) as f64);
            }
            s.add(ca as f64 * row.value());
        }
        s.value()
    }
}

/// r₃(n): number of p ∈ ℤ³ with |p|² = n.
pub fn r3(n: u64) -> u64 {
    let n = n as i64;
    if n == 0 {
        return 1;
    }
    let mut count = 0u64;
    let xr = isqrt(n);
    for x in -xr..=xr {
        let rx = n - x * x;
        let yr = isqrt(rx);
        for y in -yr..=yr {
            let rz = rx - y * y;
            let z = isqrt(rz);
            if z * z == rz {
                count += if z == 0 { 1 } else { 2 };
            }
        }
    }
    count
}

/// Legendre: n is a sum of three squares unless n = 4^a(8b+7).
pub fn is_sum_of_three_squares(mut n: u64) -> bool {
    if n == 0 {
        return true;
    }
    while n % 4 == 0 {
        n /= 4;
    }
    n % 8 != 7
}

/// r₃(n) for all n ≤ n_max, by convolving r₂ with the squares.
pub fn r3_table(n_max: usize) -> Vec<u64> {
    let r = isqrt(n_max as i64);
    let mut r2 = vec![0u64; n_max + 1];
    for x in -r..=r {
        for y in -r..=r {
            let n = (x * x + y * y) as usize;
            if n <= n_max {
                r2[n] += 1;
            }
        }
    }
    let mut r3 = vec![0u64; n_max + 1];
    for z in -r..=r {
        let z2 = (z * z) as usize;
        for n in z2..=n_max {
            r3[n] += r2[n - z2];
        }
    }
    r3
}

/// Radius up to which radial lattice sums are evaluated shell by shell.
pub const EXACT_SHELL_RADIUS: i64 = 256;

pub(crate) fn shell_counts() -> &'static [u64] {
    static TABLE: std::sync::OnceLock<Vec<u64>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| r3_table((EXACT_SHELL_RADIUS * EXACT_SHELL_RADIUS) as usize))
}

/// Σ f over k ∈ ℤ³ with n_lo < |k|² ≤ r_hi² (r_hi = ∞ allowed) for a radial f.
/// Shells with |k| ≤ 256 are summed exactly with r₃ weights (`f_norm` takes
/// |k|²); the remainder is replaced by ∫ 4πr² f(r) dr (`f_radius` takes |k|).
pub fn radial_sum(
    n_lo: i64,
    r_hi: f64,
    f_norm: impl Fn(i64) -> f64,
    f_radius: impl Fn(f64) -> f64,
) -> crate::error::Result<f64> {
    let table = shell_counts();
    let n_exact = EXACT_SHELL_RADIUS * EXACT_SHELL_RADIUS;
    let n_hi = if r_hi.is_finite() { (r_hi * r_hi).floor() as i64 } else { i64::MAX };
    let mut s = crate::sum::Neumaier::new();
    for n in (n_lo + 1).max(1)..=n_hi.min(n_exact) {
        let c = table[n as usize];
        if c > 0 {
            s.add(c as f64 * f_norm(n));
        }
    }
    let r0 = (EXACT_SHELL_RADIUS as f64).max((n_lo.max(0) as f64).sqrt());
    if r_hi > r0 {
        let opts = crate::quad::QuadOptions { abs_tol: 1e-300, rel_tol: 1e-10, max_intervals: 4000 };
        let g = |r: f64| 4.0 * std::f64::consts::PI * r * r * f_radius(r);
        let v = if r_hi.is_finite() {
            crate::quad::integrate(g, r0, r_hi, opts)?
        } else {
            crate::quad::integrate_semi_infinite(g, r0, opts)?
        };
        s.add(v.value);
    }
    Ok(s.value())
}

/// ζ = ½(inf_{B_F^c}|p|² + sup_{B_F}|q|²).
pub fn zeta(k_f: f64) -> Result<f64> {
    let kf2 = kf_sq_floor(k_f)?;
    Ok(zeta_from_kf2(kf2))
}

pub(crate) fn zeta_from_kf2(kf2: i64) -> f64 {
    let mut inner = kf2;
    while !is_sum_of_three_squares(inner as u64) {
        inner -= 1;
    }
    let mut outer = kf2 + 1;
    while !is_sum_of_three_squares(outer as u64) {
        outer += 1;
    }
    0.5 * (inner + outer) as f64
}

/// Smallest |p|² attained outside the ball.
pub fn first_outer_shell(kf2: i64) -> i64 {
    let mut outer = kf2 + 1;
    while !is_sum_of_three_squares(outer as u64) {
        outer += 1;
    }
    outer
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitTable {
    pub k_max: f64,
    pub representatives: Vec<LatticeVec>,
    pub multiplicities: Vec<u64>,
}

impl OrbitTable {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeVec, u64)> + '_ {
        self.representatives.iter().copied().zip(self.multiplicities.iter().copied())
    }
}

/// Octahedral orbits of {k ∈ ℤ³_* : |k| ≤ K_max}, representatives in
/// canonical order.
pub fn orbits(k_max: f64) -> OrbitTable {
    let bound = k_max * k_max;
    let r = if k_max > 0.0 { k_max.floor() as i64 } else { -1 };
    let mut reps = Vec::new();
    for a in 0..=r.max(0) {
        for b in 0..=a {
            for c in 0..=b {
                let n = a * a + b * b + c * c;
                if n == 0 || n as f64 > bound {
                    continue;
                }
                reps.push(LatticeVec::new(-a, -b, -c));
            }
        }
    }
    reps.sort_unstable();
    let multiplicities = reps.iter().map(|k| k.orbit_size()).collect();
    OrbitTable { k_max, representatives: reps, multiplicities }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn brute_lune(kf2: i64, k: LatticeVec, box_r: i64) -> Vec<LatticeVec> {
        let mut out = Vec::new();
        for x in -box_r..=box_r {
            for y in -box_r..=box_r {
                for z in -box_r..=box_r {
                    let p = LatticeVec::new(x, y, z);
                    if (p - k).norm_sq() <= kf2 && p.norm_sq() > kf2 {
                        out.push(p);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(fermi_ball(0.5).unwrap().n(), 1);
        assert_eq!(fermi_ball(1.0).unwrap().n(), 7);
        assert_eq!(fermi_ball(2.0).unwrap().n(), 33);
    }

    #[test]
    fn rejects_bad_kf() {
        assert!(fermi_ball(0.0).is_err());
        assert!(fermi_ball(f64::NAN).is_err());
        assert!(fermi_ball(0.1).is_err());
    }

    #[test]
    fn unit_lune() {
        let l = lune(1.0, LatticeVec::new(1, 0, 0)).unwrap();
        let want: HashSet<_> = [(2, 0, 0), (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1)]
            .iter()
            .map(|&(x, y, z)| LatticeVec::new(x, y, z))
            .collect();
        assert_eq!(l.points.iter().copied().collect::<HashSet<_>>(), want);
        let i = l.index_of(LatticeVec::new(2, 0, 0)).unwrap();
        assert_eq!(l.lambdas[i], 1.5);
        let j = l.index_of(LatticeVec::new(1, 1, 0)).unwrap();
        assert_eq!(l.lambdas[j], 0.5);
        assert_eq!(lune(1.0, LatticeVec::new(3, 0, 0)).unwrap().len(), 7);
        assert!(lune(1.0, LatticeVec::ZERO).is_err());
    }

    #[test]
    fn lunes_match_brute_force() {
        for kf in 1..=8i64 {
            let ball = FermiBall::new(kf as f64).unwrap();
            let kmax = 2 * kf + 2;
            for k in ball_points(kmax * kmax) {
                if k.is_zero() || k != k.orbit_rep() && kf > 3 {
                    continue;
                }
                let l = Lune::new(&ball, k).unwrap();
                let r = (k.norm().ceil() as i64) + kf;
                assert_eq!(l.points, brute_lune(ball.kf2, k, r), "k_F={kf} k={k}");
                assert!(l.lambdas.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn reflection_and_full_lunes() {
        for kf in 1..=4i64 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in ball_points((3 * kf) * (3 * kf)) {
                if k.is_zero() {
                    continue;
                }
                let l = Lune::new(&ball, k).unwrap();
                let m = Lune::new(&ball, -k).unwrap();
                let mut neg: Vec<_> = l.points.iter().map(|&p| -p).collect();
                neg.sort_unstable();
                assert_eq!(neg, m.points);
                for (i, &p) in l.points.iter().enumerate() {
                    assert_eq!(m.lambdas[m.index_of(-p).unwrap()], l.lambdas[i]);
                }
                if k.norm_sq() > 4 * kf * kf {
                    assert_eq!(l.len(), ball.n());
                }
            }
        }
    }

    #[test]
    fn shifted_index_never_vanishes() {
        for kf in 1..=6i64 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in orbits((2 * kf + 1) as f64).representatives {
                let l = Lune::new(&ball, k).unwrap();
                for &p in &l.points {
                    for &q in &l.points {
                        assert!(!(p + q - k).is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn spectrum_matches_lune() {
        let mut scratch = Vec::new();
        for kf in 1..=5i64 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in orbits((3 * kf) as f64).representatives {
                let l = Lune::new(&ball, k).unwrap();
                let s = LuneSpectrum::compute(&ball, k, &mut scratch).unwrap();
                assert_eq!(s, l.spectrum());
                assert_eq!(s.n() as usize, l.len());
            }
        }
    }

    #[test]
    fn unit_lune_sums() {
        let s = lune(1.0, LatticeVec::new(1, 0, 0)).unwrap().spectrum();
        assert!((s.lindhard(0.0) - 26.0 / 3.0).abs() < 1e-14);
        assert!((s.sum_inv_lambda() - 26.0 / 3.0).abs() < 1e-14);
        let t = 1e6;
        assert!((s.lindhard(t) * t * t - s.sum_lambda()).abs() < 1e-6);
        // brute force pair sum
        let l = lune(1.0, LatticeVec::new(1, 0, 0)).unwrap();
        let mut brute = 0.0;
        for a in &l.lambdas {
            for b in &l.lambdas {
                brute += 1.0 / (a + b);
            }
        }
        assert!((s.pair_inv_sum() - brute).abs() < 1e-13);
    }

    #[test]
    fn zeta_values() {
        assert_eq!(zeta(1.0).unwrap(), 1.5);
        assert_eq!(zeta(2.0).unwrap(), 4.5);
        // 7 is not a sum of three squares: for ⌊k_F²⌋ = 7, sup is 6 and inf is 8
        assert_eq!(zeta_from_kf2(7), 7.0);
        assert_eq!(zeta(2.75).unwrap(), 7.0);
    }

    #[test]
    fn zeta_gap_is_half() {
        for kf in 1..=12i64 {
            let z = zeta(kf as f64).unwrap();
            for p in ball_points(9 * kf * kf) {
                assert!((p.norm_sq() as f64 - z).abs() >= 0.5);
            }
        }
    }

    #[test]
    fn r3_values() {
        assert_eq!(r3(1), 6);
        assert_eq!(r3(3), 8);
        assert_eq!(r3(7), 0);
        for r in 0..=20i64 {
            let total: u64 = (0..=(r * r) as u64).map(r3).sum();
            assert_eq!(total as usize, ball_points(r * r).len());
        }
        for n in 0..2000u64 {
            assert_eq!(r3(n) > 0, is_sum_of_three_squares(n), "n={n}");
        }
    }

    #[test]
    fn r3_table_matches_brute_force() {
        let t = r3_table(500);
        for n in 0..=500u64 {
            assert_eq!(t[n as usize], r3(n));
        }
    }

    #[test]
    fn radial_sum_counts_points() {
        let c = radial_sum(0, 10.0, |_| 1.0, |_| 1.0).unwrap();
        assert_eq!(c as usize, ball_points(100).len() - 1);
        // Σ_{k≠0} |k|⁻⁴ has continuum tail ~ 4π/R₀ beyond the exact shells
        let z = radial_sum(0, f64::INFINITY, |n| 1.0 / (n * n) as f64, |r| r.powi(-4)).unwrap();
        assert!((z - 16.532315959761669).abs() < 1e-3, "{z}");
    }

    #[test]
    fn orbit_multiplicities() {
        assert_eq!(LatticeVec::new(1, 0, 0).orbit_size(), 6);
        assert_eq!(LatticeVec::new(1, 1, 1).orbit_size(), 8);
        assert_eq!(LatticeVec::new(1, 2, 3).orbit_size(), 48);
        for v in ball_points(30) {
            let distinct: HashSet<_> = v.octahedral_images().into_iter().collect();
            assert_eq!(distinct.len() as u64, v.orbit_size());
            assert_eq!(v.orbit_rep(), *distinct.iter().min_by_key(|p| (p.x, p.y, p.z)).unwrap());
        }
        let t = orbits(7.5);
        let all = ball_points(56).len() as u64 - 1;
        assert_eq!(t.total(), all);
    }

    #[test]
    fn orbit_sum_of_lune_sizes() {
        for kf in 1..=4i64 {
            let ball = FermiBall::new(kf as f64).unwrap();
            let kmax = (3 * kf) as f64;
            let t = orbits(kmax);
            let reduced: u64 = t.iter().map(|(k, m)| m * Lune::new(&ball, k).unwrap().len() as u64).sum();
            let full: u64 = ball_points((3 * kf) * (3 * kf))
                .into_iter()
                .filter(|k| !k.is_zero())
                .map(|k| Lune::new(&ball, k).unwrap().len() as u64)
                .sum();
            assert_eq!(reduced, full);
        }
    }
}
