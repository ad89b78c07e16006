//! Sparse fermionic Fock-space algebra around the Fermi sea.
//!
//! A basis state is stored as its particle–hole excitation of |FS⟩. The
//! canonical lattice order lists every ball mode before every outside mode,
//! so the fermionic sign of any mode follows from the excitation lists alone
//! and no momentum box is needed to apply an operator.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num::{BigRational, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ball_points, first_outer_shell, FermiBall, LatticeVec, Lune};
use crate::onebody::{build_mode, TWO_PI_CUBED};
use crate::potential::PotentialModel;

/// Amplitude field: exact rationals or f64.
pub trait Amp: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    const EXACT: bool;
    fn nil() -> Self;
    fn ratio(n: i64, d: i64) -> Self;
    /// Exact for rationals (every finite f64 is a dyadic rational).
    fn from_f64(x: f64) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn negated(&self) -> Self;
    fn is_nil(&self) -> bool;
    fn magnitude(&self) -> f64;
    fn label() -> &'static str;
}

impl Amp for f64 {
    const EXACT: bool = false;
    fn nil() -> Self {
        0.0
    }
    fn ratio(n: i64, d: i64) -> Self {
        n as f64 / d as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn negated(&self) -> Self {
        -self
    }
    fn is_nil(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn label() -> &'static str {
        "float"
    }
}

impl Amp for BigRational {
    const EXACT: bool = true;
    fn nil() -> Self {
        BigRational::zero()
    }
    fn ratio(n: i64, d: i64) -> Self {
        BigRational::new(n.into(), d.into())
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite amplitude")
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn negated(&self) -> Self {
        -self.clone()
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
    fn label() -> &'static str {
        "rational"
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BasisState {
    /// Empty modes inside B_F, canonical order.
    pub holes: Vec<LatticeVec>,
    /// Occupied modes outside B_F, canonical order.
    pub particles: Vec<LatticeVec>,
}

impl BasisState {
    pub fn fermi_sea() -> Self {
        BasisState { holes: vec![], particles: vec![] }
    }

    pub fn excitations(&self) -> impl Iterator<Item = LatticeVec> + '_ {
        self.holes.iter().chain(&self.particles).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockVector<T> {
    pub terms: BTreeMap<BasisState, T>,
}

impl<T: Amp> Default for FockVector<T> {
    fn default() -> Self {
        FockVector { terms: BTreeMap::new() }
    }
}

impl<T: Amp> FockVector<T> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn basis(s: BasisState) -> Self {
        let mut v = Self::zero();
        v.add_term(s, T::ratio(1, 1));
        v
    }

    pub fn fermi_sea() -> Self {
        Self::basis(BasisState::fermi_sea())
    }

    pub fn add_term(&mut self, s: BasisState, a: T) {
        if a.is_nil() {
            return;
        }
        match self.terms.get_mut(&s) {
            Some(x) => {
                let y = x.plus(&a);
                if y.is_nil() {
                    self.terms.remove(&s);
                } else {
                    *x = y;
                }
            }
            None => {
                self.terms.insert(s, a);
            }
        }
    }

    pub fn add_scaled(&mut self, o: &FockVector<T>, c: &T) {
        if c.is_nil() {
            return;
        }
        for (s, a) in &o.terms {
            self.add_term(s.clone(), a.times(c));
        }
    }

    pub fn add_assign(&mut self, o: &FockVector<T>) {
        for (s, a) in &o.terms {
            self.add_term(s.clone(), a.clone());
        }
    }

    pub fn minus(&self, o: &FockVector<T>) -> FockVector<T> {
        let mut r = self.clone();
        r.add_scaled(o, &T::ratio(-1, 1));
        r
    }

    pub fn scaled(&self, c: &T) -> FockVector<T> {
        let mut r = Self::zero();
        r.add_scaled(self, c);
        r
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, a| m.max(a.magnitude()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Single ladder operators; `Ct` is c̃_p, `Ctd` its adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Letter {
    C(LatticeVec),
    Cd(LatticeVec),
    Ct(LatticeVec),
    Ctd(LatticeVec),
}

pub type Coef<T> = Arc<dyn Fn(LatticeVec) -> Option<T> + Send + Sync>;

/// Σ_q coef(q)·c̃*_{q+a} c̃_{q+b}, possibly over infinitely many q; only q
/// with q+b excited contribute, so application is finite.
#[derive(Clone)]
pub struct PairSum<T> {
    pub a: LatticeVec,
    pub b: LatticeVec,
    pub coef: Coef<T>,
}

#[derive(Clone)]
pub enum Op<T> {
    Scalar(T),
    Ladder(Letter),
    /// b_{k,p} = c*_{p−k} c_p
    B(LatticeVec, LatticeVec),
    BDag(LatticeVec, LatticeVec),
    /// b_k(φ) = Σ φ_p b_{k,p}
    BVec(LatticeVec, Vec<(LatticeVec, T)>),
    BVecDag(LatticeVec, Vec<(LatticeVec, T)>),
    /// B_k = Σ_{p∈L_k} b_{k,p}
    BigB(LatticeVec),
    BigBDag(LatticeVec),
    D(LatticeVec),
    D1(LatticeVec),
    D2(LatticeVec),
    /// Σ ||p|²−ζ| c̃*_p c̃_p
    HkinPrime,
    /// Σ_{B^c} |p|² c*c − Σ_B |p|² c c*
    HkinBare,
    /// Σ_{B^c} c*_p c_p
    NumberOutside,
    /// Σ_{B} c_p c*_p
    NumberHoles,
    Pairs(PairSum<T>),
}

impl<T> fmt::Debug for Op<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Scalar(_) => write!(f, "scalar"),
            Op::Ladder(l) => write!(f, "{l:?}"),
            Op::B(k, p) => write!(f, "b({k},{p})"),
            Op::BDag(k, p) => write!(f, "b*({k},{p})"),
            Op::BVec(k, _) => write!(f, "b({k},φ)"),
            Op::BVecDag(k, _) => write!(f, "b*({k},φ)"),
            Op::BigB(k) => write!(f, "B({k})"),
            Op::BigBDag(k) => write!(f, "B*({k})"),
            Op::D(k) => write!(f, "D({k})"),
            Op::D1(k) => write!(f, "D1({k})"),
            Op::D2(k) => write!(f, "D2({k})"),
            Op::HkinPrime => write!(f, "H'kin"),
            Op::HkinBare => write!(f, "Hkin-bare"),
            Op::NumberOutside => write!(f, "N_E"),
            Op::NumberHoles => write!(f, "N_E(holes)"),
            Op::Pairs(p) => write!(f, "pairs(a={},b={})", p.a, p.b),
        }
    }
}

/// Linear combination of operator words; a word is applied right to left.
#[derive(Clone, Debug)]
pub struct OpSum<T> {
    pub terms: Vec<(T, Vec<Op<T>>)>,
}

impl<T: Amp> OpSum<T> {
    pub fn zero() -> Self {
        OpSum { terms: vec![] }
    }

    pub fn word(ops: Vec<Op<T>>) -> Self {
        OpSum { terms: vec![(T::ratio(1, 1), ops)] }
    }

    pub fn op(op: Op<T>) -> Self {
        Self::word(vec![op])
    }

    pub fn plus(mut self, o: OpSum<T>) -> Self {
        self.terms.extend(o.terms);
        self
    }

    pub fn scaled(mut self, c: &T) -> Self {
        for t in &mut self.terms {
            t.0 = t.0.times(c);
        }
        self
    }

    pub fn then(&self, o: &OpSum<T>) -> Self {
        // self · o
        let mut terms = vec![];
        for (a, wa) in &self.terms {
            for (b, wb) in &o.terms {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                terms.push((a.times(b), w));
            }
        }
        OpSum { terms }
    }

    pub fn commutator(a: &OpSum<T>, b: &OpSum<T>) -> Self {
        a.then(b).plus(b.then(a).scaled(&T::ratio(-1, 1)))
    }

    pub fn anticommutator(a: &OpSum<T>, b: &OpSum<T>) -> Self {
        a.then(b).plus(b.then(a))
    }
}

#[derive(Clone, Debug)]
pub struct FockSpace {
    ball: FermiBall,
    /// ζ = zeta.0 / zeta.1
    zeta: (i64, i64),
    inner: i64,
    outer: i64,
}

impl FockSpace {
    /// Midpoint ζ between the last occupied and first empty shell.
    pub fn new(k_f: f64) -> Result<Self> {
        let ball = FermiBall::new(k_f)?;
        let inner = ball.points.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
        let outer = first_outer_shell(ball.kf2);
        Ok(FockSpace { ball, zeta: (inner + outer, 2), inner, outer })
    }

    pub fn with_zeta(k_f: f64, num: i64, den: i64) -> Result<Self> {
        let mut s = Self::new(k_f)?;
        if den <= 0 || num < s.inner * den || num > s.outer * den {
            return Err(Error::validation(format!(
                "ζ = {num}/{den} outside the admissible interval [{}, {}]",
                s.inner, s.outer
            )));
        }
        s.zeta = (num, den);
        Ok(s)
    }

    pub fn ball(&self) -> &FermiBall {
        &self.ball
    }

    pub fn zeta(&self) -> f64 {
        self.zeta.0 as f64 / self.zeta.1 as f64
    }

    pub fn n(&self) -> usize {
        self.ball.n()
    }

    #[inline]
    pub fn inside(&self, p: LatticeVec) -> bool {
        self.ball.contains(p)
    }

    pub fn vacuum<T: Amp>(&self) -> FockVector<T> {
        FockVector::basis(BasisState { holes: self.ball.points.clone(), particles: vec![] })
    }

    /// The occupied modes in canonical order.
    pub fn occupied(&self, s: &BasisState) -> Vec<LatticeVec> {
        let mut v: Vec<LatticeVec> =
            self.ball.points.iter().copied().filter(|p| s.holes.binary_search(p).is_err()).collect();
        v.extend(&s.particles);
        v
    }

    pub fn is_occupied(&self, s: &BasisState, p: LatticeVec) -> bool {
        if self.inside(p) {
            s.holes.binary_search(&p).is_err()
        } else {
            s.particles.binary_search(&p).is_ok()
        }
    }

    fn preceding(&self, s: &BasisState, p: LatticeVec) -> usize {
        if self.inside(p) {
            let idx = self.ball.points.binary_search(&p).expect("ball mode");
            idx - s.holes.partition_point(|h| *h < p)
        } else {
            self.n() - s.holes.len() + s.particles.partition_point(|q| *q < p)
        }
    }

    fn ladder(&self, s: &BasisState, p: LatticeVec, create: bool) -> Option<(bool, BasisState)> {
        if self.is_occupied(s, p) == create {
            return None;
        }
        let odd = self.preceding(s, p) % 2 == 1;
        let mut t = s.clone();
        let list = if self.inside(p) { &mut t.holes } else { &mut t.particles };
        // inside: creating fills a hole; outside: creating adds a particle
        let add = create != self.inside(p);
        match list.binary_search(&p) {
            Ok(i) if !add => {
                list.remove(i);
            }
            Err(i) if add => list.insert(i, p),
            _ => unreachable!("occupation bookkeeping"),
        }
        Some((odd, t))
    }

    fn letter(&self, s: &BasisState, l: Letter) -> Option<(bool, BasisState)> {
        match l {
            Letter::C(p) => self.ladder(s, p, false),
            Letter::Cd(p) => self.ladder(s, p, true),
            Letter::Ct(p) => self.ladder(s, p, self.inside(p)),
            Letter::Ctd(p) => self.ladder(s, p, !self.inside(p)),
        }
    }

    /// Applies letters right to left; returns (sign is negative, result).
    fn word(&self, s: &BasisState, w: &[Letter]) -> Option<(bool, BasisState)> {
        let mut cur = s.clone();
        let mut neg = false;
        for &l in w.iter().rev() {
            let (odd, next) = self.letter(&cur, l)?;
            neg ^= odd;
            cur = next;
        }
        Some((neg, cur))
    }

    fn emit<T: Amp>(&self, out: &mut FockVector<T>, amp: &T, coef: Option<&T>, s: &BasisState, w: &[Letter]) {
        if let Some((neg, t)) = self.word(s, w) {
            let mut a = match coef {
                Some(c) => amp.times(c),
                None => amp.clone(),
            };
            if neg {
                a = a.negated();
            }
            out.add_term(t, a);
        }
    }

    fn abs_gap<T: Amp>(&self, p: LatticeVec) -> T {
        let (num, den) = self.zeta;
        T::ratio((p.norm_sq() * den - num).abs(), den)
    }

    fn apply_basis<T: Amp>(&self, op: &Op<T>, s: &BasisState, amp: &T, out: &mut FockVector<T>) {
        use Letter::*;
        match op {
            Op::Scalar(c) => out.add_term(s.clone(), amp.times(c)),
            Op::Ladder(l) => self.emit(out, amp, None, s, &[*l]),
            Op::B(k, p) => self.emit(out, amp, None, s, &[Cd(*p - *k), C(*p)]),
            Op::BDag(k, p) => self.emit(out, amp, None, s, &[Cd(*p), C(*p - *k)]),
            Op::BVec(k, phi) => {
                for (p, c) in phi {
                    self.emit(out, amp, Some(c), s, &[Cd(*p - *k), C(*p)]);
                }
            }
            Op::BVecDag(k, phi) => {
                for (p, c) in phi {
                    self.emit(out, amp, Some(c), s, &[Cd(*p), C(*p - *k)]);
                }
            }
            Op::BigB(k) => {
                for &h in &s.holes {
                    let p = h + *k;
                    if !self.inside(p) {
                        self.emit(out, amp, None, s, &[Cd(h), C(p)]);
                    }
                }
            }
            Op::BigBDag(k) => {
                for &q in &self.ball.points {
                    let p = q + *k;
                    if !self.inside(p) {
                        self.emit(out, amp, None, s, &[Cd(p), C(q)]);
                    }
                }
            }
            Op::D(k) => {
                self.apply_basis(&Op::D1(*k), s, amp, out);
                self.apply_basis(&Op::D2(*k), s, amp, out);
            }
            Op::D1(k) => {
                for &p in &s.particles {
                    if !self.inside(p - *k) {
                        self.emit(out, amp, None, s, &[Cd(p - *k), C(p)]);
                    }
                }
            }
            Op::D2(k) => {
                for &h in &s.holes {
                    let p = h + *k;
                    if self.inside(p) {
                        self.emit(out, amp, None, s, &[Cd(h), C(p)]);
                    }
                }
            }
            Op::HkinPrime => {
                let mut e = T::nil();
                for p in s.excitations() {
                    e = e.plus(&self.abs_gap(p));
                }
                out.add_term(s.clone(), amp.times(&e));
            }
            Op::HkinBare => {
                let e: i64 = s.particles.iter().map(|p| p.norm_sq()).sum::<i64>()
                    - s.holes.iter().map(|p| p.norm_sq()).sum::<i64>();
                out.add_term(s.clone(), amp.times(&T::ratio(e, 1)));
            }
            Op::NumberOutside => {
                for &p in &s.particles {
                    self.emit(out, amp, None, s, &[Cd(p), C(p)]);
                }
            }
            Op::NumberHoles => {
                for &p in &self.ball.points {
                    self.emit(out, amp, None, s, &[C(p), Cd(p)]);
                }
            }
            Op::Pairs(ps) => {
                for e in s.excitations() {
                    let q = e - ps.b;
                    if let Some(c) = (ps.coef)(q) {
                        self.emit(out, amp, Some(&c), s, &[Ctd(q + ps.a), Ct(q + ps.b)]);
                    }
                }
            }
        }
    }

    pub fn apply<T: Amp>(&self, op: &Op<T>, v: &FockVector<T>) -> FockVector<T> {
        let mut out = FockVector::zero();
        for (s, a) in &v.terms {
            self.apply_basis(op, s, a, &mut out);
        }
        out
    }

    pub fn apply_c<T: Amp>(&self, p: LatticeVec, dagger: bool, v: &FockVector<T>) -> FockVector<T> {
        let l = if dagger { Letter::Cd(p) } else { Letter::C(p) };
        self.apply(&Op::Ladder(l), v)
    }

    pub fn apply_word<T: Amp>(&self, w: &[Op<T>], v: &FockVector<T>) -> FockVector<T> {
        let mut cur = v.clone();
        for op in w.iter().rev() {
            if cur.is_zero() {
                break;
            }
            cur = self.apply(op, &cur);
        }
        cur
    }

    pub fn apply_sum<T: Amp>(&self, o: &OpSum<T>, v: &FockVector<T>) -> FockVector<T> {
        let mut out = FockVector::zero();
        for (c, w) in &o.terms {
            out.add_scaled(&self.apply_word(w, v), c);
        }
        out
    }

    /// b_k(φ) with φ checked to live on L_k.
    pub fn b_vec<T: Amp>(&self, k: LatticeVec, phi: Vec<(LatticeVec, T)>, dagger: bool) -> Result<Op<T>> {
        for (p, _) in &phi {
            if self.inside(*p) || !self.inside(*p - k) {
                return Err(Error::validation(format!("b_vec: {p} is not in L_{k}")));
            }
        }
        Ok(if dagger { Op::BVecDag(k, phi) } else { Op::BVec(k, phi) })
    }

    pub fn lune(&self, k: LatticeVec) -> Lune {
        Lune::new(&self.ball, k).expect("nonzero k")
    }
}

type Support<T> = Arc<HashMap<LatticeVec, T>>;

/// ε_{k,l}(φ;ψ) through its explicit two-sum form.
pub fn exchange_correction<T: Amp>(k: LatticeVec, l: LatticeVec, phi: Support<T>, psi: Support<T>) -> OpSum<T> {
    let (f1, g1) = (phi.clone(), psi.clone());
    let first = PairSum {
        a: -l,
        b: -k,
        coef: Arc::new(move |q| Some(f1.get(&q)?.times(g1.get(&q)?).negated())) as Coef<T>,
    };
    let second = PairSum {
        a: l,
        b: k,
        coef: Arc::new(move |q| Some(phi.get(&(q + k))?.times(psi.get(&(q + l))?).negated())) as Coef<T>,
    };
    OpSum::op(Op::Pairs(first)).plus(OpSum::op(Op::Pairs(second)))
}

/// Small dense matrix over an amplitude field.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Amp> Mat<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Mat { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_fn(n, |_, _| T::nil())
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn mul(&self, o: &Mat<T>) -> Mat<T> {
        Mat::from_fn(self.n, |i, j| {
            (0..self.n).fold(T::nil(), |acc, m| acc.plus(&self.get(i, m).times(o.get(m, j))))
        })
    }

    pub fn t(&self) -> Mat<T> {
        Mat::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn add(&self, o: &Mat<T>) -> Mat<T> {
        Mat::from_fn(self.n, |i, j| self.get(i, j).plus(o.get(i, j)))
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::nil(), |acc, i| acc.plus(self.get(i, i)))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Self {
        Mat::from_fn(m.nrows(), |i, j| T::from_f64(m[(i, j)]))
    }
}

#[derive(Clone, Debug)]
pub struct FamilyMember<T> {
    pub k: LatticeVec,
    pub lune: Lune,
    pub c: Mat<T>,
    pub s: Mat<T>,
    pub a: Mat<T>,
}

/// Coefficient families on a finite K = −K with M_{−k}[−p,−q] = M_k[p,q].
#[derive(Clone, Debug)]
pub struct CoeffFamily<T> {
    pub members: Vec<FamilyMember<T>>,
}

impl<T: Amp> CoeffFamily<T> {
    /// Builds k and −k entries from one matrix triple (C, S, A) per representative.
    pub fn mirrored(space: &FockSpace, reps: Vec<(LatticeVec, Mat<T>, Mat<T>, Mat<T>)>) -> Result<Self> {
        let mut members = vec![];
        for (k, c, s, a) in reps {
            let lune = space.lune(k);
            if [&c, &s, &a].iter().any(|m| m.n != lune.len()) {
                return Err(Error::validation(format!("family matrices at {k} do not match |L_k|")));
            }
            if !a.is_symmetric() {
                return Err(Error::validation(format!("A_k at {k} is not symmetric")));
            }
            if members.iter().any(|m: &FamilyMember<T>| m.k == k || m.k == -k) {
                return Err(Error::validation(format!("{k} listed twice in family")));
            }
            let mlune = space.lune(-k);
            let map: Vec<usize> =
                mlune.points.iter().map(|&p| lune.index_of(-p).expect("mirrored lune")).collect();
            let mirror = |m: &Mat<T>| Mat::from_fn(m.n, |i, j| m.get(map[i], map[j]).clone());
            let (mc, ms, ma) = (mirror(&c), mirror(&s), mirror(&a));
            members.push(FamilyMember { k, lune, c, s, a });
            members.push(FamilyMember { k: -k, lune: mlune, c: mc, s: ms, a: ma });
        }
        Ok(CoeffFamily { members })
    }

    pub fn random(space: &FockSpace, reps: &[LatticeVec], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut triples = vec![];
        for &k in reps {
            let n = space.lune(k).len();
            let c = Mat::from_fn(n, |_, _| rand_amp(rng));
            let s = Mat::from_fn(n, |_, _| rand_amp(rng));
            let half = Mat::from_fn(n, |_, _| rand_amp(rng));
            let a = half.add(&half.t());
            triples.push((k, c, s, a));
        }
        Self::mirrored(space, triples)
    }

    fn member(&self, k: LatticeVec) -> &FamilyMember<T> {
        self.members.iter().find(|m| m.k == k).expect("symmetric family")
    }
}

fn rand_ratio(rng: &mut ChaCha8Rng) -> (i64, i64) {
    let mut n = 0;
    while n == 0 {
        n = rng.gen_range(-9..=9);
    }
    (n, rng.gen_range(1..=6))
}

fn rand_amp<T: Amp>(rng: &mut ChaCha8Rng) -> T {
    let (n, d) = rand_ratio(rng);
    T::ratio(n, d)
}

/// Nonzero k with |k|² ≤ r2, canonical order.
pub fn momenta(r2: i64) -> Vec<LatticeVec> {
    ball_points(r2).into_iter().filter(|k| !k.is_zero()).collect()
}

/// |FS⟩ followed by random superpositions of one- and two-pair excitations.
pub fn random_states<T: Amp>(space: &FockSpace, rng: &mut ChaCha8Rng, count: usize, r2: i64) -> Vec<FockVector<T>> {
    let ks = momenta(r2);
    let mut out = vec![FockVector::fermi_sea()];
    while out.len() < count {
        let mut v = FockVector::zero();
        for _ in 0..rng.gen_range(1..=3) {
            let mut t = FockVector::<T>::fermi_sea();
            for _ in 0..rng.gen_range(1..=2) {
                let k = ks[rng.gen_range(0..ks.len())];
                let lune = space.lune(k);
                let p = lune.points[rng.gen_range(0..lune.len())];
                t = space.apply(&Op::BDag(k, p), &t);
            }
            v.add_scaled(&t, &rand_amp(rng));
        }
        if !v.is_zero() {
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub arithmetic: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

struct Tally {
    name: &'static str,
    arithmetic: &'static str,
    tol: f64,
    cases: usize,
    max: f64,
}

impl Tally {
    fn new<T: Amp>(name: &'static str) -> Self {
        Tally { name, arithmetic: T::label(), tol: if T::EXACT { 0.0 } else { 1e-10 }, cases: 0, max: 0.0 }
    }

    fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn record(&mut self, r: f64) {
        self.cases += 1;
        // NaN must fail
        if !(r <= self.max) {
            self.max = r;
        }
    }

    fn vec<T: Amp>(&mut self, lhs: &FockVector<T>, rhs: &FockVector<T>) {
        self.record(lhs.minus(rhs).max_abs());
    }

    fn finish(self) -> CheckReport {
        CheckReport {
            name: self.name.to_string(),
            arithmetic: self.arithmetic.to_string(),
            cases: self.cases,
            max_residual: self.max,
            tolerance: self.tol,
            pass: self.cases > 0 && self.max <= self.tol,
        }
    }
}

/// {c_p, c_q†} = δ, {c_p, c_q} = {c_p†, c_q†} = 0 for all modes with |p|_∞ ≤ box_r,
/// plus the two-mode sign test on the true vacuum.
pub fn check_car<T: Amp>(space: &FockSpace, states: &[FockVector<T>], box_r: i64) -> CheckReport {
    let mut t = Tally::new::<T>("car");
    let mut modes = vec![];
    for x in -box_r..=box_r {
        for y in -box_r..=box_r {
            for z in -box_r..=box_r {
                modes.push(LatticeVec::new(x, y, z));
            }
        }
    }
    modes.sort_unstable();
    for psi in states {
        let down: Vec<_> = modes.iter().map(|&p| space.apply_c(p, false, psi)).collect();
        let up: Vec<_> = modes.iter().map(|&p| space.apply_c(p, true, psi)).collect();
        for (i, &p) in modes.iter().enumerate() {
            for (j, &q) in modes.iter().enumerate() {
                let mut mixed = space.apply_c(p, false, &up[j]);
                mixed.add_assign(&space.apply_c(q, true, &down[i]));
                let delta = if i == j { psi.clone() } else { FockVector::zero() };
                t.vec(&mixed, &delta);
                if j >= i {
                    let mut aa = space.apply_c(p, false, &down[j]);
                    aa.add_assign(&space.apply_c(q, false, &down[i]));
                    t.record(aa.max_abs());
                    let mut cc = space.apply_c(p, true, &up[j]);
                    cc.add_assign(&space.apply_c(q, true, &up[i]));
                    t.record(cc.max_abs());
                }
            }
        }
    }
    let vac = space.vacuum::<T>();
    for (i, &p) in modes.iter().enumerate() {
        let one = space.apply_c(p, true, &vac);
        t.record(space.apply_c(p, true, &one).max_abs());
        for &q in &modes[i + 1..] {
            let qp = space.apply_c(q, true, &one);
            let pq = space.apply_c(p, true, &space.apply_c(q, true, &vac));
            // both orders must be nonzero and opposite
            t.record(if qp.is_zero() { 1.0 } else { 0.0 });
            t.vec(&qp, &pq.scaled(&T::ratio(-1, 1)));
        }
    }
    t.finish()
}

fn random_on<T: Amp>(lune: &Lune, rng: &mut ChaCha8Rng) -> Vec<(LatticeVec, T)> {
    lune.points.iter().map(|&p| (p, rand_amp(rng))).collect()
}

fn support<T: Amp>(v: &[(LatticeVec, T)]) -> Support<T> {
    Arc::new(v.iter().cloned().collect())
}

fn inner<T: Amp>(a: &Support<T>, b: &Support<T>) -> T {
    let mut keys: Vec<_> = a.keys().copied().collect();
    keys.sort_unstable();
    keys.iter().fold(T::nil(), |acc, q| match b.get(q) {
        Some(y) => acc.plus(&a[q].times(y)),
        None => acc,
    })
}

/// ([b_k(φ), b_l†(ψ)] − δ_{kl}⟨φ,ψ⟩ − ε_{k,l}(φ;ψ))Ψ = 0, [b,b]Ψ = [b†,b†]Ψ = 0.
pub fn check_quasi_boson_commutator<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    l: LatticeVec,
    phi: &[(LatticeVec, T)],
    psi: &[(LatticeVec, T)],
    states: &[FockVector<T>],
) -> Result<CheckReport> {
    let mut t = Tally::new::<T>("quasi_boson_commutator");
    quasi_boson_into(space, k, l, phi, psi, states, &mut t)?;
    Ok(t.finish())
}

fn quasi_boson_into<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    l: LatticeVec,
    phi: &[(LatticeVec, T)],
    psi: &[(LatticeVec, T)],
    states: &[FockVector<T>],
    t: &mut Tally,
) -> Result<()> {
    let bk = OpSum::op(space.b_vec(k, phi.to_vec(), false)?);
    let bkd = OpSum::op(space.b_vec(k, phi.to_vec(), true)?);
    let bl = OpSum::op(space.b_vec(l, psi.to_vec(), false)?);
    let bld = OpSum::op(space.b_vec(l, psi.to_vec(), true)?);
    let (sp, sq) = (support(phi), support(psi));
    let mut expected = exchange_correction(k, l, sp.clone(), sq.clone());
    if k == l {
        expected = expected.plus(OpSum::op(Op::Scalar(inner(&sp, &sq))));
    }
    let comm = OpSum::commutator(&bk, &bld);
    let bb = OpSum::commutator(&bk, &bl);
    let bdbd = OpSum::commutator(&bkd, &bld);
    for psi_v in states {
        t.vec(&space.apply_sum(&comm, psi_v), &space.apply_sum(&expected, psi_v));
        t.record(space.apply_sum(&bb, psi_v).max_abs());
        t.record(space.apply_sum(&bdbd, psi_v).max_abs());
    }
    Ok(())
}

/// ε_{k,k}(e_p;e_p) is diagonal on basis states with nonpositive entries.
pub fn check_exchange_diagonal<T: Amp>(space: &FockSpace, ks: &[LatticeVec], states: &[FockVector<T>]) -> CheckReport {
    let mut t = Tally::new::<T>("exchange_diagonal_nonpositive");
    let mut basis: Vec<BasisState> = states.iter().flat_map(|v| v.terms.keys().cloned()).collect();
    basis.sort_unstable();
    basis.dedup();
    for &k in ks {
        for &p in &space.lune(k).points {
            let e: Support<T> = Arc::new([(p, T::ratio(1, 1))].into_iter().collect());
            let eps = exchange_correction(k, k, e.clone(), e);
            for s in &basis {
                let out = space.apply_sum(&eps, &FockVector::basis(s.clone()));
                let mut bad = 0.0f64;
                for (r, a) in &out.terms {
                    if r != s || !is_nonpositive(a) {
                        bad = bad.max(a.magnitude());
                    }
                }
                t.record(bad);
            }
        }
    }
    t.finish()
}

fn is_nonpositive<T: Amp>(a: &T) -> bool {
    // a ≤ 0 ⟺ |a + |a|| = 0
    let m = T::from_f64(a.magnitude());
    let s = a.plus(&m);
    s.magnitude() <= if T::EXACT { 0.0 } else { 1e-12 * m.magnitude() }
}

/// ([H′_kin, b†_{k,p}] − 2λ_{k,p} b†_{k,p})Ψ = 0.
pub fn check_kinetic_commutator<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    p: LatticeVec,
    states: &[FockVector<T>],
) -> Result<CheckReport> {
    let mut t = Tally::new::<T>("kinetic_commutator");
    kinetic_into(space, k, p, states, &mut t)?;
    Ok(t.finish())
}

fn kinetic_into<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    p: LatticeVec,
    states: &[FockVector<T>],
    t: &mut Tally,
) -> Result<()> {
    if space.inside(p) || !space.inside(p - k) {
        return Err(Error::validation(format!("{p} is not in L_{k}")));
    }
    let lam2 = p.norm_sq() - (p - k).norm_sq();
    let comm = OpSum::commutator(&OpSum::op(Op::HkinPrime), &OpSum::op(Op::BDag(k, p)));
    let rhs = OpSum::op(Op::BDag(k, p)).scaled(&T::ratio(lam2, 1));
    for psi in states {
        t.vec(&space.apply_sum(&comm, psi), &space.apply_sum(&rhs, psi));
    }
    Ok(())
}

fn indicator_pairs<T: Amp>(
    kf2: i64,
    a: LatticeVec,
    b: LatticeVec,
    sign: i64,
    pred: impl Fn(LatticeVec) -> bool + Send + Sync + 'static,
) -> OpSum<T> {
    let _ = kf2;
    OpSum::op(Op::Pairs(PairSum {
        a,
        b,
        coef: Arc::new(move |q| if pred(q) { Some(T::ratio(sign, 1)) } else { None }),
    }))
}

/// The four D-commutator identities for one (k, l) pair.
pub fn check_d_commutators<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    l: LatticeVec,
    phi: &[(LatticeVec, T)],
    states: &[FockVector<T>],
) -> Result<Vec<CheckReport>> {
    let mut tallies = d_tallies::<T>();
    d_into(space, k, l, phi, states, &mut tallies)?;
    Ok(tallies.into_iter().map(Tally::finish).collect())
}

fn d_tallies<T: Amp>() -> Vec<Tally> {
    vec![
        Tally::new::<T>("d_commutator_same_kind"),
        Tally::new::<T>("d_commutator_c_tilde"),
        Tally::new::<T>("d_commutator_pair_creation"),
        Tally::new::<T>("d_commutator_mixed_kind"),
    ]
}

fn d_into<T: Amp>(
    space: &FockSpace,
    k: LatticeVec,
    l: LatticeVec,
    phi: &[(LatticeVec, T)],
    states: &[FockVector<T>],
    t: &mut [Tally],
) -> Result<()> {
    let kf2 = space.ball().kf2;
    let inb = move |q: LatticeVec| q.norm_sq() <= kf2;
    let outb = move |q: LatticeVec| q.norm_sq() > kf2;
    // (i): D*_{j,k} = D_{j,−k}
    let same1 = OpSum::commutator(&OpSum::op(Op::D1(-k)), &OpSum::op(Op::D1(l)));
    let f1 = indicator_pairs::<T>(kf2, k, l, 1, move |q| outb(q) && outb(q + k) && outb(q + l)).plus(
        indicator_pairs(kf2, -l, -k, -1, move |q| outb(q) && outb(q - k) && outb(q - l)),
    );
    let same2 = OpSum::commutator(&OpSum::op(Op::D2(-k)), &OpSum::op(Op::D2(l)));
    let f2 = indicator_pairs::<T>(kf2, -k, -l, 1, move |q| inb(q) && inb(q - k) && inb(q - l)).plus(
        indicator_pairs(kf2, l, k, -1, move |q| inb(q) && inb(q + k) && inb(q + l)),
    );
    // (ii): [c̃_r, D_l] for r = p−k (p ∈ L_k) and r = p+k (p ∈ L_k − k)
    let lune = space.lune(k);
    let mut rs: Vec<LatticeVec> = lune.points.iter().flat_map(|&p| [p - k, p]).collect();
    rs.sort_unstable();
    rs.dedup();
    let dl = OpSum::op(Op::D(l));
    let c_tilde: Vec<(OpSum<T>, OpSum<T>)> = rs
        .iter()
        .map(|&r| {
            let lhs = OpSum::commutator(&OpSum::op(Op::Ladder(Letter::Ct(r))), &dl);
            let rhs = if space.inside(r) {
                if space.inside(r - l) {
                    OpSum::op(Op::Ladder(Letter::Ct(r - l))).scaled(&T::ratio(-1, 1))
                } else {
                    OpSum::zero()
                }
            } else if !space.inside(r + l) {
                OpSum::op(Op::Ladder(Letter::Ct(r + l)))
            } else {
                OpSum::zero()
            };
            (lhs, rhs)
        })
        .collect();
    // (iii): [b_k†(φ), D_l]
    let bkd = OpSum::op(space.b_vec(k, phi.to_vec(), true)?);
    let pair_lhs = OpSum::commutator(&bkd, &dl);
    let mut pair_rhs = OpSum::zero();
    for (q, c) in phi {
        let q = *q;
        if !space.inside(q - l) {
            pair_rhs = pair_rhs.plus(
                OpSum::word(vec![Op::Ladder(Letter::Ctd(q - l)), Op::Ladder(Letter::Ctd(q - k))])
                    .scaled(&c.negated()),
            );
        }
        if space.inside(q - k + l) {
            pair_rhs = pair_rhs
                .plus(OpSum::word(vec![Op::Ladder(Letter::Ctd(q)), Op::Ladder(Letter::Ctd(q - k + l))]).scaled(c));
        }
    }
    // (iv): [D_{1,k}, D*_{2,l}] = 0
    let mixed = OpSum::commutator(&OpSum::op(Op::D1(k)), &OpSum::op(Op::D2(-l)));
    for psi in states {
        t[0].vec(&space.apply_sum(&same1, psi), &space.apply_sum(&f1, psi));
        t[0].vec(&space.apply_sum(&same2, psi), &space.apply_sum(&f2, psi));
        for (lhs, rhs) in &c_tilde {
            t[1].vec(&space.apply_sum(lhs, psi), &space.apply_sum(rhs, psi));
        }
        t[2].vec(&space.apply_sum(&pair_lhs, psi), &space.apply_sum(&pair_rhs, psi));
        t[3].record(space.apply_sum(&mixed, psi).max_abs());
    }
    Ok(())
}

/// Both sides of the quadratic expansion identity applied to Ψ.
pub fn quadratic_sides<T: Amp>(
    space: &FockSpace,
    fam: &CoeffFamily<T>,
    psi: &FockVector<T>,
) -> (FockVector<T>, FockVector<T>) {
    let two = T::ratio(2, 1);
    let mut lhs = FockVector::zero();
    let mut rhs = FockVector::zero();
    for m in &fam.members {
        let k = m.k;
        let mm = fam.member(-k);
        let n = m.lune.len();
        let pts = &m.lune.points;
        let col = |mat: &Mat<T>, j: usize| -> Vec<(LatticeVec, T)> {
            (0..n).map(|r| (pts[r], mat.get(r, j).clone())).collect()
        };
        // S_{−k} e_{−q} as a vector on L_{−k}
        let scol = |q: usize| -> Vec<(LatticeVec, T)> {
            let j = mm.lune.index_of(-pts[q]).expect("mirrored lune");
            (0..n).map(|r| (mm.lune.points[r], mm.s.get(r, j).clone())).collect()
        };
        let x = |q: usize| OpSum::op(Op::BVec(k, col(&m.c, q))).plus(OpSum::op(Op::BVecDag(-k, scol(q))));
        let xd = |q: usize| OpSum::op(Op::BVecDag(k, col(&m.c, q))).plus(OpSum::op(Op::BVec(-k, scol(q))));

        let y: Vec<_> = (0..n).map(|q| space.apply_sum(&x(q), psi)).collect();
        for p in 0..n {
            let mut z = FockVector::zero();
            for (q, yq) in y.iter().enumerate() {
                z.add_scaled(yq, &two.times(m.a.get(p, q)));
            }
            lhs.add_assign(&space.apply_sum(&xd(p), &z));
        }

        let sas = m.s.mul(&m.a).mul(&m.s.t());
        let m1 = m.c.mul(&m.a).mul(&m.c.t()).add(&sas);
        let cas = m.c.mul(&m.a).mul(&m.s.t());
        let m2 = cas.add(&cas.t());
        // 2 Q1(M1)
        let bq: Vec<_> = (0..n).map(|q| space.apply(&Op::B(k, pts[q]), psi)).collect();
        for p in 0..n {
            let mut z = FockVector::zero();
            for (q, v) in bq.iter().enumerate() {
                z.add_scaled(v, &two.times(m1.get(p, q)));
            }
            rhs.add_assign(&space.apply(&Op::BDag(k, pts[p]), &z));
        }
        // Q2(M2)
        let bm: Vec<_> = (0..n).map(|q| space.apply(&Op::B(-k, -pts[q]), psi)).collect();
        let bdp: Vec<_> = (0..n).map(|p| space.apply(&Op::BDag(k, pts[p]), psi)).collect();
        for p in 0..n {
            let mut z = FockVector::zero();
            for (q, v) in bm.iter().enumerate() {
                z.add_scaled(v, m2.get(p, q));
            }
            rhs.add_assign(&space.apply(&Op::B(k, pts[p]), &z));
        }
        for q in 0..n {
            let mut z = FockVector::zero();
            for (p, v) in bdp.iter().enumerate() {
                z.add_scaled(v, m2.get(p, q));
            }
            rhs.add_assign(&space.apply(&Op::BDag(-k, -pts[q]), &z));
        }
        // 2 tr(S A S*) + 2 Σ_p ε_{k,k}(e_p; S A S* e_p)
        rhs.add_scaled(psi, &two.times(&sas.trace()));
        for p in 0..n {
            let e: Support<T> = Arc::new([(pts[p], T::ratio(1, 1))].into_iter().collect());
            let v = support(&col(&sas, p));
            let eps = exchange_correction(k, k, e, v);
            rhs.add_scaled(&space.apply_sum(&eps, psi), &two);
        }
    }
    (lhs, rhs)
}

pub fn check_quadratic_expansion<T: Amp>(
    space: &FockSpace,
    fam: &CoeffFamily<T>,
    states: &[FockVector<T>],
) -> CheckReport {
    let mut t = Tally::new::<T>("quadratic_expansion");
    for psi in states {
        let (l, r) = quadratic_sides(space, fam, psi);
        t.vec(&l, &r);
    }
    t.finish()
}

/// Σᵢ q(Se_i, Te_i) = Σᵢ q(ST*e_i, e_i) for a random two-component bilinear q.
pub fn check_trace_form_lemma<T: Amp>(dim: usize, trials: usize, rng: &mut ChaCha8Rng) -> Result<CheckReport> {
    if dim == 0 || dim > 12 {
        return Err(Error::validation(format!("trace-form dimension must be 1..=12, got {dim}")));
    }
    let mut t = Tally::new::<T>("trace_form_lemma").with_tol(if T::EXACT { 0.0 } else { 1e-12 });
    for trial in 0..trials {
        let q: Vec<Mat<T>> = (0..2).map(|_| Mat::from_fn(dim, |_, _| rand_amp(rng))).collect();
        let s = Mat::from_fn(dim, |_, _| rand_amp(rng));
        let tm = match trial % 3 {
            0 => Mat::from_fn(dim, |_, _| rand_amp(rng)),
            1 => {
                let g = nalgebra::DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
                Mat::from_nalgebra(&g.qr().q())
            }
            _ => Mat::from_fn(dim, |i, j| if i == j { T::ratio(1, 1) } else { T::nil() }),
        };
        let st = s.mul(&tm.t());
        let mut scale = 0.0f64;
        for qm in &q {
            let mut lhs = T::nil();
            let mut rhs = T::nil();
            for i in 0..dim {
                for a in 0..dim {
                    for b in 0..dim {
                        lhs = lhs.plus(&qm.get(a, b).times(&s.get(a, i).times(tm.get(b, i))));
                    }
                    rhs = rhs.plus(&qm.get(a, i).times(st.get(a, i)));
                }
            }
            scale = scale.max(lhs.magnitude()).max(1.0);
            t.record(lhs.plus(&rhs.negated()).magnitude() / scale);
        }
    }
    Ok(t.finish())
}

/// Σ_k V̂_k(N−|L_k|) = Σ_{p≠q} V̂(p−q) exactly, the set identity
/// N − |L_k| = |B_F ∩ (B_F+k)|, and E_FS two ways.
pub fn check_e_fs(k_f: f64, beta: f64, model: &PotentialModel) -> Result<Vec<CheckReport>> {
    if k_f > 2.0 {
        return Err(Error::validation("E_FS oracle is limited to k_F ≤ 2"));
    }
    let ball = FermiBall::new(k_f)?;
    let n = ball.n() as i64;
    let vr = |k: LatticeVec| BigRational::from_f64(model.at_norm_sq(k.norm_sq()));
    let mut sets = Tally::new::<BigRational>("e_fs_lune_complement");
    let mut sum = Tally::new::<BigRational>("e_fs_exchange_sum");
    let reach = 2 * ball.radius_bound() + 1;
    let mut via_k = BigRational::nil();
    for k in momenta(reach * reach) {
        let lune = Lune::new(&ball, k)?;
        let overlap = ball.points.iter().filter(|&&p| ball.contains(p - k)).count() as i64;
        let deficit = n - lune.len() as i64;
        sets.record((deficit - overlap).abs() as f64);
        if deficit != 0 {
            via_k = via_k.plus(&vr(k).times(&BigRational::ratio(deficit, 1)));
        }
    }
    let mut pairs = BigRational::nil();
    let mut pairs_f = crate::sum::Neumaier::new();
    for &p in &ball.points {
        for &q in &ball.points {
            if p != q {
                pairs = pairs.plus(&vr(p - q));
                pairs_f.add(model.at_norm_sq((p - q).norm_sq()));
            }
        }
    }
    sum.record(via_k.plus(&pairs.negated()).magnitude());
    let kin: i64 = ball.points.iter().map(|p| p.norm_sq()).sum();
    let pref = k_f.powf(-beta) / (2.0 * TWO_PI_CUBED);
    let e_k = kin as f64 - pref * via_k.magnitude();
    let e_pairs = kin as f64 - pref * pairs_f.value();
    let mut energy = Tally::new::<f64>("e_fs_energy").with_tol(1e-12);
    energy.record((e_k - e_pairs).abs() / e_k.abs().max(1.0));
    Ok(vec![sets.finish(), sum.finish(), energy.finish()])
}

/// Σ_{B^c} c*c and Σ_B cc* agree on number-conserving states.
pub fn check_particle_hole<T: Amp>(space: &FockSpace, states: &[FockVector<T>]) -> CheckReport {
    let mut t = Tally::new::<T>("particle_hole_number");
    for psi in states {
        t.vec(&space.apply(&Op::NumberOutside, psi), &space.apply(&Op::NumberHoles, psi));
    }
    t.finish()
}

/// Named-operator consistency: b recovers |FS⟩ from a pair, H′_kin on
/// c̃†|FS⟩, both forms of D_{1,k} and D_{2,k}, B_k via its lune sum, and the
/// ζ-free form of H′_kin on N-particle states.
pub fn check_named_operators<T: Amp>(space: &FockSpace, ks: &[LatticeVec], states: &[FockVector<T>]) -> CheckReport {
    let mut t = Tally::new::<T>("named_operators");
    let fs = FockVector::<T>::fermi_sea();
    t.record(space.apply(&Op::HkinPrime, &fs).max_abs());
    for p in momenta(9) {
        let e = space.apply(&Op::Ladder(Letter::Ctd(p)), &fs);
        let he = space.apply(&Op::HkinPrime, &e);
        t.vec(&he, &e.scaled(&space.abs_gap::<T>(p)));
    }
    let kf2 = space.ball().kf2;
    for &k in ks {
        let lune = space.lune(k);
        for &p in &lune.points {
            let pair = space.apply(&Op::BDag(k, p), &fs);
            t.vec(&space.apply(&Op::B(k, p), &pair), &fs);
        }
        let big = OpSum::op(Op::BigB(k));
        let mut by_sum = OpSum::zero();
        let mut by_sum_d = OpSum::zero();
        for &p in &lune.points {
            by_sum = by_sum.plus(OpSum::op(Op::B(k, p)));
            by_sum_d = by_sum_d.plus(OpSum::op(Op::BDag(k, p)));
        }
        let d1 = indicator_pairs::<T>(kf2, LatticeVec::ZERO, k, 1, move |q| q.norm_sq() > kf2 && (q + k).norm_sq() > kf2);
        let d2 = indicator_pairs::<T>(kf2, LatticeVec::ZERO, -k, -1, move |q| {
            q.norm_sq() <= kf2 && (q - k).norm_sq() <= kf2
        });
        for psi in states {
            t.vec(&space.apply_sum(&big, psi), &space.apply_sum(&by_sum, psi));
            t.vec(&space.apply(&Op::BigBDag(k), psi), &space.apply_sum(&by_sum_d, psi));
            t.vec(&space.apply(&Op::D1(k), psi), &space.apply_sum(&d1, psi));
            t.vec(&space.apply(&Op::D2(k), psi), &space.apply_sum(&d2, psi));
        }
    }
    // with N_E = Σ_{B^c}n = Σ_B(1−n) the bare and ζ forms coincide
    for psi in states {
        t.vec(&space.apply(&Op::HkinPrime, psi), &space.apply(&Op::HkinBare, psi));
    }
    t.finish()
}

#[derive(Clone, Debug)]
pub struct FockOptions {
    pub seed: u64,
    /// Random states per identity (|FS⟩ is always the first).
    pub states: usize,
    /// Momentum transfers with |k|² ≤ this are scanned.
    pub k_radius_sq: i64,
    /// Transfers used to build random states.
    pub state_radius_sq: i64,
    pub car_box: i64,
    pub trace_trials: usize,
    /// Second admissible ζ as num/den.
    pub alt_zeta: (i64, i64),
}

impl Default for FockOptions {
    fn default() -> Self {
        FockOptions {
            seed: 0x5eed_f0c5,
            states: 20,
            k_radius_sq: 4,
            state_radius_sq: 2,
            car_box: 2,
            trace_trials: 6,
            alt_zeta: (5, 4),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FockReport {
    pub k_f: f64,
    pub zeta: f64,
    pub alt_zeta: f64,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

impl FockReport {
    pub fn failing(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.pass).map(|c| format!("{}[{}]", c.name, c.arithmetic)).collect()
    }
}

/// Runs every identity in rational and float arithmetic.
pub fn run_suite(k_f: f64, beta: f64, model: &PotentialModel, opts: &FockOptions) -> Result<FockReport> {
    let space = FockSpace::new(k_f)?;
    let alt = FockSpace::with_zeta(k_f, opts.alt_zeta.0, opts.alt_zeta.1)?;
    let mut checks = suite_for::<BigRational>(&space, &alt, model, opts)?;
    checks.extend(suite_for::<f64>(&space, &alt, model, opts)?);
    checks.extend(check_e_fs(k_f, beta, model)?);
    checks.push(trace_relation(k_f, beta, model)?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(FockReport { k_f, zeta: space.zeta(), alt_zeta: alt.zeta(), checks, pass })
}

fn suite_for<T: Amp>(
    space: &FockSpace,
    alt: &FockSpace,
    model: &PotentialModel,
    opts: &FockOptions,
) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let states: Vec<FockVector<T>> = random_states(space, &mut rng, opts.states.max(1), opts.state_radius_sq);
    let few = &states[..states.len().min(3)];
    let ks = momenta(opts.k_radius_sq);
    let mut out = vec![check_car(space, few, opts.car_box)];

    let mut qb = Tally::new::<T>("quasi_boson_commutator");
    let small = momenta(opts.state_radius_sq);
    let qb_states = &states[..states.len().min(6)];
    for &k in &small {
        for &l in &small {
            let phi = random_on::<T>(&space.lune(k), &mut rng);
            let psi = random_on::<T>(&space.lune(l), &mut rng);
            quasi_boson_into(space, k, l, &phi, &psi, qb_states, &mut qb)?;
        }
        // φ = ψ = e_p on |FS⟩
        for &p in &space.lune(k).points {
            let e = vec![(p, T::ratio(1, 1))];
            quasi_boson_into(space, k, k, &e, &e, &states[..1], &mut qb)?;
        }
    }
    out.push(qb.finish());
    out.push(check_exchange_diagonal(space, &ks, &states));

    let mut kin = Tally::new::<T>("kinetic_commutator");
    let mut kin_alt = Tally::new::<T>("kinetic_commutator_alt_zeta");
    for &k in &ks {
        for &p in &space.lune(k).points {
            kinetic_into(space, k, p, &states, &mut kin)?;
            kinetic_into(alt, k, p, few, &mut kin_alt)?;
        }
    }
    out.push(kin.finish());
    out.push(kin_alt.finish());

    let mut dt = d_tallies::<T>();
    for &k in &ks {
        let phi = random_on::<T>(&space.lune(k), &mut rng);
        for &l in &ks {
            d_into(space, k, l, &phi, &states, &mut dt)?;
        }
    }
    out.extend(dt.into_iter().map(Tally::finish));

    let mut quad = Tally::new::<T>("quadratic_expansion");
    let families = [
        CoeffFamily::<T>::random(space, &[LatticeVec::new(1, 0, 0)], &mut rng)?,
        CoeffFamily::<T>::random(space, &[LatticeVec::new(1, 0, 0), LatticeVec::new(0, 1, 1)], &mut rng)?,
        mode_family::<T>(space, model)?,
    ];
    for fam in &families {
        for psi in &states[..states.len().min(10)] {
            let (l, r) = quadratic_sides(space, fam, psi);
            quad.vec(&l, &r);
        }
    }
    out.push(quad.finish());

    let mut tf = Tally::new::<T>("trace_form_lemma").with_tol(if T::EXACT { 0.0 } else { 1e-12 });
    for dim in 1..=12 {
        let r = check_trace_form_lemma::<T>(dim, opts.trace_trials, &mut rng)?;
        tf.cases += r.cases;
        tf.max = tf.max.max(r.max_residual);
    }
    out.push(tf.finish());
    out.push(check_particle_hole(space, &states));
    out.push(check_named_operators(space, &ks, few));
    Ok(out)
}

/// C, S, A = E of the actual one-body mode at k = (1,0,0).
fn mode_family<T: Amp>(space: &FockSpace, model: &PotentialModel) -> Result<CoeffFamily<T>> {
    let k = LatticeVec::new(1, 0, 0);
    let m = build_mode(space.ball().k_f, 1.0, model, k, false)?;
    let sym = |x: &nalgebra::DMatrix<f64>| (x + x.transpose()) * 0.5;
    CoeffFamily::mirrored(
        space,
        vec![(k, Mat::from_nalgebra(&m.c), Mat::from_nalgebra(&m.s), Mat::from_nalgebra(&sym(&m.e)))],
    )
}

/// −2 tr(S E S*) = tr(E − h − P) for the mode at k = (1,0,0).
pub fn trace_relation(k_f: f64, beta: f64, model: &PotentialModel) -> Result<CheckReport> {
    let m = build_mode(k_f, beta, model, LatticeVec::new(1, 0, 0), false)?;
    let lhs = -2.0 * (&m.s * &m.e * m.s.transpose()).trace();
    let rhs = crate::onebody::trace_term(&m);
    let mut t = Tally::new::<f64>("trace_relation");
    t.record((lhs - rhs).abs());
    Ok(t.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = BigRational;

    fn v(x: i64, y: i64, z: i64) -> LatticeVec {
        LatticeVec::new(x, y, z)
    }

    fn space() -> FockSpace {
        FockSpace::new(1.0).unwrap()
    }

    #[test]
    fn zeta_is_midpoint() {
        let s = space();
        assert_eq!(s.zeta(), 1.5);
        assert!(FockSpace::with_zeta(1.0, 5, 4).is_ok());
        assert!(FockSpace::with_zeta(1.0, 5, 2).is_err());
    }

    #[test]
    fn vacuum_creation_and_sign() {
        let s = space();
        let vac = s.vacuum::<Q>();
        let p = v(0, 0, 0);
        let one = s.apply_c(p, true, &vac);
        let (st, a) = one.terms.iter().next().unwrap();
        assert_eq!(s.occupied(st), vec![p]);
        assert_eq!(*a, Q::ratio(1, 1));
        assert!(s.apply_c(p, true, &one).is_zero());
        // exhaustive pair sign test over the ball and first shell
        let modes = ball_points(2);
        for (i, &p) in modes.iter().enumerate() {
            for &q in &modes[i + 1..] {
                let qp = s.apply_c(q, true, &s.apply_c(p, true, &vac));
                let pq = s.apply_c(p, true, &s.apply_c(q, true, &vac));
                assert!(!qp.is_zero());
                assert_eq!(qp, pq.scaled(&Q::ratio(-1, 1)));
            }
        }
    }

    #[test]
    fn occupied_order_is_canonical() {
        let s = space();
        let mut st = BasisState { holes: vec![v(0, 0, 1)], particles: vec![v(2, 0, 0), v(1, 1, 0)] };
        st.particles.sort_unstable();
        let occ = s.occupied(&st);
        assert_eq!(occ.len(), 8);
        assert!(occ.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pair_excitation_round_trip() {
        let s = space();
        let fs = FockVector::<Q>::fermi_sea();
        let k = v(1, 0, 0);
        let p = v(2, 0, 0);
        let pair = s.apply(&Op::BDag(k, p), &fs);
        assert_eq!(pair.len(), 1);
        assert_eq!(s.apply(&Op::B(k, p), &pair), fs);
        // H′ on the pair: ||p|²−ζ| + ||p−k|²−ζ| = 2.5 + 0.5
        let h = s.apply(&Op::HkinPrime, &pair);
        assert_eq!(h, pair.scaled(&Q::ratio(3, 1)));
    }

    #[test]
    fn exchange_on_fermi_sea() {
        // ε_{k,k}(e_p;e_p)|FS⟩ = −(hole count at p−k + particle count at p)|FS⟩ = 0
        let s = space();
        let k = v(1, 0, 0);
        let e: Support<Q> = Arc::new([(v(2, 0, 0), Q::ratio(1, 1))].into_iter().collect());
        let fs = FockVector::<Q>::fermi_sea();
        assert!(s.apply_sum(&exchange_correction(k, k, e.clone(), e.clone()), &fs).is_zero());
        // on the pair state both counts are one
        let pair = s.apply(&Op::BDag(k, v(2, 0, 0)), &fs);
        let out = s.apply_sum(&exchange_correction(k, k, e.clone(), e), &pair);
        assert_eq!(out, pair.scaled(&Q::ratio(-2, 1)));
    }

    #[test]
    fn disjoint_lunes_commute_up_to_exchange() {
        let s = space();
        let (k, l) = (v(2, 0, 0), v(-2, 0, 0));
        let lk = s.lune(k);
        let ll = s.lune(l);
        assert!(lk.points.iter().all(|p| ll.index_of(*p).is_none()));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states = random_states::<Q>(&s, &mut rng, 4, 2);
        let phi = random_on::<Q>(&lk, &mut rng);
        let psi = random_on::<Q>(&ll, &mut rng);
        let r = check_quasi_boson_commutator(&s, k, l, &phi, &psi, &states).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn identities_are_not_vacuous() {
        // the exchange correction and the D-commutators act nontrivially on the trial states
        let s = space();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let states = random_states::<Q>(&s, &mut rng, 8, 2);
        let k = v(1, 0, 0);
        let e: Support<Q> = Arc::new([(v(1, 1, 0), Q::ratio(1, 1))].into_iter().collect());
        let eps = exchange_correction(k, k, e.clone(), e);
        assert!(states.iter().any(|p| !s.apply_sum(&eps, p).is_zero()));
        let dd = OpSum::commutator(&OpSum::op(Op::D1(-k)), &OpSum::op(Op::D1(v(0, 1, 0))));
        assert!(states.iter().any(|p| !s.apply_sum(&dd, p).is_zero()));
        let fam = CoeffFamily::<Q>::random(&s, &[k], &mut rng).unwrap();
        let (l, _) = quadratic_sides(&s, &fam, &states[1]);
        assert!(!l.is_zero());
    }

    #[test]
    fn b_vec_rejects_foreign_support() {
        let s = space();
        assert!(s.b_vec::<Q>(v(1, 0, 0), vec![(v(0, 2, 0), Q::ratio(1, 1))], false).is_err());
    }

    #[test]
    fn zero_family_sides_vanish() {
        let s = space();
        let k = v(1, 0, 0);
        let n = s.lune(k).len();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Mat::from_fn(n, |_, _| rand_amp::<Q>(&mut rng));
        let fam = CoeffFamily::mirrored(&s, vec![(k, c.clone(), c, Mat::zeros(n))]).unwrap();
        let states = random_states::<Q>(&s, &mut rng, 3, 2);
        for psi in &states {
            let (l, r) = quadratic_sides(&s, &fam, psi);
            assert!(l.is_zero() && r.is_zero());
        }
    }

    #[test]
    fn quadratic_expansion_random_family() {
        let s = space();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = CoeffFamily::<Q>::random(&s, &[v(1, 1, 0)], &mut rng).unwrap();
        let states = random_states::<Q>(&s, &mut rng, 4, 2);
        let r = check_quadratic_expansion(&s, &fam, &states);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn family_rejects_asymmetric_a() {
        let s = space();
        let k = v(1, 0, 0);
        let n = s.lune(k).len();
        let a = Mat::from_fn(n, |i, j| Q::ratio((i * 3 + j) as i64, 1));
        assert!(CoeffFamily::mirrored(&s, vec![(k, a.clone(), a.clone(), a)]).is_err());
    }

    #[test]
    fn d_commutators_small() {
        let s = space();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let states = random_states::<Q>(&s, &mut rng, 4, 2);
        for (k, l) in [(v(1, 0, 0), v(1, 0, 0)), (v(1, 0, 0), v(0, 1, 1)), (v(2, 0, 0), v(-1, 1, 0))] {
            let phi = random_on::<Q>(&s.lune(k), &mut rng);
            for r in check_d_commutators(&s, k, l, &phi, &states).unwrap() {
                assert!(r.pass, "{k} {l} {r:?}");
            }
        }
    }

    #[test]
    fn kinetic_commutator_float_and_alt_zeta() {
        let s = FockSpace::with_zeta(1.0, 7, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let states = random_states::<f64>(&s, &mut rng, 4, 2);
        let k = v(1, 1, 0);
        for &p in &s.lune(k).points {
            assert!(check_kinetic_commutator(&s, k, p, &states).unwrap().pass);
        }
        assert!(check_kinetic_commutator(&s, k, v(0, 0, 0), &states).is_err());
    }

    #[test]
    fn trace_form_and_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(check_trace_form_lemma::<Q>(8, 3, &mut rng).unwrap().pass);
        assert!(check_trace_form_lemma::<f64>(8, 3, &mut rng).unwrap().pass);
        assert!(check_trace_form_lemma::<f64>(13, 1, &mut rng).is_err());
        let r = trace_relation(1.0, 1.0, &PotentialModel::coulomb(1.0)).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn e_fs_small() {
        let reps = check_e_fs(1.0, 1.0, &PotentialModel::coulomb(1.0)).unwrap();
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
        // 42 ordered pairs at k_F = 1; zero coupling leaves Σ|p|² = 6
        let ball = FermiBall::new(1.0).unwrap();
        assert_eq!(ball.n() * (ball.n() - 1), 42);
        assert_eq!(ball.points.iter().map(|p| p.norm_sq()).sum::<i64>(), 6);
        assert!(check_e_fs(3.0, 1.0, &PotentialModel::coulomb(1.0)).is_err());
    }
}
