//! Correlation sums over k ∈ ℤ³_*: the bosonic term (quadrature and trace
//! paths), the exchange term, the second-order approximation and the
//! E_B,6 exchange cross-check.
//!
//! Every k-sum runs over octahedral orbit representatives. Per-orbit values
//! land in pre-allocated slots (rayon `collect` preserves order) and are
//! folded sequentially with Neumaier summation, so results do not depend on
//! the number of worker threads.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{isqrt, orbits, radial_sum, FermiBall, LatticeVec, Lune, LuneSpectrum};
use crate::onebody::{mode_coupling, GroupedMode};
use crate::potential::PotentialModel;
use crate::quad::{integrate, integrate_vec, QuadOptions};
use crate::sum::Neumaier;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// (2π)⁶
const TWO_PI_SIX: f64 = 64.0 * PI * PI * PI * PI * PI * PI;

/// F(x) = log(1+x) − x, with a series near 0 to avoid cancellation.
#[inline]
pub fn f_rpa(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (-0.5 + x * (1.0 / 3.0 + x * (-0.25 + x * (0.2 + x * (-1.0 / 6.0 + x / 7.0)))))
    } else {
        x.ln_1p() - x
    }
}

/// Λ_k(t) = Σ_{p∈L_k} λ/(λ²+t²), compensated, in canonical point order.
pub fn lindhard_sum(lune: &Lune, t: f64) -> f64 {
    let t2 = t * t;
    lune.lambdas.iter().map(|&l| l / (l * l + t2)).collect::<Neumaier>().value()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

/// The bosonic term of one mode together with its second-order part
/// −(1/2π)∫(2gΛ)² dt = −g²Σ_{p,q}1/(λ_p+λ_q), from one quadrature pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModeIntegrals {
    pub bos: QuadValue,
    pub second_order: f64,
}

struct Histogram {
    lambda: Vec<f64>,
    count: Vec<f64>,
}

impl Histogram {
    fn new(spec: &LuneSpectrum) -> Self {
        Histogram {
            lambda: (0..spec.groups()).map(|j| spec.lambda(j)).collect(),
            count: spec.counts.iter().map(|&c| c as f64).collect(),
        }
    }

    #[inline]
    fn lindhard(&self, t: f64) -> f64 {
        let t2 = t * t;
        let mut s = Neumaier::new();
        for (l, c) in self.lambda.iter().zip(&self.count) {
            s.add(c * l / (l * l + t2));
        }
        s.value()
    }

    fn power_sum(&self, p: i32) -> f64 {
        self.lambda.iter().zip(&self.count).map(|(l, c)| c * l.powi(p)).collect::<Neumaier>().value()
    }
}

/// (1/π)∫₀^∞ F(2gΛ(t)) dt for a lune given by its λ-histogram.
///
/// [0, λ_min/2] is integrated directly, [λ_min/2, 50 λ_max] in ln t, and the
/// rest from the large-t expansion Λ = S₁/t² − S₃/t⁴ + …, F = −x²/2 + x³/3 − …
pub fn mode_integrals(spec: &LuneSpectrum, g: f64, quad_tol: f64) -> Result<ModeIntegrals> {
    if g == 0.0 || spec.is_empty() {
        return Ok(ModeIntegrals::default());
    }
    if !(quad_tol > 0.0) {
        return Err(Error::validation("quad_tol must be positive"));
    }
    let h = Histogram::new(spec);
    let w = 2.0 * g;
    let t0 = 0.5 * spec.min_lambda();
    let t_max = 50.0 * spec.max_lambda();
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: quad_tol, max_intervals: 4000 };
    let both = |t: f64, out: &mut [f64]| {
        let x = w * h.lindhard(t);
        out[0] = f_rpa(x);
        out[1] = -0.5 * x * x;
    };
    let (near, e_near) = integrate_vec(both, 2, 0.0, t0, opts)?;
    let (mid, e_mid) = integrate_vec(
        |s, out| {
            let t = s.exp();
            both(t, out);
            out[0] *= t;
            out[1] *= t;
        },
        2,
        t0.ln(),
        t_max.ln(),
        opts,
    )?;
    let (s1, s3, s5) = (h.power_sum(1), h.power_sum(3), h.power_sum(5));
    let t3 = t_max.powi(3);
    let t5 = t_max.powi(5);
    let t7 = t_max.powi(7);
    let tail_second = -0.5 * w * w * (s1 * s1 / (3.0 * t3) - 2.0 * s1 * s3 / (5.0 * t5));
    let tail_bos = tail_second + w * w * w * s1 * s1 * s1 / (15.0 * t5);
    let tail_err = 0.5 * w * w * (s3 * s3 + 2.0 * s1 * s5) / (7.0 * t7)
        + w * w * w * s1 * s1 * s3 / (7.0 * t7)
        + w.powi(4) * s1.powi(4) / (28.0 * t7);
    let bos = (near[0] + mid[0] + tail_bos) / PI;
    let second = (near[1] + mid[1] + tail_second) / PI;
    Ok(ModeIntegrals {
        bos: QuadValue { value: bos.min(0.0), error: (e_near + e_mid + tail_err) / PI },
        second_order: second,
    })
}

pub fn bos_term_spectrum(spec: &LuneSpectrum, g: f64, quad_tol: f64) -> Result<QuadValue> {
    Ok(mode_integrals(spec, g, quad_tol)?.bos)
}

pub fn bos_term(k_f: f64, beta: f64, model: &PotentialModel, k: LatticeVec, quad_tol: f64) -> Result<QuadValue> {
    let ball = FermiBall::new(k_f)?;
    let spec = LuneSpectrum::compute(&ball, k, &mut Vec::new())?;
    let g = mode_coupling(k_f, beta, crate::potential::v_hat(model, k)?);
    bos_term_spectrum(&spec, g, quad_tol)
}

/// Generic scalar version used by the analytic checks: (1/π)∫₀^∞ F(a(t)) dt.
pub fn f_integral(a: impl Fn(f64) -> f64, quad_tol: f64) -> Result<f64> {
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: quad_tol, max_intervals: 4000 };
    Ok(crate::quad::integrate_semi_infinite(|t| f_rpa(a(t)), 0.0, opts)?.value / PI)
}

/// Σ_{p,q∈L_k} 1/(λ_p+λ_q) from the histogram (O(G²)); exact oracle for the
/// quadrature identity ∫Λ² dt = (π/2)Σ_{p,q}1/(λ_p+λ_q).
pub fn pair_inv_sum(spec: &LuneSpectrum) -> f64 {
    spec.pair_inv_sum()
}

/// Parameters of a full correlation run at one k_F.
#[derive(Clone, Debug)]
pub struct RunParams {
    pub k_f: f64,
    pub beta: f64,
    pub model: PotentialModel,
    pub k_max_bos: f64,
    pub k_max_ex: f64,
    pub quad_tol: f64,
    pub trace_path: bool,
    pub eb6: bool,
}

impl RunParams {
    pub fn new(k_f: f64, beta: f64, model: PotentialModel) -> Self {
        RunParams {
            k_f,
            beta,
            model,
            k_max_bos: 4.0 * k_f,
            k_max_ex: 2.0 * k_f,
            quad_tol: DEFAULT_QUAD_TOL,
            trace_path: k_f <= 6.0,
            eb6: k_f <= 6.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::validation(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.k_max_bos >= 1.0 && self.k_max_ex >= 1.0) {
            return Err(Error::validation("K_max must be at least 1"));
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-2) {
            return Err(Error::validation(format!("quad_tol must lie in (0, 1e-2], got {}", self.quad_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub k: LatticeVec,
    pub multiplicity: u64,
    pub lune_size: u64,
    pub bos_term: Option<f64>,
    pub bos_error: Option<f64>,
    pub second_order_term: Option<f64>,
    pub ex_term: Option<f64>,
    pub trace_term: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub orbits: usize,
    pub quadrature_error_bound: f64,
    pub max_dual_path_mismatch: Option<f64>,
    pub beta_within_theorem: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub k_f: f64,
    pub beta: f64,
    pub model: String,
    pub n: usize,
    pub k_max_bos: f64,
    pub k_max_ex: f64,
    pub e_bos_quadrature: f64,
    pub e_bos_trace: Option<f64>,
    pub e_ex: f64,
    pub e_second_order: f64,
    pub e_b6: Option<f64>,
    pub eb6_deviation: Option<f64>,
    pub tail_estimate_bos: f64,
    pub tail_estimate_ex: f64,
    pub diagnostics: Diagnostics,
    pub per_orbit: Vec<OrbitRow>,
}

/// −(1/(4(2π)⁶)) Σ_{|k|>K}(V̂_k k_F^{−β})² N²/|k|²: the second-order formula
/// beyond the cutoff, with Σ_{p,q}1/(λ_p+λ_q) ≈ N²/|k|² for L_k = B_F + k.
pub fn tail_second_order(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64, n: usize) -> Result<f64> {
    let c = k_f.powf(-2.0 * beta) / (4.0 * TWO_PI_SIX) * (n * n) as f64;
    let n_lo = (k_max * k_max).floor() as i64;
    let s = radial_sum(
        n_lo,
        f64::INFINITY,
        |m| {
            let v = model.at_norm_sq(m);
            v * v / m as f64
        },
        |r| {
            let v = model.at_radius(r);
            v * v / (r * r)
        },
    )?;
    Ok(-c * s)
}

fn fold(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<Neumaier>().value()
}

/// Σ_{|k|≤K} of the bosonic term; returns (value, quadrature error bound, tail estimate).
pub fn e_corr_bos(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64, quad_tol: f64) -> Result<(f64, f64)> {
    let mut p = RunParams::new(k_f, beta, *model);
    p.k_max_bos = k_max;
    p.quad_tol = quad_tol;
    p.validate()?;
    let ball = FermiBall::new(k_f)?;
    let rows = bos_rows(&ball, &p, false)?;
    let value = fold(rows.iter().map(|r| r.multiplicity as f64 * r.integrals.bos.value));
    Ok((value, tail_second_order(k_f, beta, model, k_max, ball.n())?))
}

/// Σ_{|k|≤K} tr(E_k − h_k − P_k) via the grouped secular solver.
pub fn e_corr_bos_trace(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64) -> Result<f64> {
    let ball = FermiBall::new(k_f)?;
    let table = orbits(k_max);
    let vals: Vec<f64> = table
        .representatives
        .par_iter()
        .map_init(Vec::new, |scratch, &k| -> Result<f64> {
            let spec = LuneSpectrum::compute(&ball, k, scratch)?;
            let g = mode_coupling(k_f, beta, model.at_norm_sq(k.norm_sq()));
            Ok(GroupedMode::new(&spec, g)?.trace_term())
        })
        .collect::<Result<_>>()?;
    Ok(fold(vals.iter().zip(&table.multiplicities).map(|(v, &m)| m as f64 * v)))
}

/// −(1/(4(2π)⁶)) Σ_{|k|≤K}(V̂_k k_F^{−β})² Σ_{p,q∈L_k}1/(λ_p+λ_q), with the
/// pair sum evaluated exactly from the λ-histogram.
pub fn second_order(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64) -> Result<f64> {
    let ball = FermiBall::new(k_f)?;
    let table = orbits(k_max);
    let vals: Vec<f64> = table
        .representatives
        .par_iter()
        .map_init(Vec::new, |scratch, &k| -> Result<f64> {
            let spec = LuneSpectrum::compute(&ball, k, scratch)?;
            let g = mode_coupling(k_f, beta, model.at_norm_sq(k.norm_sq()));
            Ok(-g * g * spec.pair_inv_sum())
        })
        .collect::<Result<_>>()?;
    Ok(fold(vals.iter().zip(&table.multiplicities).map(|(v, &m)| m as f64 * v)))
}

struct BosRow {
    k: LatticeVec,
    multiplicity: u64,
    lune_size: u64,
    integrals: ModeIntegrals,
    trace: Option<f64>,
}

fn bos_rows(ball: &FermiBall, p: &RunParams, with_trace: bool) -> Result<Vec<BosRow>> {
    let table = orbits(p.k_max_bos);
    table
        .representatives
        .par_iter()
        .zip(table.multiplicities.par_iter())
        .map_init(Vec::new, |scratch, (&k, &m)| -> Result<BosRow> {
            let spec = LuneSpectrum::compute(ball, k, scratch)?;
            let g = mode_coupling(p.k_f, p.beta, p.model.at_norm_sq(k.norm_sq()));
            let integrals = mode_integrals(&spec, g, p.quad_tol).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("mode k = {k}: {msg}")),
                other => other,
            })?;
            let trace = if with_trace { Some(GroupedMode::new(&spec, g)?.trace_term()) } else { None };
            Ok(BosRow { k, multiplicity: m, lune_size: spec.n(), integrals, trace })
        })
        .collect()
}

/// V̂_k Σ_{p,q∈L_k} V̂_{p+q−k}/(λ_{k,p}+λ_{k,q}) for one k, using p↔q symmetry.
pub fn exchange_inner(lune: &Lune, v_k: f64, vtab: &crate::potential::RadialTable) -> Result<f64> {
    let pts = &lune.points;
    let tl = &lune.twice_lambda;
    let k = lune.k;
    let mut total = Neumaier::new();
    for i in 0..pts.len() {
        let a = pts[i] - k;
        let mut row = Neumaier::new();
        for j in i..pts.len() {
            let s = a + pts[j];
            let n = s.norm_sq();
            if n == 0 {
                return Err(Error::numerical(format!("p + q − k = 0 for k = {k}, p = {}, q = {}", pts[i], pts[j])));
            }
            let w = if j == i { 2.0 } else { 4.0 };
            row.add(w * vtab.get(n) / (tl[i] + tl[j]) as f64);
        }
        total.add(row.value());
    }
    Ok(v_k * total.value())
}

fn exchange_table(ball: &FermiBall, model: &PotentialModel, k_max: f64) -> crate::potential::RadialTable {
    let reach = 2 * ball.radius_bound() + k_max.ceil() as i64;
    model.table(reach * reach)
}

fn ex_prefactor(k_f: f64, beta: f64) -> f64 {
    k_f.powf(-2.0 * beta) / (4.0 * TWO_PI_SIX)
}

/// (k_F^{−2β}/(4(2π)⁶)) Σ_{|k|≤K} Σ_{p,q∈L_k} V̂_kV̂_{p+q−k}/(λ_{k,p}+λ_{k,q});
/// returns (value, tail estimate).
pub fn e_corr_ex(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64) -> Result<(f64, f64)> {
    let ball = FermiBall::new(k_f)?;
    let table = orbits(k_max);
    let inner = ex_rows(&ball, model, &table.representatives, k_max)?;
    let value = ex_prefactor(k_f, beta) * fold(inner.iter().zip(&table.multiplicities).map(|(v, &m)| m as f64 * v));
    let tail = -tail_second_order(k_f, beta, model, k_max, ball.n())?;
    Ok((value, tail))
}

fn ex_rows(ball: &FermiBall, model: &PotentialModel, reps: &[LatticeVec], k_max: f64) -> Result<Vec<f64>> {
    let vtab = exchange_table(ball, model, k_max);
    reps.par_iter()
        .map(|&k| {
            let lune = Lune::new(ball, k)?;
            exchange_inner(&lune, model.at_norm_sq(k.norm_sq()), &vtab)
        })
        .collect()
}

/// S_l as a table over pairs of 2λ values, shared by every l in one orbit.
struct STable {
    lo: i64,
    index: Vec<u32>,
    groups: usize,
    s: Vec<f64>,
}

impl STable {
    fn new(spec: &LuneSpectrum, g: f64) -> Result<Self> {
        let lo = spec.twice_lambda[0];
        let hi = *spec.twice_lambda.last().unwrap();
        let mut index = vec![u32::MAX; (hi - lo + 1) as usize];
        for (j, &t) in spec.twice_lambda.iter().enumerate() {
            index[(t - lo) as usize] = j as u32;
        }
        let (s, _) = GroupedMode::new(spec, g)?.s_and_c_tables();
        let groups = spec.groups();
        let mut flat = vec![0.0; groups * groups];
        for a in 0..groups {
            for b in 0..groups {
                flat[a * groups + b] = s[(a, b)];
            }
        }
        Ok(STable { lo, index, groups, s: flat })
    }

    /// S[q,p] given 2λ_q and 2λ_p.
    #[inline]
    fn get(&self, tl_q: i64, tl_p: i64) -> f64 {
        let a = self.index[(tl_q - self.lo) as usize] as usize;
        let b = self.index[(tl_p - self.lo) as usize] as usize;
        self.s[a * self.groups + b]
    }
}

/// E_B,6 = Σ_{|k|≤K} Σ_{p,q∈L_k} 2λ_{k,p} S_k[q,p] S_{p+q−k}[q,p]; returns
/// (E_B,6, E_corr,ex, |E_B,6 − E_corr,ex|) with the same cutoff.
pub fn eb6_exchange(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64) -> Result<(f64, f64, f64)> {
    let ball = FermiBall::new(k_f)?;
    let table = orbits(k_max);
    let eb6 = eb6_with(&ball, beta, model, &table)?;
    let (ex, _) = e_corr_ex(k_f, beta, model, k_max)?;
    Ok((eb6, ex, (eb6 - ex).abs()))
}

fn eb6_with(ball: &FermiBall, beta: f64, model: &PotentialModel, table: &crate::lattice::OrbitTable) -> Result<f64> {
    // p, q ∈ B_F + k ⇒ |p+q−k| ≤ 2r + |k|
    let reach = (2 * isqrt(ball.kf2)) as f64 + table.k_max;
    let l_orbits = orbits(reach);
    let tables: Vec<STable> = l_orbits
        .representatives
        .par_iter()
        .map_init(Vec::new, |scratch, &l| {
            let spec = LuneSpectrum::compute(ball, l, scratch)?;
            STable::new(&spec, mode_coupling(ball.k_f, beta, model.at_norm_sq(l.norm_sq())))
        })
        .collect::<Result<_>>()?;
    let lookup: HashMap<LatticeVec, usize> =
        l_orbits.representatives.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let per_k: Vec<f64> = table
        .representatives
        .par_iter()
        .map(|&k| -> Result<f64> {
            let lune = Lune::new(ball, k)?;
            let sk = &tables[lookup[&k.orbit_rep()]];
            let pts = &lune.points;
            let tl = &lune.twice_lambda;
            let mut total = Neumaier::new();
            for i in 0..pts.len() {
                let p = pts[i];
                let p_minus_k = (p - k).norm_sq();
                let mut row = Neumaier::new();
                for j in 0..pts.len() {
                    let q = pts[j];
                    let l = p + q - k;
                    if l.is_zero() {
                        return Err(Error::numerical(format!("p + q − k = 0 for k = {k}")));
                    }
                    let sl = &tables[lookup[&l.orbit_rep()]];
                    // 2λ_{l,q} = |q|² − |p−k|², 2λ_{l,p} = |p|² − |q−k|²
                    let tlq = q.norm_sq() - p_minus_k;
                    let tlp = p.norm_sq() - (q - k).norm_sq();
                    row.add(sk.get(tl[j], tl[i]) * sl.get(tlq, tlp));
                }
                total.add(tl[i] as f64 * row.value());
            }
            Ok(total.value())
        })
        .collect::<Result<_>>()?;
    Ok(fold(per_k.iter().zip(&table.multiplicities).map(|(v, &m)| m as f64 * v)))
}

/// Full run at one k_F.
pub fn compute(p: &RunParams) -> Result<CorrelationReport> {
    p.validate()?;
    let ball = FermiBall::new(p.k_f)?;
    let bos = bos_rows(&ball, p, p.trace_path)?;
    let ex_table = orbits(p.k_max_ex);
    let ex = ex_rows(&ball, &p.model, &ex_table.representatives, p.k_max_ex)?;
    let pre = ex_prefactor(p.k_f, p.beta);

    let e_bos = fold(bos.iter().map(|r| r.multiplicity as f64 * r.integrals.bos.value));
    let quad_err: f64 = bos.iter().map(|r| r.multiplicity as f64 * r.integrals.bos.error).sum();
    let e_so = fold(bos.iter().map(|r| r.multiplicity as f64 * r.integrals.second_order));
    let e_trace = if p.trace_path {
        Some(fold(bos.iter().map(|r| r.multiplicity as f64 * r.trace.unwrap())))
    } else {
        None
    };
    let mismatch = if p.trace_path {
        Some(bos.iter().map(|r| (r.integrals.bos.value - r.trace.unwrap()).abs() / (1.0 + r.trace.unwrap().abs())).fold(0.0, f64::max))
    } else {
        None
    };
    let e_ex = pre * fold(ex.iter().zip(&ex_table.multiplicities).map(|(v, &m)| m as f64 * v));
    let e_b6 = if p.eb6 { Some(eb6_with(&ball, p.beta, &p.model, &ex_table)?) } else { None };

    // merge per-orbit rows over the larger cutoff, canonical order
    let all = orbits(p.k_max_bos.max(p.k_max_ex));
    let bos_map: HashMap<LatticeVec, &BosRow> = bos.iter().map(|r| (r.k, r)).collect();
    let ex_map: HashMap<LatticeVec, f64> =
        ex_table.representatives.iter().zip(&ex).map(|(&k, &v)| (k, pre * v)).collect();
    let mut scratch = Vec::new();
    let mut per_orbit = Vec::with_capacity(all.len());
    for (k, m) in all.iter() {
        let b = bos_map.get(&k);
        let lune_size = match b {
            Some(r) => r.lune_size,
            None => LuneSpectrum::compute(&ball, k, &mut scratch)?.n(),
        };
        per_orbit.push(OrbitRow {
            k,
            multiplicity: m,
            lune_size,
            bos_term: b.map(|r| r.integrals.bos.value),
            bos_error: b.map(|r| r.integrals.bos.error),
            second_order_term: b.map(|r| r.integrals.second_order),
            ex_term: ex_map.get(&k).copied(),
            trace_term: b.and_then(|r| r.trace),
        });
    }

    Ok(CorrelationReport {
        k_f: p.k_f,
        beta: p.beta,
        model: p.model.to_string(),
        n: ball.n(),
        k_max_bos: p.k_max_bos,
        k_max_ex: p.k_max_ex,
        e_bos_quadrature: e_bos,
        e_bos_trace: e_trace,
        e_ex,
        e_second_order: e_so,
        e_b6,
        eb6_deviation: e_b6.map(|v| (v - e_ex).abs()),
        tail_estimate_bos: tail_second_order(p.k_f, p.beta, &p.model, p.k_max_bos, ball.n())?,
        tail_estimate_ex: -tail_second_order(p.k_f, p.beta, &p.model, p.k_max_ex, ball.n())?,
        diagnostics: Diagnostics {
            orbits: all.len(),
            quadrature_error_bound: quad_err,
            max_dual_path_mismatch: mismatch,
            beta_within_theorem: p.beta > 11.0 / 12.0,
        },
        per_orbit,
    })
}

/// Runs `f` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// ∫₀^∞ a/(a²+t²)·b/(b²+t²) dt by quadrature (closed form π/(2(a+b))).
pub fn lorentzian_product_integral(a: f64, b: f64, quad_tol: f64) -> Result<f64> {
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: quad_tol, max_intervals: 4000 };
    let f = |t: f64| a / (a * a + t * t) * b / (b * b + t * t);
    let m = a.min(b);
    let head = integrate(f, 0.0, m, opts)?.value;
    let tail = crate::quad::integrate_semi_infinite(f, m, opts)?.value;
    Ok(head + tail)
}
