//! Scalar bound checks: kinetic and lune sums, one-body matrix-element
//! ratios, the error-budget envelopes and the bosonic lower envelope.
//!
//! Constants in the bounds are existential, so every check reports the
//! empirical ratio lhs/envelope; pass/fail is finiteness (and, in sweeps,
//! trend stability), never a comparison with a fixed constant.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::mode_integrals;
use crate::error::{Error, Result};
use crate::lattice::{
    first_outer_shell, kf_sq_floor, orbits, r3_table, radial_sum, shell_counts, zeta, FermiBall, LatticeVec,
    Lune, LuneSpectrum, EXACT_SHELL_RADIUS,
};
use crate::onebody::{group_of_points, mode_coupling, GroupedMode, ModeOperators, TWO_PI_CUBED};
use crate::potential::PotentialModel;
use crate::sum::Neumaier;

pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub k_f: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs_envelope: f64,
    pub ratio: f64,
    pub pass: bool,
    pub context: String,
}

impl BoundCheck {
    /// Passes when the ratio is finite (or both sides vanish).
    pub fn new(name: &str, k_f: f64, beta: f64, epsilon: f64, lhs: f64, rhs: f64, context: String) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundCheck {
            name: name.to_string(),
            k_f,
            beta,
            epsilon,
            lhs,
            rhs_envelope: rhs,
            ratio,
            pass: ratio.is_finite() && lhs.is_finite(),
            context,
        }
    }
}

#[derive(Clone, Debug)]
pub enum KineticSet {
    FermiBall,
    Lune(LatticeVec),
    /// B̄(0, R) ∩ ℤ³
    Ball(f64),
    List(Vec<LatticeVec>),
}

/// Σ_{p∈A} 1/||p|² − ζ(k_F)|.
pub fn kinetic_sum(k_f: f64, set: &KineticSet) -> Result<f64> {
    let kf2 = kf_sq_floor(k_f)?;
    let z = zeta(k_f)?;
    let limit_n = (4.0 * k_f * k_f).floor() as i64;
    let limit = shell_count_upto(limit_n);
    let term = |n: i64| 1.0 / (n as f64 - z).abs();
    let by_shells = |n_max: i64| -> Result<f64> {
        let size = shell_count_upto(n_max);
        if size > limit {
            return Err(Error::validation(format!("set of {size} points exceeds |B̄(0,2k_F)| = {limit}")));
        }
        let counts = counts_upto(n_max);
        Ok((0..=n_max).filter(|&n| counts[n as usize] > 0).map(|n| counts[n as usize] as f64 * term(n)).collect::<Neumaier>().value())
    };
    match set {
        KineticSet::FermiBall => by_shells(kf2),
        KineticSet::Ball(r) => {
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::validation("ball radius must be finite and ≥ 0"));
            }
            by_shells((r * r).floor() as i64)
        }
        KineticSet::Lune(k) => {
            let lune = Lune::new(&FermiBall::new(k_f)?, *k)?;
            Ok(lune.points.iter().map(|p| term(p.norm_sq())).collect::<Neumaier>().value())
        }
        KineticSet::List(pts) => {
            if pts.len() as u64 > limit {
                return Err(Error::validation(format!("set of {} points exceeds |B̄(0,2k_F)| = {limit}", pts.len())));
            }
            Ok(pts.iter().map(|p| term(p.norm_sq())).collect::<Neumaier>().value())
        }
    }
}

fn counts_upto(n_max: i64) -> std::borrow::Cow<'static, [u64]> {
    if n_max <= EXACT_SHELL_RADIUS * EXACT_SHELL_RADIUS {
        std::borrow::Cow::Borrowed(&shell_counts()[..=n_max.max(0) as usize])
    } else {
        std::borrow::Cow::Owned(r3_table(n_max as usize))
    }
}

fn shell_count_upto(n_max: i64) -> u64 {
    counts_upto(n_max).iter().sum()
}

/// min over realised |p|² ≤ n_max of ||p|² − ζ|.
pub fn min_kinetic_gap(k_f: f64, n_max: i64) -> Result<f64> {
    let z = zeta(k_f)?;
    let counts = counts_upto(n_max);
    Ok((0..=n_max).filter(|&n| counts[n as usize] > 0).map(|n| (n as f64 - z).abs()).fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuneStats {
    pub size: u64,
    pub sum_inv_lambda: f64,
    /// Σλ⁻¹ / k_F
    pub ratio_inv: f64,
    /// |L_k| / (k_F² min(|k|, k_F))
    pub ratio_size: f64,
}

pub fn lune_stats(k_f: f64, k: LatticeVec) -> Result<LuneStats> {
    lune_stats_in(&FermiBall::new(k_f)?, k, &mut Vec::new())
}

fn lune_stats_in(ball: &FermiBall, k: LatticeVec, scratch: &mut Vec<u64>) -> Result<LuneStats> {
    if k.is_zero() {
        return Err(Error::validation("lune_stats needs k ≠ 0"));
    }
    let spec = LuneSpectrum::compute(ball, k, scratch)?;
    let k_f = ball.k_f;
    let s = spec.sum_inv_lambda();
    Ok(LuneStats {
        size: spec.n(),
        sum_inv_lambda: s,
        ratio_inv: s / k_f,
        ratio_size: spec.n() as f64 / (k_f * k_f * k.norm().min(k_f)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuneSweep {
    pub k_f: f64,
    pub k_max: f64,
    pub max_ratio_inv: f64,
    pub max_ratio_size: f64,
    /// Every |k| > 2k_F in the sweep has |L_k| = N.
    pub outer_lunes_full: bool,
}

pub fn lune_sweep(k_f: f64, k_max: f64) -> Result<LuneSweep> {
    let ball = FermiBall::new(k_f)?;
    let reps = orbits(k_max).representatives;
    let stats: Vec<(LatticeVec, LuneStats)> = reps
        .par_iter()
        .map_init(Vec::new, |scratch, &k| Ok((k, lune_stats_in(&ball, k, scratch)?)))
        .collect::<Result<_>>()?;
    let n = ball.n() as u64;
    Ok(LuneSweep {
        k_f,
        k_max,
        max_ratio_inv: stats.iter().map(|s| s.1.ratio_inv).fold(0.0, f64::max),
        max_ratio_size: stats.iter().map(|s| s.1.ratio_size).fold(0.0, f64::max),
        outer_lunes_full: stats.iter().filter(|(k, _)| k.norm() > 2.0 * k_f).all(|(_, s)| s.size == n),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VarphiPsiNorms {
    pub phi_max_norm_sq: f64,
    pub phi_sum_max_sq: f64,
    pub psi_max_norm_sq: f64,
    pub psi_sum_max_sq: f64,
    /// k_F^{1−2β} V̂_k²
    pub envelope: f64,
}

impl VarphiPsiNorms {
    pub fn ratios(&self) -> [f64; 4] {
        let r = |x: f64| if self.envelope > 0.0 { x / self.envelope } else { 0.0 };
        [r(self.phi_max_norm_sq), r(self.phi_sum_max_sq), r(self.psi_max_norm_sq), r(self.psi_sum_max_sq)]
    }
}

/// max_p Σ_q w_p A_qp² and Σ_p max_q w_p A_qp² with w_p = ||p|² − k_F²|.
fn weighted_norms(n: usize, weight: impl Fn(usize) -> f64, entry: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let (mut mx, mut sum) = (0.0f64, Neumaier::new());
    for p in 0..n {
        let (mut col, mut best) = (Neumaier::new(), 0.0f64);
        for q in 0..n {
            let a = entry(q, p);
            col.add(a * a);
            best = best.max(a * a);
        }
        mx = mx.max(weight(p) * col.value());
        sum.add(weight(p) * best);
    }
    (mx, sum.value())
}

/// φ_{k,p} = √||p|²−k_F²|·(C_k − 1)e_p and ψ_{k,p} likewise with S_k.
pub fn varphi_psi_norms(mode: &ModeOperators) -> VarphiPsiNorms {
    let kf_sq = mode.lune.k_f * mode.lune.k_f;
    let n = mode.dim();
    let w: Vec<f64> = mode.lune.points.iter().map(|p| (p.norm_sq() as f64 - kf_sq).abs()).collect();
    let (phi_max, phi_sum) =
        weighted_norms(n, |p| w[p], |q, p| mode.c[(q, p)] - if q == p { 1.0 } else { 0.0 });
    let (psi_max, psi_sum) = weighted_norms(n, |p| w[p], |q, p| mode.s[(q, p)]);
    let vk = 2.0 * TWO_PI_CUBED * mode.g; // V̂_k k_F^{−β}
    VarphiPsiNorms {
        phi_max_norm_sq: phi_max,
        phi_sum_max_sq: phi_sum,
        psi_max_norm_sq: psi_max,
        psi_sum_max_sq: psi_sum,
        envelope: mode.lune.k_f * vk * vk,
    }
}

/// Same quantities from the grouped tables (no dense n×n matrices).
fn varphi_psi_grouped(lune: &Lune, spec: &LuneSpectrum, gm: &GroupedMode, tables: &(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)) -> VarphiPsiNorms {
    let (s, c) = tables;
    let gc = spec.groups();
    let kf_sq = lune.k_f * lune.k_f;
    let group_of = group_of_points(lune, spec);
    let mut wmax = vec![0.0f64; gc];
    let mut wsum = vec![Neumaier::new(); gc];
    for (p, &b) in lune.points.iter().zip(&group_of) {
        let w = (p.norm_sq() as f64 - kf_sq).abs();
        wmax[b] = wmax[b].max(w);
        wsum[b].add(w);
    }
    let cnt: Vec<f64> = spec.counts.iter().map(|&c| c as f64).collect();
    let reduce = |t: &nalgebra::DMatrix<f64>| {
        let (mut mx, mut sum) = (0.0f64, Neumaier::new());
        for b in 0..gc {
            let (mut col, mut best) = (Neumaier::new(), 0.0f64);
            for a in 0..gc {
                let x = t[(a, b)];
                col.add(cnt[a] * x * x);
                best = best.max(x * x);
            }
            mx = mx.max(wmax[b] * col.value());
            sum.add(wsum[b].value() * best);
        }
        (mx, sum.value())
    };
    let (phi_max, phi_sum) = reduce(c);
    let (psi_max, psi_sum) = reduce(s);
    let vk = 2.0 * TWO_PI_CUBED * gm.g;
    VarphiPsiNorms {
        phi_max_norm_sq: phi_max,
        phi_sum_max_sq: phi_sum,
        psi_max_norm_sq: psi_max,
        psi_sum_max_sq: psi_sum,
        envelope: lune.k_f * vk * vk,
    }
}

/// Empirical constants of the one-body matrix-element bounds for one k_F.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneBodyScan {
    pub k_f: f64,
    pub beta: f64,
    pub k_max: f64,
    /// sup |S_pq|(λ_p+λ_q)/(V̂_k k_F^{−β})
    pub s_ratio: f64,
    /// sup |(C−1)_pq|(λ_p+λ_q)/(V̂_k k_F^{−β})
    pub c_ratio: f64,
    /// sup |S_pq − g/(λ_p+λ_q)|(λ_p+λ_q)/(V̂_k² k_F^{1−2β})
    pub s_deviation_ratio: f64,
    /// sup over k of the four φ/ψ ratios against k_F^{1−2β}V̂_k²
    pub varphi_psi_ratio: [f64; 4],
    pub argmax_k: LatticeVec,
}

pub fn onebody_scan(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64) -> Result<OneBodyScan> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let ball = FermiBall::new(k_f)?;
    let reps = orbits(k_max).representatives;
    let rows: Vec<(LatticeVec, [f64; 3], [f64; 4])> = reps
        .par_iter()
        .map(|&k| -> Result<_> {
            let lune = Lune::new(&ball, k)?;
            let spec = lune.spectrum();
            let vk = model.at_norm_sq(k.norm_sq());
            let g = mode_coupling(k_f, beta, vk);
            if g == 0.0 {
                return Ok((k, [0.0; 3], [0.0; 4]));
            }
            let gm = GroupedMode::new(&spec, g)?;
            let tables = gm.s_and_c_tables();
            let (s, c) = &tables;
            let scale = vk * k_f.powf(-beta);
            let dev_scale = vk * vk * k_f.powf(1.0 - 2.0 * beta);
            let mut r = [0.0f64; 3];
            for a in 0..spec.groups() {
                for b in 0..spec.groups() {
                    let l = spec.lambda(a) + spec.lambda(b);
                    r[0] = r[0].max(s[(a, b)].abs() * l / scale);
                    r[1] = r[1].max(c[(a, b)].abs() * l / scale);
                    r[2] = r[2].max((s[(a, b)] - g / l).abs() * l / dev_scale);
                }
            }
            let vp = varphi_psi_grouped(&lune, &spec, &gm, &tables).ratios();
            Ok((k, r, vp))
        })
        .collect::<Result<_>>()?;
    let mut out = OneBodyScan {
        k_f,
        beta,
        k_max,
        s_ratio: 0.0,
        c_ratio: 0.0,
        s_deviation_ratio: 0.0,
        varphi_psi_ratio: [0.0; 4],
        argmax_k: LatticeVec::ZERO,
    };
    for (k, r, vp) in rows {
        if r[0] > out.s_ratio {
            out.s_ratio = r[0];
            out.argmax_k = k;
        }
        out.c_ratio = out.c_ratio.max(r[1]);
        out.s_deviation_ratio = out.s_deviation_ratio.max(r[2]);
        for i in 0..4 {
            out.varphi_psi_ratio[i] = out.varphi_psi_ratio[i].max(vp[i]);
        }
    }
    Ok(out)
}

/// Overrides for the two cut radii of the budget (defaults k_F^{1/3}, k_F^{5/2}).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptions {
    pub s_radius: Option<f64>,
    pub s_prime_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub k_f: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub s_radius: f64,
    pub s_prime_radius: f64,
    /// √(Σ_{k∉S} V̂²)
    pub a1: f64,
    /// k_F^{−1/2} Σ_{k∈S} V̂
    pub a2: f64,
    /// Σ V̂³
    pub a3: f64,
    /// √(Σ V̂² min(|k|, k_F))
    pub a4: f64,
    /// Σ_{k∉S′} V̂ |k|⁻²
    pub a5: f64,
    /// √(Σ_{k∉S′} V̂² |k|^{−(1−ε)})
    pub a6: f64,
    /// k_F^{−2} Σ_{k∈S′} V̂
    pub a7: f64,
    /// sup_{p∈B_F^c} V̂_p
    pub a8: f64,
    /// Kinetic scale at which the operator envelopes are evaluated.
    pub h_scale: f64,
    pub envelope_b: f64,
    pub envelope_c: f64,
    pub envelope_s: f64,
    pub total_envelope: f64,
    pub final_coefficient: f64,
}

/// Scalar envelopes of the operator error terms with all existential
/// constants set to 1, evaluated at H′_kin = k_F^{3−2β}.
pub fn error_budget(k_f: f64, beta: f64, epsilon: f64, model: &PotentialModel, opts: BudgetOptions) -> Result<ErrorBudget> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::validation("epsilon must be positive"));
    }
    let kf2 = kf_sq_floor(k_f)?;
    let rs = opts.s_radius.unwrap_or(k_f.cbrt());
    let rsp = opts.s_prime_radius.unwrap_or(k_f.powf(2.5));
    let ns = (rs * rs).floor() as i64;
    let nsp = (rsp * rsp).floor() as i64;
    let v = |n: i64| model.at_norm_sq(n);
    let vr = |r: f64| model.at_radius(r);
    let inf = f64::INFINITY;

    let a1 = radial_sum(ns, inf, |n| v(n).powi(2), |r| vr(r).powi(2))?.sqrt();
    let a2 = radial_sum(0, rs, v, vr)? / k_f.sqrt();
    let a3 = radial_sum(0, inf, |n| v(n).powi(3), |r| vr(r).powi(3))?;
    let a4 = radial_sum(0, inf, |n| v(n).powi(2) * (n as f64).sqrt().min(k_f), |r| vr(r).powi(2) * r.min(k_f))?
        .sqrt();
    let a5 = radial_sum(nsp, inf, |n| v(n) / n as f64, |r| vr(r) / (r * r))?;
    let a6 = radial_sum(
        nsp,
        inf,
        |n| v(n).powi(2) * (n as f64).powf(-0.5 * (1.0 - epsilon)),
        |r| vr(r).powi(2) * r.powf(-(1.0 - epsilon)),
    )?
    .sqrt();
    let a7 = radial_sum(0, rsp, v, vr)? / (k_f * k_f);
    let a8 = v(first_outer_shell(kf2));

    let h = k_f.powf(3.0 - 2.0 * beta);
    let pre = k_f.powf(2.0 * (1.0 - beta) + epsilon);
    let envelope_b = pre * (a1 + a2) * a4 * (h + k_f) + k_f.powf(3.0 * (1.0 - beta)) * a3;
    let envelope_c = pre * a2 * (a4 + a2) * (h + k_f);
    let envelope_s = (k_f.powf(1.0 + epsilon) * a1 + k_f.sqrt() * a2 + a8) * h + (a7 + k_f.powi(3) * (a5 + a6)) * h;
    let total = envelope_b + envelope_c + k_f.powf(-beta) / (2.0 * TWO_PI_CUBED) * envelope_s;
    Ok(ErrorBudget {
        k_f,
        beta,
        epsilon,
        s_radius: rs,
        s_prime_radius: rsp,
        a1,
        a2,
        a3,
        a4,
        a5,
        a6,
        a7,
        a8,
        h_scale: h,
        envelope_b,
        envelope_c,
        envelope_s,
        total_envelope: total,
        final_coefficient: k_f.powf(-1.0 / 6.0 + 2.0 * (1.0 - beta) + epsilon),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BosLowerEnvelope {
    pub k_f: f64,
    pub beta: f64,
    pub k_max: f64,
    /// Bosonic sum with the doubled weight 2V̂_k k_F^{−β}/(2π)³ (≤ 0).
    pub e_tilde: f64,
    /// (k_F^{−2β}/(2π)⁶) Σ V̂² Σ_{p,q} 1/(λ_p+λ_q)
    pub pair_bound: f64,
    /// (k_F^{−2β}/(2π)⁶) Σ V̂² |L_k| Σ_p λ_p⁻¹
    pub product_bound: f64,
    /// pair_bound / k_F^{3−2β+ε}
    pub scaled: f64,
    pub chain_holds: bool,
}

/// −Ẽ ≤ pair_bound ≤ product_bound over |k| ≤ K_max.
pub fn bos_lower_envelope(k_f: f64, beta: f64, model: &PotentialModel, k_max: f64, epsilon: f64, quad_tol: f64) -> Result<BosLowerEnvelope> {
    let ball = FermiBall::new(k_f)?;
    let table = orbits(k_max);
    let rows: Vec<[f64; 3]> = table
        .representatives
        .par_iter()
        .map_init(Vec::new, |scratch, &k| -> Result<[f64; 3]> {
            let spec = LuneSpectrum::compute(&ball, k, scratch)?;
            let vk = model.at_norm_sq(k.norm_sq());
            let g = mode_coupling(k_f, beta, vk);
            let et = mode_integrals(&spec, 2.0 * g, quad_tol)?.bos.value;
            let c = k_f.powf(-2.0 * beta) * vk * vk / (TWO_PI_CUBED * TWO_PI_CUBED);
            Ok([et, c * spec.pair_inv_sum(), c * spec.n() as f64 * spec.sum_inv_lambda()])
        })
        .collect::<Result<_>>()?;
    let fold = |i: usize| rows.iter().zip(&table.multiplicities).map(|(r, &m)| m as f64 * r[i]).collect::<Neumaier>().value();
    let (e_tilde, pair, prod) = (fold(0), fold(1), fold(2));
    // termwise: −Ẽ_k ≤ pair_k ≤ product_k
    let chain_holds = rows.iter().all(|r| -r[0] <= r[1] * (1.0 + 1e-9) + 1e-300 && r[1] <= r[2] * (1.0 + 1e-12));
    Ok(BosLowerEnvelope {
        k_f,
        beta,
        k_max,
        e_tilde,
        pair_bound: pair,
        product_bound: prod,
        scaled: pair / k_f.powf(3.0 - 2.0 * beta + epsilon),
        chain_holds,
    })
}

/// Exponent of the upper envelope of r₃(n) on n ≤ n_max: the maxima over
/// dyadic blocks [2^j, 2^{j+1}) fitted in log–log form.
pub fn r3_growth_exponent(n_max: usize) -> Result<f64> {
    let t = r3_table(n_max);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut lo = 1usize;
    while 2 * lo <= n_max + 1 {
        let hi = 2 * lo;
        let (n, m) = (lo..hi).map(|n| (n, t[n])).max_by_key(|&(_, c)| c).unwrap();
        if m > 0 {
            xs.push(n as f64);
            ys.push(m as f64);
        }
        lo = hi;
    }
    crate::fit::loglog_slope(&xs, &ys)
}

/// Σ_{B̄(0,2k_F)} 1/||p|²−ζ| across a k_F list, with its log–log slope.
pub fn kinetic_scan(kfs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let vals: Vec<f64> = kfs.iter().map(|&k| kinetic_sum(k, &KineticSet::Ball(2.0 * k))).collect::<Result<_>>()?;
    let slope = crate::fit::loglog_slope(kfs, &vals)?;
    Ok((vals, slope))
}

/// ∫₀^∞ Λ_k(t)² dt by quadrature (checks (π/2)Σ_{p,q}1/(λ_p+λ_q)).
pub fn lindhard_square_integral(spec: &LuneSpectrum, quad_tol: f64) -> Result<f64> {
    // (1/π)∫(−½x²) with x = 2gΛ and g = 1/2 gives −(1/2π)∫Λ²
    let m = mode_integrals(spec, 0.5, quad_tol)?;
    Ok(-2.0 * PI * m.second_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kinetic_examples() {
        assert_relative_eq!(kinetic_sum(1.0, &KineticSet::FermiBall).unwrap(), 2.0 / 3.0 + 12.0, epsilon = 1e-14);
        let z = zeta(3.0).unwrap();
        assert_eq!(kinetic_sum(3.0, &KineticSet::List(vec![LatticeVec::ZERO])).unwrap(), 1.0 / z);
        // list and shell paths agree
        let pts = crate::lattice::ball_points(16);
        let a = kinetic_sum(2.0, &KineticSet::List(pts)).unwrap();
        let b = kinetic_sum(2.0, &KineticSet::Ball(4.0)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
        assert!(kinetic_sum(2.0, &KineticSet::Ball(4.5)).is_err());
    }

    #[test]
    fn kinetic_gap_is_half() {
        for kf in 1..=12 {
            let n = 9 * kf * kf;
            assert!(min_kinetic_gap(kf as f64, n).unwrap() >= 0.5, "k_F={kf}");
        }
    }

    #[test]
    fn unit_lune_stats() {
        let s = lune_stats(1.0, LatticeVec::new(1, 0, 0)).unwrap();
        assert_eq!(s.size, 5);
        assert_relative_eq!(s.sum_inv_lambda, 26.0 / 3.0, epsilon = 1e-14);
        assert!(lune_stats(1.0, LatticeVec::ZERO).is_err());
        let far = lune_stats(2.0, LatticeVec::new(5, 0, 0)).unwrap();
        assert_eq!(far.size, 33);
    }

    #[test]
    fn varphi_brute_force() {
        let m = crate::onebody::build_mode(1.0, 1.0, &PotentialModel::coulomb(1.0), LatticeVec::new(1, 0, 0), false).unwrap();
        let r = varphi_psi_norms(&m);
        let n = m.dim();
        let mut best = 0.0f64;
        let mut sum = 0.0;
        for p in 0..n {
            let w = (m.lune.points[p].norm_sq() as f64 - 1.0).abs();
            let mut col = 0.0;
            let mut mx = 0.0f64;
            for q in 0..n {
                let x = m.c[(q, p)] - if p == q { 1.0 } else { 0.0 };
                col += w * x * x;
                mx = mx.max(w * x * x);
            }
            best = best.max(col);
            sum += mx;
        }
        assert_relative_eq!(r.phi_max_norm_sq, best, max_relative = 1e-12);
        assert_relative_eq!(r.phi_sum_max_sq, sum, max_relative = 1e-12);
        // grouped route agrees with the dense one
        let spec = m.lune.spectrum();
        let gm = GroupedMode::new(&spec, m.g).unwrap();
        let g = varphi_psi_grouped(&m.lune, &spec, &gm, &gm.s_and_c_tables());
        for (x, y) in g.ratios().iter().zip(r.ratios()) {
            assert_relative_eq!(*x, y, max_relative = 1e-8);
        }
        let zero = crate::onebody::build_mode(1.0, 1.0, &PotentialModel::coulomb(0.0), LatticeVec::new(1, 0, 0), false).unwrap();
        assert_eq!(varphi_psi_norms(&zero).ratios(), [0.0; 4]);
    }

    #[test]
    fn grouped_varphi_matches_dense_kf3() {
        let model = PotentialModel::coulomb(1.0);
        for k in [LatticeVec::new(1, 1, 0), LatticeVec::new(3, 2, 1)] {
            let m = crate::onebody::build_mode(3.0, 1.0, &model, k, false).unwrap();
            let dense = varphi_psi_norms(&m).ratios();
            let spec = m.lune.spectrum();
            let gm = GroupedMode::new(&spec, m.g).unwrap();
            let grouped = varphi_psi_grouped(&m.lune, &spec, &gm, &gm.s_and_c_tables()).ratios();
            for (x, y) in grouped.iter().zip(dense) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-6), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn budget_zero_coupling() {
        let b = error_budget(4.0, 1.0, 0.1, &PotentialModel::coulomb(0.0), BudgetOptions::default()).unwrap();
        assert_eq!(b.total_envelope, 0.0);
        assert_eq!(b.a1 + b.a2 + b.a3 + b.a4 + b.a5 + b.a6 + b.a7 + b.a8, 0.0);
    }

    #[test]
    fn budget_components_coulomb() {
        let m = PotentialModel::coulomb(1.0);
        let b = error_budget(8.0, 1.0, 0.1, &m, BudgetOptions::default()).unwrap();
        // S = B̄(0, 2): shells 1, 2, 3, 4 with 6, 12, 8, 6 points
        assert_relative_eq!(b.a2 * 8f64.sqrt(), 6.0 + 6.0 + 8.0 / 3.0 + 1.5, epsilon = 1e-12);
        // sup over the complement of the ball: |p|² = 65
        assert_relative_eq!(b.a8, 1.0 / 65.0, epsilon = 1e-15);
        assert!(b.total_envelope > 0.0 && b.total_envelope.is_finite());
    }

    #[test]
    fn budget_a4_grows_like_log() {
        let m = PotentialModel::coulomb(1.0);
        let kfs = [4.0, 8.0, 16.0, 32.0];
        let sq: Vec<f64> = kfs
            .iter()
            .map(|&k| error_budget(k, 1.0, 0.1, &m, BudgetOptions::default()).unwrap().a4.powi(2))
            .collect();
        let d: Vec<f64> = sq.windows(2).map(|w| w[1] - w[0]).collect();
        // equal increments per doubling ⇒ ∝ log k_F
        for x in &d {
            assert_relative_eq!(*x, d[0], max_relative = 0.1);
        }
    }

    #[test]
    fn lower_envelope_chain() {
        let r = bos_lower_envelope(3.0, 1.0, &PotentialModel::coulomb(1.0), 12.0, 0.1, 1e-10).unwrap();
        assert!(r.chain_holds);
        assert!(r.e_tilde < 0.0 && -r.e_tilde <= r.pair_bound && r.pair_bound <= r.product_bound);
        let z = bos_lower_envelope(3.0, 1.0, &PotentialModel::coulomb(0.0), 12.0, 0.1, 1e-10).unwrap();
        assert_eq!((z.e_tilde, z.pair_bound), (0.0, 0.0));
    }

    #[test]
    fn lindhard_square_identity() {
        let ball = FermiBall::new(2.0).unwrap();
        for k in [LatticeVec::new(1, 0, 0), LatticeVec::new(2, 1, 1), LatticeVec::new(5, 0, 0)] {
            let spec = LuneSpectrum::compute(&ball, k, &mut Vec::new()).unwrap();
            let q = lindhard_square_integral(&spec, 1e-12).unwrap();
            assert_relative_eq!(q, 0.5 * PI * spec.pair_inv_sum(), max_relative = 1e-10);
        }
    }

    #[test]
    fn r3_exponent() {
        let e = r3_growth_exponent(10_000).unwrap();
        assert!(e > 0.3 && e <= 0.75, "{e}");
    }

    #[test]
    fn small_onebody_scan() {
        let r = onebody_scan(2.0, 1.0, &PotentialModel::coulomb(1.0), 4.0).unwrap();
        assert!(r.s_ratio.is_finite() && r.s_ratio > 0.0);
        assert!(r.c_ratio.is_finite() && r.s_deviation_ratio.is_finite());
        assert!(r.varphi_psi_ratio.iter().all(|x| x.is_finite()));
    }
}
