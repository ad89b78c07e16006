//! Per-mode one-body operators on ℓ²(L_k).
//!
//! With h = diag(λ) and v = √g·(1,…,1), everything here is a function of
//! M = h² + 2uuᵀ, u = h^{1/2}v: E = M^{1/2}, E^{±1/2} = M^{±1/4}. Three
//! routes are provided:
//!  * dense symmetric eigendecomposition of M (the default for [`ModeOperators`]);
//!  * the rank-one fourth-root integrals (independent oracle);
//!  * [`GroupedMode`], which exploits that v is constant: the span of the
//!    indicator vectors of equal-λ groups is M-invariant and M = h² on its
//!    complement, so only a G×G problem (G = number of distinct λ) is solved.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lattice::{FermiBall, LatticeVec, Lune, LuneSpectrum};
use crate::potential::PotentialModel;
use crate::quad::{integrate_vec_semi_infinite, QuadOptions};

pub const TWO_PI_CUBED: f64 = 8.0 * PI * PI * PI;

/// g = V̂_k k_F^{−β} / (2(2π)³), the squared entry of v_k.
pub fn mode_coupling(k_f: f64, beta: f64, v_hat: f64) -> f64 {
    v_hat * k_f.powf(-beta) / (2.0 * TWO_PI_CUBED)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EMethod {
    #[default]
    Eigen,
    RankOneIntegral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuarterPower {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug)]
pub struct ModeOptions {
    pub method: EMethod,
    /// Absolute per-entry tolerance of the fourth-root integrals.
    pub quad_tol: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions { method: EMethod::Eigen, quad_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct ModeOperators {
    pub k: LatticeVec,
    pub lune: Lune,
    pub g: f64,
    pub h_diag: Vec<f64>,
    pub v: DVector<f64>,
    pub e: DMatrix<f64>,
    pub e_half: DMatrix<f64>,
    pub e_inv_half: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// E^{−3/2}h^{1/2}w with w = g·(1,…,1) when k ∈ S, else zero.
    pub eta: DVector<f64>,
    pub v_h_inv_v: f64,
    pub in_s: bool,
}

impl ModeOperators {
    pub fn dim(&self) -> usize {
        self.h_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_diag.is_empty()
    }

    /// h² + 2(h^{1/2}v)(h^{1/2}v)ᵀ.
    pub fn e_squared_target(&self) -> DMatrix<f64> {
        squared_target(&self.h_diag, self.g)
    }

    pub fn p_matrix(&self) -> DMatrix<f64> {
        &self.v * self.v.transpose()
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.h_diag))
    }
}

fn squared_target(h: &[f64], g: f64) -> DMatrix<f64> {
    let n = h.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { h[i] * h[i] } else { 0.0 };
        d + 2.0 * g * (h[i] * h[j]).sqrt()
    })
}

/// Eigendecomposition of a symmetric positive matrix with the clamping rule:
/// eigenvalues in [−1e−10‖M‖, 0) become 0, anything lower is an error.
pub(crate) fn spd_eigen(m: DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut mu = Vec::with_capacity(eig.eigenvalues.len());
    for &x in eig.eigenvalues.iter() {
        if !x.is_finite() {
            return Err(Error::numerical(format!("{what}: non-finite eigenvalue")));
        }
        if x < -1e-10 * scale {
            return Err(Error::numerical(format!("{what}: negative eigenvalue {x:e}")));
        }
        mu.push(x.max(0.0));
    }
    Ok((eig.eigenvectors, mu))
}

pub(crate) fn spectral_apply(q: &DMatrix<f64>, mu: &[f64], f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut qf = q.clone();
    for (j, &m) in mu.iter().enumerate() {
        let s = f(m);
        qf.column_mut(j).scale_mut(s);
    }
    qf * q.transpose()
}

fn diag(d: impl Iterator<Item = f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(d.size_hint().0, d))
}

/// (A + wwᵀ)^{±1/4} for diagonal A > 0 from the integral representations
///   (A+P_w)^{1/4}  = A^{1/4}  + (2√2/π)∫ t⁴ P_{y(t)} / (1+⟨w,(A+t⁴)⁻¹w⟩) dt,       y = (A+t⁴)⁻¹w,
///   (A+P_w)^{−1/4} = A^{−1/4} − (2√2/π)∫ t⁴ P_{y(t)} / (1+t⁴⟨w,A⁻¹(A⁻¹+t⁴)⁻¹w⟩) dt, y = A⁻¹(A⁻¹+t⁴)⁻¹w.
/// Entries of P_y factor as w_i w_j·f(a_i,t)f(a_j,t), so one scalar integral
/// per pair of distinct diagonal values suffices.
pub fn fourth_root_rank_one(a_diag: &[f64], w: &[f64], sign: QuarterPower, quad_tol: f64) -> Result<DMatrix<f64>> {
    let n = a_diag.len();
    if w.len() != n {
        return Err(Error::validation("fourth_root_rank_one: dimension mismatch"));
    }
    if a_diag.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::validation("fourth_root_rank_one: diagonal must be strictly positive"));
    }
    // distinct diagonal values and per-group weight data
    let mut vals: Vec<f64> = a_diag.to_vec();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals.dedup();
    let gcount = vals.len();
    let group: Vec<usize> = a_diag.iter().map(|a| vals.partition_point(|v| v < a)).collect();
    let mut wsq = vec![0.0; gcount];
    let mut wmax = vec![0.0f64; gcount];
    for i in 0..n {
        wsq[group[i]] += w[i] * w[i];
        wmax[group[i]] = wmax[group[i]].max(w[i].abs());
    }
    for m in wmax.iter_mut() {
        if *m == 0.0 {
            *m = 1.0;
        }
    }
    let npairs = gcount * (gcount + 1) / 2;
    let mut f = vec![0.0; gcount];
    let (ints, _) = integrate_vec_semi_infinite(
        |t, out| {
            let t4 = t * t * t * t;
            let mut den = 1.0;
            match sign {
                QuarterPower::Plus => {
                    for j in 0..gcount {
                        f[j] = wmax[j] / (vals[j] + t4);
                        den += wsq[j] / (vals[j] + t4);
                    }
                }
                QuarterPower::Minus => {
                    let mut acc = 0.0;
                    for j in 0..gcount {
                        let r = 1.0 / (1.0 + vals[j] * t4);
                        f[j] = wmax[j] * r;
                        acc += wsq[j] * r;
                    }
                    den += t4 * acc;
                }
            }
            let pre = t4 / den;
            let mut idx = 0;
            for a in 0..gcount {
                let fa = pre * f[a];
                for b in a..gcount {
                    out[idx] = fa * f[b];
                    idx += 1;
                }
            }
        },
        npairs,
        QuadOptions { abs_tol: quad_tol, rel_tol: 0.0, max_intervals: 4000 },
    )?;
    let offset: Vec<usize> = (0..gcount).scan(0, |acc, a| {
        let o = *acc;
        *acc += gcount - a;
        Some(o)
    }).collect();
    let pair_index = |a: usize, b: usize| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        offset[a] + (b - a)
    };
    let c = 2.0 * SQRT_2 / PI;
    let sgn = if sign == QuarterPower::Plus { 1.0 } else { -1.0 };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (group[i], group[j]);
            let v = ints[pair_index(a, b)] * (w[i] / wmax[a]) * (w[j] / wmax[b]);
            out[(i, j)] = sgn * c * v;
        }
        out[(i, i)] += a_diag[i].powf(0.25 * sgn);
    }
    Ok(out)
}

/// Eigendecomposition oracle for [`fourth_root_rank_one`].
pub fn fourth_root_rank_one_eigen(a_diag: &[f64], w: &[f64], sign: QuarterPower) -> Result<DMatrix<f64>> {
    let n = a_diag.len();
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { a_diag[i] } else { 0.0 } + w[i] * w[j]);
    let (q, mu) = spd_eigen(m, "fourth root oracle")?;
    let p = if sign == QuarterPower::Plus { 0.25 } else { -0.25 };
    Ok(spectral_apply(&q, &mu, |x| x.powf(p)))
}

/// Builds the mode with the default (eigendecomposition) route.
pub fn build_mode(k_f: f64, beta: f64, model: &PotentialModel, k: LatticeVec, in_s: bool) -> Result<ModeOperators> {
    let ball = FermiBall::new(k_f)?;
    build_mode_in(&ball, beta, model, k, in_s, ModeOptions::default())
}

pub fn build_mode_in(
    ball: &FermiBall,
    beta: f64,
    model: &PotentialModel,
    k: LatticeVec,
    in_s: bool,
    opts: ModeOptions,
) -> Result<ModeOperators> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let lune = Lune::new(ball, k)?;
    let g = mode_coupling(ball.k_f, beta, model.at_norm_sq(k.norm_sq()));
    build_from_lune(lune, g, in_s, opts)
}

/// Mode with an explicit coupling g, used for synthetic instances.
pub fn build_from_lune(lune: Lune, g: f64, in_s: bool, opts: ModeOptions) -> Result<ModeOperators> {
    let n = lune.len();
    let h = lune.lambdas.clone();
    let v = DVector::from_element(n, g.sqrt());
    let v_h_inv_v = g * h.iter().map(|l| 1.0 / l).sum::<f64>();
    let (e, e_half, e_inv_half, e_inv_three_half) = match opts.method {
        EMethod::Eigen => {
            let (q, mu) = spd_eigen(squared_target(&h, g), "E² = h² + 2P_u")?;
            (
                spectral_apply(&q, &mu, f64::sqrt),
                spectral_apply(&q, &mu, |x| x.powf(0.25)),
                spectral_apply(&q, &mu, |x| x.powf(-0.25)),
                spectral_apply(&q, &mu, |x| x.powf(-0.75)),
            )
        }
        EMethod::RankOneIntegral => {
            let (e_half, e_inv_half) = quarter_roots_integral(&h, g, opts.quad_tol)?;
            let e = &e_half * &e_half;
            let e_inv = &e_inv_half * &e_inv_half;
            let e_inv_three_half = &e_inv * &e_inv_half;
            (e, e_half, e_inv_half, e_inv_three_half)
        }
    };
    let sqrt_h = diag(h.iter().map(|x| x.sqrt()));
    let inv_sqrt_h = diag(h.iter().map(|x| 1.0 / x.sqrt()));
    let a = &inv_sqrt_h * &e_half;
    let b = &sqrt_h * &e_inv_half;
    let c = (&a + &b) * 0.5;
    let s = (&a - &b) * 0.5;
    let eta = if in_s {
        let hw = DVector::from_iterator(n, h.iter().map(|x| x.sqrt() * g));
        &e_inv_three_half * hw
    } else {
        DVector::zeros(n)
    };
    Ok(ModeOperators { k: lune.k, lune, g, h_diag: h, v, e, e_half, e_inv_half, c, s, eta, v_h_inv_v, in_s })
}

fn quarter_roots_integral(h: &[f64], g: f64, tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a: Vec<f64> = h.iter().map(|x| x * x).collect();
    let w: Vec<f64> = h.iter().map(|x| (2.0 * g * x).sqrt()).collect();
    Ok((
        fourth_root_rank_one(&a, &w, QuarterPower::Plus, tol)?,
        fourth_root_rank_one(&a, &w, QuarterPower::Minus, tol)?,
    ))
}

/// E by the requested route.
pub fn e_matrix(mode: &ModeOperators, method: EMethod, quad_tol: f64) -> Result<DMatrix<f64>> {
    match method {
        EMethod::Eigen => {
            let (q, mu) = spd_eigen(mode.e_squared_target(), "E² = h² + 2P_u")?;
            Ok(spectral_apply(&q, &mu, f64::sqrt))
        }
        EMethod::RankOneIntegral => {
            let (half, _) = quarter_roots_integral(&mode.h_diag, mode.g, quad_tol)?;
            Ok(&half * &half)
        }
    }
}

pub fn c_s_matrices(mode: &ModeOperators) -> (DMatrix<f64>, DMatrix<f64>) {
    (mode.c.clone(), mode.s.clone())
}

/// tr(E − h − P) = tr E − Σλ − |L_k|·g.
pub fn trace_term(mode: &ModeOperators) -> f64 {
    let mut s = crate::sum::Neumaier::new();
    for i in 0..mode.dim() {
        s.add(mode.e[(i, i)] - mode.h_diag[i]);
    }
    s.value() - mode.dim() as f64 * mode.g
}

/// (direct ⟨η,Eη⟩, closed form g⟨v,h⁻¹v⟩/(1+2⟨v,h⁻¹v⟩)).
pub fn eta_e_eta(mode: &ModeOperators) -> (f64, f64) {
    let direct = mode.eta.dot(&(&mode.e * &mode.eta));
    let x = mode.v_h_inv_v;
    let closed = if mode.in_s { mode.g * x / (1.0 + 2.0 * x) } else { 0.0 };
    (direct, closed)
}

/// G×G reduction of a mode onto the span of its equal-λ group indicators.
/// M_W = diag(λ_j²) + 2ũũᵀ with ũ_j = √(m_j λ_j g) is diagonal-plus-rank-one,
/// so its spectrum comes from the secular equation
///   1 + 2Σ_i ũ_i²/(λ_i² − μ) = 0,
/// solved per root relative to the nearer pole so that μ_j − λ_j² is
/// obtained without cancellation. Eigenvectors are (diag(λ²) − μ)⁻¹ũ.
#[derive(Clone, Debug)]
pub struct GroupedMode {
    pub lambdas: Vec<f64>,
    pub counts: Vec<u64>,
    pub g: f64,
    u: Vec<f64>,
    /// Root j as (pole index o, τ) with μ_j = λ_o² + τ.
    roots: Vec<(usize, f64)>,
}

/// Safeguarded Newton on φ(τ) = τ·(1 + Σ_{i≠o} z_i/(δ_i − τ)) − z_o, the
/// secular function multiplied through by the pole at the origin o.
fn secular_root(d: &[f64], z: &[f64], j: usize, z_total: f64) -> (usize, f64) {
    let n = d.len();
    let f_at = |o: usize, tau: f64| -> f64 {
        let mut s = 1.0;
        for i in 0..n {
            s += z[i] / ((d[i] - d[o]) - tau);
        }
        s
    };
    let (o, lo, hi) = if j + 1 == n {
        (j, 0.0, z_total)
    } else {
        let half = 0.5 * (d[j + 1] - d[j]);
        if f_at(j, half) >= 0.0 {
            (j, 0.0, half)
        } else {
            (j + 1, -half, 0.0)
        }
    };
    let phi = |tau: f64| -> (f64, f64) {
        let mut s = 1.0;
        let mut ds = 0.0;
        for i in 0..n {
            if i != o {
                let r = 1.0 / ((d[i] - d[o]) - tau);
                s += z[i] * r;
                ds += z[i] * r * r;
            }
        }
        (tau * s - z[o], s + tau * ds)
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = phi(a).0;
    let mut t = 0.5 * (a + b);
    for _ in 0..200 {
        let (ft, dft) = phi(t);
        if ft == 0.0 {
            break;
        }
        if (ft < 0.0) == (fa < 0.0) {
            a = t;
            fa = ft;
        } else {
            b = t;
        }
        let mut tn = t - ft / dft;
        let (l, r) = if a < b { (a, b) } else { (b, a) };
        if !(tn > l && tn < r) {
            tn = 0.5 * (a + b);
        }
        let done = (tn - t).abs() <= 2.0 * f64::EPSILON * tn.abs() || (r - l) <= 2.0 * f64::EPSILON * r.abs().max(l.abs());
        t = tn;
        if done {
            break;
        }
    }
    (o, t)
}

impl GroupedMode {
    pub fn new(spec: &LuneSpectrum, g: f64) -> Result<Self> {
        let lambdas: Vec<f64> = (0..spec.groups()).map(|j| spec.lambda(j)).collect();
        let counts = spec.counts.clone();
        let gc = lambdas.len();
        let u: Vec<f64> = (0..gc).map(|j| (counts[j] as f64 * lambdas[j] * g).sqrt()).collect();
        let roots = if g == 0.0 {
            (0..gc).map(|j| (j, 0.0)).collect()
        } else {
            let d: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
            let z: Vec<f64> = u.iter().map(|x| 2.0 * x * x).collect();
            let z_total: f64 = z.iter().sum();
            (0..gc).map(|j| secular_root(&d, &z, j, z_total)).collect::<Vec<_>>()
        };
        if roots.iter().any(|r| !r.1.is_finite()) {
            return Err(Error::numerical("grouped E²: secular solve failed"));
        }
        Ok(GroupedMode { lambdas, counts, g, u, roots })
    }

    pub fn groups(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Eigenvalues of M_W, increasing.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.roots.iter().map(|&(o, t)| self.lambdas[o] * self.lambdas[o] + t).collect()
    }

    /// μ_j − λ_j².
    fn excess(&self, j: usize) -> f64 {
        let (o, t) = self.roots[j];
        (self.lambdas[o] * self.lambdas[o] - self.lambdas[j] * self.lambdas[j]) + t
    }

    /// Σ_j(√μ_j − λ_j) − n·g = tr(E − h − P).
    pub fn trace_term(&self) -> f64 {
        let mut s = crate::sum::Neumaier::new();
        for (j, m) in self.eigenvalues().into_iter().enumerate() {
            s.add(self.excess(j) / (m.sqrt() + self.lambdas[j]));
        }
        s.value() - self.n() as f64 * self.g
    }

    /// Orthonormal eigenvectors of M_W as columns.
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let gc = self.groups();
        if self.g == 0.0 {
            return DMatrix::identity(gc, gc);
        }
        let mut q = DMatrix::zeros(gc, gc);
        for (j, &(o, t)) in self.roots.iter().enumerate() {
            let d_o = self.lambdas[o] * self.lambdas[o];
            let mut norm = 0.0;
            for i in 0..gc {
                let x = self.u[i] / ((self.lambdas[i] * self.lambdas[i] - d_o) - t);
                q[(i, j)] = x;
                norm += x * x;
            }
            let inv = 1.0 / norm.sqrt();
            q.column_mut(j).scale_mut(inv);
        }
        q
    }

    /// f(M_W) − f(diag λ²) in the orthonormal group basis.
    pub fn block_correction(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = self.eigenvectors();
        let mut r = spectral_apply(&q, &self.eigenvalues(), &f);
        for j in 0..self.groups() {
            r[(j, j)] -= f(self.lambdas[j] * self.lambdas[j]);
        }
        r
    }

    /// Tables T with S[q,p] = T[a(q), b(p)] and (C − 1)[q,p] = T'[a(q), b(p)].
    pub fn s_and_c_tables(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        // With x = μ_j^{1/4}/λ_a^{1/2}: S_ab ∝ Σ_j q_aj q_bj (x − 1/x)/2 and
        // (C − 1)_ab ∝ Σ_j q_aj q_bj (x − 1)²/(2x), using Σ_j q_aj q_bj = δ_ab.
        // x − 1 is formed from μ_j − λ_a² directly, so nothing cancels.
        let gc = self.groups();
        let q = self.eigenvectors();
        let mu = self.eigenvalues();
        let mut sc = DMatrix::zeros(gc, gc);
        let mut cc = DMatrix::zeros(gc, gc);
        for j in 0..gc {
            let (o, t) = self.roots[j];
            let d_o = self.lambdas[o] * self.lambdas[o];
            let m4 = mu[j].sqrt().sqrt();
            for a in 0..gc {
                let l = self.lambdas[a];
                let shift = (d_o - l * l) + t;
                let sl = l.sqrt();
                let xm1 = shift / ((m4 + sl) * (mu[j].sqrt() + l) * sl);
                let x = 1.0 + xm1;
                sc[(a, j)] = 0.5 * xm1 * (x + 1.0) / x;
                cc[(a, j)] = 0.5 * xm1 * xm1 / x;
            }
        }
        let mut s = DMatrix::zeros(gc, gc);
        let mut c = DMatrix::zeros(gc, gc);
        for a in 0..gc {
            for b in 0..gc {
                let (mut ss, mut cs) = (0.0, 0.0);
                for j in 0..gc {
                    let w = q[(a, j)] * q[(b, j)];
                    ss += w * sc[(a, j)];
                    cs += w * cc[(a, j)];
                }
                let norm = 1.0 / ((self.counts[a] * self.counts[b]) as f64).sqrt();
                s[(a, b)] = norm * ss;
                c[(a, b)] = norm * cs;
            }
        }
        (s, c)
    }

    /// Expands f(M) to the full n×n matrix with rows ordered by `twice_lambda`
    /// group membership given as `group_of`.
    pub fn expand(&self, f: impl Fn(f64) -> f64, group_of: &[usize]) -> DMatrix<f64> {
        let r = self.block_correction(&f);
        let n = group_of.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (group_of[i], group_of[j]);
            let d = if i == j { f(self.lambdas[a] * self.lambdas[a]) } else { 0.0 };
            d + r[(a, b)] / ((self.counts[a] * self.counts[b]) as f64).sqrt()
        })
    }
}

/// Group index of each lune point relative to the lune's spectrum.
pub fn group_of_points(lune: &Lune, spec: &LuneSpectrum) -> Vec<usize> {
    lune.twice_lambda.iter().map(|t| spec.twice_lambda.binary_search(t).expect("λ in spectrum")).collect()
}

/// Maximal entrywise violation of the two sandwich inequalities
///   B/(1+2⟨v,h⁻¹v⟩) ≤ E^{1/2} − h^{1/2} ≤ B,   B' /(1+2⟨v,h⁻¹v⟩) ≤ h^{−1/2} − E^{−1/2} ≤ B'
/// for general h = diag(λ) > 0 and v, where E = (h² + 2P_{h^{1/2}v})^{1/2}.
/// Bounds are compared as intervals, so negative products v_iv_j are handled.
pub fn sandwich_violation(lambdas: &[f64], v: &[f64]) -> Result<f64> {
    let n = lambdas.len();
    let a: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    let w: Vec<f64> = (0..n).map(|i| (2.0 * lambdas[i]).sqrt() * v[i]).collect();
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { a[i] } else { 0.0 } + w[i] * w[j]);
    let (q, mu) = spd_eigen(m, "sandwich")?;
    let mut up = spectral_apply(&q, &mu, |x| x.powf(0.25));
    let mut dn = spectral_apply(&q, &mu, |x| x.powf(-0.25));
    for i in 0..n {
        up[(i, i)] -= lambdas[i].sqrt();
        dn[(i, i)] = 1.0 / lambdas[i].sqrt() - dn[(i, i)];
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dn[(i, j)] = -dn[(i, j)];
            }
        }
    }
    let x: f64 = (0..n).map(|i| v[i] * v[i] / lambdas[i]).sum();
    let shrink = 1.0 / (1.0 + 2.0 * x);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let (li, lj) = (lambdas[i], lambdas[j]);
            let (si, sj) = (li.sqrt(), lj.sqrt());
            let base = v[i] * v[j] / (li + lj);
            for (val, b) in [(up[(i, j)], 2.0 * si * sj / (si + sj) * base), (dn[(i, j)], 2.0 / (si + sj) * base)] {
                let (lo, hi) = if b >= 0.0 { (shrink * b, b) } else { (b, shrink * b) };
                worst = worst.max(lo - val).max(val - hi);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::orbits;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    fn one_point(lambda: f64, g: f64) -> ModeOperators {
        let ball = FermiBall::new(0.5).unwrap();
        let mut lune = Lune::new(&ball, LatticeVec::new(1, 0, 0)).unwrap();
        lune.lambdas = vec![lambda];
        lune.twice_lambda = vec![(2.0 * lambda) as i64];
        build_from_lune(lune, g, true, ModeOptions::default()).unwrap()
    }

    #[test]
    fn unit_lune_mode() {
        let m = build_mode(1.0, 1.0, &PotentialModel::coulomb(1.0), LatticeVec::new(1, 0, 0), false).unwrap();
        assert_eq!(m.dim(), 5);
        let mut h = m.h_diag.clone();
        h.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(h, vec![1.5, 0.5, 0.5, 0.5, 0.5]);
        assert_relative_eq!(m.v[0], (1.0 / (2.0 * TWO_PI_CUBED)).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(m.v[0], 0.044899, epsilon = 5e-6);
    }

    #[test]
    fn zero_coupling_is_trivial() {
        let m = build_mode(2.0, 1.0, &PotentialModel::coulomb(0.0), LatticeVec::new(1, 1, 0), true).unwrap();
        assert_eq!(max_abs(&(&m.e - m.h_matrix())), 0.0);
        assert!(max_abs(&(&m.c - DMatrix::identity(m.dim(), m.dim()))) < 1e-15);
        assert!(max_abs(&m.s) < 1e-15);
        assert_eq!(trace_term(&m), 0.0);
        assert_eq!(eta_e_eta(&m), (0.0, 0.0));
    }

    #[test]
    fn scalar_examples() {
        let m = one_point(1.0, 1.0);
        assert_relative_eq!(m.e[(0, 0)], 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(m.c[(0, 0)], 0.5 * (3f64.powf(0.25) + 3f64.powf(-0.25)), epsilon = 1e-14);
        assert_relative_eq!(m.s[(0, 0)], 0.5 * (3f64.powf(0.25) - 3f64.powf(-0.25)), epsilon = 1e-14);
        // quoted to four or five significant digits
        assert_relative_eq!(m.c[(0, 0)], 1.03800, epsilon = 5e-5);
        assert_relative_eq!(m.s[(0, 0)], 0.27813, epsilon = 5e-5);
        assert_relative_eq!(trace_term(&m), 3f64.sqrt() - 2.0, epsilon = 1e-14);
        let (d, c) = eta_e_eta(&m);
        assert_relative_eq!(d, 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(c, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_h_eigenvalues() {
        // h = I, |v|² = 1.5: eigenvalue 2 along v, 1 elsewhere
        let n = 6;
        let g = 1.5 / n as f64;
        let a = vec![1.0; n];
        let w = vec![(2.0 * g).sqrt(); n];
        let e2 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + w[i] * w[j]);
        let (q, mu) = spd_eigen(e2, "t").unwrap();
        let e = spectral_apply(&q, &mu, f64::sqrt);
        let mut ev: Vec<f64> = SymmetricEigen::new(e).eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_relative_eq!(ev[n - 1], 2.0, epsilon = 1e-13);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-13);
        let _ = a;
    }

    #[test]
    fn fourth_root_scalars() {
        let r = fourth_root_rank_one(&[1.0], &[3f64.sqrt()], QuarterPower::Plus, 1e-12).unwrap();
        assert_relative_eq!(r[(0, 0)], SQRT_2, epsilon = 1e-10);
        let r = fourth_root_rank_one(&[1.0], &[3f64.sqrt()], QuarterPower::Minus, 1e-12).unwrap();
        assert_relative_eq!(r[(0, 0)], 1.0 / SQRT_2, epsilon = 1e-10);
        let a = [0.3, 2.0, 7.0];
        for sign in [QuarterPower::Plus, QuarterPower::Minus] {
            let r = fourth_root_rank_one(&a, &[0.0; 3], sign, 1e-12).unwrap();
            let p = if sign == QuarterPower::Plus { 0.25 } else { -0.25 };
            for i in 0..3 {
                assert_eq!(r[(i, i)], a[i].powf(p));
            }
            assert_eq!(max_abs(&(r - DMatrix::from_diagonal(&DVector::from_iterator(3, a.iter().map(|x| x.powf(p)))))), 0.0);
        }
    }

    #[test]
    fn fourth_root_repeated_diagonal() {
        let a = [1.0, 1.0, 4.0, 4.0, 4.0, 0.25];
        let w = [0.3, -0.7, 1.1, 0.2, 0.0, 0.9];
        for sign in [QuarterPower::Plus, QuarterPower::Minus] {
            let r = fourth_root_rank_one(&a, &w, sign, 1e-12).unwrap();
            let o = fourth_root_rank_one_eigen(&a, &w, sign).unwrap();
            assert!(max_abs(&(r - o)) < 1e-9);
        }
    }

    fn relations_hold(m: &ModeOperators, tol: f64) {
        let n = m.dim();
        let target = m.e_squared_target();
        assert!(max_abs(&(&m.e * &m.e - &target)) <= 1e-9 * max_abs(&target));
        let h = m.h_matrix();
        let p = m.p_matrix();
        let ce = &m.c * &m.e;
        let se = &m.s * &m.e;
        let lhs1 = &ce * m.c.transpose() + &se * m.s.transpose();
        let lhs2 = &ce * m.s.transpose() + &se * m.c.transpose();
        assert!(max_abs(&(lhs1 - (&h + &p))) < tol);
        assert!(max_abs(&(lhs2 - &p)) < tol);
        let id = (&m.c - &m.s) * (&m.c + &m.s).transpose();
        assert!(max_abs(&(id - DMatrix::identity(n, n))) < tol);
        let ev = SymmetricEigen::new(&m.e - &h).eigenvalues;
        assert!(ev.iter().all(|&x| x >= -1e-10));
        let t = trace_term(m);
        assert!(t <= 1e-12 && t >= -(n as f64) * m.g - 1e-12);
    }

    #[test]
    fn defining_relations_small_kf() {
        for kf in 1..=3 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in orbits((2 * kf + 1) as f64).representatives {
                let m = build_mode_in(&ball, 1.0, &PotentialModel::coulomb(1.0), k, true, ModeOptions::default()).unwrap();
                relations_hold(&m, 1e-8);
                let (d, c) = eta_e_eta(&m);
                assert_relative_eq!(d, c, max_relative = 1e-9);
                assert!(2.0 * c / m.g < 1.0);
            }
        }
    }

    #[test]
    fn integral_route_matches_eigen() {
        for kf in 1..=3 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in orbits((2 * kf + 1) as f64).representatives {
                let model = PotentialModel::coulomb(1.0);
                let a = build_mode_in(&ball, 1.0, &model, k, true, ModeOptions::default()).unwrap();
                let opts = ModeOptions { method: EMethod::RankOneIntegral, quad_tol: 1e-10 };
                let b = build_mode_in(&ball, 1.0, &model, k, true, opts).unwrap();
                assert!(max_abs(&(&a.e - &b.e)) <= 1e-6);
                assert!(max_abs(&(&a.s - &b.s)) <= 1e-6);
                assert!((&a.eta - &b.eta).amax() <= 1e-6);
            }
        }
    }

    #[test]
    fn reflection_symmetry() {
        let model = PotentialModel::coulomb(1.0);
        let ball = FermiBall::new(1.0).unwrap();
        for k in [LatticeVec::new(1, 0, 0), LatticeVec::new(1, 1, 0), LatticeVec::new(2, 1, 0)] {
            let a = build_mode_in(&ball, 1.0, &model, k, false, ModeOptions::default()).unwrap();
            let b = build_mode_in(&ball, 1.0, &model, -k, false, ModeOptions::default()).unwrap();
            for (i, &p) in a.lune.points.iter().enumerate() {
                for (j, &q) in a.lune.points.iter().enumerate() {
                    let (bi, bj) = (b.lune.index_of(-p).unwrap(), b.lune.index_of(-q).unwrap());
                    assert!((a.s[(i, j)] - b.s[(bi, bj)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn grouped_matches_dense() {
        let model = PotentialModel::coulomb(1.0);
        for kf in 1..=4 {
            let ball = FermiBall::new(kf as f64).unwrap();
            for k in orbits((2 * kf + 1) as f64).representatives {
                let m = build_mode_in(&ball, 1.0, &model, k, false, ModeOptions::default()).unwrap();
                let spec = m.lune.spectrum();
                let gm = GroupedMode::new(&spec, m.g).unwrap();
                // the dense trace carries roughly n·ε·max λ of eigensolver roundoff
                assert_relative_eq!(gm.trace_term(), trace_term(&m), epsilon = 1e-10);
                let grp = group_of_points(&m.lune, &spec);
                assert!(max_abs(&(gm.expand(f64::sqrt, &grp) - &m.e)) < 1e-10);
                let (st, ct) = gm.s_and_c_tables();
                for i in 0..m.dim() {
                    for j in 0..m.dim() {
                        let ds = (st[(grp[i], grp[j])] - m.s[(i, j)]).abs();
                        assert!(ds < 1e-10, "kf={kf} k={k} d={ds:e}");
                        let d = if i == j { 1.0 } else { 0.0 };
                        assert!((ct[(grp[i], grp[j])] - (m.c[(i, j)] - d)).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn secular_matches_dense_eigen() {
        let ball = FermiBall::new(3.0).unwrap();
        for g in [1e-9, 1e-3, 0.5, 50.0] {
            for k in [LatticeVec::new(1, 0, 0), LatticeVec::new(2, 1, 1), LatticeVec::new(7, 3, 0)] {
                let spec = Lune::new(&ball, k).unwrap().spectrum();
                let gm = GroupedMode::new(&spec, g).unwrap();
                let gc = gm.groups();
                let u: Vec<f64> = (0..gc).map(|j| (spec.counts[j] as f64 * gm.lambdas[j] * g).sqrt()).collect();
                let m = DMatrix::from_fn(gc, gc, |i, j| {
                    let d = if i == j { gm.lambdas[i] * gm.lambdas[i] } else { 0.0 };
                    d + 2.0 * u[i] * u[j]
                });
                let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
                ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for (a, b) in gm.eigenvalues().iter().zip(&ev) {
                    assert!((a - b).abs() <= 1e-13 * max_abs(&m) * gc as f64, "g={g} {a} {b}");
                }
                let q = gm.eigenvectors();
                let mu = DMatrix::from_diagonal(&DVector::from_vec(gm.eigenvalues()));
                let rec = &q * mu * q.transpose();
                assert!(max_abs(&(rec - &m)) <= 1e-10 * max_abs(&m));
            }
        }
    }

    #[test]
    fn weak_coupling_s_is_first_order() {
        // S_pq = g/(λ_p+λ_q) + O(g²) entrywise
        let ball = FermiBall::new(3.0).unwrap();
        let spec = Lune::new(&ball, LatticeVec::new(2, 1, 0)).unwrap().spectrum();
        let g = 1e-9;
        let (s, c) = GroupedMode::new(&spec, g).unwrap().s_and_c_tables();
        for a in 0..spec.groups() {
            for b in 0..spec.groups() {
                let first = g / (spec.lambda(a) + spec.lambda(b));
                assert_relative_eq!(s[(a, b)], first, max_relative = 1e-6);
                assert!(c[(a, b)].abs() <= first);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fourth_roots_match_oracle(
            a in proptest::collection::vec(0.1f64..10.0, 1..12),
            seed in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let w: Vec<f64> = seed[..a.len()].to_vec();
            for sign in [QuarterPower::Plus, QuarterPower::Minus] {
                let r = fourth_root_rank_one(&a, &w, sign, 1e-11).unwrap();
                let o = fourth_root_rank_one_eigen(&a, &w, sign).unwrap();
                prop_assert!(max_abs(&(r - o)) <= 1e-6);
            }
        }

        #[test]
        fn sandwich_holds(
            l in proptest::collection::vec(0.1f64..10.0, 1..10),
            v in proptest::collection::vec(-1.0f64..1.0, 10),
        ) {
            prop_assert!(sandwich_violation(&l, &v[..l.len()]).unwrap() <= 1e-12);
        }
    }
}
