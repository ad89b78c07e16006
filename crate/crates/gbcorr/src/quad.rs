//! Adaptive 7/15-point Gauss–Kronrod quadrature.
//!
//! Subdivision always bisects the interval with the largest error estimate
//! (first such interval on ties), so results are deterministic.

use crate::error::{Error, Result};
use crate::sum::Neumaier;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions { abs_tol: 0.0, rel_tol, max_intervals: 2000 }
    }

    pub fn abs(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, rel_tol: 0.0, max_intervals: 2000 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// One GK15 panel: (Kronrod value, QUADPACK error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    let mut resabs = rk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        rk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = rk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hab = h.abs();
    let value = rk * h;
    resabs *= hab;
    resasc *= hab;
    let mut err = ((rk - rg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// ∫_a^b f with adaptive bisection.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    let (v0, e0) = gk15(&mut f, a, b);
    let mut segs = vec![(a, b, v0, e0)];
    loop {
        let value: f64 = segs.iter().map(|s| s.2).collect::<Neumaier>().value();
        let error: f64 = segs.iter().map(|s| s.3).sum();
        if !value.is_finite() {
            return Err(Error::numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        if error <= opts.target(value) {
            return Ok(QuadResult { value, error, intervals: segs.len() });
        }
        if segs.len() >= opts.max_intervals {
            return Err(Error::numerical(format!(
                "quadrature did not converge on [{a}, {b}]: value {value:e}, error estimate {error:e}"
            )));
        }
        let (i, _) = segs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s.3 > best.1 { (i, s.3) } else { best });
        let (lo, hi, _, _) = segs[i];
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(&mut f, lo, mid);
        let (vr, er) = gk15(&mut f, mid, hi);
        segs[i] = (lo, mid, vl, el);
        segs.insert(i + 1, (mid, hi, vr, er));
    }
}

/// ∫_a^∞ f via t = a + u/(1−u).
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - u;
            f(a + u / d) / (d * d)
        },
        0.0,
        1.0,
        opts,
    )
}

/// Vector-valued adaptive GK15: `f(t, out)` fills `out` with the integrand.
/// The error of a panel is the largest raw |Kronrod − Gauss| component.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<(Vec<f64>, f64)> {
    let mut buf = vec![0.0; dim];
    let mut panel = |lo: f64, hi: f64, buf: &mut [f64]| -> (Vec<f64>, f64) {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let mut rk = vec![0.0; dim];
        let mut rg = vec![0.0; dim];
        f(c, buf);
        for i in 0..dim {
            rk[i] = WGK[7] * buf[i];
            rg[i] = WG[3] * buf[i];
        }
        for j in 0..7 {
            for x in [c - h * XGK[j], c + h * XGK[j]] {
                f(x, buf);
                for i in 0..dim {
                    rk[i] += WGK[j] * buf[i];
                    if j % 2 == 1 {
                        rg[i] += WG[j / 2] * buf[i];
                    }
                }
            }
        }
        let mut err = 0.0f64;
        for i in 0..dim {
            err = err.max(((rk[i] - rg[i]) * h).abs());
            rk[i] *= h;
        }
        (rk, err)
    };
    let (v0, e0) = panel(a, b, &mut buf);
    let mut segs = vec![(a, b, v0, e0)];
    loop {
        let mut value = vec![0.0; dim];
        for (i, v) in value.iter_mut().enumerate() {
            *v = segs.iter().map(|s| s.2[i]).collect::<Neumaier>().value();
        }
        let error: f64 = segs.iter().map(|s| s.3).sum();
        let scale = value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::numerical("non-finite vector integrand"));
        }
        if error <= opts.target(scale) {
            return Ok((value, error));
        }
        if segs.len() >= opts.max_intervals {
            return Err(Error::numerical(format!(
                "vector quadrature did not converge: error estimate {error:e}"
            )));
        }
        let (i, _) = segs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s.3 > best.1 { (i, s.3) } else { best });
        let (lo, hi) = (segs[i].0, segs[i].1);
        let mid = 0.5 * (lo + hi);
        let (vl, el) = panel(lo, mid, &mut buf);
        let (vr, er) = panel(mid, hi, &mut buf);
        segs[i] = (lo, mid, vl, el);
        segs.insert(i + 1, (mid, hi, vr, er));
    }
}

/// Vector version of [`integrate_semi_infinite`].
pub fn integrate_vec_semi_infinite<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    opts: QuadOptions,
) -> Result<(Vec<f64>, f64)> {
    integrate_vec(
        |u, out| {
            if u >= 1.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            let d = 1.0 - u;
            f(u / d, out);
            let j = 1.0 / (d * d);
            out.iter_mut().for_each(|o| *o *= j);
        },
        dim,
        0.0,
        1.0,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_integrate_constants() {
        let wk: f64 = WGK[7] + 2.0 * WGK[..7].iter().sum::<f64>();
        let wg: f64 = WG[3] + 2.0 * WG[..3].iter().sum::<f64>();
        assert!((wk - 2.0).abs() < 1e-15);
        assert!((wg - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomials_exact() {
        // Kronrod is exact through degree 22 on one panel
        let (v, _) = gk15(&mut |x: f64| x.powi(20), -1.0, 1.0);
        assert!((v - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn lorentzian_tail() {
        let r = integrate_semi_infinite(|t| 1.0 / (1.0 + t * t), 0.0, QuadOptions::rel(1e-12)).unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let r = integrate(|x| 1e-3 / (x * x + 1e-6), -1.0, 1.0, QuadOptions::rel(1e-11)).unwrap();
        assert!((r.value - 2.0 * (1e3f64).atan()).abs() < 1e-9);
    }

    #[test]
    fn vector_matches_scalar() {
        let (v, _) = integrate_vec_semi_infinite(
            |t, out| {
                out[0] = 1.0 / (1.0 + t * t);
                out[1] = (-t).exp();
            },
            2,
            QuadOptions::abs(1e-12),
        )
        .unwrap();
        assert!((v[0] - PI / 2.0).abs() < 1e-11);
        assert!((v[1] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn reports_nonconvergence() {
        let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 0.0, max_intervals: 5 };
        assert!(integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, opts).is_err());
    }
}
