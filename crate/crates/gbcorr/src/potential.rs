//! Radial interaction profiles V̂_k and their admissibility check
//! (nonnegative, radially nonincreasing, dominated by C_V |k|⁻²).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{is_sum_of_three_squares, LatticeVec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    Coulomb,
    SharpCutoffCoulomb { radius: f64 },
    ExponentialDecay { rate: f64 },
    PowerLaw { exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub kind: PotentialKind,
    pub coupling: f64,
    /// Declared domination constant: V̂_k ≤ c_v |k|⁻².
    pub c_v: f64,
}

impl PotentialModel {
    pub fn new(kind: PotentialKind, coupling: f64) -> Result<Self> {
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(Error::validation(format!("potential.coupling must be finite and ≥ 0, got {coupling}")));
        }
        let bad = |what: &str, v: f64| Err(Error::validation(format!("potential.param ({what}) invalid: {v}")));
        match kind {
            PotentialKind::Coulomb => {}
            PotentialKind::SharpCutoffCoulomb { radius } if !(radius.is_finite() && radius > 0.0) => {
                return bad("cutoff radius", radius)
            }
            PotentialKind::ExponentialDecay { rate } if !(rate.is_finite() && rate >= 0.0) => {
                return bad("decay rate", rate)
            }
            PotentialKind::PowerLaw { exponent } if !(exponent.is_finite() && exponent > 0.0) => {
                return bad("exponent", exponent)
            }
            _ => {}
        }
        Ok(PotentialModel { kind, coupling, c_v: coupling })
    }

    pub fn coulomb(coupling: f64) -> Self {
        Self::new(PotentialKind::Coulomb, coupling).expect("valid coupling")
    }

    /// Build from the config triple (kind, coupling, param).
    pub fn from_descriptor(kind: &str, coupling: f64, param: Option<f64>) -> Result<Self> {
        let need = |name: &str| {
            param.ok_or_else(|| Error::validation(format!("potential.param ({name}) required for kind {kind}")))
        };
        let k = match kind {
            "coulomb" => PotentialKind::Coulomb,
            "sharp-cutoff-coulomb" => PotentialKind::SharpCutoffCoulomb { radius: need("R")? },
            "exponential-decay" => PotentialKind::ExponentialDecay { rate: need("a")? },
            "power-law" => PotentialKind::PowerLaw { exponent: need("s")? },
            other => return Err(Error::validation(format!("unknown potential.kind: {other}"))),
        };
        Self::new(k, coupling)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PotentialKind::Coulomb => "coulomb",
            PotentialKind::SharpCutoffCoulomb { .. } => "sharp-cutoff-coulomb",
            PotentialKind::ExponentialDecay { .. } => "exponential-decay",
            PotentialKind::PowerLaw { .. } => "power-law",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Coulomb => None,
            PotentialKind::SharpCutoffCoulomb { radius } => Some(radius),
            PotentialKind::ExponentialDecay { rate } => Some(rate),
            PotentialKind::PowerLaw { exponent } => Some(exponent),
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        PotentialModel { coupling, c_v: coupling, ..*self }
    }

    /// V̂ as a function of |k|² (n ≥ 1).
    #[inline]
    pub fn at_norm_sq(&self, n: i64) -> f64 {
        debug_assert!(n > 0);
        let g = self.coupling;
        let n = n as f64;
        match self.kind {
            PotentialKind::Coulomb => g / n,
            PotentialKind::SharpCutoffCoulomb { radius } => {
                if n <= radius * radius {
                    g / n
                } else {
                    0.0
                }
            }
            PotentialKind::ExponentialDecay { rate } => g * (-rate * (n.sqrt() - 1.0)).exp() / n,
            PotentialKind::PowerLaw { exponent } => g * n.powf(-0.5 * exponent),
        }
    }

    /// V̂ at a real radius r > 0 (used by continuum tails).
    pub fn at_radius(&self, r: f64) -> f64 {
        let g = self.coupling;
        let n = r * r;
        match self.kind {
            PotentialKind::Coulomb => g / n,
            PotentialKind::SharpCutoffCoulomb { radius } => {
                if r <= radius {
                    g / n
                } else {
                    0.0
                }
            }
            PotentialKind::ExponentialDecay { rate } => g * (-rate * (r - 1.0)).exp() / n,
            PotentialKind::PowerLaw { exponent } => g * r.powf(-exponent),
        }
    }

    pub fn table(&self, n_max: i64) -> RadialTable {
        let mut values = vec![0.0; n_max.max(0) as usize + 1];
        for n in 1..=n_max {
            values[n as usize] = self.at_norm_sq(n);
        }
        RadialTable { values }
    }
}

impl fmt::Display for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}(g={}, param={})", self.kind_name(), self.coupling, p),
            None => write!(f, "{}(g={})", self.kind_name(), self.coupling),
        }
    }
}

impl FromStr for PotentialModel {
    type Err = Error;
    /// `kind` or `kind:param`, coupling 1.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((k, p)) => {
                let p: f64 = p.trim().parse().map_err(|_| Error::validation(format!("bad potential param in {s}")))?;
                Self::from_descriptor(k.trim(), 1.0, Some(p))
            }
            None => Self::from_descriptor(s.trim(), 1.0, None),
        }
    }
}

/// V̂ tabulated by |k|².
#[derive(Clone, Debug)]
pub struct RadialTable {
    values: Vec<f64>,
}

impl RadialTable {
    #[inline]
    pub fn get(&self, n: i64) -> f64 {
        self.values[n as usize]
    }

    pub fn n_max(&self) -> i64 {
        self.values.len() as i64 - 1
    }
}

pub fn v_hat(model: &PotentialModel, k: LatticeVec) -> Result<f64> {
    if k.is_zero() {
        return Err(Error::validation("V̂ is not defined at k = 0"));
    }
    Ok(model.at_norm_sq(k.norm_sq()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub k_scan: f64,
    pub valid: bool,
    pub first_violation: Option<String>,
    /// sup_k V̂_k |k|² over the scan.
    pub empirical_c_v: f64,
}

/// Check nonnegativity, radial monotonicity across all realised lattice
/// norms, and domination by the declared C_V on |k| ≤ K_scan.
pub fn validate(model: &PotentialModel, k_scan: f64) -> ValidationReport {
    let n_max = (k_scan * k_scan).floor() as i64;
    let mut violation = None;
    let mut c_emp = 0.0f64;
    let mut prev: Option<(i64, f64)> = None;
    for n in 1..=n_max {
        if !is_sum_of_three_squares(n as u64) {
            continue;
        }
        let v = model.at_norm_sq(n);
        c_emp = c_emp.max(v * n as f64);
        if violation.is_none() {
            if !(v >= 0.0) {
                violation = Some(format!("negative or NaN value {v} at |k|² = {n}"));
            } else if let Some((pn, pv)) = prev.filter(|&(_, pv)| v > pv) {
                violation = Some(format!("not radially decreasing: V̂ = {pv} at |k|² = {pn} but {v} at |k|² = {n}"));
            } else if v * n as f64 > model.c_v * (1.0 + 1e-12) {
                violation = Some(format!(
                    "|k|⁻² domination fails at |k|² = {n}: V̂|k|² = {} > C_V = {}",
                    v * n as f64,
                    model.c_v
                ));
            }
        }
        prev = Some((n, v));
    }
    ValidationReport {
        model: model.to_string(),
        k_scan,
        valid: violation.is_none(),
        first_violation: violation,
        empirical_c_v: c_emp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ball_points;

    #[test]
    fn coulomb_values() {
        let m = PotentialModel::coulomb(1.0);
        assert_eq!(v_hat(&m, LatticeVec::new(1, 0, 0)).unwrap(), 1.0);
        assert_eq!(v_hat(&m, LatticeVec::new(2, 0, 0)).unwrap(), 0.25);
        assert_eq!(v_hat(&m, LatticeVec::new(1, 1, 0)).unwrap(), 0.5);
        assert!(v_hat(&m, LatticeVec::ZERO).is_err());
    }

    #[test]
    fn validation_examples() {
        let r = validate(&PotentialModel::coulomb(1.0), 100.0);
        assert!(r.valid);
        assert_eq!(r.empirical_c_v, 1.0);
        let pl = PotentialModel::from_descriptor("power-law", 1.0, Some(1.5)).unwrap();
        assert!(!validate(&pl, 100.0).valid);
        let sc = PotentialModel::from_descriptor("sharp-cutoff-coulomb", 1.0, Some(3.0)).unwrap();
        assert!(validate(&sc, 100.0).valid);
    }

    #[test]
    fn shipped_models_validate() {
        for (k, p) in [
            ("coulomb", None),
            ("sharp-cutoff-coulomb", Some(3.0)),
            ("exponential-decay", Some(0.7)),
            ("power-law", Some(2.0)),
            ("power-law", Some(3.5)),
        ] {
            let m = PotentialModel::from_descriptor(k, 2.5, p).unwrap();
            assert!(validate(&m, 100.0).valid, "{m}");
        }
    }

    #[test]
    fn descriptor_errors() {
        assert!(PotentialModel::from_descriptor("yukawa", 1.0, None).is_err());
        assert!(PotentialModel::from_descriptor("power-law", 1.0, None).is_err());
        assert!(PotentialModel::from_descriptor("coulomb", -1.0, None).is_err());
    }

    #[test]
    fn orbit_invariant() {
        let m = PotentialModel::from_descriptor("exponential-decay", 1.0, Some(0.3)).unwrap();
        for k in ball_points(40).into_iter().filter(|k| !k.is_zero()) {
            let v = v_hat(&m, k).unwrap();
            for img in k.octahedral_images() {
                assert_eq!(v_hat(&m, img).unwrap(), v);
            }
        }
    }
}
