//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::kf_sq_floor;
use crate::potential::PotentialModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// `auto` enables the optional path only at small k_F.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    Auto,
    On,
    Off,
}

impl Toggle {
    pub fn resolve(self, auto: bool) -> bool {
        match self {
            Toggle::Auto => auto,
            Toggle::On => true,
            Toggle::Off => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub kf_list: Vec<f64>,
    pub beta: f64,
    pub potential: PotentialModel,
    pub kmax_factor_bos: f64,
    pub kmax_factor_ex: f64,
    pub quad_tol: f64,
    pub epsilon: f64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    pub trace_path: Toggle,
    pub eb6: Toggle,
    pub fock_seed: u64,
    pub fock_states: usize,
    /// Largest allowed max/min of an empirical ratio across the sweep.
    pub max_ratio_spread: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kf_list: vec![1.0, 2.0, 3.0, 4.0],
            beta: 1.0,
            potential: PotentialModel::coulomb(1.0),
            kmax_factor_bos: 4.0,
            kmax_factor_ex: 2.0,
            quad_tol: crate::correlation::DEFAULT_QUAD_TOL,
            epsilon: crate::estimates::DEFAULT_EPSILON,
            threads: 1,
            output_dir: PathBuf::from("gbcorr-out"),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
            trace_path: Toggle::Auto,
            eb6: Toggle::Auto,
            fock_seed: crate::fock::FockOptions::default().seed,
            fock_states: crate::fock::FockOptions::default().states,
            max_ratio_spread: 2.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "kf_list",
    "beta",
    "potential.kind",
    "potential.coupling",
    "potential.param",
    "kmax_factor_bos",
    "kmax_factor_ex",
    "quad_tol",
    "epsilon",
    "threads",
    "output_dir",
    "formats",
    "trace_path",
    "eb6",
    "fock.seed",
    "fock.states",
    "bounds.max_ratio_spread",
];

/// Raw key/value pairs, later applied on top of the defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub pairs: Vec<(String, String)>,
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = vec![];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("config line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::validation(format!("unknown config key `{k}` (line {})", i + 1)));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Overrides { pairs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.pairs.push((key.to_string(), value.into()));
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::validation(format!("config key `{key}`: cannot parse `{v}`")))
}

fn toggle(key: &str, v: &str) -> Result<Toggle> {
    match v {
        "auto" => Ok(Toggle::Auto),
        "true" | "on" | "yes" => Ok(Toggle::On),
        "false" | "off" | "no" => Ok(Toggle::Off),
        _ => Err(Error::validation(format!("config key `{key}`: expected auto/true/false, got `{v}`"))),
    }
}

impl RunConfig {
    /// Defaults, then each override layer in order; the result is validated.
    pub fn build(layers: &[Overrides]) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut kind = c.potential.kind_name().to_string();
        let mut coupling = c.potential.coupling;
        let mut param = c.potential.param();
        for layer in layers {
            for (k, v) in &layer.pairs {
                let v = v.as_str();
                match k.as_str() {
                    "kf_list" => {
                        c.kf_list = v
                            .split(|ch: char| ch == ',' || ch.is_whitespace())
                            .filter(|s| !s.is_empty())
                            .map(|s| num(k, s))
                            .collect::<Result<_>>()?
                    }
                    "beta" => c.beta = num(k, v)?,
                    "potential.kind" => kind = v.to_string(),
                    "potential.coupling" => coupling = num(k, v)?,
                    "potential.param" => param = if v.is_empty() { None } else { Some(num(k, v)?) },
                    "kmax_factor_bos" => c.kmax_factor_bos = num(k, v)?,
                    "kmax_factor_ex" => c.kmax_factor_ex = num(k, v)?,
                    "quad_tol" => c.quad_tol = num(k, v)?,
                    "epsilon" => c.epsilon = num(k, v)?,
                    "threads" => c.threads = num(k, v)?,
                    "output_dir" => c.output_dir = PathBuf::from(v),
                    "formats" => {
                        let mut f = vec![];
                        for s in v.split(|ch: char| ch == ',' || ch.is_whitespace()).filter(|s| !s.is_empty()) {
                            f.push(match s {
                                "csv" => Format::Csv,
                                "json" => Format::Json,
                                "svg" => Format::Svg,
                                _ => return Err(Error::validation(format!("config key `formats`: unknown format `{s}`"))),
                            });
                        }
                        f.sort_unstable();
                        f.dedup();
                        c.formats = f;
                    }
                    "trace_path" => c.trace_path = toggle(k, v)?,
                    "eb6" => c.eb6 = toggle(k, v)?,
                    "fock.seed" => c.fock_seed = num(k, v)?,
                    "fock.states" => c.fock_states = num(k, v)?,
                    "bounds.max_ratio_spread" => c.max_ratio_spread = num(k, v)?,
                    other => return Err(Error::validation(format!("unknown config key `{other}`"))),
                }
            }
        }
        c.potential = PotentialModel::from_descriptor(&kind, coupling, param)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kf_list.is_empty() {
            return Err(Error::validation("kf_list must not be empty"));
        }
        if self.kf_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("kf_list must be strictly increasing"));
        }
        for &k in &self.kf_list {
            kf_sq_floor(k)?;
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::validation(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.kmax_factor_bos > 0.0 && self.kmax_factor_ex > 0.0) {
            return Err(Error::validation("kmax factors must be positive"));
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-2) {
            return Err(Error::validation(format!("quad_tol must lie in (0, 1e-2], got {}", self.quad_tol)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("epsilon must be positive"));
        }
        if self.threads == 0 {
            return Err(Error::validation("threads must be at least 1"));
        }
        if !(self.max_ratio_spread >= 1.0) {
            return Err(Error::validation("bounds.max_ratio_spread must be ≥ 1"));
        }
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let o = Overrides::parse(
            "# sweep\nkf_list = 2, 3,4\nbeta=0.95\npotential.kind = sharp-cutoff-coulomb\npotential.param = 3 # R\nformats = json csv json\ntrace_path = off\n",
        )
        .unwrap();
        let c = RunConfig::build(&[o]).unwrap();
        assert_eq!(c.kf_list, vec![2.0, 3.0, 4.0]);
        assert_eq!(c.beta, 0.95);
        assert_eq!(c.potential.param(), Some(3.0));
        assert_eq!(c.formats, vec![Format::Csv, Format::Json]);
        assert_eq!(c.trace_path, Toggle::Off);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Overrides::parse("beta = 1\nbogus.key = 3\n").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("bogus.key"));
    }

    #[test]
    fn later_layers_win() {
        let a = Overrides::parse("threads = 2\nbeta = 0.5").unwrap();
        let mut b = Overrides::default();
        b.set("threads", "4");
        let c = RunConfig::build(&[a, b]).unwrap();
        assert_eq!((c.threads, c.beta), (4, 0.5));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "kf_list = 3, 2",
            "kf_list =",
            "kf_list = 1.1",
            "quad_tol = 0.5",
            "beta = 0",
            "threads = 0",
            "potential.kind = yukawa",
            "potential.kind = power-law",
            "formats = pdf",
            "beta = x",
            "no equals sign",
        ] {
            let r = Overrides::parse(text).and_then(|o| RunConfig::build(&[o]));
            assert_eq!(r.unwrap_err().exit_code(), 1, "{text}");
        }
    }
}
