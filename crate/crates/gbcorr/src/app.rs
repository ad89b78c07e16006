//! Command implementations behind the CLI.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::correlation::{self, with_threads, CorrelationReport, RunParams};
use crate::error::{Error, Result};
use crate::estimates::{self, BoundCheck, BudgetOptions, KineticSet};
use crate::fit::{self, AsymptoticFit, FitModel};
use crate::fock::{self, FockOptions, FockReport};
use crate::lattice::{orbits, FermiBall, Lune};
use crate::onebody::{self, EMethod, GroupedMode, ModeOptions};
use crate::potential::{self, PotentialKind};
use crate::report::{self, PlotSeries, SummaryRow};

fn kf_tag(k_f: f64) -> String {
    format!("{k_f}").replace('.', "p")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn run_params(cfg: &RunConfig, k_f: f64) -> RunParams {
    let mut p = RunParams::new(k_f, cfg.beta, cfg.potential);
    p.k_max_bos = cfg.kmax_factor_bos * k_f;
    p.k_max_ex = cfg.kmax_factor_ex * k_f;
    p.quad_tol = cfg.quad_tol;
    p.trace_path = cfg.trace_path.resolve(p.trace_path);
    p.eb6 = cfg.eb6.resolve(p.eb6);
    p
}

/// Full correlation reports for every k_F, written per k_F and as a summary.
pub fn cmd_compute(cfg: &RunConfig) -> Result<Vec<CorrelationReport>> {
    let reports: Vec<CorrelationReport> = with_threads(cfg.threads, || {
        cfg.kf_list.iter().map(|&k| correlation::compute(&run_params(cfg, k))).collect::<Result<_>>()
    })??;
    ensure_dir(&cfg.output_dir)?;
    for r in &reports {
        let tag = kf_tag(r.k_f);
        if cfg.wants(Format::Csv) {
            report::write_orbit_csv(&cfg.output_dir.join(format!("orbits_kf{tag}.csv")), r)?;
        }
        if cfg.wants(Format::Json) {
            report::write_json(&cfg.output_dir.join(format!("report_kf{tag}.json")), r)?;
        }
    }
    let rows: Vec<SummaryRow> = reports.iter().map(SummaryRow::from).collect();
    write_summary(cfg, &rows)?;
    Ok(reports)
}

/// Summary-only sweep (no per-orbit files) with plots.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SummaryRow>> {
    let rows: Vec<SummaryRow> = with_threads(cfg.threads, || {
        cfg.kf_list
            .iter()
            .map(|&k| correlation::compute(&run_params(cfg, k)).map(|r| SummaryRow::from(&r)))
            .collect::<Result<_>>()
    })??;
    ensure_dir(&cfg.output_dir)?;
    write_summary(cfg, &rows)?;
    Ok(rows)
}

fn write_summary(cfg: &RunConfig, rows: &[SummaryRow]) -> Result<()> {
    if cfg.wants(Format::Csv) {
        report::write_summary_csv(&cfg.output_dir.join("summary.csv"), rows)?;
    }
    if cfg.wants(Format::Json) {
        report::write_json(&cfg.output_dir.join("summary.json"), &rows)?;
    }
    if cfg.wants(Format::Svg) {
        write_series_plots(&cfg.output_dir, rows)?;
    }
    Ok(())
}

fn write_series_plots(dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    let pts = |f: &dyn Fn(&SummaryRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| f(r).map(|v| (r.k_f, v))).collect()
    };
    let s = |name: &str, points| PlotSeries { name: name.into(), points, line_only: false };
    let bos = report::svg_plot(
        "Bosonic correlation energy",
        "k_F",
        &[
            s("quadrature", pts(&|r| Some(r.e_bos_quadrature))),
            s("trace", pts(&|r| r.e_bos_trace)),
            s("second order", pts(&|r| Some(r.e_second_order))),
        ],
    );
    std::fs::write(dir.join("bos.svg"), bos)?;
    let ex = report::svg_plot(
        "Exchange correlation energy",
        "k_F",
        &[s("E_ex", pts(&|r| Some(r.e_ex))), s("E_B6", pts(&|r| r.e_b6))],
    );
    std::fs::write(dir.join("ex.svg"), ex)?;
    Ok(())
}

/// Re-emits summary files and plots from `report_kf*.json` in the output directory.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<SummaryRow>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&cfg.output_dir)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", cfg.output_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("report_kf") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::validation(format!("no report_kf*.json files in {}", cfg.output_dir.display())));
    }
    let mut rows = vec![];
    for p in &paths {
        let text = std::fs::read_to_string(p)?;
        let r: CorrelationReport = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: not a correlation report: {e}", p.display())))?;
        rows.push(SummaryRow::from(&r));
    }
    rows.sort_by(|a, b| a.k_f.total_cmp(&b.k_f));
    write_summary(cfg, &rows)?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Bos,
    Ex,
    BudgetRatio,
}

impl std::str::FromStr for Series {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bos" => Ok(Series::Bos),
            "ex" => Ok(Series::Ex),
            "budget_ratio" | "budget-ratio" => Ok(Series::BudgetRatio),
            _ => Err(Error::validation(format!("unknown series `{s}` (bos, ex, budget_ratio)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub series: Series,
    pub k_f: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: AsymptoticFit,
    /// 3 − 2β for power-law fits of the energies.
    pub expected_exponent: Option<f64>,
    pub last_relative_residual: f64,
}

/// Values of a series over the configured k_F list.
pub fn series_values(cfg: &RunConfig, series: Series) -> Result<Vec<f64>> {
    with_threads(cfg.threads, || {
        cfg.kf_list
            .iter()
            .map(|&k| -> Result<f64> {
                let p = run_params(cfg, k);
                match series {
                    Series::Bos => Ok(correlation::e_corr_bos(k, cfg.beta, &cfg.potential, p.k_max_bos, cfg.quad_tol)?.0),
                    Series::Ex => Ok(correlation::e_corr_ex(k, cfg.beta, &cfg.potential, p.k_max_ex)?.0),
                    Series::BudgetRatio => {
                        let b = estimates::error_budget(k, cfg.beta, cfg.epsilon, &cfg.potential, BudgetOptions::default())?;
                        let e = correlation::e_corr_bos(k, cfg.beta, &cfg.potential, p.k_max_bos, cfg.quad_tol)?.0;
                        if e == 0.0 {
                            return Err(Error::numerical(format!("E_corr,bos vanishes at k_F = {k}")));
                        }
                        Ok(b.total_envelope / e.abs())
                    }
                }
            })
            .collect()
    })?
}

pub fn cmd_fit(cfg: &RunConfig, series: Series, input: Option<&Path>) -> Result<FitReport> {
    let (k, y) = match input {
        Some(p) => report::read_series_csv(p)?,
        None => (cfg.kf_list.clone(), series_values(cfg, series)?),
    };
    if k.len() < 4 {
        return Err(Error::validation(format!("fit needs at least 4 k_F points, got {}", k.len())));
    }
    let coulomb_mf = matches!(cfg.potential.kind, PotentialKind::Coulomb) && cfg.beta == 1.0;
    let (fit, expected) = match series {
        Series::Bos if coulomb_mf => (fit::fit_klogk(&k, &y)?, None),
        Series::Bos | Series::Ex => (fit::fit_power(&k, &y)?, Some(3.0 - 2.0 * cfg.beta)),
        Series::BudgetRatio => (fit::fit_power(&k, &y)?, None),
    };
    let last = fit.last_relative_residual(*y.last().unwrap());
    let rep = FitReport { series, k_f: k, values: y, fit, expected_exponent: expected, last_relative_residual: last };
    ensure_dir(&cfg.output_dir)?;
    let name = match series {
        Series::Bos => "bos",
        Series::Ex => "ex",
        Series::BudgetRatio => "budget_ratio",
    };
    if cfg.wants(Format::Json) {
        report::write_json(&cfg.output_dir.join(format!("fit_{name}.json")), &rep)?;
    }
    if cfg.wants(Format::Svg) {
        std::fs::write(cfg.output_dir.join(format!("fit_{name}.svg")), fit_plot(&rep))?;
    }
    Ok(rep)
}

fn fit_plot(r: &FitReport) -> String {
    let (lo, hi) = (r.k_f[0], *r.k_f.last().unwrap());
    let curve: Vec<(f64, f64)> = (0..=64)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 64.0;
            (x, r.fit.predict(x))
        })
        .collect();
    let data: Vec<(f64, f64)> = r.k_f.iter().copied().zip(r.values.iter().copied()).collect();
    let resid: Vec<(f64, f64)> = r.k_f.iter().copied().zip(r.fit.residuals.iter().copied()).collect();
    let model = match r.fit.model {
        FitModel::KLogK => "a k log k + b k",
        FitModel::PowerLaw => "a k^c",
    };
    report::svg_plot(
        &format!("{:?} fit: {model}", r.series),
        "k_F",
        &[
            PlotSeries { name: "data".into(), points: data, line_only: false },
            PlotSeries { name: "fit".into(), points: curve, line_only: true },
            PlotSeries { name: "residual".into(), points: resid, line_only: false },
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Bounds,
    Fock,
    Onebody,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(Suite::Bounds),
            "fock" => Ok(Suite::Fock),
            "onebody" => Ok(Suite::Onebody),
            "all" => Ok(Suite::All),
            _ => Err(Error::validation(format!("unknown suite `{s}`"))),
        }
    }
}

/// A numerical agreement check with an absolute threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToleranceCheck {
    pub name: String,
    pub k_f: f64,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ToleranceCheck {
    fn new(name: &str, k_f: f64, tolerance: f64) -> Self {
        ToleranceCheck { name: name.into(), k_f, cases: 0, max_error: 0.0, tolerance, pass: true }
    }

    fn record(&mut self, err: f64) {
        self.cases += 1;
        if !(err <= self.max_error) {
            self.max_error = err;
        }
        self.pass = self.max_error <= self.tolerance;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub pass: bool,
    pub failing: Vec<String>,
    pub bounds: Vec<BoundCheck>,
    pub onebody: Vec<ToleranceCheck>,
    pub fock: Option<FockReport>,
}

impl VerifyReport {
    /// Exit-code view: verification failures become `Error::Verification`.
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::Verification(format!("failing checks: {}", self.failing.join(", "))))
        }
    }
}

pub fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Result<VerifyReport> {
    let mut out = VerifyReport { suite, pass: true, failing: vec![], bounds: vec![], onebody: vec![], fock: None };
    with_threads(cfg.threads, || -> Result<()> {
        if matches!(suite, Suite::Bounds | Suite::All) {
            out.bounds = verify_bounds(cfg)?;
        }
        if matches!(suite, Suite::Onebody | Suite::All) {
            out.onebody = verify_onebody(cfg)?;
        }
        if matches!(suite, Suite::Fock | Suite::All) {
            let opts = FockOptions { seed: cfg.fock_seed, states: cfg.fock_states, ..FockOptions::default() };
            out.fock = Some(fock::run_suite(1.0, cfg.beta, &cfg.potential, &opts)?);
        }
        Ok(())
    })??;
    out.failing.extend(out.bounds.iter().filter(|b| !b.pass).map(|b| format!("{}@k_F={}", b.name, b.k_f)));
    out.failing.extend(out.onebody.iter().filter(|b| !b.pass).map(|b| format!("{}@k_F={}", b.name, b.k_f)));
    if let Some(f) = &out.fock {
        out.failing.extend(f.failing());
    }
    out.pass = out.failing.is_empty();
    if cfg.formats.is_empty() {
        return Ok(out);
    }
    ensure_dir(&cfg.output_dir)?;
    let name = format!("{suite:?}").to_lowercase();
    if cfg.wants(Format::Json) {
        report::write_json(&cfg.output_dir.join(format!("verify_{name}.json")), &out)?;
    }
    if cfg.wants(Format::Csv) && !out.bounds.is_empty() {
        report::write_bound_csv(&cfg.output_dir.join("bound_checks.csv"), &out.bounds)?;
    }
    Ok(out)
}

fn spread(vals: &[f64]) -> f64 {
    let max = vals.iter().copied().fold(0.0, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn trend(name: &str, cfg: &RunConfig, vals: &[f64]) -> BoundCheck {
    let s = spread(vals);
    let k_last = *cfg.kf_list.last().unwrap();
    let mut b = BoundCheck::new(name, k_last, cfg.beta, cfg.epsilon, s, cfg.max_ratio_spread, "max/min across kf_list".into());
    b.pass = s <= cfg.max_ratio_spread;
    b
}

/// Assumption check, kinetic and lune estimates, one-body sup-ratios and
/// the bosonic lower-bound chain, with trend checks across the k_F list.
pub fn verify_bounds(cfg: &RunConfig) -> Result<Vec<BoundCheck>> {
    let (beta, eps) = (cfg.beta, cfg.epsilon);
    let model = &cfg.potential;
    let mut out = vec![];
    let k_scan = 4.0 * cfg.kf_list.last().unwrap();
    let v = potential::validate(model, k_scan);
    let mut b = BoundCheck::new(
        "potential_assumption",
        k_scan,
        beta,
        eps,
        v.empirical_c_v,
        model.c_v,
        v.first_violation.clone().unwrap_or_else(|| "ok".into()),
    );
    b.pass = v.valid;
    out.push(b);
    let (mut s_r, mut dev_r, mut inv_r, mut size_r) = (vec![], vec![], vec![], vec![]);
    for &k in &cfg.kf_list {
        let gap = estimates::min_kinetic_gap(k, (4.0 * k * k).floor() as i64)?;
        let mut g = BoundCheck::new("kinetic_gap", k, beta, eps, 0.5, gap, "1/2 ≤ min ||p|²−ζ|".into());
        g.pass = gap >= 0.5;
        out.push(g);
        let ks = estimates::kinetic_sum(k, &KineticSet::Ball(2.0 * k))?;
        out.push(BoundCheck::new("kinetic_inverse_sum", k, beta, eps, ks, k.powf(1.0 + eps), "Σ_{B(0,2k_F)} 1/||p|²−ζ|".into()));
        let ls = estimates::lune_sweep(k, 2.0 * k + 2.0)?;
        out.push(BoundCheck::new("lune_inverse_sum", k, beta, eps, ls.max_ratio_inv * k, k, "sup_k Σλ⁻¹".into()));
        out.push(BoundCheck::new(
            "lune_size",
            k,
            beta,
            eps,
            ls.max_ratio_size,
            1.0,
            "sup_k |L_k|/(k_F² min(|k|,k_F))".into(),
        ));
        let mut full = BoundCheck::new("outer_lunes_full", k, beta, eps, 0.0, 1.0, "|L_k| = N for |k| > 2k_F".into());
        full.pass = ls.outer_lunes_full;
        out.push(full);
        inv_r.push(ls.max_ratio_inv);
        size_r.push(ls.max_ratio_size);
        let ob = estimates::onebody_scan(k, beta, model, 2.0 * k)?;
        out.push(BoundCheck::new("s_matrix_elements", k, beta, eps, ob.s_ratio, 1.0, format!("argmax k = {}", ob.argmax_k)));
        out.push(BoundCheck::new("c_matrix_elements", k, beta, eps, ob.c_ratio, 1.0, String::new()));
        out.push(BoundCheck::new("s_deviation", k, beta, eps, ob.s_deviation_ratio, 1.0, String::new()));
        for (i, r) in ob.varphi_psi_ratio.iter().enumerate() {
            out.push(BoundCheck::new(&format!("varphi_psi_{i}"), k, beta, eps, *r, 1.0, String::new()));
        }
        s_r.push(ob.s_ratio);
        dev_r.push(ob.s_deviation_ratio);
        let le = estimates::bos_lower_envelope(k, beta, model, cfg.kmax_factor_bos * k, eps, cfg.quad_tol)?;
        let mut c = BoundCheck::new(
            "bos_lower_chain",
            k,
            beta,
            eps,
            -le.e_tilde,
            le.product_bound,
            "−Ẽ ≤ pair bound ≤ product bound".into(),
        );
        c.pass = le.chain_holds;
        out.push(c);
    }
    if cfg.kf_list.len() > 1 {
        out.push(trend("s_ratio_spread", cfg, &s_r));
        out.push(trend("s_deviation_spread", cfg, &dev_r));
    }
    Ok(out)
}

/// Cross-route agreement of the one-body operators at every orbit |k| ≤ 2k_F.
pub fn verify_onebody(cfg: &RunConfig) -> Result<Vec<ToleranceCheck>> {
    let mut out = vec![];
    for &k_f in &cfg.kf_list {
        let ball = FermiBall::new(k_f)?;
        let mut routes = ToleranceCheck::new("fourth_root_routes", k_f, 1e-6);
        let mut square = ToleranceCheck::new("e_squared_residual", k_f, 1e-8);
        let mut grouped = ToleranceCheck::new("grouped_trace", k_f, 1e-8);
        let mut eta = ToleranceCheck::new("eta_closed_form", k_f, 1e-8);
        let mut sandwich = ToleranceCheck::new("sandwich_bounds", k_f, 1e-12);
        for k in orbits(2.0 * k_f).representatives {
            let lune = Lune::new(&ball, k)?;
            if lune.is_empty() {
                continue;
            }
            let g = onebody::mode_coupling(k_f, cfg.beta, cfg.potential.at_norm_sq(k.norm_sq()));
            let spec = lune.spectrum();
            let dense = onebody::build_from_lune(lune.clone(), g, true, ModeOptions::default())?;
            let integral = onebody::build_from_lune(
                lune.clone(),
                g,
                true,
                ModeOptions { method: EMethod::RankOneIntegral, quad_tol: cfg.quad_tol },
            )?;
            routes.record((&dense.e - &integral.e).amax());
            let scale = dense.e_squared_target().amax().max(1e-300);
            square.record((&dense.e * &dense.e - dense.e_squared_target()).amax() / scale);
            let t = onebody::trace_term(&dense);
            grouped.record((t - GroupedMode::new(&spec, g)?.trace_term()).abs() / (1.0 + t.abs()));
            let (direct, closed) = onebody::eta_e_eta(&dense);
            eta.record((direct - closed).abs() / (1.0 + closed.abs()));
            let v: Vec<f64> = dense.v.iter().copied().collect();
            sandwich.record(onebody::sandwich_violation(&dense.h_diag, &v)?);
        }
        out.extend([routes, square, grouped, eta, sandwich]);
    }
    Ok(out)
}
