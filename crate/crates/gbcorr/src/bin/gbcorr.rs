use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gbcorr::app::{self, Series, Suite, VerifyReport};
use gbcorr::config::{Overrides, RunConfig};
use gbcorr::Result;

#[derive(Parser)]
#[command(name = "gbcorr", version, about = "Correlation energies of the mean-field electron gas on the torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full per-orbit reports for every k_F
    Compute(Common),
    /// Summary table and plots over the k_F list
    Sweep(Common),
    /// Asymptotic fit of a series
    Fit {
        #[arg(long, default_value = "bos")]
        series: String,
        /// Two-column CSV (k_f, value) instead of computing the series
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite (bounds, fock, onebody, all)
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    VerifyBounds(Common),
    VerifyFock(Common),
    VerifyOnebody(Common),
    /// Rebuild summary and plots from existing JSON reports
    Report(Common),
}

/// Every flag mirrors a config key; flags override the config file and GBCORR_THREADS.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kf_list: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    potential_kind: Option<String>,
    #[arg(long)]
    potential_coupling: Option<String>,
    #[arg(long)]
    potential_param: Option<String>,
    #[arg(long)]
    kmax_factor_bos: Option<String>,
    #[arg(long)]
    kmax_factor_ex: Option<String>,
    #[arg(long)]
    quad_tol: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    formats: Option<String>,
    #[arg(long)]
    trace_path: Option<String>,
    #[arg(long)]
    eb6: Option<String>,
    #[arg(long)]
    fock_seed: Option<String>,
    #[arg(long)]
    fock_states: Option<String>,
    #[arg(long)]
    max_ratio_spread: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut layers = vec![];
        if let Some(p) = &self.config {
            layers.push(Overrides::read(p)?);
        }
        if let Ok(t) = std::env::var("GBCORR_THREADS") {
            let mut env = Overrides::default();
            env.set("threads", t);
            layers.push(env);
        }
        let mut flags = Overrides::default();
        for (key, v) in [
            ("kf_list", &self.kf_list),
            ("beta", &self.beta),
            ("potential.kind", &self.potential_kind),
            ("potential.coupling", &self.potential_coupling),
            ("potential.param", &self.potential_param),
            ("kmax_factor_bos", &self.kmax_factor_bos),
            ("kmax_factor_ex", &self.kmax_factor_ex),
            ("quad_tol", &self.quad_tol),
            ("epsilon", &self.epsilon),
            ("threads", &self.threads),
            ("output_dir", &self.output_dir),
            ("formats", &self.formats),
            ("trace_path", &self.trace_path),
            ("eb6", &self.eb6),
            ("fock.seed", &self.fock_seed),
            ("fock.states", &self.fock_states),
            ("bounds.max_ratio_spread", &self.max_ratio_spread),
        ] {
            if let Some(v) = v {
                flags.set(key, v.clone());
            }
        }
        layers.push(flags);
        RunConfig::build(&layers)
    }
}

fn verify(common: &Common, suite: Suite) -> Result<()> {
    let r: VerifyReport = app::cmd_verify(&common.config()?, suite)?;
    println!("verify {suite:?}: {}", if r.pass { "pass" } else { "FAIL" });
    r.into_result().map(|_| ())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Compute(c) => {
            let cfg = c.config()?;
            for r in app::cmd_compute(&cfg)? {
                println!("k_F={} N={} E_bos={:.10e} E_ex={:.10e}", r.k_f, r.n, r.e_bos_quadrature, r.e_ex);
            }
        }
        Cmd::Sweep(c) => {
            let cfg = c.config()?;
            for r in app::cmd_sweep(&cfg)? {
                println!("k_F={} N={} E_bos={:.10e} E_ex={:.10e}", r.k_f, r.n, r.e_bos_quadrature, r.e_ex);
            }
        }
        Cmd::Fit { series, input, common } => {
            let cfg = common.config()?;
            let series: Series = series.parse()?;
            let r = app::cmd_fit(&cfg, series, input.as_deref())?;
            println!("model {:?}: coefficients {:?}, r² = {:.6}", r.fit.model, r.fit.coefficients, r.fit.r_squared);
            if let Some(e) = r.expected_exponent {
                println!("expected exponent 3−2β = {e}");
            }
        }
        Cmd::Verify { suite, common } => verify(&common, suite.parse()?)?,
        Cmd::VerifyBounds(c) => verify(&c, Suite::Bounds)?,
        Cmd::VerifyFock(c) => verify(&c, Suite::Fock)?,
        Cmd::VerifyOnebody(c) => verify(&c, Suite::Onebody)?,
        Cmd::Report(c) => {
            let rows = app::cmd_report(&c.config()?)?;
            println!("{} reports summarized", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
