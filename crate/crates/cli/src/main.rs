use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kochergin_cli::checks::{bad_set_checks, bad_set_for, dk_sample, margin_for, ChecksReport};
use kochergin_cli::config::parse_alpha;
use kochergin_cli::pipeline::{localized_run, truncate};
use kochergin_cli::{init_workers, run, run_checks, CliError, ExperimentConfig};
use kochergin_core::arithmetic::RotationNumber;
use kochergin_core::correlation::CorrelationSeries;
use kochergin_core::flow::SpecialFlow;
use kochergin_core::spectral::{periodogram, symmetrize, SpectralOptions};

/// Numerical laboratory for Kochergin special flows.
///
/// Worker count comes from KOCHERGIN_WORKERS (default: all cores).
/// Exit status: 0 pass, 1 check or runtime failure, 2 config error.
#[derive(Parser)]
#[command(name = "kochergin", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// config file (flat TOML sections, see CONFIG.md)
    #[arg(long)]
    config: Option<PathBuf>,
    /// built-in preset when no config file is given: desk or minimal
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    /// golden, silver, 0.ddd or cf:a1,a2,...
    #[arg(long)]
    alpha: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(e) = self.eta {
            c.roof.eta = e;
        }
        if let Some(a) = &self.alpha {
            c.alpha.spec = a.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Partial quotients and convergent denominators
    Cf {
        #[arg(long, default_value = "golden")]
        alpha: String,
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Denjoy-Koksma bounds on random (theta, N)
    DkCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        r_max: Option<usize>,
    },
    /// Correlation of the localized pair as CSV `t,c_value,quad_error`
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// output file (default stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bad set for the scale with q_n = Q, as JSON
    Badset {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 144.0)]
        q: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// also print the B1-B5 summary table to stderr
        #[arg(long)]
        check: bool,
    },
    /// Periodogram of a correlation CSV as `frequency,density`
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// correlation CSV; one-sided series are mirrored with C(-t) = C(t)
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full diagnostic battery with one summary table
    Checks {
        #[command(flatten)]
        common: Common,
    },
    /// Whole pipeline into the configured output directory
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e)),
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, CliError> {
    let workers = init_workers()?;
    match cmd {
        Cmd::Cf { alpha, depth } => {
            let rot = RotationNumber::new(parse_alpha(&alpha)?, depth + 1).map_err(|e| CliError::module("arithmetic", e, &alpha))?;
            let mut s = String::from("n,a_n,q_n\n");
            for n in 0..=depth {
                s += &format!("{n},{},{}\n", rot.cf[n], rot.q[n]);
            }
            emit(&None, s.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::DkCheck { common, samples, r_max } => {
            let c = common.load()?;
            let flow = SpecialFlow::new(c.roof_function()?, c.rotation()?);
            let d = dk_sample(&flow, samples.unwrap_or(c.checks.dk_samples), r_max.unwrap_or(c.checks.dk_r_max), c.seed)?;
            println!("{}", serde_json::to_string_pretty(&d).expect("summary serializes"));
            Ok(status(d.pass_fraction >= 0.95))
        }
        Cmd::Correlate { common, t_max, step, out } => {
            let mut c = common.load()?;
            if let Some(t) = t_max {
                c.correlation.t_max = t;
                c.spectrum.t_max = c.spectrum.t_max.min(t);
                c.spectrum.wiener.retain(|&w| w <= t);
            }
            if let Some(s) = step {
                c.correlation.step = s;
            }
            c.validate()?;
            let flow = SpecialFlow::new(c.roof_function()?, c.rotation()?);
            let (loc, _) = localized_run(&flow, &c)?;
            let mut buf = Vec::new();
            loc.series.write_csv(&mut buf).expect("writing to memory");
            emit(&out, &buf)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Badset { common, q, out, check } => {
            let c = common.load()?;
            let flow = SpecialFlow::new(c.roof_function()?, c.rotation()?);
            let margin = margin_for(&flow, &c, q)?;
            let bad = bad_set_for(&flow, &c, &margin)?;
            emit(&out, &serde_json::to_vec_pretty(&bad).expect("bad set serializes"))?;
            if check {
                let rep = ChecksReport { results: bad_set_checks(&flow, &c, &margin, &bad)? };
                eprint!("{}", rep.table());
                return Ok(status(rep.hard_ok()));
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Spectrum { common, input, t_max, out } => {
            let c = common.load()?;
            let file = std::fs::File::open(&input).map_err(|e| CliError::io(&input, e))?;
            let series = CorrelationSeries::read_csv(std::io::BufReader::new(file)).map_err(|e| CliError::module("correlation", e, input.display()))?;
            let series = truncate(&series, t_max.unwrap_or(c.spectrum.t_max));
            let series = if series.t.first().is_some_and(|&t| t >= 0.0) { symmetrize(&series) } else { series };
            let opts = SpectralOptions {
                window: c.window()?,
                xi_max: (c.spectrum.xi_max > 0.0).then_some(c.spectrum.xi_max),
                d_xi: None,
                bias_correct: c.spectrum.bias_correct,
            };
            let est = periodogram(&series, &opts).map_err(|e| CliError::module("spectral", e, input.display()))?;
            let mut buf = Vec::new();
            est.write_csv(&mut buf).expect("writing to memory");
            emit(&out, &buf)?;
            eprintln!("mass {:.6e} (C(0) = {:.6e}), clipped {:.6e}", est.raw_mass, est.c0, est.clipped_mass);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Checks { common } => {
            let c = common.load()?;
            let rep = run_checks(&c)?;
            print!("{}", rep.table());
            Ok(status(rep.hard_ok()))
        }
        Cmd::Run { common, output } => {
            let mut c = common.load()?;
            if let Some(o) = output {
                c.output = o;
            }
            let (m, rep) = run(&c, workers)?;
            print!("{}", rep.table());
            println!("wrote {} files to {} in {:.1} s", m.files.len(), c.output.display(), m.wall_time_s);
            Ok(status(m.hard_ok))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
