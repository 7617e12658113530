use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tfqkd::cli::{finite_eval, rate_scan, verify, write_csv, write_json, CountsSource, OutputFormat, RunConfig};
use tfqkd::protosim::{simulate, CountsDocument, Sampler};

#[derive(Parser)]
#[command(name = "tfqkd", version, about = "Twin-field QKD rate scans, finite-key evaluation and identity checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file with [physical], [epsilon], [scan], [run], [verify] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Alice-Bob distance in km (a single-point scan for `scan`)
    #[arg(long, global = true)]
    distance: Option<f64>,
    /// Key intensity
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// per-round | batched
    #[arg(long, global = true)]
    sampler: Option<Sampler>,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asymptotic rate against distance
    Scan {
        /// log10 of rates and PLOB; zero rates become empty fields
        #[arg(long)]
        log10: bool,
        /// Report the t=1 announcement alone as rate_total
        #[arg(long)]
        t1_only: bool,
    },
    /// Finite key from simulated or stored counts
    Finite {
        /// Counts JSON; simulates when absent
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        n_rounds: Option<f64>,
    },
    /// Fock-space identity suite
    Verify {
        #[arg(long)]
        cutoff: Option<usize>,
        /// Nonzero exit when a check is flagged
        #[arg(long)]
        strict: bool,
    },
    /// Write a counts document
    Simulate {
        #[arg(long)]
        n_rounds: Option<f64>,
    },
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        _ => Err(format!("expected csv or json, got {s}")),
    }
}

fn rounds(v: Option<f64>, default: u64) -> Result<u64> {
    match v {
        None => Ok(default),
        Some(x) if x >= 1.0 && x.fract() == 0.0 && x <= tfqkd::protosim::MAX_ROUNDS as f64 => Ok(x as u64),
        Some(x) => anyhow::bail!("round count {x} must be a whole number in [1, 2^53]"),
    }
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(d) = c.distance {
        cfg.physical.distance_km = d;
        cfg.scan.l_min = d;
        cfg.scan.l_max = d;
    }
    if let Some(mu) = c.mu {
        cfg.scan.mu = Some(mu);
        cfg.physical = cfg.params_with_mu(Some(mu));
        cfg.verify.mu = Some(mu);
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(s) = c.sampler {
        cfg.run.sampler = s;
    }
    if let Some(f) = c.format {
        cfg.run.format = f;
    }
    if c.output.is_some() {
        cfg.run.output = c.output.clone();
    }
    cfg.physical.validate()?;
    let out = cfg.run.output.clone();

    match cli.cmd {
        Cmd::Scan { log10, t1_only } => {
            cfg.scan.log10 |= log10;
            if t1_only {
                cfg.scan.sum_both = false;
            }
            let rows = rate_scan(&cfg)?;
            let text = match cfg.run.format {
                OutputFormat::Csv => write_csv(&rows, cfg.scan.log10),
                OutputFormat::Json => write_json(&rows) + "\n",
            };
            emit(&text, out.as_ref())?;
        }
        Cmd::Finite { counts, n_rounds } => {
            let source = match counts {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    CountsSource::Document(Box::new(CountsDocument::from_json(&text)?))
                }
                None => CountsSource::Simulate {
                    n_rounds: rounds(n_rounds, cfg.run.n_rounds)?,
                    seed: cfg.run.seed,
                    sampler: cfg.run.sampler,
                },
            };
            let r = finite_eval(&cfg, source)?;
            let text = match cfg.run.format {
                OutputFormat::Json => write_json(&r) + "\n",
                OutputFormat::Csv => {
                    let mut s = String::from("t,n_sif,e_z,e_y,e_ph,delta_bias,key_length\n");
                    for k in &r.results {
                        s += &format!("{},{:e},{:e},{:e},{:e},{:e},{:e}\n", k.t, k.n_sif, k.e_z, k.e_y, k.e_ph, k.delta_bias, k.key_length);
                    }
                    s += &format!("# key_length={:e} asymptotic={:e} eps_s={:e}\n", r.key_length, r.asymptotic_key_length, r.eps_s);
                    s
                }
            };
            emit(&text, out.as_ref())?;
        }
        Cmd::Verify { cutoff, strict } => {
            if let Some(k) = cutoff {
                cfg.verify.cutoff = k;
            }
            let report = verify(&cfg)?;
            let text = match cfg.run.format {
                OutputFormat::Json => write_json(&report) + "\n",
                OutputFormat::Csv => report.render(),
            };
            emit(&text, out.as_ref())?;
            if strict && !report.all_passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Simulate { n_rounds } => {
            let n = rounds(n_rounds, cfg.run.n_rounds)?;
            let doc = simulate(&cfg.physical, n, cfg.run.seed, cfg.run.sampler)?;
            emit(&(doc.to_json() + "\n"), out.as_ref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
