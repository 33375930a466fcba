use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use kljn_cli::campaign::{security_rows, Campaign, SecurityRow};
use kljn_cli::config::{ExperimentConfig, Scenario, SweepParameter, SweepSection};
use kljn_cli::output::{campaign_outputs, provenance, report_json, OutputSet};
use kljn_cli::{acceptance, run_campaign, CliError, CliResult};

/// KLJN key-exchange simulation laboratory.
#[derive(Debug, Parser)]
#[command(name = "kljn-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Number of BEPs per campaign point, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one campaign and write its report.
    Run,
    /// Run one campaign per value of the sweep axis and fit the scaling law.
    Sweep {
        /// Swept parameter, overriding the config's [sweep] section.
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated values of the swept parameter.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Key-level security figures for a given advantage.
    ReportSecurity {
        /// Eve's per-bit advantage before privacy amplification.
        #[arg(long)]
        q: Option<f64>,
        /// Comma-separated key lengths.
        #[arg(long = "n", value_delimiter = ',')]
        key_lengths: Option<Vec<u64>>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        pa_rounds: Option<u32>,
    },
    /// List the available scenarios.
    ListScenarios,
    /// Run the acceptance suite; exits 1 when any criterion fails.
    SelfTest,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default().resolved(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.trials {
        cfg.beps = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_parameter(name: &str) -> CliResult<SweepParameter> {
    let quoted = format!("\"{name}\"");
    serde_json::from_str(&quoted).map_err(|_| CliError::Config(format!("unknown sweep parameter {name}")))
}

fn print_campaign(c: &Campaign) {
    for p in &c.points {
        let value = p.value.map(|v| format!(" value={v}")).unwrap_or_default();
        let s = &p.summary;
        println!(
            "{}{value}: beps={} kept={} ({:.4}) aborted={} defense_discarded={} ber={:.3e}",
            c.config.scenario.name(),
            s.beps,
            s.kept,
            s.kept_fraction,
            s.aborted,
            s.defense_discarded,
            s.ber
        );
        for (name, a) in &s.attacks {
            let q = &a.estimate;
            println!("  {name:<28} p={:.4} q={:+.4} [{:+.4}, {:+.4}] n={}", q.p_hat, q.q_hat, q.ci_low, q.ci_high, q.n);
        }
    }
    if let Some(s) = &c.scaling {
        println!(
            "fit {}: theta={:.4e} r2={:.4} monotone={}",
            s.attack, s.fit.coefficient, s.fit.r_squared, s.monotone_increasing
        );
    }
    if let Some(b) = &c.ber_fit {
        println!("ln(BER) fit: slope={:.4e} r2={:.4}", b.slope, b.r_squared);
    }
    print_security(&c.security);
}

fn print_security(rows: &[SecurityRow]) {
    for r in rows {
        println!(
            "N={:<6} q_raw={:.3e} rounds={} q={:.3e} delta_exact={} delta_linear={} eps={:.1e} {}",
            r.key_length,
            r.q_raw,
            r.pa_rounds,
            r.q,
            r.delta_exact,
            r.delta_linear,
            r.epsilon,
            if r.satisfied { "satisfied" } else { "NOT satisfied" }
        );
    }
}

fn write(set: OutputSet, quiet: bool) -> CliResult<()> {
    for p in set.commit()? {
        if !quiet {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn campaign(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> CliResult<()> {
    let start = Instant::now();
    let c = run_campaign(cfg)?;
    let set = campaign_outputs(&c, out, start.elapsed())?;
    if !quiet {
        print_campaign(&c);
    }
    write(set, quiet)
}

fn execute(cli: &Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::Run => {
            let mut cfg = load(cli)?;
            cfg.sweep = None;
            campaign(&cfg, &cli.out, cli.quiet)?;
        }
        Command::Sweep { parameter, values } => {
            let mut cfg = load(cli)?;
            if parameter.is_some() || values.is_some() {
                let current = cfg.sweep.clone();
                let parameter = match (parameter, &current) {
                    (Some(p), _) => parse_parameter(p)?,
                    (None, Some(s)) => s.parameter,
                    (None, None) => return Err(CliError::Config("--values needs --parameter".into())),
                };
                let values = match (values, &current) {
                    (Some(v), _) => v.clone(),
                    (None, Some(s)) => s.values.clone(),
                    (None, None) => return Err(CliError::Config("--parameter needs --values".into())),
                };
                let exponent = current.map(|s| s.exponent).unwrap_or(1.0);
                cfg.sweep = Some(SweepSection { parameter, values, exponent });
                cfg.validate()?;
            }
            if cfg.sweep.is_none() {
                return Err(CliError::Config("sweep needs a [sweep] section or --parameter/--values".into()));
            }
            campaign(&cfg, &cli.out, cli.quiet)?;
        }
        Command::ReportSecurity { q, key_lengths, epsilon, pa_rounds } => {
            let start = Instant::now();
            let mut cfg = load(cli)?;
            let s = &mut cfg.security;
            if let Some(q) = q {
                s.q = *q;
            }
            if let Some(n) = key_lengths {
                s.key_lengths = n.clone();
            }
            if let Some(e) = epsilon {
                s.epsilon = *e;
            }
            if let Some(r) = pa_rounds {
                s.pa_rounds = *r;
            }
            cfg.validate()?;
            let s = &cfg.security;
            let rows = security_rows("config", s.q, s.pa_rounds, &s.key_lengths, s.epsilon)?;
            if !cli.quiet {
                print_security(&rows);
            }
            let mut set = OutputSet::new(&cli.out);
            set.add("security.json", report_json(&rows, provenance(&cfg, start.elapsed()))?);
            write(set, cli.quiet)?;
        }
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<16} {}", s.name(), s.description());
            }
        }
        Command::SelfTest => {
            let results = acceptance::run_all(|r| {
                if !cli.quiet {
                    println!("{}", r.line());
                }
            });
            let failed = results.iter().filter(|r| !r.passed).count();
            if !cli.quiet {
                println!("{} of {} criteria passed", results.len() - failed, results.len());
            }
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kljn-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
