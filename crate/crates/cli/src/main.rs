use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neumann_lab::config::RunConfig;
use neumann_lab::experiment::run_experiment;
use neumann_lab::report::{emit_report, ReportFormat};
use neumann_lab::Error;

/// Neumann functions of divergence-form elliptic systems on rough
/// coefficients: solves, kernels, estimates and oracle comparisons.
#[derive(Parser, Debug)]
#[command(name = "neumann-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Samples the coefficient and checks its ellipticity bounds.
    VerifyCoeff,
    /// Solves the Neumann problem for the configured data.
    Solve,
    /// Builds kernels and checks the discrete identities.
    Kernel,
    /// Fits the kernel exponents and runs the condition study.
    Estimates,
    /// Compares Laplacian kernels with the analytic oracles.
    OracleCompare,
    /// All of the above.
    FullSuite,
    /// Prints the effective config in canonical form.
    Config,
}

impl Command {
    fn kind(self) -> Option<&'static str> {
        Some(match self {
            Command::VerifyCoeff => "verify-coeff",
            Command::Solve => "solve",
            Command::Kernel => "kernel",
            Command::Estimates => "estimates",
            Command::OracleCompare => "oracle-compare",
            Command::FullSuite => "full-suite",
            Command::Config => return None,
        })
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(kind) = cli.command.kind() {
        config.kind = kind.into();
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.output = o.clone();
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("neumann-lab: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.command.kind().is_none() {
        print!("{}", config.to_key_value());
        return ExitCode::SUCCESS;
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("neumann-lab: thread pool: {e}");
        return ExitCode::from(2);
    }
    let report = run_experiment(&config);
    let written = emit_report(&report, &config.output, ReportFormat::Json)
        .and_then(|mut a| {
            a.extend(emit_report(&report, &config.output, ReportFormat::CsvBundle)?);
            let p = config.output.join("config.txt");
            std::fs::write(&p, config.to_key_value()).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            a.push(p);
            Ok(a)
        });
    if let Err(e) = written {
        eprintln!("neumann-lab: {e}");
        return ExitCode::from(2);
    }
    for r in &report.records {
        let value = r.slope.or(r.constant).map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("{:<4} {:<28} {}", if r.pass { "pass" } else { "FAIL" }, r.name, value);
    }
    for f in &report.failures {
        println!("err  {:<28} {}", f.stage, f.message);
    }
    println!("config {} -> {}", report.config_hash, config.output.display());
    ExitCode::from(report.exit_code() as u8)
}
