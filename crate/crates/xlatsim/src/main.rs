use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xlatsim::analytic;
use xlatsim::config::{ConfigError, SimConfig};
use xlatsim::sim::{self, ReportFormat, RunError, SweepAxis};
use xlatsim::trace;

const EXIT_CONFIG: u8 = 2;
const EXIT_TRACE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "xlatsim",
    about = "Trace-driven simulator of hash-guided speculative address translation",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

/// Flags shared by every subcommand that builds a configuration.
#[derive(Args)]
struct ConfigFlags {
    /// Line-oriented `key = value` configuration file.
    #[arg(long)]
    config: Option<String>,
    /// Trace file to replay instead of generating one.
    #[arg(long)]
    trace: Option<String>,
    /// native | nested | speculation-off | perfect-speculation.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override one configuration key, e.g. --set spec.n_max=6. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace (trace.* keys control the generator).
    GenTrace {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Run one simulation and report statistics.
    Run {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// human | csv | json-lines.
        #[arg(long, default_value = "human")]
        format: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Run once per axis value and emit one CSV row per run.
    Sweep {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// pressure | n_max | bandwidth.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. 0,0.2,0.4.
        #[arg(long)]
        values: String,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare the closed-form tier distribution against Monte-Carlo
    /// allocation (uses pressure, spec.n_max and total_frames).
    Analytic {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Print the effective configuration (defaults + file + overrides).
    PrintConfig {
        #[command(flatten)]
        cfg: ConfigFlags,
    },
}

enum CliError {
    Config(String),
    Trace(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Trace(_) => EXIT_TRACE,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Trace(m) | CliError::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Trace(_) | RunError::TraceIo { .. } => CliError::Trace(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

fn build_config(flags: &ConfigFlags) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::default();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file '{path}': {e}")))?;
        cfg.apply_file(&text)?;
    }
    for assignment in &flags.sets {
        cfg.apply_override(assignment)?;
    }
    if let Some(path) = &flags.trace {
        cfg.trace_path = path.clone();
    }
    if let Some(mode) = &flags.mode {
        cfg.set("mode", mode)?;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<String>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Other(format!("cannot write '{path}': {e}"))),
        None => {
            print!("{text}");
            std::io::stdout()
                .flush()
                .map_err(|e| CliError::Other(e.to_string()))
        }
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::GenTrace { cfg, out } => {
            let cfg = build_config(&cfg)?;
            let events = sim::build_events(&cfg)?;
            let mut buf = Vec::new();
            trace::write_trace(&mut buf, &events).map_err(|e| CliError::Other(e.to_string()))?;
            emit(&out, &String::from_utf8(buf).expect("trace text is UTF-8"))
        }
        Command::Run { cfg, format, out } => {
            let format: ReportFormat = format.parse().map_err(CliError::Config)?;
            let cfg = build_config(&cfg)?;
            let stats = sim::run_config(&cfg)?;
            emit(&out, &sim::report(&stats, format))
        }
        Command::Sweep {
            cfg,
            axis,
            values,
            out,
        } => {
            let axis: SweepAxis = axis.parse().map_err(CliError::Config)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Config(format!("bad axis value '{v}': {e}")))
                })
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(CliError::Config("sweep needs at least one value".into()));
            }
            let cfg = build_config(&cfg)?;
            let csv = sim::sweep(&cfg, axis, &values)?;
            emit(&out, &csv)
        }
        Command::Analytic { cfg, trials } => {
            let cfg = build_config(&cfg)?;
            let (p, n) = (cfg.pressure, cfg.spec.n_max);
            let expected = analytic::expected_tier_distribution(p, n);
            let counts =
                analytic::monte_carlo_tier_distribution(cfg.total_frames, p, n, trials, cfg.seed);
            let fit = analytic::chi_square_fit(&counts, &expected, 0.001);
            let mut text = format!(
                "p = {p} | N = {n} | frames = {} | trials = {trials}\n",
                cfg.total_frames
            );
            text.push_str("bin        model     measured\n");
            for i in 0..=n {
                let label = if i < n {
                    format!("tier {}", i + 1)
                } else {
                    "fallback".to_string()
                };
                text.push_str(&format!(
                    "{label:<10} {:<9.6} {:.6}\n",
                    expected[i],
                    counts[i] as f64 / trials as f64
                ));
            }
            text.push_str(&format!(
                "success: model {:.6} | measured {:.6}\n",
                1.0 - p.powi(n as i32),
                counts[..n].iter().sum::<u64>() as f64 / trials as f64
            ));
            text.push_str(&format!(
                "chi-square {:.3} vs critical {:.3} (df {}): {}\n",
                fit.statistic,
                fit.critical_value,
                fit.degrees_of_freedom,
                if fit.accepted { "fit accepted" } else { "fit REJECTED" }
            ));
            emit(&None, &text)
        }
        Command::PrintConfig { cfg } => {
            let cfg = build_config(&cfg)?;
            emit(&None, &cfg.render())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
