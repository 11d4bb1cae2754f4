mod commands;
mod input;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Outcome;
use input::CliError;

#[derive(Parser, Debug)]
#[command(name = "haarlab", version, about = "Exact checks for martingale multipliers on weighted trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug, Clone)]
pub struct Opts {
    /// Tree description (JSON).
    #[arg(long, global = true)]
    pub tree: Option<PathBuf>,
    /// Leaf weights `{"leaf_weights": {...}}`; defaults to w = 1.
    #[arg(long, global = true)]
    pub weight: Option<PathBuf>,
    /// Multiplier symbol `{atom: value}`.
    #[arg(long, global = true)]
    pub sigma: Option<PathBuf>,
    /// Leaf densities of the first measure `{leaf: value}`.
    #[arg(long, global = true)]
    pub mu1: Option<PathBuf>,
    /// Leaf densities of the second measure `{leaf: value}`.
    #[arg(long, global = true)]
    pub mu2: Option<PathBuf>,
    /// Comma-separated epsilons, e.g. `0.1,0.01` or `1/100`.
    #[arg(long, global = true)]
    pub eps: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scan draws or Bellman samples per region.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the command's table as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Rational,
    Float,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// A2 characteristic of the weight over the tree atoms.
    A2,
    /// Partial-sum bracket and, with --sigma, the multiplier norm.
    Norm,
    /// Search for the largest multiplier norm.
    Scan {
        #[arg(long, default_value = "random-continuous")]
        mode: String,
    },
    /// Packing constants of the tau, rho and gamma sequences.
    Carleson,
    /// Outer-measure norms and embedding checks.
    Outer {
        /// Tree function `{atom: value}`; random if omitted.
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Sampled certificates for the Bellman remainder inequalities.
    Bellman {
        /// Comma-separated values of Q.
        #[arg(long, default_value = "1,4,100")]
        q: String,
        #[arg(long, default_value = "both")]
        kind: String,
    },
    /// Two-weight bound and paraproduct splitting.
    T1 {
        /// Instance bundle `{tree, sigma, mu1, mu2}`.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Four-term bilinear splitting on random pairs (f, g).
    Sigma4 {
        #[arg(long, default_value_t = 16)]
        draws: usize,
    },
    /// Verify the counterexample for each epsilon and emit CSV rows.
    Counterexample,
    /// Run the acceptance battery.
    Suite {
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        /// Comma-separated criterion ids; all by default.
        #[arg(long)]
        criteria: Option<String>,
        /// Small instance counts for a smoke run.
        #[arg(long)]
        quick: bool,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HAARLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("HAARLAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn dispatch(cmd: &Command, o: &Opts) -> Result<Outcome, CliError> {
    if !(o.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    if o.budget == Some(0) {
        return Err(CliError::Core(haarlab::HaarError::InvalidParameter(
            "budget must be at least 1".into(),
        )));
    }
    match cmd {
        Command::A2 => commands::a2(o),
        Command::Norm => commands::norm(o),
        Command::Scan { mode } => commands::scan(o, mode),
        Command::Carleson => commands::carleson(o),
        Command::Outer { values } => commands::outer(o, values.as_deref()),
        Command::Bellman { q, kind } => commands::bellman(o, q, kind),
        Command::T1 { bundle } => commands::t1(o, bundle.as_deref()),
        Command::Sigma4 { draws } => commands::sigma4(o, *draws),
        Command::Counterexample => commands::counterexample(o),
        Command::Suite {
            trees,
            depth,
            criteria,
            quick,
        } => commands::suite(o, *trees, *depth, criteria.as_deref(), *quick),
    }
}

fn emit(cmd: &Command, o: &Opts, out: &Outcome) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes") + "\n";
    let csv = out.table.as_ref().map(|t| t.to_csv()).transpose()?;
    if let (Some(path), Some(text)) = (&o.csv, &csv) {
        input::write(path, text)?;
    }
    let mut stdout = std::io::stdout().lock();
    let to_stdout = if matches!(cmd, Command::Counterexample) {
        if let Some(path) = &o.out {
            input::write(path, &json)?;
        }
        csv.unwrap_or_default()
    } else if let Some(path) = &o.out {
        input::write(path, &json)?;
        String::new()
    } else {
        json
    };
    stdout.write_all(to_stdout.as_bytes()).map_err(CliError::Io)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .and_then(|_| dispatch(&cli.command, &cli.opts))
        .and_then(|out| emit(&cli.command, &cli.opts, &out).map(|_| out));
    match result {
        Ok(out) if out.holds => ExitCode::SUCCESS,
        Ok(out) => {
            let dump = serde_json::json!({ "error": "AssertionFailed", "witness": out.witness });
            eprintln!("{}", serde_json::to_string_pretty(&dump).expect("witness serializes"));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
