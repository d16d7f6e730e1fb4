use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trisopt::bench::{
    run_convergence, run_element_sweep, run_power_sweep, run_single, Format, ResultTable, RunConfig, RunOptions, Scheme,
    TraceTable,
};

#[derive(Parser, Debug)]
#[command(name = "trisopt", version, about = "Sum-rate experiments for transmissive RIS downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// First seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of consecutive seeds (overrides `num_seeds`).
    #[arg(long, global = true)]
    seeds: Option<usize>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    #[arg(long, global = true, value_enum, default_value_t = SchemeArg::All)]
    scheme: SchemeArg,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Per-iteration traces at the configured scenario. With --out, the
    /// trace goes next to it as `<stem>.trace.<ext>`.
    Converge,
    /// Sweep the power budget over `power_grid_dbm`.
    SweepPower,
    /// Sweep the surface size over `element_grid`.
    SweepElements,
    /// One row per seed and scheme at the configured scenario.
    Single,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SchemeArg {
    All,
    Proposed,
    Miso,
    EqualPower,
    RandomPhase,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::All => Scheme::ALL.to_vec(),
            SchemeArg::Proposed => vec![Scheme::Proposed],
            SchemeArg::Miso => vec![Scheme::Miso],
            SchemeArg::EqualPower => vec![Scheme::EqualPower],
            SchemeArg::RandomPhase => vec![Scheme::RandomPhase],
        }
    }
}

fn trace_path(out: &Path, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    };
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.trace.{ext}"))
}

fn run(cli: Cli) -> trisopt::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.seeds {
        if n == 0 {
            return Err(trisopt::Error::Config("--seeds must be >= 1".into()));
        }
        config.num_seeds = n;
    }
    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Jsonl => Format::Jsonl,
    };
    let options = RunOptions {
        schemes: cli.scheme.schemes(),
        ..RunOptions::default()
    };

    let (table, trace): (ResultTable, Option<TraceTable>) = match cli.command {
        Command::Converge => {
            let (t, tr) = run_convergence(&config, &options)?;
            (t, Some(tr))
        }
        Command::SweepPower => (run_power_sweep(&config, &options)?, None),
        Command::SweepElements => (run_element_sweep(&config, &options)?, None),
        Command::Single => (run_single(&config, &options)?, None),
    };

    match &cli.out {
        Some(out) => {
            table.write(out, format)?;
            if let Some(trace) = trace {
                trace.write(&trace_path(out, format), format)?;
            }
        }
        None => print!("{}", table.render(format)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
