use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pwl_cli::config::{self, ConfigFile, Format, Overrides};
use pwl_cli::{registry_json, registry_text, run, CliError, BUILD_ID};

#[derive(Parser)]
#[command(name = "pwl", version = BUILD_ID, about = "Run pilot-wave scenarios and write their artifacts")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
    /// List the available scenarios.
    #[arg(long)]
    list: bool,
    /// With --list, print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario.
    Run(RunArgs),
    /// List the available scenarios.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Scenario name (see --list).
    #[arg(long)]
    scenario: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to $PWL_OUT_DIR/<scenario> or pwl-out/<scenario>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for parallel ensembles.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write a gnuplot script (plot.gp) for the tabular artifacts.
    #[arg(long)]
    gnuplot_script: bool,
}

fn list(json: bool) {
    if json {
        println!("{}", registry_json());
    } else {
        print!("{}", registry_text());
    }
}

fn run_command(args: RunArgs) -> Result<bool, CliError> {
    let (file, text, path) = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            let path = p.display().to_string();
            (config::parse(&text, &path)?, text, path)
        }
        None => (ConfigFile::default(), String::new(), String::from("<none>")),
    };
    let cli = Overrides { scenario: args.scenario, seed: args.seed, output: args.out, format: args.format, threads: args.threads };
    let out_root = std::env::var_os("PWL_OUT_DIR").map(PathBuf::from);
    let cfg = config::resolve(file, cli, &text, &path, out_root)?;
    eprintln!("running {} (seed {}) -> {}", cfg.scenario, cfg.seed, cfg.output.display());
    let summary = run(&cfg, args.gnuplot_script)?;
    println!("{}: {}", summary.scenario, if summary.pass { "PASS" } else { "FAIL" });
    println!("artifacts in {}: {}", summary.output.display(), summary.files.join(", "));
    Ok(summary.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::List { json }) => {
            list(json);
            return ExitCode::SUCCESS;
        }
        _ if cli.list => {
            list(cli.json);
            return ExitCode::SUCCESS;
        }
        Some(Command::Run(args)) => run_command(args),
        None => run_command(cli.run),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pwl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
