use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wavecontrol_cli::runner::{self, batch_files};
use wavecontrol_cli::{RunMethod, Scenario, Status, EXIT_CODE_TABLE};

/// Exact controls for the 1D semilinear wave equation.
///
/// Set WAVECONTROL_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "wavecontrol", version, after_help = EXIT_CODE_TABLE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or every *.toml in a directory.
    #[command(after_help = EXIT_CODE_TABLE)]
    Run {
        config: PathBuf,
        /// Output directory (overrides `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and print the resolved scenario without computing.
        #[arg(long)]
        dry_run: bool,
        /// Seed for randomized diagnostics (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the observability probe of a scenario.
    #[command(after_help = EXIT_CODE_TABLE)]
    Probe {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several methods on one scenario; exits 0 once all have run.
    Compare {
        config: PathBuf,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "ls,newton,picard")]
        methods: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, ExitCode> {
    match Scenario::load(path) {
        Ok(mut sc) => {
            if let Some(s) = seed {
                sc.seed = s;
            }
            Ok(sc)
        }
        Err(errors) => {
            for e in &errors.0 {
                eprintln!("{}: {e}", path.display());
            }
            Err(ExitCode::from(Status::ParseError.code()))
        }
    }
}

fn report(label: &str, result: Result<runner::Summary, runner::RunError>) -> u8 {
    match result {
        Ok(s) => {
            let e = s.final_e.map_or("-".into(), |e| format!("{e:.3e}"));
            println!(
                "{label}: {} {:?} after {} iteration(s), E = {e}",
                s.method, s.outcome, s.iterations
            );
            if let Some(err) = &s.error {
                eprintln!("{label}: {err}");
            }
            s.exit_code()
        }
        Err(e) => {
            eprintln!("{label}: {e}");
            e.status().code()
        }
    }
}

fn run_one(path: &Path, out: Option<&Path>, dry_run: bool, seed: Option<u64>) -> u8 {
    let sc = match load(path, seed) {
        Ok(sc) => sc,
        Err(_) => return Status::ParseError.code(),
    };
    if dry_run {
        if let Err(e) = runner::resolve(&sc) {
            eprintln!("{}: {e}", path.display());
            return e.status().code();
        }
        for w in &sc.warnings {
            eprintln!("warning: {w}");
        }
        print!("{}", sc.to_toml());
        return 0;
    }
    let dir = out.map_or_else(|| sc.out.clone(), Path::to_path_buf);
    report(&path.display().to_string(), runner::run(&sc, &dir))
}

fn execute(cli: Cli) -> Result<u8, ExitCode> {
    Ok(match cli.command {
        Command::Run {
            config,
            out,
            dry_run,
            seed,
        } => {
            if config.is_dir() {
                let files = batch_files(&config).map_err(|e| {
                    eprintln!("{e}");
                    ExitCode::from(e.status().code())
                })?;
                let root = out.unwrap_or_else(|| PathBuf::from("out"));
                let codes: Vec<u8> = files
                    .par_iter()
                    .map(|f| {
                        let stem = f.file_stem().unwrap_or_default();
                        run_one(f, Some(&root.join(stem)), dry_run, seed)
                    })
                    .collect();
                codes.into_iter().find(|&c| c != 0).unwrap_or(0)
            } else {
                run_one(&config, out.as_deref(), dry_run, seed)
            }
        }
        Command::Probe { config, out, seed } => {
            let sc = load(&config, seed)?;
            let dir = out.unwrap_or_else(|| sc.out.clone());
            report(
                &config.display().to_string(),
                runner::run_method(&sc, RunMethod::Probe, &dir),
            )
        }
        Command::Compare {
            config,
            methods,
            out,
            seed,
        } => {
            let sc = load(&config, seed)?;
            let methods = methods
                .iter()
                .map(|m| m.parse::<RunMethod>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| {
                    eprintln!("--methods: {e}");
                    ExitCode::from(Status::ParseError.code())
                })?;
            let dir = out.unwrap_or_else(|| sc.out.clone());
            match runner::compare(&sc, &methods, &dir) {
                Ok(summaries) => {
                    for s in summaries {
                        report(&config.display().to_string(), Ok(s));
                    }
                    0
                }
                Err(e) => report(&config.display().to_string(), Err(e)),
            }
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(n) = std::env::var("WAVECONTROL_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring WAVECONTROL_THREADS={n}: expected a positive integer"),
        }
    }
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(code) => code,
    }
}
