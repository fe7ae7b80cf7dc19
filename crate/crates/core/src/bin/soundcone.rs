use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soundcone::cli::{self, EXIT_ERROR, EXIT_PASS, PRESETS};
use soundcone::lattice::{GraphDescriptor, VelocityBound};

#[derive(Parser)]
#[command(
    name = "soundcone",
    version,
    about = "Light-cone checks for bosonic lattice excitations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve an excitation and run the configured checks.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print report.json to stdout instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// List or print the shipped configs.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Print χ, Δ, D, v and C for a graph.
    Bound {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Run {
            config,
            preset,
            out,
            json,
        } => {
            let cfg = match (config, preset) {
                (Some(path), _) => cli::load_config(&path).map_err(|e| e.to_string())?,
                (None, Some(name)) => cli::preset(&name)
                    .ok_or_else(|| format!("unknown preset {name:?}; try `presets list`"))?,
                (None, None) => unreachable!("clap requires one of --config/--preset"),
            };
            let dir = cli::output_dir(&cfg, out.as_deref());
            let outcome = cli::run_to_dir(&cfg, &dir).map_err(|e| e.to_string())?;
            if json {
                print!("{}", cli::report_json(&outcome.report));
            } else {
                print!("{}", cli::summary(&outcome.report));
                for w in &outcome.report.warnings {
                    eprintln!("warning: {w}");
                }
                println!("wrote {}", dir.display());
            }
            Ok(outcome.exit_code())
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in PRESETS {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => {
                    let cfg = cli::preset(&name)
                        .ok_or_else(|| format!("unknown preset {name:?}; try `presets list`"))?;
                    print!("{}", cfg.to_json());
                }
            }
            Ok(EXIT_PASS)
        }
        Command::Bound { graph, tau, json } => {
            let desc: GraphDescriptor =
                graph.parse().map_err(|e: soundcone::Error| e.to_string())?;
            let g = desc.build().map_err(|e| e.to_string())?;
            let vb = VelocityBound::new(&g, tau).map_err(|e| e.to_string())?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&vb).expect("bound serializes")
                );
            } else {
                print!("{}", cli::bound_table(&vb));
            }
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    match dispatch(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
