use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use lrp::interp::DEFAULT_TICK_MS;
use lrp::session::{run_session, Mode, SessionConfig, EXIT_FAILURE};
use lrp::syntax::parse_program;

/// Live-programmable robot behavior runtime.
#[derive(Debug, Parser)]
#[command(name = "lrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a program against a simulated robot, integrating edits to the file.
    Run {
        program: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TICK_MS, value_parser = clap::value_parser!(u64).range(1..))]
        tick_ms: u64,
        /// Run ticks back to back instead of in real time.
        #[arg(long = "virtual", requires = "ticks")]
        virtual_time: bool,
        /// Stop after this many ticks.
        #[arg(long)]
        ticks: Option<u64>,
        /// Write a JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Serve snapshots and accept commands on this localhost port.
        #[arg(long)]
        serve: Option<u16>,
        /// Replay scripted edits and commands.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Parse and validate a program without running it.
    Check { program: PathBuf },
}

fn check(path: &PathBuf) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("lrp: cannot read {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    };
    match parse_program(&text) {
        Ok(p) => {
            for d in &p.diagnostics {
                println!("{}: {d}", path.display());
            }
            if p.diagnostics.is_empty() {
                println!(
                    "{}: ok ({} machines, {} spawns)",
                    path.display(),
                    p.machines.len(),
                    p.spawns.len()
                );
                0
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            println!("{}:{e}", path.display());
            EXIT_FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LRP_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::Check { program } => check(&program),
        Cmd::Run {
            program,
            world,
            tick_ms,
            virtual_time,
            ticks,
            trace,
            serve,
            script,
        } => {
            let config = SessionConfig {
                program_path: program,
                world_path: world,
                tick_ms,
                mode: if virtual_time {
                    Mode::Virtual
                } else {
                    Mode::WallClock
                },
                max_ticks: ticks,
                trace_path: trace,
                serve_port: serve,
                script_path: script,
            };
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
                log::warn!("cannot install interrupt handler: {e}");
            }
            run_session(config, &stop)
        }
    };
    ExitCode::from(code as u8)
}
