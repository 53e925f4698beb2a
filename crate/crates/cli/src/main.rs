use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmpc_cli::error::{CliError, EXIT_INVALID_INPUT};
use hmpc_cli::runner::{expand, run_jobs, write_sweep_tables, RunOptions};
use hmpc_cli::scenario::{parse_frequency, Scenario};
use hmpc_cli::{freq, table2};

#[derive(Parser, Debug)]
#[command(name = "hmpc", version, about = "Closed-loop experiments with harmonic MPC and MPC for tracking")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Scenario file to run; repeat for a batch.
    #[arg(long = "scenario", value_name = "PATH")]
    scenarios: Vec<PathBuf>,

    /// Run the MPCT/HMPC benchmark comparison.
    #[arg(long)]
    table2: bool,

    /// Base frequencies to sweep, e.g. `0.2278,0.3254,pi/2,2pi`.
    #[arg(long, value_delimiter = ',', value_parser = parse_frequency)]
    sweep_w: Vec<f64>,

    /// Concurrent runs.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,

    /// Steps whose predicted trajectories are written, e.g. `0,15`.
    #[arg(long, value_delimiter = ',')]
    emit_snapshots: Vec<usize>,

    /// Write each run's solver iterations to `solver_log.csv`.
    #[arg(long)]
    solver_log: bool,

    /// Output directory; runs go to `<out>/<name>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Channel gains on a log-spaced grid, as CSV.
    Bode {
        /// Plant JSON; the ball-and-plate model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        w_min: f64,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        w_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Destination file; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Suggested base frequency for one input-to-output channel, as JSON.
    SuggestW {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "output-index", default_value_t = 0)]
        output: usize,
        #[arg(long = "input-index", default_value_t = 0)]
        input: usize,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Some(Command::Bode {
            model,
            w_min,
            w_max,
            points,
            output,
        }) => {
            let plant = freq::load_plant(model.as_deref())?;
            return match output {
                Some(path) => {
                    let f = std::fs::File::create(&path).map_err(|source| CliError::Io { path, source })?;
                    freq::write_bode(&plant, w_min, w_max, points, std::io::BufWriter::new(f))
                }
                None => freq::write_bode(&plant, w_min, w_max, points, std::io::stdout().lock()),
            };
        }
        Some(Command::SuggestW { model, output, input }) => {
            let plant = freq::load_plant(model.as_deref())?;
            let report = freq::suggest(&plant, output, input)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Output(e.to_string()))?;
            println!("{text}");
            return Ok(());
        }
        None => {}
    }

    if cli.scenarios.is_empty() && !cli.table2 {
        return Err(CliError::Usage("nothing to do: pass --scenario, --table2 or a subcommand (see --help)".into()));
    }
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }

    let mut failed: Option<CliError> = None;
    if !cli.scenarios.is_empty() {
        let resolved = cli
            .scenarios
            .iter()
            .map(|p| Scenario::load_resolved(p))
            .collect::<Result<Vec<_>, _>>()?;
        let options = RunOptions {
            out: cli.out.clone(),
            sweep_w: cli.sweep_w.clone(),
            snapshots: cli.emit_snapshots.clone(),
            solver_log: cli.solver_log,
            jobs: cli.jobs,
        };
        let jobs = expand(&resolved, &options);
        let results = run_jobs(&jobs, cli.jobs);
        write_sweep_tables(&jobs, &results, &options)?;
        let mut stdout = std::io::stdout().lock();
        for result in results {
            match result {
                Ok(s) => {
                    let _ = writeln!(
                        stdout,
                        "{} {} N={} w={:.4}: Phi {:.2}, final error {:.2e}, mean solve {:.2} ms -> {}",
                        s.name,
                        s.controller,
                        s.horizon,
                        s.w,
                        s.phi,
                        s.final_error,
                        s.mean_solve_ms,
                        s.output_dir.display()
                    );
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    failed.get_or_insert(e);
                }
            }
        }
    }
    if cli.table2 {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out")).join("table2");
        let report = table2::run_table2(&out, cli.jobs)?;
        print!("{}", report.render());
    }
    failed.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID_INPUT as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
