use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use monocalc::runner::{run_file, Overrides, EXIT_SCHEMA};
use monocalc::scenario::Task;

#[derive(Parser)]
#[command(name = "monocalc", version, about = "Monotone-operator calculus on finite-dimensional p-normed spaces")]
struct Cli {
    /// Worker threads for schedules and grid cells.
    #[arg(long, global = true, env = "MONO_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario whatever its task.
    Run(ScenarioArgs),
    /// Evaluate Moreau–Yosida regularizations at points.
    MyEval(ScenarioArgs),
    /// Probe membership in a sequential lower limit.
    Probe(ScenarioArgs),
    /// Probe the variational sum of two operators.
    Varsum(ScenarioArgs),
    /// Probe the variational composition with a linear map.
    Varcomp(ScenarioArgs),
    /// Fitzpatrick and representative values of a sampled graph.
    Fitz(ScenarioArgs),
    /// Grid certificate for the representative of a sampled graph.
    Certify(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `out`.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_solver: Option<f64>,
    #[arg(long)]
    tol_accept: Option<f64>,
    #[arg(long)]
    tol_reject: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SCHEMA } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (args, task) = match cli.command {
        Command::Run(a) => (a, None),
        Command::MyEval(a) => (a, Some(Task::MyEval)),
        Command::Probe(a) => (a, Some(Task::Probe)),
        Command::Varsum(a) => (a, Some(Task::Varsum)),
        Command::Varcomp(a) => (a, Some(Task::Varcomp)),
        Command::Fitz(a) => (a, Some(Task::Fitzpatrick)),
        Command::Certify(a) => (a, Some(Task::Certify)),
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        tol_solver: args.tol_solver,
        tol_accept: args.tol_accept,
        tol_reject: args.tol_reject,
        expect_task: task,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("monocalc: --jobs must be at least 1");
            return ExitCode::from(EXIT_SCHEMA as u8);
        }
        builder = builder.num_threads(jobs);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("monocalc: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_SCHEMA as u8);
        }
    };
    let outcome = pool.install(|| run_file(&args.scenario, &overrides));
    if let Some(msg) = &outcome.message {
        eprintln!("monocalc: {msg}");
    }
    if let Some(a) = &outcome.artifacts {
        if let Some(summary) = a.file("summary.json") {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(summary) {
                println!("{} verdict={} exit={}", v["task"].as_str().unwrap_or("?"), v["verdict"], outcome.exit_code);
            }
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
