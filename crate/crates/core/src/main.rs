use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aitwin::harness::{self, HarnessError, Split};

#[derive(Parser)]
#[command(name = "aitwin", version, about = "Digital-twin runtime: simulate, detect, diagnose, plan")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write data, labels, manifest and model files.
    Simulate {
        scenario: PathBuf,
        /// Output directory [default: runs/<scenario file stem>]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a backend on fault-free data and score a test run (AUC/F1).
    Detect {
        train: PathBuf,
        test: PathBuf,
        labels: PathBuf,
        #[arg(long, default_value = "knn-kde")]
        backend: String,
        /// Scenario file naming the configuration; required for the physics backend.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = harness::TRAIN_UNTIL)]
        train_until: f64,
        #[arg(long, default_value_t = harness::TEST_FROM)]
        test_from: f64,
        #[arg(long, default_value_t = harness::WINDOW_LEN)]
        window: usize,
        /// Result file [default: detect.json next to the test data]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal-cardinality diagnoses of a run at checkpoints.
    Diagnose {
        rules: PathBuf,
        run_dir: PathBuf,
        /// Definitions file with concepts and `bind` records.
        bindings: PathBuf,
        /// Checkpoint time; repeatable. Overrides --every.
        #[arg(long)]
        at: Vec<f64>,
        #[arg(long, default_value_t = 60.0)]
        every: f64,
        /// Result file [default: diagnosis.json in the run directory]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest sequence of process steps from INITIAL to GOAL (e.g. "2*raw + glue").
    Plan {
        steps: PathBuf,
        initial: String,
        goal: String,
        /// Usable components, comma separated [default: all declared]
        #[arg(long, value_delimiter = ',')]
        available: Option<Vec<String>>,
        #[arg(long, default_value_t = 6)]
        max_depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the run, detection and diagnosis files below a directory.
    Report { dir: PathBuf },
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let out = out
                .unwrap_or_else(|| Path::new("runs").join(scenario.file_stem().unwrap_or_else(|| "scenario".as_ref())));
            let m = harness::simulate(&scenario, &out)?;
            println!("{} ({}, seed {}): {} samples -> {}", m.name, m.config, m.seed, m.samples, out.display());
            println!("max relative mass-balance error {:.3e}", m.max_balance_error);
        }
        Command::Detect { train, test, labels, backend, scenario, train_until, test_from, window, out } => {
            let split = Split { train_until, test_from, window };
            let r = harness::detect_files(&train, &test, &labels, &backend, scenario.as_deref(), split)?;
            let out = out.unwrap_or_else(|| sibling(&test, harness::DETECT_FILE));
            harness::write_json(&out, &r)?;
            print!("{}", harness::render_detect(&r));
        }
        Command::Diagnose { rules, run_dir, bindings, at, every, out } => {
            let r = harness::diagnose_run(&rules, &run_dir, &bindings, &at, every)?;
            let out = out.unwrap_or_else(|| run_dir.join(harness::DIAGNOSIS_FILE));
            harness::write_json(&out, &r)?;
            print!("{}", harness::render_diagnosis(&r));
        }
        Command::Plan { steps, initial, goal, available, max_depth, out } => {
            let r = harness::plan_files(&steps, &initial, &goal, available.as_deref(), max_depth)?;
            if let Some(out) = out {
                harness::write_json(&out, &r)?;
            }
            print!("{}", harness::render_plan(&r));
        }
        Command::Report { dir } => {
            let r = harness::report_dir(&dir)?;
            print!("{}", harness::render_report(&r));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
