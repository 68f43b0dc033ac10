use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bary_core::experiments::{
    self, plot_script, run_property_suite_with, solve_oracle, ExperimentSpec, OracleProblem,
    PropertySettings,
};
use clap::{Parser, Subcommand};

/// Wasserstein barycenter estimation experiments.
#[derive(Parser)]
#[command(name = "bary", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec; writes `<output>.csv` and `<output>.summary.json`.
    Run {
        spec: PathBuf,
        /// Output stem, overriding the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write `<output>.plot.py`.
        #[arg(long)]
        emit_plot_script: bool,
    },
    /// Run the property suite; exits nonzero if any property fails.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 257)]
        grid_size: usize,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Solve an oracle problem and print the result as JSON.
    Oracle { problem: PathBuf },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(spec_path: &Path, out: Option<PathBuf>, emit_plot: bool) -> Result<bool, String> {
    let spec = ExperimentSpec::from_json(&read(spec_path)?).map_err(|e| e.to_string())?;
    let stem = out
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", spec.mode.as_str())));
    let output = experiments::run(&spec).map_err(|e| e.to_string())?;
    let (csv, json) = output.write_files(&stem).map_err(|e| e.to_string())?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    if emit_plot {
        let script = stem.with_extension("plot.py");
        let name = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        std::fs::write(&script, plot_script(&name)).map_err(|e| e.to_string())?;
        eprintln!("wrote {}", script.display());
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&output.summary()).map_err(|e| e.to_string())?
    );
    Ok(output.passed())
}

fn props(seed: u64, grid_size: usize, json: bool) -> Result<bool, String> {
    let settings = PropertySettings {
        seed,
        grid_size,
        ..PropertySettings::default()
    };
    let report = run_property_suite_with(&settings).map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    } else {
        for item in &report.items {
            println!(
                "{} {:<24} checks={:<6} worst={:.4}  {}",
                if item.pass { "PASS" } else { "FAIL" },
                item.name,
                item.checked,
                item.worst,
                item.detail
            );
        }
        println!("{}", if report.pass { "all properties pass" } else { "property suite FAILED" });
    }
    Ok(report.pass)
}

fn oracle(path: &Path) -> Result<bool, String> {
    let problem: OracleProblem = serde_json::from_str(&read(path)?).map_err(|e| e.to_string())?;
    let report = solve_oracle(&problem).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            spec,
            out,
            emit_plot_script,
        } => run(&spec, out, emit_plot_script),
        Command::Props {
            seed,
            grid_size,
            json,
        } => props(seed, grid_size, json),
        Command::Oracle { problem } => oracle(&problem),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
