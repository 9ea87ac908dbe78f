//! Scenario-driven command line for the buckling reduced-order toolkit.
//!
//! Subcommands mirror the offline/online workflow: `offline` trains and
//! persists a reduced model, `online` replays continuation sweeps with it,
//! `compare` diffs two diagram CSVs and `mesh-export` dumps the scenario
//! mesh for external viewers. Failures exit with a stable per-family code
//! (see the library error type) so scripts can branch on the cause.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use buckrom::artifacts::Artifacts;
use buckrom::driver;
use buckrom::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "buckrom",
    version,
    about = "Buckling bifurcation diagrams of hyperelastic beams and tubes \
             via POD-Galerkin reduced-order models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training sweeps, compress them and persist the model.
    Offline {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Directory receiving artifacts, tables and the report.
        #[arg(short, long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Replay the sweeps with the reduced model and write diagrams.
    Online {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Directory receiving tables, plots and the report.
        #[arg(short, long, default_value = "out")]
        out_dir: PathBuf,
        /// Model file (defaults to the offline location inside OUT_DIR).
        #[arg(short, long)]
        artifacts: Option<PathBuf>,
    },
    /// Compare two diagram CSVs: onsets, branch ordering, max deviation.
    Compare {
        diagram_a: PathBuf,
        diagram_b: PathBuf,
        /// Onset detection threshold applied to both diagrams.
        #[arg(short, long, default_value_t = 1e-3)]
        threshold: f64,
    },
    /// Write the scenario mesh as a legacy VTK unstructured grid.
    MeshExport {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output path (defaults to `<scenario name>.vtk` in the working
        /// directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn run(command: Command) -> buckrom::Result<()> {
    match command {
        Command::Offline { scenario, out_dir } => {
            let scenario = Scenario::from_path(&scenario)?;
            let outputs = driver::run_offline(&scenario, &out_dir)?;
            println!(
                "offline '{}': {} state snapshots, basis N = {}, {:.2} s",
                scenario.name,
                outputs.snapshot_count,
                outputs.artifacts.basis.n_modes(),
                outputs.seconds,
            );
            if let Some(deim) = &outputs.artifacts.deim {
                println!(
                    "  force interpolation: m = {} of {} retained modes",
                    deim.m_init,
                    deim.m_available(),
                );
            }
            for (label, branch) in &outputs.branches {
                match branch.critical_mu {
                    Some(mu) => println!("  {label}: mu* = {mu}"),
                    None => println!("  {label}: no onset detected"),
                }
            }
            println!("  model: {}", outputs.artifact_path.display());
        }
        Command::Online { scenario, out_dir, artifacts } => {
            let scenario = Scenario::from_path(&scenario)?;
            let path =
                artifacts.unwrap_or_else(|| driver::artifact_path(&scenario, &out_dir));
            let artifacts = Artifacts::load(&path)?;
            let outputs = driver::run_online(&scenario, &artifacts, &out_dir)?;
            println!(
                "online '{}': N = {}, {} case(s)",
                scenario.name,
                outputs.basis_dim,
                outputs.cases.len(),
            );
            for case in &outputs.cases {
                let onset = match case.reduced.critical_mu {
                    Some(mu) => format!("mu* = {mu}"),
                    None => "no onset detected".into(),
                };
                print!("  {}: {onset}, reduced {:.3} s", case.label, case.reduced_seconds);
                if let Some(secs) = case.sampled_seconds {
                    print!(", sampled {secs:.3} s");
                }
                if let Some(secs) = case.reference_seconds {
                    print!(
                        ", full {:.3} s (speed-up {:.1}x)",
                        secs,
                        secs / case.reduced_seconds.max(1e-12)
                    );
                }
                println!();
            }
            println!("  diagram: {}", outputs.diagram_path.display());
        }
        Command::Compare { diagram_a, diagram_b, threshold } => {
            let summary = driver::compare_diagrams(&diagram_a, &diagram_b, threshold)?;
            print!("{}", summary.render());
        }
        Command::MeshExport { scenario, out } => {
            let parsed = Scenario::from_path(&scenario)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.vtk", parsed.name)));
            driver::mesh_export(&parsed, &out)?;
            println!("mesh written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
