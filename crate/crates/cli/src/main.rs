use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use radcav_cli::commands::{
    cmd_block_image, cmd_compare, cmd_gen_mesh, cmd_run, exit_code_for,
};
use radcav_cli::config::{MeshSource, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "radcav",
    about = "Cavity radiation heat transfer with hierarchical block low-rank solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BodyArg {
    SphereLike,
    Cube,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in mesh and write it in the native text format.
    GenMesh {
        #[command(subcommand)]
        shape: GenShape,
    },
    /// Run one transient simulation from a config file.
    Run {
        /// Path to the key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. --set solver.eps_rel=1e-4.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the Direct reference and a low-rank run per tolerance; write
    /// compare.csv with e(T), F error, bytes, and wall time.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated truncation tolerances, e.g. 1e-1,1e-2,1e-3.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write the cavity block-structure image (dense blue, low-rank gray).
    BlockImage {
        #[arg(long)]
        config: PathBuf,
        /// Minimal cluster size for the image partition.
        #[arg(long, default_value_t = 128)]
        leaf_size: usize,
        #[arg(short, long, default_value = "blocks.ppm")]
        output: PathBuf,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Subcommand)]
enum GenShape {
    /// Two parallel plates with the facing surfaces as the cavity.
    Plates {
        #[arg(long, default_value_t = 40)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(short, long, default_value = "plates.mesh")]
        output: PathBuf,
    },
    /// Thirteen bodies on the Fibonacci spiral, exterior as the cavity.
    Fib {
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, value_enum, default_value_t = BodyArg::SphereLike)]
        body: BodyArg,
        #[arg(short, long, default_value = "fib.mesh")]
        output: PathBuf,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenMesh { shape } => {
            let mut cfg = SimulationConfig::default();
            let (source, out) = match shape {
                GenShape::Plates {
                    m,
                    layers,
                    l,
                    separation,
                    output,
                } => {
                    cfg.plate_dims.l = l;
                    cfg.plate_dims.separation = separation;
                    (MeshSource::Plates { m, layers }, output)
                }
                GenShape::Fib { level, body, output } => (
                    MeshSource::Fib {
                        level,
                        body: match body {
                            BodyArg::SphereLike => radcav::mesh::generators::BodyKind::SphereLike,
                            BodyArg::Cube => radcav::mesh::generators::BodyKind::Cube,
                        },
                    },
                    output,
                ),
            };
            let n_facets = cmd_gen_mesh(&source, &cfg, &out)?;
            println!("wrote {} ({n_facets} cavity facets)", out.display());
        }
        Command::Run { config, set } => {
            let cfg = SimulationConfig::load_with_overrides(&config, &set)?;
            let artifacts = cmd_run(&cfg)?;
            println!(
                "run finished: {} steps, outputs in {}",
                artifacts.series.records.len(),
                cfg.output_dir.display()
            );
        }
        Command::Compare { config, eps, set } => {
            let cfg = SimulationConfig::load_with_overrides(&config, &set)?;
            let path = cmd_compare(&cfg, &eps)?;
            println!("wrote {}", path.display());
        }
        Command::BlockImage {
            config,
            leaf_size,
            output,
            set,
        } => {
            let cfg = SimulationConfig::load_with_overrides(&config, &set)?;
            cmd_block_image(&cfg, leaf_size, &output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
