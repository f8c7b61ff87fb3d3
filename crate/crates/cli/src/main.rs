//! `meshlab`: compile, simulate and calibrate programmable Mach-Zehnder meshes.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Format;

#[derive(Parser)]
#[command(name = "meshlab", version, about = "Programmable Mach-Zehnder mesh toolkit")]
struct Cli {
    /// Master RNG seed, recorded in every output file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON file with default parameters; flags take precedence.
    #[arg(long, global = true, env = "MESHLAB_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a gate, unitary or lossy beam splitter into mesh settings.
    Compile(CompileArgs),
    /// Transfer matrix and optional Fock-state statistics of a settings file.
    Simulate(SimulateArgs),
    /// Two-photon coincidence scan over delay.
    Hom(HomArgs),
    /// Single-photon truth table and its fidelity against theory.
    TruthTable(TruthTableArgs),
    /// Calibrate a virtual Blass device from simulated photon counts.
    Calibrate(CalibrateArgs),
    /// Functional complexity of waveguide platforms versus bend radius.
    Complexity(ComplexityArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Triangular,
    Blass,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Poisson,
    Noiseless,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// X-gate as `d=<dim> n=<power>`.
    #[arg(long, num_args = 1..=2, value_name = "KEY=VALUE")]
    xgate: Option<Vec<String>>,
    /// JSON transfer matrix `{"rows", "cols", "entries": [[[re, im], ...], ...]}`.
    #[arg(long, value_name = "FILE")]
    unitary: Option<PathBuf>,
    /// Lossy beam splitter as `alpha=<rad>`.
    #[arg(long, value_name = "KEY=VALUE")]
    lossy_bs: Option<String>,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    target: Target,
    /// Mesh used for `--unitary`.
    #[arg(long, value_enum, default_value = "triangular")]
    topology: TopologyArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_name = "FILE")]
    settings: PathBuf,
    /// Photons per input mode, comma separated.
    #[arg(long, value_delimiter = ',')]
    photons: Option<Vec<usize>>,
    /// Evaluate on cells sampled from the fabrication model instead of ideal cells.
    #[arg(long)]
    fabricated: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct HomTarget {
    #[arg(long, value_name = "FILE")]
    settings: Option<PathBuf>,
    /// Lossy beam splitter as `alpha=<rad>`.
    #[arg(long, value_name = "KEY=VALUE")]
    lossy_bs: Option<String>,
}

#[derive(Args)]
struct HomArgs {
    #[command(flatten)]
    target: HomTarget,
    /// Input modes of the two photons, `a,b`.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    inputs: Vec<usize>,
    /// Output modes of the coincidence detectors, `a,b`.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    outputs: Vec<usize>,
    /// Source two-photon visibility.
    #[arg(long)]
    v_src: Option<f64>,
    /// Width of the overlap in delay units.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delay_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delay_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Convert probabilities to expected counts for this many pump pulses.
    #[arg(long)]
    pulses: Option<f64>,
}

#[derive(Args)]
struct TruthTableArgs {
    #[arg(long, value_name = "FILE")]
    settings: PathBuf,
    /// Compare against `X^N` instead of the settings on ideal cells.
    #[arg(long, value_name = "N")]
    expect_shift: Option<usize>,
    /// Measure on cells sampled from the fabrication model.
    #[arg(long)]
    fabricated: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Mesh dimension of the virtual device.
    #[arg(long)]
    d: Option<usize>,
    /// Voltage points per sweep.
    #[arg(long)]
    points: Option<usize>,
    /// Photons per point.
    #[arg(long)]
    shots: Option<f64>,
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Platform file; the bundled SOI, Si3N4 and doped silica table by default.
    #[arg(long, value_name = "FILE")]
    platforms: Option<PathBuf>,
    /// Smallest bend radius, in each platform's radius unit.
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
