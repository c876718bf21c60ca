use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fput::{Error, Result};
use fput_cli::config::Config;
use fput_cli::pipeline::{self, Run, DEFAULT_OUTPUT_DIR};
use fput_cli::{error_line, exit_code};

#[derive(Parser)]
#[command(name = "fput", version, about = "Classical and quantum phase-space pipelines for the three-particle FPUT model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    group: Group,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.output`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set model.hbar=0.01`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Energy shortcut: the classical energy, window centre or stats energy,
    /// depending on the command (transport: the energy list).
    #[arg(short = 'E', long = "energy", global = true, allow_hyphen_values = true)]
    energy: Option<String>,
    /// Seed for every random choice (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Group {
    /// Classical dynamics.
    #[command(subcommand)]
    Classical(ClassicalCmd),
    /// Spectra and densities of states.
    #[command(subcommand)]
    Quantum(QuantumCmd),
    /// Husimi sections and projections of eigenstates.
    #[command(subcommand)]
    Husimi(HusimiCmd),
    /// Localization and overlap statistics.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Render field files.
    #[command(subcommand)]
    Render(RenderCmd),
}

#[derive(Subcommand)]
enum ClassicalCmd {
    /// Poincare section points of a set of orbits.
    Sos,
    /// SALI chaos map of the section.
    SaliMap,
    /// Ensemble transport times.
    Transport,
}

#[derive(Subcommand)]
enum QuantumCmd {
    /// Eigenvalues in a window (or the full spectrum).
    Eigs,
    /// Semiclassical density of states.
    Dos,
}

#[derive(Subcommand)]
enum HusimiCmd {
    /// Quantum surfaces of section.
    Qsos,
    /// Energy-shell projections over (q2, p2).
    ProjectShell,
    /// Energy-shell projections over configuration space.
    ProjectConfig,
    /// Complete projections over (q2, p2).
    ProjectComplete,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Overlap index M per state.
    MIndex,
    /// Entropy localization measures, with optional random-state baseline.
    Elm,
    /// Beta fit of the chaotic-state ELM distribution.
    BetaFit,
    /// Mixed-state fraction against hbar with a power-law fit.
    MixedFraction,
}

#[derive(Subcommand)]
enum RenderCmd {
    /// SVG heatmap of a field file.
    FieldToSvg,
}

impl Group {
    fn command(&self) -> (&'static str, &'static str) {
        match self {
            Group::Classical(c) => ("classical", match c {
                ClassicalCmd::Sos => "sos",
                ClassicalCmd::SaliMap => "sali-map",
                ClassicalCmd::Transport => "transport",
            }),
            Group::Quantum(c) => ("quantum", match c {
                QuantumCmd::Eigs => "eigs",
                QuantumCmd::Dos => "dos",
            }),
            Group::Husimi(c) => ("husimi", match c {
                HusimiCmd::Qsos => "qsos",
                HusimiCmd::ProjectShell => "project-shell",
                HusimiCmd::ProjectConfig => "project-config",
                HusimiCmd::ProjectComplete => "project-complete",
            }),
            Group::Stats(c) => ("stats", match c {
                StatsCmd::MIndex => "m-index",
                StatsCmd::Elm => "elm",
                StatsCmd::BetaFit => "beta-fit",
                StatsCmd::MixedFraction => "mixed-fraction",
            }),
            Group::Render(_) => ("render", "field-to-svg"),
        }
    }
}

/// Configuration key the `-E` shortcut sets for a command.
fn energy_key(group: &str, cmd: &str) -> &'static str {
    match (group, cmd) {
        ("classical", "transport") => "transport.energies",
        ("classical", _) => "classical.energy",
        ("stats", _) => "stats.energy",
        _ => "window.center",
    }
}

fn execute(cli: Cli) -> Result<Vec<String>> {
    let (group, cmd) = cli.group.command();
    let mut cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &cli.common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override '{o}' must have the form section.key=value")))?;
        cfg.set(k, v)?;
    }
    if let Some(e) = &cli.common.energy {
        cfg.set(energy_key(group, cmd), e)?;
    }
    if let Some(s) = cli.common.seed {
        cfg.set("run.seed", &s.to_string())?;
    }
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| cfg.get("run", "output").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let command = format!("{group} {cmd}");
    let mut run = Run::new(&command, cfg, out)?;
    pipeline::run(&command, &mut run)?;
    Ok(run.notes)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(notes) => {
            for n in notes {
                eprintln!("fput: {n}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
