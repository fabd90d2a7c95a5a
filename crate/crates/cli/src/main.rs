//! `qmeta`: experiment recipes for the metasurface imaging simulator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_bell, cmd_hologram, cmd_image, cmd_mask, cmd_sweep, Failure, Outputs};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "qmeta", version, about = "Heralded and entangled-photon metasurface imaging simulator")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StateArgs {
    /// pure | mixed | s2.5 | s1.6
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Star/triangle mask PGMs and slit layout.
    Mask {
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        swap: bool,
    },
    /// Expected and Monte Carlo coincidence images for one configuration.
    Image {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, allow_hyphen_values = true)]
        phi_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        xi_deg: Option<f64>,
        #[arg(long)]
        pairs: Option<u64>,
        /// Skip the Monte Carlo frame.
        #[arg(long)]
        analytic_only: bool,
    },
    /// Visibility versus herald analyzer angle.
    Sweep {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, allow_hyphen_values = true)]
        xi_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        start_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        stop_deg: Option<f64>,
        #[arg(long)]
        step_deg: Option<f64>,
        #[arg(long)]
        pairs: Option<u64>,
        #[arg(long)]
        no_mc: bool,
    },
    /// Bell parameter: optimum, calibration and counted estimate.
    Bell {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        pairs: Option<u64>,
    },
    /// Hologram design, encoding and imaging in both polarizations.
    Hologram {
        /// Target PGM.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        z_um: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
}

fn apply_preset(cfg: &mut ExperimentConfig, state: &StateArgs) {
    if let Some(p) = &state.preset {
        cfg.state.preset = Some(p.clone());
        cfg.state.lambda = None;
        cfg.state.v = None;
    }
}

fn run(cli: Cli) -> Result<(Outputs, PathBuf), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    match &cli.command {
        Command::Mask { rows, cols, swap } => {
            cfg.mask.rows = rows.unwrap_or(cfg.mask.rows);
            cfg.mask.cols = cols.unwrap_or(cfg.mask.cols);
            cfg.mask.swap |= swap;
        }
        Command::Image {
            state,
            phi_deg,
            xi_deg,
            pairs,
            ..
        } => {
            apply_preset(&mut cfg, state);
            cfg.angles.phi_deg = phi_deg.unwrap_or(cfg.angles.phi_deg);
            cfg.angles.xi_deg = xi_deg.unwrap_or(cfg.angles.xi_deg);
            cfg.detector.pairs = pairs.unwrap_or(cfg.detector.pairs);
        }
        Command::Sweep {
            state,
            xi_deg,
            start_deg,
            stop_deg,
            step_deg,
            pairs,
            no_mc,
        } => {
            apply_preset(&mut cfg, state);
            cfg.angles.xi_deg = xi_deg.unwrap_or(cfg.angles.xi_deg);
            cfg.sweep.start_deg = start_deg.unwrap_or(cfg.sweep.start_deg);
            cfg.sweep.stop_deg = stop_deg.unwrap_or(cfg.sweep.stop_deg);
            cfg.sweep.step_deg = step_deg.unwrap_or(cfg.sweep.step_deg);
            cfg.detector.pairs = pairs.unwrap_or(cfg.detector.pairs);
            if *no_mc {
                cfg.sweep.monte_carlo = false;
            }
        }
        Command::Bell { state, pairs } => {
            apply_preset(&mut cfg, state);
            cfg.detector.pairs = pairs.unwrap_or(cfg.detector.pairs);
        }
        Command::Hologram {
            target,
            z_um,
            iterations,
        } => {
            if target.is_some() {
                cfg.hologram.target = target.clone();
            }
            cfg.hologram.z_um = z_um.unwrap_or(cfg.hologram.z_um);
            cfg.hologram.iterations = iterations.unwrap_or(cfg.hologram.iterations);
        }
    }
    cfg.validate().map_err(Failure::Config)?;

    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }

    let outputs = match cli.command {
        Command::Mask { .. } => cmd_mask(&cfg)?,
        Command::Image { analytic_only, .. } => cmd_image(&cfg, analytic_only)?,
        Command::Sweep { .. } => cmd_sweep(&cfg)?,
        Command::Bell { .. } => cmd_bell(&cfg)?,
        Command::Hologram { .. } => cmd_hologram(&cfg)?,
    };
    Ok((outputs, cfg.output.dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli).and_then(|(outputs, dir)| {
        outputs
            .write_all(&dir)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
        Ok((outputs, dir))
    });
    match result {
        Ok((outputs, dir)) => {
            for (name, _) in &outputs.0 {
                println!("{}", dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
