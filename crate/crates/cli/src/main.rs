use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod output;

use error::{CliError, EXIT_CONFIG};

/// Simulator for transmons coupled to a rectangular waveguide.
#[derive(Debug, Parser)]
#[command(name = "wqed", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file, or the name of a bundled fixture.
    #[arg(long, global = true, default_value = "ideal_identical.cfg")]
    pub config: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Levels per transmon.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Cap on total excitation number.
    #[arg(long, global = true, conflicts_with = "full_space")]
    pub max_excitation: Option<usize>,
    /// Keep the full product space.
    #[arg(long, global = true)]
    pub full_space: bool,
    /// Emulate projective readout with this many shots per point (0: exact populations).
    #[arg(long, global = true, default_value_t = 0)]
    pub shots: u64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenstates of the effective Hamiltonian.
    Spectrum {
        /// Leave pure dephasing out of the non-hermitian part.
        #[arg(long)]
        no_dephasing: bool,
    },
    /// Weak-probe transmission through the waveguide.
    Transmission {
        #[arg(long = "start-GHz")]
        start_ghz: Option<f64>,
        #[arg(long = "stop-GHz")]
        stop_ghz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Probe amplitude relative to the default weak probe.
        #[arg(long)]
        probe_scale: Option<f64>,
    },
    /// Ground-state population after a gaussian pulse versus amplitude and sideport phase.
    Rabi {
        #[arg(long = "amp-max-MHz")]
        amp_max_mhz: Option<f64>,
        #[arg(long)]
        amps: Option<usize>,
        #[arg(long)]
        phases: Option<usize>,
        #[arg(long = "duration-ns")]
        duration_ns: Option<f64>,
    },
    /// Pi-pulse calibration followed by free decay of the dark state.
    T1 {
        #[arg(long = "max-delay-us")]
        max_delay_us: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long = "duration-ns")]
        duration_ns: Option<f64>,
    },
    /// Detuned Ramsey fringes of the dark state.
    Ramsey {
        #[arg(long = "detuning-MHz")]
        detuning_mhz: Option<f64>,
        #[arg(long = "max-delay-us")]
        max_delay_us: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long = "pulse-ns")]
        pulse_ns: Option<f64>,
    },
    /// Spectroscopy of the second manifold starting from the dark state.
    Spectroscopy {
        /// Sweep start relative to the dark-state transition.
        #[arg(long = "start-MHz", allow_hyphen_values = true)]
        start_mhz: Option<f64>,
        #[arg(long = "stop-MHz", allow_hyphen_values = true)]
        stop_mhz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        phases: Option<usize>,
        #[arg(long = "duration-ns")]
        duration_ns: Option<f64>,
        #[arg(long = "amp-MHz")]
        amp_mhz: Option<f64>,
        /// Probe power ratio between the pair members.
        #[arg(long)]
        power_ratio: Option<f64>,
    },
    /// Lifetime of the longest-lived single excitation versus common transmon frequency.
    LifetimeSweep {
        #[arg(long = "span-MHz")]
        span_mhz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Dark-state Rabi oscillations, purity and leakage versus waveguide coupling.
    PurityScan {
        #[arg(long = "gammas-MHz", value_delimiter = ',')]
        gammas_mhz: Vec<f64>,
        #[arg(long = "amps-MHz", value_delimiter = ',')]
        amps_mhz: Vec<f64>,
        #[arg(long = "duration-us")]
        duration_us: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Single pulse from the ground state, sampled in time, for each sideport phase.
    Evolve {
        #[arg(long = "phases-rad", value_delimiter = ',', allow_hyphen_values = true)]
        phases_rad: Vec<f64>,
        #[arg(long = "amp-MHz")]
        amp_mhz: Option<f64>,
        #[arg(long = "duration-ns")]
        duration_ns: Option<f64>,
        /// Use a rectangular instead of a gaussian envelope.
        #[arg(long)]
        rectangular: bool,
        /// End of the sampled window.
        #[arg(long = "t-max-ns")]
        t_max_ns: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Closed-form coherence times, adiabatic elimination and the decoherence-free frequency.
    Oracle {
        #[arg(long = "drive-MHz")]
        drive_mhz: Option<f64>,
        #[arg(long = "detuning-MHz", allow_hyphen_values = true)]
        detuning_mhz: Option<f64>,
        #[arg(long = "gamma-f-MHz")]
        gamma_f_mhz: Option<f64>,
        /// Points of the decay-ratio sweep written to CSV.
        #[arg(long)]
        points: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
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

fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(CliError::Argument("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Argument(e.to_string()))?;
    pool.install(|| commands::dispatch(&cli))
}
