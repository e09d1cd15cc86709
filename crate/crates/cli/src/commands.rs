use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde_json::json;

use wqed::config::{load_config, ConfigFile};
use wqed::dynamics::{evolve, DensityState, Observable, PulseEnvelope, PulseSequence};
use wqed::experiments::*;
use wqed::fockspace::DEFAULT_LEVELS;
use wqed::integrator::IntegratorSettings;
use wqed::model::{effective_hamiltonian, gradient_ratio_for_power_ratio, SystemConfig};
use wqed::oracle::{adiabatic_elimination, t1_rate, t2_rate};
use wqed::spectra::{identify_named_states, spectrum};

use crate::error::CliError;
use crate::output::{num, OutputSet};
use crate::{Cli, Command};

const MHZ: f64 = 2.0 * PI * 1e6;
const GHZ: f64 = 2.0 * PI * 1e9;

struct Context<'a> {
    cli: &'a Cli,
    file: ConfigFile,
    settings: IntegratorSettings,
    out: OutputSet,
    rng: ChaCha8Rng,
}

impl Context<'_> {
    fn system(&self) -> &SystemConfig {
        &self.file.system
    }

    fn lookup(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.file.experiment.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(n)) => Ok(Some(*n as f64)),
            Some(v) => Err(wqed::Error::Config {
                path: format!("experiment.{key}"),
                msg: format!("expected a number, found {}", v.type_str()),
            }
            .into()),
        }
    }

    /// Command-line value, else `[experiment]` entry, else `default`.
    fn param(&self, flag: Option<f64>, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        })
    }

    fn count(&self, flag: Option<usize>, key: &str, default: usize) -> Result<usize, CliError> {
        let n = match flag {
            Some(v) => v,
            None => match self.lookup(key)? {
                Some(x) if x >= 0.0 && x.fract() == 0.0 => x as usize,
                Some(x) => {
                    return Err(wqed::Error::Config {
                        path: format!("experiment.{key}"),
                        msg: format!("expected a non-negative integer, found {x}"),
                    }
                    .into())
                }
                None => default,
            },
        };
        if n == 0 {
            return Err(CliError::Argument(format!("{key} must be at least 1")));
        }
        Ok(n)
    }

    fn list(&self, flag: &[f64], key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match self.file.experiment.get(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(n) => Ok(*n as f64),
                    _ => Err(wqed::Error::Config {
                        path: format!("experiment.{key}"),
                        msg: "expected an array of numbers".into(),
                    }
                    .into()),
                })
                .collect(),
            Some(_) => Err(wqed::Error::Config {
                path: format!("experiment.{key}"),
                msg: "expected an array of numbers".into(),
            }
            .into()),
        }
    }

    fn truncation(&self, default_cap: Option<usize>) -> Result<Truncation, CliError> {
        let g = &self.cli.global;
        let levels = match g.levels {
            Some(l) => l,
            None => self.lookup("levels")?.map_or(DEFAULT_LEVELS, |x| x as usize),
        };
        let cap = if g.full_space {
            None
        } else {
            match g.max_excitation {
                Some(m) => Some(m),
                None => self.lookup("max_excitation")?.map(|x| x as usize).or(default_cap),
            }
        };
        Ok(Truncation {
            levels,
            max_excitation: cap,
        })
    }

    /// Projective-readout estimate of a population, or the population itself without shots.
    fn readout(&mut self, p: f64) -> Option<f64> {
        let shots = self.cli.global.shots;
        if shots == 0 {
            return None;
        }
        let b = Binomial::new(shots, p.clamp(0.0, 1.0)).expect("probability clamped to [0, 1]");
        Some(b.sample(&mut self.rng) as f64 / shots as f64)
    }

    fn with_shots(&mut self, header: &mut Vec<&'static str>, rows: &mut [Vec<String>], population_column: usize) {
        if self.cli.global.shots == 0 {
            return;
        }
        header.push("P_shots");
        for r in rows.iter_mut() {
            let p: f64 = r[population_column].parse().unwrap_or(0.0);
            let s = self.readout(p).unwrap_or(p);
            r.push(num(s));
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let file = load_config(&g.config)?;
    let mut settings = IntegratorSettings::default();
    if let Some(r) = g.rtol {
        settings.rtol = r;
    }
    if let Some(a) = g.atol {
        settings.atol = a;
    }
    settings.validate()?;
    let name = subcommand_name(&cli.command);
    let out = OutputSet::new(&g.out_dir, name, &g.config.display().to_string(), file.source.as_bytes())?;
    let mut ctx = Context {
        cli,
        file,
        settings,
        out,
        rng: ChaCha8Rng::seed_from_u64(g.seed),
    };
    match &cli.command {
        Command::Spectrum { no_dephasing } => spectrum_cmd(&mut ctx, !no_dephasing)?,
        Command::Transmission {
            start_ghz,
            stop_ghz,
            points,
            probe_scale,
        } => transmission_cmd(&mut ctx, *start_ghz, *stop_ghz, *points, *probe_scale)?,
        Command::Rabi {
            amp_max_mhz,
            amps,
            phases,
            duration_ns,
        } => rabi_cmd(&mut ctx, *amp_max_mhz, *amps, *phases, *duration_ns)?,
        Command::T1 {
            max_delay_us,
            points,
            duration_ns,
        } => t1_cmd(&mut ctx, *max_delay_us, *points, *duration_ns)?,
        Command::Ramsey {
            detuning_mhz,
            max_delay_us,
            points,
            pulse_ns,
        } => ramsey_cmd(&mut ctx, *detuning_mhz, *max_delay_us, *points, *pulse_ns)?,
        Command::Spectroscopy {
            start_mhz,
            stop_mhz,
            points,
            phases,
            duration_ns,
            amp_mhz,
            power_ratio,
        } => spectroscopy_cmd(
            &mut ctx,
            [*start_mhz, *stop_mhz, *duration_ns, *amp_mhz, *power_ratio],
            *points,
            *phases,
        )?,
        Command::LifetimeSweep { span_mhz, points } => lifetime_cmd(&mut ctx, *span_mhz, *points)?,
        Command::PurityScan {
            gammas_mhz,
            amps_mhz,
            duration_us,
            points,
        } => purity_cmd(&mut ctx, gammas_mhz, amps_mhz, *duration_us, *points)?,
        Command::Evolve {
            phases_rad,
            amp_mhz,
            duration_ns,
            rectangular,
            t_max_ns,
            points,
        } => evolve_cmd(&mut ctx, phases_rad, [*amp_mhz, *duration_ns, *t_max_ns], *rectangular, *points)?,
        Command::Oracle {
            drive_mhz,
            detuning_mhz,
            gamma_f_mhz,
            points,
        } => oracle_cmd(&mut ctx, *drive_mhz, *detuning_mhz, *gamma_f_mhz, *points)?,
    }
    let manifest = ctx.out.finish()?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum { .. } => "spectrum",
        Command::Transmission { .. } => "transmission",
        Command::Rabi { .. } => "rabi",
        Command::T1 { .. } => "t1",
        Command::Ramsey { .. } => "ramsey",
        Command::Spectroscopy { .. } => "spectroscopy",
        Command::LifetimeSweep { .. } => "lifetime-sweep",
        Command::PurityScan { .. } => "purity-scan",
        Command::Evolve { .. } => "evolve",
        Command::Oracle { .. } => "oracle",
    }
}

fn spectrum_cmd(ctx: &mut Context, dephasing: bool) -> Result<(), CliError> {
    let mut cfg = ctx.system().clone();
    cfg.frame = 0.0;
    let space = ctx.truncation(None)?.space(cfg.n_sites())?;
    let h = effective_hamiltonian(&cfg, &space, dephasing)?;
    let mut spec = spectrum(&h, &space)?;
    let mut names = vec![String::new(); spec.states.len()];
    if cfg.n_sites() == 4 && space.max_excitation().is_none_or(|m| m >= 2) {
        match identify_named_states(&mut spec, &space, None) {
            Ok(named) => {
                for (name, s) in &named.states {
                    names[s.index] = name.clone();
                }
            }
            Err(e) => log::warn!("collective state names unavailable: {e}"),
        }
    }
    let rows: Vec<Vec<String>> = spec
        .states
        .iter()
        .map(|s| {
            vec![
                s.label.to_string(),
                s.manifold.to_string(),
                num(s.energy / GHZ),
                num(s.decay / MHZ),
                s.pair_symmetry.as_str().to_string(),
                s.within_pair_symmetry.as_str().to_string(),
                names[s.label].clone(),
            ]
        })
        .collect();
    ctx.out.csv(
        "spectrum.csv",
        &[
            "label",
            "manifold",
            "E_over_2pi_GHz",
            "Gamma_over_2pi_MHz",
            "pair_symmetry",
            "within_pair_symmetry",
            "name",
        ],
        &rows,
    )?;
    ctx.out.json(
        "spectrum.json",
        &json!({
            "states": spec.states.len(),
            "manifold_sizes": space.manifold_sizes(),
            "defective": spec.any_defective(),
        }),
    )?;
    Ok(())
}

fn transmission_cmd(
    ctx: &mut Context,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
    probe_scale: Option<f64>,
) -> Result<(), CliError> {
    let cfg = ctx.system().clone();
    let trunc = ctx.truncation(Some(2))?;
    let space = trunc.space(cfg.n_sites())?;
    let mut lab = cfg.clone();
    lab.frame = 0.0;
    let spec = spectrum(&effective_hamiltonian(&lab, &space, true)?, &space)?;
    let bright = spec
        .manifold_states(1)
        .max_by(|a, b| a.decay.total_cmp(&b.decay))
        .ok_or_else(|| CliError::Argument("no single-excitation states".into()))?;
    let (w0, width) = (bright.energy, bright.decay.max(MHZ));
    let start = ctx.param(start, "start_GHz", (w0 - 5.0 * width) / GHZ)? * GHZ;
    let stop = ctx.param(stop, "stop_GHz", (w0 + 5.0 * width) / GHZ)? * GHZ;
    let n = ctx.count(points, "points", 81)?;
    let probe = ctx.param(probe_scale, "probe_scale", 1.0)? * default_probe_amplitude(&cfg);
    let freqs = linspace(start, stop, n);
    ctx.out.axis("frequency", "GHz", &freqs.iter().map(|w| w / GHZ).collect::<Vec<_>>());
    let t = transmission_spectrum(&cfg, trunc, &freqs, probe, &ctx.settings)?;
    let rows: Vec<Vec<String>> = t
        .frequencies
        .iter()
        .zip(&t.amplitude)
        .map(|(w, a)| vec![num(w / GHZ), num(a.re), num(a.im), num(a.norm_sqr()), num(a.arg())])
        .collect();
    ctx.out
        .csv("transmission.csv", &["f_GHz", "t_re", "t_im", "power", "phase_rad"], &rows)?;
    let fit = t.fit_dip();
    let summary = match &fit {
        Ok(f) => json!({
            "center_GHz": f.center / GHZ,
            "fwhm_over_2pi_MHz": f.fwhm / MHZ,
            "depth": f.depth,
            "baseline": f.baseline,
            "fit_rms": f.report.rms,
            "fit_flagged": f.report.flagged,
            "max_occupation": t.max_occupation,
            "probe_sqrt_rad_per_s": probe,
        }),
        Err(e) => json!({ "fit_error": e.to_string(), "max_occupation": t.max_occupation }),
    };
    ctx.out.json("transmission.json", &summary)?;
    Ok(())
}

fn rabi_cmd(
    ctx: &mut Context,
    amp_max: Option<f64>,
    amps: Option<usize>,
    phases: Option<usize>,
    duration: Option<f64>,
) -> Result<(), CliError> {
    let amp_max = ctx.param(amp_max, "amp_max_MHz", 4.0)? * MHZ;
    let n_amp = ctx.count(amps, "amps", 21)?;
    let n_phase = ctx.count(phases, "phases", 13)?;
    let duration = ctx.param(duration, "duration_ns", DEFAULT_PULSE_LENGTH * 1e9)? * 1e-9;
    let amplitudes = linspace(0.0, amp_max, n_amp);
    let phase_axis = linspace(0.0, 2.0 * PI, n_phase);
    ctx.out.axis("phase", "rad", &phase_axis);
    ctx.out.axis("Omega_over_2pi", "MHz", &amplitudes.iter().map(|a| a / MHZ).collect::<Vec<_>>());
    let sys = DrivenSystem::new(ctx.system(), ctx.truncation(Some(3))?, &ctx.settings)?;
    let map = rabi_map(&sys, &amplitudes, &phase_axis, duration)?;
    let mut rows = vec![];
    for (i, p) in map.phases.iter().enumerate() {
        for (k, a) in map.amplitudes.iter().enumerate() {
            rows.push(vec![num(*p), num(a / MHZ), num(map.ground_population[i][k])]);
        }
    }
    let mut header = vec!["phase_rad", "Omega_over_2pi_MHz", "P_G"];
    ctx.with_shots(&mut header, &mut rows, 2);
    ctx.out.csv("rabi_map.csv", &header, &rows)?;
    ctx.out.json(
        "rabi_map.json",
        &json!({
            "duration_ns": duration * 1e9,
            "dark_frequency_GHz": sys.dark_frequency / GHZ,
            "area_pi_amplitude_over_2pi_MHz": PulseEnvelope::gaussian(duration, 1.0).with_area(PI / 2.0).amplitude / MHZ,
        }),
    )?;
    Ok(())
}

fn t1_cmd(ctx: &mut Context, max_delay: Option<f64>, points: Option<usize>, duration: Option<f64>) -> Result<(), CliError> {
    let max_delay = ctx.param(max_delay, "max_delay_us", 12.0)? * 1e-6;
    let n = ctx.count(points, "points", 40)?;
    let duration = ctx.param(duration, "duration_ns", DEFAULT_PULSE_LENGTH * 1e9)? * 1e-9;
    let sys = DrivenSystem::new(ctx.system(), ctx.truncation(Some(3))?, &ctx.settings)?;
    let pi = calibrate_pi_pulse(&sys, duration)?;
    let delays = linspace(0.05e-6_f64.min(max_delay / 10.0), max_delay, n);
    ctx.out.axis("delay", "us", &delays.iter().map(|d| d * 1e6).collect::<Vec<_>>());
    let r = t1_experiment(&sys, &pi, &delays)?;
    let mut rows: Vec<Vec<String>> = r
        .delays
        .iter()
        .zip(&r.excited)
        .map(|(d, p)| vec![num(d * 1e6), num(*p)])
        .collect();
    let mut header = vec!["delay_us", "excited_population"];
    ctx.with_shots(&mut header, &mut rows, 1);
    ctx.out.csv("t1.csv", &header, &rows)?;
    ctx.out.json(
        "t1.json",
        &json!({
            "T1_us": r.fit.time_constant * 1e6,
            "T1_closed_form_us": r.predicted.map(|t| t * 1e6),
            "relative_error": r.relative_error(),
            "fit_rms": r.fit.report.rms,
            "fit_flagged": r.fit.report.flagged,
            "pi_amplitude_over_2pi_MHz": pi.envelope.amplitude / MHZ,
            "area_pi_amplitude_over_2pi_MHz": pi.area_amplitude / MHZ,
            "pi_min_ground_population": pi.min_ground_population,
        }),
    )?;
    Ok(())
}

fn ramsey_cmd(
    ctx: &mut Context,
    detuning: Option<f64>,
    max_delay: Option<f64>,
    points: Option<usize>,
    pulse: Option<f64>,
) -> Result<(), CliError> {
    let detuning = ctx.param(detuning, "detuning_MHz", 9.0)? * MHZ;
    let max_delay = ctx.param(max_delay, "max_delay_us", 2.0)? * 1e-6;
    let n = ctx.count(points, "points", 201)?;
    let pulse = ctx.param(pulse, "pulse_ns", 30.0)? * 1e-9;
    let delays = linspace(0.0, max_delay, n);
    ctx.out.axis("delay", "us", &delays.iter().map(|d| d * 1e6).collect::<Vec<_>>());
    let r = ramsey_experiment(
        ctx.system(),
        ctx.truncation(Some(3))?,
        detuning,
        ramsey_pulse(pulse),
        &delays,
        &ctx.settings,
    )?;
    let mut rows: Vec<Vec<String>> = (0..r.delays.len())
        .map(|k| vec![num(r.delays[k] * 1e6), num(r.ground_in_phase[k]), num(r.signal[k])])
        .collect();
    let mut header = vec!["delay_us", "P_G", "phase_cycled_signal"];
    ctx.with_shots(&mut header, &mut rows, 1);
    ctx.out.csv("ramsey.csv", &header, &rows)?;
    ctx.out.json(
        "ramsey.json",
        &json!({
            "detuning_over_2pi_MHz": detuning / MHZ,
            "fitted_frequency_MHz": r.fit.frequency / 1e6,
            "T2_us": r.fit.time_constant * 1e6,
            "T2_closed_form_us": r.predicted_t2.map(|t| t * 1e6),
            "fit_rms": r.fit.report.rms,
            "fit_flagged": r.fit.report.flagged,
        }),
    )?;
    Ok(())
}

fn spectroscopy_cmd(
    ctx: &mut Context,
    values: [Option<f64>; 5],
    points: Option<usize>,
    phases: Option<usize>,
) -> Result<(), CliError> {
    let [start, stop, duration, amp, ratio] = values;
    let start = ctx.param(start, "start_MHz", -400.0)? * MHZ;
    let stop = ctx.param(stop, "stop_MHz", 200.0)? * MHZ;
    let n = ctx.count(points, "points", 31)?;
    let n_phase = ctx.count(phases, "phases", 5)?;
    let probe = SpectroscopyPulse {
        duration: ctx.param(duration, "duration_ns", DEFAULT_SPECTROSCOPY_LENGTH * 1e9)? * 1e-9,
        amplitude: ctx.param(amp, "amp_MHz", 1.0)? * MHZ,
        gradient_ratio: gradient_ratio_for_power_ratio(ctx.param(ratio, "power_ratio", SPECTROSCOPY_POWER_RATIO)?),
    };
    let sys = DrivenSystem::new(ctx.system(), ctx.truncation(Some(3))?, &ctx.settings)?;
    let pi = calibrate_pi_pulse(&sys, DEFAULT_PULSE_LENGTH)?;
    let freqs: Vec<f64> = linspace(start, stop, n).iter().map(|d| sys.dark_frequency + d).collect();
    let phase_axis = linspace(0.0, 2.0 * PI, n_phase);
    ctx.out.axis("phase", "rad", &phase_axis);
    ctx.out.axis("frequency", "GHz", &freqs.iter().map(|w| w / GHZ).collect::<Vec<_>>());
    let map = spectroscopy_second_manifold(&sys, &pi, &freqs, &phase_axis, probe)?;
    let mut rows = vec![];
    for (i, p) in map.phases.iter().enumerate() {
        for (k, w) in map.frequencies.iter().enumerate() {
            rows.push(vec![num(*p), num(w / GHZ), num(map.ground_population[i][k])]);
        }
    }
    let mut header = vec!["phase_rad", "f_GHz", "P_G"];
    ctx.with_shots(&mut header, &mut rows, 2);
    ctx.out.csv("spectroscopy.csv", &header, &rows)?;
    ctx.out.json(
        "spectroscopy.json",
        &json!({
            "dark_frequency_GHz": map.dark_frequency / GHZ,
            "probe_duration_ns": probe.duration * 1e9,
            "probe_amplitude_over_2pi_MHz": probe.amplitude / MHZ,
            "gradient_ratio": probe.gradient_ratio,
            "pi_amplitude_over_2pi_MHz": pi.envelope.amplitude / MHZ,
        }),
    )?;
    Ok(())
}

fn lifetime_cmd(ctx: &mut Context, span: Option<f64>, points: Option<usize>) -> Result<(), CliError> {
    let cfg = ctx.system().clone();
    let w0 = cfg.geometry.decoherence_free_frequency()?;
    let span = ctx.param(span, "span_MHz", 200.0)? * MHZ;
    let n = ctx.count(points, "points", 21)?;
    let freqs = linspace(w0 - span, w0 + span, n);
    ctx.out.axis("frequency", "GHz", &freqs.iter().map(|w| w / GHZ).collect::<Vec<_>>());
    let sweep = lifetime_vs_frequency(&cfg, ctx.truncation(Some(3))?, &freqs, &ctx.settings)?;
    let rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| vec![num(p.frequency / GHZ), num(p.t1 * 1e6), num(1e6 / p.eigen_decay)])
        .collect();
    ctx.out
        .csv("lifetime_sweep.csv", &["f_GHz", "T1_us", "T1_from_spectrum_us"], &rows)?;
    let best = sweep.argmax().map(|p| p.frequency / GHZ);
    ctx.out.json(
        "lifetime_sweep.json",
        &json!({
            "decoherence_free_frequency_GHz": w0 / GHZ,
            "argmax_GHz": best,
            "grid_step_MHz": if n > 1 { 2.0 * span / (n - 1) as f64 / MHZ } else { 0.0 },
        }),
    )?;
    Ok(())
}

fn purity_cmd(
    ctx: &mut Context,
    gammas: &[f64],
    amps: &[f64],
    duration: Option<f64>,
    points: Option<usize>,
) -> Result<(), CliError> {
    let gammas: Vec<f64> = ctx.list(gammas, "gammas_MHz", &[14.0, 56.0, 197.0])?.iter().map(|g| g * MHZ).collect();
    let amps: Vec<f64> = ctx.list(amps, "amps_MHz", &[5.0])?.iter().map(|a| a * MHZ).collect();
    let duration = ctx.param(duration, "duration_us", 1.0)? * 1e-6;
    let n = ctx.count(points, "points", 201)?;
    let times = linspace(0.0, duration, n);
    ctx.out.axis("gamma_over_2pi", "MHz", &gammas.iter().map(|g| g / MHZ).collect::<Vec<_>>());
    ctx.out.axis("Omega_over_2pi", "MHz", &amps.iter().map(|a| a / MHZ).collect::<Vec<_>>());
    ctx.out.axis("time", "us", &times.iter().map(|t| t * 1e6).collect::<Vec<_>>());
    let traces = purity_leakage_scan(ctx.system(), ctx.truncation(Some(3))?, &gammas, &amps, &times, &ctx.settings)?;
    let mut rows = vec![];
    let mut summary = vec![];
    for tr in &traces {
        for k in 0..tr.times.len() {
            rows.push(vec![
                num(tr.gamma / MHZ),
                num(tr.amplitude / MHZ),
                num(tr.times[k] * 1e6),
                num(tr.dark_population[k]),
                num(tr.ground_population[k]),
                num(tr.purity[k]),
            ]);
        }
        summary.push(json!({
            "gamma_over_2pi_MHz": tr.gamma / MHZ,
            "Omega_over_2pi_MHz": tr.amplitude / MHZ,
            "damping_rate_per_us": tr.damping_rate * 1e-6,
            "mean_purity_loss": tr.mean_purity_loss,
            "rabi_frequency_MHz": tr.fit.frequency / 1e6,
            "fit_rms": tr.fit.report.rms,
        }));
    }
    ctx.out.csv(
        "purity_scan.csv",
        &["gamma_over_2pi_MHz", "Omega_over_2pi_MHz", "t_us", "P_D3", "P_G", "purity"],
        &rows,
    )?;
    ctx.out.json("purity_scan.json", &summary)?;
    Ok(())
}

fn evolve_cmd(
    ctx: &mut Context,
    phases: &[f64],
    values: [Option<f64>; 3],
    rectangular: bool,
    points: Option<usize>,
) -> Result<(), CliError> {
    let [amp, duration, t_max] = values;
    let phases = ctx.list(phases, "phases_rad", &[0.0, PI])?;
    let amp = ctx.param(amp, "amp_MHz", 1.8)? * MHZ;
    let duration_ns = ctx.param(duration, "duration_ns", (DEFAULT_PULSE_LENGTH * 1e9).round())?;
    let duration = duration_ns * 1e-9;
    let t_max_ns = ctx.param(t_max, "t_max_ns", 2.0 * duration_ns)?;
    if !(t_max_ns > 0.0) {
        return Err(CliError::Argument("--t-max-ns must be positive".into()));
    }
    let n = ctx.count(points, "points", 101)?;
    let times_ns = linspace(0.0, t_max_ns, n);
    let times: Vec<f64> = times_ns.iter().map(|t| t * 1e-9).collect();
    ctx.out.axis("phase", "rad", &phases);
    ctx.out.axis("time", "ns", &times_ns);
    let sys = DrivenSystem::new(ctx.system(), ctx.truncation(Some(3))?, &ctx.settings)?;
    let envelope = if rectangular {
        PulseEnvelope::rectangular(duration, amp)
    } else {
        PulseEnvelope::gaussian(duration, amp)
    };
    let obs = [
        Observable::population("P_G", &sys.basis.ground),
        Observable::population("P_D3", &sys.basis.d3),
        Observable::population("P_B4", &sys.basis.b4),
        Observable::Purity,
        Observable::Trace,
    ];
    let runs: Vec<_> = phases
        .iter()
        .map(|&phase| {
            let mut seq = PulseSequence::new();
            let ch = seq.add_channel(&sys.drive(phase, 0.0)?);
            seq.append(envelope, 0.0, 0.0, ch)?;
            evolve(&sys.model, &seq, &DensityState::ground(&sys.space), &times, &obs, &sys.settings)
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec!["phase_rad", "t_ns"];
    header.extend(runs[0].columns.iter().map(|(name, _)| name.as_str()));
    let mut rows = vec![];
    for (phase, r) in phases.iter().zip(&runs) {
        for (k, t) in times_ns.iter().enumerate() {
            let mut row = vec![num(*phase), num(*t)];
            row.extend(r.columns.iter().map(|(_, c)| num(c[k])));
            rows.push(row);
        }
    }
    ctx.out.csv("evolve.csv", &header, &rows)?;
    let steps: Vec<usize> = runs.iter().map(|r| r.stats.accepted).collect();
    ctx.out.json(
        "evolve.json",
        &json!({
            "amplitude_over_2pi_MHz": amp / MHZ,
            "duration_ns": duration_ns,
            "envelope": if rectangular { "rectangular" } else { "gaussian" },
            "hilbert_dimension": sys.space.dim(),
            "accepted_steps": steps,
        }),
    )?;
    Ok(())
}

fn oracle_cmd(
    ctx: &mut Context,
    drive: Option<f64>,
    detuning: Option<f64>,
    gamma_f: Option<f64>,
    points: Option<usize>,
) -> Result<(), CliError> {
    let cfg = ctx.system().clone();
    let detuning = ctx.param(detuning, "detuning_MHz", 15.0)? * MHZ;
    let drive = ctx.param(drive, "drive_MHz", detuning.abs() / 20.0 / MHZ)? * MHZ;
    let gamma_f = ctx.param(gamma_f, "gamma_f_MHz", 2.0 * detuning.abs() / MHZ)? * MHZ;
    let n = ctx.count(points, "points", 61)?;
    let t0 = &cfg.transmons[0];
    let t1 = 1.0 / t1_rate(t0.gamma, t0.gamma_nr, t0.kappa_phi);
    let t2 = 1.0 / t2_rate(t0.gamma_nr, t0.kappa_phi, cfg.k_phi);
    let ae = adiabatic_elimination(drive, detuning, gamma_f)?;
    let w_df = cfg.geometry.decoherence_free_frequency().ok();
    let summary = json!({
        "T1_us": t1 * 1e6,
        "T2_us": t2 * 1e6,
        "decoherence_free_frequency_GHz": w_df.map(|w| w / GHZ),
        "adiabatic_elimination": {
            "drive_over_2pi_MHz": drive / MHZ,
            "detuning_over_2pi_MHz": detuning / MHZ,
            "gamma_f_over_2pi_MHz": gamma_f / MHZ,
            "stark_shift_over_2pi_MHz": ae.stark_shift / MHZ,
            "gamma_D_over_2pi_MHz": ae.dark_decay / MHZ,
            "gamma_D_peak_over_2pi_MHz": drive * drive / detuning.abs() / MHZ,
        },
    });
    let ratios: Vec<f64> = (0..n)
        .map(|k| if n == 1 { 1.0 } else { 10f64.powf(-1.0 + (1.0 + 20f64.log10()) * k as f64 / (n - 1) as f64) })
        .collect();
    ctx.out.axis("gamma_f_over_U", "1", &ratios);
    let mut rows = vec![];
    for r in &ratios {
        let e = adiabatic_elimination(drive, detuning, r * detuning.abs())?;
        rows.push(vec![num(*r), num(e.stark_shift / MHZ), num(e.dark_decay / MHZ)]);
    }
    ctx.out.csv(
        "oracle_sweep.csv",
        &["gamma_f_over_U", "stark_shift_over_2pi_MHz", "gamma_D_over_2pi_MHz"],
        &rows,
    )?;
    ctx.out.json("oracle.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("json values are finite"));
    Ok(())
}
