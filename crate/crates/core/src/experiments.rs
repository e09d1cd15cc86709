//! Virtual experiments on the driven waveguide system: pi-pulse calibration,
//! Rabi maps, T1 and Ramsey sequences, second-manifold spectroscopy,
//! dark-pair lifetime sweeps, leakage/purity scans and weak-probe transmission.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    evolve, heisenberg_observable, DensityState, DriveChannel, Evolution, LindbladModel, Observable, Pulse,
    PulseEnvelope, PulseSequence, DENSE_LIOUVILLIAN_MAX,
};
use crate::error::{Error, Result};
use crate::fit::{fit_damped_cosine, fit_exponential, fit_lorentzian_dip, DampedCosineFit, ExponentialFit, LorentzianFit};
use crate::fockspace::FockSpace;
use crate::integrator::IntegratorSettings;
use crate::model::{drive_operator, effective_hamiltonian, rotating_frame, CouplingMode, SystemConfig};
use crate::operator::ComplexOperator;
use crate::oracle::{collective_states, t1_rate, t2_rate, CollectiveBasis};
use crate::spectra::{identify_named_states, spectrum};

/// Length of the calibrated gaussian excitation pulse (s).
pub const DEFAULT_PULSE_LENGTH: f64 = 240e-9;
/// Length of the gaussian spectroscopy pulse (s).
pub const DEFAULT_SPECTROSCOPY_LENGTH: f64 = 1.2e-6;
/// Probe-power ratio between the second and first transmon of each pair.
pub const SPECTROSCOPY_POWER_RATIO: f64 = 0.75;
/// Steady-state occupation above which a probe counts as saturating.
pub const SATURATION_LIMIT: f64 = 0.05;

/// Hilbert-space truncation used by the driven experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Truncation {
    pub levels: usize,
    /// Cap on total excitation number; `None` keeps the full product space.
    pub max_excitation: Option<usize>,
}

impl Truncation {
    pub fn full(levels: usize) -> Self {
        Truncation { levels, max_excitation: None }
    }

    pub fn capped(levels: usize, max_excitation: usize) -> Self {
        Truncation { levels, max_excitation: Some(max_excitation) }
    }

    pub fn space(&self, n_sites: usize) -> Result<FockSpace> {
        match self.max_excitation {
            None => FockSpace::new(n_sites, self.levels),
            Some(m) => FockSpace::with_max_excitation(n_sites, self.levels, m),
        }
    }
}

impl Default for Truncation {
    /// Three levels per site, up to three excitations.
    fn default() -> Self {
        Truncation::capped(3, 3)
    }
}

/// Four-transmon system driven near the dark state `|D3>`, in the frame of
/// the `|G> -> |D3>` transition.
#[derive(Clone, Debug)]
pub struct DrivenSystem {
    pub cfg: SystemConfig,
    pub space: FockSpace,
    pub basis: CollectiveBasis,
    pub model: LindbladModel,
    /// Lab-frame `|D3>` transition frequency (rad/s).
    pub dark_frequency: f64,
    pub settings: IntegratorSettings,
}

impl DrivenSystem {
    pub fn new(cfg: &SystemConfig, trunc: Truncation, settings: &IntegratorSettings) -> Result<Self> {
        Self::with_offset(cfg, trunc, 0.0, settings)
    }

    /// Same system in a frame rotating at `omega_D3 - offset`, so that `|D3>`
    /// precesses at `+offset`.
    pub fn with_offset(cfg: &SystemConfig, trunc: Truncation, offset: f64, settings: &IntegratorSettings) -> Result<Self> {
        settings.validate()?;
        let space = trunc.space(cfg.n_sites())?;
        let basis = collective_states(&space)?;
        let dark_frequency = dark_state_frequency(cfg, &space)?;
        let framed = rotating_frame(cfg, dark_frequency - offset)?;
        let model = LindbladModel::new(&framed, &space)?;
        Ok(DrivenSystem {
            cfg: framed,
            space,
            basis,
            model,
            dark_frequency,
            settings: *settings,
        })
    }

    pub fn drive(&self, phase: f64, gradient_ratio: f64) -> Result<ComplexOperator> {
        drive_operator(&self.space, phase, gradient_ratio)
    }

    pub fn ground_projector(&self) -> DMatrix<C64> {
        &self.basis.ground * self.basis.ground.adjoint()
    }

    /// Ground-state population after a single pulse from `|G>`.
    pub fn pulse_ground_population(&self, envelope: PulseEnvelope, phase: f64) -> Result<f64> {
        let mut seq = PulseSequence::new();
        let ch = seq.add_channel(&self.drive(phase, 0.0)?);
        seq.append(envelope, 0.0, 0.0, ch)?;
        let obs = [Observable::population("G", &self.basis.ground)];
        let r = evolve(
            &self.model,
            &seq,
            &DensityState::ground(&self.space),
            &[envelope.duration],
            &obs,
            &self.settings,
        )?;
        Ok(r.columns[0].1[0])
    }
}

/// Lab-frame energy of the eigenstate identified as `|D3>`.
pub fn dark_state_frequency(cfg: &SystemConfig, space: &FockSpace) -> Result<f64> {
    let mut lab = cfg.clone();
    lab.frame = 0.0;
    let h = effective_hamiltonian(&lab, space, true)?;
    let mut spec = spectrum(&h, space)?;
    let named = identify_named_states(&mut spec, space, None)?;
    let d3 = named
        .get("D3")
        .ok_or_else(|| Error::AmbiguousAssignment {
            label: "D3".into(),
            candidates: vec![],
        })?;
    Ok(spec.states[d3.index].energy)
}

#[derive(Clone, Debug, Serialize)]
pub struct PiPulseCalibration {
    pub envelope: PulseEnvelope,
    /// Amplitude predicted by the pulse-area theorem for an isolated transition.
    pub area_amplitude: f64,
    pub min_ground_population: f64,
    /// Coarse scan `(amplitude, P_G)`.
    pub scan: Vec<(f64, f64)>,
}

/// First minimum of `P_G` versus peak amplitude for a gaussian pulse at `phi = 0`.
pub fn calibrate_pi_pulse(sys: &DrivenSystem, duration: f64) -> Result<PiPulseCalibration> {
    let area_env = PulseEnvelope::gaussian(duration, 1.0).with_area(PI / 2.0);
    let a0 = area_env.amplitude;
    let n = 13;
    let amps: Vec<f64> = (0..n).map(|k| a0 * (0.4 + 1.2 * k as f64 / (n - 1) as f64)).collect();
    let pg = |a: f64| sys.pulse_ground_population(PulseEnvelope::gaussian(duration, a), 0.0);
    let vals: Vec<f64> = amps.par_iter().map(|&a| pg(a)).collect::<Result<_>>()?;
    let scan: Vec<(f64, f64)> = amps.iter().copied().zip(vals.iter().copied()).collect();
    let k = (1..n - 1)
        .find(|&k| vals[k] <= vals[k - 1] && vals[k] <= vals[k + 1])
        .ok_or_else(|| Error::Fit("no Rabi minimum inside the calibration window".into()))?;
    // golden-section refinement on the bracketing interval
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (amps[k - 1], amps[k + 1]);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (pg(x1)?, pg(x2)?);
    while hi - lo > 1e-4 * a0 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = pg(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = pg(x2)?;
        }
    }
    let (best, fmin) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    Ok(PiPulseCalibration {
        envelope: PulseEnvelope::gaussian(duration, best),
        area_amplitude: a0,
        min_ground_population: fmin,
        scan,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RabiMap {
    /// Peak amplitudes (rad/s).
    pub amplitudes: Vec<f64>,
    /// Sideport phases (rad).
    pub phases: Vec<f64>,
    /// `ground_population[i][k]` for `phases[i]`, `amplitudes[k]`.
    pub ground_population: Vec<Vec<f64>>,
}

pub fn rabi_map(sys: &DrivenSystem, amplitudes: &[f64], phases: &[f64], duration: f64) -> Result<RabiMap> {
    let points: Vec<(usize, usize)> = (0..phases.len())
        .flat_map(|i| (0..amplitudes.len()).map(move |k| (i, k)))
        .collect();
    let vals: Vec<f64> = points
        .par_iter()
        .map(|&(i, k)| sys.pulse_ground_population(PulseEnvelope::gaussian(duration, amplitudes[k]), phases[i]))
        .collect::<Result<_>>()?;
    let ground_population = vals.chunks(amplitudes.len().max(1)).map(|c| c.to_vec()).collect();
    Ok(RabiMap {
        amplitudes: amplitudes.to_vec(),
        phases: phases.to_vec(),
        ground_population,
    })
}

/// Common rates of an identical-transmon configuration, if it is one.
fn identical_rates(cfg: &SystemConfig) -> Option<(f64, f64, f64)> {
    let t0 = cfg.transmons.first()?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    cfg.transmons
        .iter()
        .all(|t| same(t.gamma, t0.gamma) && same(t.gamma_nr, t0.gamma_nr) && same(t.kappa_phi, t0.kappa_phi))
        .then_some((t0.gamma, t0.gamma_nr, t0.kappa_phi))
}

#[derive(Clone, Debug, Serialize)]
pub struct T1Result {
    /// Delays after the end of the pi-pulse (s).
    pub delays: Vec<f64>,
    /// `1 - P_G` at each delay.
    pub excited: Vec<f64>,
    pub fit: ExponentialFit,
    /// Closed-form T1 for identical transmons (s).
    pub predicted: Option<f64>,
}

impl T1Result {
    pub fn relative_error(&self) -> Option<f64> {
        self.predicted.map(|p| (self.fit.time_constant - p).abs() / p)
    }
}

/// Pi-pulse, free decay, exponential fit of `1 - P_G`.
pub fn t1_experiment(sys: &DrivenSystem, pi: &PiPulseCalibration, delays: &[f64]) -> Result<T1Result> {
    let mut seq = PulseSequence::new();
    let ch = seq.add_channel(&sys.drive(0.0, 0.0)?);
    seq.append(pi.envelope, 0.0, 0.0, ch)?;
    let t0 = pi.envelope.duration;
    let times: Vec<f64> = delays.iter().map(|d| t0 + d).collect();
    let obs = [Observable::population("G", &sys.basis.ground)];
    let r = evolve(&sys.model, &seq, &DensityState::ground(&sys.space), &times, &obs, &sys.settings)?;
    let excited: Vec<f64> = r.columns[0].1.iter().map(|p| 1.0 - p).collect();
    let fit = fit_exponential(delays, &excited, true)?;
    let predicted = identical_rates(&sys.cfg).map(|(g, gnr, k)| 1.0 / t1_rate(g, gnr, k));
    Ok(T1Result {
        delays: delays.to_vec(),
        excited,
        fit,
        predicted,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RamseyResult {
    /// Offset of the drive below the dark-state transition (rad/s).
    pub detuning: f64,
    pub delays: Vec<f64>,
    /// `P_G` after a second pulse in phase with the first.
    pub ground_in_phase: Vec<f64>,
    /// `P_G(theta = 0) - P_G(theta = pi)` for the second pulse.
    pub signal: Vec<f64>,
    pub fit: DampedCosineFit,
    /// Closed-form T2 for identical transmons (s).
    pub predicted_t2: Option<f64>,
}

/// Short gaussian pi/2 pulse used for Ramsey sequences at large detuning.
pub fn ramsey_pulse(duration: f64) -> PulseEnvelope {
    PulseEnvelope::gaussian(duration, 1.0).with_area(PI / 4.0)
}

/// Two pi/2 pulses detuned by `detuning` from the dark-state transition and
/// separated by each delay; the second pulse is phase cycled.
pub fn ramsey_experiment(
    cfg: &SystemConfig,
    trunc: Truncation,
    detuning: f64,
    pulse: PulseEnvelope,
    delays: &[f64],
    settings: &IntegratorSettings,
) -> Result<RamseyResult> {
    let sys = DrivenSystem::with_offset(cfg, trunc, detuning, settings)?;
    let x = sys.drive(0.0, 0.0)?;
    let pg = sys.ground_projector();
    // readout after the second pulse, mapped back to its start
    let readout = |theta: f64| -> Result<DMatrix<C64>> {
        let mut seq = PulseSequence::new();
        let ch = seq.add_channel(&x);
        seq.append(pulse, theta, 0.0, ch)?;
        heisenberg_observable(&sys.model, &seq, &pg, 0.0, pulse.duration, settings)
    };
    let (o_plus, o_minus) = (readout(0.0)?, readout(PI)?);
    let mut seq = PulseSequence::new();
    let ch = seq.add_channel(&x);
    seq.append(pulse, 0.0, 0.0, ch)?;
    let times: Vec<f64> = delays.iter().map(|d| pulse.duration + d).collect();
    let obs = [
        Observable::Expectation {
            name: "in_phase".into(),
            operator: o_plus,
        },
        Observable::Expectation {
            name: "out_of_phase".into(),
            operator: o_minus,
        },
    ];
    let r = evolve(&sys.model, &seq, &DensityState::ground(&sys.space), &times, &obs, settings)?;
    let a = r.columns[0].1.clone();
    let signal: Vec<f64> = a.iter().zip(&r.columns[1].1).map(|(p, m)| p - m).collect();
    let fit = fit_damped_cosine(delays, &signal)?;
    let predicted_t2 = identical_rates(&sys.cfg).map(|(_, gnr, k)| 1.0 / t2_rate(gnr, k, sys.cfg.k_phi));
    Ok(RamseyResult {
        detuning,
        delays: delays.to_vec(),
        ground_in_phase: a,
        signal,
        fit,
        predicted_t2,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectroscopyMap {
    /// Lab-frame probe frequencies (rad/s).
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    /// `ground_population[i][k]` for `phases[i]`, `frequencies[k]`.
    pub ground_population: Vec<Vec<f64>>,
    pub dark_frequency: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectroscopyPulse {
    pub duration: f64,
    pub amplitude: f64,
    /// Amplitude gradient ratio between pair members.
    pub gradient_ratio: f64,
}

impl Default for SpectroscopyPulse {
    fn default() -> Self {
        SpectroscopyPulse {
            duration: DEFAULT_SPECTROSCOPY_LENGTH,
            amplitude: 2.0 * PI * 1e6,
            gradient_ratio: crate::model::gradient_ratio_for_power_ratio(SPECTROSCOPY_POWER_RATIO),
        }
    }
}

/// Pi-pulse into `|D3>` at `phi = 0`, then a gaussian spectroscopy pulse at
/// each frequency and sideport phase, then `P_G` readout.
pub fn spectroscopy_second_manifold(
    sys: &DrivenSystem,
    pi: &PiPulseCalibration,
    frequencies: &[f64],
    phases: &[f64],
    probe: SpectroscopyPulse,
) -> Result<SpectroscopyMap> {
    let mut seq = PulseSequence::new();
    let ch = seq.add_channel(&sys.drive(0.0, 0.0)?);
    seq.append(pi.envelope, 0.0, 0.0, ch)?;
    let t_pi = pi.envelope.duration;
    let mut ev = Evolution::new(&sys.model, &seq, &DensityState::ground(&sys.space), 0.0, &sys.settings)?;
    ev.advance_to(t_pi)?;
    let excited = ev.state();
    let drives: Vec<ComplexOperator> = phases
        .iter()
        .map(|&p| sys.drive(p, probe.gradient_ratio))
        .collect::<Result<_>>()?;
    let points: Vec<(usize, usize)> = (0..phases.len())
        .flat_map(|i| (0..frequencies.len()).map(move |k| (i, k)))
        .collect();
    let vals: Vec<f64> = points
        .par_iter()
        .map(|&(i, k)| {
            let mut s = PulseSequence::new();
            let ch = s.add_channel(&drives[i]);
            s.push(Pulse {
                envelope: PulseEnvelope::gaussian(probe.duration, probe.amplitude),
                start: 0.0,
                phase: 0.0,
                detuning: frequencies[k] - sys.dark_frequency,
                channel: ch,
            })?;
            let mut ev = Evolution::new(&sys.model, &s, &excited, 0.0, &sys.settings)?;
            ev.advance_to(probe.duration)?;
            Ok(ev.state().population(&sys.basis.ground))
        })
        .collect::<Result<_>>()?;
    Ok(SpectroscopyMap {
        frequencies: frequencies.to_vec(),
        phases: phases.to_vec(),
        ground_population: vals.chunks(frequencies.len().max(1)).map(|c| c.to_vec()).collect(),
        dark_frequency: sys.dark_frequency,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LifetimePoint {
    /// Common transmon frequency (rad/s).
    pub frequency: f64,
    pub t1: f64,
    /// Decay rate of the prepared state from the effective Hamiltonian (rad/s).
    pub eigen_decay: f64,
    pub fit: ExponentialFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct LifetimeSweep {
    pub points: Vec<LifetimePoint>,
}

impl LifetimeSweep {
    pub fn argmax(&self) -> Option<&LifetimePoint> {
        self.points.iter().max_by(|a, b| a.t1.total_cmp(&b.t1))
    }
}

/// Tune every transmon to each frequency, prepare the longest-lived
/// single-excitation state and fit its decay back to the ground state.
pub fn lifetime_vs_frequency(
    cfg: &SystemConfig,
    trunc: Truncation,
    frequencies: &[f64],
    settings: &IntegratorSettings,
) -> Result<LifetimeSweep> {
    if !matches!(cfg.coupling_mode, CouplingMode::ExactDelay) {
        return Err(Error::InvalidParameter(
            "lifetime sweeps need frequency-dependent phases (coupling_mode = exact_delay)".into(),
        ));
    }
    let space = trunc.space(cfg.n_sites())?;
    let points = frequencies
        .par_iter()
        .map(|&w| {
            let mut tuned = cfg.clone();
            for t in &mut tuned.transmons {
                t.frequency = w;
            }
            let tuned = rotating_frame(&tuned, w)?;
            let h = effective_hamiltonian(&tuned, &space, true)?;
            let spec = spectrum(&h, &space)?;
            let dark = spec
                .manifold_states(1)
                .min_by(|a, b| a.decay.total_cmp(&b.decay))
                .ok_or_else(|| Error::InvalidState("empty single-excitation manifold".into()))?;
            let model = LindbladModel::new(&tuned, &space)?;
            let init = DensityState::pure(&dark.amplitudes)?;
            let window = 3.0 / dark.decay.max(1e-3);
            let n = 60;
            let times: Vec<f64> = (0..n).map(|k| window * k as f64 / (n - 1) as f64).collect();
            let mut ground = DVector::<C64>::zeros(space.dim());
            ground[0] = C64::new(1.0, 0.0);
            let obs = [Observable::population("G", &ground)];
            let r = evolve(&model, &PulseSequence::new(), &init, &times, &obs, settings)?;
            let excited: Vec<f64> = r.columns[0].1.iter().map(|p| 1.0 - p).collect();
            let fit = fit_exponential(&times, &excited, false)?;
            Ok(LifetimePoint {
                frequency: w,
                t1: fit.time_constant,
                eigen_decay: dark.decay,
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LifetimeSweep { points })
}

#[derive(Clone, Debug, Serialize)]
pub struct PurityTrace {
    pub gamma: f64,
    pub amplitude: f64,
    pub times: Vec<f64>,
    pub dark_population: Vec<f64>,
    pub ground_population: Vec<f64>,
    pub purity: Vec<f64>,
    pub fit: DampedCosineFit,
    /// Decay rate of the Rabi envelope (1/s).
    pub damping_rate: f64,
    /// Time average of `1 - Tr rho^2`.
    pub mean_purity_loss: f64,
}

/// Constant resonant drive at `phi = 0` from `|G>` for each waveguide coupling
/// (applied to all transmons) and amplitude.
pub fn purity_leakage_scan(
    cfg: &SystemConfig,
    trunc: Truncation,
    gammas: &[f64],
    amplitudes: &[f64],
    times: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<PurityTrace>> {
    let t_end = times.last().copied().unwrap_or(0.0);
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter("purity scan needs positive sample times".into()));
    }
    let points: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| amplitudes.iter().map(move |&a| (g, a)))
        .collect();
    points
        .par_iter()
        .map(|&(gamma, amplitude)| {
            let mut c = cfg.clone();
            for t in &mut c.transmons {
                t.gamma = gamma;
            }
            let sys = DrivenSystem::new(&c, trunc, settings)?;
            let mut seq = PulseSequence::new();
            let ch = seq.add_channel(&sys.drive(0.0, 0.0)?);
            seq.append(PulseEnvelope::rectangular(t_end, amplitude), 0.0, 0.0, ch)?;
            let obs = [
                Observable::population("D3", &sys.basis.d3),
                Observable::population("G", &sys.basis.ground),
                Observable::Purity,
            ];
            let r = evolve(&sys.model, &seq, &DensityState::ground(&sys.space), times, &obs, settings)?;
            let dark_population = r.columns[0].1.clone();
            let fit = fit_damped_cosine(times, &dark_population)?;
            let purity = r.columns[2].1.clone();
            let mean_purity_loss = purity.iter().map(|p| 1.0 - p).sum::<f64>() / purity.len() as f64;
            Ok(PurityTrace {
                gamma,
                amplitude,
                times: times.to_vec(),
                dark_population,
                ground_population: r.columns[1].1.clone(),
                purity,
                damping_rate: 1.0 / fit.time_constant,
                fit,
                mean_purity_loss,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TransmissionSpectrum {
    /// Lab-frame probe frequencies (rad/s).
    pub frequencies: Vec<f64>,
    #[serde(skip)]
    pub amplitude: Vec<C64>,
    /// Probe amplitude `epsilon` (sqrt(rad/s)).
    pub probe: f64,
    pub max_occupation: f64,
}

impl TransmissionSpectrum {
    pub fn power(&self) -> Vec<f64> {
        self.amplitude.iter().map(|t| t.norm_sqr()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.amplitude.iter().map(|t| t.arg()).collect()
    }

    /// Lorentzian fit of `|t|^2`; frequencies in the fit are in rad/s.
    pub fn fit_dip(&self) -> Result<LorentzianFit> {
        let scale = 2.0 * PI * 1e6;
        let x: Vec<f64> = self.frequencies.iter().map(|w| w / scale).collect();
        let mut f = fit_lorentzian_dip(&x, &self.power())?;
        f.center *= scale;
        f.fwhm *= scale;
        Ok(f)
    }
}

/// Default weak-probe amplitude for a configuration.
pub fn default_probe_amplitude(cfg: &SystemConfig) -> f64 {
    0.02 * cfg.max_gamma().sqrt()
}

/// Propagation phase of the probe at each transmon.
fn probe_phases(cfg: &SystemConfig, frequency: f64) -> Result<Vec<f64>> {
    cfg.transmons
        .iter()
        .map(|t| match cfg.coupling_mode {
            CouplingMode::FixedPhase { phase } => Ok(phase * t.x / cfg.geometry.d_y),
            CouplingMode::ExactDelay => Ok(cfg.geometry.propagation_constant(frequency)? * t.x),
        })
        .collect()
}

/// Weak-probe transmission `t = 1 - (i/eps) sum_j sqrt(gamma_j/2) e^{-i theta_j} <a_j>`
/// from the steady state under `eps sum_j sqrt(gamma_j/2)(e^{i theta_j} a_j^dag + h.c.)`.
pub fn transmission_spectrum(
    cfg: &SystemConfig,
    trunc: Truncation,
    frequencies: &[f64],
    probe: f64,
    settings: &IntegratorSettings,
) -> Result<TransmissionSpectrum> {
    if !(probe > 0.0) {
        return Err(Error::InvalidParameter("probe amplitude must be positive".into()));
    }
    let space = trunc.space(cfg.n_sites())?;
    let ladders = space.ladder_ops();
    let (numbers, _) = space.number_ops();
    let results: Vec<(C64, f64)> = frequencies
        .par_iter()
        .map(|&w| {
            let framed = rotating_frame(cfg, w)?;
            let model = LindbladModel::new(&framed, &space)?;
            let phases = probe_phases(cfg, w)?;
            let mut x = DMatrix::<C64>::zeros(space.dim(), space.dim());
            for (j, t) in cfg.transmons.iter().enumerate() {
                x += ladders[j].matrix() * C64::from_polar((0.5 * t.gamma).sqrt(), -phases[j]);
            }
            let xop = ComplexOperator::from_matrix(&space, x.clone())?;
            let ch = DriveChannel::new(&xop);
            let f = C64::new(probe, 0.0);
            let rho = if space.dim() * space.dim() <= DENSE_LIOUVILLIAN_MAX {
                model.steady_state(&[(f, &ch)])?
            } else {
                settle(&model, &xop, probe, cfg, settings)?
            };
            let occ = numbers.iter().map(|n| rho.expectation(n.matrix()).re).fold(0.0, f64::max);
            let t = C64::new(1.0, 0.0) - C64::new(0.0, 1.0 / probe) * rho.expectation(&x);
            Ok((t, occ))
        })
        .collect::<Result<_>>()?;
    let max_occupation = results.iter().map(|r| r.1).fold(0.0, f64::max);
    if max_occupation >= SATURATION_LIMIT {
        return Err(Error::Saturation {
            max_occupation,
            limit: SATURATION_LIMIT,
        });
    }
    Ok(TransmissionSpectrum {
        frequencies: frequencies.to_vec(),
        amplitude: results.into_iter().map(|r| r.0).collect(),
        probe,
        max_occupation,
    })
}

/// Long-time evolution under a constant probe until the state stops changing.
fn settle(
    model: &LindbladModel,
    x: &ComplexOperator,
    probe: f64,
    cfg: &SystemConfig,
    settings: &IntegratorSettings,
) -> Result<DensityState> {
    let slowest = cfg
        .transmons
        .iter()
        .map(|t| t.gamma_nr + 0.5 * t.gamma)
        .fold(f64::INFINITY, f64::min);
    let chunk = 2.0 / slowest;
    let horizon = 1e4 * chunk;
    let mut seq = PulseSequence::new();
    let ch = seq.add_channel(x);
    seq.push(Pulse {
        envelope: PulseEnvelope::rectangular(horizon, probe),
        start: 0.0,
        phase: 0.0,
        detuning: 0.0,
        channel: ch,
    })?;
    let space_dim = model.dim();
    let mut ground = DMatrix::<C64>::zeros(space_dim, space_dim);
    ground[(0, 0)] = C64::new(1.0, 0.0);
    let mut ev = Evolution::new(model, &seq, &DensityState::from_matrix(ground)?, 0.0, settings)?;
    let mut prev = ev.state();
    let mut t = 0.0;
    while t < horizon {
        t += chunk;
        ev.advance_to(t)?;
        let cur = ev.state();
        let change = (cur.matrix() - prev.matrix()).camax();
        if change < 1e-8 * cur.matrix().camax() {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::InvalidState("steady state not reached".into()))
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}
