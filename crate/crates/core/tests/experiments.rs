use std::f64::consts::PI;

use wqed::config::fixture;
use wqed::dynamics::PulseEnvelope;
use wqed::experiments::*;
use wqed::integrator::IntegratorSettings;
use wqed::model::{effective_hamiltonian, SystemConfig};
use wqed::spectra::spectrum;
use wqed::Error;

const MHZ: f64 = 2.0 * PI * 1e6;

fn ideal() -> SystemConfig {
    fixture("ideal_identical.cfg").unwrap()
}

fn system() -> DrivenSystem {
    DrivenSystem::new(&ideal(), Truncation::default(), &IntegratorSettings::default()).unwrap()
}

#[test]
fn sideport_phase_switches_rabi_off() {
    let sys = system();
    let env = PulseEnvelope::gaussian(DEFAULT_PULSE_LENGTH, 1.8 * MHZ);
    let on = sys.pulse_ground_population(env, 0.0).unwrap();
    let off = sys.pulse_ground_population(env, PI).unwrap();
    assert!(on < 0.2, "{on}");
    assert!(1.0 - off < 0.05, "{off}");
}

#[test]
fn rabi_map_layout() {
    let sys = system();
    let amps = [0.5 * MHZ, 1.8 * MHZ];
    let phases = [0.0, PI / 2.0, PI];
    let m = rabi_map(&sys, &amps, &phases, 120e-9).unwrap();
    assert_eq!(m.ground_population.len(), 3);
    assert!(m.ground_population.iter().all(|row| row.len() == 2));
    // more drive, more transfer at phi = 0
    assert!(m.ground_population[0][1] < m.ground_population[0][0]);
    assert!(m.ground_population[2].iter().all(|&p| p > 0.95));
}

#[test]
fn pi_pulse_and_t1() {
    let sys = system();
    let pi = calibrate_pi_pulse(&sys, DEFAULT_PULSE_LENGTH).unwrap();
    let ratio = pi.envelope.amplitude / pi.area_amplitude;
    assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    assert!(pi.min_ground_population < 0.15);
    let delays = linspace(0.05e-6, 12e-6, 30);
    let r = t1_experiment(&sys, &pi, &delays).unwrap();
    assert!(r.relative_error().unwrap() < 1e-3, "{:?}", r.relative_error());
    assert!((r.fit.time_constant * 1e6 - 3.98).abs() < 0.01);
}

#[test]
fn ramsey_fringes() {
    let delays = linspace(0.0, 1.5e-6, 151);
    let r = ramsey_experiment(
        &ideal(),
        Truncation::default(),
        9.0 * MHZ,
        ramsey_pulse(30e-9),
        &delays,
        &IntegratorSettings::default(),
    )
    .unwrap();
    assert!((r.fit.frequency / 1e6 - 9.0).abs() < 0.05);
    let t2 = r.predicted_t2.unwrap();
    assert!((r.fit.time_constant - t2).abs() / t2 < 0.03);
}

#[test]
fn spectroscopy_finds_ground_return() {
    let sys = system();
    let pi = calibrate_pi_pulse(&sys, DEFAULT_PULSE_LENGTH).unwrap();
    let probe = SpectroscopyPulse {
        duration: 300e-9,
        amplitude: 2.0 * MHZ,
        ..Default::default()
    };
    let freqs = [sys.dark_frequency - 400.0 * MHZ, sys.dark_frequency];
    let m = spectroscopy_second_manifold(&sys, &pi, &freqs, &[0.0], probe).unwrap();
    let row = &m.ground_population[0];
    // far off resonance the pi-pulsed state just decays slightly
    assert!(row[0] < 0.2);
    // on the D3 line the probe drives population back to |G>
    assert!(row[1] > row[0] + 0.1, "{row:?}");
}

#[test]
fn lifetime_peaks_at_decoherence_free_frequency() {
    let cfg = fixture("dark_pair.cfg").unwrap();
    let w0 = cfg.geometry.decoherence_free_frequency().unwrap();
    let freqs = linspace(w0 - 100.0 * MHZ, w0 + 100.0 * MHZ, 11);
    let r = lifetime_vs_frequency(&cfg, Truncation::default(), &freqs, &IntegratorSettings::default()).unwrap();
    let best = r.argmax().unwrap();
    assert!((best.frequency - w0).abs() < 10.0 * MHZ);
    for p in &r.points {
        assert!((p.t1 * p.eigen_decay - 1.0).abs() < 1e-3);
    }
    let fixed = lifetime_vs_frequency(&ideal(), Truncation::default(), &freqs, &IntegratorSettings::default());
    assert!(matches!(fixed, Err(Error::InvalidParameter(_))));
}

#[test]
fn larger_coupling_suppresses_leakage() {
    let times = linspace(0.0, 0.6e-6, 121);
    let r = purity_leakage_scan(
        &ideal(),
        Truncation::default(),
        &[14.0 * MHZ, 197.0 * MHZ],
        &[5.0 * MHZ],
        &times,
        &IntegratorSettings::default(),
    )
    .unwrap();
    assert!(r[1].damping_rate < r[0].damping_rate);
    assert!(r[1].mean_purity_loss < r[0].mean_purity_loss);
}

#[test]
fn single_transmon_extinction() {
    let cfg = fixture("single_q1.cfg").unwrap();
    let w = cfg.transmons[0].frequency;
    let g = cfg.transmons[0].gamma;
    let freqs = linspace(w - 3.0 * g, w + 3.0 * g, 61);
    let t = transmission_spectrum(&cfg, Truncation::capped(3, 2), &freqs, default_probe_amplitude(&cfg), &IntegratorSettings::default()).unwrap();
    let p = t.power();
    assert!(p[30] < 1e-3, "{}", p[30]);
    assert!(p[0] > 0.8 && p[60] > 0.8);
    let fit = t.fit_dip().unwrap();
    assert!((fit.fwhm - g).abs() / g < 0.02);
    assert!((fit.center - w).abs() < 0.01 * g);
}

#[test]
fn strong_probe_is_rejected() {
    let cfg = fixture("single_q1.cfg").unwrap();
    let w = cfg.transmons[0].frequency;
    let err = transmission_spectrum(&cfg, Truncation::capped(3, 2), &[w], 20.0 * default_probe_amplitude(&cfg), &IntegratorSettings::default());
    assert!(matches!(err, Err(Error::Saturation { .. })));
}

#[test]
fn bright_state_linewidth_from_spectrum() {
    let cfg = fixture("pair_q3q4.cfg").unwrap();
    let tr = Truncation::capped(3, 2);
    let space = tr.space(2).unwrap();
    let spec = spectrum(&effective_hamiltonian(&cfg, &space, true).unwrap(), &space).unwrap();
    let b = spec.manifold_states(1).max_by(|a, b| a.decay.total_cmp(&b.decay)).unwrap();
    let freqs = linspace(b.energy - 4.0 * b.decay, b.energy + 4.0 * b.decay, 81);
    let t = transmission_spectrum(&cfg, tr, &freqs, default_probe_amplitude(&cfg), &IntegratorSettings::default()).unwrap();
    let fit = t.fit_dip().unwrap();
    assert!((fit.fwhm - b.decay).abs() / b.decay < 0.02, "{} vs {}", fit.fwhm / MHZ, b.decay / MHZ);
}
