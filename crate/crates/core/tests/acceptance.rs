//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use wqed::config::fixture;
use wqed::dynamics::{evolve, DensityState, Observable, PulseEnvelope, PulseSequence};
use wqed::experiments::*;
use wqed::fockspace::FockSpace;
use wqed::integrator::{Dopri5, IntegratorSettings};
use wqed::model::{drive_operator, effective_hamiltonian, SystemConfig};
use wqed::oracle::{collective_states, t1_rate, ReducedDarkModel};
use wqed::spectra::{identify_named_states, spectrum, ClosedFormParams, Symmetry};

const MHZ: f64 = 2.0 * PI * 1e6;
const GHZ: f64 = 1e3 * MHZ;
const KHZ: f64 = 2.0 * PI * 1e3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ideal() -> SystemConfig {
    fixture("ideal_identical.cfg").unwrap()
}

fn superradiant_sum_rule() -> Outcome {
    let cfg = fixture("paper_tableS1.cfg").map_err(|e| e.to_string())?;
    let space = FockSpace::new(4, 3).unwrap();
    let h = effective_hamiltonian(&cfg, &space, true).map_err(|e| e.to_string())?;
    let mut spec = spectrum(&h, &space).map_err(|e| e.to_string())?;
    let named = identify_named_states(&mut spec, &space, None).map_err(|e| e.to_string())?;
    let b4 = spec.states[named.get("B4").unwrap().index].decay;
    let sum: f64 = cfg.gammas().iter().sum();
    let rel = (b4 - sum).abs() / sum;
    check(rel < 0.05, format!("Gamma(B4) = {:.2} MHz, sum = {:.2} MHz, rel {rel:.2e}", b4 / MHZ, sum / MHZ))
}

fn dark_protection() -> Outcome {
    let cfg = ideal().without_local_losses();
    let space = FockSpace::new(4, 3).unwrap();
    let h = effective_hamiltonian(&cfg, &space, true).map_err(|e| e.to_string())?;
    let mut spec = spectrum(&h, &space).map_err(|e| e.to_string())?;
    let named = identify_named_states(&mut spec, &space, None).map_err(|e| e.to_string())?;
    let d3 = spec.states[named.get("D3").unwrap().index].decay;
    let b4 = spec.states[named.get("B4").unwrap().index].decay;
    let ratio = d3.abs() / b4;
    check(ratio < 1e-6, format!("Gamma(D3)/Gamma(B4) = {ratio:.2e}"))
}

fn drive_selectivity() -> Outcome {
    let space = FockSpace::new(4, 3).unwrap();
    let basis = collective_states(&space).map_err(|e| e.to_string())?;
    let omega = 2.0 * MHZ;
    let element = |phase: f64, target: &nalgebra::DVector<C64>| -> f64 {
        let x = drive_operator(&space, phase, 0.0).unwrap();
        let hd: DMatrix<C64> = (x.matrix() + x.matrix().adjoint()) * C64::new(omega, 0.0);
        (target.adjoint() * hd * &basis.ground)[(0, 0)].norm() / omega
    };
    let b4 = element(0.0, &basis.b4);
    let d3 = element(PI, &basis.d3);
    let d3_on = element(0.0, &basis.d3);
    check(
        b4 < 1e-10 && d3 < 1e-10 && d3_on > 0.5,
        format!("|<B4|Hd|G>|/Omega at 0 = {b4:.1e}, |<D3|Hd|G>|/Omega at pi = {d3:.1e}"),
    )
}

fn ramsey_t2() -> Outcome {
    let delays = linspace(0.0, 2e-6, 201);
    let r = ramsey_experiment(
        &ideal(),
        Truncation::default(),
        9.0 * MHZ,
        ramsey_pulse(30e-9),
        &delays,
        &IntegratorSettings::default(),
    )
    .map_err(|e| e.to_string())?;
    let t2 = r.fit.time_constant * 1e6;
    let rel = (t2 - 0.577).abs() / 0.577;
    check(
        rel < 0.03,
        format!("T2 = {t2:.4} us (target 0.577), fringe {:.4} MHz, rel {rel:.2e}", r.fit.frequency / 1e6),
    )
}

fn t1_closed_form() -> Outcome {
    let settings = IntegratorSettings::default();
    let mut worst = 0.0f64;
    let mut parts = vec![];
    for g in [5.0, 28.0, 100.0] {
        let mut cfg = ideal();
        for t in &mut cfg.transmons {
            t.gamma = g * MHZ;
            t.kappa_phi = 100.0 * KHZ;
        }
        let sys = DrivenSystem::new(&cfg, Truncation::default(), &settings).map_err(|e| e.to_string())?;
        let pi = calibrate_pi_pulse(&sys, DEFAULT_PULSE_LENGTH).map_err(|e| e.to_string())?;
        let r = t1_experiment(&sys, &pi, &linspace(0.05e-6, 12e-6, 40)).map_err(|e| e.to_string())?;
        let predicted = 1.0 / t1_rate(g * MHZ, cfg.transmons[0].gamma_nr, 100.0 * KHZ);
        let rel = (r.fit.time_constant - predicted).abs() / predicted;
        worst = worst.max(rel);
        parts.push(format!("{g} MHz: {:.4} us", r.fit.time_constant * 1e6));
    }
    check(worst < 0.05, format!("{}, worst rel {worst:.2e}", parts.join(", ")))
}

fn dispersion_calibration() -> Outcome {
    let cfg = fixture("dark_pair.cfg").map_err(|e| e.to_string())?;
    let w = cfg.geometry.decoherence_free_frequency().map_err(|e| e.to_string())?;
    let freqs = linspace(w - 200.0 * MHZ, w + 200.0 * MHZ, 21);
    let step = freqs[1] - freqs[0];
    let sweep = lifetime_vs_frequency(&cfg, Truncation::default(), &freqs, &IntegratorSettings::default())
        .map_err(|e| e.to_string())?;
    let best = sweep.argmax().unwrap().frequency;
    let in_window = (w / GHZ - 7.312).abs() <= 0.016;
    check(
        in_window && (best - w).abs() <= step,
        format!("omega_df = {:.4} GHz, sweep argmax {:.4} GHz", w / GHZ, best / GHZ),
    )
}

fn two_excitation_oracle() -> Outcome {
    let cfg = ideal().without_local_losses();
    let space = FockSpace::new(4, 3).unwrap();
    let h = effective_hamiltonian(&cfg, &space, false).map_err(|e| e.to_string())?;
    let mut spec = spectrum(&h, &space).map_err(|e| e.to_string())?;
    let params = ClosedFormParams {
        gamma: 28.0 * MHZ,
        exchange: 45.0 * MHZ,
        anharmonicity: 218.0 * MHZ,
    };
    let named = identify_named_states(&mut spec, &space, Some(params)).map_err(|e| e.to_string())?;
    let worst = ["5", "7", "8", "9", "10", "11", "12"]
        .iter()
        .map(|n| 1.0 - named.get(n).unwrap().overlap)
        .fold(0.0, f64::max);
    let symmetric = ["6", "9", "13"]
        .iter()
        .all(|n| spec.states[named.get(n).unwrap().index].pair_symmetry == Symmetry::Symmetric);
    check(worst < 1e-8 && symmetric, format!("worst infidelity {worst:.1e}, |6>,|9>,|13> symmetric: {symmetric}"))
}

fn adiabatic_elimination() -> Outcome {
    let u = 15.0 * MHZ;
    let settings = IntegratorSettings::default();
    let mut rates = vec![];
    let mut worst = 0.0f64;
    for ratio in [0.5, 2.0, 8.0] {
        let m = ReducedDarkModel {
            drive: 0.0,
            coupling: u / 20.0,
            detuning: u,
            gamma_f: ratio * u,
            gamma_b: 112.0 * MHZ,
        };
        let c = m.simulate_dark_decay(&settings).map_err(|e| e.to_string())?;
        worst = worst.max(c.relative_error);
        rates.push(c.simulated_rate);
    }
    let peak = rates[1] > rates[0] && rates[1] > rates[2];
    check(worst < 0.1 && peak, format!("worst rel {worst:.2e}, maximum at gamma_f/U = 2: {peak}"))
}

fn leakage_monotonicity() -> Outcome {
    let gammas = [14.0 * MHZ, 56.0 * MHZ, 197.0 * MHZ];
    let r = purity_leakage_scan(
        &ideal(),
        Truncation::default(),
        &gammas,
        &[5.0 * MHZ],
        &linspace(0.0, 1e-6, 201),
        &IntegratorSettings::default(),
    )
    .map_err(|e| e.to_string())?;
    let damping: Vec<f64> = r.iter().map(|p| p.damping_rate).collect();
    let loss: Vec<f64> = r.iter().map(|p| p.mean_purity_loss).collect();
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    check(
        dec(&damping) && dec(&loss),
        format!("damping {:.3e} > {:.3e} > {:.3e} 1/s, purity loss {:.3} > {:.3} > {:.3}", damping[0], damping[1], damping[2], loss[0], loss[1], loss[2]),
    )
}

fn transmission_linewidths() -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for (name, gamma_ref) in [("single_q1.cfg", 14.9), ("pair_q3q4.cfg", 30.2), ("paper_tableS1.cfg", 60.9)] {
        let cfg = fixture(name).map_err(|e| e.to_string())?;
        let tr = Truncation::capped(3, 2);
        let space = tr.space(cfg.n_sites()).map_err(|e| e.to_string())?;
        let spec = spectrum(&effective_hamiltonian(&cfg, &space, true).unwrap(), &space).map_err(|e| e.to_string())?;
        let b = spec.manifold_states(1).max_by(|a, b| a.decay.total_cmp(&b.decay)).unwrap();
        let freqs = linspace(b.energy - 5.0 * b.decay, b.energy + 5.0 * b.decay, 81);
        let t = transmission_spectrum(&cfg, tr, &freqs, default_probe_amplitude(&cfg), &IntegratorSettings::default())
            .map_err(|e| e.to_string())?;
        let fwhm = t.fit_dip().map_err(|e| e.to_string())?.fwhm / MHZ;
        let rel = (fwhm - 2.0 * gamma_ref).abs() / (2.0 * gamma_ref);
        ok &= rel < 0.1;
        parts.push(format!("{name}: FWHM {fwhm:.2} MHz vs {:.1} ({rel:.3})", 2.0 * gamma_ref));
    }
    check(ok, parts.join("; "))
}

fn property_suite() -> Outcome {
    let mut fails = vec![];
    // trajectories
    let sys = DrivenSystem::new(&ideal(), Truncation::default(), &IntegratorSettings::default()).map_err(|e| e.to_string())?;
    for (phase, amp, ratio) in [(0.0, 1.8, 0.0), (0.9, 6.0, 0.3), (PI, 4.0, 0.1), (2.2, 10.0, 0.5)] {
        let mut seq = PulseSequence::new();
        let ch = seq.add_channel(&sys.drive(phase, ratio).unwrap());
        seq.append(PulseEnvelope::gaussian(200e-9, amp * MHZ), 0.0, 0.0, ch).unwrap();
        let times = linspace(10e-9, 400e-9, 40);
        let obs = [Observable::Trace];
        match evolve(&sys.model, &seq, &DensityState::ground(&sys.space), &times, &obs, &sys.settings) {
            Ok(r) => {
                if r.columns[0].1.iter().any(|t| (t - 1.0).abs() > 1e-8) {
                    fails.push(format!("trace drift at phi = {phase}"));
                }
                let s = r.final_state;
                if s.hermiticity_deviation() > 1e-10 || s.min_eigenvalue() < -1e-6 {
                    fails.push(format!("final state invalid at phi = {phase}"));
                }
            }
            Err(e) => fails.push(format!("trajectory at phi = {phase}: {e}")),
        }
    }
    // manifold conservation and decay budget
    for name in ["ideal_identical.cfg", "paper_tableS1.cfg"] {
        let cfg = fixture(name).unwrap();
        let space = FockSpace::new(4, 3).unwrap();
        let h = effective_hamiltonian(&cfg, &space, true).unwrap();
        let m = h.matrix();
        let leaks = (0..space.dim())
            .flat_map(|r| (0..space.dim()).map(move |c| (r, c)))
            .any(|(r, c)| space.total_occupation(r) != space.total_occupation(c) && m[(r, c)].norm() > 0.0);
        if leaks {
            fails.push(format!("{name}: H_eff couples manifolds"));
        }
        let spec = spectrum(&h, &space).unwrap();
        for mf in &spec.manifolds {
            let sum: f64 = mf.states.iter().map(|&i| spec.states[i].decay).sum();
            let trace: f64 = space.manifold(mf.occupation).iter().map(|&i| m[(i, i)].im).sum();
            if (sum + 2.0 * trace).abs() > 1e-9 * sum.abs().max(1.0) {
                fails.push(format!("{name}: decay budget of manifold {}", mf.occupation));
            }
        }
    }
    // integrator order
    let run = |h: f64| {
        let settings = IntegratorSettings {
            rtol: 1e6,
            atol: 1e6,
            max_step: Some(h),
            ..Default::default()
        };
        let mut stepper = Dopri5::new(1, settings).unwrap();
        let (mut t, mut y) = (0.0, vec![C64::new(1.0, 0.0)]);
        let mut rhs = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, 3.0) * y[0];
        stepper.advance(&mut rhs, &mut t, &mut y, 2.0, |_, _, _| Ok(())).unwrap();
        (y[0] - C64::from_polar(1.0, 6.0)).norm()
    };
    let order = (run(0.05) / run(0.025)).log2();
    if !(4.5..6.5).contains(&order) {
        fails.push(format!("integrator order {order:.2}"));
    }
    if fails.is_empty() {
        Ok(format!("4 trajectories, 2 spectra, observed order {order:.2}"))
    } else {
        Err(fails.join("; "))
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("superradiance sum rule", Duration::from_secs(1), superradiant_sum_rule),
        ("dark-state protection", Duration::from_secs(1), dark_protection),
        ("drive selectivity", Duration::from_secs(1), drive_selectivity),
        ("T2 closed form", Duration::from_secs(120), ramsey_t2),
        ("T1 closed form", Duration::from_secs(300), t1_closed_form),
        ("dispersion calibration", Duration::from_secs(600), dispersion_calibration),
        ("two-excitation oracle", Duration::from_secs(1), two_excitation_oracle),
        ("adiabatic elimination", Duration::from_secs(60), adiabatic_elimination),
        ("leakage suppression", Duration::from_secs(600), leakage_monotonicity),
        ("transmission linewidths", Duration::from_secs(120), transmission_linewidths),
        ("property suite", Duration::from_secs(600), property_suite),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} {:>2}. {name}: {detail} [{:.2} s / {} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
