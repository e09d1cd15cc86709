//! Closed-form results for identical transmons, used as ground truth for the numerics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::dynamics::{evolve, DensityState, LindbladModel, Observable, PulseSequence};
use crate::fit::{fit_exponential, ExponentialFit};
use crate::fockspace::FockSpace;
use crate::integrator::IntegratorSettings;
use crate::operator::ComplexOperator;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Collective creation operators and the zero/one-excitation states.
#[derive(Clone, Debug)]
pub struct CollectiveBasis {
    pub ground: DVector<C64>,
    pub d1: DVector<C64>,
    pub d2: DVector<C64>,
    pub d3: DVector<C64>,
    pub b4: DVector<C64>,
    /// Creation operators in the order B4, D3, D1, D2.
    pub creators: [ComplexOperator; 4],
}

impl CollectiveBasis {
    /// Normalized `B4^b D3^d3 D1^d1 D2^d2 |G>`, the state `|b d3; d1 d2>`.
    pub fn state(&self, b: usize, d3: usize, d1: usize, d2: usize) -> DVector<C64> {
        let mut v = self.ground.clone();
        for (op, k) in self.creators.iter().zip([b, d3, d1, d2]) {
            for _ in 0..k {
                v = op.apply(&v);
            }
        }
        let n = v.norm();
        if n > 0.0 {
            v /= C64::new(n, 0.0);
        }
        v
    }

    pub fn one_excitation(&self) -> [(&'static str, &DVector<C64>); 4] {
        [("D1", &self.d1), ("D2", &self.d2), ("D3", &self.d3), ("B4", &self.b4)]
    }
}

pub fn collective_states(space: &FockSpace) -> Result<CollectiveBasis> {
    if space.n_sites() != 4 {
        return Err(Error::UnsupportedSiteCount {
            expected: 4,
            got: space.n_sites(),
        });
    }
    let ad: Vec<ComplexOperator> = space.ladder_ops().iter().map(|a| a.adjoint()).collect();
    let combo = |c: [f64; 4]| {
        let mut m = ComplexOperator::zeros(space);
        for (op, w) in ad.iter().zip(c) {
            if w != 0.0 {
                m = &m + &op.scale(C64::new(w, 0.0));
            }
        }
        m
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let creators = [
        combo([-0.5, -0.5, 0.5, 0.5]),
        combo([0.5, 0.5, 0.5, 0.5]),
        combo([s, -s, 0.0, 0.0]),
        combo([0.0, 0.0, s, -s]),
    ];
    let ground = space.basis_state(&[0, 0, 0, 0])?;
    let [b4, d3, d1, d2] = creators.clone().map(|c| c.apply(&ground));
    Ok(CollectiveBasis {
        ground,
        d1,
        d2,
        d3,
        b4,
        creators,
    })
}

/// Unnormalized two-excitation coefficients for identical transmons.
///
/// `|5>, |12>  = c (|00;20> - |00;02>) + |11;00>`
/// `|7>, |10>  = c |01;10> + |10;10>`
/// `|8>, |11>  = c |01;01> + |10;01>`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoExcitationCoefficients {
    pub c5: C64,
    pub c7: C64,
    pub c8: C64,
    pub c10: C64,
    pub c11: C64,
    pub c12: C64,
}

/// Closed-form coefficients from the waveguide decay `gamma`, exchange `j`
/// and anharmonicity `u` of identical transmons.
///
/// The `|7>`, `|8>`, `|10>`, `|11>` coefficients carry the sign of the `2 i gamma`
/// term that makes them exact eigenvectors; see [`printed_two_excitation`].
pub fn analytic_two_excitation(gamma: f64, j: f64, u: f64) -> Result<TwoExcitationCoefficients> {
    if u == 0.0 {
        return Err(Error::SingularCoefficient);
    }
    let g2 = C64::new(0.0, 2.0 * gamma);
    let outer = (C64::new(u * u, 0.0) + (C64::new(j, 0.0) - I * gamma / 2.0).powu(2) * 16.0).sqrt();
    let inner = C64::new(u * u - 4.0 * gamma * gamma, 0.0).sqrt();
    let su = std::f64::consts::SQRT_2 * u;
    Ok(TwoExcitationCoefficients {
        c5: (g2 - 4.0 * j + outer) / su,
        c12: (g2 - 4.0 * j - outer) / su,
        c7: (g2 - inner) / u,
        c8: (-g2 + inner) / u,
        c10: (g2 + inner) / u,
        c11: (-g2 - inner) / u,
    })
}

/// The `|7>`, `|8>`, `|10>`, `|11>` coefficients with the signs as printed in the
/// original derivation, kept for comparison.
pub fn printed_two_excitation(gamma: f64, j: f64, u: f64) -> Result<TwoExcitationCoefficients> {
    let c = analytic_two_excitation(gamma, j, u)?;
    let g2 = C64::new(0.0, 2.0 * gamma);
    let inner = C64::new(u * u - 4.0 * gamma * gamma, 0.0).sqrt();
    Ok(TwoExcitationCoefficients {
        c7: (-g2 + inner) / u,
        c8: (g2 - inner) / u,
        c10: (-g2 - inner) / u,
        c11: (g2 + inner) / u,
        ..c
    })
}

/// Normalized closed-form states `(name, vector)` for |5>, |7>..|12>.
pub fn two_excitation_states(
    basis: &CollectiveBasis,
    coeffs: &TwoExcitationCoefficients,
) -> Vec<(u8, DVector<C64>)> {
    let anti_local = basis.state(0, 0, 2, 0) - basis.state(0, 0, 0, 2);
    let combine = |c: C64, a: &DVector<C64>, b: DVector<C64>| {
        let v = a * c + b;
        let n = v.norm();
        v / C64::new(n, 0.0)
    };
    let s0110 = basis.state(0, 1, 1, 0);
    let s0101 = basis.state(0, 1, 0, 1);
    vec![
        (5, combine(coeffs.c5, &anti_local, basis.state(1, 1, 0, 0))),
        (7, combine(coeffs.c7, &s0110, basis.state(1, 0, 1, 0))),
        (8, combine(coeffs.c8, &s0101, basis.state(1, 0, 0, 1))),
        (9, basis.state(0, 0, 1, 1)),
        (10, combine(coeffs.c10, &s0110, basis.state(1, 0, 1, 0))),
        (11, combine(coeffs.c11, &s0101, basis.state(1, 0, 0, 1))),
        (12, combine(coeffs.c12, &anti_local, basis.state(1, 1, 0, 0))),
    ]
}

/// Dark-state energy relaxation rate `1/T1` for identical transmons.
pub fn t1_rate(gamma: f64, gamma_nr: f64, kappa_phi: f64) -> f64 {
    let a = 2.0 * gamma + 0.5 * kappa_phi;
    let b = 0.5 * (16.0 * gamma * gamma + 4.0 * gamma * kappa_phi + kappa_phi * kappa_phi).sqrt();
    // a - b cancels badly for gamma >> kappa; use (a^2 - b^2) / (a + b) with a^2 - b^2 = gamma kappa
    let excess = if a + b > 0.0 { gamma * kappa_phi / (a + b) } else { 0.0 };
    gamma_nr + excess
}

/// Dark-state coherence decay rate `1/T2`.
pub fn t2_rate(gamma_nr: f64, kappa_phi: f64, k_phi: f64) -> f64 {
    0.5 * (gamma_nr + kappa_phi + k_phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherenceRates {
    pub gamma_nr: f64,
    pub kappa_phi: f64,
    pub k_phi: f64,
}

/// Ground/dark coherence `rho_03(t)` for a transmon frequency `omega` and exchange `j`.
pub fn coherence_decay(rho03_initial: C64, t: f64, omega: f64, j: f64, rates: CoherenceRates) -> C64 {
    let decay = t2_rate(rates.gamma_nr, rates.kappa_phi, rates.k_phi);
    rho03_initial * C64::from_polar((-t * decay).exp(), -t * (omega + j))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdiabaticResult {
    /// AC Stark shift of the dark state.
    pub stark_shift: f64,
    /// Induced decay of the dark state through the bright state.
    pub dark_decay: f64,
    /// Amplitude of the effective jump operator `|B4><D3|`.
    #[serde(skip)]
    pub jump_amplitude: C64,
}

/// Effective dark-state shift and decay after eliminating a level detuned by
/// `detuning` (the two-photon anharmonicity) that decays at `gamma_f`, driven
/// from the dark state with amplitude `drive`.
pub fn adiabatic_elimination(drive: f64, detuning: f64, gamma_f: f64) -> Result<AdiabaticResult> {
    if detuning == 0.0 && gamma_f == 0.0 {
        return Err(Error::UndefinedRegime);
    }
    let denom = 4.0 * detuning * detuning + gamma_f * gamma_f;
    let stark_shift = 4.0 * drive * drive * detuning / denom;
    let dark_decay = 4.0 * gamma_f * drive * drive / denom;
    let jump_amplitude = C64::new(gamma_f.sqrt() * drive, 0.0) / C64::new(-detuning, -0.5 * gamma_f);
    Ok(AdiabaticResult {
        stark_shift,
        dark_decay,
        jump_amplitude,
    })
}

/// `d gamma_D / d gamma_f`, whose single sign change locates the maximum at `gamma_f = 2 |U|`.
pub fn dark_decay_slope(drive: f64, detuning: f64, gamma_f: f64) -> f64 {
    let u2 = 4.0 * detuning * detuning;
    let denom = u2 + gamma_f * gamma_f;
    4.0 * drive * drive * (u2 - gamma_f * gamma_f) / (denom * denom)
}

/// Four-level model `{G, B4, D3, f}` in the frame of a resonant drive:
/// `H = Omega(|G><D3| + h.c.) + Omega~(|D3><f| + h.c.) - U~|f><f|`, with
/// `|B4>` decaying to `|G>` at `gamma_b` and `|f>` decaying to `|B4>` at `gamma_f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedDarkModel {
    pub drive: f64,
    pub coupling: f64,
    pub detuning: f64,
    pub gamma_f: f64,
    pub gamma_b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DarkDecayComparison {
    pub model: ReducedDarkModel,
    pub simulated_rate: f64,
    pub predicted: AdiabaticResult,
    pub relative_error: f64,
    pub fit: ExponentialFit,
}

impl ReducedDarkModel {
    pub const G: usize = 0;
    pub const B4: usize = 1;
    pub const D3: usize = 2;
    pub const F: usize = 3;

    pub fn hamiltonian(&self) -> DMatrix<C64> {
        let mut h = DMatrix::<C64>::zeros(4, 4);
        h[(Self::G, Self::D3)] = C64::new(self.drive, 0.0);
        h[(Self::D3, Self::G)] = C64::new(self.drive, 0.0);
        h[(Self::D3, Self::F)] = C64::new(self.coupling, 0.0);
        h[(Self::F, Self::D3)] = C64::new(self.coupling, 0.0);
        h[(Self::F, Self::F)] = C64::new(-self.detuning, 0.0);
        h
    }

    pub fn jumps(&self) -> Vec<DMatrix<C64>> {
        let mut lb = DMatrix::<C64>::zeros(4, 4);
        lb[(Self::G, Self::B4)] = C64::new(self.gamma_b.sqrt(), 0.0);
        let mut lf = DMatrix::<C64>::zeros(4, 4);
        lf[(Self::B4, Self::F)] = C64::new(self.gamma_f.sqrt(), 0.0);
        vec![lb, lf]
    }

    pub fn lindblad(&self) -> Result<LindbladModel> {
        LindbladModel::from_operators(&self.hamiltonian(), &self.jumps())
    }

    /// Prepare `|D3>`, integrate the reduced master equation and fit the
    /// exponential decay of the dark population after the dressing transient.
    pub fn simulate_dark_decay(&self, settings: &IntegratorSettings) -> Result<DarkDecayComparison> {
        let predicted = adiabatic_elimination(self.coupling, self.detuning, self.gamma_f)?;
        if !(predicted.dark_decay > 0.0) {
            return Err(Error::InvalidParameter("no induced dark-state decay to simulate".into()));
        }
        let model = self.lindblad()?;
        let mut d3 = DVector::<C64>::zeros(4);
        d3[Self::D3] = C64::new(1.0, 0.0);
        let init = DensityState::pure(&d3)?;
        let settle = 20.0 / C64::new(self.detuning, 0.5 * self.gamma_f).norm();
        let window = 2.0 / predicted.dark_decay;
        let n = 80;
        let times: Vec<f64> = (0..n).map(|k| settle + window * k as f64 / (n - 1) as f64).collect();
        let obs = [Observable::population("D3", &d3)];
        let run = evolve(&model, &PulseSequence::new(), &init, &times, &obs, settings)?;
        let fit = fit_exponential(&times, run.column("D3").unwrap_or(&[]), false)?;
        let simulated_rate = fit.rate();
        Ok(DarkDecayComparison {
            model: *self,
            simulated_rate,
            relative_error: (simulated_rate - predicted.dark_decay).abs() / predicted.dark_decay,
            predicted,
            fit,
        })
    }
}
