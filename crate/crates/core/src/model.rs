//! Transmon array Hamiltonians, waveguide-mediated couplings and the sideport drive.
//!
//! All rates and frequencies are angular (rad/s). Site order is Q1, Q2, Q3, Q4.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::FockSpace;
use crate::linalg::eig_hermitian;
use crate::operator::ComplexOperator;
use crate::waveguide::WaveguideGeometry;

/// Largest allowed dimensionless waveguide coupling.
pub const MAX_DIMENSIONLESS_COUPLING: f64 = 0.1;
/// Relative tolerance for clipping small negative eigenvalues of the decay matrix.
pub const POSITIVITY_CLIP: f64 = 1e-6;
/// Warn when `gamma * delay` exceeds this.
pub const MARKOV_WARN: f64 = 0.01;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    /// Fundamental (lab frame) frequency.
    pub frequency: f64,
    /// Anharmonicity, positive.
    pub anharmonicity: f64,
    /// Radiative decay into the waveguide.
    pub gamma: f64,
    pub gamma_nr: f64,
    /// Local pure dephasing.
    pub kappa_phi: f64,
    /// Position along the propagation axis (m).
    pub x: f64,
    pub pair: u32,
}

impl TransmonParams {
    pub fn dimensionless_coupling(&self) -> f64 {
        (self.gamma / (2.0 * PI * self.frequency)).sqrt()
    }

    fn validate(&self, site: usize) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidParameter(format!("transmon {}: {what} = {v} is not allowed", site + 1)))
        };
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return bad("frequency", self.frequency);
        }
        for (name, v) in [
            ("anharmonicity", self.anharmonicity),
            ("gamma", self.gamma),
            ("gamma_nr", self.gamma_nr),
            ("kappa_phi", self.kappa_phi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        if !self.x.is_finite() {
            return bad("x", self.x);
        }
        let g = self.dimensionless_coupling();
        if g >= MAX_DIMENSIONLESS_COUPLING {
            return Err(Error::InvalidParameter(format!(
                "transmon {}: dimensionless coupling {g:.4} >= {MAX_DIMENSIONLESS_COUPLING}, outside the weak-coupling model",
                site + 1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingMode {
    /// Propagation phases from the waveguide dispersion at each emitter's frequency.
    ExactDelay,
    /// Phase `phase * |x_j - x_k| / d_y`, independent of frequency.
    FixedPhase { phase: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectCoupling {
    pub sites: (usize, usize),
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub transmons: Vec<TransmonParams>,
    pub direct: Vec<DirectCoupling>,
    /// Global (collective) dephasing.
    pub k_phi: f64,
    pub geometry: WaveguideGeometry,
    pub coupling_mode: CouplingMode,
    /// Rotating-frame frequency subtracted from every transmon in `H_T`.
    pub frame: f64,
}

impl SystemConfig {
    pub fn n_sites(&self) -> usize {
        self.transmons.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.transmons.is_empty() {
            return Err(Error::InvalidParameter("no transmons".into()));
        }
        self.geometry.validate()?;
        for (j, t) in self.transmons.iter().enumerate() {
            t.validate(j)?;
        }
        for c in &self.direct {
            let (j, k) = c.sites;
            let n = self.n_sites();
            if j >= n || k >= n {
                return Err(Error::SiteOutOfRange { site: j.max(k), n_sites: n });
            }
            if j == k {
                return Err(Error::InvalidParameter(format!("direct coupling of site {} to itself", j + 1)));
            }
            if (self.transmons[j].x - self.transmons[k].x).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "direct coupling between sites {} and {} at different positions",
                    j + 1,
                    k + 1
                )));
            }
        }
        if !(self.k_phi >= 0.0 && self.k_phi.is_finite()) {
            return Err(Error::InvalidParameter(format!("K_phi = {} must be >= 0", self.k_phi)));
        }
        if let CouplingMode::FixedPhase { phase } = self.coupling_mode {
            if !phase.is_finite() {
                return Err(Error::InvalidParameter("fixed phase must be finite".into()));
            }
            if !(self.geometry.d_y > 0.0) && self.positions_differ() {
                return Err(Error::InvalidParameter("fixed_phase mode needs d_y > 0".into()));
            }
        }
        Ok(())
    }

    fn positions_differ(&self) -> bool {
        let x0 = self.transmons[0].x;
        self.transmons.iter().any(|t| (t.x - x0).abs() > 1e-12)
    }

    /// Transmon frequencies relative to the rotating frame.
    pub fn frame_frequencies(&self) -> Vec<f64> {
        self.transmons.iter().map(|t| t.frequency - self.frame).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.transmons.iter().map(|t| t.gamma).collect()
    }

    pub fn max_gamma(&self) -> f64 {
        self.transmons.iter().map(|t| t.gamma).fold(0.0, f64::max)
    }

    /// Copy of the configuration with all local dissipation and dephasing removed.
    pub fn without_local_losses(&self) -> Self {
        let mut c = self.clone();
        for t in &mut c.transmons {
            t.gamma_nr = 0.0;
            t.kappa_phi = 0.0;
        }
        c.k_phi = 0.0;
        c
    }

    fn check_space(&self, space: &FockSpace) -> Result<()> {
        if space.n_sites() != self.n_sites() {
            return Err(Error::UnsupportedSiteCount {
                expected: self.n_sites(),
                got: space.n_sites(),
            });
        }
        Ok(())
    }
}

/// Same configuration viewed in the frame rotating at `drive_frequency`.
///
/// Couplings keep depending on the lab frequencies; only `H_T` is shifted.
pub fn rotating_frame(cfg: &SystemConfig, drive_frequency: f64) -> Result<SystemConfig> {
    if !(drive_frequency > 0.0 && drive_frequency.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "frame frequency {drive_frequency} must be positive"
        )));
    }
    let mut c = cfg.clone();
    c.frame = drive_frequency;
    Ok(c)
}

/// `H_T = sum_j [w_j n_j - U_j/2 n_j(n_j - 1)] + sum J_jk (a_j^dag a_k + h.c.)`.
pub fn transmon_hamiltonian(cfg: &SystemConfig, space: &FockSpace) -> Result<ComplexOperator> {
    cfg.check_space(space)?;
    let dim = space.dim();
    let freqs = cfg.frame_frequencies();
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for idx in 0..dim {
        let occ = space.occupation(idx);
        let mut e = 0.0;
        for (j, t) in cfg.transmons.iter().enumerate() {
            let n = occ[j] as f64;
            e += freqs[j] * n - 0.5 * t.anharmonicity * n * (n - 1.0);
        }
        h[(idx, idx)] = C64::new(e, 0.0);
    }
    let ops = space.ladder_ops();
    for c in &cfg.direct {
        let (j, k) = c.sites;
        let hop = ops[j].adjoint().matrix() * ops[k].matrix();
        h += (&hop + hop.adjoint()) * C64::new(c.strength, 0.0);
    }
    ComplexOperator::from_matrix(space, h)?.mark_hermitian()
}

/// Waveguide-mediated coherent exchange and correlated decay, both hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveguideCouplings {
    /// Coherent exchange, entry `(j, k)` multiplies `a_k^dag a_j`.
    pub exchange: DMatrix<C64>,
    /// Correlated decay matrix, positive semidefinite with `decay[(j, j)] = gamma_j`.
    pub decay: DMatrix<C64>,
}

impl WaveguideCouplings {
    /// Eigenvalues of the correlated decay matrix, ascending.
    pub fn decay_eigenvalues(&self) -> Vec<f64> {
        eig_hermitian(&self.decay).0
    }
}

pub fn waveguide_couplings(cfg: &SystemConfig) -> Result<WaveguideCouplings> {
    cfg.validate()?;
    let n = cfg.n_sites();
    let ts = &cfg.transmons;
    let mut exchange = DMatrix::<C64>::zeros(n, n);
    let mut decay = DMatrix::<C64>::zeros(n, n);

    match cfg.coupling_mode {
        CouplingMode::ExactDelay => {
            let g: Vec<f64> = ts.iter().map(|t| t.dimensionless_coupling()).collect();
            let mut worst_delay = 0.0f64;
            for j in 0..n {
                for k in 0..n {
                    let dist = (ts[j].x - ts[k].x).abs();
                    let (wj, wk) = (ts[j].frequency, ts[k].frequency);
                    let pj = cfg.geometry.phase_over(wj, dist)?;
                    let pk = cfg.geometry.phase_over(wk, dist)?;
                    worst_delay = worst_delay.max(cfg.geometry.propagation_delay(wj, dist)?);
                    let fwd = C64::from_polar(wj, pj);
                    let bwd = C64::from_polar(wk, -pk);
                    let pref = PI * g[j] * g[k];
                    decay[(j, k)] = (fwd + bwd) * pref;
                    exchange[(j, k)] = -I * 0.5 * pref * (fwd - bwd);
                }
            }
            let markov = cfg.max_gamma() * worst_delay;
            if markov > MARKOV_WARN {
                log::warn!(
                    "gamma * delay = {markov:.3e} exceeds {MARKOV_WARN}; the instantaneous correlated-decay model is approximate"
                );
            }
        }
        CouplingMode::FixedPhase { phase } => {
            for j in 0..n {
                for k in 0..n {
                    let dist = (ts[j].x - ts[k].x).abs();
                    let p = if dist == 0.0 { 0.0 } else { phase * dist / cfg.geometry.d_y };
                    let s = (ts[j].gamma * ts[k].gamma).sqrt();
                    decay[(j, k)] = C64::new(s * p.cos(), 0.0);
                    exchange[(j, k)] = C64::new(0.5 * s * p.sin(), 0.0);
                }
            }
        }
    }
    for j in 0..n {
        exchange[(j, j)] = C64::new(0.0, 0.0);
    }

    // Fold any anti-hermitian part of the decay matrix into the exchange.
    let anti = (&decay - decay.adjoint()) * C64::new(0.5, 0.0);
    exchange += &anti * C64::new(0.0, -0.5);
    decay = (&decay + decay.adjoint()) * C64::new(0.5, 0.0);
    exchange = (&exchange + exchange.adjoint()) * C64::new(0.5, 0.0);

    let decay = clip_negative(decay, cfg.max_gamma())?;
    Ok(WaveguideCouplings { exchange, decay })
}

fn clip_negative(decay: DMatrix<C64>, scale: f64) -> Result<DMatrix<C64>> {
    let (vals, vecs) = eig_hermitian(&decay);
    let tol = POSITIVITY_CLIP * scale;
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -tol {
        return Err(Error::NotPositive { min_eig: min, tol });
    }
    if min >= 0.0 {
        return Ok(decay);
    }
    let n = decay.nrows();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        if v > 0.0 {
            let col = vecs.column(k);
            out += col * col.adjoint() * C64::new(v, 0.0);
        }
    }
    Ok(out)
}

/// Non-hermitian effective Hamiltonian, optionally with the dephasing terms.
pub fn effective_hamiltonian(
    cfg: &SystemConfig,
    space: &FockSpace,
    include_dephasing: bool,
) -> Result<ComplexOperator> {
    let couplings = waveguide_couplings(cfg)?;
    effective_hamiltonian_with(cfg, space, &couplings, include_dephasing)
}

pub fn effective_hamiltonian_with(
    cfg: &SystemConfig,
    space: &FockSpace,
    couplings: &WaveguideCouplings,
    include_dephasing: bool,
) -> Result<ComplexOperator> {
    let mut h = transmon_hamiltonian(cfg, space)?.into_matrix();
    let ops = space.ladder_ops();
    let n = cfg.n_sites();
    for j in 0..n {
        for k in 0..n {
            let c = couplings.exchange[(j, k)] - I * 0.5 * couplings.decay[(j, k)];
            if c.norm() == 0.0 {
                continue;
            }
            h += ops[k].adjoint().matrix() * ops[j].matrix() * c;
        }
    }
    for idx in 0..space.dim() {
        let occ = space.occupation(idx);
        let mut loss = 0.0;
        for (j, t) in cfg.transmons.iter().enumerate() {
            let nj = occ[j] as f64;
            loss += t.gamma_nr * nj;
            if include_dephasing {
                loss += t.kappa_phi * nj * nj;
            }
        }
        if include_dephasing {
            let total = space.total_occupation(idx) as f64;
            loss += cfg.k_phi * total * total;
        }
        h[(idx, idx)] -= I * 0.5 * loss;
    }
    ComplexOperator::from_matrix(space, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Rabi amplitude.
    pub amplitude: f64,
    /// Sideport phase difference between pair (Q1, Q2) and pair (Q3, Q4).
    pub phase: f64,
    /// Within-pair amplitude gradient.
    pub gradient: f64,
    pub frequency: f64,
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!("drive amplitude {} must be >= 0", self.amplitude)));
        }
        if !(self.gradient >= 0.0 && self.gradient <= self.amplitude) {
            return Err(Error::InvalidParameter(format!(
                "drive gradient {} must lie in [0, amplitude]",
                self.gradient
            )));
        }
        Ok(())
    }
}

/// Gradient-to-amplitude ratio giving a power ratio `q` between the second
/// and first transmon of each pair.
pub fn gradient_ratio_for_power_ratio(q: f64) -> f64 {
    let s = q.sqrt();
    2.0 * (1.0 - s) / (1.0 + s)
}

/// Lowering part `X` of the drive per unit amplitude, so that
/// `H_d = Omega (X + X^dag)` for a static resonant drive.
///
/// `X = 1/2 [e^{i phi}(a1 + a2) + a3 + a4] + r/4 [e^{i phi}(a1 - a2) + a3 - a4]`
/// with `r` the gradient ratio.
pub fn drive_operator(space: &FockSpace, phase: f64, gradient_ratio: f64) -> Result<ComplexOperator> {
    if space.n_sites() != 4 {
        return Err(Error::UnsupportedSiteCount {
            expected: 4,
            got: space.n_sites(),
        });
    }
    let coeffs = drive_site_coefficients(phase, gradient_ratio);
    let ops = space.ladder_ops();
    let mut x = DMatrix::<C64>::zeros(space.dim(), space.dim());
    for (op, c) in ops.iter().zip(coeffs) {
        x += op.matrix() * c;
    }
    ComplexOperator::from_matrix(space, x)
}

/// Per-site coefficients of `a_j` in [`drive_operator`].
pub fn drive_site_coefficients(phase: f64, gradient_ratio: f64) -> [C64; 4] {
    let e = C64::from_polar(1.0, phase);
    let (sym, anti) = (0.5, 0.25 * gradient_ratio);
    [
        e * (sym + anti),
        e * (sym - anti),
        C64::new(sym + anti, 0.0),
        C64::new(sym - anti, 0.0),
    ]
}

/// Static drive Hamiltonian in the frame of the drive.
pub fn drive_hamiltonian(drive: &DriveConfig, space: &FockSpace) -> Result<ComplexOperator> {
    drive.validate()?;
    let ratio = if drive.amplitude > 0.0 { drive.gradient / drive.amplitude } else { 0.0 };
    let x = drive_operator(space, drive.phase, ratio)?;
    let h = (&x + &x.adjoint()).scale(C64::new(drive.amplitude, 0.0));
    h.mark_hermitian()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MHZ: f64 = 2.0 * PI * 1e6;
    const GHZ: f64 = 2.0 * PI * 1e9;

    fn transmon(freq: f64, gamma: f64, x: f64, pair: u32) -> TransmonParams {
        TransmonParams {
            frequency: freq,
            anharmonicity: 218.0 * MHZ,
            gamma,
            gamma_nr: 0.0,
            kappa_phi: 0.0,
            x,
            pair,
        }
    }

    fn pair(phase: f64) -> SystemConfig {
        SystemConfig {
            transmons: vec![transmon(7.3 * GHZ, 28.0 * MHZ, 0.0, 1), transmon(7.3 * GHZ, 28.0 * MHZ, 0.046, 2)],
            direct: vec![],
            k_phi: 0.0,
            geometry: WaveguideGeometry::new(22.9e-3, 46e-3).unwrap(),
            coupling_mode: CouplingMode::FixedPhase { phase },
            frame: 0.0,
        }
    }

    #[test]
    fn single_transmon_second_level() {
        let mut cfg = pair(0.0);
        cfg.transmons.truncate(1);
        cfg.transmons[0].frequency = 7.321 * GHZ;
        cfg.transmons[0].anharmonicity = 219.0 * MHZ;
        let space = FockSpace::new(1, 3).unwrap();
        let h = transmon_hamiltonian(&cfg, &space).unwrap();
        assert!(h.is_hermitian());
        let e2 = h.matrix()[(2, 2)].re / GHZ;
        assert!((e2 - 14.423).abs() < 1e-9);
    }

    #[test]
    fn resonant_pair_splits_by_j() {
        let mut cfg = pair(0.0);
        cfg.transmons[1].x = 0.0;
        cfg.direct.push(DirectCoupling { sites: (0, 1), strength: 45.0 * MHZ });
        let space = FockSpace::new(2, 3).unwrap();
        let h = transmon_hamiltonian(&cfg, &space).unwrap();
        let idx: Vec<usize> = space.manifold(1).to_vec();
        let block = DMatrix::from_fn(2, 2, |r, c| h.matrix()[(idx[r], idx[c])]);
        let (vals, _) = eig_hermitian(&block);
        let w = 7.3 * GHZ;
        assert!((vals[0] - (w - 45.0 * MHZ)).abs() < 1e-3);
        assert!((vals[1] - (w + 45.0 * MHZ)).abs() < 1e-3);
    }

    #[test]
    fn fixed_phase_limits() {
        let g = 28.0 * MHZ;
        for (phase, gc, jt) in [(PI, -g, 0.0), (0.0, g, 0.0), (PI / 2.0, 0.0, g / 2.0)] {
            let c = waveguide_couplings(&pair(phase)).unwrap();
            assert!((c.decay[(0, 1)].re - gc).abs() < 1e-6 * g);
            assert!((c.exchange[(0, 1)].re - jt).abs() < 1e-6 * g);
            assert!((c.decay[(0, 0)].re - g).abs() < 1e-9 * g);
        }
        let vals = waveguide_couplings(&pair(PI)).unwrap().decay_eigenvalues();
        assert!(vals[0].abs() < 1e-6 * g);
        assert!((vals[1] - 2.0 * g).abs() < 1e-6 * g);
    }

    #[test]
    fn exact_delay_matches_main_text_for_identical_emitters() {
        for &phase in &[0.3, PI / 2.0, PI, 2.5] {
            let mut cfg = pair(0.0);
            cfg.coupling_mode = CouplingMode::ExactDelay;
            // place the second emitter where beta * x = phase
            let beta = cfg.geometry.propagation_constant(7.3 * GHZ).unwrap();
            cfg.transmons[1].x = phase / beta;
            let c = waveguide_couplings(&cfg).unwrap();
            let g = 28.0 * MHZ;
            assert!((c.decay[(0, 0)].re - g).abs() < 1e-9 * g);
            assert!((c.decay[(0, 1)] - C64::new(g * phase.cos(), 0.0)).norm() < 1e-9 * g);
            assert!((c.exchange[(0, 1)] - C64::new(0.5 * g * phase.sin(), 0.0)).norm() < 1e-9 * g);
        }
    }

    #[test]
    fn exact_delay_detuned_pair_is_hermitian_psd() {
        let mut cfg = pair(0.0);
        cfg.coupling_mode = CouplingMode::ExactDelay;
        cfg.transmons[1].frequency = 7.2 * GHZ;
        cfg.transmons[1].gamma = 20.0 * MHZ;
        let c = waveguide_couplings(&cfg).unwrap();
        assert!((&c.decay - c.decay.adjoint()).norm() < 1e-6);
        assert!((&c.exchange - c.exchange.adjoint()).norm() < 1e-6);
        assert!(c.decay_eigenvalues()[0] >= 0.0);
        assert!((c.decay[(1, 1)].re - 20.0 * MHZ).abs() < 1e-6 * MHZ);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut cfg = pair(PI);
        cfg.transmons[0].gamma = -1.0;
        assert!(waveguide_couplings(&cfg).unwrap_err().is_config_error());
        let mut cfg = pair(PI);
        cfg.transmons[0].gamma = 0.05 * cfg.transmons[0].frequency * 2.0 * PI;
        assert!(cfg.validate().is_err());
        let mut cfg = pair(PI);
        cfg.direct.push(DirectCoupling { sites: (0, 1), strength: 1.0 });
        assert!(cfg.validate().is_err());
        let mut cfg = pair(PI);
        cfg.coupling_mode = CouplingMode::ExactDelay;
        cfg.transmons[0].frequency = 6.0 * GHZ;
        assert!(matches!(waveguide_couplings(&cfg), Err(Error::BelowCutoff { .. })));
    }

    #[test]
    fn rotating_frame_shifts_only_transmon_energies() {
        let cfg = pair(PI);
        let rot = rotating_frame(&cfg, 7.3 * GHZ).unwrap();
        let f = rot.frame_frequencies();
        assert!(f[0].abs() < 1e-3);
        assert!((f[0] - f[1] - (cfg.transmons[0].frequency - cfg.transmons[1].frequency)).abs() < 1e-6);
        assert_eq!(waveguide_couplings(&cfg).unwrap(), waveguide_couplings(&rot).unwrap());
        assert!(rotating_frame(&cfg, 0.0).is_err());
    }

    #[test]
    fn gradient_ratio_gives_power_ratio() {
        let r = gradient_ratio_for_power_ratio(0.75);
        let c = drive_site_coefficients(0.0, r);
        assert!(((c[1].norm() / c[0].norm()).powi(2) - 0.75).abs() < 1e-12);
        assert!(((c[3].norm() / c[2].norm()).powi(2) - 0.75).abs() < 1e-12);
    }
}
