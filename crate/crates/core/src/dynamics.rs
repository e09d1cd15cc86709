//! Lindblad master-equation dynamics with time-dependent drives.
//!
//! The generator is
//! `d rho/dt = -i (H rho - rho H^dag) + sum_m L_m rho L_m^dag + W o rho`
//! with `H` the non-hermitian effective Hamiltonian, `L_m` the collective jump
//! operators of the correlated and non-radiative decay, and `W` the elementwise
//! weights of local and collective pure dephasing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::FockSpace;
use crate::integrator::{Dopri5, IntegratorSettings, StepStats};
use crate::linalg::{eig_hermitian, solve};
use crate::model::{effective_hamiltonian_with, waveguide_couplings, SystemConfig};
use crate::operator::{ComplexOperator, SparseMatrix};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

pub const TRACE_TOL: f64 = 1e-8;
pub const TRACE_ABORT: f64 = 1e-6;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Largest dimension for which the Liouvillian is built densely.
pub const DENSE_LIOUVILLIAN_MAX: usize = 1600;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    rho: DMatrix<C64>,
}

impl DensityState {
    pub fn from_matrix(rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        let s = DensityState { rho };
        s.validate(TRACE_TOL)?;
        Ok(s)
    }

    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(DensityState { rho: &v * v.adjoint() })
    }

    pub fn ground(space: &FockSpace) -> Self {
        let mut rho = DMatrix::zeros(space.dim(), space.dim());
        rho[(0, 0)] = ONE;
        DensityState { rho }
    }

    pub(crate) fn from_slice_unchecked(dim: usize, data: &[C64]) -> Self {
        DensityState {
            rho: DMatrix::from_column_slice(dim, dim, data),
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        purity_of(self.rho.as_slice())
    }

    /// `<psi| rho |psi>` for a normalized `psi`.
    pub fn population(&self, psi: &DVector<C64>) -> f64 {
        population_of(self.dim(), self.rho.as_slice(), psi)
    }

    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        (op * &self.rho).trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        eig_hermitian(&herm).0.first().copied().unwrap_or(0.0)
    }

    /// Unit trace within `trace_tol`, hermitian and positive semidefinite.
    pub fn validate(&self, trace_tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - ONE).norm() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let h = self.hermiticity_deviation();
        if h > HERMITICITY_TOL.max(1e-12 * self.rho.camax()) {
            return Err(Error::InvalidState(format!("not hermitian (deviation {h:.2e})")));
        }
        let m = self.min_eigenvalue();
        if m < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {m:.2e}")));
        }
        Ok(())
    }
}

fn purity_of(rho: &[C64]) -> f64 {
    rho.iter().map(|x| x.norm_sqr()).sum()
}

fn population_of(dim: usize, rho: &[C64], psi: &DVector<C64>) -> f64 {
    let mut acc = ZERO;
    for c in 0..dim {
        if psi[c] == ZERO {
            continue;
        }
        let col = &rho[c * dim..(c + 1) * dim];
        let mut s = ZERO;
        for r in 0..dim {
            s += psi[r].conj() * col[r];
        }
        acc += s * psi[c];
    }
    acc.re
}

fn trace_of(dim: usize, rho: &[C64]) -> C64 {
    (0..dim).map(|i| rho[i * dim + i]).sum()
}

/// Drive channel `f(t) X + conj(f(t)) X^dag` for a lowering-type operator `X`.
#[derive(Clone, Debug)]
pub struct DriveChannel {
    lowering: SparseMatrix,
    raising: SparseMatrix,
}

impl DriveChannel {
    pub fn new(x: &ComplexOperator) -> Self {
        DriveChannel {
            lowering: x.to_sparse(),
            raising: x.adjoint().to_sparse(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lowering.dim()
    }

    /// Dense `f X + conj(f) X^dag`.
    pub fn hamiltonian(&self, f: C64) -> DMatrix<C64> {
        self.lowering.to_dense() * f + self.raising.to_dense() * f.conj()
    }
}

#[derive(Clone, Debug)]
pub struct LindbladModel {
    dim: usize,
    h_eff: SparseMatrix,
    h_eff_adjoint: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    jumps_adjoint: Vec<SparseMatrix>,
    /// Elementwise dephasing weights on the column-major buffer.
    dephasing: Option<Vec<f64>>,
}

impl LindbladModel {
    /// Master equation of the waveguide system in the configured frame.
    pub fn new(cfg: &SystemConfig, space: &FockSpace) -> Result<Self> {
        let couplings = waveguide_couplings(cfg)?;
        let h_eff = effective_hamiltonian_with(cfg, space, &couplings, true)?;
        let n = cfg.n_sites();
        if space.n_sites() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                got: space.n_sites(),
            });
        }
        // correlated plus non-radiative decay, diagonalized into collective channels
        let mut total = couplings.decay.clone();
        for (j, t) in cfg.transmons.iter().enumerate() {
            total[(j, j)] += C64::new(t.gamma_nr, 0.0);
        }
        let (rates, modes) = eig_hermitian(&total);
        let floor = 1e-12 * rates.iter().fold(0.0f64, |a, &b| a.max(b));
        let ladders = space.ladder_ops();
        let mut jumps = Vec::new();
        let mut jumps_adjoint = Vec::new();
        for (m, &rate) in rates.iter().enumerate() {
            if rate <= floor {
                continue;
            }
            let mut l = DMatrix::<C64>::zeros(space.dim(), space.dim());
            for j in 0..n {
                l += ladders[j].matrix() * (modes[(j, m)] * rate.sqrt());
            }
            jumps_adjoint.push(SparseMatrix::from_dense(&l.adjoint(), 0.0));
            jumps.push(SparseMatrix::from_dense(&l, 0.0));
        }

        let dim = space.dim();
        let has_dephasing = cfg.k_phi > 0.0 || cfg.transmons.iter().any(|t| t.kappa_phi > 0.0);
        let dephasing = has_dephasing.then(|| {
            let mut w = vec![0.0; dim * dim];
            for c in 0..dim {
                let oc = space.occupation(c);
                let nc = space.total_occupation(c) as f64;
                for r in 0..dim {
                    let or = space.occupation(r);
                    let nr = space.total_occupation(r) as f64;
                    let local: f64 = cfg
                        .transmons
                        .iter()
                        .enumerate()
                        .map(|(j, t)| t.kappa_phi * (or[j] * oc[j]) as f64)
                        .sum();
                    w[c * dim + r] = local + cfg.k_phi * nr * nc;
                }
            }
            w
        });
        Ok(LindbladModel {
            dim,
            h_eff: SparseMatrix::from_dense(h_eff.matrix(), 0.0),
            h_eff_adjoint: SparseMatrix::from_dense(&h_eff.matrix().adjoint(), 0.0),
            jumps,
            jumps_adjoint,
            dephasing,
        })
    }

    /// Generic model from a hermitian Hamiltonian and jump operators.
    pub fn from_operators(hamiltonian: &DMatrix<C64>, jumps: &[DMatrix<C64>]) -> Result<Self> {
        let dim = hamiltonian.nrows();
        let dev = (hamiltonian - hamiltonian.adjoint()).camax();
        if dev > 1e-9 * hamiltonian.camax().max(1.0) {
            return Err(Error::InvalidParameter(format!("Hamiltonian not hermitian (deviation {dev:.2e})")));
        }
        let mut h = hamiltonian.clone();
        for l in jumps {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(Error::SizeMismatch { expected: dim, got: l.nrows() });
            }
            h -= l.adjoint() * l * (I * 0.5);
        }
        Ok(LindbladModel {
            dim,
            h_eff: SparseMatrix::from_dense(&h, 0.0),
            h_eff_adjoint: SparseMatrix::from_dense(&h.adjoint(), 0.0),
            jumps: jumps.iter().map(|l| SparseMatrix::from_dense(l, 0.0)).collect(),
            jumps_adjoint: jumps.iter().map(|l| SparseMatrix::from_dense(&l.adjoint(), 0.0)).collect(),
            dephasing: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// `out = L(rho)` with drive channels weighted by `drives`.
    pub fn rhs(&self, rho: &[C64], drives: &[(C64, &DriveChannel)], out: &mut [C64], scratch: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        self.h_eff.mul_left_acc(-I, rho, out);
        self.h_eff.mul_right_adjoint_acc(I, rho, out);
        for l in &self.jumps {
            l.sandwich_acc(ONE, rho, scratch, out);
        }
        if let Some(w) = &self.dephasing {
            for ((o, r), w) in out.iter_mut().zip(rho).zip(w) {
                *o += r * *w;
            }
        }
        for &(f, ch) in drives {
            if f == ZERO {
                continue;
            }
            // -i [f X + f* X^dag, rho]
            ch.lowering.mul_left_acc(-I * f, rho, out);
            ch.raising.mul_left_acc(-I * f.conj(), rho, out);
            ch.raising.mul_right_adjoint_acc(I * f, rho, out);
            ch.lowering.mul_right_adjoint_acc(I * f.conj(), rho, out);
        }
    }

    /// Same generator for hermitian `rho`: builds `A` with `L(rho) = A + A^dag`,
    /// which keeps the result exactly hermitian. `work` needs `dim^2` entries.
    pub fn rhs_hermitian(
        &self,
        rho: &[C64],
        drives: &[(C64, &DriveChannel)],
        out: &mut [C64],
        scratch: &mut [C64],
        work: &mut [C64],
    ) {
        let n = self.dim;
        work.iter_mut().for_each(|x| *x = ZERO);
        self.h_eff.mul_left_acc(-I, rho, work);
        let half = C64::new(0.5, 0.0);
        for l in &self.jumps {
            l.sandwich_acc(half, rho, scratch, work);
        }
        if let Some(w) = &self.dephasing {
            for ((o, r), w) in work.iter_mut().zip(rho).zip(w) {
                *o += r * (0.5 * w);
            }
        }
        for &(f, ch) in drives {
            if f == ZERO {
                continue;
            }
            ch.lowering.mul_left_acc(-I * f, rho, work);
            ch.raising.mul_left_acc(-I * f.conj(), rho, work);
        }
        for c in 0..n {
            for r in 0..n {
                out[c * n + r] = work[c * n + r] + work[r * n + c].conj();
            }
        }
    }

    /// Adjoint generator acting on a hermitian observable `O`:
    /// `i H^dag O - i O H + sum_m L_m^dag O L_m + W o O` plus the drive commutator.
    pub fn rhs_adjoint_hermitian(
        &self,
        obs: &[C64],
        drives: &[(C64, &DriveChannel)],
        out: &mut [C64],
        scratch: &mut [C64],
        work: &mut [C64],
    ) {
        let n = self.dim;
        work.iter_mut().for_each(|x| *x = ZERO);
        self.h_eff_adjoint.mul_left_acc(I, obs, work);
        let half = C64::new(0.5, 0.0);
        for l in &self.jumps_adjoint {
            l.sandwich_acc(half, obs, scratch, work);
        }
        if let Some(w) = &self.dephasing {
            for ((o, r), w) in work.iter_mut().zip(obs).zip(w) {
                *o += r * (0.5 * w);
            }
        }
        for &(f, ch) in drives {
            if f == ZERO {
                continue;
            }
            ch.lowering.mul_left_acc(I * f, obs, work);
            ch.raising.mul_left_acc(I * f.conj(), obs, work);
        }
        for c in 0..n {
            for r in 0..n {
                out[c * n + r] = work[c * n + r] + work[r * n + c].conj();
            }
        }
    }

    /// Dense Liouvillian on column-stacked `rho` for fixed drive weights.
    pub fn liouvillian(&self, drives: &[(C64, &DriveChannel)]) -> Result<DMatrix<C64>> {
        let n2 = self.dim * self.dim;
        if n2 > DENSE_LIOUVILLIAN_MAX {
            return Err(Error::InvalidParameter(format!(
                "dense Liouvillian of size {n2} exceeds {DENSE_LIOUVILLIAN_MAX}"
            )));
        }
        let mut l = DMatrix::<C64>::zeros(n2, n2);
        let mut e = vec![ZERO; n2];
        let mut out = vec![ZERO; n2];
        let mut scratch = vec![ZERO; n2];
        for k in 0..n2 {
            e[k] = ONE;
            self.rhs(&e, drives, &mut out, &mut scratch);
            l.column_mut(k).copy_from_slice(&out);
            e[k] = ZERO;
        }
        Ok(l)
    }

    /// Stationary state of a time-independent generator, from the null space
    /// of the dense Liouvillian with one row replaced by the trace condition.
    pub fn steady_state(&self, drives: &[(C64, &DriveChannel)]) -> Result<DensityState> {
        let n = self.dim;
        let mut l = self.liouvillian(drives)?;
        let scale = l.camax().max(1.0);
        l /= C64::new(scale, 0.0);
        let mut b = DVector::<C64>::zeros(n * n);
        for c in 0..n * n {
            l[(0, c)] = ZERO;
        }
        for i in 0..n {
            l[(0, i * n + i)] = ONE;
        }
        b[0] = ONE;
        let x = solve(l, &b)?;
        let mut rho = DMatrix::from_column_slice(n, n, x.as_slice());
        rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
        DensityState::from_matrix(rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PulseShape {
    /// Gaussian with `sigma = duration / 3`, truncated at `+-1.5 sigma` and
    /// shifted so that it vanishes at the edges.
    Gaussian,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    /// Length (s).
    pub duration: f64,
    /// Peak drive amplitude (rad/s).
    pub amplitude: f64,
}

impl PulseEnvelope {
    pub fn gaussian(duration: f64, amplitude: f64) -> Self {
        PulseEnvelope {
            shape: PulseShape::Gaussian,
            duration,
            amplitude,
        }
    }

    pub fn rectangular(duration: f64, amplitude: f64) -> Self {
        PulseEnvelope {
            shape: PulseShape::Rectangular,
            duration,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("pulse duration {} must be positive", self.duration)));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pulse amplitude {} must be non-negative",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Envelope at time `tau` since the pulse start; zero outside the pulse.
    pub fn value(&self, tau: f64) -> f64 {
        if !(0.0..=self.duration).contains(&tau) {
            return 0.0;
        }
        match self.shape {
            PulseShape::Rectangular => self.amplitude,
            PulseShape::Gaussian => {
                let sigma = self.duration / 3.0;
                let x = (tau - 0.5 * self.duration) / sigma;
                let edge = (-1.125f64).exp();
                self.amplitude * ((-0.5 * x * x).exp() - edge) / (1.0 - edge)
            }
        }
    }

    /// Integral of the envelope over the pulse (rad).
    pub fn area(&self) -> f64 {
        match self.shape {
            PulseShape::Rectangular => self.amplitude * self.duration,
            PulseShape::Gaussian => self.amplitude * self.duration * gaussian_unit_area(),
        }
    }

    /// Same shape and duration, with the amplitude scaled to the requested area.
    pub fn with_area(&self, area: f64) -> Self {
        let unit = PulseEnvelope { amplitude: 1.0, ..*self }.area();
        PulseEnvelope {
            amplitude: area / unit,
            ..*self
        }
    }
}

/// Area of the unit-peak, unit-duration truncated gaussian (Simpson rule).
fn gaussian_unit_area() -> f64 {
    let env = PulseEnvelope::gaussian(1.0, 1.0);
    let n = 2000;
    let h = 1.0 / n as f64;
    let mut s = env.value(0.0) + env.value(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * env.value(k as f64 * h);
    }
    s * h / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Pulse {
    pub envelope: PulseEnvelope,
    /// Start time (s).
    pub start: f64,
    /// Carrier phase theta (rad).
    pub phase: f64,
    /// Carrier detuning from the frame frequency (rad/s).
    pub detuning: f64,
    /// Index into the sequence's drive channels.
    pub channel: usize,
}

impl Pulse {
    pub fn end(&self) -> f64 {
        self.start + self.envelope.duration
    }

    /// Complex drive weight `Omega(t) e^{i theta} e^{i Delta t}`.
    pub fn coefficient(&self, t: f64) -> C64 {
        let a = self.envelope.value(t - self.start);
        if a == 0.0 {
            return ZERO;
        }
        C64::from_polar(a, self.phase + self.detuning * t)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PulseSequence {
    channels: Vec<DriveChannel>,
    pulses: Vec<Pulse>,
}

impl PulseSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_channel(&mut self, x: &ComplexOperator) -> usize {
        self.channels.push(DriveChannel::new(x));
        self.channels.len() - 1
    }

    pub fn push(&mut self, pulse: Pulse) -> Result<()> {
        pulse.envelope.validate()?;
        if pulse.channel >= self.channels.len() {
            return Err(Error::InvalidParameter(format!("unknown drive channel {}", pulse.channel)));
        }
        if !(pulse.start >= 0.0) {
            return Err(Error::InvalidParameter("pulse start must be non-negative".into()));
        }
        self.pulses.push(pulse);
        Ok(())
    }

    /// Append a pulse on `channel` starting when the last pulse ends.
    pub fn append(&mut self, envelope: PulseEnvelope, phase: f64, detuning: f64, channel: usize) -> Result<()> {
        let start = self.end();
        self.push(Pulse {
            envelope,
            start,
            phase,
            detuning,
            channel,
        })
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn channels(&self) -> &[DriveChannel] {
        &self.channels
    }

    pub fn end(&self) -> f64 {
        self.pulses.iter().map(Pulse::end).fold(0.0, f64::max)
    }

    /// Pulse edges, where the generator may change non-smoothly.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pulses.iter().flat_map(|p| [p.start, p.end()]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Per-channel drive weights at time `t`.
    pub fn weights(&self, t: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        for p in &self.pulses {
            out[p.channel] += p.coefficient(t);
        }
    }
}

#[derive(Clone, Debug)]
pub enum Observable {
    Population { name: String, state: DVector<C64> },
    Expectation { name: String, operator: DMatrix<C64> },
    Purity,
    Trace,
}

impl Observable {
    pub fn population(name: &str, state: &DVector<C64>) -> Self {
        Observable::Population {
            name: name.to_string(),
            state: state / C64::new(state.norm(), 0.0),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Observable::Population { name, .. } | Observable::Expectation { name, .. } => name,
            Observable::Purity => "purity",
            Observable::Trace => "trace",
        }
    }

    fn eval(&self, dim: usize, rho: &[C64]) -> f64 {
        match self {
            Observable::Population { state, .. } => population_of(dim, rho, state),
            Observable::Expectation { operator, .. } => {
                let m = DMatrix::from_column_slice(dim, dim, rho);
                (operator * m).trace().re
            }
            Observable::Purity => purity_of(rho),
            Observable::Trace => trace_of(dim, rho).re,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    #[serde(skip)]
    pub final_state: DensityState,
    pub stats: StepStats,
}

impl SimResult {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Integrates the master equation and records observables at `sample_times`
/// (ascending, non-negative; the initial state is taken at `t = start`).
pub struct Evolution<'a> {
    model: &'a LindbladModel,
    sequence: &'a PulseSequence,
    settings: IntegratorSettings,
    stepper: Dopri5,
    t: f64,
    rho: Vec<C64>,
    trace0: f64,
}

impl<'a> Evolution<'a> {
    pub fn new(
        model: &'a LindbladModel,
        sequence: &'a PulseSequence,
        initial: &DensityState,
        start: f64,
        settings: &IntegratorSettings,
    ) -> Result<Self> {
        if initial.dim() != model.dim() {
            return Err(Error::SizeMismatch {
                expected: model.dim(),
                got: initial.dim(),
            });
        }
        if let Some(ch) = sequence.channels().iter().find(|c| c.dim() != model.dim()) {
            return Err(Error::SizeMismatch {
                expected: model.dim(),
                got: ch.dim(),
            });
        }
        initial.validate(TRACE_TOL)?;
        let n2 = model.dim() * model.dim();
        Ok(Evolution {
            model,
            sequence,
            settings: *settings,
            stepper: Dopri5::new(n2, *settings)?,
            t: start,
            rho: initial.matrix().as_slice().to_vec(),
            trace0: initial.trace().re,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> DensityState {
        DensityState::from_slice_unchecked(self.model.dim(), &self.rho)
    }

    pub fn stats(&self) -> StepStats {
        self.stepper.stats
    }

    /// Advance to `t_end`, stopping at pulse edges.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        if t_end < self.t {
            return Err(Error::InvalidParameter(format!(
                "cannot integrate backwards from {} to {t_end}",
                self.t
            )));
        }
        let edges: Vec<f64> = self
            .sequence
            .breakpoints()
            .into_iter()
            .filter(|&b| b > self.t && b < t_end)
            .chain(std::iter::once(t_end))
            .collect();
        let dim = self.model.dim();
        let model = self.model;
        let seq = self.sequence;
        let n_ch = seq.channels().len();
        let mut weights = vec![ZERO; n_ch];
        let mut scratch = vec![ZERO; dim * dim];
        let mut work = vec![ZERO; dim * dim];
        let mut rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            seq.weights(t, &mut weights);
            let drives: Vec<(C64, &DriveChannel)> = weights.iter().copied().zip(seq.channels()).collect();
            model.rhs_hermitian(y, &drives, dy, &mut scratch, &mut work);
        };
        let interval = self.settings.check_interval.max(1);
        let pos_tol = trajectory_positivity_tol(&self.settings);
        let trace0 = self.trace0;
        for edge in edges {
            let at_breakpoint = seq.breakpoints().contains(&self.t);
            if at_breakpoint {
                self.stepper.reset();
            }
            self.stepper.advance(&mut rhs, &mut self.t, &mut self.rho, edge, |t, y, n| {
                let drift = (trace_of(dim, y).re - trace0).abs();
                if drift > TRACE_ABORT {
                    return Err(Error::TraceDrift { t, drift });
                }
                if n % interval == 0 {
                    check_state(dim, y, t, pos_tol)?;
                }
                Ok(())
            })?;
        }
        check_state(dim, &self.rho, self.t, pos_tol)
    }
}

/// Largest negative eigenvalue tolerated along a trajectory integrated at `rtol`.
pub fn trajectory_positivity_tol(settings: &IntegratorSettings) -> f64 {
    POSITIVITY_TOL.max(100.0 * settings.rtol)
}

fn check_state(dim: usize, rho: &[C64], t: f64, positivity_tol: f64) -> Result<()> {
    let s = DensityState::from_slice_unchecked(dim, rho);
    let h = s.hermiticity_deviation();
    if h > 1e-8 {
        return Err(Error::InvalidState(format!("hermiticity lost at t = {t:.3e} s (deviation {h:.2e})")));
    }
    let m = s.min_eigenvalue();
    if m < -positivity_tol {
        return Err(Error::InvalidState(format!("negative eigenvalue {m:.2e} at t = {t:.3e} s")));
    }
    Ok(())
}

/// Heisenberg-picture observable: returns `O'` with
/// `Tr(O rho(t_end)) = Tr(O' rho(t_start))` for every initial `rho(t_start)`.
pub fn heisenberg_observable(
    model: &LindbladModel,
    sequence: &PulseSequence,
    observable: &DMatrix<C64>,
    t_start: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<DMatrix<C64>> {
    let dim = model.dim();
    if observable.nrows() != dim || observable.ncols() != dim {
        return Err(Error::SizeMismatch {
            expected: dim,
            got: observable.nrows(),
        });
    }
    if t_end < t_start {
        return Err(Error::InvalidParameter("t_end must not precede t_start".into()));
    }
    let herm = (observable + observable.adjoint()) * C64::new(0.5, 0.0);
    let mut y = herm.as_slice().to_vec();
    // s runs forward from 0 while physical time runs back from t_end
    let mut edges: Vec<f64> = sequence
        .breakpoints()
        .into_iter()
        .filter(|&b| b > t_start && b < t_end)
        .map(|b| t_end - b)
        .collect();
    edges.push(t_end - t_start);
    edges.sort_by(f64::total_cmp);
    let mut weights = vec![ZERO; sequence.channels().len()];
    let mut scratch = vec![ZERO; dim * dim];
    let mut work = vec![ZERO; dim * dim];
    let mut rhs = |s: f64, o: &[C64], d: &mut [C64]| {
        sequence.weights(t_end - s, &mut weights);
        let drives: Vec<(C64, &DriveChannel)> = weights.iter().copied().zip(sequence.channels()).collect();
        model.rhs_adjoint_hermitian(o, &drives, d, &mut scratch, &mut work);
    };
    let mut stepper = Dopri5::new(dim * dim, *settings)?;
    let mut s = 0.0;
    for edge in edges {
        stepper.reset();
        stepper.advance(&mut rhs, &mut s, &mut y, edge, |_, _, _| Ok(()))?;
    }
    Ok(DMatrix::from_column_slice(dim, dim, &y))
}

/// Evolve from `t = 0` and record `observables` at each of `sample_times`.
pub fn evolve(
    model: &LindbladModel,
    sequence: &PulseSequence,
    initial: &DensityState,
    sample_times: &[f64],
    observables: &[Observable],
    settings: &IntegratorSettings,
) -> Result<SimResult> {
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("sample times must be ascending and non-negative".into()));
    }
    let mut ev = Evolution::new(model, sequence, initial, 0.0, settings)?;
    let dim = model.dim();
    let mut columns: Vec<(String, Vec<f64>)> = observables
        .iter()
        .map(|o| (o.name().to_string(), Vec::with_capacity(sample_times.len())))
        .collect();
    for &t in sample_times {
        ev.advance_to(t)?;
        for (o, (_, col)) in observables.iter().zip(columns.iter_mut()) {
            col.push(o.eval(dim, &ev.rho));
        }
    }
    Ok(SimResult {
        times: sample_times.to_vec(),
        columns,
        final_state: ev.state(),
        stats: ev.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_envelope_shape() {
        let g = PulseEnvelope::gaussian(240e-9, 1.0);
        assert!(g.value(0.0).abs() < 1e-15);
        assert!(g.value(240e-9).abs() < 1e-12);
        assert!((g.value(120e-9) - 1.0).abs() < 1e-15);
        assert_eq!(g.value(-1e-9), 0.0);
        let a = g.with_area(PI);
        assert!((a.area() - PI).abs() < 1e-12);
        let r = PulseEnvelope::rectangular(2.0, 3.0);
        assert_eq!(r.area(), 6.0);
    }

    #[test]
    fn two_level_rabi_and_decay() {
        // |0> ground, |1> excited; X = sigma_-
        let mut x = DMatrix::<C64>::zeros(2, 2);
        x[(0, 1)] = ONE;
        let gamma: f64 = 0.3;
        let model = LindbladModel::from_operators(&DMatrix::zeros(2, 2), &[x.clone() * C64::new(gamma.sqrt(), 0.0)]).unwrap();
        let mut rho = DMatrix::zeros(2, 2);
        rho[(1, 1)] = ONE;
        let init = DensityState::from_matrix(rho).unwrap();
        let seq = PulseSequence::new();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.5).collect();
        let obs = [
            Observable::population("e", &DVector::from_vec(vec![ZERO, ONE])),
            Observable::Trace,
        ];
        let r = evolve(&model, &seq, &init, &times, &obs, &IntegratorSettings::default()).unwrap();
        for (t, p) in times.iter().zip(r.column("e").unwrap()) {
            assert!((p - (-gamma * t).exp()).abs() < 1e-8);
        }
        assert!(r.column("trace").unwrap().iter().all(|v| (v - 1.0).abs() < 1e-10));

        // coherent drive without decay: H = Omega (sigma_- + sigma_+), P_e = sin^2(Omega t)
        let model = LindbladModel::from_operators(&DMatrix::zeros(2, 2), &[]).unwrap();
        let mut seq = PulseSequence::new();
        let xop = ComplexOperator::from_matrix(&FockSpace::new(1, 2).unwrap(), x).unwrap();
        let ch = seq.add_channel(&xop);
        let omega = 2.0;
        seq.append(PulseEnvelope::rectangular(3.0, omega), 0.0, 0.0, ch).unwrap();
        let g = DensityState::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![ONE, ZERO]))).unwrap();
        let r = evolve(&model, &seq, &g, &times, &obs, &IntegratorSettings::default()).unwrap();
        for (t, p) in times.iter().zip(r.column("e").unwrap()) {
            let expect = if *t <= 3.0 { (omega * t).sin().powi(2) } else { (omega * 3.0).sin().powi(2) };
            assert!((p - expect).abs() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn steady_state_of_driven_damped_qubit() {
        let mut x = DMatrix::<C64>::zeros(2, 2);
        x[(0, 1)] = ONE;
        let gamma: f64 = 1.0;
        let model = LindbladModel::from_operators(&DMatrix::zeros(2, 2), &[x.clone() * C64::new(gamma.sqrt(), 0.0)]).unwrap();
        let xop = ComplexOperator::from_matrix(&FockSpace::new(1, 2).unwrap(), x).unwrap();
        let ch = DriveChannel::new(&xop);
        let omega = 0.4;
        let ss = model.steady_state(&[(C64::new(omega, 0.0), &ch)]).unwrap();
        // resonant: P_e = 4 Omega^2 / (gamma^2 + 8 Omega^2) for H = Omega sigma_x
        let pe = ss.matrix()[(1, 1)].re;
        let expect = 4.0 * omega * omega / (gamma * gamma + 8.0 * omega * omega);
        assert!((pe - expect).abs() < 1e-12, "{pe} vs {expect}");
        // the Liouvillian annihilates the steady state
        let l = model.liouvillian(&[(C64::new(omega, 0.0), &ch)]).unwrap();
        let v = DVector::from_column_slice(ss.matrix().as_slice());
        assert!((l * v).camax() < 1e-12);
    }

    #[test]
    fn heisenberg_picture_matches_forward_evolution() {
        let cfg = crate::config::fixture("pair_q3q4.cfg").unwrap();
        let space = FockSpace::new(2, 3).unwrap();
        let model = LindbladModel::new(&cfg, &space).unwrap();
        let ops = space.ladder_ops();
        let x = (&ops[0] + &ops[1]).scale(C64::new(0.5, 0.0));
        let mut seq = PulseSequence::new();
        let ch = seq.add_channel(&x);
        seq.push(Pulse {
            envelope: PulseEnvelope::gaussian(40e-9, 2.0 * PI * 8e6),
            start: 10e-9,
            phase: 0.7,
            detuning: 2.0 * PI * 3e6,
            channel: ch,
        })
        .unwrap();
        let mut psi = DVector::<C64>::zeros(space.dim());
        psi[space.index_of(&[1, 0]).unwrap()] = ONE;
        psi[0] = C64::new(0.6, 0.2);
        let init = DensityState::pure(&psi).unwrap();
        let mut obs = DMatrix::<C64>::zeros(space.dim(), space.dim());
        obs[(0, 0)] = ONE;
        let settings = IntegratorSettings::with_tolerances(1e-10, 1e-12);
        let fwd = evolve(&model, &seq, &init, &[60e-9], &[Observable::Expectation { name: "p".into(), operator: obs.clone() }], &settings).unwrap();
        let back = heisenberg_observable(&model, &seq, &obs, 0.0, 60e-9, &settings).unwrap();
        let via_back = init.expectation(&back).re;
        assert!((fwd.column("p").unwrap()[0] - via_back).abs() < 1e-8);
    }

    #[test]
    fn invalid_states_rejected() {
        let mut rho = DMatrix::<C64>::zeros(2, 2);
        rho[(0, 0)] = C64::new(1.5, 0.0);
        rho[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityState::from_matrix(rho).is_err());
        assert!(DensityState::pure(&DVector::zeros(2)).is_err());
    }
}
