//! Unweighted nonlinear least squares (Levenberg-Marquardt) for the decay,
//! Ramsey and line-shape models used by the virtual experiments.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Fits with a residual RMS above this are flagged.
pub const RMS_FLAG: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub params: Vec<f64>,
    pub rms: f64,
    pub iterations: usize,
    pub flagged: bool,
}

/// Model evaluated at `x`: value and gradient with respect to the parameters.
pub trait FitModel {
    fn n_params(&self) -> usize;
    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64;
    /// Reject parameter vectors outside the model's domain.
    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

pub fn levenberg_marquardt<M: FitModel>(model: &M, x: &[f64], y: &[f64], p0: &[f64]) -> Result<FitReport> {
    let n = model.n_params();
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < n {
        return Err(Error::Fit(format!("{} points cannot determine {n} parameters", x.len())));
    }
    if p0.len() != n || !model.admissible(p0) {
        return Err(Error::Fit("invalid starting point".into()));
    }
    let mut p = p0.to_vec();
    let mut grad = vec![0.0; n];
    let residuals = |p: &[f64], grad: &mut [f64]| -> f64 {
        x.iter().zip(y).map(|(&xi, &yi)| (model.eval(p, xi, grad) - yi).powi(2)).sum()
    };
    let mut cost = residuals(&p, &mut grad);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for (&xi, &yi) in x.iter().zip(y) {
            let r = model.eval(&p, xi, &mut grad) - yi;
            for a in 0..n {
                jtr[a] += grad[a] * r;
                for b in 0..n {
                    jtj[(a, b)] += grad[a] * grad[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj.clone();
            for a in 0..n {
                m[(a, a)] += lambda * jtj[(a, a)].max(1e-300);
            }
            let Some(step) = m.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if model.admissible(&trial) && trial.iter().all(|v| v.is_finite()) {
                let c = residuals(&trial, &mut grad);
                if c < cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    let small_step = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-10 * v.abs().max(1e-12));
                    p = trial;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if rel < 1e-14 || small_step {
                        return Ok(report(p, cost, x.len(), iterations));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(report(p, cost, x.len(), iterations))
}

fn report(params: Vec<f64>, cost: f64, n: usize, iterations: usize) -> FitReport {
    let rms = (cost / n as f64).sqrt();
    FitReport {
        params,
        rms,
        iterations,
        flagged: rms > RMS_FLAG,
    }
}

/// `y = A exp(-t / T) + C`, parameters `[A, T, C]`.
pub struct Exponential;

impl FitModel for Exponential {
    fn n_params(&self) -> usize {
        3
    }
    fn eval(&self, p: &[f64], t: f64, g: &mut [f64]) -> f64 {
        let e = (-t / p[1]).exp();
        g[0] = e;
        g[1] = p[0] * e * t / (p[1] * p[1]);
        g[2] = 1.0;
        p[0] * e + p[2]
    }
    fn admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }
}

/// `y = A exp(-t / T)`, parameters `[A, T]`.
pub struct PureExponential;

impl FitModel for PureExponential {
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, p: &[f64], t: f64, g: &mut [f64]) -> f64 {
        let e = (-t / p[1]).exp();
        g[0] = e;
        g[1] = p[0] * e * t / (p[1] * p[1]);
        p[0] * e
    }
    fn admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }
}

/// `y = B exp(-t / T) cos(2 pi f t + theta) + C`, parameters `[B, T, f, theta, C]`.
pub struct DampedCosine;

impl FitModel for DampedCosine {
    fn n_params(&self) -> usize {
        5
    }
    fn eval(&self, p: &[f64], t: f64, g: &mut [f64]) -> f64 {
        let e = (-t / p[1]).exp();
        let arg = 2.0 * PI * p[2] * t + p[3];
        let (s, c) = arg.sin_cos();
        g[0] = e * c;
        g[1] = p[0] * e * c * t / (p[1] * p[1]);
        g[2] = -p[0] * e * s * 2.0 * PI * t;
        g[3] = -p[0] * e * s;
        g[4] = 1.0;
        p[0] * e * c + p[4]
    }
    fn admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0 && p[2] >= 0.0
    }
}

/// Dip `y = y0 - A / (1 + ((x - x0) / w)^2)`, parameters `[y0, A, x0, w]`; `w` is the half width.
pub struct LorentzianDip;

impl FitModel for LorentzianDip {
    fn n_params(&self) -> usize {
        4
    }
    fn eval(&self, p: &[f64], x: f64, g: &mut [f64]) -> f64 {
        let u = (x - p[2]) / p[3];
        let d = 1.0 / (1.0 + u * u);
        g[0] = 1.0;
        g[1] = -d;
        // d/du of -A d = 2 A u d^2
        let dd = 2.0 * p[1] * u * d * d;
        g[2] = dd * (-1.0 / p[3]);
        g[3] = dd * (-u / p[3]);
        p[0] - p[1] * d
    }
    fn admissible(&self, p: &[f64]) -> bool {
        p[3] > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    /// Decay time (s).
    pub time_constant: f64,
    pub offset: f64,
    pub report: FitReport,
}

impl ExponentialFit {
    pub fn rate(&self) -> f64 {
        1.0 / self.time_constant
    }
}

/// Fit `A exp(-t/T) + C`; with `free_offset = false`, `C = 0`.
pub fn fit_exponential(t: &[f64], y: &[f64], free_offset: bool) -> Result<ExponentialFit> {
    if t.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    let c0 = if free_offset { *y.last().unwrap() } else { 0.0 };
    let a0 = y[0] - c0;
    if a0 == 0.0 {
        return Err(Error::Fit("no decay in data".into()));
    }
    // time at which the excess first drops below 1/e of its initial value
    let target = a0 / std::f64::consts::E;
    let span = t[t.len() - 1] - t[0];
    let mut tau0 = span / 2.0;
    for (ti, yi) in t.iter().zip(y) {
        if (yi - c0) / a0 < target / a0 {
            tau0 = (ti - t[0]).max(span / t.len() as f64);
            break;
        }
    }
    // shift time to the first sample for conditioning
    let ts: Vec<f64> = t.iter().map(|v| v - t[0]).collect();
    let (amplitude, tau, offset, report) = if free_offset {
        let r = levenberg_marquardt(&Exponential, &ts, y, &[a0, tau0, c0])?;
        (r.params[0], r.params[1], r.params[2], r)
    } else {
        let r = levenberg_marquardt(&PureExponential, &ts, y, &[a0, tau0])?;
        (r.params[0], r.params[1], 0.0, r)
    };
    Ok(ExponentialFit {
        amplitude: amplitude * (t[0] / tau).exp(),
        time_constant: tau,
        offset,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DampedCosineFit {
    pub amplitude: f64,
    pub time_constant: f64,
    /// Oscillation frequency (Hz).
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub report: FitReport,
}

/// Fit `B exp(-t/T) cos(2 pi f t + theta) + C`, starting from the periodogram peak.
pub fn fit_damped_cosine(t: &[f64], y: &[f64]) -> Result<DampedCosineFit> {
    let n = t.len();
    if n < 6 {
        return Err(Error::Fit("need at least six samples".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    let dt = span / (n - 1) as f64;
    let nyquist = 0.5 / dt;
    let ts: Vec<f64> = t.iter().map(|v| v - t[0]).collect();
    // periodogram on a grid finer than 1/span
    let n_freq = 8 * n;
    let mut best = (0.0, 0.0, 0.0);
    for k in 0..=n_freq {
        let f = nyquist * k as f64 / n_freq as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, yi) in ts.iter().zip(y) {
            let (s, c) = (2.0 * PI * f * ti).sin_cos();
            re += (yi - mean) * c;
            im -= (yi - mean) * s;
        }
        let p = re * re + im * im;
        if p > best.0 {
            best = (p, f, im.atan2(re));
        }
    }
    let (_, f0, th0) = best;
    let b0 = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1e-12);
    let mut fits = Vec::new();
    for tau0 in [span / 3.0, span, span / 10.0] {
        for (f_init, th_init, c_init) in [(f0, th0, mean), (0.0, 0.0, mean), (f0, th0, *y.last().unwrap())] {
            let p0 = [b0, tau0, f_init, th_init, c_init];
            if let Ok(r) = levenberg_marquardt(&DampedCosine, &ts, y, &p0) {
                fits.push(r);
            }
        }
    }
    let mut r = fits
        .into_iter()
        .min_by(|a, b| a.rms.total_cmp(&b.rms))
        .ok_or_else(|| Error::Fit("damped cosine fit did not converge".into()))?;
    // canonical form: B > 0, theta in (-pi, pi], referenced to the first sample
    if r.params[0] < 0.0 {
        r.params[0] = -r.params[0];
        r.params[3] += PI;
    }
    let (b, tau, f, th, c) = (r.params[0], r.params[1], r.params[2], r.params[3], r.params[4]);
    let th_abs = th - 2.0 * PI * f * t[0];
    let th_abs = th_abs - 2.0 * PI * ((th_abs + PI) / (2.0 * PI)).floor();
    Ok(DampedCosineFit {
        amplitude: b * (t[0] / tau).exp(),
        time_constant: tau,
        frequency: f,
        phase: th_abs,
        offset: c,
        report: r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LorentzianFit {
    pub baseline: f64,
    pub depth: f64,
    pub center: f64,
    pub fwhm: f64,
    pub report: FitReport,
}

pub fn fit_lorentzian_dip(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    let n = x.len();
    if n < 5 {
        return Err(Error::Fit("need at least five samples".into()));
    }
    let base = y[0].max(y[n - 1]);
    let (imin, &ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Fit("empty data".into()))?;
    let depth = base - ymin;
    let half = base - depth / 2.0;
    let mut lo = imin;
    while lo > 0 && y[lo] < half {
        lo -= 1;
    }
    let mut hi = imin;
    while hi < n - 1 && y[hi] < half {
        hi += 1;
    }
    let w0 = ((x[hi] - x[lo]) / 2.0).max((x[n - 1] - x[0]) / n as f64);
    let scale = w0;
    let xs: Vec<f64> = x.iter().map(|v| (v - x[imin]) / scale).collect();
    let r = levenberg_marquardt(&LorentzianDip, &xs, y, &[base, depth, 0.0, w0 / scale])?;
    Ok(LorentzianFit {
        baseline: r.params[0],
        depth: r.params[1],
        center: x[imin] + r.params[2] * scale,
        fwhm: 2.0 * r.params[3].abs() * scale,
        report: r,
    })
}
