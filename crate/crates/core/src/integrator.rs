//! Adaptive Dormand-Prince 5(4) integrator for complex-valued linear ODEs.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (s).
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Accepted steps between density-matrix invariant checks.
    pub check_interval: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
            max_steps: 50_000_000,
            check_interval: if cfg!(debug_assertions) { 1 } else { 100 },
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorSettings {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "integrator tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter("max_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Stateful stepper; keeps the step size and the FSAL stage between calls.
pub struct Dopri5 {
    settings: IntegratorSettings,
    n: usize,
    k: [Vec<C64>; 7],
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    h: Option<f64>,
    fac_old: f64,
    fsal_valid: bool,
    pub stats: StepStats,
}

impl Dopri5 {
    pub fn new(n: usize, settings: IntegratorSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Dopri5 {
            settings,
            n,
            k: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]),
            y_stage: vec![C64::new(0.0, 0.0); n],
            y_new: vec![C64::new(0.0, 0.0); n],
            h: None,
            fac_old: 1e-4,
            fsal_valid: false,
            stats: StepStats::default(),
        })
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    /// Forget the cached derivative, e.g. after the right-hand side changed.
    pub fn reset(&mut self) {
        self.fsal_valid = false;
    }

    /// Advance `y` from `*t` to exactly `t_end`. `after_step` runs after each
    /// accepted step with the step count and may abort the integration.
    pub fn advance<F, G>(&mut self, rhs: &mut F, t: &mut f64, y: &mut [C64], t_end: f64, mut after_step: G) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
        G: FnMut(f64, &[C64], usize) -> Result<()>,
    {
        assert_eq!(y.len(), self.n);
        if t_end <= *t {
            return Ok(());
        }
        if !self.fsal_valid {
            rhs(*t, y, &mut self.k[0]);
            self.stats.rhs_evaluations += 1;
            self.fsal_valid = true;
        }
        let span = t_end - *t;
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(rhs, *t, y, span),
        };
        if let Some(hmax) = self.settings.max_step {
            h = h.min(hmax);
        }
        loop {
            let remaining = t_end - *t;
            if remaining <= 1e-15 * t_end.abs().max(span) {
                *t = t_end;
                return Ok(());
            }
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            if h_try < 1e-13 * t.abs().max(1e-12) || !h_try.is_finite() {
                return Err(Error::StepUnderflow { t: *t, h: h_try });
            }
            let err = self.try_step(rhs, *t, y, h_try);
            if !err.is_finite() {
                h = h_try * FAC_MIN;
                self.stats.rejected += 1;
                continue;
            }
            let expo = 0.2 - BETA * 0.75;
            let fac11 = err.powf(expo);
            if err <= 1.0 {
                let fac = (fac11 / self.fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.fac_old = err.max(1e-4);
                *t = if last { t_end } else { *t + h_try };
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                if self.stats.accepted > self.settings.max_steps {
                    return Err(Error::StepUnderflow { t: *t, h: h_try });
                }
                let mut h_next = h_try / fac;
                if let Some(hmax) = self.settings.max_step {
                    h_next = h_next.min(hmax);
                }
                // a step clipped to hit t_end should not shrink the next one
                h = if last { h.max(h_next) } else { h_next };
                self.h = Some(h);
                after_step(*t, y, self.stats.accepted)?;
                if last {
                    return Ok(());
                }
            } else {
                h = h_try / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                self.stats.rejected += 1;
            }
        }
    }

    fn initial_step<F>(&mut self, rhs: &mut F, t: f64, y: &[C64], span: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let (rtol, atol) = (self.settings.rtol, self.settings.atol);
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.n {
            let sc = atol + rtol * y[i].norm();
            d0 += (y[i].norm() / sc).powi(2);
            d1 += (self.k[0][i].norm() / sc).powi(2);
        }
        let (d0, d1) = ((d0 / self.n as f64).sqrt(), (d1 / self.n as f64).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        for i in 0..self.n {
            self.y_stage[i] = y[i] + self.k[0][i] * h0;
        }
        let mut f1 = vec![C64::new(0.0, 0.0); self.n];
        rhs(t + h0, &self.y_stage, &mut f1);
        self.stats.rhs_evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..self.n {
            let sc = atol + rtol * y[i].norm();
            d2 += ((f1[i] - self.k[0][i]).norm() / sc).powi(2);
        }
        let d2 = (d2 / self.n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// One trial step; leaves the 5th-order solution in `y_new`, its derivative
    /// in `k[6]`, and returns the scaled error norm.
    fn try_step<F>(&mut self, rhs: &mut F, t: f64, y: &[C64], h: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = self.n;
        let stage = |k: &[Vec<C64>; 7], ys: &mut [C64], coeffs: &[(usize, f64)]| {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for &(s, a) in coeffs {
                    acc += k[s][i] * a;
                }
                ys[i] = y[i] + acc * h;
            }
        };
        stage(&self.k, &mut self.y_stage, &[(0, A21)]);
        rhs(t + C2 * h, &self.y_stage, &mut self.k[1]);
        stage(&self.k, &mut self.y_stage, &[(0, A31), (1, A32)]);
        rhs(t + C3 * h, &self.y_stage, &mut self.k[2]);
        stage(&self.k, &mut self.y_stage, &[(0, A41), (1, A42), (2, A43)]);
        rhs(t + C4 * h, &self.y_stage, &mut self.k[3]);
        stage(&self.k, &mut self.y_stage, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        rhs(t + C5 * h, &self.y_stage, &mut self.k[4]);
        stage(&self.k, &mut self.y_stage, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        rhs(t + h, &self.y_stage, &mut self.k[5]);
        stage(&self.k, &mut self.y_new, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        rhs(t + h, &self.y_new, &mut self.k[6]);
        self.stats.rhs_evaluations += 6;

        let (rtol, atol) = (self.settings.rtol, self.settings.atol);
        let mut sum = 0.0;
        for i in 0..n {
            let e = (self.k[0][i] * E1 + self.k[2][i] * E3 + self.k[3][i] * E4 + self.k[4][i] * E5 + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
            let sc = atol + rtol * y[i].norm().max(self.y_new[i].norm());
            sum += (e.norm() / sc).powi(2);
        }
        (sum / n as f64).sqrt()
    }
}
