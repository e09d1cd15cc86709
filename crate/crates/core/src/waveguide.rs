//! TE10 dispersion of an air-filled rectangular waveguide.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Upper end of the root search window, in units of the cutoff frequency.
const SEARCH_WINDOW: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    /// Broad-wall width (m).
    pub a: f64,
    /// Separation of the two transmon pairs along the propagation axis (m).
    pub d_y: f64,
    /// Vacuum light speed (m/s).
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

impl WaveguideGeometry {
    pub fn new(a: f64, d_y: f64) -> Result<Self> {
        let g = WaveguideGeometry {
            a,
            d_y,
            c: SPEED_OF_LIGHT,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("waveguide width a = {} m must be positive", self.a)));
        }
        if !(self.d_y >= 0.0 && self.d_y.is_finite()) {
            return Err(Error::InvalidParameter(format!("pair separation d_y = {} m must be >= 0", self.d_y)));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter("light speed must be positive".into()));
        }
        Ok(())
    }

    /// Cutoff angular frequency of the fundamental mode, `pi c / a`.
    pub fn cutoff(&self) -> f64 {
        PI * self.c / self.a
    }

    /// Propagation constant `beta = sqrt((w/c)^2 - (pi/a)^2)` in rad/m.
    pub fn propagation_constant(&self, omega: f64) -> Result<f64> {
        let cutoff = self.cutoff();
        if !(omega > cutoff) {
            return Err(Error::BelowCutoff {
                freq_ghz: omega / (2.0 * PI * 1e9),
                cutoff_ghz: cutoff / (2.0 * PI * 1e9),
            });
        }
        let k = omega / self.c;
        let kc = PI / self.a;
        // (k - kc)(k + kc) keeps precision right above cutoff
        Ok(((k - kc) * (k + kc)).sqrt())
    }

    pub fn guided_wavelength(&self, omega: f64) -> Result<f64> {
        Ok(2.0 * PI / self.propagation_constant(omega)?)
    }

    pub fn phase_velocity(&self, omega: f64) -> Result<f64> {
        Ok(omega / self.propagation_constant(omega)?)
    }

    /// Propagation phase accumulated over `distance` at `omega`.
    pub fn phase_over(&self, omega: f64, distance: f64) -> Result<f64> {
        Ok(self.propagation_constant(omega)? * distance)
    }

    /// Phase accumulated between the two pairs, `beta(w) d_y`.
    pub fn phase_between_sites(&self, omega: f64) -> Result<f64> {
        self.phase_over(omega, self.d_y)
    }

    /// Time `t` with `omega t` equal to the phase accumulated over `distance`.
    pub fn propagation_delay(&self, omega: f64, distance: f64) -> Result<f64> {
        Ok(self.propagation_constant(omega)? * distance / omega)
    }

    /// Frequency at which the pair separation corresponds to a phase of pi.
    ///
    /// Found by bracketing and bisection to relative tolerance 1e-12.
    pub fn decoherence_free_frequency(&self) -> Result<f64> {
        if !(self.d_y > 0.0) {
            return Err(Error::NoRoot("pair separation d_y must be positive".into()));
        }
        let cutoff = self.cutoff();
        let f = |w: f64| self.propagation_constant(w).map(|b| b * self.d_y - PI);

        let mut lo = cutoff * (1.0 + 1e-14);
        if f(lo)? >= 0.0 {
            return Err(Error::NoRoot("phase already exceeds pi at cutoff".into()));
        }
        let mut hi = 2.0 * cutoff;
        while f(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > SEARCH_WINDOW * cutoff {
                return Err(Error::NoRoot(format!(
                    "beta(w) d_y < pi up to {SEARCH_WINDOW} x cutoff (d_y = {} m too short)",
                    self.d_y
                )));
            }
        }
        while (hi - lo) > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GHZ: f64 = 2.0 * PI * 1e9;

    fn device_geometry() -> WaveguideGeometry {
        WaveguideGeometry::new(22.9e-3, 46e-3).unwrap()
    }

    #[test]
    fn cutoff_of_wr90_like_guide() {
        let g = device_geometry();
        assert!((g.cutoff() / GHZ - 6.546).abs() < 5e-4);
    }

    #[test]
    fn propagation_constant_at_operating_point() {
        let g = device_geometry();
        let beta = g.propagation_constant(7.318 * GHZ).unwrap();
        // direct evaluation: sqrt((w/c)^2 - (pi/a)^2)
        let direct = ((7.318 * GHZ / SPEED_OF_LIGHT).powi(2) - (PI / 22.9e-3).powi(2)).sqrt();
        assert!((beta - direct).abs() < 1e-9);
        assert!((beta - 68.57).abs() < 0.01);
        // at the pi-phase point beta = pi / d_y = 68.295 rad/m
        let w_pi = g.decoherence_free_frequency().unwrap();
        assert!((g.propagation_constant(w_pi).unwrap() - 68.295).abs() < 1e-3);
    }

    #[test]
    fn limits() {
        let g = device_geometry();
        let wc = g.cutoff();
        assert!(g.propagation_constant(wc * (1.0 + 1e-10)).unwrap() < 1e-2);
        let w = 1e4 * wc;
        let beta = g.propagation_constant(w).unwrap();
        assert!((beta / (w / SPEED_OF_LIGHT) - 1.0).abs() < 1e-7);
        assert!(matches!(g.propagation_constant(wc), Err(Error::BelowCutoff { .. })));
        assert!(g.propagation_constant(0.5 * wc).is_err());
    }

    #[test]
    fn phase_and_delay() {
        let g = device_geometry();
        let w = 7.318 * GHZ;
        let zero = WaveguideGeometry::new(22.9e-3, 0.0).unwrap();
        assert_eq!(zero.phase_between_sites(w).unwrap(), 0.0);
        let twice = WaveguideGeometry::new(22.9e-3, 92e-3).unwrap();
        let p1 = g.phase_between_sites(w).unwrap();
        assert!((twice.phase_between_sites(w).unwrap() - 2.0 * p1).abs() < 1e-12);

        let t = g.propagation_delay(w, 46e-3).unwrap();
        assert!((t * 1e12 - 68.0).abs() < 1.0);
        let w_pi = g.decoherence_free_frequency().unwrap();
        let t_pi = g.propagation_delay(w_pi, 46e-3).unwrap();
        assert!((t_pi - PI / w_pi).abs() / t_pi < 1e-9);
        assert_eq!(g.propagation_delay(w, 0.0).unwrap(), 0.0);
        for (w, d) in [(7.0 * GHZ, 0.01), (8.3 * GHZ, 0.13), (12.0 * GHZ, 1e-4)] {
            let t = g.propagation_delay(w, d).unwrap();
            assert!((t * w - g.phase_over(w, d).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn decoherence_free_frequency_matches_closed_form() {
        let g = device_geometry();
        let w_pi = g.decoherence_free_frequency().unwrap();
        // independent route: beta = pi / d_y inverted analytically
        let closed = SPEED_OF_LIGHT * ((PI / 46e-3).powi(2) + (PI / 22.9e-3).powi(2)).sqrt();
        assert!((w_pi - closed).abs() / closed < 1e-11);
        assert!((g.phase_between_sites(w_pi).unwrap() - PI).abs() < 1e-9);
        assert!((w_pi / GHZ - 7.312).abs() < 0.016);
    }

    #[test]
    fn decoherence_free_frequency_monotone_in_separation() {
        let mut last = f64::INFINITY;
        for d in [0.02, 0.046, 0.1, 1.0, 100.0] {
            let w = WaveguideGeometry::new(22.9e-3, d)
                .unwrap()
                .decoherence_free_frequency()
                .unwrap();
            assert!(w < last);
            last = w;
        }
        let g = WaveguideGeometry::new(22.9e-3, 1e4).unwrap();
        assert!(g.decoherence_free_frequency().unwrap() / g.cutoff() - 1.0 < 1e-6);
        assert!(WaveguideGeometry::new(22.9e-3, 0.0)
            .unwrap()
            .decoherence_free_frequency()
            .is_err());
        assert!(WaveguideGeometry::new(22.9e-3, 1e-9)
            .unwrap()
            .decoherence_free_frequency()
            .is_err());
    }

    proptest::proptest! {
        #[test]
        fn beta_increasing_and_phase_velocity_superluminal(x in 1.0001f64..20.0, dx in 1e-6f64..1.0) {
            let g = device_geometry();
            let w = x * g.cutoff();
            let b1 = g.propagation_constant(w).unwrap();
            let b2 = g.propagation_constant(w * (1.0 + dx)).unwrap();
            proptest::prop_assert!(b2 > b1);
            proptest::prop_assert!(g.phase_velocity(w).unwrap() >= SPEED_OF_LIGHT);
        }
    }
}
