//! Physical constants of the two-charge system, Gaussian units.
//!
//! The library never fixes an absolute unit scale; scenarios are expected
//! to work in scaled units (lengths in units of the internal orbit radius,
//! masses in units of the light particle's mass) to keep exponent ranges
//! sane.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Masses, charge and speed of light, plus the derived combinations that
/// appear throughout the reduced equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstants", into = "RawConstants")]
pub struct Constants {
    /// Mass of the positive particle.
    pub m_p: f64,
    /// Mass of the negative particle.
    pub m_e: f64,
    /// Elementary charge (> 0); the positive particle carries +e, the
    /// negative one -e.
    pub e: f64,
    /// Speed of light.
    pub c: f64,
}

/// Serde proxy so deserialized constants go through validation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    m_p: f64,
    m_e: f64,
    e: f64,
    c: f64,
}

impl TryFrom<RawConstants> for Constants {
    type Error = Error;
    fn try_from(r: RawConstants) -> Result<Self> {
        Constants::new(r.m_p, r.m_e, r.e, r.c)
    }
}

impl From<Constants> for RawConstants {
    fn from(k: Constants) -> Self {
        RawConstants {
            m_p: k.m_p,
            m_e: k.m_e,
            e: k.e,
            c: k.c,
        }
    }
}

impl Constants {
    pub fn new(m_p: f64, m_e: f64, e: f64, c: f64) -> Result<Self> {
        for (name, v) in [("m_p", m_p), ("m_e", m_e), ("e", e), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConstants(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Self { m_p, m_e, e, c })
    }

    /// Hydrogen-like defaults in scaled units: m_e = 1, e = 1, c = 137.036,
    /// physical proton/electron mass ratio.
    pub fn hydrogen() -> Self {
        Self::new(1836.15267343, 1.0, 1.0, 137.036).expect("valid constants")
    }

    /// Equal-mass system (positronium-like): K_L = 0 exactly.
    pub fn positronium() -> Self {
        Self::new(1.0, 1.0, 1.0, 137.036).expect("valid constants")
    }

    /// Total mass M = m_p + m_e.
    pub fn total_mass(&self) -> f64 {
        self.m_p + self.m_e
    }

    /// Reduced mass mu = m_p m_e / M.
    pub fn reduced_mass(&self) -> f64 {
        self.m_p * self.m_e / self.total_mass()
    }

    /// Mass-asymmetry factor K_L = (m_p - m_e)/M; zero for equal masses.
    pub fn k_l(&self) -> f64 {
        (self.m_p - self.m_e) / self.total_mass()
    }

    /// Angular frequency of the circular internal orbit at radius `a`
    /// (hard Coulomb): omega = sqrt(e^2 / (mu a^3)).
    pub fn circular_frequency(&self, a: f64) -> f64 {
        (self.e * self.e / (self.reduced_mass() * a.powi(3))).sqrt()
    }

    /// Period of the circular internal orbit at radius `a`.
    pub fn circular_period(&self, a: f64) -> f64 {
        std::f64::consts::TAU / self.circular_frequency(a)
    }

    /// Gyromagnetic ratio coefficient e K_L / (2 mu c) relating the
    /// time-averaged magnetic moment to the internal angular momentum.
    pub fn gyromagnetic_ratio(&self) -> f64 {
        self.e * self.k_l() / (2.0 * self.reduced_mass() * self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_quantities_match_definitions() {
        let k = Constants::new(3.0, 1.0, 2.0, 10.0).unwrap();
        assert_eq!(k.total_mass(), 4.0);
        assert_eq!(k.reduced_mass(), 0.75);
        assert_eq!(k.k_l(), 0.5);
    }

    #[test]
    fn equal_masses_give_zero_k_l() {
        let k = Constants::positronium();
        assert_eq!(k.k_l(), 0.0);
        assert_eq!(k.gyromagnetic_ratio(), 0.0);
    }

    #[test]
    fn k_l_approaches_one_for_heavy_positive_particle() {
        let k = Constants::new(1e12, 1.0, 1.0, 1.0).unwrap();
        assert!(k.k_l() > 1.0 - 1e-11);
        assert!(k.k_l() < 1.0);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(Constants::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(Constants::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(Constants::new(1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn circular_balance() {
        // mu omega^2 a = e^2 / a^2
        let k = Constants::hydrogen();
        let a = 2.0;
        let w = k.circular_frequency(a);
        assert_relative_eq!(
            k.reduced_mass() * w * w * a,
            k.e * k.e / (a * a),
            max_relative = 1e-14
        );
    }
}
