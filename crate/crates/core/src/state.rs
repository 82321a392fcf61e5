//! Phase-space representations of the two-charge system and the coordinate
//! transforms between them.
//!
//! `LabState` holds both particles' positions and velocities; `ComState`
//! holds the equivalent center-of-mass/relative split
//!
//! ```text
//!   R = (m_p r_p + m_e r_e) / M,   r = r_e - r_p,
//!   r_p = R - (m_e/M) r,           r_e = R + (m_p/M) r,
//! ```
//!
//! and the same linear map for velocities. Both directions are exact linear
//! maps, so round trips reproduce states to machine precision.

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Softened Coulomb potential energy -e^2 / sqrt(d^2 + eps^2) between the
/// charges at separation d; eps = 0 is the hard Coulomb case.
pub fn coulomb_potential(e: f64, separation_sq: f64, softening: f64) -> f64 {
    -e * e / (separation_sq + softening * softening).sqrt()
}

/// Both particles in laboratory coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabState {
    pub r_p: Vec3,
    pub v_p: Vec3,
    pub r_e: Vec3,
    pub v_e: Vec3,
}

/// Center-of-mass (R, Rdot) and relative (r, rdot) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComState {
    pub com_pos: Vec3,
    pub com_vel: Vec3,
    pub rel_pos: Vec3,
    pub rel_vel: Vec3,
}

impl LabState {
    pub fn new(r_p: Vec3, v_p: Vec3, r_e: Vec3, v_e: Vec3) -> Self {
        Self { r_p, v_p, r_e, v_e }
    }

    pub fn separation(&self) -> Vec3 {
        self.r_e - self.r_p
    }

    pub fn is_finite(&self) -> bool {
        self.r_p.is_finite() && self.v_p.is_finite() && self.r_e.is_finite() && self.v_e.is_finite()
    }

    /// Transform to center-of-mass coordinates.
    pub fn to_com(&self, k: &Constants) -> ComState {
        let m = k.total_mass();
        ComState {
            com_pos: (self.r_p * k.m_p + self.r_e * k.m_e) / m,
            com_vel: (self.v_p * k.m_p + self.v_e * k.m_e) / m,
            rel_pos: self.r_e - self.r_p,
            rel_vel: self.v_e - self.v_p,
        }
    }

    /// Total lab-frame energy: kinetic plus (softened) Coulomb. External
    /// magnetic fields do no work, so this is the conserved energy.
    pub fn energy(&self, k: &Constants, softening: f64) -> f64 {
        let kinetic = 0.5 * k.m_p * self.v_p.norm_squared() + 0.5 * k.m_e * self.v_e.norm_squared();
        kinetic + coulomb_potential(k.e, self.separation().norm_squared(), softening)
    }

    /// Lab-frame canonical momenta (p_p, p_e) for a given vector potential:
    /// p_i = m_i v_i + (q_i / c) A(r_i) with q_p = +e, q_e = -e.
    pub fn canonical_momenta(
        &self,
        potential: &impl crate::fields::Potential,
        k: &Constants,
    ) -> (Vec3, Vec3) {
        let p_p = self.v_p * k.m_p + potential.vector_potential(self.r_p) * (k.e / k.c);
        let p_e = self.v_e * k.m_e - potential.vector_potential(self.r_e) * (k.e / k.c);
        (p_p, p_e)
    }
}

impl ComState {
    pub fn new(com_pos: Vec3, com_vel: Vec3, rel_pos: Vec3, rel_vel: Vec3) -> Self {
        Self {
            com_pos,
            com_vel,
            rel_pos,
            rel_vel,
        }
    }

    /// Transform back to laboratory coordinates; exact inverse of `to_com`.
    pub fn to_lab(&self, k: &Constants) -> LabState {
        let m = k.total_mass();
        let wp = k.m_e / m;
        let we = k.m_p / m;
        LabState {
            r_p: self.com_pos - self.rel_pos * wp,
            v_p: self.com_vel - self.rel_vel * wp,
            r_e: self.com_pos + self.rel_pos * we,
            v_e: self.com_vel + self.rel_vel * we,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.com_pos.is_finite()
            && self.com_vel.is_finite()
            && self.rel_pos.is_finite()
            && self.rel_vel.is_finite()
    }

    /// Internal state on the circular Kepler orbit of radius `radius` in the
    /// plane orthogonal to `axis`, at angle `phase` from an arbitrary but
    /// deterministic in-plane reference direction. The internal angular
    /// momentum points along `axis`. The center of mass starts at rest at
    /// the origin; adjust with [`ComState::with_com`].
    pub fn circular_orbit(k: &Constants, radius: f64, axis: Vec3, phase: f64) -> Self {
        let n = axis.normalized();
        let u = n.any_orthonormal();
        let w = n.cross(u);
        let omega = k.circular_frequency(radius);
        let (sin, cos) = phase.sin_cos();
        // r runs counterclockwise about n so that mu r x rdot points along n.
        let rel_pos = (u * cos + w * sin) * radius;
        let rel_vel = (w * cos - u * sin) * (radius * omega);
        Self {
            com_pos: Vec3::zero(),
            com_vel: Vec3::zero(),
            rel_pos,
            rel_vel,
        }
    }

    /// Internal state on a straight-line oscillation through the force
    /// center along `axis`: turning points at +/- `amplitude`. The state is
    /// placed at position fraction `fraction` in [-1, 1] of the amplitude,
    /// moving outward (`outward = true`) or inward; speed follows from
    /// energy conservation in the softened potential. r x rdot = 0 exactly.
    pub fn linear_oscillation(
        k: &Constants,
        amplitude: f64,
        axis: Vec3,
        fraction: f64,
        outward: bool,
        softening: f64,
    ) -> Self {
        let n = axis.normalized();
        let q = fraction.clamp(-1.0, 1.0);
        let pos = amplitude * q;
        let mu = k.reduced_mass();
        let turn = coulomb_potential(k.e, amplitude * amplitude, softening);
        let here = coulomb_potential(k.e, pos * pos, softening);
        let speed_sq = (2.0 / mu) * (turn - here).max(0.0);
        let dir = if outward == (q >= 0.0) { 1.0 } else { -1.0 };
        Self {
            com_pos: Vec3::zero(),
            com_vel: Vec3::zero(),
            rel_pos: n * pos,
            rel_vel: n * (dir * speed_sq.sqrt()),
        }
    }

    /// Same internal state with the center of mass repositioned.
    pub fn with_com(mut self, com_pos: Vec3, com_vel: Vec3) -> Self {
        self.com_pos = com_pos;
        self.com_vel = com_vel;
        self
    }

    /// Internal (relative-motion) energy: (1/2) mu rdot^2 + V_coulomb.
    pub fn internal_energy(&self, k: &Constants, softening: f64) -> f64 {
        0.5 * k.reduced_mass() * self.rel_vel.norm_squared()
            + coulomb_potential(k.e, self.rel_pos.norm_squared(), softening)
    }

    /// Center-of-mass kinetic energy (1/2) M Rdot^2.
    pub fn com_kinetic_energy(&self, k: &Constants) -> f64 {
        0.5 * k.total_mass() * self.com_vel.norm_squared()
    }
}

/// Transform a lab state to center-of-mass coordinates.
pub fn to_com(s: &LabState, k: &Constants) -> ComState {
    s.to_com(k)
}

/// Transform a center-of-mass state to lab coordinates.
pub fn to_lab(s: &ComState, k: &Constants) -> LabState {
    s.to_lab(k)
}

/// Derived dynamical quantities of a center-of-mass state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Internal angular momentum L = mu r x rdot.
    pub l: Vec3,
    /// Cross-coupling vector S = mu r x Rdot.
    pub s: Vec3,
    /// rho_dot = Rdot + K_L rdot, the velocity combination entering the
    /// relative-motion Lorentz term.
    pub rho_dot: Vec3,
    /// Total energy (1/2) M Rdot^2 + (1/2) mu rdot^2 + V_coulomb, using the
    /// softened potential when softening is active.
    pub energy: f64,
    /// Mass-asymmetry factor of the constants used.
    pub k_l: f64,
}

/// Compute L, S, rho_dot and the total energy from a center-of-mass state.
///
/// Fails on the coincident-charge configuration when softening is disabled.
pub fn derived_quantities(s: &ComState, k: &Constants, softening: f64) -> Result<DerivedQuantities> {
    if softening == 0.0 && s.rel_pos.norm_squared() == 0.0 {
        return Err(Error::SingularConfiguration);
    }
    let mu = k.reduced_mass();
    let k_l = k.k_l();
    Ok(DerivedQuantities {
        l: s.rel_pos.cross(s.rel_vel) * mu,
        s: s.rel_pos.cross(s.com_vel) * mu,
        rho_dot: s.com_vel + s.rel_vel * k_l,
        energy: s.com_kinetic_energy(k) + s.internal_energy(k, softening),
        k_l,
    })
}

/// Canonical momenta (P_R, p_r) of the reduced formulation in a uniform
/// field:
///
/// ```text
///   P_R = M Rdot - (e/c) H x r
///   p_r = mu rdot - (e/2c) K_L H x r
/// ```
///
/// The reduced Lagrangian yields these only for the uniform case; a linear
/// field model is rejected.
pub fn canonical_momenta(s: &ComState, f: &FieldModel, k: &Constants) -> Result<(Vec3, Vec3)> {
    let FieldModel::Uniform { h0 } = f else {
        return Err(Error::RequiresUniformField {
            operation: "canonical_momenta",
        });
    };
    let h_cross_r = h0.cross(s.rel_pos);
    let p_com = s.com_vel * k.total_mass() - h_cross_r * (k.e / k.c);
    let p_rel = s.rel_vel * k.reduced_mass() - h_cross_r * (k.e * k.k_l() / (2.0 * k.c));
    Ok((p_com, p_rel))
}

/// Internal period estimated from the osculating Kepler orbit of the
/// relative motion (hard Coulomb): T = 2 pi sqrt(mu a^3 / e^2) with
/// a = -e^2 / (2 E_int). `None` when the internal motion is unbound.
///
/// With softening active this is guidance, not an exact period.
pub fn osculating_period(s: &ComState, k: &Constants) -> Option<f64> {
    let e_int = s.internal_energy(k, 0.0);
    if e_int >= 0.0 || !e_int.is_finite() {
        return None;
    }
    let a = -k.e * k.e / (2.0 * e_int);
    Some(std::f64::consts::TAU * (k.reduced_mass() * a.powi(3)).sqrt() / k.e)
}
