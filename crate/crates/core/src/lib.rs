//! Classical dynamics of a neutral two-charge system (a hydrogen-like atom)
//! in external magnetic fields.
//!
//! The library provides:
//!
//! * lab-frame and center-of-mass phase-space representations with exact
//!   transforms ([`state`]);
//! * uniform and linearly-varying external field models, their vector
//!   potentials and gauge transforms ([`fields`]);
//! * the reduced center-of-mass/relative equations of motion together with
//!   a direct two-particle oracle, fixed-step RK4 and adaptive RK45
//!   integration, and invariant monitoring ([`dynamics`]);
//! * beam-ensemble construction and deflection statistics for
//!   Stern-Gerlach style scenarios, including zero-angular-momentum and
//!   equal-mass (positronium) cases ([`sterngerlach`]);
//! * the far-field electromagnetic structure of the moving atom and the
//!   time-averaged magnetic moment with its gyromagnetic ratio
//!   ([`atomfield`]).
//!
//! All quantities are in Gaussian units; scenarios are expected to use
//! scaled units (see the README).

pub mod atomfield;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod state;
pub mod sterngerlach;
pub mod vec3;

pub use constants::Constants;
pub use error::{Error, Result};
pub use vec3::{Mat3, Vec3};
