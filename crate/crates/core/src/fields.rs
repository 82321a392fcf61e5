//! External magnetic field models and their vector potentials.
//!
//! Two variants are supported: a uniform field and a linearly varying field
//! H(x) = H0 + G x. Physical admissibility of the linear model requires G
//! symmetric (curl-free) and traceless (divergence-free); both are enforced
//! at construction. The vector potential of the linear model is taken in the
//! Poincare gauge, A(x) = int_0^1 s H(s x) x ds, which evaluates in closed
//! form and reduces to the familiar (1/2) H x r for a uniform field.

use crate::error::{Error, Result};
use crate::vec3::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Relative tolerance for the symmetry/trace admissibility checks; only
/// absorbs parsing round-off, construction data is exact in intent.
pub const GRADIENT_TOLERANCE: f64 = 1e-12;

/// External magnetostatic field model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldModel {
    /// Spatially constant field H0.
    Uniform { h0: Vec3 },
    /// Linearly varying field H(x) = H0 + G x with symmetric traceless G.
    Linear { h0: Vec3, g: Mat3 },
}

impl FieldModel {
    pub fn uniform(h0: Vec3) -> Self {
        FieldModel::Uniform { h0 }
    }

    /// Linear model; rejects gradient matrices that are asymmetric
    /// (curl H != 0) or traced (div H != 0) beyond `GRADIENT_TOLERANCE`
    /// relative to the largest entry.
    pub fn linear(h0: Vec3, g: Mat3) -> Result<Self> {
        let scale = g.max_abs().max(1.0);
        let asym = g.asymmetry();
        if asym > GRADIENT_TOLERANCE * scale {
            return Err(Error::InvalidGradient {
                what: "symmetry (curl H = 0)",
                value: asym,
                tolerance: GRADIENT_TOLERANCE * scale,
            });
        }
        let trace = g.trace().abs();
        if trace > GRADIENT_TOLERANCE * scale {
            return Err(Error::InvalidGradient {
                what: "zero trace (div H = 0)",
                value: trace,
                tolerance: GRADIENT_TOLERANCE * scale,
            });
        }
        Ok(FieldModel::Linear { h0, g })
    }

    /// Conventional Stern-Gerlach configuration: H0 = (0, 0, h) with
    /// gradient G = diag(-g, 0, g), the minimal symmetric-traceless
    /// gradient aligned with the apparatus axis.
    pub fn stern_gerlach(h: f64, g: f64) -> Self {
        FieldModel::Linear {
            h0: Vec3::new(0.0, 0.0, h),
            g: Mat3::diagonal(Vec3::new(-g, 0.0, g)),
        }
    }

    /// Field value at a point.
    pub fn evaluate_field(&self, x: Vec3) -> Vec3 {
        match self {
            FieldModel::Uniform { h0 } => *h0,
            FieldModel::Linear { h0, g } => *h0 + g.apply(x),
        }
    }

    /// Vector potential at a point, anchored so that A(0) = 0.
    ///
    /// Uniform: A = (1/2) H0 x r. Linear: Poincare-gauge closed form
    /// A = (1/2) H0 x r + (1/3) (G x) x r, whose curl is H(x) exactly.
    pub fn vector_potential(&self, x: Vec3) -> Vec3 {
        match self {
            FieldModel::Uniform { h0 } => h0.cross(x) * 0.5,
            FieldModel::Linear { h0, g } => h0.cross(x) * 0.5 + g.apply(x).cross(x) / 3.0,
        }
    }

    /// Gradient matrix (zero for the uniform model).
    pub fn gradient(&self) -> Mat3 {
        match self {
            FieldModel::Uniform { .. } => Mat3::zero(),
            FieldModel::Linear { g, .. } => *g,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, FieldModel::Uniform { .. })
    }

    /// Diagnostic ratio |G| a / |H0| measuring how strongly the field varies
    /// across an internal orbit of radius `a`; the linear-field reduction is
    /// trustworthy only while this is small. |G| is the max-abs entry.
    pub fn linearity_ratio(&self, a: f64) -> f64 {
        match self {
            FieldModel::Uniform { .. } => 0.0,
            FieldModel::Linear { h0, g } => {
                let h = h0.norm();
                if h == 0.0 {
                    f64::INFINITY
                } else {
                    g.max_abs() * a / h
                }
            }
        }
    }
}

/// Scalar gauge function Lambda with an exactly computable gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GaugeFunction {
    /// Lambda(x) = k . x, gradient k.
    Linear { k: Vec3 },
    /// Lambda(x) = x^T Q x with symmetric Q, gradient 2 Q x.
    Quadratic { q: Mat3 },
}

impl GaugeFunction {
    pub fn linear(k: Vec3) -> Self {
        GaugeFunction::Linear { k }
    }

    pub fn quadratic(q: Mat3) -> Result<Self> {
        let scale = q.max_abs().max(1.0);
        let asym = q.asymmetry();
        if asym > GRADIENT_TOLERANCE * scale {
            return Err(Error::AsymmetricGauge(asym));
        }
        Ok(GaugeFunction::Quadratic { q })
    }

    /// The identity gauge (Lambda = 0).
    pub fn identity() -> Self {
        GaugeFunction::Linear { k: Vec3::zero() }
    }

    pub fn value(&self, x: Vec3) -> f64 {
        match self {
            GaugeFunction::Linear { k } => k.dot(x),
            GaugeFunction::Quadratic { q } => x.dot(q.apply(x)),
        }
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        match self {
            GaugeFunction::Linear { k } => *k,
            GaugeFunction::Quadratic { q } => q.apply(x) * 2.0,
        }
    }
}

/// A vector potential paired with the field it represents. Gauge transforms
/// change the potential but never the field.
pub trait Potential {
    fn vector_potential(&self, x: Vec3) -> Vec3;
    fn field(&self, x: Vec3) -> Vec3;
}

impl Potential for FieldModel {
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        FieldModel::vector_potential(self, x)
    }
    fn field(&self, x: Vec3) -> Vec3 {
        self.evaluate_field(x)
    }
}

/// Potential after a gauge transform: A'(x) = A(x) + grad Lambda(x),
/// with the underlying field model unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugedPotential {
    pub base: FieldModel,
    pub gauge: GaugeFunction,
}

impl GaugedPotential {
    /// The field model backing this potential (identical to the one the
    /// transform started from; curl grad Lambda = 0).
    pub fn field_model(&self) -> FieldModel {
        self.base
    }
}

impl Potential for GaugedPotential {
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        self.base.vector_potential(x) + self.gauge.gradient(x)
    }
    fn field(&self, x: Vec3) -> Vec3 {
        self.base.evaluate_field(x)
    }
}

/// Apply a gauge transform to a field model's potential.
pub fn gauge_transform(f: FieldModel, g: GaugeFunction) -> GaugedPotential {
    GaugedPotential { base: f, gauge: g }
}

/// Central-difference curl of an arbitrary vector function, for validation.
pub fn numerical_curl(f: impl Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> Vec3 {
    let dx = Vec3::new(h, 0.0, 0.0);
    let dy = Vec3::new(0.0, h, 0.0);
    let dz = Vec3::new(0.0, 0.0, h);
    let ddx = (f(x + dx) - f(x - dx)) / (2.0 * h);
    let ddy = (f(x + dy) - f(x - dy)) / (2.0 * h);
    let ddz = (f(x + dz) - f(x - dz)) / (2.0 * h);
    Vec3::new(ddy.z - ddz.y, ddz.x - ddx.z, ddx.y - ddy.x)
}

/// Central-difference divergence of an arbitrary vector function.
pub fn numerical_divergence(f: impl Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> f64 {
    let dx = Vec3::new(h, 0.0, 0.0);
    let dy = Vec3::new(0.0, h, 0.0);
    let dz = Vec3::new(0.0, 0.0, h);
    (f(x + dx).x - f(x - dx).x + f(x + dy).y - f(x - dy).y + f(x + dz).z - f(x - dz).z) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const FD_STEP: f64 = 1e-5;
    const FD_TOL: f64 = 1e-8;

    fn random_point(rng: &mut StdRng) -> Vec3 {
        Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
    }

    /// Random symmetric traceless matrix, the admissible gradient class.
    fn random_gradient(rng: &mut StdRng) -> Mat3 {
        let a = rng.gen_range(-1.0..1.0);
        let b = rng.gen_range(-1.0..1.0);
        let c = rng.gen_range(-1.0..1.0);
        let d = rng.gen_range(-1.0..1.0);
        let e = rng.gen_range(-1.0..1.0);
        Mat3::new([[a, c, d], [c, b, e], [d, e, -a - b]])
    }

    #[test]
    fn uniform_potential_is_half_cross_product() {
        let f = FieldModel::uniform(Vec3::new(0.0, 0.0, 2.0));
        let a = f.vector_potential(Vec3::new(3.0, 4.0, 5.0));
        // (1/2) (0,0,h) x (x,y,z) = (-h y / 2, h x / 2, 0)
        assert_eq!(a, Vec3::new(-4.0, 3.0, 0.0));
    }

    #[test]
    fn potential_vanishes_at_origin() {
        let mut rng = StdRng::seed_from_u64(7);
        let lin =
            FieldModel::linear(Vec3::new(0.1, -0.4, 0.9), random_gradient(&mut rng)).unwrap();
        let uni = FieldModel::uniform(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(lin.vector_potential(Vec3::zero()), Vec3::zero());
        assert_eq!(uni.vector_potential(Vec3::zero()), Vec3::zero());
    }

    #[test]
    fn linear_field_evaluation() {
        let f = FieldModel::linear(
            Vec3::new(0.0, 0.0, 1.5),
            Mat3::diagonal(Vec3::new(-0.25, 0.0, 0.25)),
        )
        .unwrap();
        let h = f.evaluate_field(Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(h, Vec3::new(-0.25, 0.0, 1.75));
    }

    #[test]
    fn rejects_asymmetric_gradient() {
        let g = Mat3::new([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let err = FieldModel::linear(Vec3::zero(), g).unwrap_err();
        assert!(matches!(err, Error::InvalidGradient { what, .. } if what.contains("symmetry")));
    }

    #[test]
    fn rejects_traced_gradient() {
        let g = Mat3::diagonal(Vec3::new(1.0, 1.0, 1.0));
        let err = FieldModel::linear(Vec3::zero(), g).unwrap_err();
        assert!(matches!(err, Error::InvalidGradient { what, .. } if what.contains("trace")));
    }

    #[test]
    fn curl_of_potential_reproduces_field() {
        // Finite-difference curl oracle at 100 random points, both variants.
        let mut rng = StdRng::seed_from_u64(42);
        let models = [
            FieldModel::uniform(Vec3::new(0.3, -1.1, 0.7)),
            FieldModel::linear(Vec3::new(0.0, 0.0, 1.0), random_gradient(&mut rng)).unwrap(),
            FieldModel::stern_gerlach(1.0, 0.5),
        ];
        for f in models {
            for _ in 0..100 {
                let x = random_point(&mut rng);
                let curl = numerical_curl(|p| f.vector_potential(p), x, FD_STEP);
                let h = f.evaluate_field(x);
                assert!(
                    (curl - h).norm() <= FD_TOL,
                    "curl A != H at {x:?}: {curl:?} vs {h:?}"
                );
            }
        }
    }

    #[test]
    fn field_is_divergence_and_curl_free() {
        let mut rng = StdRng::seed_from_u64(3);
        let f = FieldModel::linear(Vec3::new(0.2, 0.0, 1.0), random_gradient(&mut rng)).unwrap();
        for _ in 0..50 {
            let x = random_point(&mut rng);
            let div = numerical_divergence(|p| f.evaluate_field(p), x, FD_STEP);
            let curl = numerical_curl(|p| f.evaluate_field(p), x, FD_STEP);
            assert!(div.abs() <= FD_TOL);
            assert!(curl.norm() <= FD_TOL);
        }
    }

    #[test]
    fn linear_gauge_shifts_potential_by_constant() {
        let f = FieldModel::uniform(Vec3::new(0.0, 0.0, 1.0));
        let k = Vec3::new(0.4, -0.2, 1.3);
        let gauged = gauge_transform(f, GaugeFunction::linear(k));
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let shift = gauged.vector_potential(x) - f.vector_potential(x);
            assert_relative_eq!(shift.x, k.x, max_relative = 1e-14);
            assert_relative_eq!(shift.y, k.y, max_relative = 1e-14);
            assert_relative_eq!(shift.z, k.z, max_relative = 1e-14);
        }
    }

    #[test]
    fn identity_gauge_leaves_potential_unchanged() {
        let f = FieldModel::stern_gerlach(2.0, 0.3);
        let gauged = gauge_transform(f, GaugeFunction::identity());
        let x = Vec3::new(0.5, -0.7, 0.2);
        assert_eq!(gauged.vector_potential(x), f.vector_potential(x));
    }

    #[test]
    fn gauge_transform_preserves_curl_and_field() {
        let mut rng = StdRng::seed_from_u64(99);
        let f = FieldModel::linear(Vec3::new(0.0, 0.0, 1.0), random_gradient(&mut rng)).unwrap();
        let q = {
            let a = 0.3;
            let b = -0.8;
            Mat3::new([[a, 0.1, -0.2], [0.1, b, 0.05], [-0.2, 0.05, 0.6]])
        };
        let gauged = gauge_transform(f, GaugeFunction::quadratic(q).unwrap());
        for _ in 0..50 {
            let x = random_point(&mut rng);
            let curl_a = numerical_curl(|p| f.vector_potential(p), x, FD_STEP);
            let curl_ap = numerical_curl(|p| gauged.vector_potential(p), x, FD_STEP);
            assert!((curl_a - curl_ap).norm() <= FD_TOL);
            // The field itself is untouched, exactly.
            assert_eq!(gauged.field(x), f.evaluate_field(x));
        }
    }

    #[test]
    fn rejects_asymmetric_quadratic_gauge() {
        let q = Mat3::new([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(
            GaugeFunction::quadratic(q),
            Err(Error::AsymmetricGauge(_))
        ));
    }

    #[test]
    fn linearity_ratio_diagnostic() {
        let f = FieldModel::stern_gerlach(2.0, 0.5);
        assert_relative_eq!(f.linearity_ratio(1.0), 0.25, max_relative = 1e-14);
        assert_eq!(
            FieldModel::uniform(Vec3::new(0.0, 0.0, 1.0)).linearity_ratio(10.0),
            0.0
        );
    }
}
