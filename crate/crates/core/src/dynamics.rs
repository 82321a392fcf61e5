//! Equations of motion and numerical integration.
//!
//! Three formulations of the same physics are provided and cross-validated:
//!
//! * `direct_derivative` - both particles in the lab frame under Coulomb
//!   attraction and the Lorentz force of the external field. This is the
//!   oracle: exact for any admissible field model.
//! * `reduced_uniform_derivative` - the center-of-mass/relative equations
//!
//!   ```text
//!     M Rddot  = (e/c) H x rdot
//!     mu rddot = -e^2 r / r^3 - (e/c) (Rdot + K_L rdot) x H
//!   ```
//!
//!   exact for a uniform field (the reduction only drops a total time
//!   derivative from the Lagrangian).
//! * `reduced_inhomogeneous_derivative` - the same with H evaluated at R
//!   plus the gradient terms
//!
//!   ```text
//!     M Rddot = (e/c) H(R) x rdot + (e/c) (G Rdot) x r
//!               - (e/2 mu c) G (K_L L + 2 S)
//!   ```
//!
//!   valid to first order in the atomic size; the discrepancy against the
//!   direct oracle shrinks quadratically with the internal orbit radius.
//!
//! `simplified_sg_derivative` drops the (e/c) (G Rdot) x r term, the form
//! in which the zero-L deflection claim is usually read off; it exists to
//! measure that approximation, not to replace the full equation.

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::state::{derived_quantities, ComState, DerivedQuantities, LabState};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Default number of fixed RK4 steps per internal period.
pub const STEPS_PER_PERIOD: f64 = 2000.0;

fn coulomb_force_on_relative(rel: Vec3, e: f64, softening: f64) -> Result<Vec3> {
    let d2 = rel.norm_squared() + softening * softening;
    if d2 == 0.0 {
        return Err(Error::SingularConfiguration);
    }
    let d3 = d2 * d2.sqrt();
    Ok(rel * (-e * e / d3))
}

/// Lab-frame equations of motion; the returned `LabState` holds the time
/// derivative (velocities in the position slots, accelerations in the
/// velocity slots). Charge signs: +e on the positive particle, -e on the
/// negative one; each feels the field at its own position.
pub fn direct_derivative(
    s: &LabState,
    f: &FieldModel,
    k: &Constants,
    softening: f64,
) -> Result<LabState> {
    let sep = s.r_e - s.r_p;
    // Force on the electron from the proton; the proton feels the opposite.
    let coulomb_on_e = coulomb_force_on_relative(sep, k.e, softening)?;
    let e_over_c = k.e / k.c;
    let lorentz_p = s.v_p.cross(f.evaluate_field(s.r_p)) * e_over_c;
    let lorentz_e = s.v_e.cross(f.evaluate_field(s.r_e)) * (-e_over_c);
    Ok(LabState {
        r_p: s.v_p,
        v_p: (lorentz_p - coulomb_on_e) / k.m_p,
        r_e: s.v_e,
        v_e: (lorentz_e + coulomb_on_e) / k.m_e,
    })
}

/// Reduced equations of motion in a uniform field (exact reduction).
pub fn reduced_uniform_derivative(
    s: &ComState,
    f: &FieldModel,
    k: &Constants,
    softening: f64,
) -> Result<ComState> {
    let FieldModel::Uniform { h0 } = f else {
        return Err(Error::RequiresUniformField {
            operation: "reduced_uniform_derivative",
        });
    };
    let e_over_c = k.e / k.c;
    let rho_dot = s.com_vel + s.rel_vel * k.k_l();
    let coulomb = coulomb_force_on_relative(s.rel_pos, k.e, softening)?;
    Ok(ComState {
        com_pos: s.com_vel,
        com_vel: h0.cross(s.rel_vel) * (e_over_c / k.total_mass()),
        rel_pos: s.rel_vel,
        rel_vel: (coulomb - rho_dot.cross(*h0) * e_over_c) / k.reduced_mass(),
    })
}

/// Reduced equations of motion in a linearly varying field, full
/// (un-simplified) center-of-mass equation. `G` supplies every spatial
/// derivative of H; the relative equation is the uniform one with H(R).
pub fn reduced_inhomogeneous_derivative(
    s: &ComState,
    f: &FieldModel,
    k: &Constants,
    softening: f64,
) -> Result<ComState> {
    let FieldModel::Linear { h0, g } = f else {
        return Err(Error::RequiresLinearField {
            operation: "reduced_inhomogeneous_derivative",
        });
    };
    let e_over_c = k.e / k.c;
    let h_at_com = *h0 + g.apply(s.com_pos);
    let rho_dot = s.com_vel + s.rel_vel * k.k_l();
    // -(e/2 mu c) grad[H . (K_L L + 2 S)] = -(e/2c) G (K_L r x rdot + 2 r x Rdot)
    let moment_sum = s.rel_pos.cross(s.rel_vel) * k.k_l() + s.rel_pos.cross(s.com_vel) * 2.0;
    let gradient_force = g.apply(moment_sum) * (-0.5 * e_over_c);
    let transport_force = g.apply(s.com_vel).cross(s.rel_pos) * e_over_c;
    let field_force = h_at_com.cross(s.rel_vel) * e_over_c;
    let coulomb = coulomb_force_on_relative(s.rel_pos, k.e, softening)?;
    Ok(ComState {
        com_pos: s.com_vel,
        com_vel: (field_force + transport_force + gradient_force) / k.total_mass(),
        rel_pos: s.rel_vel,
        rel_vel: (coulomb - rho_dot.cross(h_at_com) * e_over_c) / k.reduced_mass(),
    })
}

/// Simplified Stern-Gerlach form of the center-of-mass equation, valid
/// where the component of Rdot along H is negligible:
///
/// ```text
///   M Rddot = (e/c) H(R) x rdot - (e/2 mu c) ((K_L L + 2 S) . grad) H
/// ```
///
/// The relative equation is unchanged.
pub fn simplified_sg_derivative(
    s: &ComState,
    f: &FieldModel,
    k: &Constants,
    softening: f64,
) -> Result<ComState> {
    let FieldModel::Linear { h0, g } = f else {
        return Err(Error::RequiresLinearField {
            operation: "simplified_sg_derivative",
        });
    };
    let e_over_c = k.e / k.c;
    let h_at_com = *h0 + g.apply(s.com_pos);
    let rho_dot = s.com_vel + s.rel_vel * k.k_l();
    let moment_sum = s.rel_pos.cross(s.rel_vel) * k.k_l() + s.rel_pos.cross(s.com_vel) * 2.0;
    let gradient_force = g.apply(moment_sum) * (-0.5 * e_over_c);
    let field_force = h_at_com.cross(s.rel_vel) * e_over_c;
    let coulomb = coulomb_force_on_relative(s.rel_pos, k.e, softening)?;
    Ok(ComState {
        com_pos: s.com_vel,
        com_vel: (field_force + gradient_force) / k.total_mass(),
        rel_pos: s.rel_vel,
        rel_vel: (coulomb - rho_dot.cross(h_at_com) * e_over_c) / k.reduced_mass(),
    })
}

/// Which equations of motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Two-particle lab-frame oracle.
    Direct,
    /// Reduced equations, uniform field only.
    ReducedUniform,
    /// Reduced equations with the full gradient terms, linear field only.
    ReducedInhomogeneous,
    /// Reduced equations with the transport term dropped, linear field only.
    SimplifiedSg,
}

/// A complete dynamical system: constants, field, formulation, softening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub constants: Constants,
    pub field: FieldModel,
    pub formulation: Formulation,
    /// Coulomb softening length; 0 = hard Coulomb (singularities are hard
    /// failures, which keeps conservation statements honest).
    pub softening: f64,
}

impl System {
    pub fn new(
        constants: Constants,
        field: FieldModel,
        formulation: Formulation,
        softening: f64,
    ) -> Result<Self> {
        if !(softening >= 0.0 && softening.is_finite()) {
            return Err(Error::Invalid(format!(
                "softening must be finite and >= 0, got {softening}"
            )));
        }
        match (formulation, field.is_uniform()) {
            (Formulation::ReducedUniform, false) => Err(Error::RequiresUniformField {
                operation: "reduced_uniform_derivative",
            }),
            (Formulation::ReducedInhomogeneous, true) => Err(Error::RequiresLinearField {
                operation: "reduced_inhomogeneous_derivative",
            }),
            (Formulation::SimplifiedSg, true) => Err(Error::RequiresLinearField {
                operation: "simplified_sg_derivative",
            }),
            _ => Ok(Self {
                constants,
                field,
                formulation,
                softening,
            }),
        }
    }

    /// Reduced formulation matching the field kind.
    pub fn reduced(constants: Constants, field: FieldModel, softening: f64) -> Self {
        let formulation = if field.is_uniform() {
            Formulation::ReducedUniform
        } else {
            Formulation::ReducedInhomogeneous
        };
        Self::new(constants, field, formulation, softening).expect("kind matched by construction")
    }

    /// Direct two-particle formulation of the same scenario.
    pub fn direct(constants: Constants, field: FieldModel, softening: f64) -> Self {
        Self::new(constants, field, Formulation::Direct, softening)
            .expect("direct accepts any field")
    }
}

/// Integration method and step control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    /// Classic fixed-step fourth-order Runge-Kutta; the default.
    Rk4 { step: f64 },
    /// Adaptive Dormand-Prince 5(4), for validation runs.
    Rk45 { tolerance: f64 },
}

/// Full integration request: method, end time, sampling stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    #[serde(flatten)]
    pub method: Method,
    pub t_end: f64,
    /// Record every `stride`-th step (the initial and final states are
    /// always recorded).
    pub stride: usize,
}

impl IntegratorSpec {
    pub fn rk4(step: f64, t_end: f64, stride: usize) -> Self {
        Self {
            method: Method::Rk4 { step },
            t_end,
            stride,
        }
    }

    pub fn rk45(tolerance: f64, t_end: f64, stride: usize) -> Self {
        Self {
            method: Method::Rk45 { tolerance },
            t_end,
            stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidIntegratorSpec(format!(
                "t_end must be finite and positive, got {}",
                self.t_end
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidIntegratorSpec("stride must be >= 1".into()));
        }
        match self.method {
            Method::Rk4 { step } => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::InvalidIntegratorSpec(format!(
                        "RK4 step must be finite and positive, got {step}"
                    )));
                }
            }
            Method::Rk45 { tolerance } => {
                if !(tolerance > 0.0 && tolerance <= 1e-3) {
                    return Err(Error::InvalidIntegratorSpec(format!(
                        "RK45 tolerance must lie in (0, 1e-3], got {tolerance}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Default RK4 step for a state: the osculating internal period divided by
/// [`STEPS_PER_PERIOD`]. Falls back to the circular period at the current
/// separation if the internal motion is unbound.
pub fn default_step(s0: &ComState, k: &Constants) -> f64 {
    let period = crate::state::osculating_period(s0, k)
        .unwrap_or_else(|| k.circular_period(s0.rel_pos.norm().max(f64::MIN_POSITIVE)));
    period / STEPS_PER_PERIOD
}

/// Time series of states plus per-sample invariant monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComState>,
    pub monitors: Vec<DerivedQuantities>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &ComState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &ComState {
        self.states.last().expect("non-empty trajectory")
    }

    /// Index of the sample nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.times.len() {
                    self.times.len() - 1
                } else if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }
}

const ERR_EXPONENT: f64 = -0.2; // 1/(order+1) for the embedded 4th-order error
const MAX_STEPS: u64 = 200_000_000;

type Packed = [f64; 12];

fn pack_com(s: &ComState) -> Packed {
    let mut a = [0.0; 12];
    a[0..3].copy_from_slice(&s.com_pos.to_array());
    a[3..6].copy_from_slice(&s.com_vel.to_array());
    a[6..9].copy_from_slice(&s.rel_pos.to_array());
    a[9..12].copy_from_slice(&s.rel_vel.to_array());
    a
}

fn unpack_com(a: &Packed) -> ComState {
    ComState {
        com_pos: Vec3::new(a[0], a[1], a[2]),
        com_vel: Vec3::new(a[3], a[4], a[5]),
        rel_pos: Vec3::new(a[6], a[7], a[8]),
        rel_vel: Vec3::new(a[9], a[10], a[11]),
    }
}

fn pack_lab(s: &LabState) -> Packed {
    let mut a = [0.0; 12];
    a[0..3].copy_from_slice(&s.r_p.to_array());
    a[3..6].copy_from_slice(&s.v_p.to_array());
    a[6..9].copy_from_slice(&s.r_e.to_array());
    a[9..12].copy_from_slice(&s.v_e.to_array());
    a
}

fn unpack_lab(a: &Packed) -> LabState {
    LabState {
        r_p: Vec3::new(a[0], a[1], a[2]),
        v_p: Vec3::new(a[3], a[4], a[5]),
        r_e: Vec3::new(a[6], a[7], a[8]),
        v_e: Vec3::new(a[9], a[10], a[11]),
    }
}

fn add_scaled(y: &Packed, k: &Packed, h: f64) -> Packed {
    let mut out = *y;
    for i in 0..12 {
        out[i] += h * k[i];
    }
    out
}

fn all_finite(y: &Packed) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// One classic RK4 step.
fn rk4_step<F>(f: &F, t: f64, y: &Packed, h: f64) -> Result<Packed>
where
    F: Fn(f64, &Packed) -> Result<Packed>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &add_scaled(y, &k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, &add_scaled(y, &k2, 0.5 * h))?;
    let k4 = f(t + h, &add_scaled(y, &k3, h))?;
    let mut out = *y;
    for i in 0..12 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and embedded 4th-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DormandPrince<'a, F> {
    f: &'a F,
    tolerance: f64,
}

impl<'a, F> DormandPrince<'a, F>
where
    F: Fn(f64, &Packed) -> Result<Packed>,
{
    /// One attempted step; returns (y_new, k_last, error_norm).
    fn attempt(&self, t: f64, y: &Packed, k1: &Packed, h: f64) -> Result<(Packed, Packed, f64)> {
        let mut k: [Packed; 7] = [[0.0; 12]; 7];
        k[0] = *k1;
        for stage in 1..7 {
            let mut y_stage = *y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = DP_A[stage - 1][j];
                if a != 0.0 {
                    for i in 0..12 {
                        y_stage[i] += h * a * kj[i];
                    }
                }
            }
            k[stage] = (self.f)(t + DP_C[stage] * h, &y_stage)?;
        }
        // The 5th-order weights equal the last A row (FSAL): the stage-7
        // input is already the solution.
        let mut y_new = *y;
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = DP_A[5][j];
            if a != 0.0 {
                for i in 0..12 {
                    y_new[i] += h * a * kj[i];
                }
            }
        }
        let mut err_norm_sq = 0.0;
        for i in 0..12 {
            let mut err = 0.0;
            for (j, kj) in k.iter().enumerate() {
                err += DP_E[j] * kj[i];
            }
            err *= h;
            let scale = self.tolerance * (1.0 + y[i].abs().max(y_new[i].abs()));
            let ratio = err / scale;
            err_norm_sq += ratio * ratio;
        }
        Ok((y_new, k[6], (err_norm_sq / 12.0).sqrt()))
    }
}

/// Integrate a system from `s0` according to `spec`, recording samples every
/// `spec.stride` steps plus the final state, with derived-quantity monitors
/// at every sample. Deterministic: identical inputs produce identical
/// trajectories, independent of thread count.
pub fn integrate(system: &System, s0: &ComState, spec: &IntegratorSpec) -> Result<Trajectory> {
    spec.validate()?;
    let k = system.constants;
    let field = system.field;
    let eps = system.softening;

    match system.formulation {
        Formulation::Direct => {
            let lab0 = s0.to_lab(&k);
            let deriv = move |_t: f64, y: &Packed| -> Result<Packed> {
                let s = unpack_lab(y);
                Ok(pack_lab(&direct_derivative(&s, &field, &k, eps)?))
            };
            run_integration(system, spec, pack_lab(&lab0), deriv, |y| {
                unpack_lab(y).to_com(&k)
            })
        }
        Formulation::ReducedUniform => {
            let deriv = move |_t: f64, y: &Packed| -> Result<Packed> {
                let s = unpack_com(y);
                Ok(pack_com(&reduced_uniform_derivative(&s, &field, &k, eps)?))
            };
            run_integration(system, spec, pack_com(s0), deriv, unpack_com)
        }
        Formulation::ReducedInhomogeneous => {
            let deriv = move |_t: f64, y: &Packed| -> Result<Packed> {
                let s = unpack_com(y);
                Ok(pack_com(&reduced_inhomogeneous_derivative(
                    &s, &field, &k, eps,
                )?))
            };
            run_integration(system, spec, pack_com(s0), deriv, unpack_com)
        }
        Formulation::SimplifiedSg => {
            let deriv = move |_t: f64, y: &Packed| -> Result<Packed> {
                let s = unpack_com(y);
                Ok(pack_com(&simplified_sg_derivative(&s, &field, &k, eps)?))
            };
            run_integration(system, spec, pack_com(s0), deriv, unpack_com)
        }
    }
}

fn run_integration<F, U>(
    system: &System,
    spec: &IntegratorSpec,
    y0: Packed,
    deriv: F,
    to_com: U,
) -> Result<Trajectory>
where
    F: Fn(f64, &Packed) -> Result<Packed>,
    U: Fn(&Packed) -> ComState,
{
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut record = |t: f64, y: &Packed| {
        times.push(t);
        states.push(to_com(y));
    };

    // Attach the failure time to state-level singularities.
    let at_time = |err: Error, t: f64, y: &Packed| -> Error {
        match err {
            Error::SingularConfiguration => Error::Singularity {
                time: t,
                separation: match system.formulation {
                    Formulation::Direct => unpack_lab(y).separation().norm(),
                    _ => unpack_com(y).rel_pos.norm(),
                },
            },
            other => other,
        }
    };

    match spec.method {
        Method::Rk4 { step } => {
            // Land exactly on t_end; absorb float wobble when t_end is an
            // exact multiple of the step.
            let n_exact = spec.t_end / step;
            let n_steps = if (n_exact - n_exact.round()).abs() <= 1e-9 * n_exact.max(1.0) {
                n_exact.round().max(1.0)
            } else {
                n_exact.ceil()
            } as u64;
            if n_steps > MAX_STEPS {
                return Err(Error::InvalidIntegratorSpec(format!(
                    "{n_steps} steps exceed the {MAX_STEPS} step budget"
                )));
            }
            let mut y = y0;
            record(0.0, &y);
            for i in 0..n_steps {
                let t = i as f64 * step;
                let h = if i + 1 == n_steps {
                    spec.t_end - t
                } else {
                    step
                };
                y = rk4_step(&deriv, t, &y, h).map_err(|e| at_time(e, t, &y))?;
                let t_next = if i + 1 == n_steps {
                    spec.t_end
                } else {
                    (i + 1) as f64 * step
                };
                if !all_finite(&y) {
                    return Err(Error::NonFiniteState { time: t_next });
                }
                if (i + 1).is_multiple_of(spec.stride as u64) || i + 1 == n_steps {
                    record(t_next, &y);
                }
            }
        }
        Method::Rk45 { tolerance } => {
            let stepper = DormandPrince {
                f: &deriv,
                tolerance,
            };
            let min_step = 64.0 * f64::EPSILON * spec.t_end;
            let mut t = 0.0;
            let mut y = y0;
            let mut h = (spec.t_end * 1e-4).max(min_step);
            let mut k1 = deriv(0.0, &y).map_err(|e| at_time(e, 0.0, &y))?;
            let mut accepted: u64 = 0;
            let mut attempts: u64 = 0;
            record(0.0, &y);
            while t < spec.t_end {
                attempts += 1;
                if attempts > MAX_STEPS {
                    return Err(Error::InvalidIntegratorSpec(format!(
                        "adaptive integration exceeded the {MAX_STEPS} step budget"
                    )));
                }
                h = h.min(spec.t_end - t);
                let (y_new, k_last, err) = stepper
                    .attempt(t, &y, &k1, h)
                    .map_err(|e| at_time(e, t, &y))?;
                if err <= 1.0 {
                    t += h;
                    y = y_new;
                    k1 = k_last;
                    accepted += 1;
                    if !all_finite(&y) {
                        return Err(Error::NonFiniteState { time: t });
                    }
                    let at_end = t >= spec.t_end * (1.0 - f64::EPSILON);
                    if accepted.is_multiple_of(spec.stride as u64) || at_end {
                        record(t, &y);
                    }
                    if at_end {
                        break;
                    }
                }
                let factor = if err.is_finite() && err > 0.0 {
                    (0.9 * err.powf(ERR_EXPONENT)).clamp(0.2, 5.0)
                } else if err == 0.0 {
                    5.0
                } else {
                    // Non-finite error estimate (blow-up inside the step).
                    0.2
                };
                h *= factor;
                if h < min_step {
                    return Err(Error::StepUnderflow {
                        time: t,
                        step: h,
                        minimum: min_step,
                    });
                }
            }
        }
    }

    let monitors = states
        .iter()
        .map(|s| derived_quantities(s, &system.constants, system.softening))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times,
        states,
        monitors,
    })
}

/// Time series of the energy channels plus their excursions, quantifying the
/// coupling of center-of-mass and internal motion in a magnetic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    /// (1/2) M Rdot^2 per sample.
    pub com_kinetic: Vec<f64>,
    /// (1/2) mu rdot^2 + V_coulomb per sample.
    pub internal: Vec<f64>,
    /// Sum of the two channels (the conserved total).
    pub total: Vec<f64>,
    /// Max |T_com(t) - T_com(0)|.
    pub com_excursion: f64,
    /// Max |E_int(t) - E_int(0)|.
    pub internal_excursion: f64,
    /// Max |total(t) - total(0)|.
    pub total_deviation: f64,
}

/// Split the monitored energy into center-of-mass and internal channels.
/// The internal channel reuses the integrated (softened) energy monitor, so
/// the sum is exactly the monitored total.
pub fn monitor_coupling(tr: &Trajectory, k: &Constants) -> CouplingReport {
    let com_kinetic: Vec<f64> = tr.states.iter().map(|s| s.com_kinetic_energy(k)).collect();
    let total: Vec<f64> = tr.monitors.iter().map(|m| m.energy).collect();
    let internal: Vec<f64> = com_kinetic
        .iter()
        .zip(&total)
        .map(|(t_com, e)| e - t_com)
        .collect();
    let excursion = |series: &[f64]| {
        let first = series[0];
        series
            .iter()
            .fold(0.0_f64, |m, v| m.max((v - first).abs()))
    };
    CouplingReport {
        com_excursion: excursion(&com_kinetic),
        internal_excursion: excursion(&internal),
        total_deviation: excursion(&total),
        times: tr.times.clone(),
        com_kinetic,
        internal,
        total,
    }
}

/// RMS/max deviations between two trajectories at matched sample times,
/// normalized by an orbit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryComparison {
    /// RMS over samples of |Delta R|, absolute units.
    pub rms_com: f64,
    /// RMS over samples of |Delta r|, absolute units.
    pub rms_rel: f64,
    pub max_com: f64,
    pub max_rel: f64,
    /// Normalization scale (the initial internal orbit scale).
    pub scale: f64,
}

impl TrajectoryComparison {
    pub fn rms_com_normalized(&self) -> f64 {
        self.rms_com / self.scale
    }
    pub fn rms_rel_normalized(&self) -> f64 {
        self.rms_rel / self.scale
    }
}

/// Compare two trajectories sampled at identical times.
pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
    scale: f64,
) -> Result<TrajectoryComparison> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "trajectories have different sample counts: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let t_scale = a.times.last().copied().unwrap_or(1.0).abs().max(1.0);
    let mut sum_com = 0.0;
    let mut sum_rel = 0.0;
    let mut max_com = 0.0_f64;
    let mut max_rel = 0.0_f64;
    for i in 0..a.len() {
        if (a.times[i] - b.times[i]).abs() > 1e-12 * t_scale {
            return Err(Error::Invalid(format!(
                "sample times differ at index {i}: {} vs {}",
                a.times[i], b.times[i]
            )));
        }
        let d_com = (a.states[i].com_pos - b.states[i].com_pos).norm();
        let d_rel = (a.states[i].rel_pos - b.states[i].rel_pos).norm();
        sum_com += d_com * d_com;
        sum_rel += d_rel * d_rel;
        max_com = max_com.max(d_com);
        max_rel = max_rel.max(d_rel);
    }
    let n = a.len() as f64;
    Ok(TrajectoryComparison {
        rms_com: (sum_com / n).sqrt(),
        rms_rel: (sum_rel / n).sqrt(),
        max_com,
        max_rel,
        scale,
    })
}
