//! Far-field electromagnetic structure of the moving atom.
//!
//! The low-speed, short-distance vector potential of the two charges,
//! expanded to first order in the internal separation about the center of
//! mass, splits into
//!
//! ```text
//!   A1 = -(e/c) rdot / |x - R|
//!   A2 = -(e/c) ((x - R) . r / |x - R|^3) (Rdot + K_L rdot)
//! ```
//!
//! with fields H1 = curl A1 (a "spinning belt" around the rdot axis,
//! falling off as distance^-2) and H2 = curl A2 (dipolar, distance^-3,
//! expressible as (1/c) rho_dot x E_p with E_p the field of the electric
//! dipole p = -e r). Time-averaging A over whole internal periods of an
//! atom at rest recovers the dipole form with moment -(e K_L / 2 mu c) L,
//! i.e. the gyromagnetic ratio e K_L / (2 mu c).
//!
//! None of this is valid inside the atom; every operation enforces
//! |x - R| > validity_factor * |r|. The far (radiation/retardation)
//! boundary is not modeled.

use crate::constants::Constants;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::state::{osculating_period, ComState};
use crate::vec3::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Default validity-region factor: observation points must be farther from
/// the center of mass than this multiple of the internal separation.
pub const DEFAULT_VALIDITY_FACTOR: f64 = 5.0;

/// Minimum probe count for the time-averaged dipole fit; the overdetermined
/// fit is what exposes systematic deviations from the dipole form.
pub const MIN_MOMENT_PROBES: usize = 20;

fn check_validity(s: &ComState, x: Vec3, factor: f64) -> Result<(Vec3, f64)> {
    let u = x - s.com_pos;
    let d = u.norm();
    let bound = factor * s.rel_pos.norm();
    if d <= bound {
        return Err(Error::ValidityRegion {
            distance: d,
            bound,
            factor,
        });
    }
    Ok((u, d))
}

/// The two pieces of the far-field vector potential; `a` is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorPotentialParts {
    pub a: Vec3,
    pub a1: Vec3,
    pub a2: Vec3,
}

/// Far-field vector potential at `x` for the instantaneous state `s`.
pub fn far_vector_potential(
    s: &ComState,
    x: Vec3,
    k: &Constants,
    validity_factor: f64,
) -> Result<VectorPotentialParts> {
    let (u, d) = check_validity(s, x, validity_factor)?;
    let e_over_c = k.e / k.c;
    let a1 = s.rel_vel * (-e_over_c / d);
    let rho_dot = s.com_vel + s.rel_vel * k.k_l();
    let a2 = rho_dot * (-e_over_c * u.dot(s.rel_pos) / (d * d * d));
    Ok(VectorPotentialParts { a: a1 + a2, a1, a2 })
}

/// "Spinning belt" field H1 = -(e/c) rdot x (x - R) / |x - R|^3, the curl
/// of A1; decays as distance^-2.
pub fn field_h1(s: &ComState, x: Vec3, k: &Constants, validity_factor: f64) -> Result<Vec3> {
    let (u, d) = check_validity(s, x, validity_factor)?;
    Ok(s.rel_vel.cross(u) * (-k.e / (k.c * d * d * d)))
}

/// Dipolar field H2 = -(e/c) rho_dot x [3 (r.u) u - |u|^2 r] / |u|^5, the
/// curl of A2; decays as distance^-3. Identical to
/// (1/c) rho_dot x E_p with p = -e r.
pub fn field_h2(s: &ComState, x: Vec3, k: &Constants, validity_factor: f64) -> Result<Vec3> {
    let (u, d) = check_validity(s, x, validity_factor)?;
    let d2 = d * d;
    let d5 = d2 * d2 * d;
    let rho_dot = s.com_vel + s.rel_vel * k.k_l();
    let dipole_kernel = u * (3.0 * s.rel_pos.dot(u)) - s.rel_pos * d2;
    Ok(rho_dot.cross(dipole_kernel) * (-k.e / (k.c * d5)))
}

/// Electric field of the instantaneous dipole p = -e r:
/// E_p = [3 (p.u) u - |u|^2 p] / |u|^5.
pub fn electric_dipole_field(
    s: &ComState,
    x: Vec3,
    k: &Constants,
    validity_factor: f64,
) -> Result<Vec3> {
    let (u, d) = check_validity(s, x, validity_factor)?;
    let p = s.rel_pos * (-k.e);
    let d2 = d * d;
    let d5 = d2 * d2 * d;
    Ok((u * (3.0 * p.dot(u)) - p * d2) / d5)
}

/// Electric field E = E_p - (1/c) dA/dt at the trajectory sample nearest to
/// `t`, with dA/dt from central differencing of the far vector potential
/// over the neighboring samples (stencil step = the sample stride).
pub fn electric_field(
    tr: &Trajectory,
    x: Vec3,
    k: &Constants,
    t: f64,
    validity_factor: f64,
) -> Result<Vec3> {
    if tr.len() < 3 {
        return Err(Error::Invalid(
            "electric_field needs at least three trajectory samples".into(),
        ));
    }
    let start = tr.times[1];
    let end = tr.times[tr.len() - 2];
    if !(t >= start && t <= end) {
        return Err(Error::TimeOutOfRange {
            time: t,
            start,
            end,
        });
    }
    let i = tr.nearest_index(t).clamp(1, tr.len() - 2);
    let before = far_vector_potential(&tr.states[i - 1], x, k, validity_factor)?;
    let after = far_vector_potential(&tr.states[i + 1], x, k, validity_factor)?;
    let dt = tr.times[i + 1] - tr.times[i - 1];
    let da_dt = (after.a - before.a) / dt;
    let e_p = electric_dipole_field(&tr.states[i], x, k, validity_factor)?;
    Ok(e_p - da_dt / k.c)
}

/// Complete far-field record at one observation point and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: Vec3,
    pub a: Vec3,
    pub a1: Vec3,
    pub a2: Vec3,
    pub h1: Vec3,
    pub h2: Vec3,
    pub e: Vec3,
    pub e_dipole: Vec3,
}

/// Assemble every far-field quantity at `x` from the trajectory sample
/// nearest to `t` (the electric field uses the neighboring samples).
pub fn sample_at(
    tr: &Trajectory,
    x: Vec3,
    k: &Constants,
    t: f64,
    validity_factor: f64,
) -> Result<FieldSample> {
    let i = tr.nearest_index(t).clamp(1, tr.len().saturating_sub(2));
    let s = &tr.states[i];
    let parts = far_vector_potential(s, x, k, validity_factor)?;
    Ok(FieldSample {
        x,
        a: parts.a,
        a1: parts.a1,
        a2: parts.a2,
        h1: field_h1(s, x, k, validity_factor)?,
        h2: field_h2(s, x, k, validity_factor)?,
        e: electric_field(tr, x, k, t, validity_factor)?,
        e_dipole: electric_dipole_field(s, x, k, validity_factor)?,
    })
}

/// Exact low-speed two-monopole superposition
/// A = (e/c) [v_p / |x - r_p| - v_e / |x - r_e|]; the oracle the far-field
/// expansion converges to at second order in |r| / |x - R|.
pub fn exact_two_monopole_potential(s: &ComState, x: Vec3, k: &Constants) -> Vec3 {
    let lab = s.to_lab(k);
    let e_over_c = k.e / k.c;
    lab.v_p * (e_over_c / (x - lab.r_p).norm()) - lab.v_e * (e_over_c / (x - lab.r_e).norm())
}

/// Magnetic field of the exact superposition (curl of each monopole term).
pub fn exact_two_monopole_field(s: &ComState, x: Vec3, k: &Constants) -> Vec3 {
    let lab = s.to_lab(k);
    let e_over_c = k.e / k.c;
    let term = |v: Vec3, pos: Vec3, sign: f64| {
        let u = x - pos;
        let d = u.norm();
        v.cross(u) * (sign * e_over_c / (d * d * d))
    };
    term(lab.v_p, lab.r_p, 1.0) + term(lab.v_e, lab.r_e, -1.0)
}

/// Electrostatic field of the two charges (the order at which E_p holds).
pub fn exact_coulomb_field(s: &ComState, x: Vec3, k: &Constants) -> Vec3 {
    let lab = s.to_lab(k);
    let term = |pos: Vec3, sign: f64| {
        let u = x - pos;
        let d = u.norm();
        u * (sign * k.e / (d * d * d))
    };
    term(lab.r_p, 1.0) + term(lab.r_e, -1.0)
}

/// Time-averaged magnetic moment and gyromagnetic ratio extracted from a
/// trajectory of an atom at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Least-squares dipole moment of the time-averaged vector potential.
    pub mu_avg: Vec3,
    /// Time-averaged internal angular momentum over the same window.
    pub l_avg: Vec3,
    /// Fitted ratio coefficient g in mu_avg = -g L_avg (signed).
    pub g_measured: f64,
    /// Closed-form prediction e K_L / (2 mu c).
    pub g_predicted: f64,
    /// Instantaneous electric dipole -e r at the start of the window.
    pub dipole_p: Vec3,
    /// Whole internal periods covered by the averaging window.
    pub periods_used: usize,
    /// RMS residual of the dipole fit relative to the RMS averaged signal.
    pub fit_residual: f64,
    /// Max over probes of |<discarded symmetric term>| / |<kept term>|;
    /// the discarded piece is the total derivative that the time average
    /// eliminates over whole periods.
    pub discarded_term_ratio: f64,
}

/// Relative CoM-speed bound treated as "at rest" for the averaging.
const REST_SPEED_RATIO: f64 = 1e-9;

/// Time-average the far vector potential at each probe over a whole number
/// of internal periods and fit the magnetic-dipole form
/// `<A>(x) = mu x (x - R)/|x - R|^3` to extract the moment and the
/// gyromagnetic ratio.
///
/// Requires the atom at rest (Rdot = 0; the averaging identities assume it),
/// at least one full internal period of coverage, and at least
/// [`MIN_MOMENT_PROBES`] probes, all inside the validity region throughout
/// the window.
pub fn averaged_moment(
    tr: &Trajectory,
    k: &Constants,
    probes: &[Vec3],
    validity_factor: f64,
) -> Result<MomentEstimate> {
    if tr.len() < 3 {
        return Err(Error::Invalid(
            "averaged_moment needs at least three trajectory samples".into(),
        ));
    }
    if probes.len() < MIN_MOMENT_PROBES {
        return Err(Error::Invalid(format!(
            "averaged_moment needs at least {MIN_MOMENT_PROBES} probes, got {}",
            probes.len()
        )));
    }
    let internal_speed = tr
        .states
        .iter()
        .fold(0.0_f64, |m, s| m.max(s.rel_vel.norm()));
    let com_speed = tr
        .states
        .iter()
        .fold(0.0_f64, |m, s| m.max(s.com_vel.norm()));
    if com_speed > REST_SPEED_RATIO * internal_speed {
        return Err(Error::ComNotAtRest {
            max_com_speed: com_speed,
            internal_speed,
        });
    }

    let period = osculating_period(tr.initial(), k)
        .ok_or_else(|| Error::Invalid("averaged_moment requires a bound internal orbit".into()))?;
    let t0 = tr.times[0];
    let covered = (tr.times[tr.len() - 1] - t0) / period;
    // Absorb one-ulp wobble when the trajectory ends exactly on a period.
    let n_periods = (covered * (1.0 + 1e-12) + 1e-12).floor() as usize;
    if n_periods < 1 {
        return Err(Error::InsufficientPeriods {
            covered,
            needed: 1.0,
        });
    }
    let window = (n_periods as f64 * period).min(tr.times[tr.len() - 1] - t0);
    let t_end = t0 + window;

    // One streaming trapezoid pass per probe, clipped to the window end by
    // linear interpolation (the window is an exact period multiple, the
    // sampling grid generally is not).
    let n_probes = probes.len();
    let mut avg_a = vec![Vec3::zero(); n_probes];
    let mut avg_kept = vec![Vec3::zero(); n_probes];
    let mut avg_disc = vec![Vec3::zero(); n_probes];
    let mut avg_l = Vec3::zero();

    let eval = |s: &ComState, idx: usize| -> Result<(Vec3, Vec3, Vec3)> {
        let (u, _d) = check_validity(s, probes[idx], validity_factor)?;
        let a = far_vector_potential(s, probes[idx], k, validity_factor)?.a;
        // Decomposition of (u.r) rdot into the kept antisymmetric part and
        // the discarded total-derivative part.
        let kept = (s.rel_vel * u.dot(s.rel_pos) - s.rel_pos * u.dot(s.rel_vel)) * 0.5;
        let disc = (s.rel_vel * u.dot(s.rel_pos) + s.rel_pos * u.dot(s.rel_vel)) * 0.5;
        Ok((a, kept, disc))
    };

    let mut prev: Vec<(Vec3, Vec3, Vec3)> = (0..n_probes)
        .map(|p| eval(&tr.states[0], p))
        .collect::<Result<_>>()?;
    let mut prev_l = tr.monitors[0].l;
    let mut prev_t = t0;
    for i in 1..tr.len() {
        let t_i = tr.times[i];
        let cur: Vec<(Vec3, Vec3, Vec3)> = (0..n_probes)
            .map(|p| eval(&tr.states[i], p))
            .collect::<Result<_>>()?;
        let cur_l = tr.monitors[i].l;
        if t_i >= t_end {
            // Interpolate to the window end and finish.
            let w = if t_i > prev_t {
                (t_end - prev_t) / (t_i - prev_t)
            } else {
                0.0
            };
            let dt = t_end - prev_t;
            for p in 0..n_probes {
                let end_a = prev[p].0 + (cur[p].0 - prev[p].0) * w;
                let end_k = prev[p].1 + (cur[p].1 - prev[p].1) * w;
                let end_d = prev[p].2 + (cur[p].2 - prev[p].2) * w;
                avg_a[p] += (prev[p].0 + end_a) * (0.5 * dt);
                avg_kept[p] += (prev[p].1 + end_k) * (0.5 * dt);
                avg_disc[p] += (prev[p].2 + end_d) * (0.5 * dt);
            }
            let end_l = prev_l + (cur_l - prev_l) * w;
            avg_l += (prev_l + end_l) * (0.5 * dt);
            break;
        }
        let dt = t_i - prev_t;
        for p in 0..n_probes {
            avg_a[p] += (prev[p].0 + cur[p].0) * (0.5 * dt);
            avg_kept[p] += (prev[p].1 + cur[p].1) * (0.5 * dt);
            avg_disc[p] += (prev[p].2 + cur[p].2) * (0.5 * dt);
        }
        avg_l += (prev_l + cur_l) * (0.5 * dt);
        prev = cur;
        prev_l = cur_l;
        prev_t = t_i;
    }
    let inv_window = 1.0 / window;
    for p in 0..n_probes {
        avg_a[p] = avg_a[p] * inv_window;
        avg_kept[p] = avg_kept[p] * inv_window;
        avg_disc[p] = avg_disc[p] * inv_window;
    }
    let l_avg = avg_l * inv_window;

    // Linear least squares for mu in <A>(x) = mu x v with v = u / |u|^3:
    // normal equations sum(|v|^2 I - v v^T) mu = sum(v x <A>).
    let com = tr.initial().com_pos;
    let mut normal = Mat3::zero();
    let mut rhs = Vec3::zero();
    for (p, a) in avg_a.iter().enumerate() {
        let u = probes[p] - com;
        let d = u.norm();
        let v = u / (d * d * d);
        let v2 = v.norm_squared();
        let va = v.to_array();
        for i in 0..3 {
            for j in 0..3 {
                normal.rows[i][j] += (if i == j { v2 } else { 0.0 }) - va[i] * va[j];
            }
        }
        rhs += v.cross(*a);
    }
    let mu_avg = normal
        .solve(rhs)
        .ok_or_else(|| Error::Invalid("degenerate probe geometry for the dipole fit".into()))?;

    // Fit residual relative to the signal.
    let mut res_sq = 0.0;
    let mut sig_sq = 0.0;
    for (p, a) in avg_a.iter().enumerate() {
        let u = probes[p] - com;
        let d = u.norm();
        let model = mu_avg.cross(u / (d * d * d));
        res_sq += (*a - model).norm_squared();
        sig_sq += a.norm_squared();
    }
    let fit_residual = if sig_sq > 0.0 {
        (res_sq / sig_sq).sqrt()
    } else {
        0.0
    };

    let discarded_term_ratio = avg_kept
        .iter()
        .zip(&avg_disc)
        .fold(0.0_f64, |m, (kept, disc)| {
            if kept.norm() > 0.0 {
                m.max(disc.norm() / kept.norm())
            } else {
                m
            }
        });

    let l2 = l_avg.norm_squared();
    let g_measured = if l2 > 0.0 {
        -mu_avg.dot(l_avg) / l2
    } else {
        0.0
    };
    Ok(MomentEstimate {
        mu_avg,
        l_avg,
        g_measured,
        g_predicted: k.gyromagnetic_ratio(),
        dipole_p: tr.initial().rel_pos * (-k.e),
        periods_used: n_periods,
        fit_residual,
        discarded_term_ratio,
    })
}

/// Deterministic probe cloud: `per_radius` golden-angle points on spheres of
/// the given radii around `center`.
pub fn probe_shell(center: Vec3, radii: &[f64], per_radius: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let mut out = Vec::with_capacity(radii.len() * per_radius);
    for &radius in radii {
        for i in 0..per_radius {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / per_radius as f64;
            let s = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            out.push(center + Vec3::new(s * phi.cos(), s * phi.sin(), z) * radius);
        }
    }
    out
}

/// Least-squares slope and intercept of log10(y) against log10(x); the
/// decay-exponent oracle for the field components.
pub fn fit_power_law(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in samples {
        let lx = x.log10();
        let ly = y.log10();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}
