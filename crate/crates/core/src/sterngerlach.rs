//! Beam-ensemble construction and deflection statistics.
//!
//! An ensemble is a set of atoms with identical constants, field and flight
//! time but randomized internal configuration (orbit orientation and phase)
//! and jittered starting position. Everything is derived deterministically
//! from a single seed: atom `i` draws from ChaCha stream `i` of that seed,
//! so results are independent of thread count and of which atoms run.
//!
//! Two internal-state families realize the deflection scenarios: circular
//! Kepler orbits (|L| = mu a^2 omega) and straight-line oscillations through
//! the force center (L = 0 exactly, which needs Coulomb softening to survive
//! the origin crossings).

use crate::constants::Constants;
use crate::dynamics::{integrate, Formulation, IntegratorSpec, System, Trajectory};
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::state::{derived_quantities, ComState};
use crate::vec3::Vec3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Fraction of failed atoms above which a run is flagged invalid.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Number of histogram bins in the deflection report.
pub const HISTOGRAM_BINS: usize = 32;

/// Internal-state family of the ensemble atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InternalKind {
    /// Circular orbit of the given radius; |L| is fixed by the Kepler
    /// balance. `axis` fixes the L direction, `None` randomizes it
    /// isotropically. The orbital phase is always randomized.
    Circular { radius: f64, axis: Option<Vec3> },
    /// Straight-line oscillation of the given amplitude through the force
    /// center: L = 0 exactly. `axis` fixes the oscillation line, `None`
    /// randomizes it isotropically. The oscillation phase is randomized by
    /// position fraction and travel direction.
    LinearOscillation { amplitude: f64, axis: Option<Vec3> },
}

impl InternalKind {
    pub fn length_scale(&self) -> f64 {
        match self {
            InternalKind::Circular { radius, .. } => *radius,
            InternalKind::LinearOscillation { amplitude, .. } => *amplitude,
        }
    }
}

/// Complete description of a beam-ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_atoms: usize,
    pub internal: InternalKind,
    /// Initial center-of-mass velocity of every atom.
    pub beam_velocity: Vec3,
    /// Per-axis standard deviation of the Gaussian starting-position jitter.
    pub position_jitter: Vec3,
    pub seed: u64,
    pub constants: Constants,
    pub field: FieldModel,
    /// Integration method and flight time (`integrator.t_end`).
    pub integrator: IntegratorSpec,
    pub softening: f64,
    /// Equations of motion used per atom; reduced forms by default, the
    /// direct oracle for cross-checks.
    pub formulation: Formulation,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidEnsembleSpec("n_atoms must be >= 1".into()));
        }
        let a = self.internal.length_scale();
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidEnsembleSpec(format!(
                "internal length scale must be positive, got {a}"
            )));
        }
        if let InternalKind::Circular { axis: Some(v), .. }
        | InternalKind::LinearOscillation { axis: Some(v), .. } = self.internal
        {
            if v.norm() == 0.0 {
                return Err(Error::InvalidEnsembleSpec(
                    "fixed internal axis must be nonzero".into(),
                ));
            }
        }
        if !(self.position_jitter.x >= 0.0
            && self.position_jitter.y >= 0.0
            && self.position_jitter.z >= 0.0)
        {
            return Err(Error::InvalidEnsembleSpec(
                "position jitter must be non-negative".into(),
            ));
        }
        self.integrator.validate()?;
        self.system().map(|_| ())
    }

    /// The dynamical system every atom is integrated under.
    pub fn system(&self) -> Result<System> {
        System::new(
            self.constants,
            self.field,
            self.formulation,
            self.softening,
        )
    }

    /// The same spec with a different formulation (for oracle cross-checks).
    pub fn with_formulation(&self, formulation: Formulation) -> Self {
        Self {
            formulation,
            ..self.clone()
        }
    }
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Two independent standard normals (Box-Muller).
fn standard_normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    (r * u2.cos(), r * u2.sin())
}

fn draw_atom(spec: &EnsembleSpec, index: usize) -> ComState {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let internal = match spec.internal {
        InternalKind::Circular { radius, axis } => {
            let n = axis
                .map(|v| v.normalized())
                .unwrap_or_else(|| random_unit_vector(&mut rng));
            let phase = rng.gen_range(0.0..TAU);
            ComState::circular_orbit(&spec.constants, radius, n, phase)
        }
        InternalKind::LinearOscillation { amplitude, axis } => {
            let n = axis
                .map(|v| v.normalized())
                .unwrap_or_else(|| random_unit_vector(&mut rng));
            let fraction = rng.gen_range(-1.0..=1.0);
            let outward = rng.gen_bool(0.5);
            ComState::linear_oscillation(
                &spec.constants,
                amplitude,
                n,
                fraction,
                outward,
                spec.softening,
            )
        }
    };
    let (g0, g1) = standard_normal_pair(&mut rng);
    let (g2, _) = standard_normal_pair(&mut rng);
    let jitter = Vec3::new(
        g0 * spec.position_jitter.x,
        g1 * spec.position_jitter.y,
        g2 * spec.position_jitter.z,
    );
    internal.with_com(jitter, spec.beam_velocity)
}

/// Construct the initial states of the ensemble; deterministic under the
/// spec's seed.
pub fn build_ensemble(spec: &EnsembleSpec) -> Result<Vec<ComState>> {
    spec.validate()?;
    Ok((0..spec.n_atoms).map(|i| draw_atom(spec, i)).collect())
}

/// Endpoint record of one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomEndpoint {
    pub index: usize,
    pub initial: ComState,
    pub end: ComState,
    /// Internal angular momentum at the endpoint.
    pub l: Vec3,
    /// Cross-coupling vector at the endpoint.
    pub s: Vec3,
}

/// Histogram of endpoint positions projected on an axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub axis: Vec3,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

/// Per-axis summary statistics (compensated sums, index order, so results
/// do not depend on thread count).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VectorStats {
    pub mean: Vec3,
    pub variance: Vec3,
    /// Standard error of the mean, per axis.
    pub sem: Vec3,
}

/// Deflection statistics of a beam run. All summaries are recomputable from
/// the stored per-atom endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflectionStats {
    pub n_atoms: usize,
    pub n_failed: usize,
    /// (atom index, failure message) for every excluded atom.
    pub failures: Vec<(usize, String)>,
    pub endpoints: Vec<AtomEndpoint>,
    /// Statistics of the final center-of-mass position.
    pub final_pos: VectorStats,
    /// Statistics of the net displacement (final - initial - beam drift);
    /// subtracting the jittered start isolates the field-driven deflection.
    pub deflection: VectorStats,
    /// Mean final center-of-mass velocity.
    pub mean_final_vel: Vec3,
    /// Histogram of final position projected on the field axis.
    pub histogram: Histogram,
    /// False when more than [`FAILURE_BUDGET`] of the atoms failed.
    pub valid: bool,
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn vector_stats(values: impl Iterator<Item = Vec3> + Clone, n: usize) -> VectorStats {
    if n == 0 {
        return VectorStats::default();
    }
    let mut sums = [CompensatedSum::default(); 3];
    for v in values.clone() {
        let a = v.to_array();
        for i in 0..3 {
            sums[i].add(a[i]);
        }
    }
    let mean = Vec3::new(
        sums[0].value() / n as f64,
        sums[1].value() / n as f64,
        sums[2].value() / n as f64,
    );
    let mut sq = [CompensatedSum::default(); 3];
    for v in values {
        let d = v - mean;
        let a = d.to_array();
        for i in 0..3 {
            sq[i].add(a[i] * a[i]);
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    let variance = Vec3::new(
        sq[0].value() / denom,
        sq[1].value() / denom,
        sq[2].value() / denom,
    );
    let sem = Vec3::new(
        (variance.x / n as f64).sqrt(),
        (variance.y / n as f64).sqrt(),
        (variance.z / n as f64).sqrt(),
    );
    VectorStats {
        mean,
        variance,
        sem,
    }
}

fn field_axis(field: &FieldModel) -> Vec3 {
    let h0 = match field {
        FieldModel::Uniform { h0 } => *h0,
        FieldModel::Linear { h0, .. } => *h0,
    };
    let n = h0.normalized();
    if n.norm() == 0.0 {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        n
    }
}

fn build_histogram(endpoints: &[AtomEndpoint], axis: Vec3) -> Histogram {
    let projections: Vec<f64> = endpoints.iter().map(|e| e.end.com_pos.dot(axis)).collect();
    let (lo, hi) = projections.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), &v| (lo.min(v), hi.max(v)),
    );
    let degenerate = projections.is_empty() || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater);
    if degenerate {
        return Histogram {
            axis,
            lo: lo.min(hi),
            hi: hi.max(lo),
            counts: vec![projections.len() as u32],
        };
    }
    let mut counts = vec![0u32; HISTOGRAM_BINS];
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for p in projections {
        let bin = (((p - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram {
        axis,
        lo,
        hi,
        counts,
    }
}

/// Integrate every atom of a prepared ensemble and collect deflection
/// statistics. Atoms run in parallel; failed atoms are excluded and counted,
/// never silently dropped.
pub fn run_beam(initial_states: &[ComState], spec: &EnsembleSpec) -> Result<DeflectionStats> {
    spec.validate()?;
    let system = spec.system()?;
    // Endpoint-only sampling: the huge stride records just start and end.
    let endpoint_spec = IntegratorSpec {
        stride: usize::MAX,
        ..spec.integrator
    };
    let results: Vec<(usize, Result<ComState>)> = initial_states
        .par_iter()
        .enumerate()
        .map(|(i, s0)| {
            let tr = integrate(&system, s0, &endpoint_spec);
            (i, tr.map(|t| *t.final_state()))
        })
        .collect();

    let mut endpoints = Vec::with_capacity(initial_states.len());
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(end) => {
                let d = derived_quantities(&end, &spec.constants, spec.softening)?;
                endpoints.push(AtomEndpoint {
                    index: i,
                    initial: initial_states[i],
                    end,
                    l: d.l,
                    s: d.s,
                });
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }

    let n_ok = endpoints.len();
    let drift = spec.beam_velocity * spec.integrator.t_end;
    let final_pos = vector_stats(endpoints.iter().map(|e| e.end.com_pos), n_ok);
    let deflection = vector_stats(
        endpoints
            .iter()
            .map(move |e| e.end.com_pos - e.initial.com_pos - drift),
        n_ok,
    );
    let mean_final_vel = vector_stats(endpoints.iter().map(|e| e.end.com_vel), n_ok).mean;
    let histogram = build_histogram(&endpoints, field_axis(&spec.field));
    let n_failed = failures.len();
    let valid = (n_failed as f64) <= FAILURE_BUDGET * spec.n_atoms as f64;
    Ok(DeflectionStats {
        n_atoms: spec.n_atoms,
        n_failed,
        failures,
        endpoints,
        final_pos,
        deflection,
        mean_final_vel,
        histogram,
        valid,
    })
}

/// Build and run an ensemble in one call.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<DeflectionStats> {
    let states = build_ensemble(spec)?;
    run_beam(&states, spec)
}

/// Positronium (equal-mass) run: the K_L L force channel vanishes
/// identically, leaving only the S-channel deflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositroniumReport {
    /// Mass-asymmetry factor; exactly zero here.
    pub k_l: f64,
    /// Gyromagnetic coefficient e K_L / (2 mu c); exactly zero here.
    pub l_channel_coefficient: f64,
    pub stats: DeflectionStats,
}

/// Run an equal-mass ensemble; rejects unequal masses.
pub fn positronium_scenario(spec: &EnsembleSpec) -> Result<PositroniumReport> {
    if spec.constants.m_p != spec.constants.m_e {
        return Err(Error::UnequalMasses {
            m_p: spec.constants.m_p,
            m_e: spec.constants.m_e,
        });
    }
    let stats = run_ensemble(spec)?;
    Ok(PositroniumReport {
        k_l: spec.constants.k_l(),
        l_channel_coefficient: spec.constants.gyromagnetic_ratio(),
        stats,
    })
}

/// Full trajectory of a single ensemble atom, for variance-versus-time
/// studies (beam spreading).
pub fn atom_trajectory(spec: &EnsembleSpec, index: usize) -> Result<Trajectory> {
    let states = build_ensemble(spec)?;
    let s0 = states
        .get(index)
        .ok_or_else(|| Error::InvalidEnsembleSpec(format!("atom index {index} out of range")))?;
    integrate(&spec.system()?, s0, &spec.integrator)
}
