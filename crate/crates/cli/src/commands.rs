//! Subcommand implementations. Each command parses the scenario, runs the
//! corresponding operation, writes its artifacts plus a manifest, and maps
//! errors to exit codes (1 = validation, 2 = runtime/singularity).

use crate::output::{
    render_compare_report, render_endpoints, render_ensemble_report, render_fieldmap,
    render_moment_report, render_trajectory, say, write_manifest, OutputSession,
};
use crate::scenario::Scenario;
use anyhow::Context;
use magatom_core::atomfield::{averaged_moment, probe_shell, sample_at};
use magatom_core::dynamics::{compare_trajectories, integrate, Formulation, Trajectory};
use magatom_core::sterngerlach::run_ensemble;
use magatom_core::vec3::Vec3;
use std::path::Path;

/// Runtime-vs-validation split for the exit code: true for errors arising
/// from the dynamics or field evaluation, false for bad inputs.
pub fn is_runtime_error(e: &magatom_core::error::Error) -> bool {
    use magatom_core::error::Error::*;
    matches!(
        e,
        SingularConfiguration
            | Singularity { .. }
            | NonFiniteState { .. }
            | StepUnderflow { .. }
            | TooManyFailures { .. }
            | ValidityRegion { .. }
            | TimeOutOfRange { .. }
            | InsufficientPeriods { .. }
            | ComNotAtRest { .. }
    )
}

/// A comparison over threshold is a runtime outcome, not bad input.
#[derive(Debug)]
pub struct ThresholdBreach {
    pub rms: f64,
    pub threshold: f64,
}

impl std::fmt::Display for ThresholdBreach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "comparison failed: normalized RMS CoM deviation {:.3e} exceeds threshold {:.3e}",
            self.rms, self.threshold
        )
    }
}

impl std::error::Error for ThresholdBreach {}

fn run_single(scenario: &Scenario, formulation: Formulation) -> anyhow::Result<Trajectory> {
    let s0 = scenario.initial_state()?;
    let spec = scenario.integrator_spec()?;
    let system = scenario.system(formulation)?;
    Ok(integrate(&system, &s0, &spec)?)
}

fn reduced_formulation(scenario: &Scenario, simplified: bool) -> anyhow::Result<Formulation> {
    let field = scenario.field_model()?;
    Ok(if simplified {
        Formulation::SimplifiedSg
    } else if field.is_uniform() {
        Formulation::ReducedUniform
    } else {
        Formulation::ReducedInhomogeneous
    })
}

pub fn simulate(scenario: &Scenario, out_dir: &Path, direct: bool, simplified: bool) -> anyhow::Result<()> {
    let formulation = if direct {
        Formulation::Direct
    } else {
        reduced_formulation(scenario, simplified)?
    };
    let tr = run_single(scenario, formulation)?;
    let mut session = OutputSession::new(out_dir)?;
    let name = match scenario.output.format {
        crate::scenario::OutputFormat::Csv => "trajectory.csv",
        crate::scenario::OutputFormat::Jsonl => "trajectory.jsonl",
    };
    session.write(name, &render_trajectory(&tr, scenario.output.format))?;
    let command = if direct { "simulate-direct" } else { "simulate-reduced" };
    write_manifest(
        &mut session,
        command,
        scenario,
        &[("samples", tr.len().to_string())],
    )?;
    let files = session.commit();
    say(&format!(
        "{command}: {} samples over t = {:.6}; wrote {}",
        tr.len(),
        tr.times.last().copied().unwrap_or(0.0),
        files.len()
    ));
    Ok(())
}

pub fn compare(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<()> {
    let reduced = run_single(scenario, reduced_formulation(scenario, false)?)?;
    let direct = run_single(scenario, Formulation::Direct)?;
    let scale = scenario
        .initial
        .as_ref()
        .map(|i| i.length_scale())
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let cmp = compare_trajectories(&reduced, &direct, scale)?;
    let threshold = scenario.compare.clone().unwrap_or_default().rms_threshold;
    let passed = cmp.rms_com_normalized() <= threshold;

    let mut session = OutputSession::new(out_dir)?;
    let fmt = scenario.output.format;
    match fmt {
        crate::scenario::OutputFormat::Csv => {
            session.write("trajectory_reduced.csv", &render_trajectory(&reduced, fmt))?;
            session.write("trajectory_direct.csv", &render_trajectory(&direct, fmt))?;
        }
        crate::scenario::OutputFormat::Jsonl => {
            session.write("trajectory_reduced.jsonl", &render_trajectory(&reduced, fmt))?;
            session.write("trajectory_direct.jsonl", &render_trajectory(&direct, fmt))?;
        }
    }
    session.write(
        "compare_report.toml",
        &render_compare_report(&cmp, threshold, passed),
    )?;
    write_manifest(
        &mut session,
        "compare",
        scenario,
        &[("rms-com-normalized", format!("{:.6e}", cmp.rms_com_normalized()))],
    )?;
    session.commit();
    say(&format!(
        "compare: normalized RMS CoM deviation {:.3e} (threshold {threshold:.3e}), rel {:.3e}",
        cmp.rms_com_normalized(),
        cmp.rms_rel_normalized(),
    ));
    if !passed {
        return Err(ThresholdBreach {
            rms: cmp.rms_com_normalized(),
            threshold,
        }
        .into());
    }
    Ok(())
}

pub fn ensemble(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<()> {
    let spec = scenario.ensemble_spec()?;
    let stats = run_ensemble(&spec)?;
    let mut session = OutputSession::new(out_dir)?;
    session.write(
        "ensemble_report.toml",
        &render_ensemble_report(&stats, &scenario.constants),
    )?;
    let write_endpoints = scenario
        .ensemble
        .as_ref()
        .map(|e| e.write_endpoints)
        .unwrap_or(false);
    if write_endpoints {
        session.write("endpoints.csv", &render_endpoints(&stats))?;
    }
    write_manifest(
        &mut session,
        "ensemble",
        scenario,
        &[
            ("n-atoms", stats.n_atoms.to_string()),
            ("n-failed", stats.n_failed.to_string()),
            ("valid", stats.valid.to_string()),
        ],
    )?;
    session.commit();
    say(&format!(
        "ensemble: {} atoms ({} failed), mean deflection = ({:.3e}, {:.3e}, {:.3e})",
        stats.n_atoms,
        stats.n_failed,
        stats.deflection.mean.x,
        stats.deflection.mean.y,
        stats.deflection.mean.z
    ));
    if !stats.valid {
        return Err(magatom_core::error::Error::TooManyFailures {
            failed: stats.n_failed,
            total: stats.n_atoms,
            limit: magatom_core::sterngerlach::FAILURE_BUDGET * 100.0,
        }
        .into());
    }
    Ok(())
}

pub fn fieldmap(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<()> {
    let cfg = scenario
        .fieldmap
        .clone()
        .ok_or_else(|| anyhow::anyhow!("fieldmap needs a [fieldmap] section"))?;
    let tr = run_single(scenario, reduced_formulation(scenario, false)?)?;
    let t_end = *tr.times.last().expect("non-empty trajectory");
    let t = (cfg.time_fraction.clamp(0.0, 1.0) * t_end)
        .clamp(tr.times[1], tr.times[tr.len() - 2]);
    let center = Vec3::from_array(cfg.center);
    let axis_u = Vec3::from_array(cfg.axis_u);
    let axis_v = Vec3::from_array(cfg.axis_v);
    if cfg.n_u < 2 || cfg.n_v < 2 {
        anyhow::bail!("fieldmap grid needs n-u, n-v >= 2");
    }
    let mut samples = Vec::with_capacity(cfg.n_u * cfg.n_v);
    for i in 0..cfg.n_u {
        let u = -cfg.extent_u + 2.0 * cfg.extent_u * i as f64 / (cfg.n_u - 1) as f64;
        for j in 0..cfg.n_v {
            let v = -cfg.extent_v + 2.0 * cfg.extent_v * j as f64 / (cfg.n_v - 1) as f64;
            let x = center + axis_u * u + axis_v * v;
            samples.push(
                sample_at(&tr, x, &scenario.constants, t, cfg.validity_factor)
                    .with_context(|| format!("sampling the far field at {x:?}"))?,
            );
        }
    }
    let mut session = OutputSession::new(out_dir)?;
    let name = match scenario.output.format {
        crate::scenario::OutputFormat::Csv => "fieldmap.csv",
        crate::scenario::OutputFormat::Jsonl => "fieldmap.jsonl",
    };
    session.write(name, &render_fieldmap(&samples, t, scenario.output.format))?;
    write_manifest(
        &mut session,
        "fieldmap",
        scenario,
        &[("grid", format!("{}x{}", cfg.n_u, cfg.n_v)), ("t", format!("{t:.6e}"))],
    )?;
    session.commit();
    say(&format!(
        "fieldmap: {} samples on a {}x{} grid at t = {t:.6}",
        samples.len(),
        cfg.n_u,
        cfg.n_v
    ));
    Ok(())
}

pub fn moment(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<()> {
    let cfg = scenario
        .moment
        .clone()
        .ok_or_else(|| anyhow::anyhow!("moment needs a [moment] section"))?;
    let tr = run_single(scenario, reduced_formulation(scenario, false)?)?;
    let com = tr.initial().com_pos;
    let probes = probe_shell(com, &cfg.radii, cfg.probes_per_radius);
    let est = averaged_moment(&tr, &scenario.constants, &probes, cfg.validity_factor)?;
    let mut session = OutputSession::new(out_dir)?;
    session.write("moment_report.toml", &render_moment_report(&est))?;
    write_manifest(
        &mut session,
        "moment",
        scenario,
        &[
            ("g-measured", format!("{:.9e}", est.g_measured)),
            ("g-predicted", format!("{:.9e}", est.g_predicted)),
        ],
    )?;
    session.commit();
    say(&format!(
        "moment: g_measured = {:.6e}, predicted e K_L/(2 mu c) = {:.6e}, {} periods",
        est.g_measured, est.g_predicted, est.periods_used
    ));
    Ok(())
}
