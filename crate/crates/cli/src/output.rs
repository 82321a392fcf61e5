//! Output writing: trajectory/endpoint tables, reports, and the run
//! manifest. A session tracks every file it creates and removes them all if
//! the run fails, so failed runs never leave partial artifacts behind.

use crate::scenario::{OutputFormat, Scenario};
use anyhow::Context;
use magatom_core::atomfield::FieldSample;
use magatom_core::constants::Constants;
use magatom_core::dynamics::{Trajectory, TrajectoryComparison};
use magatom_core::sterngerlach::DeflectionStats;
use magatom_core::vec3::Vec3;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct OutputSession {
    dir: PathBuf,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputSession {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Keep the files; the session no longer cleans up on drop.
    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for OutputSession {
    fn drop(&mut self) {
        if !self.committed {
            for f in &self.files {
                let _ = fs::remove_file(f);
            }
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_vec3(fields: &mut Vec<String>, v: Vec3) {
    fields.push(fmt(v.x));
    fields.push(fmt(v.y));
    fields.push(fmt(v.z));
}

const TRAJECTORY_COLUMNS: &str =
    "t,Rx,Ry,Rz,Rdotx,Rdoty,Rdotz,rx,ry,rz,rdotx,rdoty,rdotz,E,Lx,Ly,Lz,Sx,Sy,Sz";

#[derive(Serialize)]
struct TrajectoryRecord {
    t: f64,
    com_pos: [f64; 3],
    com_vel: [f64; 3],
    rel_pos: [f64; 3],
    rel_vel: [f64; 3],
    energy: f64,
    l: [f64; 3],
    s: [f64; 3],
}

/// Trajectory table: one row per sample with the monitored invariants.
pub fn render_trajectory(tr: &Trajectory, format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(
                "# magatom trajectory; units: scaled Gaussian (mass m_e, length a, charge e)\n",
            );
            out.push_str(&format!("# columns: {TRAJECTORY_COLUMNS}\n"));
            out.push_str(TRAJECTORY_COLUMNS);
            out.push('\n');
            for i in 0..tr.len() {
                let s = &tr.states[i];
                let m = &tr.monitors[i];
                let mut fields = vec![fmt(tr.times[i])];
                push_vec3(&mut fields, s.com_pos);
                push_vec3(&mut fields, s.com_vel);
                push_vec3(&mut fields, s.rel_pos);
                push_vec3(&mut fields, s.rel_vel);
                fields.push(fmt(m.energy));
                push_vec3(&mut fields, m.l);
                push_vec3(&mut fields, m.s);
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Jsonl => {
            for i in 0..tr.len() {
                let s = &tr.states[i];
                let m = &tr.monitors[i];
                let record = TrajectoryRecord {
                    t: tr.times[i],
                    com_pos: s.com_pos.to_array(),
                    com_vel: s.com_vel.to_array(),
                    rel_pos: s.rel_pos.to_array(),
                    rel_vel: s.rel_vel.to_array(),
                    energy: m.energy,
                    l: m.l.to_array(),
                    s: m.s.to_array(),
                };
                out.push_str(&serde_json::to_string(&record).expect("serializable record"));
                out.push('\n');
            }
        }
    }
    out
}

const ENDPOINT_COLUMNS: &str =
    "atom,Rx,Ry,Rz,Rdotx,Rdoty,Rdotz,rx,ry,rz,rdotx,rdoty,rdotz,Lx,Ly,Lz,Sx,Sy,Sz";

/// Per-atom endpoint table of an ensemble run.
pub fn render_endpoints(stats: &DeflectionStats) -> String {
    let mut out = String::new();
    out.push_str("# magatom ensemble endpoints; units: scaled Gaussian\n");
    out.push_str(&format!("# columns: {ENDPOINT_COLUMNS}\n"));
    out.push_str(ENDPOINT_COLUMNS);
    out.push('\n');
    for e in &stats.endpoints {
        let mut fields = vec![e.index.to_string()];
        push_vec3(&mut fields, e.end.com_pos);
        push_vec3(&mut fields, e.end.com_vel);
        push_vec3(&mut fields, e.end.rel_pos);
        push_vec3(&mut fields, e.end.rel_vel);
        push_vec3(&mut fields, e.l);
        push_vec3(&mut fields, e.s);
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn vec3_line(name: &str, v: Vec3) -> String {
    format!("{name} = [{}, {}, {}]\n", fmt(v.x), fmt(v.y), fmt(v.z))
}

/// Ensemble statistics report: deterministic structured text (no
/// timestamps), identical bytes for identical scenario + seed.
pub fn render_ensemble_report(stats: &DeflectionStats, k: &Constants) -> String {
    let mut out = String::new();
    out.push_str("# magatom ensemble report; units: scaled Gaussian\n");
    out.push_str(&format!("n-atoms = {}\n", stats.n_atoms));
    out.push_str(&format!("n-failed = {}\n", stats.n_failed));
    out.push_str(&format!("valid = {}\n", stats.valid));
    out.push_str(&format!("k-l = {}\n", fmt(k.k_l())));
    out.push_str(&format!("gyromagnetic-ratio = {}\n", fmt(k.gyromagnetic_ratio())));
    out.push_str("\n[final-position]\n");
    out.push_str(&vec3_line("mean", stats.final_pos.mean));
    out.push_str(&vec3_line("variance", stats.final_pos.variance));
    out.push_str(&vec3_line("sem", stats.final_pos.sem));
    out.push_str("\n[deflection]\n");
    out.push_str(&vec3_line("mean", stats.deflection.mean));
    out.push_str(&vec3_line("variance", stats.deflection.variance));
    out.push_str(&vec3_line("sem", stats.deflection.sem));
    out.push_str("\n[final-velocity]\n");
    out.push_str(&vec3_line("mean", stats.mean_final_vel));
    out.push_str("\n[histogram]\n");
    out.push_str(&vec3_line("axis", stats.histogram.axis));
    out.push_str(&format!("lo = {}\n", fmt(stats.histogram.lo)));
    out.push_str(&format!("hi = {}\n", fmt(stats.histogram.hi)));
    out.push_str(&format!(
        "counts = [{}]\n",
        stats
            .histogram
            .counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    if !stats.failures.is_empty() {
        out.push_str("\n[failures]\n");
        for (idx, msg) in &stats.failures {
            out.push_str(&format!("atom-{idx} = {msg:?}\n"));
        }
    }
    out
}

/// Deviation report of a reduced-vs-direct comparison.
pub fn render_compare_report(
    cmp: &TrajectoryComparison,
    threshold: f64,
    passed: bool,
) -> String {
    let mut out = String::new();
    out.push_str("# magatom comparison report; deviations in units of the orbit scale\n");
    out.push_str(&format!("orbit-scale = {}\n", fmt(cmp.scale)));
    out.push_str(&format!("rms-com = {}\n", fmt(cmp.rms_com)));
    out.push_str(&format!("rms-rel = {}\n", fmt(cmp.rms_rel)));
    out.push_str(&format!("max-com = {}\n", fmt(cmp.max_com)));
    out.push_str(&format!("max-rel = {}\n", fmt(cmp.max_rel)));
    out.push_str(&format!(
        "rms-com-normalized = {}\n",
        fmt(cmp.rms_com_normalized())
    ));
    out.push_str(&format!(
        "rms-rel-normalized = {}\n",
        fmt(cmp.rms_rel_normalized())
    ));
    out.push_str(&format!("threshold = {}\n", fmt(threshold)));
    out.push_str(&format!("passed = {passed}\n"));
    out
}

const FIELDMAP_COLUMNS: &str =
    "x,y,z,Ax,Ay,Az,H1x,H1y,H1z,H2x,H2y,H2z,Ex,Ey,Ez";

/// Field-map grid: far-field samples on a plane, for external plotting.
pub fn render_fieldmap(samples: &[FieldSample], t: f64, format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str("# magatom far-field map; units: scaled Gaussian\n");
            out.push_str(&format!("# sampled at t = {}\n", fmt(t)));
            out.push_str(&format!("# columns: {FIELDMAP_COLUMNS}\n"));
            out.push_str(FIELDMAP_COLUMNS);
            out.push('\n');
            for s in samples {
                let mut fields = Vec::new();
                push_vec3(&mut fields, s.x);
                push_vec3(&mut fields, s.a);
                push_vec3(&mut fields, s.h1);
                push_vec3(&mut fields, s.h2);
                push_vec3(&mut fields, s.e);
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Jsonl => {
            for s in samples {
                out.push_str(&serde_json::to_string(s).expect("serializable sample"));
                out.push('\n');
            }
        }
    }
    out
}

/// Time-averaged moment report.
pub fn render_moment_report(est: &magatom_core::atomfield::MomentEstimate) -> String {
    let mut out = String::new();
    out.push_str("# magatom time-averaged moment report; units: scaled Gaussian\n");
    out.push_str(&vec3_line("mu-avg", est.mu_avg));
    out.push_str(&vec3_line("l-avg", est.l_avg));
    out.push_str(&format!("g-measured = {}\n", fmt(est.g_measured)));
    out.push_str(&format!("g-predicted = {}\n", fmt(est.g_predicted)));
    if est.g_predicted != 0.0 {
        out.push_str(&format!(
            "g-relative-deviation = {}\n",
            fmt((est.g_measured - est.g_predicted).abs() / est.g_predicted.abs())
        ));
    }
    out.push_str(&vec3_line("dipole-p", est.dipole_p));
    out.push_str(&format!("periods-used = {}\n", est.periods_used));
    out.push_str(&format!("fit-residual = {}\n", fmt(est.fit_residual)));
    out.push_str(&format!(
        "discarded-term-ratio = {}\n",
        fmt(est.discarded_term_ratio)
    ));
    out
}

/// Manifest echoing the scenario, software version, command and outputs.
/// The timestamp lives here and only here.
pub fn write_manifest(
    session: &mut OutputSession,
    command: &str,
    scenario: &Scenario,
    extra: &[(&str, String)],
) -> anyhow::Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str("# magatom run manifest\n");
    out.push_str(&format!("version = {:?}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("command = {command:?}\n"));
    out.push_str(&format!("unix-timestamp = {timestamp}\n"));
    for (key, value) in extra {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out.push_str(&format!(
        "outputs = [{}]\n",
        session
            .files()
            .iter()
            .map(|p| format!("{:?}", p.file_name().unwrap_or_default()))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str("\n[scenario]\n# echoed verbatim below\n");
    // Indent the scenario as a literal block comment-free echo.
    out.push_str("echo = '''\n");
    out.push_str(&scenario.serialize()?);
    out.push_str("'''\n");
    session.write("manifest.toml", &out)?;
    Ok(())
}

/// Stream a line to stdout immediately (progress/reporting).
pub fn say(line: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{line}");
}
