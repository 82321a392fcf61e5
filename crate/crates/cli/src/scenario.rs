//! Scenario configuration: the sectioned key-value schema that fully
//! determines a run. Scenarios are the unit of reproducibility and are meant
//! to live in version control; parsing is strict (unknown keys are errors)
//! and every invariant of the constituent types is enforced here.

use magatom_core::constants::Constants;
use magatom_core::dynamics::{Formulation, IntegratorSpec, Method, System};
use magatom_core::error::Error as CoreError;
use magatom_core::fields::FieldModel;
use magatom_core::state::ComState;
use magatom_core::sterngerlach::{EnsembleSpec, InternalKind};
use magatom_core::vec3::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::from_array(a)
}

/// Complete scenario file. Sections: constants, field, initial or ensemble,
/// integrator, output, plus per-command sections (compare, fieldmap,
/// moment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Seed for every randomized draw in the scenario.
    #[serde(default)]
    pub seed: u64,
    /// Coulomb softening length (0 = hard Coulomb).
    #[serde(default)]
    pub softening: f64,
    pub constants: Constants,
    pub field: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fieldmap: Option<FieldmapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment: Option<MomentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    /// Spatially constant field.
    Uniform { h0: [f64; 3] },
    /// H(x) = H0 + G x; G must be symmetric and traceless.
    Linear {
        h0: [f64; 3],
        gradient: [[f64; 3]; 3],
    },
    /// Named preset: H0 = (0, 0, h), G = diag(-g, 0, g).
    SternGerlach { h: f64, g: f64 },
}

impl FieldConfig {
    pub fn build(&self) -> Result<FieldModel, CoreError> {
        match self {
            FieldConfig::Uniform { h0 } => Ok(FieldModel::uniform(vec3(*h0))),
            FieldConfig::Linear { h0, gradient } => {
                FieldModel::linear(vec3(*h0), Mat3::new(*gradient))
            }
            FieldConfig::SternGerlach { h, g } => Ok(FieldModel::stern_gerlach(*h, *g)),
        }
    }
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_fraction() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Explicit center-of-mass state.
    Com {
        com_pos: [f64; 3],
        com_vel: [f64; 3],
        rel_pos: [f64; 3],
        rel_vel: [f64; 3],
    },
    /// Circular internal orbit of the given radius about `axis`.
    Circular {
        radius: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        com_pos: [f64; 3],
        #[serde(default)]
        com_vel: [f64; 3],
    },
    /// Straight-line oscillation through the force center (L = 0).
    LinearOscillation {
        amplitude: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
        /// Starting position as a fraction of the amplitude, in [-1, 1].
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default = "default_true")]
        outward: bool,
        #[serde(default)]
        com_pos: [f64; 3],
        #[serde(default)]
        com_vel: [f64; 3],
    },
}

impl InitialConfig {
    pub fn build(&self, k: &Constants, softening: f64) -> Result<ComState, CoreError> {
        let state = match self {
            InitialConfig::Com {
                com_pos,
                com_vel,
                rel_pos,
                rel_vel,
            } => ComState::new(vec3(*com_pos), vec3(*com_vel), vec3(*rel_pos), vec3(*rel_vel)),
            InitialConfig::Circular {
                radius,
                axis,
                phase,
                com_pos,
                com_vel,
            } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(CoreError::Invalid(format!(
                        "initial.radius must be positive, got {radius}"
                    )));
                }
                ComState::circular_orbit(k, *radius, vec3(*axis), *phase)
                    .with_com(vec3(*com_pos), vec3(*com_vel))
            }
            InitialConfig::LinearOscillation {
                amplitude,
                axis,
                fraction,
                outward,
                com_pos,
                com_vel,
            } => {
                if !amplitude.is_finite() || *amplitude <= 0.0 {
                    return Err(CoreError::Invalid(format!(
                        "initial.amplitude must be positive, got {amplitude}"
                    )));
                }
                ComState::linear_oscillation(k, *amplitude, vec3(*axis), *fraction, *outward, softening)
                    .with_com(vec3(*com_pos), vec3(*com_vel))
            }
        };
        if !state.is_finite() {
            return Err(CoreError::Invalid("initial state has non-finite components".into()));
        }
        Ok(state)
    }

    /// Characteristic internal length of the configuration.
    pub fn length_scale(&self) -> f64 {
        match self {
            InitialConfig::Com { rel_pos, .. } => vec3(*rel_pos).norm(),
            InitialConfig::Circular { radius, .. } => *radius,
            InitialConfig::LinearOscillation { amplitude, .. } => *amplitude,
        }
    }
}

fn default_stride() -> usize {
    10
}

fn default_steps_per_period() -> f64 {
    magatom_core::dynamics::STEPS_PER_PERIOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct IntegratorConfig {
    /// "rk4" (default) or "rk45".
    #[serde(default)]
    pub method: MethodName,
    /// Explicit RK4 step. Mutually exclusive with `steps-per-period`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// RK4 step as a fraction of the estimated internal period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<f64>,
    /// RK45 error tolerance, in (0, 1e-3].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Flight time. Mutually exclusive with `periods`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Flight time in estimated internal periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    Rk4,
    Rk45,
}

impl IntegratorConfig {
    /// Resolve the spec against an initial state (for period-based step and
    /// flight-time defaults).
    pub fn build(&self, s0: &ComState, k: &Constants) -> Result<IntegratorSpec, CoreError> {
        let period = magatom_core::dynamics::default_step(s0, k)
            * magatom_core::dynamics::STEPS_PER_PERIOD;
        let t_end = match (self.t_end, self.periods) {
            (Some(t), None) => t,
            (None, Some(p)) => p * period,
            (Some(_), Some(_)) => {
                return Err(CoreError::InvalidIntegratorSpec(
                    "integrator: set either t-end or periods, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CoreError::InvalidIntegratorSpec(
                    "integrator: one of t-end or periods is required".into(),
                ))
            }
        };
        let method = match self.method {
            MethodName::Rk4 => {
                if self.tolerance.is_some() {
                    return Err(CoreError::InvalidIntegratorSpec(
                        "integrator: tolerance applies to rk45 only".into(),
                    ));
                }
                let step = match (self.step, self.steps_per_period) {
                    (Some(s), None) => s,
                    (None, Some(n)) => period / n,
                    (None, None) => period / default_steps_per_period(),
                    (Some(_), Some(_)) => {
                        return Err(CoreError::InvalidIntegratorSpec(
                            "integrator: set either step or steps-per-period, not both".into(),
                        ))
                    }
                };
                Method::Rk4 { step }
            }
            MethodName::Rk45 => {
                if self.step.is_some() || self.steps_per_period.is_some() {
                    return Err(CoreError::InvalidIntegratorSpec(
                        "integrator: step/steps-per-period apply to rk4 only".into(),
                    ));
                }
                let tolerance = self.tolerance.ok_or_else(|| {
                    CoreError::InvalidIntegratorSpec("integrator: rk45 requires tolerance".into())
                })?;
                Method::Rk45 { tolerance }
            }
        };
        let spec = IntegratorSpec {
            method,
            t_end,
            stride: self.stride,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_atoms: usize,
    pub internal: EnsembleInternalConfig,
    #[serde(default)]
    pub beam_velocity: [f64; 3],
    #[serde(default)]
    pub position_jitter: [f64; 3],
    /// Equations of motion: "reduced" (default, matched to the field kind),
    /// "direct", or "simplified-sg".
    #[serde(default)]
    pub formulation: FormulationName,
    /// Also write the per-atom endpoint table.
    #[serde(default)]
    pub write_endpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnsembleInternalConfig {
    Circular {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        axis: Option<[f64; 3]>,
    },
    LinearOscillation {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        axis: Option<[f64; 3]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationName {
    #[default]
    Reduced,
    Direct,
    SimplifiedSg,
}

impl FormulationName {
    pub fn resolve(&self, field: &FieldModel) -> Formulation {
        match self {
            FormulationName::Direct => Formulation::Direct,
            FormulationName::SimplifiedSg => Formulation::SimplifiedSg,
            FormulationName::Reduced => {
                if field.is_uniform() {
                    Formulation::ReducedUniform
                } else {
                    Formulation::ReducedInhomogeneous
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            format: OutputFormat::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// JSON-lines structured records.
    Jsonl,
}

fn default_rms_threshold() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CompareConfig {
    /// Acceptance threshold on the RMS CoM deviation normalized by the
    /// internal orbit scale. The uniform-field reduction is exact and meets
    /// 1e-9 at default steps; linear-field scenarios carry a real O(a^2)
    /// model error and need a scenario-appropriate threshold.
    #[serde(default = "default_rms_threshold")]
    pub rms_threshold: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            rms_threshold: default_rms_threshold(),
        }
    }
}

fn default_grid_n() -> usize {
    16
}

fn default_time_fraction() -> f64 {
    0.5
}

fn default_validity_factor() -> f64 {
    magatom_core::atomfield::DEFAULT_VALIDITY_FACTOR
}

/// Planar observation grid: center + u * axis-u + v * axis-v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FieldmapConfig {
    #[serde(default)]
    pub center: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    /// Half-extent along each axis; the grid spans [-extent, +extent].
    pub extent_u: f64,
    pub extent_v: f64,
    #[serde(default = "default_grid_n")]
    pub n_u: usize,
    #[serde(default = "default_grid_n")]
    pub n_v: usize,
    /// Sampling time as a fraction of the flight time.
    #[serde(default = "default_time_fraction")]
    pub time_fraction: f64,
    #[serde(default = "default_validity_factor")]
    pub validity_factor: f64,
}

fn default_probes_per_radius() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MomentConfig {
    /// Probe shell radii (absolute lengths, measured from the CoM).
    pub radii: Vec<f64>,
    #[serde(default = "default_probes_per_radius")]
    pub probes_per_radius: usize,
    #[serde(default = "default_validity_factor")]
    pub validity_factor: f64,
}

impl Scenario {
    /// Parse a scenario from configuration text, enforcing all invariants.
    pub fn parse(text: &str) -> anyhow::Result<Scenario> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parse with `section.key=value` overrides applied before validation.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> anyhow::Result<Scenario> {
        if overrides.is_empty() {
            return Self::parse(text);
        }
        let mut value: toml::Value = toml::from_str(text)?;
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| {
                anyhow::anyhow!("override '{item}' must have the form section.key=value")
            })?;
            // Interpret the value as a TOML literal; bare words fall back
            // to strings.
            let parsed: toml::Value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut node = &mut value;
            let parts: Vec<&str> = path.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node.as_table_mut().ok_or_else(|| {
                    anyhow::anyhow!("override path '{path}' does not address a table")
                })?;
                if i + 1 == parts.len() {
                    table.insert(part.to_string(), parsed.clone());
                    break;
                }
                node = table
                    .entry(part.to_string())
                    .or_insert(toml::Value::Table(Default::default()));
            }
        }
        let scenario: Scenario = value.try_into()?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Serialize back to configuration text; `parse(serialize(s)) == s`.
    pub fn serialize(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Invariants not already enforced by the type structure.
    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.softening >= 0.0 && self.softening.is_finite()) {
            anyhow::bail!("softening must be finite and >= 0, got {}", self.softening);
        }
        self.field.build()?;
        if let Some(initial) = &self.initial {
            initial.build(&self.constants, self.softening)?;
        }
        if let Some(e) = &self.ensemble {
            if e.n_atoms == 0 {
                anyhow::bail!("ensemble.n-atoms must be >= 1");
            }
        }
        Ok(())
    }

    pub fn field_model(&self) -> Result<FieldModel, CoreError> {
        self.field.build()
    }

    /// The single-atom initial state ([initial] section required).
    pub fn initial_state(&self) -> anyhow::Result<ComState> {
        let initial = self
            .initial
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("this command needs an [initial] section"))?;
        Ok(initial.build(&self.constants, self.softening)?)
    }

    /// Resolved integrator spec for the single-atom initial state.
    pub fn integrator_spec(&self) -> anyhow::Result<IntegratorSpec> {
        let s0 = self.initial_state()?;
        Ok(self.integrator.build(&s0, &self.constants)?)
    }

    pub fn system(&self, formulation: Formulation) -> anyhow::Result<System> {
        Ok(System::new(
            self.constants,
            self.field_model()?,
            formulation,
            self.softening,
        )?)
    }

    /// The ensemble spec ([ensemble] section required).
    pub fn ensemble_spec(&self) -> anyhow::Result<EnsembleSpec> {
        let e = self
            .ensemble
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("this command needs an [ensemble] section"))?;
        let field = self.field_model()?;
        let internal = match &e.internal {
            EnsembleInternalConfig::Circular { radius, axis } => InternalKind::Circular {
                radius: *radius,
                axis: axis.map(vec3),
            },
            EnsembleInternalConfig::LinearOscillation { amplitude, axis } => {
                InternalKind::LinearOscillation {
                    amplitude: *amplitude,
                    axis: axis.map(vec3),
                }
            }
        };
        // Resolve the period-based integrator settings against a reference
        // internal state (unit phase, fixed axis).
        let reference = match internal {
            InternalKind::Circular { radius, .. } => {
                ComState::circular_orbit(&self.constants, radius, Vec3::new(0.0, 0.0, 1.0), 0.0)
            }
            InternalKind::LinearOscillation { amplitude, .. } => ComState::linear_oscillation(
                &self.constants,
                amplitude,
                Vec3::new(0.0, 0.0, 1.0),
                1.0,
                false,
                self.softening,
            ),
        };
        let integrator = self.integrator.build(&reference, &self.constants)?;
        let spec = EnsembleSpec {
            n_atoms: e.n_atoms,
            internal,
            beam_velocity: vec3(e.beam_velocity),
            position_jitter: vec3(e.position_jitter),
            seed: self.seed,
            constants: self.constants,
            field,
            integrator,
            softening: self.softening,
            formulation: e.formulation.resolve(&field),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[constants]
m_p = 1836.15267343
m_e = 1.0
e = 1.0
c = 137.036

[field]
kind = "uniform"
h0 = [0.0, 0.0, 0.0]

[initial]
kind = "circular"
radius = 1.0

[integrator]
periods = 2.0
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 0);
        assert_eq!(s.softening, 0.0);
        assert_eq!(s.integrator.stride, 10);
        assert_eq!(s.output.dir, "out");
        let spec = s.integrator_spec().unwrap();
        let period = s.constants.circular_period(1.0);
        assert!((spec.t_end - 2.0 * period).abs() <= 1e-12 * period);
        match spec.method {
            Method::Rk4 { step } => {
                assert!((step - period / 2000.0).abs() <= 1e-15 * period)
            }
            _ => panic!("expected rk4 default"),
        }
    }

    #[test]
    fn traced_gradient_is_rejected_with_diagnostic() {
        let text = MINIMAL.replace(
            "kind = \"uniform\"\nh0 = [0.0, 0.0, 0.0]",
            "kind = \"linear\"\nh0 = [0.0, 0.0, 1.0]\ngradient = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]",
        );
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("trace"), "diagnostic missing trace: {err}");
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let text = format!("{MINIMAL}\n[output]\ndirr = \"x\"\n");
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("dirr"), "diagnostic missing key name: {err}");
    }

    #[test]
    fn missing_required_key_is_diagnosed() {
        let text = MINIMAL.replace("m_p = 1836.15267343\n", "");
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("m_p"), "diagnostic missing field: {err}");
    }

    const FULL: &str = r#"
seed = 42
softening = 0.05

[constants]
m_p = 4.0
m_e = 1.0
e = 1.0
c = 10.0

[field]
kind = "stern-gerlach"
h = 2.0
g = 0.5

[initial]
kind = "linear-oscillation"
amplitude = 1.0
axis = [0.0, 1.0, 1.0]

[ensemble]
n-atoms = 10
beam-velocity = [1.0, 0.0, 0.0]
position-jitter = [0.02, 0.02, 0.02]
formulation = "reduced"

[ensemble.internal]
kind = "linear-oscillation"
amplitude = 1.0

[integrator]
method = "rk4"
steps-per-period = 500.0
periods = 2.0
stride = 100

[output]
dir = "results"
format = "jsonl"

[moment]
radii = [12.0, 20.0]

[compare]
rms-threshold = 1e-8

[fieldmap]
axis-u = [1.0, 0.0, 0.0]
axis-v = [0.0, 0.0, 1.0]
extent-u = 5.0
extent-v = 5.0
"#;

    #[test]
    fn round_trip_is_lossless() {
        let parsed = Scenario::parse(FULL).unwrap();
        let text = parsed.serialize().unwrap();
        let reparsed = Scenario::parse(&text).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn full_config_builds_every_spec() {
        let s = Scenario::parse(FULL).unwrap();
        assert!(s.initial_state().is_ok());
        assert!(s.integrator_spec().is_ok());
        let ens = s.ensemble_spec().unwrap();
        assert_eq!(ens.seed, 42);
        assert_eq!(ens.n_atoms, 10);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let s = Scenario::parse_with_overrides(
            MINIMAL,
            &["seed=9".into(), "integrator.stride=50".into()],
        )
        .unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.integrator.stride, 50);
    }

    #[test]
    fn exclusive_keys_are_enforced() {
        let text = MINIMAL.replace("periods = 2.0", "periods = 2.0\nt-end = 1.0");
        let s = Scenario::parse(&text).unwrap();
        assert!(s.integrator_spec().is_err());
    }

    #[test]
    fn invalid_constants_are_rejected() {
        let text = MINIMAL.replace("m_p = 1836.15267343", "m_p = -1.0");
        assert!(Scenario::parse(&text).is_err());
    }
}
