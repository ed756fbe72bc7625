//! Scenario files: schema, validation and translation into library values.
//!
//! Frequencies in files are ordinary MHz and times are µs; both are
//! converted to rad/µs at this boundary.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use floqryd_core::lindblad::DensityMatrix;
use floqryd_core::observables::WReference;
use floqryd_core::schedule::{
    pi_pulse_duration, DriveSchedule, FfmParams, PulseSegment, RamModel, StirapMode, StirapProfile,
};
use floqryd_core::system::{units::mhz, AtomArray, DefaultsFile, MotionModel, NoiseModel, SystemConfig, DEFAULTS_JSON};

use crate::error::{CliError, CliResult};

/// Newest scenario schema this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Trajectory,
    Ensemble,
    Map2d,
    IprMap,
    Stirap,
    Calibration,
    Connectivity,
    HoldScan,
    DopplerScan,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Trajectory => "trajectory",
            Kind::Ensemble => "ensemble",
            Kind::Map2d => "map2d",
            Kind::IprMap => "ipr_map",
            Kind::Stirap => "stirap",
            Kind::Calibration => "calibration",
            Kind::Connectivity => "connectivity",
            Kind::HoldScan => "hold_scan",
            Kind::DopplerScan => "doppler_scan",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    /// Dotted keys that must be present for this kind.
    pub fn required_keys(&self) -> &'static [&'static str] {
        match self {
            Kind::Trajectory => &["schedule", "output.times"],
            Kind::Ensemble => &["schedule", "output.times", "samples"],
            Kind::Map2d => &["map"],
            Kind::IprMap => &["ipr"],
            Kind::Stirap => &["stirap"],
            Kind::Calibration => &["calibration"],
            Kind::Connectivity => &["connectivity"],
            Kind::HoldScan => &["hold", "samples"],
            Kind::DopplerScan => &["doppler", "samples"],
        }
    }
}

pub const COMMON_REQUIRED: [&str; 3] = ["schema_version", "name", "kind"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub figure: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    /// Free-form remarks, e.g. how a preset is derived.
    #[serde(default)]
    pub notes: Option<String>,
    #[serde(default = "default_budget")]
    pub runtime_budget_s: f64,
    /// Sparse overrides of `defaults.json` keys.
    #[serde(default)]
    pub config: Map<String, Value>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default)]
    pub schedule: Vec<SegmentSpec>,
    /// Rabi-amplitude RAM harmonics `[A_n, B_n]`, n = 1…
    #[serde(default)]
    pub ram: Vec<[f64; 2]>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub fit: Option<FitSpec>,
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub ipr: Option<IprSpec>,
    #[serde(default)]
    pub stirap: Option<StirapSpec>,
    #[serde(default)]
    pub calibration: Option<CalibrationSpec>,
    #[serde(default)]
    pub connectivity: Option<ConnectivitySpec>,
    #[serde(default)]
    pub hold: Option<HoldSpec>,
    #[serde(default)]
    pub doppler: Option<DopplerSpec>,
}

fn default_budget() -> f64 {
    300.0
}

fn default_seed() -> u64 {
    1
}

/// Atom chain along y.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default)]
    pub atoms: Option<usize>,
    /// Nearest-neighbour V/2π (MHz).
    #[serde(default)]
    pub interaction_mhz: Option<f64>,
    #[serde(default)]
    pub spacing_um: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Every channel from the defaults.
    #[default]
    Full,
    Noiseless,
    EffectiveCoherence { coherence_time_us: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionSpec {
    #[default]
    FreeFlight,
    GroundStateCooled { nbar_radial: f64, nbar_axial: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Static {
        duration_us: f64,
        #[serde(default)]
        detuning_mhz: f64,
    },
    Ffm {
        duration_us: f64,
        alpha: f64,
        modulation_frequency_mhz: f64,
        #[serde(default)]
        detuning_mhz: f64,
        #[serde(default)]
        phase_origin_us: f64,
    },
    LaserFree {
        duration_us: f64,
    },
    /// Resonant static π pulse; collective means |g…g⟩ → |W⟩ of a blockaded pair.
    PiPulse {
        #[serde(default = "yes")]
        collective: bool,
    },
    Stirap {
        total_time_us: f64,
        modulation_frequency_mhz: f64,
        mode: StirapModeSpec,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StirapModeSpec {
    ConditionSolved,
    LiteralPaper,
}

impl StirapModeSpec {
    pub fn profile(&self, total_time: f64) -> floqryd_core::Result<StirapProfile> {
        match self {
            StirapModeSpec::ConditionSolved => StirapProfile::condition_solved(total_time),
            StirapModeSpec::LiteralPaper => StirapProfile::literal(total_time),
        }
    }

    pub fn mode(&self) -> StirapMode {
        match self {
            StirapModeSpec::ConditionSolved => StirapMode::ConditionSolved,
            StirapModeSpec::LiteralPaper => StirapMode::LiteralPaper,
        }
    }
}

/// Either explicit `values` or `start`/`end`/`count` (inclusive).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub end: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl Grid {
    pub fn linspace(start: f64, end: f64, count: usize) -> Self {
        Self {
            values: Vec::new(),
            start: Some(start),
            end: Some(end),
            count: Some(count),
        }
    }

    pub fn resolve(&self, key: &str) -> CliResult<Vec<f64>> {
        let ranged = self.start.is_some() || self.end.is_some() || self.count.is_some();
        let out = match (self.values.is_empty(), ranged) {
            (false, false) => self.values.clone(),
            (true, true) => {
                let (Some(a), Some(b), Some(n)) = (self.start, self.end, self.count) else {
                    return Err(CliError::Validation(format!(
                        "{key}: a range needs all of start, end and count"
                    )));
                };
                if n == 0 {
                    return Err(CliError::Validation(format!("{key}.count: must be at least 1")));
                }
                if n == 1 {
                    vec![a]
                } else {
                    // rounded so that e.g. 0.1·k reads back as written
                    (0..n)
                        .map(|k| {
                            let v = a + (b - a) * k as f64 / (n - 1) as f64;
                            (v * 1e12).round() / 1e12
                        })
                        .collect()
                }
            }
            (false, true) => {
                return Err(CliError::Validation(format!(
                    "{key}: give either values or start/end/count, not both"
                )))
            }
            (true, false) => {
                return Err(CliError::Validation(format!("{key}: grid is empty")));
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Validation(format!("{key}: values must be finite")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Ground,
    /// The symmetric single-excitation state.
    W,
}

impl InitialState {
    pub fn density(&self, n_atoms: usize) -> CliResult<DensityMatrix> {
        match self {
            InitialState::Ground => Ok(DensityMatrix::ground(n_atoms)),
            InitialState::W => Ok(DensityMatrix::pure(&WReference::symmetric(n_atoms).state())?),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Sample times (µs).
    #[serde(default)]
    pub times: Option<Grid>,
    /// Pass populations through the readout-error model before export.
    #[serde(default)]
    pub spam_forward: bool,
    /// Window (µs) for the maximum W fidelity; defaults to all sample times.
    #[serde(default)]
    pub fidelity_window_us: Option<[f64; 2]>,
    /// Freeze V_ij at the sampled initial separation.
    #[serde(default)]
    pub static_interaction: bool,
    #[serde(default)]
    pub initial: InitialState,
    /// Also export this many individual sample fidelity traces.
    #[serde(default)]
    pub per_sample_traces: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    DampedSinusoid,
    ExponentialDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub model: FitModel,
    /// Series to fit (population label or `fidelity`); hold scans always
    /// fit the ground population.
    #[serde(default = "default_fit_label")]
    pub label: String,
}

fn default_fit_label() -> String {
    "gg".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapParameter {
    ModulationFrequencyMhz,
    Alpha,
    InteractionMhz,
}

impl MapParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapParameter::ModulationFrequencyMhz => "modulation_frequency_mhz",
            MapParameter::Alpha => "alpha",
            MapParameter::InteractionMhz => "interaction_mhz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapAxis {
    pub parameter: MapParameter,
    #[serde(flatten)]
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapMetric {
    TimeAverage { label: String },
    MaxFidelity,
    MaxPopulation { label: String },
    Final { label: String },
}

impl MapMetric {
    pub fn column(&self) -> String {
        match self {
            MapMetric::TimeAverage { label } => format!("time_average_{label}"),
            MapMetric::MaxFidelity => "max_fidelity".to_string(),
            MapMetric::MaxPopulation { label } => format!("max_{label}"),
            MapMetric::Final { label } => format!("final_{label}"),
        }
    }
}

/// One nominal trajectory per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub x: MapAxis,
    pub y: MapAxis,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub modulation_frequency_mhz: Option<f64>,
    #[serde(default)]
    pub interaction_mhz: Option<f64>,
    #[serde(default)]
    pub detuning_mhz: f64,
    pub duration_us: f64,
    #[serde(default = "default_map_points")]
    pub time_points: usize,
    pub metrics: Vec<MapMetric>,
}

fn default_map_points() -> usize {
    501
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IprSpec {
    pub alpha: f64,
    /// Δ_D/2π applied as +Δ_D, −Δ_D on the two atoms (MHz).
    pub doppler_mhz: Grid,
    pub modulation_frequency_mhz: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StirapSpec {
    pub mode: StirapModeSpec,
    pub total_time_us: f64,
    pub modulation_frequency_mhz: f64,
    #[serde(default = "default_stirap_points")]
    pub time_points: usize,
    /// Also run the nominal, noiseless transfer.
    #[serde(default = "yes")]
    pub ideal_reference: bool,
}

fn default_stirap_points() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationSpec {
    /// Carrier power |J₀(α/χ)| versus the requested index, fitted for χ.
    Bessel { chi: f64, alpha: Grid },
    /// Pair-resonance shift versus AOD spacing, fitted for κ and δ_u.
    Aod {
        kappa_um_per_mhz: f64,
        #[serde(default)]
        delta_u_mhz: f64,
        spacing_mhz: Grid,
    },
    /// FFM power stabilization with gradient-descent compensation.
    Ram {
        power_to_rabi: floqryd_core::calibration::PowerToRabi,
        #[serde(default = "default_center")]
        center_frequency_mhz: f64,
        alpha: f64,
        modulation_frequency_mhz: f64,
        #[serde(default = "default_target_power")]
        target_power: f64,
        #[serde(default = "yes")]
        calibrated: bool,
        /// Power ripple `[A_n, B_n]` the transfer model does not explain.
        #[serde(default)]
        ripple: Vec<[f64; 2]>,
        #[serde(default)]
        n_harmonics: Option<usize>,
        #[serde(default)]
        max_iterations: Option<usize>,
    },
}

fn default_center() -> f64 {
    80.0
}

fn default_target_power() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivitySpec {
    pub modulation_frequency_mhz: f64,
    pub alpha: Vec<f64>,
    pub ffm_interaction_mhz: Vec<f64>,
    pub static_interaction_mhz: Grid,
    #[serde(default = "default_window")]
    pub window_us: f64,
    #[serde(default = "default_connectivity_points")]
    pub time_points: usize,
}

fn default_window() -> f64 {
    5.0
}

fn default_connectivity_points() -> usize {
    5001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HoldDrive {
    Ffm { alpha: f64, modulation_frequency_mhz: f64 },
    LaserFree,
    Static,
}

impl HoldDrive {
    pub fn name(&self) -> &'static str {
        match self {
            HoldDrive::Ffm { .. } => "ffm",
            HoldDrive::LaserFree => "laser_free",
            HoldDrive::Static => "static",
        }
    }

    pub fn to_hold(&self, key: &str) -> CliResult<floqryd_core::disorder::HoldKind> {
        use floqryd_core::disorder::HoldKind;
        Ok(match self {
            HoldDrive::Ffm {
                alpha,
                modulation_frequency_mhz,
            } => HoldKind::Ffm(
                FfmParams::from_index(*alpha, mhz(*modulation_frequency_mhz)).map_err(|e| CliError::at(key, e))?,
            ),
            HoldDrive::LaserFree => HoldKind::LaserFree,
            HoldDrive::Static => HoldKind::Static,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldSpec {
    pub drive: HoldDrive,
    /// Hold durations (µs).
    pub times: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopplerSpec {
    pub duration_us: f64,
    /// Per-atom Doppler standard deviations Δ_D/2π (MHz).
    pub widths_mhz: Grid,
    pub drives: Vec<HoldDrive>,
}

fn lookup<'a>(value: &'a Value, dotted: &str) -> Option<&'a Value> {
    let mut cur = value;
    for part in dotted.split('.') {
        cur = cur.as_object()?.get(part)?;
    }
    Some(cur)
}

/// Parses and validates scenario text.
pub fn parse(text: &str) -> CliResult<Scenario> {
    let value: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("not valid JSON: {e}")))?
    };
    if !value.is_object() {
        return Err(CliError::Validation("top level must be a JSON object".into()));
    }
    let mut missing: Vec<String> = COMMON_REQUIRED
        .iter()
        .filter(|k| lookup(&value, k).is_none())
        .map(|k| k.to_string())
        .collect();
    if let Some(v) = lookup(&value, "schema_version").and_then(Value::as_u64) {
        if v > SCHEMA_VERSION as u64 {
            return Err(CliError::Validation(format!(
                "schema_version: file uses version {v}, this build reads up to {SCHEMA_VERSION}"
            )));
        }
    }
    if let Some(kind) = lookup(&value, "kind").and_then(Value::as_str).and_then(Kind::parse) {
        missing.extend(
            kind.required_keys()
                .iter()
                .filter(|k| lookup(&value, k).is_none())
                .map(|k| k.to_string()),
        );
    }
    if !missing.is_empty() {
        return Err(CliError::Validation(format!("missing required keys: {}", missing.join(", "))));
    }
    let scenario: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(format!("{path}: {}", e.into_inner()))
    })?;
    scenario.check()?;
    Ok(scenario)
}

pub fn load(path: &std::path::Path) -> CliResult<(Scenario, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let s = parse(&text)?;
    Ok((s, text))
}

fn positive(key: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be non-negative, got {v}")))
    }
}

impl Scenario {
    /// Checks that do not need the physical model.
    fn check(&self) -> CliResult<()> {
        if self.schema_version == 0 {
            return Err(CliError::Validation("schema_version: must be at least 1".into()));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CliError::Validation(format!(
                "name: `{}` must be non-empty and use only letters, digits, `_` or `-`",
                self.name
            )));
        }
        positive("runtime_budget_s", self.runtime_budget_s)?;
        if let Some(n) = self.samples {
            if n < 2 {
                return Err(CliError::Validation(format!("samples: need at least 2, got {n}")));
            }
        }
        if let Some(t) = &self.output.times {
            let times = t.resolve("output.times")?;
            if times.iter().any(|x| *x < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
                return Err(CliError::Validation(
                    "output.times: must be non-negative and non-decreasing".into(),
                ));
            }
        }
        if let Some(w) = self.output.fidelity_window_us {
            if !(w[0] <= w[1]) {
                return Err(CliError::Validation("output.fidelity_window_us: start after end".into()));
            }
        }
        match self.kind {
            Kind::Trajectory | Kind::Ensemble if self.schedule.is_empty() => {
                return Err(CliError::Validation("schedule: needs at least one segment".into()));
            }
            Kind::Map2d => {
                let m = self.map.as_ref().expect("required key checked");
                if m.x.parameter == m.y.parameter {
                    return Err(CliError::Validation("map.y.parameter: must differ from map.x.parameter".into()));
                }
                m.x.grid.resolve("map.x")?;
                m.y.grid.resolve("map.y")?;
                positive("map.duration_us", m.duration_us)?;
                if m.time_points < 2 {
                    return Err(CliError::Validation("map.time_points: need at least 2".into()));
                }
                if m.metrics.is_empty() {
                    return Err(CliError::Validation("map.metrics: needs at least one metric".into()));
                }
                for (p, v) in [
                    (MapParameter::Alpha, m.alpha),
                    (MapParameter::ModulationFrequencyMhz, m.modulation_frequency_mhz),
                    (MapParameter::InteractionMhz, m.interaction_mhz),
                ] {
                    let swept = m.x.parameter == p || m.y.parameter == p;
                    if !swept && v.is_none() && p != MapParameter::InteractionMhz {
                        return Err(CliError::Validation(format!(
                            "map.{}: required when no axis sweeps it",
                            p.as_str()
                        )));
                    }
                }
            }
            Kind::Ensemble | Kind::HoldScan | Kind::DopplerScan if self.samples.is_none() => {
                return Err(CliError::Validation("samples: required".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Defaults with the sparse `config` overrides merged in.
    pub fn defaults(&self) -> CliResult<DefaultsFile> {
        let mut base: Value = serde_json::from_str(DEFAULTS_JSON).expect("bundled defaults parse");
        merge("config", &mut base, &Value::Object(self.config.clone()))?;
        serde_path_to_error::deserialize(base)
            .map_err(|e| CliError::Validation(format!("config.{}: {}", e.path(), e.inner())))
    }

    pub fn system_config(&self) -> CliResult<SystemConfig> {
        let defaults = self.defaults()?;
        let mut cfg = defaults.to_config().map_err(|e| CliError::at("config", e))?;
        let atoms = self.system.atoms.unwrap_or(2);
        if !(1..=3).contains(&atoms) {
            return Err(CliError::Validation(format!("system.atoms: must be 1, 2 or 3, got {atoms}")));
        }
        match (self.system.interaction_mhz, self.system.spacing_um) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation(
                    "system.spacing_um: give either interaction_mhz or spacing_um".into(),
                ))
            }
            (Some(v), None) => {
                positive("system.interaction_mhz", v)?;
                cfg = cfg.with_chain_interaction(atoms, mhz(v)).map_err(|e| CliError::at("system", e))?;
            }
            (None, Some(d)) => {
                positive("system.spacing_um", d)?;
                cfg.array = AtomArray::chain(atoms, d, cfg.array.c6()).map_err(|e| CliError::at("system", e))?;
            }
            (None, None) => {
                let v = cfg.lasers.rabi;
                cfg = cfg.with_chain_interaction(atoms, v).map_err(|e| CliError::at("system", e))?;
            }
        }
        cfg.noise = match &self.noise {
            NoiseSpec::Full => cfg.noise,
            NoiseSpec::Noiseless => NoiseModel::noiseless(),
            NoiseSpec::EffectiveCoherence { coherence_time_us } => {
                positive("noise.coherence_time_us", *coherence_time_us)?;
                NoiseModel::effective_coherence(*coherence_time_us)
            }
        };
        cfg.thermal.motion = match self.motion {
            MotionSpec::FreeFlight => MotionModel::FreeFlight,
            MotionSpec::GroundStateCooled {
                nbar_radial,
                nbar_axial,
            } => {
                non_negative("motion.nbar_radial", nbar_radial)?;
                non_negative("motion.nbar_axial", nbar_axial)?;
                MotionModel::GroundStateCooled {
                    nbar_radial,
                    nbar_axial,
                }
            }
        };
        cfg.validate().map_err(|e| CliError::at("config", e))?;
        Ok(cfg)
    }

    pub fn drive_schedule(&self, config: &SystemConfig) -> CliResult<DriveSchedule> {
        let mut segments = Vec::with_capacity(self.schedule.len());
        for (i, s) in self.schedule.iter().enumerate() {
            let key = format!("schedule[{i}]");
            segments.push(segment(&key, s, config)?);
        }
        DriveSchedule::new(segments).map_err(|e| CliError::at("schedule", e))
    }

    pub fn ram_model(&self) -> CliResult<Option<RamModel>> {
        if self.ram.is_empty() {
            return Ok(None);
        }
        let h = self.ram.iter().map(|p| (p[0], p[1])).collect();
        Ok(Some(RamModel::new(h).map_err(|e| CliError::at("ram", e))?))
    }

    pub fn sample_times(&self) -> CliResult<Option<Vec<f64>>> {
        self.output.times.as_ref().map(|g| g.resolve("output.times")).transpose()
    }
}

pub fn segment(key: &str, s: &SegmentSpec, config: &SystemConfig) -> CliResult<PulseSegment> {
    Ok(match s {
        SegmentSpec::Static {
            duration_us,
            detuning_mhz,
        } => {
            non_negative(&format!("{key}.duration_us"), *duration_us)?;
            PulseSegment::static_drive(*duration_us, mhz(*detuning_mhz))
        }
        SegmentSpec::Ffm {
            duration_us,
            alpha,
            modulation_frequency_mhz,
            detuning_mhz,
            phase_origin_us,
        } => {
            non_negative(&format!("{key}.duration_us"), *duration_us)?;
            non_negative(&format!("{key}.alpha"), *alpha)?;
            positive(&format!("{key}.modulation_frequency_mhz"), *modulation_frequency_mhz)?;
            let mut ffm = FfmParams::from_index(*alpha, mhz(*modulation_frequency_mhz)).map_err(|e| CliError::at(key, e))?;
            ffm.phase_origin = *phase_origin_us;
            PulseSegment::ffm(*duration_us, ffm, mhz(*detuning_mhz))
        }
        SegmentSpec::LaserFree { duration_us } => {
            non_negative(&format!("{key}.duration_us"), *duration_us)?;
            PulseSegment::laser_free(*duration_us)
        }
        SegmentSpec::PiPulse { collective } => {
            PulseSegment::static_drive(pi_pulse_duration(&config.lasers, *collective), 0.0)
        }
        SegmentSpec::Stirap {
            total_time_us,
            modulation_frequency_mhz,
            mode,
        } => {
            positive(&format!("{key}.total_time_us"), *total_time_us)?;
            positive(&format!("{key}.modulation_frequency_mhz"), *modulation_frequency_mhz)?;
            let profile = mode.profile(*total_time_us).map_err(|e| CliError::at(key, e))?;
            PulseSegment::stirap(profile, mhz(*modulation_frequency_mhz))
        }
    })
}

/// Deep-merges `overlay` into `base`; keys absent from `base` are rejected.
pub fn merge(path: &str, base: &mut Value, overlay: &Value) -> CliResult<()> {
    let (Some(b), Some(o)) = (base.as_object_mut(), overlay.as_object()) else {
        *base = overlay.clone();
        return Ok(());
    };
    for (k, v) in o {
        let key = format!("{path}.{k}");
        if k == "schema_version" {
            return Err(CliError::Validation(format!("{key}: cannot be overridden")));
        }
        match b.get_mut(k) {
            None => return Err(CliError::Validation(format!("{key}: unknown key"))),
            Some(slot) if slot.is_object() && v.is_object() => merge(&key, slot, v)?,
            Some(slot) => *slot = v.clone(),
        }
    }
    Ok(())
}
