//! Scenario files: one JSON document describing a full run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wgmopo_core::coincidence::SimConfig;
use wgmopo_core::data::{load_materials, DEFAULT_GEOMETRY, DEFAULT_MATERIALS};
use wgmopo_core::evanescent::ActuatorCalibration;
use wgmopo_core::fit::FitKind;
use wgmopo_core::phase_matching::{Anchor, CalibrationKnob};
use wgmopo_core::spectrum::{Resonator, ResonatorGeometry};
use wgmopo_core::vapor::{AtomicLine, LineFile};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// Default output directory; `--out` overrides it.
    pub output_dir: String,
    #[serde(default)]
    pub data: DataFiles,
    pub pump_wavelength_nm: f64,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    pub tuning: TuningSpec,
    pub steps: StepsSpec,
    pub substrate: SubstrateScenario,
    pub vapor: Vec<CellSpec>,
    pub bandwidth: BandwidthSpec,
    pub simulation: SimulationSpec,
}

/// Paths relative to the data root.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub geometry: String,
    pub materials: Vec<String>,
}

impl Default for DataFiles {
    fn default() -> Self {
        Self {
            geometry: DEFAULT_GEOMETRY.to_string(),
            materials: DEFAULT_MATERIALS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default = "default_knob")]
    pub knob: CalibrationKnob,
}

fn default_knob() -> CalibrationKnob {
    CalibrationKnob::PumpIndex
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            anchor: Anchor::default(),
            knob: default_knob(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    pub temperature_range_c: (f64, f64),
    pub q_max: u32,
    pub p_max: u32,
    /// Signal wavelengths covered by the azimuthal search window.
    pub signal_range_nm: (f64, f64),
    pub grid_step_c: f64,
    pub max_candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsSpec {
    /// Steps taken in each direction.
    pub count: u32,
    pub window_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateScenario {
    /// Key of a fixed-index material in the material files.
    pub material: String,
    pub sweep_hz: f64,
    pub sign: f64,
    pub actuator: ActuatorCalibration,
    pub voltage_points: usize,
    #[serde(default)]
    pub plan_targets_hz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub name: String,
    pub line_files: Vec<String>,
    /// Component label the grid is centred on.
    pub center_line: String,
    pub length_cm: f64,
    pub temperature_c: f64,
    pub span_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthSpec {
    pub half_width_c: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub bin_width_ns: f64,
    /// Histogram half-width.
    pub window_ns: f64,
    /// Peak half-width used for the Klyshko estimate.
    pub accidental_window_ns: f64,
    #[serde(default)]
    pub write_streams: bool,
    pub runs: Vec<RunSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub fit: FitKind,
    pub config: SimConfig,
}

/// Parsed scenario with its hash and data root.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub sha256: String,
    pub data_root: PathBuf,
}

fn safe_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(CliError::Scenario(format!("{kind} name {name:?} must be nonempty [A-Za-z0-9_-]")))
    }
}

pub fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Loaded {
    pub fn from_file(path: &Path, data_root: PathBuf) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
        let loaded = Self {
            scenario,
            sha256: hash_hex(&bytes),
            data_root,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.schema_version != SCHEMA_VERSION {
            return Err(CliError::Scenario(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        safe_name("scenario", &s.name)?;
        if s.output_dir.trim().is_empty() {
            return Err(CliError::Scenario("output_dir must be nonempty".into()));
        }
        let (t0, t1) = s.tuning.temperature_range_c;
        if !(t1 > t0) || !(s.tuning.grid_step_c > 0.0) {
            return Err(CliError::Scenario("tuning range must be increasing and grid step positive".into()));
        }
        for c in &s.vapor {
            safe_name("cell", &c.name)?;
            if c.points < 2 || !(c.span_hz > 0.0) {
                return Err(CliError::Scenario(format!("cell {}: need points >= 2 and span > 0", c.name)));
            }
        }
        for r in &s.simulation.runs {
            safe_name("run", &r.name)?;
            r.config.validate()?;
        }
        let sim = &s.simulation;
        if !(sim.bin_width_ns > 0.0 && sim.window_ns > 0.0 && sim.accidental_window_ns > 0.0) {
            return Err(CliError::Scenario("simulation widths must be positive".into()));
        }
        if s.bandwidth.points < 3 || !(s.bandwidth.half_width_c > 0.0) {
            return Err(CliError::Scenario("bandwidth needs points >= 3 and half width > 0".into()));
        }
        if s.substrate.voltage_points < 2 {
            return Err(CliError::Scenario("substrate.voltage_points must be >= 2".into()));
        }
        s.substrate.actuator.validate()?;
        // Referenced files must exist and parse.
        self.resonator()?;
        self.substrate_index()?;
        for c in &s.vapor {
            self.cell_lines(c)?;
        }
        Ok(())
    }

    fn material_refs(&self) -> Vec<&str> {
        self.scenario.data.materials.iter().map(String::as_str).collect()
    }

    /// Uncalibrated resonator.
    pub fn resonator(&self) -> Result<Resonator> {
        let db = load_materials(&self.data_root, &self.material_refs())?;
        let geom = ResonatorGeometry::load(&self.data_root.join(&self.scenario.data.geometry))?;
        Ok(Resonator::new(geom, &db)?)
    }

    pub fn substrate_index(&self) -> Result<f64> {
        let db = load_materials(&self.data_root, &self.material_refs())?;
        Ok(db.fixed_index(&self.scenario.substrate.material)?)
    }

    /// Line files of a cell, concatenated, plus the first file for the cell's element.
    pub fn cell_lines(&self, cell: &CellSpec) -> Result<(LineFile, Vec<AtomicLine>)> {
        let mut files = Vec::new();
        for f in &cell.line_files {
            files.push(LineFile::load(&self.data_root.join(f))?);
        }
        let first = files
            .first()
            .cloned()
            .ok_or_else(|| CliError::Scenario(format!("cell {} lists no line files", cell.name)))?;
        let lines: Vec<AtomicLine> = files.iter().flat_map(|f| f.lines()).collect();
        if !lines.iter().any(|l| l.label == cell.center_line) {
            return Err(CliError::Scenario(format!(
                "cell {}: no component labelled {:?}",
                cell.name, cell.center_line
            )));
        }
        Ok((first, lines))
    }
}
