use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::netchan::NetworkConditions;
use crate::path::{ControllerParams, DEFAULT_LOG_RESOLUTION};
use crate::utility::{ExogenousFactors, UtilitySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub width_mm: f64,
    pub height_mm: f64,
    pub cell_size_mm: f64,
    /// Fraction of the tool diameter shared by neighboring lanes.
    pub overlap: f64,
    /// How far the raster extends past every edge of the workpiece, in tool
    /// radii, so that the edge zone is sanded like the interior.
    pub edge_overrun_tool_radii: f64,
    pub z_ref_mm: f64,
    pub nominal_speed_mm_s: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            width_mm: 200.0,
            height_mm: 100.0,
            cell_size_mm: 1.0,
            overlap: 0.5,
            edge_overrun_tool_radii: 2.0,
            z_ref_mm: 0.0,
            nominal_speed_mm_s: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration_limit_s: f64,
    pub log_resolution_mm: f64,
    /// Delay the pose reports as well as the commands.
    pub symmetric_delay: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration_limit_s: 600.0,
            log_resolution_mm: DEFAULT_LOG_RESOLUTION,
            symmetric_delay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    /// Neighborhood of the deviation map in cells (odd); derived from the
    /// tool radius when absent.
    #[serde(default)]
    pub window_cells: Option<usize>,
    /// Block size for coarsening before the transport solve; derived from
    /// `max_side_cells` when absent.
    #[serde(default)]
    pub downsample: Option<usize>,
    pub max_side_cells: usize,
    /// Material removed per stored trajectory sample.
    pub mass_per_sample: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            window_cells: None,
            downsample: None,
            max_side_cells: crate::quality::DEFAULT_MAX_SIDE,
            mass_per_sample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub delays_ms: Vec<f64>,
    pub tool_radii_mm: Vec<f64>,
    pub seeds: Vec<u64>,
    pub jitter_ms: f64,
    pub loss: f64,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            delays_ms: (0..=10).map(|i| 10.0 * i as f64).collect(),
            tool_radii_mm: vec![12.5, 25.0, 37.5],
            seeds: vec![7],
            jitter_ms: 0.0,
            loss: 0.0,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub sanding: UtilitySpec,
    pub scanning: UtilitySpec,
    pub customer: UtilitySpec,
    pub exogenous: ExogenousFactors,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            sanding: UtilitySpec::default_sanding(),
            scanning: UtilitySpec::default_scanning(),
            customer: UtilitySpec::default_customer(),
            exogenous: ExogenousFactors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrmConfig {
    pub listen_addr: String,
    pub min_latency_ms: f64,
    pub max_latency_ms: f64,
    pub max_jitter_ms: f64,
    pub max_loss: f64,
    pub max_bandwidth_kbps: f64,
    pub default_bandwidth_kbps: f64,
    /// Latency budget the closed loop starts from.
    pub initial_latency_ms: f64,
    pub max_rounds: usize,
    /// Tool radius whose sweep rows form the calibration table.
    pub calibration_tool_radius_mm: f64,
    pub val_ue: String,
    pub ue_ip_address: String,
}

impl Default for NrmConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:7878".into(),
            min_latency_ms: 1.0,
            max_latency_ms: 200.0,
            max_jitter_ms: 50.0,
            max_loss: 0.1,
            max_bandwidth_kbps: 10_000.0,
            default_bandwidth_kbps: 1000.0,
            initial_latency_ms: 100.0,
            max_rounds: 5,
            calibration_tool_radius_mm: 25.0,
            val_ue: "robot-arm-1".into(),
            ue_ip_address: "10.0.0.2".into(),
        }
    }
}

/// Everything that determines a run. Field names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tool_radius_mm: f64,
    pub output_dir: PathBuf,
    pub surface: SurfaceConfig,
    pub controller: ControllerParams,
    pub network: NetworkConditions,
    pub simulation: SimulationConfig,
    pub quality: QualityConfig,
    pub sweep: SweepConfig,
    pub utility: UtilityConfig,
    pub nrm: NrmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            tool_radius_mm: 25.0,
            output_dir: PathBuf::from("out"),
            surface: SurfaceConfig::default(),
            controller: ControllerParams::default(),
            network: NetworkConditions::ideal(),
            simulation: SimulationConfig::default(),
            quality: QualityConfig::default(),
            sweep: SweepConfig::default(),
            utility: UtilityConfig::default(),
            nrm: NrmConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    /// The output directory is excluded so a run hashes the same wherever it
    /// is written.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Network conditions of a single run, seeded from the config seed.
    pub fn run_conditions(&self) -> NetworkConditions {
        NetworkConditions {
            seed: self.seed,
            ..self.network
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        let s = &self.surface;
        for (name, v) in [
            ("surface.width_mm", s.width_mm),
            ("surface.height_mm", s.height_mm),
            ("surface.cell_size_mm", s.cell_size_mm),
            ("surface.nominal_speed_mm_s", s.nominal_speed_mm_s),
            ("tool_radius_mm", self.tool_radius_mm),
            ("simulation.duration_limit_s", self.simulation.duration_limit_s),
            ("simulation.log_resolution_mm", self.simulation.log_resolution_mm),
            ("quality.mass_per_sample", self.quality.mass_per_sample),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&s.overlap) {
            return bad(format!("surface.overlap {} outside [0, 1)", s.overlap));
        }
        if !s.z_ref_mm.is_finite() {
            return bad("surface.z_ref_mm must be finite".into());
        }
        if let Some(w) = self.quality.window_cells {
            if w == 0 || w % 2 == 0 {
                return bad(format!("quality.window_cells must be odd, got {w}"));
            }
        }
        if self.quality.downsample == Some(0) || self.quality.max_side_cells == 0 {
            return bad("quality downsampling must be at least 1".into());
        }
        self.controller
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.network
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let sw = &self.sweep;
        if sw.delays_ms.is_empty() || sw.tool_radii_mm.is_empty() || sw.seeds.is_empty() {
            return bad("sweep needs at least one delay, tool radius and seed".into());
        }
        if sw.workers == 0 {
            return bad("sweep.workers must be at least 1".into());
        }
        for &d in &sw.delays_ms {
            let c = NetworkConditions {
                delay_ms: d,
                jitter_ms: sw.jitter_ms,
                loss: sw.loss,
                ..self.network
            };
            c.validate()
                .map_err(|e| ExperimentError::Config(format!("sweep: {e}")))?;
        }
        if sw.tool_radii_mm.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("sweep.tool_radii_mm must be positive".into());
        }
        for spec in [
            &self.utility.sanding,
            &self.utility.scanning,
            &self.utility.customer,
        ] {
            spec.validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        self.utility
            .exogenous
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let n = &self.nrm;
        if !(n.min_latency_ms > 0.0 && n.min_latency_ms <= n.max_latency_ms) {
            return bad("nrm latency caps must satisfy 0 < min <= max".into());
        }
        if n.max_rounds == 0 {
            return bad("nrm.max_rounds must be at least 1".into());
        }
        Ok(())
    }
}
