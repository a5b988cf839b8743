//! Enhancer configuration: one TOML document, every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gains::{
    CostParams, GainLaw, ParamSchedule, PhaseIntegral, DEFAULT_QUADRATURE_POINTS, MIN_QUADRATURE_POINTS,
};
use crate::phase::DEFAULT_TAU_VOICED;
use crate::stft::FrameGeometry;
use crate::tracking::TrackerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    /// Per-bin α/β from the auditory schedules.
    AuditorySchedule,
    /// The same `cost.alpha`, `cost.beta` for every bin.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSource {
    /// Noisy phase with zero confidence.
    Noisy,
    /// Phase of a clean reference, treated as exact.
    OracleFile,
    /// Harmonic-model reconstruction from an f0 track.
    Stftpi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub mode: ParamMode,
    /// Shape of the amplitude prior.
    pub mu: f64,
    /// Used only in fixed mode.
    pub alpha: f64,
    /// Used only in fixed mode.
    pub beta: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { mode: ParamMode::AuditorySchedule, mu: 1.0, alpha: 0.0, beta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancerConfig {
    pub variant: GainLaw,
    pub phase_source: PhaseSource,
    pub gain_floor_db: f64,
    pub tau_voiced: f64,
    pub phase_integral: PhaseIntegral,
    /// Starting resolution of the trapezoidal phase integral.
    pub quadrature_points: usize,
    pub seed: u64,
    pub geometry: FrameGeometry,
    pub cost: CostConfig,
    pub schedule: ParamSchedule,
    pub tracker: TrackerConfig,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            variant: GainLaw::KnownPhase,
            phase_source: PhaseSource::Stftpi,
            gain_floor_db: -15.0,
            tau_voiced: DEFAULT_TAU_VOICED,
            phase_integral: PhaseIntegral::Bessel,
            quadrature_points: DEFAULT_QUADRATURE_POINTS,
            seed: 0,
            geometry: FrameGeometry::default(),
            cost: CostConfig::default(),
            schedule: ParamSchedule::default(),
            tracker: TrackerConfig::default(),
        }
    }
}

impl EnhancerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (fully defaulted) TOML serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Per-bin `(α_k, β_k)` for the configured geometry and mode.
    pub fn cost_per_bin(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let bins = self.geometry.num_bins();
        match self.cost.mode {
            ParamMode::Fixed => Ok((vec![self.cost.alpha; bins], vec![self.cost.beta; bins])),
            ParamMode::AuditorySchedule => self.schedule.per_bin(&self.geometry),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.tracker.validate()?;
        if !self.gain_floor_db.is_finite() || self.gain_floor_db > 0.0 {
            return Err(Error::Config(format!(
                "gain_floor_db must be finite and <= 0, got {}",
                self.gain_floor_db
            )));
        }
        if !(self.tau_voiced >= 0.0) {
            return Err(Error::Config(format!("tau_voiced must be >= 0, got {}", self.tau_voiced)));
        }
        if self.quadrature_points < MIN_QUADRATURE_POINTS {
            return Err(Error::Config(format!(
                "quadrature_points must be at least {MIN_QUADRATURE_POINTS}, got {}",
                self.quadrature_points
            )));
        }
        if self.cost.mode == ParamMode::AuditorySchedule {
            self.schedule.validate(f64::from(self.geometry.sample_rate))?;
        }
        let (alphas, betas) = self.cost_per_bin()?;
        // α is non-decreasing and β non-increasing, but check every bin anyway
        for (k, (&alpha, &beta)) in alphas.iter().zip(&betas).enumerate() {
            CostParams { mu: self.cost.mu, alpha, beta }
                .validate()
                .map_err(|e| Error::Config(format!("bin {k}: {e}")))?;
        }
        Ok(())
    }
}
