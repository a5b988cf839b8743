//! Recursive per-bin statistics: the noise PSD tracker driven by a soft
//! speech presence probability, and the two-stage decision-directed a-priori
//! SNR estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Fixed a-priori SNR under speech presence used by the SPP, in dB.
    pub spp_prior_snr_db: f64,
    /// First-order smoothing of the SPP used by the stagnation guard.
    pub spp_smoothing: f64,
    /// Cap on the SPP once its smoothed value stays above it.
    pub spp_clamp: f64,
    /// Smoothing of the noise PSD update.
    pub psd_smoothing: f64,
    /// Decision-directed smoothing factor.
    pub dd_smoothing: f64,
    /// Lower bound on the a-priori SNR, in dB.
    pub xi_min_db: f64,
    /// Frames averaged to seed the noise PSD.
    pub init_frames: usize,
    /// Noise PSD floor relative to the power of a full-scale frame.
    pub psd_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            spp_prior_snr_db: 15.0,
            spp_smoothing: 0.9,
            spp_clamp: 0.99,
            psd_smoothing: 0.8,
            dd_smoothing: 0.98,
            xi_min_db: -25.0,
            init_frames: 5,
            psd_floor: 1e-12,
        }
    }
}

impl TrackerConfig {
    pub fn xi_min(&self) -> f64 {
        10f64.powf(self.xi_min_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("tracker.{name} must lie in [0, 1), got {v}")))
            }
        };
        unit("spp_smoothing", self.spp_smoothing)?;
        unit("psd_smoothing", self.psd_smoothing)?;
        unit("dd_smoothing", self.dd_smoothing)?;
        if !(self.spp_clamp > 0.0 && self.spp_clamp <= 1.0) {
            return Err(Error::Config(format!("tracker.spp_clamp must lie in (0, 1], got {}", self.spp_clamp)));
        }
        if !self.spp_prior_snr_db.is_finite() || !self.xi_min_db.is_finite() {
            return Err(Error::Config("tracker SNR constants must be finite".into()));
        }
        if self.init_frames == 0 {
            return Err(Error::Config("tracker.init_frames must be at least 1".into()));
        }
        if !(self.psd_floor > 0.0) {
            return Err(Error::Config("tracker.psd_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Posterior probability of speech presence for a fixed prior SNR
/// `xi_h1` (linear) at a-posteriori SNR `gamma`.
pub fn speech_presence_probability(gamma: f64, xi_h1: f64) -> f64 {
    1.0 / (1.0 + (1.0 + xi_h1) * (-gamma * xi_h1 / (1.0 + xi_h1)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTracker {
    noise_psd: Vec<f64>,
    smoothed_spp: Vec<f64>,
    floor: f64,
    config: TrackerConfig,
}

impl NoiseTracker {
    /// Seeds the PSD with `initial_psd`, floored at `floor` (absolute power).
    pub fn new(initial_psd: Vec<f64>, floor: f64, config: TrackerConfig) -> Self {
        let noise_psd = initial_psd.into_iter().map(|v| v.max(floor)).collect::<Vec<_>>();
        let smoothed_spp = vec![0.5; noise_psd.len()];
        Self { noise_psd, smoothed_spp, floor, config }
    }

    /// Seeds the PSD with the mean periodogram of the first
    /// `config.init_frames` frames (or all of them if there are fewer).
    pub fn from_leading_frames(frame_powers: &[Vec<f64>], floor: f64, config: TrackerConfig) -> Result<Self> {
        let used = &frame_powers[..frame_powers.len().min(config.init_frames)];
        let first = used.first().ok_or_else(|| Error::Input("no frames to seed the noise tracker".into()))?;
        let mut mean = vec![0.0; first.len()];
        for frame in used {
            for (m, &v) in mean.iter_mut().zip(frame) {
                *m += v / used.len() as f64;
            }
        }
        Ok(Self::new(mean, floor, config))
    }

    pub fn noise_psd(&self) -> &[f64] {
        &self.noise_psd
    }

    pub fn smoothed_spp(&self) -> &[f64] {
        &self.smoothed_spp
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// One recursive update with the squared amplitudes of the current frame.
    pub fn update(&mut self, frame_power: &[f64]) {
        let xi_h1 = 10f64.powf(self.config.spp_prior_snr_db / 10.0);
        let a_spp = self.config.spp_smoothing;
        let a_psd = self.config.psd_smoothing;
        for ((noise, spp_bar), &power) in
            self.noise_psd.iter_mut().zip(self.smoothed_spp.iter_mut()).zip(frame_power)
        {
            let mut spp = speech_presence_probability(power / *noise, xi_h1);
            *spp_bar = (a_spp * *spp_bar + (1.0 - a_spp) * spp).clamp(0.0, 1.0);
            if *spp_bar > self.config.spp_clamp {
                spp = spp.min(self.config.spp_clamp);
            }
            let expected = spp * *noise + (1.0 - spp) * power;
            *noise = (a_psd * *noise + (1.0 - a_psd) * expected).max(self.floor);
        }
    }
}

/// First decision-directed stage, before flooring:
/// `a * prev_amp^2 / noise + (1 - a) * max(gamma - 1, 0)`.
pub fn dd_stage_one(smoothing: f64, prev_amp: f64, noise_psd: f64, gamma: f64) -> f64 {
    smoothing * prev_amp * prev_amp / noise_psd + (1.0 - smoothing) * (gamma - 1.0).max(0.0)
}

/// A-priori and a-posteriori SNR per bin, plus the previous amplitude
/// estimate feeding the decision-directed recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrState {
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub prev_amp: Vec<f64>,
    smoothing: f64,
    xi_min: f64,
}

impl SnrState {
    pub fn new(num_bins: usize, config: &TrackerConfig) -> Self {
        Self {
            xi: vec![config.xi_min(); num_bins],
            gamma: vec![1.0; num_bins],
            prev_amp: vec![0.0; num_bins],
            smoothing: config.dd_smoothing,
            xi_min: config.xi_min(),
        }
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    /// First stage for every bin: `(γ, ζ₁)` with ζ₁ already floored.
    pub fn stage_one(&self, amplitude: &[f64], noise_psd: &[f64]) -> (Vec<f64>, Vec<f64>) {
        amplitude
            .iter()
            .zip(noise_psd)
            .zip(&self.prev_amp)
            .map(|((&r, &noise), &prev)| {
                let gamma = r * r / noise;
                (gamma, dd_stage_one(self.smoothing, prev, noise, gamma).max(self.xi_min))
            })
            .unzip()
    }

    /// Second stage: `refined` is `G(ζ₁, γ)·R` from the configured gain law.
    pub fn stage_two(&mut self, gamma: &[f64], refined: &[f64], noise_psd: &[f64]) {
        let a = self.smoothing;
        for k in 0..self.xi.len() {
            let ml = (1.0 - a) * (gamma[k] - 1.0).max(0.0);
            self.gamma[k] = gamma[k];
            self.xi[k] = (a * refined[k] * refined[k] / noise_psd[k] + ml).max(self.xi_min);
        }
    }

    /// Both stages in one go. `gain(k, xi_stage1, gamma)` is the configured
    /// gain law; its (unfloored) output refines the estimate.
    pub fn update<G>(&mut self, amplitude: &[f64], noise_psd: &[f64], mut gain: G) -> Result<()>
    where
        G: FnMut(usize, f64, f64) -> Result<f64>,
    {
        let (gamma, xi1) = self.stage_one(amplitude, noise_psd);
        let mut refined = vec![0.0; amplitude.len()];
        for k in 0..amplitude.len() {
            // a zero amplitude stays zero whatever the gain
            if amplitude[k] > 0.0 {
                refined[k] = gain(k, xi1[k], gamma[k])? * amplitude[k];
            }
        }
        self.stage_two(&gamma, &refined, noise_psd);
        Ok(())
    }

    /// Stores the final amplitude estimate of the current frame.
    pub fn record_estimate(&mut self, amplitude: &[f64]) {
        self.prev_amp.copy_from_slice(amplitude);
    }
}
