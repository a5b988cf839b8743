//! One analysis-modification-synthesis pass over an utterance.

use serde::Serialize;

use crate::config::{EnhancerConfig, PhaseSource};
use crate::error::{Error, Result};
use crate::gains::{self, apply_gain_floor, GainContext, GainLaw, PhaseIntegral};
use crate::phase::{self, delta_theta, F0Frame, PhaseTrack};
use crate::stft::{analyze, synthesize, FrameGeometry, Spectrogram};
use crate::tracking::{NoiseTracker, SnrState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhanceReport {
    pub frames: usize,
    pub bins: usize,
    /// Mean of the floored gain over every time-frequency point.
    pub mean_gain: f64,
    /// Share of points held at the gain floor.
    pub floored_fraction: f64,
    pub voiced_frames: usize,
    pub variant: GainLaw,
    pub phase_source: PhaseSource,
    pub config_hash: String,
}

/// Gain of one bin, picking the law the phase information supports.
///
/// The uncertain-phase law degenerates to the closed forms at its limits:
/// τ = 0 is the phase-blind law, τ = ∞ the known-phase law.
fn bin_gain(law: GainLaw, ctx: &GainContext, cfg: &EnhancerConfig) -> Result<f64> {
    match law {
        GainLaw::UncertainPhase if ctx.tau == 0.0 => gains::gain_phase_blind(ctx),
        GainLaw::UncertainPhase if ctx.tau.is_infinite() => gains::gain_known_phase(ctx),
        GainLaw::UncertainPhase if cfg.phase_integral == PhaseIntegral::Bessel => {
            gains::gain_uncertain_phase_bessel(ctx)
        }
        _ => gains::evaluate(law, ctx, cfg.quadrature_points),
    }
}

#[cfg(feature = "parallel")]
fn per_bin<F: Fn(usize) -> Result<f64> + Sync + Send>(n: usize, f: F) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn per_bin<F: Fn(usize) -> Result<f64>>(n: usize, f: F) -> Result<Vec<f64>> {
    (0..n).map(f).collect()
}

/// Enhances a noisy spectrogram. The output keeps the noisy phase; a phase
/// estimate only shapes the amplitude through Δθ and τ.
pub fn enhance_spectrogram(
    noisy: &Spectrogram,
    phase: Option<&PhaseTrack>,
    cfg: &EnhancerConfig,
) -> Result<(Spectrogram, EnhanceReport)> {
    cfg.validate()?;
    if noisy.geometry() != &cfg.geometry {
        return Err(Error::Config(format!(
            "spectrogram geometry {:?} differs from configured {:?}",
            noisy.geometry(),
            cfg.geometry
        )));
    }
    if cfg.variant.needs_phase() && phase.is_none() {
        return Err(Error::Config(format!("variant {:?} needs a phase estimate", cfg.variant)));
    }
    let phase = if cfg.variant.needs_phase() { phase } else { None };
    if let Some(track) = phase {
        if track.num_frames() != noisy.num_frames() {
            return Err(Error::Input(format!(
                "phase estimate has {} frames, spectrogram has {}",
                track.num_frames(),
                noisy.num_frames()
            )));
        }
    }

    let frames = noisy.num_frames();
    let bins = noisy.num_bins();
    let (alphas, betas) = cfg.cost_per_bin()?;
    let mu = cfg.cost.mu;
    let window_sum: f64 = cfg.geometry.window().iter().sum();
    let floor_power = cfg.tracker.psd_floor * window_sum * window_sum;
    let gain_floor = apply_gain_floor(0.0, cfg.gain_floor_db);

    let powers: Vec<Vec<f64>> =
        noisy.frames().iter().map(|f| f.iter().map(|c| c.norm_sqr()).collect()).collect();
    let mut tracker = NoiseTracker::from_leading_frames(&powers, floor_power, cfg.tracker)?;
    let mut snr = SnrState::new(bins, &cfg.tracker);
    let mut out = Spectrogram::zeros(cfg.geometry, frames);

    let (mut gain_sum, mut floored) = (0.0, 0usize);
    for p in 0..frames {
        tracker.update(&powers[p]);
        let noise = tracker.noise_psd().to_vec();
        let amp: Vec<f64> = noisy.frame(p).iter().map(|c| c.norm()).collect();
        let context = |k: usize, zeta: f64, gamma: f64| {
            let ctx = GainContext {
                zeta,
                gamma,
                mu,
                alpha: alphas[k],
                beta: betas[k],
                delta_theta: 0.0,
                tau: 0.0,
            };
            match phase {
                Some(track) => ctx.with_phase(
                    delta_theta(noisy.phase(p, k), track.theta_s[p][k]),
                    track.tau[p][k],
                ),
                None => ctx,
            }
        };

        let (gamma, xi1) = snr.stage_one(&amp, &noise);
        let refined = per_bin(bins, |k| {
            if amp[k] == 0.0 {
                return Ok(0.0);
            }
            Ok(bin_gain(cfg.variant, &context(k, xi1[k], gamma[k]), cfg)? * amp[k])
        })?;
        snr.stage_two(&gamma, &refined, &noise);

        let gains = per_bin(bins, |k| {
            if amp[k] == 0.0 {
                return Ok(gain_floor);
            }
            let g = bin_gain(cfg.variant, &context(k, snr.xi[k], snr.gamma[k]), cfg)?;
            Ok(apply_gain_floor(g, cfg.gain_floor_db))
        })?;

        let estimate: Vec<f64> = gains.iter().zip(&amp).map(|(g, r)| g * r).collect();
        snr.record_estimate(&estimate);
        for ((o, &y), &g) in out.frame_mut(p).iter_mut().zip(noisy.frame(p)).zip(&gains) {
            *o = y * g;
            gain_sum += g;
            floored += usize::from(g <= gain_floor);
        }
    }

    let points = (frames * bins).max(1) as f64;
    let report = EnhanceReport {
        frames,
        bins,
        mean_gain: gain_sum / points,
        floored_fraction: floored as f64 / points,
        voiced_frames: phase.map_or(0, |t| t.f0.iter().filter(|f| f.voiced).count()),
        variant: cfg.variant,
        phase_source: cfg.phase_source,
        config_hash: cfg.hash(),
    };
    Ok((out, report))
}

/// Zero padding applied around a signal before framing: `wl − hop` in front,
/// so every original sample is covered by a full overlap, and enough at the
/// back to complete the last frame plus the same margin.
pub fn padding(len: usize, geom: &FrameGeometry) -> (usize, usize) {
    let front = geom.window_len - geom.hop;
    let covered = front + len + front;
    let frames = if covered <= geom.window_len {
        1
    } else {
        (covered - geom.window_len).div_ceil(geom.hop) + 1
    };
    let total = (frames - 1) * geom.hop + geom.window_len;
    (front, total - front - len)
}

pub fn pad(signal: &[f64], geom: &FrameGeometry) -> Vec<f64> {
    let (front, back) = padding(signal.len(), geom);
    let mut v = vec![0.0; front];
    v.extend_from_slice(signal);
    v.resize(front + signal.len() + back, 0.0);
    v
}

/// f0 track on the same frames [`enhance_signal`] uses.
pub fn track_f0_for(signal: &[f64], geom: &FrameGeometry) -> Result<Vec<F0Frame>> {
    phase::track_f0(&pad(signal, geom), geom)
}

/// Inputs that only some phase sources need.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseInputs<'a> {
    /// Clean reference, same length as the noisy signal (oracle source).
    pub clean: Option<&'a [f64]>,
    /// External f0 track for the STFTPI source; tracked internally if absent.
    pub f0_track: Option<&'a [F0Frame]>,
}

/// Time-domain wrapper around [`enhance_spectrogram`]. The output has the
/// same length as the input.
pub fn enhance_signal(
    noisy: &[f64],
    inputs: PhaseInputs<'_>,
    cfg: &EnhancerConfig,
) -> Result<(Vec<f64>, EnhanceReport)> {
    cfg.validate()?;
    if noisy.is_empty() {
        return Err(Error::Input("empty input signal".into()));
    }
    if noisy.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("input contains non-finite samples".into()));
    }
    let geom = cfg.geometry;
    let padded = pad(noisy, &geom);
    let spec = analyze(&padded, &geom)?;

    let track = if cfg.variant.needs_phase() {
        Some(match cfg.phase_source {
            PhaseSource::Noisy => PhaseTrack::noisy(&spec),
            PhaseSource::OracleFile => {
                let clean = inputs.clean.ok_or_else(|| {
                    Error::Config("phase source oracle_file needs a clean reference".into())
                })?;
                if clean.len() != noisy.len() {
                    return Err(Error::Input(format!(
                        "clean reference has {} samples, noisy input has {}",
                        clean.len(),
                        noisy.len()
                    )));
                }
                PhaseTrack::oracle(&analyze(&pad(clean, &geom), &geom)?)
            }
            PhaseSource::Stftpi => {
                let tracked;
                let f0 = match inputs.f0_track {
                    Some(f0) => f0,
                    None => {
                        tracked = phase::track_f0(&padded, &geom)?;
                        &tracked
                    }
                };
                phase::stftpi(&spec, f0, cfg.tau_voiced)?
            }
        })
    } else {
        None
    };

    let (enhanced, report) = enhance_spectrogram(&spec, track.as_ref(), cfg)?;
    let y = synthesize(&enhanced)?;
    let front = padding(noisy.len(), &geom).0;
    Ok((y[front..front + noisy.len()].to_vec(), report))
}
