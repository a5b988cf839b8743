//! Evaluation and stimulus construction: STOI, segmental SNR, SNR-controlled
//! mixing and speech-shaped noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::bessel_i;

const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_FFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_LOWEST_CF: f64 = 150.0;
/// Frames per envelope segment (384 ms at the 10 kHz analysis rate).
const STOI_SEGMENT: usize = 30;
/// Lower bound on the signal-to-distortion ratio of the clipped envelope.
const STOI_CLIP_DB: f64 = -15.0;
const STOI_DYNAMIC_RANGE_DB: f64 = 40.0;

/// Windowed-sinc resampling between integer rates (Kaiser window,
/// 32 input-rate zero crossings per side, cutoff at 95% of the lower Nyquist).
pub fn resample(x: &[f64], fs_in: u32, fs_out: u32) -> Result<Vec<f64>> {
    if fs_in == 0 || fs_out == 0 {
        return Err(Error::Domain("sample rates must be positive".into()));
    }
    if fs_in == fs_out {
        return Ok(x.to_vec());
    }
    let ratio = f64::from(fs_in) / f64::from(fs_out);
    // cutoff in cycles per input sample
    let fc = 0.5 * 0.95 * (1.0f64).min(1.0 / ratio);
    let half = (32.0 / (2.0 * fc)).ceil();
    let beta = 8.0;
    let i0_beta = bessel_i(0, beta)?;
    let kernel = |t: f64| -> Result<f64> {
        if t.abs() >= half {
            return Ok(0.0);
        }
        let arg = 2.0 * fc * t;
        let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
        let r = t / half;
        Ok(2.0 * fc * sinc * bessel_i(0, beta * (1.0 - r * r).sqrt())? / i0_beta)
    };
    let out_len = ((x.len() as f64) / ratio).ceil() as usize;
    let mut y = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let t = m as f64 * ratio;
        let lo = ((t - half).ceil().max(0.0)) as usize;
        let hi = ((t + half).floor() as usize).min(x.len().saturating_sub(1));
        let mut acc = 0.0;
        for n in lo..=hi {
            acc += x[n] * kernel(t - n as f64)?;
        }
        y.push(acc);
    }
    Ok(y)
}

/// Symmetric Hann window without zero end points.
fn hanning(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n as f64 + 1.0)).cos()).collect()
}

/// Drops frames of `x` more than 40 dB below its loudest frame and applies
/// the same selection to `y`, re-joining the survivors by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hanning(STOI_FRAME);
    let hop = STOI_FRAME / 2;
    let frames = if x.len() < STOI_FRAME { 0 } else { (x.len() - STOI_FRAME) / hop + 1 };
    let energy: Vec<f64> = (0..frames)
        .map(|p| {
            let e: f64 = (0..STOI_FRAME).map(|n| (x[p * hop + n] * w[n]).powi(2)).sum();
            20.0 * ((e.sqrt() / (STOI_FRAME as f64).sqrt()) + f64::EPSILON).log10()
        })
        .collect();
    let top = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..frames).filter(|&p| energy[p] > top - STOI_DYNAMIC_RANGE_DB).collect();
    let len = if keep.is_empty() { 0 } else { (keep.len() - 1) * hop + STOI_FRAME };
    let (mut xs, mut ys) = (vec![0.0; len], vec![0.0; len]);
    for (i, &p) in keep.iter().enumerate() {
        for n in 0..STOI_FRAME {
            xs[i * hop + n] += x[p * hop + n] * w[n];
            ys[i * hop + n] += y[p * hop + n] * w[n];
        }
    }
    (xs, ys)
}

/// Magnitude-squared STFT at the STOI analysis settings, `[frame][bin]`.
fn stoi_power_spectra(x: &[f64]) -> Vec<Vec<f64>> {
    let w = hanning(STOI_FRAME);
    let hop = STOI_FRAME / 2;
    let fft = FftPlanner::new().plan_fft_forward(STOI_FFT);
    let frames = if x.len() < STOI_FRAME { 0 } else { (x.len() - STOI_FRAME) / hop + 1 };
    let mut buf = vec![Complex64::new(0.0, 0.0); STOI_FFT];
    (0..frames)
        .map(|p| {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for n in 0..STOI_FRAME {
                buf[n].re = x[p * hop + n] * w[n];
            }
            fft.process(&mut buf);
            buf[..=STOI_FFT / 2].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

/// Bin ranges `[lo, hi)` of the one-third octave bands.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = STOI_FFT / 2 + 1;
    let freq = |k: usize| k as f64 * f64::from(STOI_FS) / STOI_FFT as f64;
    let nearest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| (freq(a) - f).abs().total_cmp(&(freq(b) - f).abs()))
            .unwrap_or(0)
    };
    (0..STOI_BANDS)
        .map(|j| {
            let cf = STOI_LOWEST_CF * 2f64.powf(j as f64 / 3.0);
            (nearest(cf * 2f64.powf(-1.0 / 6.0)), nearest(cf * 2f64.powf(1.0 / 6.0)))
        })
        .collect()
}

fn band_envelopes(power: &[Vec<f64>]) -> Vec<Vec<f64>> {
    third_octave_bands()
        .iter()
        .map(|&(lo, hi)| power.iter().map(|frame| frame[lo..hi].iter().sum::<f64>().sqrt()).collect())
        .collect()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        xy += (a - mx) * (b - my);
        xx += (a - mx).powi(2);
        yy += (b - my).powi(2);
    }
    xy / ((xx * yy).sqrt() + f64::EPSILON)
}

/// Short-time objective intelligibility of `processed` against `clean`,
/// clamped to [0, 1].
pub fn stoi(clean: &[f64], processed: &[f64], fs: u32) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::Input(format!(
            "stoi needs equal lengths, got {} and {}",
            clean.len(),
            processed.len()
        )));
    }
    if (clean.len() as f64) < f64::from(fs) {
        return Err(Error::Input("stoi needs at least one second of audio".into()));
    }
    if clean.iter().chain(processed).any(|v| !v.is_finite()) {
        return Err(Error::Input("stoi input contains non-finite samples".into()));
    }
    let x = resample(clean, fs, STOI_FS)?;
    let y = resample(processed, fs, STOI_FS)?;
    let (x, y) = remove_silent_frames(&x, &y);
    let xe = band_envelopes(&stoi_power_spectra(&x));
    let ye = band_envelopes(&stoi_power_spectra(&y));
    let frames = xe.first().map_or(0, Vec::len);
    if frames < STOI_SEGMENT {
        return Err(Error::Input(format!(
            "stoi needs at least {STOI_SEGMENT} non-silent frames, found {frames}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-STOI_CLIP_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in STOI_SEGMENT..=frames {
        for (xb, yb) in xe.iter().zip(&ye) {
            let xs = &xb[m - STOI_SEGMENT..m];
            let ys = &yb[m - STOI_SEGMENT..m];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = nx / (ny + f64::EPSILON);
            let yc: Vec<f64> = ys.iter().zip(xs).map(|(&yv, &xv)| (alpha * yv).min(clip * xv)).collect();
            total += correlation(xs, &yc);
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;

/// Mean over non-overlapping 32 ms frames of the clamped per-frame SNR.
/// Frames whose clean energy is below 1e-8 of the loudest frame are skipped;
/// a trailing partial frame is ignored.
pub fn segmental_snr(clean: &[f64], processed: &[f64], fs: u32) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::Input(format!(
            "segmental SNR needs equal lengths, got {} and {}",
            clean.len(),
            processed.len()
        )));
    }
    let frame = (0.032 * f64::from(fs)).round() as usize;
    if frame == 0 || clean.len() < frame {
        return Err(Error::Input("signal shorter than one 32 ms frame".into()));
    }
    let stats: Vec<(f64, f64)> = clean
        .chunks_exact(frame)
        .zip(processed.chunks_exact(frame))
        .map(|(s, p)| {
            let e: f64 = s.iter().map(|v| v * v).sum();
            let d: f64 = s.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
            (e, d)
        })
        .collect();
    let peak = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Input("segmental SNR undefined for an all-silent reference".into()));
    }
    let vals: Vec<f64> = stats
        .iter()
        .filter(|(e, _)| *e >= 1e-8 * peak)
        .map(|&(e, d)| {
            if d == 0.0 {
                SEG_SNR_MAX_DB
            } else {
                (10.0 * (e / d).log10()).clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
            }
        })
        .collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// Mean power over frames within 35 dB of the loudest frame.
    ActiveLevel,
    /// Mean power over every sample.
    #[default]
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub target_snr_db: f64,
    pub level_mode: LevelMode,
    /// Chooses where in the noise the clean signal is aligned.
    pub seed: u64,
    /// Frames the active-level measurement.
    pub sample_rate: u32,
}

impl MixSpec {
    pub fn new(target_snr_db: f64, level_mode: LevelMode, seed: u64) -> Self {
        Self { target_snr_db, level_mode, seed, sample_rate: 16_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Vec<f64>,
    /// The noise exactly as added.
    pub noise: Vec<f64>,
    pub noise_gain: f64,
    pub noise_offset: usize,
}

/// Active-level threshold below the loudest frame.
pub const ACTIVE_RANGE_DB: f64 = 35.0;

/// Mean power of `x` under `mode`; active frames are 20 ms long.
pub fn signal_level(x: &[f64], mode: LevelMode, sample_rate: u32) -> f64 {
    match mode {
        LevelMode::Rms => x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64,
        LevelMode::ActiveLevel => {
            let frame = ((0.02 * f64::from(sample_rate)).round() as usize).max(1);
            let energies: Vec<(f64, usize)> =
                x.chunks(frame).map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64, c.len())).collect();
            let peak = energies.iter().map(|e| e.0).fold(0.0, f64::max);
            let threshold = peak * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);
            let (sum, n) = energies
                .iter()
                .filter(|(e, _)| *e >= threshold && *e > 0.0)
                .fold((0.0, 0usize), |(s, n), &(e, len)| (s + e * len as f64, n + len));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
    }
}

/// Adds a seeded excerpt of `noise`, scaled so that the clean level (per
/// `spec.level_mode`) over the noise power equals the target SNR.
pub fn mix_at_snr(clean: &[f64], noise: &[f64], spec: &MixSpec) -> Result<Mixture> {
    if !spec.target_snr_db.is_finite() {
        return Err(Error::Input("target SNR must be finite".into()));
    }
    if clean.is_empty() {
        return Err(Error::Input("clean signal is empty".into()));
    }
    if noise.len() < clean.len() {
        return Err(Error::Input(format!(
            "noise has {} samples but the clean signal needs {}",
            noise.len(),
            clean.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = rng.gen_range(0..=noise.len() - clean.len());
    let excerpt = &noise[offset..offset + clean.len()];
    let speech_level = signal_level(clean, spec.level_mode, spec.sample_rate);
    let noise_level = signal_level(excerpt, LevelMode::Rms, spec.sample_rate);
    if !(speech_level > 0.0) {
        return Err(Error::Input("clean signal has zero energy".into()));
    }
    if !(noise_level > 0.0) {
        return Err(Error::Input("noise excerpt has zero energy".into()));
    }
    let gain = (speech_level / noise_level * 10f64.powf(-spec.target_snr_db / 10.0)).sqrt();
    let scaled: Vec<f64> = excerpt.iter().map(|v| v * gain).collect();
    let noisy = clean.iter().zip(&scaled).map(|(s, n)| s + n).collect();
    Ok(Mixture { noisy, noise: scaled, noise_gain: gain, noise_offset: offset })
}

pub const SSN_LPC_ORDER: usize = 12;
pub const SSN_MIN_REFERENCE_S: f64 = 5.0;
const SSN_WARMUP: usize = 4096;

/// Levinson-Durbin on autocorrelation `r`; returns `a` with `a[0] = 1` and
/// the prediction error power. Fails if a reflection coefficient leaves the
/// unit interval, which would make `1/A(z)` unstable.
pub fn levinson(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order || !(r[0] > 0.0) {
        return Err(Error::Numerical("autocorrelation too short or zero at lag 0".into()));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::Numerical(format!("unstable LPC fit: reflection coefficient {k} at order {i}")));
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Ok((a, err))
}

/// Order-12 LPC polynomial of the concatenated references (autocorrelation
/// method).
pub fn lpc(references: &[&[f64]], order: usize) -> Result<(Vec<f64>, f64)> {
    let joined: Vec<f64> = references.iter().flat_map(|r| r.iter().copied()).collect();
    let n = joined.len();
    let r: Vec<f64> = (0..=order)
        .map(|lag| joined[..n.saturating_sub(lag)].iter().zip(&joined[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect();
    levinson(&r, order)
}

/// Speech-shaped noise: seeded white Gaussian noise through the all-pole
/// LPC-12 filter of the references, normalized to unit RMS.
pub fn gen_ssn(references: &[&[f64]], fs: u32, length: usize, seed: u64) -> Result<Vec<f64>> {
    let total: usize = references.iter().map(|r| r.len()).sum();
    if (total as f64) < SSN_MIN_REFERENCE_S * f64::from(fs) {
        return Err(Error::Input(format!(
            "speech-shaped noise needs at least {SSN_MIN_REFERENCE_S} s of reference, got {:.2} s",
            total as f64 / f64::from(fs)
        )));
    }
    if length == 0 {
        return Ok(Vec::new());
    }
    let (a, _) = lpc(references, SSN_LPC_ORDER)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = [0.0; SSN_LPC_ORDER];
    let mut out = Vec::with_capacity(length);
    for i in 0..SSN_WARMUP + length {
        let e: f64 = rng.sample(StandardNormal);
        let y = e - (1..=SSN_LPC_ORDER).map(|j| a[j] * state[j - 1]).sum::<f64>();
        state.rotate_right(1);
        state[0] = y;
        if i >= SSN_WARMUP {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::Numerical("speech-shaped noise has no finite energy".into()));
    }
    out.iter_mut().for_each(|v| *v /= rms);
    Ok(out)
}
