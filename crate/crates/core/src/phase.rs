//! Clean-phase estimates for the phase-aware gains: an autocorrelation f0
//! tracker, harmonic-model phase reconstruction (STFTPI) and an oracle
//! passthrough for the known-phase condition.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{dtft_phase, FrameGeometry, Spectrogram};

pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 400.0;
pub const VOICING_THRESHOLD: f64 = 0.45;
/// Concentration handed to the uncertain-phase law for voiced bins.
pub const DEFAULT_TAU_VOICED: f64 = 4.0;

/// Wraps an angle to (−π, π].
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// `θ_y − θ̃_s` on the shortest arc.
pub fn delta_theta(theta_y: f64, theta_s_est: f64) -> f64 {
    wrap(theta_y - theta_s_est)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    pub f0: f64,
    pub voiced: bool,
}

impl F0Frame {
    pub const UNVOICED: F0Frame = F0Frame { f0: 0.0, voiced: false };
}

/// Shortest segment [`estimate_f0`] accepts: two periods of the lowest f0.
pub fn min_f0_segment(fs: f64) -> usize {
    (2.0 * fs / F0_MIN_HZ).ceil() as usize
}

/// Normalized-autocorrelation pitch estimate of one segment.
///
/// The earliest local maximum reaching 90% of the global peak is taken, which
/// keeps period doubling from winning on strongly periodic input. The lag is
/// refined by parabolic interpolation.
pub fn estimate_f0(segment: &[f64], fs: f64) -> Result<F0Frame> {
    if segment.len() < min_f0_segment(fs) {
        return Err(Error::Input(format!(
            "f0 segment of {} samples is shorter than the required {}",
            segment.len(),
            min_f0_segment(fs)
        )));
    }
    let lag_min = (fs / F0_MAX_HZ).floor() as usize;
    let lag_max = (fs / F0_MIN_HZ).ceil() as usize;
    let r: Vec<f64> = (lag_min - 1..=lag_max + 1).map(|l| normalized_autocorr(segment, l)).collect();
    let at = |l: usize| r[l + 1 - lag_min];

    let peak = (lag_min..=lag_max).map(at).fold(f64::NEG_INFINITY, f64::max);
    if !(peak >= VOICING_THRESHOLD) {
        return Ok(F0Frame::UNVOICED);
    }
    let Some(lag) = (lag_min..=lag_max)
        .find(|&l| at(l) >= 0.9 * peak && at(l) >= at(l - 1) && at(l) >= at(l + 1))
    else {
        return Ok(F0Frame::UNVOICED);
    };
    let (y0, y1, y2) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom < 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let f0 = fs / (lag as f64 + shift);
    if !(F0_MIN_HZ..=F0_MAX_HZ).contains(&f0) {
        return Ok(F0Frame::UNVOICED);
    }
    Ok(F0Frame { f0, voiced: true })
}

fn normalized_autocorr(x: &[f64], lag: usize) -> f64 {
    let (a, b) = (&x[..x.len() - lag], &x[lag..]);
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        xy += u * v;
        xx += u * u;
        yy += v * v;
    }
    if xx <= 0.0 || yy <= 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

/// Per-frame f0 for a signal framed by `geom`. Each estimate looks at a
/// segment of [`min_f0_segment`] samples centred on the frame (zero padded at
/// the edges); voiced runs are then median-smoothed over three frames.
pub fn track_f0(signal: &[f64], geom: &FrameGeometry) -> Result<Vec<F0Frame>> {
    let fs = f64::from(geom.sample_rate);
    let seg_len = min_f0_segment(fs);
    let frames = geom.num_frames(signal.len());
    let mut seg = vec![0.0; seg_len];
    let mut raw = Vec::with_capacity(frames);
    for p in 0..frames {
        let centre = (p * geom.hop + geom.window_len / 2) as isize;
        let start = centre - (seg_len / 2) as isize;
        for (i, s) in seg.iter_mut().enumerate() {
            let n = start + i as isize;
            *s = if n >= 0 && (n as usize) < signal.len() { signal[n as usize] } else { 0.0 };
        }
        raw.push(estimate_f0(&seg, fs)?);
    }
    Ok(median_smooth(&raw))
}

/// Three-point median of f0 where a frame and both neighbours are voiced.
pub fn median_smooth(track: &[F0Frame]) -> Vec<F0Frame> {
    let mut out = track.to_vec();
    for p in 1..track.len().saturating_sub(1) {
        let w = [track[p - 1], track[p], track[p + 1]];
        if w.iter().all(|f| f.voiced) {
            let mut v = w.map(|f| f.f0);
            v.sort_by(f64::total_cmp);
            out[p].f0 = v[1];
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct F0Row {
    frame_index: usize,
    f0_hz: f64,
    voiced: u8,
}

/// CSV with header `frame_index,f0_hz,voiced`.
pub fn write_f0_csv<P: AsRef<Path>>(path: P, track: &[F0Frame]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for (i, f) in track.iter().enumerate() {
        w.serialize(F0Row { frame_index: i, f0_hz: f.f0, voiced: u8::from(f.voiced) })
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_f0_csv`]; rows must be in frame order.
pub fn read_f0_csv<P: AsRef<Path>>(path: P) -> Result<Vec<F0Frame>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_error)?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<F0Row>().enumerate() {
        let row = row.map_err(|e| Error::Input(format!("f0 csv row {}: {e}", i + 1)))?;
        if row.frame_index != out.len() {
            return Err(Error::Input(format!(
                "f0 csv row {}: expected frame {}, got {}",
                i + 1,
                out.len(),
                row.frame_index
            )));
        }
        let voiced = match row.voiced {
            0 => false,
            1 => true,
            v => return Err(Error::Input(format!("f0 csv row {}: voiced must be 0 or 1, got {v}", i + 1))),
        };
        if voiced && !(row.f0_hz > 0.0 && row.f0_hz.is_finite()) {
            return Err(Error::Input(format!("f0 csv row {}: voiced frame needs f0 > 0", i + 1)));
        }
        out.push(F0Frame { f0: row.f0_hz, voiced });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("f0 csv: {other:?}")),
    }
}

/// Clean-phase estimate with a concentration per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    pub f0: Vec<F0Frame>,
    /// Estimated clean phase, wrapped to (−π, π].
    pub theta_s: Vec<Vec<f64>>,
    /// Concentration per bin: 0 carries no information, infinity is exact.
    pub tau: Vec<Vec<f64>>,
}

impl PhaseTrack {
    /// The clean spectrogram's own phase, treated as exact.
    pub fn oracle(clean: &Spectrogram) -> Self {
        let theta_s = (0..clean.num_frames())
            .map(|p| (0..clean.num_bins()).map(|k| clean.phase(p, k)).collect())
            .collect();
        Self {
            f0: vec![F0Frame::UNVOICED; clean.num_frames()],
            theta_s,
            tau: vec![vec![f64::INFINITY; clean.num_bins()]; clean.num_frames()],
        }
    }

    /// The noisy phase with no confidence at all.
    pub fn noisy(noisy: &Spectrogram) -> Self {
        let theta_s = (0..noisy.num_frames())
            .map(|p| (0..noisy.num_bins()).map(|k| noisy.phase(p, k)).collect())
            .collect();
        Self {
            f0: vec![F0Frame::UNVOICED; noisy.num_frames()],
            theta_s,
            tau: vec![vec![0.0; noisy.num_bins()]; noisy.num_frames()],
        }
    }

    pub fn num_frames(&self) -> usize {
        self.theta_s.len()
    }
}

/// Index of the harmonic dominating `bin`: the nearest multiple of f0, at
/// least the first, ties going to the lower harmonic.
pub fn dominant_harmonic(bin: usize, f0: f64, geom: &FrameGeometry) -> usize {
    let ratio = geom.bin_frequency(bin) / f0;
    let below = ratio.floor();
    let h = if ratio - below > 0.5 { below + 1.0 } else { below };
    (h as usize).max(1)
}

/// Harmonic-model phase reconstruction.
///
/// In a voiced frame every harmonic `f_h = h·f0` advances its phase at its
/// nearest bin by `2π f_h L / fs` per hop (the noisy phase seeds the first
/// voiced frame of a run). The other bins of the harmonic's region follow
/// from the analysis window's phase response,
/// `θ(k) = θ(k_h) − θ_w(k_h − κ) + θ_w(k − κ)` with `κ = f_h N / fs`.
/// Unvoiced frames keep the noisy phase with τ = 0.
pub fn stftpi(noisy: &Spectrogram, f0_track: &[F0Frame], tau_voiced: f64) -> Result<PhaseTrack> {
    if f0_track.len() != noisy.num_frames() {
        return Err(Error::Input(format!(
            "f0 track has {} frames, spectrogram has {}",
            f0_track.len(),
            noisy.num_frames()
        )));
    }
    let geom = *noisy.geometry();
    let fs = f64::from(geom.sample_rate);
    let n_fft = geom.fft_len as f64;
    let bins = noisy.num_bins();
    let window = geom.window();
    let mut track = PhaseTrack::noisy(noisy);
    track.f0 = f0_track.to_vec();

    for (p, frame) in f0_track.iter().enumerate() {
        if !frame.voiced {
            continue;
        }
        if !(frame.f0 > 0.0 && frame.f0.is_finite()) {
            return Err(Error::Numerical(format!("voiced frame {p} has f0 = {}", frame.f0)));
        }
        let continuing = p > 0 && f0_track[p - 1].voiced;
        let top = dominant_harmonic(bins - 1, frame.f0, &geom);
        let mut theta = vec![0.0; bins];
        let mut k = 0;
        for h in 1..=top {
            let f_h = h as f64 * frame.f0;
            let kappa = f_h * n_fft / fs;
            let centre = (kappa.round() as usize).min(bins - 1);
            let anchor = if continuing {
                track.theta_s[p - 1][centre] + 2.0 * PI * f_h * geom.hop as f64 / fs
            } else {
                noisy.phase(p, centre)
            };
            let ref_w = dtft_phase(&window, geom.fft_len, centre as f64 - kappa);
            while k < bins && dominant_harmonic(k, frame.f0, &geom) == h {
                theta[k] = if k == centre {
                    anchor
                } else {
                    anchor - ref_w + dtft_phase(&window, geom.fft_len, k as f64 - kappa)
                };
                k += 1;
            }
        }
        track.theta_s[p] = theta.into_iter().map(wrap).collect();
        track.tau[p] = vec![tau_voiced; bins];
    }
    Ok(track)
}
