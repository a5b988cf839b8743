//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames start at multiples of the hop and are windowed with a periodic
//! analysis window. Synthesis overlap-adds the inverse transforms and divides
//! by the summed analysis window, so unmodified spectrograms reconstruct
//! exactly wherever that sum is non-zero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative ripple of the summed window above which a geometry is rejected.
pub const COLA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameGeometry {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window_kind: WindowKind,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self::for_rate(16_000)
    }
}

impl FrameGeometry {
    /// 32 ms Hann frames with 50% overlap and no zero padding.
    pub fn for_rate(sample_rate: u32) -> Self {
        let mut window_len = (0.032 * f64::from(sample_rate)).round() as usize;
        window_len += window_len % 2;
        Self {
            sample_rate,
            window_len,
            hop: window_len / 2,
            fft_len: window_len,
            window_kind: WindowKind::Hann,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        self.window_kind.coefficients(self.window_len)
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.fft_len as f64
    }

    /// Number of complete frames that fit in `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Peak-to-peak ripple of the overlapped window sum relative to its mean.
    pub fn cola_ripple(&self) -> f64 {
        let w = self.window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            f64::INFINITY
        } else {
            (max - min) / mean
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.window_len < 2 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "need 0 < hop <= window_len and window_len >= 2, got hop={} window_len={}",
                self.hop, self.window_len
            )));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config(format!(
                "fft_len {} is shorter than window_len {}",
                self.fft_len, self.window_len
            )));
        }
        let ripple = self.cola_ripple();
        if ripple > COLA_TOLERANCE {
            return Err(Error::Config(format!(
                "{:?} window of {} samples is not constant-overlap-add at hop {} (ripple {ripple:.3e}); \
                 use hop = window_len/2 or window_len/4 for Hann",
                self.window_kind, self.window_len, self.hop
            )));
        }
        Ok(())
    }
}

/// One-sided STFT coefficients, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    geometry: FrameGeometry,
    frames: Vec<Vec<Complex64>>,
}

impl Spectrogram {
    pub fn new(geometry: FrameGeometry, frames: Vec<Vec<Complex64>>) -> Result<Self> {
        let bins = geometry.num_bins();
        if let Some(bad) = frames.iter().position(|f| f.len() != bins) {
            return Err(Error::Input(format!(
                "frame {bad} has {} bins, expected {bins}",
                frames[bad].len()
            )));
        }
        Ok(Self { geometry, frames })
    }

    pub fn zeros(geometry: FrameGeometry, num_frames: usize) -> Self {
        let frames = vec![vec![Complex64::new(0.0, 0.0); geometry.num_bins()]; num_frames];
        Self { geometry, frames }
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.geometry.num_bins()
    }

    pub fn frames(&self) -> &[Vec<Complex64>] {
        &self.frames
    }

    pub fn frame(&self, p: usize) -> &[Complex64] {
        &self.frames[p]
    }

    pub fn frame_mut(&mut self, p: usize) -> &mut [Complex64] {
        &mut self.frames[p]
    }

    pub fn magnitude(&self, p: usize, k: usize) -> f64 {
        self.frames[p][k].norm()
    }

    /// Phase in `(-pi, pi]`.
    pub fn phase(&self, p: usize, k: usize) -> f64 {
        crate::phase::wrap(self.frames[p][k].arg())
    }

    pub fn map<F: FnMut(usize, usize, Complex64) -> Complex64>(&self, mut f: F) -> Self {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(p, fr)| fr.iter().enumerate().map(|(k, &c)| f(p, k, c)).collect())
            .collect();
        Self { geometry: self.geometry, frames }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
}

/// Windowed one-sided STFT; frame `p` covers samples `p*hop .. p*hop + window_len`.
pub fn analyze(signal: &[f64], geom: &FrameGeometry) -> Result<Spectrogram> {
    geom.validate()?;
    if signal.len() < geom.window_len {
        return Err(Error::Input(format!(
            "signal of {} samples is shorter than one {}-sample frame",
            signal.len(),
            geom.window_len
        )));
    }
    let window = geom.window();
    let fft = plans(geom.fft_len).forward;
    let bins = geom.num_bins();
    let mut buf = vec![Complex64::new(0.0, 0.0); geom.fft_len];
    let frames = (0..geom.num_frames(signal.len()))
        .map(|p| {
            let start = p * geom.hop;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (n, (&x, &w)) in signal[start..start + geom.window_len].iter().zip(&window).enumerate() {
                buf[n] = Complex64::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..bins].to_vec()
        })
        .collect();
    Ok(Spectrogram { geometry: *geom, frames })
}

/// Overlap-add resynthesis normalised by the summed analysis window.
///
/// The output has `(frames - 1) * hop + window_len` samples. Samples where the
/// window sum vanishes (the very first sample of a Hann frame) come out as 0.
pub fn synthesize(spec: &Spectrogram) -> Result<Vec<f64>> {
    let geom = spec.geometry;
    geom.validate()?;
    if spec.num_frames() == 0 {
        return Ok(Vec::new());
    }
    let window = geom.window();
    let ifft = plans(geom.fft_len).inverse;
    let len = (spec.num_frames() - 1) * geom.hop + geom.window_len;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); geom.fft_len];
    let scale = 1.0 / geom.fft_len as f64;
    let bins = geom.num_bins();
    for (p, frame) in spec.frames.iter().enumerate() {
        buf[..bins].copy_from_slice(frame);
        // Hermitian extension; DC and Nyquist must be real for a real frame
        buf[0].im = 0.0;
        if geom.fft_len % 2 == 0 {
            buf[bins - 1].im = 0.0;
        }
        for k in bins..geom.fft_len {
            buf[k] = buf[geom.fft_len - k].conj();
        }
        ifft.process(&mut buf);
        let start = p * geom.hop;
        for n in 0..geom.window_len {
            out[start + n] += buf[n].re * scale;
            norm[start + n] += window[n];
        }
    }
    let peak = norm.iter().cloned().fold(0.0, f64::max);
    for (y, &w) in out.iter_mut().zip(&norm) {
        *y = if w > 1e-9 * peak { *y / w } else { 0.0 };
    }
    Ok(out)
}

/// Phase of the analysis window's DTFT `sum_n w(n) exp(-j 2 pi offset n / fft_len)`,
/// with `n = 0` at the start of the frame.
pub fn window_phase_response(geom: &FrameGeometry, fractional_bin_offset: f64) -> f64 {
    dtft_phase(&geom.window(), geom.fft_len, fractional_bin_offset)
}

pub(crate) fn dtft_phase(window: &[f64], fft_len: usize, offset: f64) -> f64 {
    let omega = 2.0 * PI * offset / fft_len as f64;
    let (re, im) = window.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &w)| {
        let a = omega * n as f64;
        (re + w * a.cos(), im - w * a.sin())
    });
    im.atan2(re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_32ms_half_overlap() {
        let g = FrameGeometry::default();
        assert_eq!((g.window_len, g.hop, g.fft_len, g.num_bins()), (512, 256, 512, 257));
        assert!(g.cola_ripple() < 1e-12);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn non_cola_hop_rejected() {
        let g = FrameGeometry { hop: 200, ..FrameGeometry::default() };
        assert!(matches!(g.validate(), Err(Error::Config(_))));
        let spec = Spectrogram::zeros(g, 3);
        assert!(matches!(synthesize(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn too_short_signal_rejected() {
        let g = FrameGeometry::default();
        assert!(matches!(analyze(&[0.0; 100], &g), Err(Error::Input(_))));
        assert!(matches!(analyze(&[], &g), Err(Error::Input(_))));
    }

    #[test]
    fn frame_count_formula() {
        let g = FrameGeometry::default();
        let s = analyze(&vec![0.0; 5000], &g).unwrap();
        assert_eq!(s.num_frames(), (5000 - 512) / 256 + 1);
        assert!(s.frames().iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_gives_flat_first_frame() {
        // every bin of frame 0 equals w(0)
        let g = FrameGeometry::default();
        let w = g.window();
        let mut x = vec![0.0; 1024];
        x[0] = 1.0;
        let s = analyze(&x, &g).unwrap();
        for c in s.frame(0) {
            assert!((c - Complex64::new(w[0], 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_spectrogram_synthesizes_silence() {
        let s = Spectrogram::zeros(FrameGeometry::default(), 4);
        assert!(synthesize(&s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_phase_at_zero_offset() {
        let g = FrameGeometry::default();
        assert!(window_phase_response(&g, 0.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_bins_rejected() {
        let g = FrameGeometry::default();
        assert!(Spectrogram::new(g, vec![vec![Complex64::new(0.0, 0.0); 10]]).is_err());
    }
}
