//! Bayesian STSA gain laws under a generalized-Gamma amplitude prior and a
//! von Mises phase prior, the auditory α/β schedules and the gain floor.
//!
//! Every law returns `Â / R`. The noise PSD cancels from that ratio, so a
//! gain depends on the observation only through `ζ` and `γ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{
    kummer_sign_ln_unbounded, ln_gamma_pos, ln_pcf_integral_shifted, ln_phase_averaged_integral,
};
use crate::stft::FrameGeometry;

/// Frequency below which the α schedule stays at `alpha_low`.
pub const ALPHA_KNEE_HZ: f64 = 2000.0;
pub const DEFAULT_QUADRATURE_POINTS: usize = 256;
pub const MIN_QUADRATURE_POINTS: usize = 64;
/// Doubling stops here even if the relative change is still above tolerance.
pub const MAX_QUADRATURE_POINTS: usize = 1 << 14;
const QUADRATURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainLaw {
    PhaseBlind,
    KnownPhase,
    UncertainPhase,
}

impl GainLaw {
    /// Whether the law reads `delta_theta` at all.
    pub fn needs_phase(self) -> bool {
        !matches!(self, GainLaw::PhaseBlind)
    }
}

/// Everything a gain law needs for one time-frequency point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainContext {
    /// a-priori SNR
    pub zeta: f64,
    /// a-posteriori SNR `R² / σ²`
    pub gamma: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `θ_y − θ̃_s`, wrapped to (−π, π]
    pub delta_theta: f64,
    /// von Mises concentration of the phase prior
    pub tau: f64,
}

impl GainContext {
    /// Builds a context from the raw amplitude and noise PSD.
    pub fn from_observation(amplitude: f64, noise_psd: f64, zeta: f64, cost: CostParams) -> Self {
        Self {
            zeta,
            gamma: amplitude * amplitude / noise_psd,
            mu: cost.mu,
            alpha: cost.alpha,
            beta: cost.beta,
            delta_theta: 0.0,
            tau: 0.0,
        }
    }

    pub fn with_phase(mut self, delta_theta: f64, tau: f64) -> Self {
        self.delta_theta = delta_theta;
        self.tau = tau;
        self
    }

    pub fn cost(&self) -> CostParams {
        CostParams { mu: self.mu, alpha: self.alpha, beta: self.beta }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost().validate()?;
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return Err(Error::Domain(format!("a-priori SNR must be finite and positive, got {}", self.zeta)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain(format!("a-posteriori SNR must be finite and positive, got {}", self.gamma)));
        }
        if !self.delta_theta.is_finite() {
            return Err(Error::Domain("phase deviation must be finite".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Domain(format!("concentration tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Prior shape `μ` and cost exponents `α`, `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CostParams {
    /// The Gamma-function arguments `2μ + β − 2α` and `2μ − 2α` of the
    /// moment ratio must be positive, and so must `μ` and `β`.
    pub fn validate(&self) -> Result<()> {
        let CostParams { mu, alpha, beta } = *self;
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Config(format!("shape mu must be finite and positive, got {mu}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("cost exponent beta must be finite and positive, got {beta}")));
        }
        if !alpha.is_finite() {
            return Err(Error::Config(format!("cost exponent alpha must be finite, got {alpha}")));
        }
        if !(2.0 * mu - 2.0 * alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha = {alpha} with mu = {mu} makes the Gamma argument 2*mu - 2*alpha non-positive; \
                 need alpha < mu"
            )));
        }
        if !(beta - 2.0 * alpha + 2.0 * mu > 0.0) {
            return Err(Error::Config(format!(
                "alpha = {alpha}, beta = {beta}, mu = {mu} make the Gamma argument \
                 beta - 2*alpha + 2*mu non-positive"
            )));
        }
        Ok(())
    }
}

/// Gain for a perfectly known clean phase.
pub fn gain_known_phase(ctx: &GainContext) -> Result<f64> {
    ctx.validate()?;
    let GainContext { zeta, gamma, mu, alpha, beta, delta_theta, .. } = *ctx;
    let p1 = 2.0 * mu + beta - 2.0 * alpha;
    let p0 = 2.0 * mu - 2.0 * alpha;
    let nu = nu_scale(ctx) * delta_theta.cos();
    let ln_ratio = ln_pcf_integral_shifted(p1, nu)? - ln_pcf_integral_shifted(p0, nu)?;
    finish(0.5 * zeta / ((mu + zeta) * gamma), ln_ratio, beta)
}

/// Gain when the phase carries no information (uniform phase prior).
pub fn gain_phase_blind(ctx: &GainContext) -> Result<f64> {
    ctx.validate()?;
    let GainContext { zeta, gamma, mu, alpha, beta, .. } = *ctx;
    let nu = zeta * gamma / (mu + zeta);
    let a1 = 1.0 + alpha - mu - 0.5 * beta;
    let a0 = 1.0 + alpha - mu;
    let ln_ratio = ln_gamma_pos(mu + 0.5 * beta - alpha) + ln_kummer_positive(a1, -nu)?
        - ln_gamma_pos(mu - alpha)
        - ln_kummer_positive(a0, -nu)?;
    finish(zeta / ((mu + zeta) * gamma), ln_ratio, beta)
}

/// Gain under a von Mises phase prior centred on the phase estimate, with
/// the phase integral done by the trapezoidal rule. The grid starts at
/// `quadrature_points` and doubles until the gain moves by at most 1e-6
/// relative; failing that a warning is logged and the finest value returned.
pub fn gain_uncertain_phase(ctx: &GainContext, quadrature_points: usize) -> Result<f64> {
    ctx.validate()?;
    if quadrature_points < MIN_QUADRATURE_POINTS {
        return Err(Error::Config(format!(
            "quadrature needs at least {MIN_QUADRATURE_POINTS} points, got {quadrature_points}"
        )));
    }
    let GainContext { zeta, gamma, mu, alpha, beta, delta_theta, tau } = *ctx;
    let p1 = 2.0 * mu + beta - 2.0 * alpha;
    let p0 = 2.0 * mu - 2.0 * alpha;
    let nu0 = nu_scale(ctx);

    // Nodes whose prior weight sits this far below the centre cannot matter:
    // the log-integrals vary by at most about |dν|·(|ν| + √p + 2) over the circle.
    let spread = 2.0 * nu0.abs() * (nu0.abs() + p1.sqrt() + 2.0);
    let cutoff = 745.0 + spread;

    let mut n = quadrature_points;
    // (ln numerator term, ln denominator term) per node, None if negligible
    let mut nodes: Vec<Option<(f64, f64)>> = Vec::new();
    let eval = |j: usize, n: usize| -> Result<Option<(f64, f64)>> {
        let psi = -PI + 2.0 * PI * j as f64 / n as f64;
        let log_w = tau * (psi.cos() - 1.0);
        if -log_w > cutoff {
            return Ok(None);
        }
        let c = (delta_theta - psi).cos();
        let nu = nu0 * c;
        // the integrals carry a factor exp(ν²/2) for ν < 0; keep it relative
        // to its largest possible value exp(ν0²/2) so nothing overflows
        let s = (delta_theta - psi).sin();
        let shift = if nu < 0.0 { -0.5 * nu0 * nu0 * s * s } else { -0.5 * nu0 * nu0 };
        let base = log_w + shift;
        Ok(Some((base + ln_pcf_integral_shifted(p1, nu)?, base + ln_pcf_integral_shifted(p0, nu)?)))
    };
    for j in 0..n {
        nodes.push(eval(j, n)?);
    }
    let mut ln_ratio = ln_sum_ratio(&nodes);
    loop {
        if 2 * n > MAX_QUADRATURE_POINTS {
            log::warn!(
                "uncertain-phase quadrature not converged at {n} points (zeta={zeta}, gamma={gamma}, tau={tau})"
            );
            break;
        }
        // the finer grid keeps every old node at even index
        let mut refined = Vec::with_capacity(2 * n);
        for j in 0..n {
            refined.push(nodes[j]);
            refined.push(eval(2 * j + 1, 2 * n)?);
        }
        n *= 2;
        nodes = refined;
        let next = ln_sum_ratio(&nodes);
        let change = ((next - ln_ratio) / beta).exp_m1().abs();
        ln_ratio = next;
        if change <= QUADRATURE_TOLERANCE {
            break;
        }
    }
    finish(0.5 * zeta / ((mu + zeta) * gamma), ln_ratio, beta)
}

/// The uncertain-phase gain with the phase integral done exactly: the von
/// Mises average of the amplitude kernel is `2π I₀(κ)`, leaving one amplitude
/// integral per moment. This is the limit the trapezoidal rule of
/// [`gain_uncertain_phase`] converges to, at a small fraction of the cost.
pub fn gain_uncertain_phase_bessel(ctx: &GainContext) -> Result<f64> {
    ctx.validate()?;
    let GainContext { zeta, gamma, mu, alpha, beta, delta_theta, tau } = *ctx;
    let n = nu_scale(ctx).abs();
    let ln_ratio = ln_phase_averaged_integral(2.0 * mu + beta - 2.0 * alpha, n, tau, delta_theta)?
        - ln_phase_averaged_integral(2.0 * mu - 2.0 * alpha, n, tau, delta_theta)?;
    finish(0.5 * zeta / ((mu + zeta) * gamma), ln_ratio, beta)
}

/// How the uncertain-phase law integrates over the phase prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseIntegral {
    /// Exact average through the modified Bessel function.
    #[default]
    Bessel,
    /// Trapezoidal rule from `quadrature_points` nodes, doubled to convergence.
    Trapezoid,
}

/// Dispatches on the configured law.
pub fn evaluate(law: GainLaw, ctx: &GainContext, quadrature_points: usize) -> Result<f64> {
    match law {
        GainLaw::PhaseBlind => gain_phase_blind(ctx),
        GainLaw::KnownPhase => gain_known_phase(ctx),
        GainLaw::UncertainPhase => gain_uncertain_phase(ctx, quadrature_points),
    }
}

/// `max(gain, 10^(floor_db/20))`.
pub fn apply_gain_floor(gain: f64, floor_db: f64) -> f64 {
    gain.max(10f64.powf(floor_db / 20.0))
}

/// `−√γ · √(2ζ/(μ+ζ))`, the parabolic-cylinder argument before the cos Δθ factor.
fn nu_scale(ctx: &GainContext) -> f64 {
    -(ctx.gamma.sqrt()) * (2.0 * ctx.zeta / (ctx.mu + ctx.zeta)).sqrt()
}

fn finish(prefactor_sq: f64, ln_ratio: f64, beta: f64) -> Result<f64> {
    let g = (0.5 * prefactor_sq.ln() + ln_ratio / beta).exp();
    if !g.is_finite() || g <= 0.0 {
        return Err(Error::Numerical(format!("gain evaluated to {g}")));
    }
    Ok(g)
}

fn ln_kummer_positive(a: f64, x: f64) -> Result<f64> {
    let (sign, ln_abs) = kummer_sign_ln_unbounded(a, 1.0, x)?;
    if sign <= 0.0 {
        return Err(Error::Numerical(format!("M({a}, 1, {x}) is not positive")));
    }
    Ok(ln_abs)
}

fn ln_sum_ratio(nodes: &[Option<(f64, f64)>]) -> f64 {
    let (num, den): (Vec<f64>, Vec<f64>) = nodes.iter().flatten().copied().unzip();
    log_sum_exp(&num) - log_sum_exp(&den)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Frequency-dependent cost exponents modelled on the auditory system:
/// `α` ramps up linearly above 2 kHz, `β` falls along a log-frequency
/// (tonotopic) map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSchedule {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub beta_low: f64,
    pub beta_high: f64,
    pub q: f64,
    pub l: f64,
}

impl Default for ParamSchedule {
    fn default() -> Self {
        Self { alpha_low: 0.2, alpha_high: 0.8, beta_low: 1.0, beta_high: 0.2, q: 16.54, l: 1.0 }
    }
}

impl ParamSchedule {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let vals = [self.alpha_low, self.alpha_high, self.beta_low, self.beta_high, self.q, self.l];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("schedule constants must be finite".into()));
        }
        if self.alpha_high < self.alpha_low {
            return Err(Error::Config("schedule needs alpha_high >= alpha_low".into()));
        }
        if self.beta_high > self.beta_low || self.beta_high <= 0.0 {
            return Err(Error::Config("schedule needs 0 < beta_high <= beta_low".into()));
        }
        if self.q <= 0.0 || self.l <= 0.0 {
            return Err(Error::Config("schedule needs q > 0 and l > 0".into()));
        }
        if sample_rate / 2.0 <= ALPHA_KNEE_HZ {
            return Err(Error::Config(format!(
                "alpha ramp undefined: Nyquist {} Hz is not above {ALPHA_KNEE_HZ} Hz",
                sample_rate / 2.0
            )));
        }
        Ok(())
    }

    pub fn alpha(&self, f: f64, fs: f64) -> Result<f64> {
        let nyquist = fs / 2.0;
        if nyquist <= ALPHA_KNEE_HZ {
            return Err(Error::Config(format!(
                "alpha ramp undefined: Nyquist {nyquist} Hz is not above {ALPHA_KNEE_HZ} Hz"
            )));
        }
        check_frequency(f, fs)?;
        if f <= ALPHA_KNEE_HZ {
            return Ok(self.alpha_low);
        }
        Ok(lerp(self.alpha_low, self.alpha_high, (f - ALPHA_KNEE_HZ) / (nyquist - ALPHA_KNEE_HZ)))
    }

    pub fn beta(&self, f: f64, fs: f64) -> Result<f64> {
        check_frequency(f, fs)?;
        let frac = (f / self.q + self.l).log10() / (fs / (2.0 * self.q) + self.l).log10();
        Ok(lerp(self.beta_low, self.beta_high, frac))
    }

    /// `(α_k, β_k)` for every bin of the geometry.
    pub fn per_bin(&self, geom: &FrameGeometry) -> Result<(Vec<f64>, Vec<f64>)> {
        let fs = f64::from(geom.sample_rate);
        let nyquist = fs / 2.0;
        let mut alphas = Vec::with_capacity(geom.num_bins());
        let mut betas = Vec::with_capacity(geom.num_bins());
        for k in 0..geom.num_bins() {
            // guard the last bin against rounding past Nyquist
            let f = geom.bin_frequency(k).min(nyquist);
            alphas.push(self.alpha(f, fs)?);
            betas.push(self.beta(f, fs)?);
        }
        Ok((alphas, betas))
    }
}

// exact at both ends, unlike `a + t (b − a)`
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

fn check_frequency(f: f64, fs: f64) -> Result<()> {
    if !(f >= 0.0 && f <= fs / 2.0) {
        return Err(Error::Domain(format!("frequency {f} Hz outside [0, {}] Hz", fs / 2.0)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(zeta: f64, gamma: f64, mu: f64, alpha: f64, beta: f64) -> GainContext {
        GainContext { zeta, gamma, mu, alpha, beta, delta_theta: 0.0, tau: 0.0 }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn known_phase_at_zero_argument() {
        let c = ctx(0.5, 1.0, 0.5, 0.0, 1.0).with_phase(PI / 2.0, 0.0);
        let g = gain_known_phase(&c).unwrap();
        assert!(rel(g, 0.5 * (2.0 / PI).sqrt()) < 1e-12, "{g}");
    }

    #[test]
    fn phase_blind_reduces_to_second_moment() {
        let g = gain_phase_blind(&ctx(1.0, 2.0, 1.0, 0.0, 2.0)).unwrap();
        assert!(rel(g, 0.5f64.sqrt()) < 1e-13, "{g}");
    }

    #[test]
    fn phase_blind_ignores_phase() {
        let c = ctx(0.7, 3.0, 1.0, 0.3, 0.6);
        let a = gain_phase_blind(&c.with_phase(0.3, 2.0)).unwrap();
        let b = gain_phase_blind(&c.with_phase(-2.9, 40.0)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn phase_blind_decreases_with_alpha() {
        let lo = gain_phase_blind(&ctx(1.0, 2.0, 1.0, 0.2, 1.0)).unwrap();
        let hi = gain_phase_blind(&ctx(1.0, 2.0, 1.0, 0.8, 1.0)).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn known_phase_prefers_aligned_phase() {
        let c = ctx(1.0, 4.0, 1.0, 0.3, 0.7);
        let aligned = gain_known_phase(&c.with_phase(0.0, 0.0)).unwrap();
        let opposite = gain_known_phase(&c.with_phase(PI, 0.0)).unwrap();
        assert!(aligned > opposite);
    }

    #[test]
    fn extreme_snr_stays_finite() {
        for gamma in [1e-9f64, 1e6, 1e12] {
            for law in [GainLaw::PhaseBlind, GainLaw::KnownPhase] {
                let g = evaluate(law, &ctx(gamma.max(1.0), gamma, 1.0, 0.5, 0.3), 256).unwrap();
                assert!(g.is_finite() && g > 0.0, "{law:?} gamma={gamma}: {g}");
            }
        }
        // high SNR: gain approaches one
        let g = gain_phase_blind(&ctx(1e6, 1e6, 1.0, 0.5, 0.3)).unwrap();
        assert!((g - 1.0).abs() < 1e-3, "{g}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(matches!(gain_phase_blind(&ctx(1.0, 1.0, 0.5, 0.8, 1.0)), Err(Error::Config(_))));
        assert!(matches!(gain_known_phase(&ctx(1.0, 1.0, 1.0, 0.0, 0.0)), Err(Error::Config(_))));
        assert!(matches!(gain_known_phase(&ctx(0.0, 1.0, 1.0, 0.0, 1.0)), Err(Error::Domain(_))));
        let c = ctx(1.0, 1.0, 1.0, 0.0, 1.0).with_phase(0.0, -1.0);
        assert!(matches!(gain_uncertain_phase(&c, 256), Err(Error::Domain(_))));
        assert!(matches!(gain_uncertain_phase(&ctx(1.0, 1.0, 1.0, 0.0, 1.0), 32), Err(Error::Config(_))));
    }

    #[test]
    fn floor() {
        assert!((apply_gain_floor(0.05, -15.0) - 0.177_827_941_003_892_3).abs() < 1e-15);
        assert_eq!(apply_gain_floor(0.5, -15.0), 0.5);
        assert!((apply_gain_floor(0.0, -15.0) - 0.177_827_941_003_892_3).abs() < 1e-15);
    }

    #[test]
    fn schedule_values() {
        let s = ParamSchedule::default();
        assert_eq!(s.alpha(1000.0, 16000.0).unwrap(), 0.2);
        assert_eq!(s.alpha(8000.0, 16000.0).unwrap(), 0.8);
        assert!((s.alpha(5000.0, 16000.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.beta(8000.0, 16000.0).unwrap(), 0.2);
        assert_eq!(s.beta(0.0, 16000.0).unwrap(), 1.0);
        assert!((s.beta(2000.0, 16000.0).unwrap() - 0.378_556_233_705_377_4).abs() < 1e-12);
        assert!(s.alpha(100.0, 4000.0).is_err());
        assert!(s.beta(9000.0, 16000.0).is_err());
    }
}
