//! Shared test fixtures.
//!
//! The brute-force posterior moments touch none of the special-function
//! kernels: the amplitude integral uses exp-sinh quadrature (which absorbs the
//! algebraic singularity at A = 0) and the phase integral a plain periodic
//! trapezoid rule.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use phasestsa::gains::GainContext;

#[derive(Debug, Clone, Copy)]
pub enum PhasePrior {
    /// Clean phase known exactly.
    Known,
    /// Uniform over the circle.
    Uniform,
    /// von Mises with this concentration.
    VonMises(f64),
}

pub struct OracleGrid {
    /// exp-sinh step
    pub h: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// phase nodes
    pub phase_nodes: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self { h: 1.0 / 24.0, t_lo: -10.5, t_hi: 3.5, phase_nodes: 384 }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Â/R from `(E{A^(β−2α)} / E{A^(−2α)})^(1/β)` with the generalized-Gamma
/// amplitude prior, a Gaussian likelihood and the given phase prior, with
/// σ = 1 and the observed phase at 0.
pub fn oracle_gain(ctx: &GainContext, prior: PhasePrior, grid: &OracleGrid) -> f64 {
    let GainContext { zeta, gamma, mu, alpha, beta, delta_theta, .. } = *ctx;
    let r = gamma.sqrt();
    // prior on A: A^(2μ−1) exp(−μ A²/ζ); likelihood exp(−|Y − A e^{jθ}|²)
    let c = 1.0 + mu / zeta;
    let scale = (1.0 + r) / c.sqrt();
    let m1 = beta - 2.0 * alpha;
    let m0 = -2.0 * alpha;
    let theta_est = -delta_theta;

    let thetas: Vec<(f64, f64)> = match prior {
        PhasePrior::Known => vec![(theta_est, 0.0)],
        PhasePrior::Uniform => (0..grid.phase_nodes)
            .map(|j| (-PI + 2.0 * PI * j as f64 / grid.phase_nodes as f64, 0.0))
            .collect(),
        PhasePrior::VonMises(tau) => (0..grid.phase_nodes)
            .map(|j| {
                let th = -PI + 2.0 * PI * j as f64 / grid.phase_nodes as f64;
                (th, tau * (th - theta_est).cos())
            })
            .collect(),
    };

    let steps = ((grid.t_hi - grid.t_lo) / grid.h).round() as usize;
    let mut num = Vec::with_capacity(steps * thetas.len());
    let mut den = Vec::with_capacity(steps * thetas.len());
    for i in 0..=steps {
        let t = grid.t_lo + grid.h * i as f64;
        let ln_a = scale.ln() + 0.5 * PI * t.sinh();
        let a = ln_a.exp();
        // dA = A (π/2) cosh t dt
        let ln_jac = ln_a + (0.5 * PI * t.cosh()).ln();
        let base = (2.0 * mu - 1.0) * ln_a - c * a * a + ln_jac;
        for &(th, log_prior) in &thetas {
            let l = base + 2.0 * r * a * th.cos() + log_prior;
            num.push(l + m1 * ln_a);
            den.push(l + m0 * ln_a);
        }
    }
    ((log_sum_exp(&num) - log_sum_exp(&den)) / beta).exp() / r
}

/// A random context inside the region the gain laws accept, kept 0.1 away
/// from its boundary: as `2μ − 2α → 0` the posterior piles up at `A = 0` and
/// no fixed grid resolves it.
pub fn random_context<R: rand::Rng>(rng: &mut R) -> GainContext {
    loop {
        let mu = rng.gen_range(0.3..2.0);
        let alpha = rng.gen_range(-0.5..0.9);
        let beta = rng.gen_range(0.1..2.0);
        if !(2.0 * mu - 2.0 * alpha >= 0.1 && beta - 2.0 * alpha + 2.0 * mu >= 0.1) {
            continue;
        }
        let zeta = 10f64.powf(rng.gen_range(-2.0..2.0));
        let gamma = 10f64.powf(rng.gen_range(-1.5..1.7));
        let delta_theta = rng.gen_range(-PI..PI);
        return GainContext { zeta, gamma, mu, alpha, beta, delta_theta, tau: 0.0 };
    }
}

pub fn rel_err(got: f64, expect: f64) -> f64 {
    ((got - expect) / expect).abs()
}

/// Deterministic speech-like test signal: a gliding 110–170 Hz harmonic
/// series shaped by three moving formant resonances, under a 3 Hz syllabic
/// envelope that reaches silence between syllables.
pub fn harmonic_speech(fs: f64, seconds: f64) -> Vec<f64> {
    let n = (fs * seconds) as usize;
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let f0 = 140.0 + 30.0 * (2.0 * PI * 0.7 * t).sin();
            phase += 2.0 * PI * f0 / fs;
            let envelope = (0.5 - 0.5 * (2.0 * PI * 3.0 * t).cos()).powi(2);
            let f1 = 500.0 + 200.0 * (2.0 * PI * 1.3 * t).sin();
            let f2 = 1500.0 + 400.0 * (2.0 * PI * 0.9 * t).sin();
            let voice: f64 = (1..=50)
                .map(|h| (h, f0 * h as f64))
                .filter(|&(_, f)| f <= 7000.0)
                .map(|(h, f)| {
                    let peak = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
                    let amp = peak(f1, 120.0) + 0.5 * peak(f2, 200.0) + 0.2 * peak(2800.0, 300.0) + 0.02;
                    amp * (h as f64 * phase + 0.3 * h as f64).sin()
                })
                .sum();
            envelope * voice
        })
        .collect()
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// A stationary harmonic with constant `f0`.
pub fn harmonic_tone(fs: f64, f0: f64, harmonics: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            (1..=harmonics)
                .map(|h| (2.0 * PI * f0 * h as f64 * t + 0.7 * h as f64).sin() / h as f64)
                .sum()
        })
        .collect()
}

/// Uniform noise in [−1, 1) from a 64-bit xorshift, reproducible outside Rust.
pub fn xorshift_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

pub fn read_table(name: &str) -> Vec<Vec<f64>> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Brute-force `ln( 1/Gamma(p) int_0^inf t^(p-1) exp(-t^2/2 - z t) dt )` by
/// composite Simpson. On `[0, 1]` the substitution `u = t^f`, with `f` the
/// fractional part of `p`, removes the endpoint singularity.
pub fn oracle_ln_pcf(p: f64, z: f64, ln_gamma_p: f64) -> f64 {
    let log_f = |t: f64| (p - 1.0) * t.ln() - 0.5 * t * t - z * t;
    let t_hi = (-z).max(0.0) + 40.0 + p.sqrt() * 4.0;
    let coarse = 20_000;
    let grid = |i: usize| t_hi * i as f64 / coarse as f64;
    let peak = (1..=coarse).map(|i| log_f(grid(i))).fold(f64::NEG_INFINITY, f64::max);
    let last_alive = (1..=coarse).map(grid).filter(|&t| log_f(t) > peak - 60.0).fold(0.0, f64::max);
    let upper = (last_alive + 2.0 * t_hi / coarse as f64).max(1.0);
    let n = 400_000;

    let frac = if p.fract() == 0.0 { 1.0 } else { p.fract() };
    let whole = p - frac;
    // t^(p-1) dt = t^whole * t^(frac-1) dt = t^whole du / frac
    let head = simpson(
        |u: f64| {
            if u == 0.0 {
                return if whole == 0.0 { (-peak).exp() / frac } else { 0.0 };
            }
            let t = u.powf(1.0 / frac);
            (whole * t.ln() - 0.5 * t * t - z * t - peak).exp() / frac
        },
        0.0,
        1.0,
        n,
    );
    let tail = simpson(|t: f64| (log_f(t) - peak).exp(), 1.0, upper, n);
    (head + tail).ln() + peak - ln_gamma_p
}

/// Direct power series of M(a, 1, x) in exact rational arithmetic.
pub fn exact_kummer(a: BigRational, x: BigRational) -> f64 {
    let mut term = BigRational::from_integer(BigInt::from(1));
    let mut sum = term.clone();
    let tiny = BigRational::new(BigInt::from(1), BigInt::from(10).pow(40));
    for n in 0..1000u32 {
        let nr = BigRational::from_integer(BigInt::from(n));
        let np1 = BigRational::from_integer(BigInt::from(n + 1));
        term = term * (a.clone() + nr) * x.clone() / (np1.clone() * np1);
        sum += term.clone();
        if n > 120 && (term.abs() < tiny.clone() * sum.abs() || term.is_zero()) {
            break;
        }
    }
    sum.to_f64().unwrap()
}

