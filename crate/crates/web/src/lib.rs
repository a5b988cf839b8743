//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Every export returns a flat `Vec<f64>`; the page slices it by the
//! documented layout. Errors surface as JS exceptions carrying the message.

use std::f64::consts::PI;

use phasestsa::gains::{gain_known_phase, gain_phase_blind, gain_uncertain_phase_bessel, GainContext, ParamSchedule};
use phasestsa::Result;
use wasm_bindgen::prelude::*;

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn js_err(e: phasestsa::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn bad(msg: &str) -> phasestsa::Error {
    phasestsa::Error::Input(msg.into())
}

#[wasm_bindgen(js_name = gainCurves)]
pub fn gain_curves_js(
    zeta_db: f64,
    mu: f64,
    alphas: &[f64],
    betas: &[f64],
    lo_db: f64,
    hi_db: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    gain_curves(zeta_db, mu, alphas, betas, lo_db, hi_db, points).map_err(js_err)
}

#[wasm_bindgen(js_name = gainVsPhase)]
pub fn gain_vs_phase_js(
    zeta_db: f64,
    gamma_db: f64,
    mu: f64,
    alpha: f64,
    beta: f64,
    tau: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    gain_vs_phase(zeta_db, gamma_db, mu, alpha, beta, tau, points).map_err(js_err)
}

#[wasm_bindgen(js_name = schedules)]
pub fn schedules_js(sample_rate: f64, points: usize) -> Result<Vec<f64>, JsError> {
    schedules(sample_rate, points).map_err(js_err)
}

/// Phase-blind gain in dB over `points` instantaneous SNRs spanning
/// `[lo_db, hi_db]`, at a-priori SNR `zeta_db`.
///
/// Layout: the SNR axis first, then one block of `points` values per
/// `(alpha, beta)` pair, alphas outermost.
pub fn gain_curves(
    zeta_db: f64,
    mu: f64,
    alphas: &[f64],
    betas: &[f64],
    lo_db: f64,
    hi_db: f64,
    points: usize,
) -> Result<Vec<f64>> {
    if points < 2 || hi_db.partial_cmp(&lo_db) != Some(std::cmp::Ordering::Greater) {
        return Err(bad("need at least two points over a non-empty range"));
    }
    let axis: Vec<f64> = (0..points).map(|i| lo_db + (hi_db - lo_db) * i as f64 / (points - 1) as f64).collect();
    let mut out = axis.clone();
    for &alpha in alphas {
        for &beta in betas {
            for &snr in &axis {
                let ctx = GainContext {
                    zeta: db_to_power(zeta_db),
                    gamma: 1.0 + db_to_power(snr),
                    mu,
                    alpha,
                    beta,
                    delta_theta: 0.0,
                    tau: 0.0,
                };
                out.push(20.0 * gain_phase_blind(&ctx)?.log10());
            }
        }
    }
    Ok(out)
}

/// Gain in dB against the phase deviation over `[-π, π]`.
///
/// Layout: the Δθ axis, then the known-phase curve, the uncertain-phase
/// curve at concentration `tau`, and the phase-blind level repeated.
pub fn gain_vs_phase(
    zeta_db: f64,
    gamma_db: f64,
    mu: f64,
    alpha: f64,
    beta: f64,
    tau: f64,
    points: usize,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(bad("need at least two points"));
    }
    let base = GainContext {
        zeta: db_to_power(zeta_db),
        gamma: db_to_power(gamma_db),
        mu,
        alpha,
        beta,
        delta_theta: 0.0,
        tau: 0.0,
    };
    let axis: Vec<f64> = (0..points).map(|i| -PI + 2.0 * PI * i as f64 / (points - 1) as f64).collect();
    let db = |g: f64| 20.0 * g.log10();
    let blind = db(gain_phase_blind(&base)?);
    let mut out = axis.clone();
    for &d in &axis {
        out.push(db(gain_known_phase(&base.with_phase(d, 0.0))?));
    }
    for &d in &axis {
        out.push(db(gain_uncertain_phase_bessel(&base.with_phase(d, tau))?));
    }
    out.extend(std::iter::repeat_n(blind, points));
    Ok(out)
}

/// Auditory α and β schedules from 0 Hz to Nyquist.
///
/// Layout: frequency axis, α values, β values.
pub fn schedules(sample_rate: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(bad("need at least two points"));
    }
    let s = ParamSchedule::default();
    let nyquist = sample_rate / 2.0;
    let axis: Vec<f64> = (0..points).map(|i| nyquist * i as f64 / (points - 1) as f64).collect();
    let mut out = axis.clone();
    for &f in &axis {
        out.push(s.alpha(f, sample_rate)?);
    }
    for &f in &axis {
        out.push(s.beta(f, sample_rate)?);
    }
    Ok(out)
}
