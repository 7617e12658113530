//! Browser bindings. Each export returns a JSON string; the plain `*_json`
//! functions hold the logic so they run under native tests too.

use num_complex::Complex64 as C64;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use tfqkd::channel::{plob_bound_with, PhysicalParams};
use tfqkd::fock::FockVector;
use tfqkd::keyrate::{phase_error_angle, phase_error_rate, total_asymptotic_rate};

const MAX_POINTS: usize = 2000;

#[derive(Serialize)]
struct ScanPoint {
    l_km: f64,
    rate: f64,
    plob: f64,
    e_z: f64,
    delta_bias: f64,
}

/// Asymptotic rate and PLOB over [l_min, l_max] at key intensity `mu`.
pub fn rate_scan_json(l_min: f64, l_max: f64, points: usize, mu: f64, eta_det: f64) -> Result<String, String> {
    if !((2..=MAX_POINTS).contains(&points) && l_max > l_min && l_min >= 0.0) {
        return Err(format!("need 0 <= l_min < l_max and 2..={MAX_POINTS} points"));
    }
    let mut base = PhysicalParams { eta_det, ..PhysicalParams::default() };
    if base.intensities[1..].contains(&mu) {
        return Err(format!("mu={mu} collides with a decoy intensity"));
    }
    base.intensities[0] = mu;
    base.validate().map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let l = l_min + (l_max - l_min) * i as f64 / (points - 1) as f64;
        let p = base.with_distance(l);
        let s = total_asymptotic_rate(&p, true).map_err(|e| e.to_string())?;
        let plob = if l > 0.0 { plob_bound_with(l, p.alpha, p.loss_model).map_err(|e| e.to_string())? } else { f64::INFINITY };
        out.push(ScanPoint { l_km: l, rate: s.total, plob, e_z: s.t1.e_z, delta_bias: s.t1.delta_bias });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BeamSplitterView {
    /// P(n_c, n_d) for n_c, n_d <= shown
    joint: Vec<Vec<f64>>,
    mean_c: f64,
    mean_d: f64,
    /// Fidelity with |(a+b)/sqrt2>|(a-b)/sqrt2>.
    fidelity: f64,
    leakage: f64,
}

/// Two coherent inputs through the 50:50 splitter.
pub fn beam_splitter_json(a_abs: f64, a_phase: f64, b_abs: f64, b_phase: f64, cutoff: usize) -> Result<String, String> {
    if !(1..=16).contains(&cutoff) || !(a_abs >= 0.0 && b_abs >= 0.0) {
        return Err("cutoff must be 1..=16 and amplitudes non-negative".into());
    }
    let a = C64::from_polar(a_abs, a_phase);
    let b = C64::from_polar(b_abs, b_phase);
    let out = FockVector::coherent(a, cutoff)
        .tensor(&FockVector::coherent(b, cutoff))
        .beam_splitter(0, 1)
        .map_err(|e| e.to_string())?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let want = FockVector::coherent((a + b) * s, cutoff).tensor(&FockVector::coherent((a - b) * s, cutoff));
    let shown = cutoff.min(6);
    let mut joint = vec![vec![0.0; shown + 1]; shown + 1];
    let (mut mean_c, mut mean_d) = (0.0, 0.0);
    for (k, p) in out.occupation_distribution(&[0, 1]).map_err(|e| e.to_string())? {
        mean_c += k[0] as f64 * p;
        mean_d += k[1] as f64 * p;
        if k[0] <= shown && k[1] <= shown {
            joint[k[0]][k[1]] = p;
        }
    }
    let view = BeamSplitterView {
        joint,
        mean_c,
        mean_d,
        fidelity: out.fidelity(&want).map_err(|e| e.to_string())?,
        leakage: out.leakage(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PhaseErrorView {
    e_ph: f64,
    angle: f64,
    /// (delta, e_ph) at fixed e_Y
    curve: Vec<(f64, f64)>,
}

/// Phase error for a Y-basis error rate and a bias, plus the curve in bias.
pub fn phase_error_json(e_y: f64, delta: f64) -> Result<String, String> {
    let e_ph = phase_error_rate(e_y, delta).map_err(|e| e.to_string())?;
    let curve = (0..=100)
        .map(|i| {
            let d = 0.5 * i as f64 / 100.0;
            phase_error_rate(e_y, d).map(|v| (d, v)).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    serde_json::to_string(&PhaseErrorView { e_ph, angle: phase_error_angle(e_y, delta), curve }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn rate_scan(l_min: f64, l_max: f64, points: usize, mu: f64, eta_det: f64) -> Result<String, JsError> {
    rate_scan_json(l_min, l_max, points, mu, eta_det).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn beam_splitter(a_abs: f64, a_phase: f64, b_abs: f64, b_phase: f64, cutoff: usize) -> Result<String, JsError> {
    beam_splitter_json(a_abs, a_phase, b_abs, b_phase, cutoff).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn phase_error(e_y: f64, delta: f64) -> Result<String, JsError> {
    phase_error_json(e_y, delta).map_err(|e| JsError::new(&e))
}
