//! Secret key rates: the asymptotic formula and the finite-size key length
//! with its epsilon composition.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::bounds::{azuma_delta, binary_entropy, chernoff_delta, Tail};
use crate::channel::{code_mode_rates, multiphoton_detection, PhysicalParams};
use crate::decoy::{
    delta_bias, estimate_fock_counts_finite, transfer, DecoyEpsilons, EstimateFlags, FiniteDecoyInput, FockCountEstimate,
    IntensityModel, PairCounts, Transfer,
};
use crate::error::{domain, Error, Result};

/// Phase error rate from the Y-basis error rate and the coin bias:
/// sin^2(asin sqrt(e_Y) + 2 asin sqrt(Delta)), or 1 once the angle passes pi/2.
pub fn phase_error_rate(e_y: f64, delta_bias: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e_y) || !(0.0..=0.5).contains(&delta_bias) {
        return Err(domain(format!("phase error inputs e_Y={e_y}, bias={delta_bias} out of range")));
    }
    if e_y.sqrt().asin() + 2.0 * delta_bias.sqrt().asin() >= FRAC_PI_2 {
        return Ok(1.0);
    }
    let d = delta_bias;
    let v = e_y + 4.0 * d * (1.0 - d) * (1.0 - 2.0 * e_y) + 4.0 * (1.0 - 2.0 * d) * (d * (1.0 - d) * e_y * (1.0 - e_y)).sqrt();
    Ok(v.clamp(0.0, 1.0))
}

/// Closed form of the generalized Bloch bound on the X_C expectation.
pub fn generalized_bloch_bound(p_z: f64, p_phase: f64) -> f64 {
    let p_y = 1.0 - p_z;
    (p_z - p_y) * (1.0 - 2.0 * p_phase) + 4.0 * (p_z * p_y).sqrt() * (p_phase * (1.0 - p_phase)).sqrt()
}

/// Maximum of z cos(theta) + x sin(theta) over the Bloch disk section at
/// fixed z = 1 - 2p, with cos(theta) = p_Z - p_Y.
pub fn bloch_ellipse_max(p_z: f64, p_phase: f64) -> f64 {
    let p_y = 1.0 - p_z;
    let z = 1.0 - 2.0 * p_phase;
    let (c, s) = (p_z - p_y, 2.0 * (p_z * p_y).sqrt());
    z * c + s * (1.0 - z * z).max(0.0).sqrt()
}

/// Unbiased-coin special case.
pub fn bloch_bound_unbiased(p_phase: f64) -> f64 {
    2.0 * (p_phase * (1.0 - p_phase)).sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RateFlags {
    /// Phase error at or above 1/2.
    pub phase_error_saturated: bool,
    /// Phase-error count bound fell back to N_sif.
    pub vacuous_bound: bool,
    pub decoy: EstimateFlags,
    pub transfer_saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub mu: f64,
    pub t: u8,
    /// Sifted key length; per round for the asymptotic path.
    pub n_sif: f64,
    pub phase_error_upper: f64,
    pub e_ph: f64,
    pub e_z: f64,
    pub e_y: f64,
    pub delta_bias: f64,
    pub lambda_ec: f64,
    pub key_length: f64,
    /// Bits per emitted pulse pair.
    pub rate: f64,
    pub flags: RateFlags,
    pub chain: Option<FiniteChain>,
}

fn key_index(mu: f64, params: &PhysicalParams) -> Result<usize> {
    params
        .intensities
        .iter()
        .position(|&m| m == mu)
        .ok_or_else(|| Error::Params(format!("intensity {mu} not among {:?}", params.intensities)))
}

fn check_t(t: u8) -> Result<()> {
    if t == 1 || t == 2 {
        Ok(())
    } else {
        Err(domain(format!("announcement {t} not in {{1,2}}")))
    }
}

/// Probability per round of a sifted Code-Z detection with both bases Z,
/// inside the slice, per unit slice gain.
fn sifting_factor(params: &PhysicalParams, i_mu: usize) -> f64 {
    let pm = params.intensity_probs[i_mu];
    pm * pm * params.p_code() * params.p_z_code * params.p_z_a * params.p_z_b * params.slice_fraction()
}

/// Returns (e_ph, lambda_EC, key) for a sifted fraction with the given
/// error rates; zero key once e_ph reaches 1/2.
pub fn rate_from_rates(n_sif: f64, e_z: f64, e_y: f64, bias: f64, f_ec: f64) -> Result<(f64, f64, f64)> {
    let e_ph = phase_error_rate(e_y, bias)?;
    let lambda_ec = f_ec * binary_entropy(e_z)? * n_sif;
    let key = if e_ph >= 0.5 { 0.0 } else { (n_sif * (1.0 - binary_entropy(e_ph)?) - lambda_ec).max(0.0) };
    Ok((e_ph, lambda_ec, key))
}

pub fn asymptotic_key_rate(mu: f64, t: u8, params: &PhysicalParams) -> Result<KeyRateResult> {
    params.validate()?;
    check_t(t)?;
    let i_mu = key_index(mu, params)?;
    let rates = code_mode_rates(mu, t, params)?;
    let multi = multiphoton_detection(mu, params)?[usize::from(t - 1)];

    // expected counts per round fed through the decoy transfer
    let model = IntensityModel::from_params(params);
    let pm = params.intensity_probs[i_mu];
    let matched = params.matched_basis_prob();
    let x1_test = pm * pm * matched * params.p_test * multi;
    let code_slice = pm * pm * matched * params.p_code() * params.slice_fraction() * rates.gain;
    let bias = if code_slice > 0.0 {
        delta_bias(&FockCountEstimate::from_multiphoton(x1_test), code_slice, &model, None)?.delta_bias
    } else {
        0.5
    };

    let n_sif = sifting_factor(params, i_mu) * rates.gain;
    let (e_ph, lambda_ec, key) = rate_from_rates(n_sif, rates.e_z, rates.e_y, bias, params.f_ec)?;
    let saturated = e_ph >= 0.5;
    Ok(KeyRateResult {
        mu,
        t,
        n_sif,
        phase_error_upper: e_ph * n_sif,
        e_ph,
        e_z: rates.e_z,
        e_y: rates.e_y,
        delta_bias: bias,
        lambda_ec,
        key_length: key,
        rate: key,
        flags: RateFlags { phase_error_saturated: saturated, ..Default::default() },
        chain: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub t1: KeyRateResult,
    pub t2: KeyRateResult,
    pub total: f64,
}

/// Rates for both announcements at the key intensity; `sum_both` false
/// reports t=1 alone as the total.
pub fn total_asymptotic_rate(params: &PhysicalParams, sum_both: bool) -> Result<RateSummary> {
    let mu = params.intensities[0];
    let t1 = asymptotic_key_rate(mu, 1, params)?;
    let t2 = asymptotic_key_rate(mu, 2, params)?;
    let total = if sum_both { t1.rate + t2.rate } else { t1.rate };
    Ok(RateSummary { t1, t2, total })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonBudget {
    pub pa: f64,
    pub x1: f64,
    pub ya_perp: f64,
    pub za_perp: f64,
    pub ya_par: f64,
    pub za_par: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub tc: f64,
    pub pairs: [[f64; 3]; 3],
    pub low: f64,
}

/// Number of estimates sharing the default budget.
pub const ESTIMATE_COUNT: usize = 18;

impl EpsilonBudget {
    pub fn uniform(each: f64, pa: f64) -> Self {
        EpsilonBudget {
            pa,
            x1: each,
            ya_perp: each,
            za_perp: each,
            ya_par: each,
            za_par: each,
            c_lower: each,
            c_upper: each,
            tc: each,
            pairs: [[each; 3]; 3],
            low: each,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pa, self.x1, self.ya_perp, self.za_perp, self.ya_par, self.za_par, self.c_lower, self.c_upper, self.tc, self.low];
        if all.iter().chain(self.pairs.iter().flatten()).any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Params("every epsilon must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Failure probability of the X_C = 1 estimate.
    pub fn estimate(&self) -> f64 {
        self.tc + 2.0 * self.pairs.iter().flatten().sum::<f64>() + self.low
    }

    pub fn parameter_estimation(&self) -> f64 {
        self.x1 + self.ya_perp + self.za_perp + self.ya_par + self.za_par + self.c_lower + self.c_upper + self.estimate()
    }

    pub fn secrecy(&self) -> f64 {
        2f64.sqrt() * (self.pa + self.parameter_estimation()).sqrt()
    }
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        EpsilonBudget::uniform(1e-10 / ESTIMATE_COUNT as f64, 1e-10)
    }
}

/// Matched-basis Code-Z detections inside the slice at the key pair, for
/// one announcement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeObservation {
    /// Both bases Z: the sifted key.
    pub zz: f64,
    /// Bit errors among `zz`.
    pub zz_err: f64,
    pub yy: f64,
    /// Y-basis rounds with differing bits.
    pub yy_perp: f64,
    /// Y-basis rounds with equal bits.
    pub yy_par: f64,
}

impl CodeObservation {
    pub fn total(&self) -> f64 {
        self.zz + self.yy
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.zz, self.zz_err, self.yy, self.yy_perp, self.yy_par];
        if v.iter().any(|c| !(*c >= 0.0)) || self.zz_err > self.zz || (self.yy_perp + self.yy_par - self.yy).abs() > 1e-9 * self.yy.max(1.0) {
            return Err(domain(format!("inconsistent Code-mode counts {self:?}")));
        }
        Ok(())
    }
}

/// Everything the finite path consumes for one (key intensity, t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyCounts {
    pub n_rounds: f64,
    pub t: u8,
    /// Matched-basis Test-mode detections per intensity pair.
    pub test_pairs: PairCounts,
    pub code: CodeObservation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteChain {
    pub decoy: FockCountEstimate,
    pub transfer: Transfer,
    pub x1_code_upper: f64,
    pub n_zc: f64,
    pub delta_c_lower: f64,
    pub delta_c_upper: f64,
    pub n_xc_lower: f64,
    pub n_xc_upper: f64,
    pub n_tot_lower: f64,
    pub n_tot_upper: f64,
    /// x1, ya_perp, za_perp, ya_par, za_par
    pub azuma: [f64; 5],
    pub lhs: f64,
    pub rhs_at_bound: f64,
    pub eps_pe: f64,
    pub eps_s: f64,
}

/// Inputs to the Azuma-corrected phase-error inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseErrorProblem {
    pub p_z: f64,
    pub p_z_code: f64,
    pub t: u8,
    pub code: CodeObservation,
    pub x1_code_upper: f64,
    pub n_tot_lower: f64,
    pub n_tot_upper: f64,
    pub azuma: [f64; 5],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseErrorBound {
    pub upper: f64,
    pub lhs: f64,
    pub rhs_at_bound: f64,
    pub vacuous: bool,
}

impl PhaseErrorProblem {
    pub fn lhs(&self) -> f64 {
        let pzc = self.p_z_code;
        let pxc = 1.0 - pzc;
        pzc * self.n_tot_lower - 2.0 * (pzc / pxc) * (self.x1_code_upper + self.n_tot_upper * self.azuma[0])
    }

    pub fn rhs(&self, x: f64) -> f64 {
        let p_z = self.p_z;
        let p_y = 1.0 - p_z;
        let ya_perp = self.azuma[1];
        let (a, u, b, v) = self.weights();
        let n_star = if p_z > p_y { self.n_tot_upper } else { self.n_tot_lower };
        let n_tilde = if p_z >= p_y { self.n_tot_lower } else { self.n_tot_upper };
        let n_sif = self.code.zz;
        let lin = 2.0 * (p_z - p_y) * (self.p_z_code * n_star - (self.code.yy + n_tilde * ya_perp));
        let s1 = (a * (x + u)).max(0.0).sqrt();
        let s2 = (b * (n_sif - x + v)).max(0.0).sqrt();
        lin + 4.0 * (p_z * p_y).sqrt() * (s1 + s2)
    }

    fn weights(&self) -> (f64, f64, f64, f64) {
        let [_, ya_perp, za_perp, ya_par, za_par] = self.azuma;
        let n_hi = self.n_tot_upper;
        let (a_err, a_oth, d_ya_err, d_za_err, d_ya_oth, d_za_oth) = if self.t == 1 {
            (self.code.yy_perp, self.code.yy_par, ya_perp, za_perp, ya_par, za_par)
        } else {
            (self.code.yy_par, self.code.yy_perp, ya_par, za_par, ya_perp, za_perp)
        };
        (a_err + n_hi * d_ya_err, n_hi * d_za_err, a_oth + n_hi * d_ya_oth, n_hi * d_za_oth)
    }

    /// Stationary point of the concave side, clamped to [0, N_sif].
    pub fn argmax(&self) -> f64 {
        let (a, u, b, v) = self.weights();
        let n = self.code.zz;
        if a + b <= 0.0 {
            return 0.0;
        }
        (a * (n + u + v) / (a + b) - u).clamp(0.0, n)
    }

    /// Largest phase-error count consistent with the inequality.
    pub fn solve(&self) -> PhaseErrorBound {
        let n_sif = self.code.zz;
        let lhs = self.lhs();
        if n_sif <= 0.0 {
            return PhaseErrorBound { upper: 0.0, lhs, rhs_at_bound: self.rhs(0.0), vacuous: false };
        }
        let x_star = self.argmax();
        // with zero slack the feasible set is the single point x_star
        let tol = 1e-12 * n_sif;
        if self.rhs(x_star) < lhs - tol {
            return PhaseErrorBound { upper: n_sif, lhs, rhs_at_bound: self.rhs(x_star), vacuous: true };
        }
        if self.rhs(n_sif) >= lhs {
            return PhaseErrorBound { upper: n_sif, lhs, rhs_at_bound: self.rhs(n_sif), vacuous: false };
        }
        let (mut lo, mut hi) = (x_star, n_sif);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if self.rhs(mid) >= lhs {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * n_sif {
                break;
            }
        }
        PhaseErrorBound { upper: hi, lhs, rhs_at_bound: self.rhs(hi), vacuous: false }
    }
}

/// Bounds on the slice's X_C count from the Z_C count; `n_zc / p_z_code`
/// stands in for the unknown number of trials.
fn code_total_bounds(n_zc: f64, p_z_code: f64, budget: &EpsilonBudget) -> Result<(f64, f64, f64, f64)> {
    let trials = (n_zc / p_z_code).max(1.0);
    let lo = chernoff_delta(p_z_code, trials, budget.c_lower, Tail::Upper)?.delta;
    let hi = chernoff_delta(p_z_code, trials, budget.c_upper, Tail::Lower)?.delta;
    let n_xc_lower = (1.0 - p_z_code - lo).max(0.0) / (p_z_code + lo) * n_zc;
    let n_xc_upper = if p_z_code - hi > 0.0 { (1.0 - p_z_code + hi) / (p_z_code - hi) * n_zc } else { f64::INFINITY };
    Ok((lo, hi, n_xc_lower, n_xc_upper))
}

pub fn phase_error_upper_bound_finite(
    counts: &KeyCounts,
    x1_code_upper: f64,
    budget: &EpsilonBudget,
    params: &PhysicalParams,
) -> Result<(PhaseErrorBound, FiniteChainParts)> {
    counts.code.validate()?;
    budget.validate()?;
    check_t(counts.t)?;
    let pzc = params.p_z_code;
    if !(pzc > 0.0 && pzc < 1.0) {
        return Err(Error::Params(format!("finite path needs 0 < p_z_code < 1, got {pzc}")));
    }
    let n_zc = counts.code.total();
    let (dl, du, xl, xu) = code_total_bounds(n_zc, pzc, budget)?;
    let (n_lo, n_hi) = (n_zc + xl, n_zc + xu);
    let az = |e: f64| azuma_delta(n_lo.max(1.0), e);
    let azuma = [az(budget.x1)?, az(budget.ya_perp)?, az(budget.za_perp)?, az(budget.ya_par)?, az(budget.za_par)?];
    let problem = PhaseErrorProblem {
        p_z: params.coin()?.p_z,
        p_z_code: pzc,
        t: counts.t,
        code: counts.code,
        x1_code_upper,
        n_tot_lower: n_lo,
        n_tot_upper: n_hi,
        azuma,
    };
    let bound = problem.solve();
    Ok((bound, FiniteChainParts { n_zc, delta_c_lower: dl, delta_c_upper: du, n_xc_lower: xl, n_xc_upper: xu, azuma }))
}

/// Intermediate values of the phase-error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteChainParts {
    pub n_zc: f64,
    pub delta_c_lower: f64,
    pub delta_c_upper: f64,
    pub n_xc_lower: f64,
    pub n_xc_upper: f64,
    pub azuma: [f64; 5],
}

pub fn finite_key_length(counts: &KeyCounts, budget: &EpsilonBudget, params: &PhysicalParams, mu: f64) -> Result<KeyRateResult> {
    params.validate()?;
    budget.validate()?;
    if key_index(mu, params)? != 0 {
        return Err(Error::Params("the key intensity must be listed first".into()));
    }
    if !(counts.n_rounds >= 1.0) {
        return Err(domain("no rounds"));
    }
    let t = counts.t;
    let model = IntensityModel::from_params(params);
    let test_rounds = counts.n_rounds * params.matched_basis_prob() * model.test_fraction();
    let decoy = estimate_fock_counts_finite(
        &FiniteDecoyInput { counts: counts.test_pairs, test_rounds: Some(test_rounds) },
        &model,
        &DecoyEpsilons { pair: budget.pairs, low: budget.low },
    )?;
    let tr = transfer(&model, decoy.x1_test_upper, Some(budget.tc))?;
    let x1_code = decoy.x1_test_upper * tr.factor;
    let (bound, parts) = phase_error_upper_bound_finite(counts, x1_code, budget, params)?;

    let n_sif = counts.code.zz;
    let e_z = if n_sif > 0.0 { counts.code.zz_err / n_sif } else { 0.0 };
    let e_y = if counts.code.yy > 0.0 {
        (if t == 1 { counts.code.yy_perp } else { counts.code.yy_par }) / counts.code.yy
    } else {
        0.0
    };
    let e_ph = if n_sif > 0.0 { (bound.upper / n_sif).min(1.0) } else { 0.0 };
    let lambda_ec = params.f_ec * binary_entropy(e_z)? * n_sif;
    let raw = n_sif * (1.0 - binary_entropy(e_ph)?) - (2.0 / budget.pa).log2() - lambda_ec;
    let key = if n_sif > 0.0 && !bound.vacuous && e_ph < 0.5 { raw.max(0.0) } else { 0.0 };
    let n_tot = parts.n_zc + parts.n_xc_lower;
    let bias = if n_tot > 0.0 { (x1_code / (1.0 - params.p_z_code) / n_tot).clamp(0.0, 0.5) } else { 0.5 };
    let chain = FiniteChain {
        decoy: decoy.clone(),
        transfer: tr,
        x1_code_upper: x1_code,
        n_zc: parts.n_zc,
        delta_c_lower: parts.delta_c_lower,
        delta_c_upper: parts.delta_c_upper,
        n_xc_lower: parts.n_xc_lower,
        n_xc_upper: parts.n_xc_upper,
        n_tot_lower: parts.n_zc + parts.n_xc_lower,
        n_tot_upper: parts.n_zc + parts.n_xc_upper,
        azuma: parts.azuma,
        lhs: bound.lhs,
        rhs_at_bound: bound.rhs_at_bound,
        eps_pe: budget.parameter_estimation(),
        eps_s: budget.secrecy(),
    };
    Ok(KeyRateResult {
        mu,
        t,
        n_sif,
        phase_error_upper: bound.upper,
        e_ph,
        e_z,
        e_y,
        delta_bias: bias,
        lambda_ec,
        key_length: key,
        rate: key / counts.n_rounds,
        flags: RateFlags {
            phase_error_saturated: e_ph >= 0.5,
            vacuous_bound: bound.vacuous,
            decoy: decoy.flags,
            transfer_saturated: tr.saturated,
        },
        chain: Some(chain),
    })
}

/// Angle helper exposed for plotting: the phase-error rotation in radians.
pub fn phase_error_angle(e_y: f64, delta_bias: f64) -> f64 {
    (e_y.sqrt().asin() + 2.0 * delta_bias.sqrt().asin()).min(PI / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn phase_error_values() {
        assert_abs_diff_eq!(phase_error_rate(0.03, 0.0).unwrap(), 0.03, epsilon = 1e-15);
        let d: f64 = 0.02;
        assert_abs_diff_eq!(phase_error_rate(0.0, d).unwrap(), 4.0 * d * (1.0 - d), epsilon = 1e-15);
        assert_abs_diff_eq!(phase_error_rate(0.01, 0.001).unwrap(), 0.026470, epsilon = 1e-6);
        assert_eq!(phase_error_rate(0.4, 0.2).unwrap(), 1.0);
        assert!(phase_error_rate(0.1, 0.6).is_err());
    }

    #[test]
    fn phase_error_is_rotation() {
        for (e, d) in [(0.01, 0.001), (0.2, 0.05), (0.0, 0.3)] {
            let a = phase_error_angle(e, d);
            assert_abs_diff_eq!(phase_error_rate(e, d).unwrap(), a.sin().powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn bloch_forms() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            assert_abs_diff_eq!(generalized_bloch_bound(0.5, p), bloch_bound_unbiased(p), epsilon = 1e-12);
            assert_abs_diff_eq!(generalized_bloch_bound(0.3, p), bloch_ellipse_max(0.3, p), epsilon = 1e-12);
        }
    }

    #[test]
    fn lossless_noiseless_rate() {
        assert_eq!(rate_from_rates(0.37, 0.0, 0.0, 0.0, 1.1).unwrap(), (0.0, 0.0, 0.37));
        let p = PhysicalParams { distance_km: 0.0, eta_det: 1.0, p_dark: 0.0, ..PhysicalParams::default() };
        let r = asymptotic_key_rate(p.intensities[0], 1, &p).unwrap();
        let want = r.n_sif * (1.0 - binary_entropy(r.e_ph).unwrap()) - r.lambda_ec;
        assert_abs_diff_eq!(r.rate, want, epsilon = 1e-18);
        assert!(r.rate > 0.0);
    }

    #[test]
    fn sqrt_eta_ratio() {
        let base = PhysicalParams::default();
        let a = asymptotic_key_rate(0.0012, 1, &base.with_distance(300.0)).unwrap().rate;
        let b = asymptotic_key_rate(0.0012, 1, &base.with_distance(400.0)).unwrap().rate;
        assert!((b / a / (-1f64).exp() - 1.0).abs() < 0.05, "{}", b / a);
    }

    #[test]
    fn unknown_intensity_rejected() {
        assert!(asymptotic_key_rate(0.5, 1, &PhysicalParams::default()).is_err());
        assert!(asymptotic_key_rate(0.0012, 3, &PhysicalParams::default()).is_err());
    }

    fn zero_delta_problem(n_sif: f64, e_y: f64, bias: f64, t: u8) -> PhaseErrorProblem {
        let pzc = 0.5;
        let n_zc = 2.0 * n_sif;
        let n_tot = n_zc / pzc;
        let err = e_y * n_sif;
        let code = CodeObservation {
            zz: n_sif,
            zz_err: 0.0,
            yy: n_sif,
            yy_perp: if t == 1 { err } else { n_sif - err },
            yy_par: if t == 1 { n_sif - err } else { err },
        };
        PhaseErrorProblem {
            p_z: 0.5,
            p_z_code: pzc,
            t,
            code,
            x1_code_upper: bias * (1.0 - pzc) * n_tot,
            n_tot_lower: n_tot,
            n_tot_upper: n_tot,
            azuma: [0.0; 5],
        }
    }

    #[test]
    fn finite_bound_reduces_to_asymptotic() {
        for t in [1u8, 2] {
            for (e, d) in [(0.01, 0.001), (0.03, 0.01), (0.1, 0.0)] {
                let pr = zero_delta_problem(1e6, e, d, t);
                let b = pr.solve();
                let want = phase_error_rate(e, d).unwrap();
                // zero bias is a tangency, resolvable only to ~sqrt(machine eps)
                let tol = if d == 0.0 { 1e-7 } else { 1e-9 };
                assert!((b.upper / 1e6 / want - 1.0).abs() < tol, "{} vs {}", b.upper / 1e6, want);
                assert!((b.rhs_at_bound - b.lhs).abs() < 1e-9 * 1e6);
            }
        }
    }

    #[test]
    fn zero_errors_zero_bias_zero_bound() {
        let b = zero_delta_problem(1e5, 0.0, 0.0, 1).solve();
        assert!(b.upper < 1e-6, "{}", b.upper);
    }

    #[test]
    fn saturated_and_vacuous() {
        // past pi/2 the whole range is feasible
        let b = zero_delta_problem(1e5, 0.2, 0.4, 1).solve();
        assert!(!b.vacuous);
        assert_eq!(b.upper, 1e5);
        let mut pr = zero_delta_problem(1e5, 0.02, 0.01, 1);
        pr.code.yy = 0.0;
        pr.code.yy_perp = 0.0;
        pr.code.yy_par = 0.0;
        let b = pr.solve();
        assert!(b.vacuous);
        assert_eq!(b.upper, 1e5);
    }

    #[test]
    fn budget_composition() {
        let b = EpsilonBudget::default();
        let each = 1e-10 / 18.0;
        assert_abs_diff_eq!(b.parameter_estimation(), 7.0 * each + each + 18.0 * each + each, epsilon = 1e-24);
        assert_abs_diff_eq!(b.secrecy(), (2.0 * (1e-10 + b.parameter_estimation())).sqrt(), epsilon = 1e-20);
        assert!(EpsilonBudget::uniform(0.0, 0.1).validate().is_err());
    }

    #[test]
    fn empty_sifted_key() {
        let p = PhysicalParams::default();
        let counts = KeyCounts { n_rounds: 1e6, t: 1, test_pairs: [[10.0; 3]; 3], code: CodeObservation::default() };
        let r = finite_key_length(&counts, &EpsilonBudget::default(), &p, p.intensities[0]).unwrap();
        assert_eq!(r.key_length, 0.0);
    }
}
