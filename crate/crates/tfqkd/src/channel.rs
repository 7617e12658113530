//! Honest-relay physics: threshold detectors behind a 50:50 beam splitter at
//! the midpoint between Alice and Bob.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::FockVector;
use crate::states::{Basis, CoinDecomposition};

/// Simpson nodes used for slice averages.
pub const SLICE_NODES: usize = 129;
/// Trapezoid nodes used for full-circle phase averages.
pub const CIRCLE_NODES: usize = 512;
/// Largest per-side photon number accepted by the Fock yield routines.
pub const MAX_FOCK_INPUT: usize = 12;

/// How attenuation in dB/km is turned into a transmission.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossModel {
    /// exp(-alpha L / 10)
    #[default]
    Natural,
    /// 10^(-alpha L / 10)
    Decibel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Fiber attenuation, dB/km.
    pub alpha: f64,
    /// Alice-Bob distance, km.
    pub distance_km: f64,
    pub eta_det: f64,
    /// Dark count probability per pulse per detector.
    pub p_dark: f64,
    /// Width of the post-selected phase slice, radians.
    pub slice_width: f64,
    /// Index 0 is the key intensity.
    pub intensities: [f64; 3],
    pub intensity_probs: [f64; 3],
    pub p_test: f64,
    /// Probability of Z_C within the Code mode.
    pub p_z_code: f64,
    pub p_z_a: f64,
    pub p_z_b: f64,
    pub f_ec: f64,
    /// Probability that the detector labels are swapped.
    pub misalignment: f64,
    pub loss_model: LossModel,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            alpha: 0.2,
            distance_km: 100.0,
            eta_det: 0.8,
            p_dark: 1e-11,
            slice_width: 2.0 * PI / 8.0,
            intensities: [0.0012, 0.0003, 0.0],
            intensity_probs: [0.8, 0.1, 0.1],
            p_test: 0.5,
            p_z_code: 0.5,
            p_z_a: 0.5,
            p_z_b: 0.5,
            f_ec: 1.1,
            misalignment: 0.0,
            loss_model: LossModel::Natural,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Params(format!("{name}={v} not in [0,1]")));
    }
    Ok(())
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        unit("eta_det", self.eta_det)?;
        unit("p_dark", self.p_dark)?;
        unit("p_test", self.p_test)?;
        unit("p_z_code", self.p_z_code)?;
        unit("p_z_a", self.p_z_a)?;
        unit("p_z_b", self.p_z_b)?;
        unit("misalignment", self.misalignment)?;
        for p in self.intensity_probs {
            unit("intensity probability", p)?;
        }
        let s: f64 = self.intensity_probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Params(format!("intensity probabilities sum to {s}")));
        }
        if !(self.alpha >= 0.0) || !(self.distance_km >= 0.0) {
            return Err(Error::Params("alpha and distance must be >= 0".into()));
        }
        if !(self.slice_width > 0.0 && self.slice_width <= 2.0 * PI) {
            return Err(Error::Params(format!("slice width {} not in (0, 2pi]", self.slice_width)));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::Params(format!("f_ec={} < 1", self.f_ec)));
        }
        for (i, &m) in self.intensities.iter().enumerate() {
            if !(m >= 0.0) {
                return Err(Error::Params(format!("intensity {m} < 0")));
            }
            if self.intensities[..i].contains(&m) {
                return Err(Error::Params(format!("intensity {m} repeated")));
            }
        }
        Ok(())
    }

    pub fn p_code(&self) -> f64 {
        1.0 - self.p_test
    }

    pub fn p_x_code(&self) -> f64 {
        1.0 - self.p_z_code
    }

    pub fn basis_prob_a(&self, b: Basis) -> f64 {
        match b {
            Basis::Z => self.p_z_a,
            Basis::Y => 1.0 - self.p_z_a,
        }
    }

    pub fn basis_prob_b(&self, b: Basis) -> f64 {
        match b {
            Basis::Z => self.p_z_b,
            Basis::Y => 1.0 - self.p_z_b,
        }
    }

    /// Probability that Alice and Bob pick the same basis.
    pub fn matched_basis_prob(&self) -> f64 {
        self.p_z_a * self.p_z_b + (1.0 - self.p_z_a) * (1.0 - self.p_z_b)
    }

    pub fn coin(&self) -> Result<CoinDecomposition> {
        CoinDecomposition::from_basis_probs(self.p_z_a, self.p_z_b)
    }

    /// Fraction of uniformly distributed relative phases inside the slice.
    pub fn slice_fraction(&self) -> f64 {
        self.slice_width / (2.0 * PI)
    }

    pub fn with_distance(&self, km: f64) -> Self {
        PhysicalParams { distance_km: km, ..self.clone() }
    }
}

/// Channel transmission over `km` kilometres.
pub fn transmission(km: f64, alpha: f64, model: LossModel) -> f64 {
    match model {
        LossModel::Natural => (-alpha * km / 10.0).exp(),
        LossModel::Decibel => 10f64.powf(-alpha * km / 10.0),
    }
}

/// Detector efficiency times the transmission of one L/2 arm.
pub fn arm_transmissivity(params: &PhysicalParams) -> f64 {
    params.eta_det * transmission(params.distance_km / 2.0, params.alpha, params.loss_model)
}

/// Repeaterless bound -log2(1 - exp(-alpha L / 10)), bits per channel use.
pub fn plob_bound(distance_km: f64, alpha: f64) -> Result<f64> {
    plob_bound_with(distance_km, alpha, LossModel::Natural)
}

pub fn plob_bound_with(distance_km: f64, alpha: f64, model: LossModel) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(domain(format!("PLOB diverges at distance {distance_km}")));
    }
    let eta = transmission(distance_km, alpha, model);
    Ok(-(-eta).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClickStats {
    pub p_t1: f64,
    pub p_t2: f64,
    pub p_none: f64,
    /// Both detectors fired; already split evenly into p_t1 and p_t2.
    pub p_double: f64,
    /// Mean photon numbers reaching D1 and D2.
    pub mean_d1: f64,
    pub mean_d2: f64,
    /// Announcement probability with no light at all.
    pub p_dark_only: f64,
}

impl ClickStats {
    pub fn p_t(&self, t: u8) -> f64 {
        if t == 1 {
            self.p_t1
        } else {
            self.p_t2
        }
    }
}

fn click_prob(mean: f64, p_dark: f64) -> f64 {
    -(-mean).exp_m1() + p_dark * (-mean).exp()
}

fn announce(q1: f64, q2: f64, misalignment: f64) -> (f64, f64, f64) {
    let dbl = q1 * q2;
    let t1 = q1 * (1.0 - q2) + 0.5 * dbl;
    let t2 = q2 * (1.0 - q1) + 0.5 * dbl;
    let (t1, t2) = ((1.0 - misalignment) * t1 + misalignment * t2, (1.0 - misalignment) * t2 + misalignment * t1);
    (t1, t2, dbl)
}

/// Click statistics for coherent pulses with relative phase `phi` between
/// Alice's and Bob's signals.
pub fn click_stats(phi: f64, mu_a: f64, mu_b: f64, params: &PhysicalParams) -> ClickStats {
    let eta = arm_transmissivity(params);
    let cross = 2.0 * (mu_a * mu_b).sqrt() * phi.cos();
    let n1 = (0.5 * eta * (mu_a + mu_b + cross)).max(0.0);
    let n2 = (0.5 * eta * (mu_a + mu_b - cross)).max(0.0);
    let pd = params.p_dark;
    let (q1, q2) = (click_prob(n1, pd), click_prob(n2, pd));
    let (t1, t2, dbl) = announce(q1, q2, params.misalignment);
    let none = (1.0 - q1) * (1.0 - q2);
    let dark = 2.0 * pd * (1.0 - pd) + pd * pd;
    ClickStats { p_t1: t1, p_t2: t2, p_none: none, p_double: dbl, mean_d1: n1, mean_d2: n2, p_dark_only: dark }
}

/// Composite Simpson average of `f` over [-width/2, width/2].
pub fn slice_average(width: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = SLICE_NODES - 1;
    let h = width / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = -0.5 * width + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * f(x);
    }
    s * h / 3.0 / width
}

/// Trapezoid average of a 2pi-periodic `f` over the circle.
pub fn circle_average(f: impl Fn(f64) -> f64) -> f64 {
    let n = CIRCLE_NODES;
    (0..n).map(|i| f(2.0 * PI * i as f64 / n as f64)).sum::<f64>() / n as f64
}

/// Announcement probabilities averaged over a uniformly random relative phase.
pub fn phase_averaged_clicks(mu_a: f64, mu_b: f64, params: &PhysicalParams) -> [f64; 2] {
    [
        circle_average(|p| click_stats(p, mu_a, mu_b, params).p_t1),
        circle_average(|p| click_stats(p, mu_a, mu_b, params).p_t2),
    ]
}

/// A bit pair counts as an error for announcement `t` when the bits differ
/// for t=1 or agree for t=2 (Alice flips her bit after t=2).
pub fn is_bit_error(t: u8, bit_a: u8, bit_b: u8) -> bool {
    (bit_a != bit_b) == (t == 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CodeRates {
    /// Slice-averaged probability of announcement t, averaged over bits.
    pub gain: f64,
    pub e_z: f64,
    pub e_y: f64,
}

fn basis_rates(basis: Basis, mu: f64, t: u8, params: &PhysicalParams) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    for ja in 0..2u8 {
        for jb in 0..2u8 {
            let off = basis.encoding_phase(ja) - basis.encoding_phase(jb);
            let g = 0.25 * slice_average(params.slice_width, |psi| click_stats(psi + off, mu, mu, params).p_t(t));
            total += g;
            if is_bit_error(t, ja, jb) {
                err += g;
            }
        }
    }
    (total, if total > 0.0 { err / total } else { 0.5 })
}

/// Gain and basis error rates for matched intensities inside the slice.
pub fn code_mode_rates(mu: f64, t: u8, params: &PhysicalParams) -> Result<CodeRates> {
    if t != 1 && t != 2 {
        return Err(domain(format!("announcement {t} not in {{1,2}}")));
    }
    let (gain, e_z) = basis_rates(Basis::Z, mu, t, params);
    let (_, e_y) = basis_rates(Basis::Y, mu, t, params);
    Ok(CodeRates { gain, e_z, e_y })
}

/// Announcement probabilities for signal-mode Fock inputs |k>_A |l>_B,
/// computed with the Fock engine: loss to an ancilla per arm, the 50:50
/// beam splitter, then threshold detectors with dark counts.
#[derive(Clone, Debug)]
pub struct YieldTable {
    max_photons: usize,
    /// [k][l] -> (p_t1, p_t2)
    table: Vec<Vec<(f64, f64)>>,
}

impl YieldTable {
    pub fn new(params: &PhysicalParams, max_photons: usize) -> Result<Self> {
        if max_photons > MAX_FOCK_INPUT {
            return Err(domain(format!("Fock input {max_photons} above {MAX_FOCK_INPUT}")));
        }
        let eta = arm_transmissivity(params);
        let pd = params.p_dark;
        let mut table = vec![vec![(0.0, 0.0); max_photons + 1]; max_photons + 1];
        for k in 0..=max_photons {
            for l in 0..=max_photons {
                let cut = (k + l).max(1);
                let st = FockVector::number_state(k, cut)?.tensor(&FockVector::number_state(l, cut)?);
                let st = st.loss_channel(0, eta)?.loss_channel(1, eta)?.beam_splitter(0, 1)?;
                let (mut t1, mut t2) = (0.0, 0.0);
                for (occ, p) in st.occupation_distribution(&[0, 1])? {
                    let q1 = if occ[0] == 0 { pd } else { 1.0 };
                    let q2 = if occ[1] == 0 { pd } else { 1.0 };
                    let (a, b, _) = announce(q1, q2, params.misalignment);
                    t1 += p * a;
                    t2 += p * b;
                }
                table[k][l] = (t1, t2);
            }
        }
        Ok(YieldTable { max_photons, table })
    }

    pub fn signal_yield(&self, k: usize, l: usize) -> (f64, f64) {
        self.table[k][l]
    }

    /// Yield for n_A, n_B photons in ref+sg. Each photon sits in the signal
    /// pulse with probability 1/2, independently.
    pub fn yield_for(&self, n_a: usize, n_b: usize) -> Result<(f64, f64)> {
        if n_a > self.max_photons || n_b > self.max_photons {
            return Err(domain(format!("({n_a},{n_b}) outside yield table of size {}", self.max_photons)));
        }
        let ba = binomial_half(n_a);
        let bb = binomial_half(n_b);
        let (mut t1, mut t2) = (0.0, 0.0);
        for (k, wa) in ba.iter().enumerate() {
            for (l, wb) in bb.iter().enumerate() {
                let (a, b) = self.table[k][l];
                t1 += wa * wb * a;
                t2 += wa * wb * b;
            }
        }
        Ok((t1, t2))
    }
}

fn binomial_half(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    w[0] = 0.5f64.powi(n as i32);
    for k in 1..=n {
        w[k] = w[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    w
}

/// Photon-number pairs whose X_C = 1 probability vanishes.
pub const LOW_PHOTON_SET: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

pub fn is_low_photon(n_a: usize, n_b: usize) -> bool {
    n_a <= 1 && n_b <= 1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FockYield {
    pub p_t1: f64,
    pub p_t2: f64,
    /// Weight with which the detection enters the X_C = 1 upper bound:
    /// 0 on the low-photon set, 1 elsewhere.
    pub bias_weight: f64,
}

pub fn fock_yield_and_bias(n_a: usize, n_b: usize, params: &PhysicalParams) -> Result<FockYield> {
    let table = YieldTable::new(params, n_a.max(n_b))?;
    let (p_t1, p_t2) = table.yield_for(n_a, n_b)?;
    Ok(FockYield { p_t1, p_t2, bias_weight: if is_low_photon(n_a, n_b) { 0.0 } else { 1.0 } })
}

/// Poisson probability of n_A, n_B photons in ref+sg at intensities mu_A, mu_B.
pub fn fock_prob(n_a: usize, n_b: usize, mu_a: f64, mu_b: f64) -> f64 {
    poisson(n_a, 2.0 * mu_a) * poisson(n_b, 2.0 * mu_b)
}

pub fn poisson(n: usize, mean: f64) -> f64 {
    let mut p = (-mean).exp();
    for k in 1..=n {
        p *= mean / k as f64;
    }
    p
}

/// Per-round probability of announcement t with a multiphoton emission at
/// intensities (mu, mu), split as total minus the low-photon part.
pub fn multiphoton_detection(mu: f64, params: &PhysicalParams) -> Result<[f64; 2]> {
    let total = phase_averaged_clicks(mu, mu, params);
    let table = YieldTable::new(params, 1)?;
    let mut low = [0.0; 2];
    for (na, nb) in LOW_PHOTON_SET {
        let (a, b) = table.yield_for(na, nb)?;
        let q = fock_prob(na, nb, mu, mu);
        low[0] += q * a;
        low[1] += q * b;
    }
    Ok([(total[0] - low[0]).max(0.0), (total[1] - low[1]).max(0.0)])
}
