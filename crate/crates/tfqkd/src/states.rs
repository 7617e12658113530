//! Protocol and fictitious-protocol states, and numerical checks of the
//! identities the security argument rests on.
//!
//! Qubit registers A and B use {|0_X>, |1_X>} as their computational basis.
//! The coin C uses {|0_Z>, |1_Z>}.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fock::{FockVector, ModeLayout, C64};

/// Phase grid size used by the purification check.
pub const DEFAULT_PHASE_GRID: usize = 64;

/// Conditioning probabilities below this are reported as undefined.
pub const CONDITIONING_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    Y,
}

impl Basis {
    /// Encoding phase added to the signal pulse for bit `bit`.
    pub fn encoding_phase(self, bit: u8) -> f64 {
        let j = f64::from(bit & 1);
        match self {
            Basis::Z => j * PI,
            Basis::Y => 1.5 * PI - j * PI,
        }
    }

    /// Qubit ket of the basis state with the given bit, in X-basis components.
    pub fn ket(self, bit: u8) -> [C64; 2] {
        let s = FRAC_1_SQRT_2;
        match (self, bit & 1) {
            (Basis::Z, 0) => [C64::new(s, 0.0), C64::new(s, 0.0)],
            (Basis::Z, _) => [C64::new(s, 0.0), C64::new(-s, 0.0)],
            (Basis::Y, 0) => [C64::new(s, 0.0), C64::new(0.0, s)],
            (Basis::Y, _) => [C64::new(s, 0.0), C64::new(0.0, -s)],
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::Z => 'Z',
            Basis::Y => 'Y',
        }
    }
}

/// Basis pair with bit values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisChoice {
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub bit_a: u8,
    pub bit_b: u8,
}

impl BasisChoice {
    /// Relative encoding phase delta_A - delta_B.
    pub fn relative_phase(&self) -> f64 {
        self.basis_a.encoding_phase(self.bit_a) - self.basis_b.encoding_phase(self.bit_b)
    }
}

/// Coin weights for the matched-basis branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinDecomposition {
    pub p_z: f64,
    pub p_y: f64,
}

impl CoinDecomposition {
    pub fn from_basis_probs(p_z_a: f64, p_z_b: f64) -> Result<Self> {
        for p in [p_z_a, p_z_b] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("basis probability {p} not in [0,1]")));
            }
        }
        let zz = p_z_a * p_z_b;
        let yy = (1.0 - p_z_a) * (1.0 - p_z_b);
        if zz + yy == 0.0 {
            return Err(domain("no matched-basis weight"));
        }
        Ok(CoinDecomposition { p_z: zz / (zz + yy), p_y: yy / (zz + yy) })
    }

    pub fn with_p_z(p_z: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_z) {
            return Err(domain(format!("coin probability {p_z} not in [0,1]")));
        }
        Ok(CoinDecomposition { p_z, p_y: 1.0 - p_z })
    }

    /// |0_X>_C in coin Z components.
    pub fn x0(&self) -> [C64; 2] {
        [C64::new(self.p_z.sqrt(), 0.0), C64::new(self.p_y.sqrt(), 0.0)]
    }

    /// |1_X>_C in coin Z components.
    pub fn x1(&self) -> [C64; 2] {
        [C64::new(self.p_y.sqrt(), 0.0), C64::new(-self.p_z.sqrt(), 0.0)]
    }
}

fn polar(r: f64, phase: f64) -> C64 {
    C64::from_polar(r, phase)
}

/// Qubit (x) ref (x) sg state: equal superposition over bits with a coherent
/// reference at phase theta and signal at theta plus the encoding phase.
pub fn encoded_pair_state(basis: Basis, theta: f64, mu: f64, cutoff: usize) -> Result<FockVector> {
    if !(mu >= 0.0) {
        return Err(domain(format!("mean photon number {mu} < 0")));
    }
    let amp = mu.sqrt();
    let reference = FockVector::coherent(polar(amp, theta), cutoff);
    let mut acc = FockVector::zeros(ModeLayout::uniform(2, cutoff, 1));
    for bit in 0..2u8 {
        let k = basis.ket(bit);
        let q = FockVector::qubit(k[0], k[1]);
        let sg = FockVector::coherent(polar(amp, theta + basis.encoding_phase(bit)), cutoff);
        acc = acc.add(&q.tensor(&reference).tensor(&sg).scale(C64::new(FRAC_1_SQRT_2, 0.0)))?;
    }
    Ok(acc)
}

/// Qubit (x) sg state of the actual protocol, with no reference pulse.
pub fn signal_only_state(basis: Basis, theta: f64, mu: f64, cutoff: usize) -> Result<FockVector> {
    if !(mu >= 0.0) {
        return Err(domain(format!("mean photon number {mu} < 0")));
    }
    let amp = mu.sqrt();
    let mut acc = FockVector::zeros(ModeLayout::uniform(1, cutoff, 1));
    for bit in 0..2u8 {
        let k = basis.ket(bit);
        let q = FockVector::qubit(k[0], k[1]);
        let sg = FockVector::coherent(polar(amp, theta + basis.encoding_phase(bit)), cutoff);
        acc = acc.add(&q.tensor(&sg).scale(C64::new(FRAC_1_SQRT_2, 0.0)))?;
    }
    Ok(acc)
}

/// Matched-basis coin state on qubits [C, A, B] and modes
/// [ref_A, sg_A, ref_B, sg_B].
pub fn coin_state(theta_a: f64, theta_b: f64, mu: f64, coin: CoinDecomposition, cutoff: usize) -> Result<FockVector> {
    let mut acc: Option<FockVector> = None;
    for (basis, weight, cz) in [(Basis::Z, coin.p_z, 0usize), (Basis::Y, coin.p_y, 1usize)] {
        let mut c = [C64::new(0.0, 0.0); 2];
        c[cz] = C64::new(weight.sqrt(), 0.0);
        let term = FockVector::qubit(c[0], c[1])
            .tensor(&encoded_pair_state(basis, theta_a, mu, cutoff)?)
            .tensor(&encoded_pair_state(basis, theta_b, mu, cutoff)?);
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    Ok(acc.expect("two branches"))
}

/// P(X_C = 1 | n_A, n_B) for a coin state built by [`coin_state`]; `None`
/// when the conditioning probability is below [`CONDITIONING_FLOOR`].
pub fn prob_xc1_in_state(state: &FockVector, n_a: usize, n_b: usize, coin: CoinDecomposition) -> Result<Option<f64>> {
    let proj = state.number_projector(&[0, 1], n_a)?.number_projector(&[2, 3], n_b)?;
    let cond = proj.norm_sqr();
    if cond < CONDITIONING_FLOOR {
        return Ok(None);
    }
    let one = proj.qubit_contract(0, coin.x1())?;
    Ok(Some(one.norm_sqr() / cond))
}

pub fn prob_xc1_given_photons(
    n_a: usize,
    n_b: usize,
    theta_a: f64,
    theta_b: f64,
    mu: f64,
    coin: CoinDecomposition,
    cutoff: usize,
) -> Result<Option<f64>> {
    if n_a > 2 * cutoff || n_b > 2 * cutoff {
        return Err(domain(format!("photon numbers ({n_a},{n_b}) above cutoff {cutoff}")));
    }
    let state = coin_state(theta_a, theta_b, mu, coin, cutoff)?;
    prob_xc1_in_state(&state, n_a, n_b, coin)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PurificationReport {
    /// Max |grid integral - number expansion| over all matrix elements.
    pub max_deviation: f64,
    /// Norm of the coherent-state amplitude beyond the cutoff.
    pub truncation_tail: f64,
}

/// Compares the M-point discretization of the phase-randomized purification
/// against the number-state expansion sum_n c_n |n>_P |n>.
///
/// Matrix element (n_P, m) of the grid integral is
/// (1/M) sum_k e^{-i n_P theta_k} <m|e^{i theta_k} sqrt(mu)>, evaluated with
/// the Fock engine's coherent states.
pub fn purification_identity_check(mu: f64, cutoff: usize, grid: usize) -> Result<PurificationReport> {
    if !(mu >= 0.0) || grid == 0 {
        return Err(domain("need mu >= 0 and a non-empty phase grid"));
    }
    let amp = mu.sqrt();
    let thetas: Vec<f64> = (0..grid).map(|k| 2.0 * PI * k as f64 / grid as f64).collect();
    let states: Vec<FockVector> = thetas.iter().map(|&t| FockVector::coherent(polar(amp, t), cutoff)).collect();
    let reference = FockVector::coherent(C64::new(amp, 0.0), cutoff);
    let mut worst = 0.0_f64;
    for n_p in 0..grid {
        for m in 0..=cutoff {
            let mut acc = C64::new(0.0, 0.0);
            for (k, st) in states.iter().enumerate() {
                acc += polar(1.0, -(n_p as f64) * thetas[k]) * st.amplitudes()[m];
            }
            acc /= grid as f64;
            let target = if n_p == m { reference.amplitudes()[m] } else { C64::new(0.0, 0.0) };
            worst = worst.max((acc - target).norm());
        }
    }
    // an expansion term with m >= grid has no slot n_P = m on the grid
    for m in grid..=cutoff {
        worst = worst.max(reference.amplitudes()[m].norm());
    }
    Ok(PurificationReport { max_deviation: worst, truncation_tail: reference.leakage().sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn encoding_phases() {
        assert_eq!(Basis::Z.encoding_phase(0), 0.0);
        assert_eq!(Basis::Z.encoding_phase(1), PI);
        assert_eq!(Basis::Y.encoding_phase(0), 1.5 * PI);
        assert_eq!(Basis::Y.encoding_phase(1), 0.5 * PI);
    }

    #[test]
    fn vacuum_pair_state() {
        let s = encoded_pair_state(Basis::Z, 0.3, 0.0, 4).unwrap();
        // (|0_Z> + |1_Z>)/sqrt2 = |0_X>
        assert_abs_diff_eq!(s.amplitude(&[0], &[0, 0]).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&[1], &[0, 0]).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pair_state_normalized() {
        for b in [Basis::Z, Basis::Y] {
            let s = encoded_pair_state(b, 1.1, 0.0024, 8).unwrap();
            assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_photon_projection_form() {
        let (mu, th) = (0.0024, 0.7);
        let s = encoded_pair_state(Basis::Z, th, mu, 8).unwrap();
        let p1 = s.number_projector(&[0, 1], 1).unwrap();
        // a e^{-mu} (|0_X>|1,0> + |1_X>|0,1>) with modes (ref, sg)
        let a = polar(mu.sqrt(), th) * (-mu).exp();
        assert_abs_diff_eq!((p1.amplitude(&[0], &[1, 0]) - a).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((p1.amplitude(&[1], &[0, 1]) - a).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p1.amplitude(&[0], &[0, 1]).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p1.amplitude(&[1], &[1, 0]).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coin_state_shapes() {
        let coin = CoinDecomposition::with_p_z(1.0).unwrap();
        let s = coin_state(0.1, 0.2, 0.0024, coin, 4).unwrap();
        let y_part = s.qubit_contract(0, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert_eq!(y_part.norm_sqr(), 0.0);
        let coin = CoinDecomposition::from_basis_probs(0.7, 0.4).unwrap();
        assert_abs_diff_eq!(coin.p_z, 0.28 / (0.28 + 0.18), epsilon = 1e-15);
        let s = coin_state(0.1, 0.2, 0.0024, coin, 6).unwrap();
        assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn coin_x1_component_is_branch_difference() {
        let coin = CoinDecomposition::with_p_z(0.3).unwrap();
        let (ta, tb, mu, cut) = (0.4, 0.9, 0.004, 5);
        let s = coin_state(ta, tb, mu, coin, cut).unwrap();
        let x1 = s.qubit_contract(0, coin.x1()).unwrap();
        let zz = encoded_pair_state(Basis::Z, ta, mu, cut).unwrap().tensor(&encoded_pair_state(Basis::Z, tb, mu, cut).unwrap());
        let yy = encoded_pair_state(Basis::Y, ta, mu, cut).unwrap().tensor(&encoded_pair_state(Basis::Y, tb, mu, cut).unwrap());
        let want = zz.add(&yy.scale(C64::new(-1.0, 0.0))).unwrap().scale(C64::new((coin.p_z * coin.p_y).sqrt(), 0.0));
        let diff = x1.add(&want.scale(C64::new(-1.0, 0.0))).unwrap();
        assert!(diff.norm_sqr() < 1e-28);
    }

    #[test]
    fn low_photon_bias_vanishes() {
        let coin = CoinDecomposition::with_p_z(0.5).unwrap();
        for (na, nb) in [(0, 0), (1, 1), (1, 0), (0, 1)] {
            let p = prob_xc1_given_photons(na, nb, 0.3, 0.3, 0.0024, coin, 6).unwrap().unwrap();
            assert!(p <= 1e-12, "({na},{nb}) gave {p}");
        }
        let p = prob_xc1_given_photons(2, 0, 0.3, 0.3, 0.0024, coin, 6).unwrap().unwrap();
        assert!(p > 1e-3);
    }

    #[test]
    fn purification_exact_on_grid() {
        let r = purification_identity_check(0.0, 8, 64).unwrap();
        assert!(r.max_deviation < 1e-14, "{:?}", r);
        let r = purification_identity_check(0.0024, 8, 64).unwrap();
        assert!(r.max_deviation < 1e-10, "{:?}", r);
    }

    #[test]
    fn purification_aliases_on_coarse_grid() {
        let mu: f64 = 0.3;
        let r = purification_identity_check(mu, 4, 3).unwrap();
        // c_3 lands on the n_P = 0 slot
        let c3 = (-mu / 2.0).exp() * mu.powf(1.5) / 6f64.sqrt();
        assert!(r.max_deviation >= c3 * 0.999, "{} vs {}", r.max_deviation, c3);
        assert!(r.max_deviation < 1e-1);
    }
}
