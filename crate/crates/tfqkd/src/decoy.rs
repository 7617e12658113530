//! Decoy-state estimation of per-photon-number Test-mode detection counts,
//! and the Test to Code transfer that bounds the coin bias.
//!
//! Counts fed in here are matched-basis Test-mode detections for one
//! announcement, indexed by the intensity pair.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{chernoff_delta, hoeffding_delta, Tail};
use crate::channel::{is_low_photon, PhysicalParams, LOW_PHOTON_SET};
use crate::error::{domain, Error, Result};

/// Per-side photon-number grid size for the infinite-decoy inversion.
pub const INFINITE_GRID: usize = 3;
/// Per-side photon-number grid size for the finite linear programs.
pub const FINITE_GRID: usize = 7;
/// Condition number above which the inversion is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Observed counts, `[i_a][i_b]`.
pub type PairCounts = [[f64; 3]; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub intensities: [f64; 3],
    pub probs: [f64; 3],
    pub p_test: f64,
    pub p_z_code: f64,
}

impl IntensityModel {
    pub fn from_params(p: &PhysicalParams) -> Self {
        IntensityModel { intensities: p.intensities, probs: p.intensity_probs, p_test: p.p_test, p_z_code: p.p_z_code }
    }

    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Params(format!("intensity probabilities {:?}", self.probs)));
        }
        for (i, m) in self.intensities.iter().enumerate() {
            if !(*m >= 0.0) || self.intensities[..i].contains(m) {
                return Err(Error::Params(format!("intensities {:?} must be distinct and >= 0", self.intensities)));
            }
        }
        if !(0.0..=1.0).contains(&self.p_test) || !(0.0..=1.0).contains(&self.p_z_code) {
            return Err(Error::Params("p_test and p_z_code must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn p_equal(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }

    /// Probability that a round lands in the Test mode.
    pub fn test_fraction(&self) -> f64 {
        1.0 - self.p_equal() + self.p_equal() * self.p_test
    }

    pub fn p_x_code(&self) -> f64 {
        1.0 - self.p_z_code
    }

    fn support(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Poisson product over ref+sg, which carry 2 mu between them.
pub fn q_fock_given_intensity(n_a: usize, n_b: usize, mu_a: f64, mu_b: f64) -> f64 {
    crate::channel::fock_prob(n_a, n_b, mu_a, mu_b)
}

/// Probability of the intensity pair given the Test mode.
pub fn q_intensity_joint(i_a: usize, i_b: usize, model: &IntensityModel) -> f64 {
    let p = model.probs[i_a] * model.probs[i_b];
    let w = if i_a == i_b { p * model.p_test } else { p };
    w / model.test_fraction()
}

/// Test-mode photon-number distribution.
pub fn q_fock(n_a: usize, n_b: usize, model: &IntensityModel) -> f64 {
    let mut s = 0.0;
    for ia in 0..3 {
        for ib in 0..3 {
            s += q_fock_given_intensity(n_a, n_b, model.intensities[ia], model.intensities[ib]) * q_intensity_joint(ia, ib, model);
        }
    }
    s
}

pub fn q_intensity_given_fock(i_a: usize, i_b: usize, n_a: usize, n_b: usize, model: &IntensityModel) -> Result<f64> {
    let qn = q_fock(n_a, n_b, model);
    if qn <= 0.0 {
        return Err(domain(format!("photon numbers ({n_a},{n_b}) have zero probability")));
    }
    let (ma, mb) = (model.intensities[i_a], model.intensities[i_b]);
    Ok(q_fock_given_intensity(n_a, n_b, ma, mb) * q_intensity_joint(i_a, i_b, model) / qn)
}

fn q_given_fock_or_zero(i_a: usize, i_b: usize, n_a: usize, n_b: usize, model: &IntensityModel) -> f64 {
    q_intensity_given_fock(i_a, i_b, n_a, n_b, model).unwrap_or(0.0)
}

/// Expected per-intensity counts for known per-photon-number counts.
pub fn forward_counts(fock_counts: &[((usize, usize), f64)], model: &IntensityModel) -> PairCounts {
    let mut out = [[0.0; 3]; 3];
    for &((na, nb), n) in fock_counts {
        for (ia, row) in out.iter_mut().enumerate() {
            for (ib, c) in row.iter_mut().enumerate() {
                *c += n * q_given_fock_or_zero(ia, ib, na, nb, model);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FockBound {
    pub lower: f64,
    pub upper: f64,
    pub point: Option<f64>,
}

impl FockBound {
    fn exact(v: f64) -> Self {
        FockBound { lower: v, upper: v, point: Some(v) }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FockEntry {
    pub n_a: usize,
    pub n_b: usize,
    pub bound: FockBound,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EstimateFlags {
    pub ill_conditioned: bool,
    pub infeasible: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FockCountEstimate {
    pub entries: Vec<FockEntry>,
    /// Sum of counts over the low-photon set.
    pub low_sum: FockBound,
    /// Low-photon detections at the key intensity pair.
    pub low_at_key: FockBound,
    /// Upper bound on multiphoton detections at the key intensity pair.
    pub x1_test_upper: f64,
    pub residual: f64,
    pub condition: f64,
    pub flags: EstimateFlags,
}

impl FockCountEstimate {
    pub fn get(&self, n_a: usize, n_b: usize) -> Option<&FockBound> {
        self.entries.iter().find(|e| e.n_a == n_a && e.n_b == n_b).map(|e| &e.bound)
    }

    /// Estimate carrying only a known multiphoton count at the key pair.
    pub fn from_multiphoton(x1: f64) -> Self {
        FockCountEstimate {
            entries: Vec::new(),
            low_sum: FockBound { lower: 0.0, upper: f64::INFINITY, point: None },
            low_at_key: FockBound { lower: 0.0, upper: f64::INFINITY, point: None },
            x1_test_upper: x1,
            residual: 0.0,
            condition: 1.0,
            flags: EstimateFlags::default(),
        }
    }

    fn trivial(counts: &PairCounts, flags: EstimateFlags) -> Self {
        let total: f64 = counts.iter().flatten().sum();
        let span = FockBound { lower: 0.0, upper: total, point: None };
        let entries = (0..INFINITE_GRID)
            .flat_map(|a| (0..INFINITE_GRID).map(move |b| FockEntry { n_a: a, n_b: b, bound: span }))
            .collect();
        FockCountEstimate {
            entries,
            low_sum: span,
            low_at_key: FockBound { lower: 0.0, upper: counts[0][0], point: None },
            x1_test_upper: counts[0][0],
            residual: f64::NAN,
            condition: f64::INFINITY,
            flags,
        }
    }
}

fn check_counts(counts: &PairCounts) -> Result<()> {
    if counts.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(domain("counts must be finite and >= 0"));
    }
    Ok(())
}

/// Lawson-Hanson non-negative least squares.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm() * b.norm().max(1e-300);
    let tol = 1e-13 * scale.max(1e-300);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let z = sub.svd(true, true).solve(b, 1e-15).expect("svd with vectors");
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    // an interior least-squares solution is already optimal; near-collinear
    // columns would otherwise stall the active-set loop below tolerance
    let free = solve_passive(&vec![true; n]);
    if free.iter().all(|&v| v >= 0.0) {
        return free;
    }
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            let bad: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if bad.is_empty() {
                x = z;
                break;
            }
            let alpha = bad.iter().map(|&i| x[i] / (x[i] - z[i])).fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 * x.amax().max(1e-300) {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn grid_index(n_a: usize, n_b: usize, g: usize) -> usize {
    n_a * g + n_b
}

/// Point estimates on the 3x3 grid from exact per-intensity counts.
pub fn estimate_fock_counts_infinite(counts: &PairCounts, model: &IntensityModel) -> Result<FockCountEstimate> {
    check_counts(counts)?;
    model.validate()?;
    if model.support() < 2 {
        return Ok(FockCountEstimate::trivial(counts, EstimateFlags { degenerate: true, ..Default::default() }));
    }
    let g = INFINITE_GRID;
    let mut a = DMatrix::zeros(9, g * g);
    let mut b = DVector::zeros(9);
    for ia in 0..3 {
        for ib in 0..3 {
            let r = 3 * ia + ib;
            b[r] = counts[ia][ib];
            for na in 0..g {
                for nb in 0..g {
                    a[(r, grid_index(na, nb, g))] = q_given_fock_or_zero(ia, ib, na, nb, model);
                }
            }
        }
    }
    // equilibrate columns before solving
    let norms: Vec<f64> = (0..g * g).map(|j| a.column(j).norm()).collect();
    let mut scaled = a.clone();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let sv = scaled.singular_values();
    let condition = sv.max() / sv.min();
    let bnorm = b.norm();
    let y = if bnorm > 0.0 { nnls(&scaled, &(&b / bnorm)) * bnorm } else { DVector::zeros(g * g) };
    let x = DVector::from_iterator(g * g, (0..g * g).map(|j| if norms[j] > 0.0 { y[j] / norms[j] } else { 0.0 }));
    let residual = (&a * &x - &b).norm();

    let mut entries = Vec::new();
    for na in 0..g {
        for nb in 0..g {
            entries.push(FockEntry { n_a: na, n_b: nb, bound: FockBound::exact(x[grid_index(na, nb, g)]) });
        }
    }
    let low: f64 = LOW_PHOTON_SET.iter().map(|&(na, nb)| x[grid_index(na, nb, g)]).sum();
    let low_key: f64 = LOW_PHOTON_SET
        .iter()
        .map(|&(na, nb)| x[grid_index(na, nb, g)] * q_given_fock_or_zero(0, 0, na, nb, model))
        .sum();
    Ok(FockCountEstimate {
        entries,
        low_sum: FockBound::exact(low),
        low_at_key: FockBound::exact(low_key),
        x1_test_upper: (counts[0][0] - low_key).max(0.0),
        residual,
        condition,
        flags: EstimateFlags { ill_conditioned: condition > ILL_CONDITIONED, ..Default::default() },
    })
}

/// Failure probabilities consumed by the finite estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyEpsilons {
    /// One Hoeffding interval per intensity pair.
    pub pair: [[f64; 3]; 3],
    /// Allocation of low-photon detections to the key pair.
    pub low: f64,
}

impl DecoyEpsilons {
    pub fn uniform(eps: f64) -> Self {
        DecoyEpsilons { pair: [[eps; 3]; 3], low: eps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDecoyInput {
    pub counts: PairCounts,
    /// Matched-basis Test-mode rounds. Used to cap per-photon-number counts
    /// and the tail buckets; `None` leaves the grid uncapped and the tail
    /// bounded only by the observed counts.
    pub test_rounds: Option<f64>,
}

fn poisson_cap(mean: f64) -> f64 {
    mean + 5.0 * mean.sqrt() + 5.0
}

struct FiniteLp<'a> {
    model: &'a IntensityModel,
    counts: &'a PairCounts,
    widths: [[f64; 3]; 3],
    caps: Vec<f64>,
    tail_caps: [[f64; 3]; 3],
    scale: f64,
}

impl FiniteLp<'_> {
    /// Optimizes `sum_n coef(n) N_n` over the feasible set. `None` on
    /// infeasibility.
    fn optimize(&self, dir: OptimizationDirection, coef: impl Fn(usize, usize) -> f64) -> Result<Option<f64>> {
        let g = FINITE_GRID;
        let mut lp = Problem::new(dir);
        let mut vars = Vec::with_capacity(g * g);
        for na in 0..g {
            for nb in 0..g {
                let cap = self.caps[grid_index(na, nb, g)] / self.scale;
                vars.push(lp.add_var(coef(na, nb), (0.0, cap)));
            }
        }
        for ia in 0..3 {
            for ib in 0..3 {
                let tail = lp.add_var(0.0, (0.0, self.tail_caps[ia][ib] / self.scale));
                let mut terms = vec![(tail, 1.0)];
                for na in 0..g {
                    for nb in 0..g {
                        let q = q_given_fock_or_zero(ia, ib, na, nb, self.model);
                        if q > 0.0 {
                            terms.push((vars[grid_index(na, nb, g)], q));
                        }
                    }
                }
                let obs = self.counts[ia][ib] / self.scale;
                let w = self.widths[ia][ib] / self.scale;
                lp.add_constraint(terms.clone(), ComparisonOp::Le, obs + w);
                lp.add_constraint(terms, ComparisonOp::Ge, (obs - w).max(0.0));
            }
        }
        match lp.solve() {
            Ok(out) => match out.solution() {
                Some(s) => Ok(Some(s.objective() * self.scale)),
                None => Err(Error::Solver("linear program interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Solver(e.to_string())),
        }
    }
}

/// Bounds from Hoeffding intervals on the nine observed counts.
pub fn estimate_fock_counts_finite(
    input: &FiniteDecoyInput,
    model: &IntensityModel,
    eps: &DecoyEpsilons,
) -> Result<FockCountEstimate> {
    let counts = &input.counts;
    check_counts(counts)?;
    model.validate()?;
    if model.support() < 2 {
        return Ok(FockCountEstimate::trivial(counts, EstimateFlags { degenerate: true, ..Default::default() }));
    }
    let g = FINITE_GRID;
    let mut widths = [[0.0; 3]; 3];
    for ia in 0..3 {
        for ib in 0..3 {
            let n = counts[ia][ib].max(1.0);
            widths[ia][ib] = n * hoeffding_delta(n, eps.pair[ia][ib])?;
        }
    }
    let total: f64 = counts.iter().flatten().sum();
    let unbounded = total + widths.iter().flatten().sum::<f64>();
    let mut caps = vec![unbounded; g * g];
    let mut tail_caps = [[unbounded; 3]; 3];
    if let Some(rounds) = input.test_rounds {
        if !(rounds >= 0.0) {
            return Err(domain(format!("test round count {rounds} < 0")));
        }
        for na in 0..g {
            for nb in 0..g {
                caps[grid_index(na, nb, g)] = poisson_cap(rounds * q_fock(na, nb, model));
            }
        }
        for ia in 0..3 {
            for ib in 0..3 {
                let (ma, mb) = (model.intensities[ia], model.intensities[ib]);
                let inside: f64 = (0..g).flat_map(|a| (0..g).map(move |b| (a, b))).map(|(a, b)| q_fock_given_intensity(a, b, ma, mb)).sum();
                let mean = rounds * q_intensity_joint(ia, ib, model) * (1.0 - inside).max(0.0);
                tail_caps[ia][ib] = if model.probs[ia] * model.probs[ib] > 0.0 { poisson_cap(mean) } else { 0.0 };
            }
        }
    }
    let lp = FiniteLp { model, counts, widths, caps, tail_caps, scale: total.max(1.0) };
    use OptimizationDirection::{Maximize, Minimize};
    let low_w = |na: usize, nb: usize| if is_low_photon(na, nb) { 1.0 } else { 0.0 };

    let infeasible = || FockCountEstimate::trivial(counts, EstimateFlags { infeasible: true, ..Default::default() });
    let Some(low_min) = lp.optimize(Minimize, low_w)? else { return Ok(infeasible()) };
    let Some(low_max) = lp.optimize(Maximize, low_w)? else { return Ok(infeasible()) };
    let Some(key_min) = lp.optimize(Minimize, |na, nb| low_w(na, nb) * q_given_fock_or_zero(0, 0, na, nb, model))? else {
        return Ok(infeasible());
    };
    let key_max = lp
        .optimize(Maximize, |na, nb| low_w(na, nb) * q_given_fock_or_zero(0, 0, na, nb, model))?
        .unwrap_or(counts[0][0]);

    let point = estimate_fock_counts_infinite(counts, model).ok();
    let mut entries = Vec::new();
    for na in 0..INFINITE_GRID {
        for nb in 0..INFINITE_GRID {
            let one = |a: usize, b: usize| if (a, b) == (na, nb) { 1.0 } else { 0.0 };
            let lo = lp.optimize(Minimize, one)?.unwrap_or(0.0).max(0.0);
            let hi = lp.optimize(Maximize, one)?.unwrap_or(total);
            let p = point.as_ref().and_then(|e| e.get(na, nb)).and_then(|b| b.point);
            entries.push(FockEntry { n_a: na, n_b: nb, bound: FockBound { lower: lo, upper: hi, point: p } });
        }
    }

    // low-photon detections are split among pairs by sampling; correct the
    // expected share at the key pair downwards
    let corr = low_max * hoeffding_delta(low_min.max(1.0), eps.low)?;
    let key_lower = (key_min - corr).max(0.0);
    Ok(FockCountEstimate {
        entries,
        low_sum: FockBound { lower: low_min.max(0.0), upper: low_max, point: point.as_ref().and_then(|e| e.low_sum.point) },
        low_at_key: FockBound { lower: key_lower, upper: key_max + corr, point: point.as_ref().and_then(|e| e.low_at_key.point) },
        x1_test_upper: (counts[0][0] - key_lower).max(0.0),
        residual: point.as_ref().map_or(f64::NAN, |e| e.residual),
        condition: point.as_ref().map_or(f64::INFINITY, |e| e.condition),
        flags: EstimateFlags::default(),
    })
}

/// Test to Code-X transfer: N_X1,CodeX <= factor * N_X1,Test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transfer {
    pub s_xc: f64,
    pub delta_tc: f64,
    pub factor: f64,
    pub saturated: bool,
}

pub fn transfer(model: &IntensityModel, x1_test_upper: f64, eps_tc: Option<f64>) -> Result<Transfer> {
    let pt = model.p_test;
    let pxc = model.p_x_code();
    if pt <= 0.0 {
        return Err(domain("no Test-mode rounds to transfer from"));
    }
    let s = pt / (pt + (1.0 - pt) * pxc);
    if s >= 1.0 {
        return Ok(Transfer { s_xc: 1.0, delta_tc: 0.0, factor: 0.0, saturated: false });
    }
    let (delta, saturated) = match eps_tc {
        None => (0.0, false),
        Some(e) => {
            let c = chernoff_delta(1.0 - s, x1_test_upper.max(1.0), e, Tail::Upper)?;
            (c.delta, c.saturated)
        }
    };
    let factor = if s - delta <= 0.0 { f64::INFINITY } else { (1.0 - s + delta) / (s - delta) };
    Ok(Transfer { s_xc: s, delta_tc: delta, factor, saturated })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasBound {
    pub delta_bias: f64,
    /// Upper bound on X_C = 1 detections in the Code-X mode.
    pub x1_code_upper: f64,
    pub transfer: Transfer,
}

/// Bias bound from the multiphoton Test-mode count. `code_slice_total` is
/// the matched-basis in-slice Code-mode detection count (Z_C and X_C) at
/// the key pair; dividing by it rather than by all Code detections carries
/// the 2pi/Delta enhancement.
pub fn delta_bias(
    estimate: &FockCountEstimate,
    code_slice_total: f64,
    model: &IntensityModel,
    eps_tc: Option<f64>,
) -> Result<BiasBound> {
    if !(code_slice_total > 0.0) {
        return Err(domain("no post-selected Code-mode detections"));
    }
    let x1 = estimate.x1_test_upper;
    let tr = transfer(model, x1, eps_tc)?;
    let pxc = model.p_x_code();
    let x1_code = x1 * tr.factor;
    // all Code-mode X_C = 1 events, Z_C rounds included by fair sampling
    let all_code = if pxc > 0.0 {
        x1_code / pxc
    } else {
        x1 * (1.0 - model.p_test) / model.p_test
    };
    let d = if x1 == 0.0 { 0.0 } else { all_code / code_slice_total };
    Ok(BiasBound { delta_bias: d.clamp(0.0, 0.5), x1_code_upper: x1_code, transfer: tr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(p_test: f64) -> IntensityModel {
        IntensityModel { intensities: [0.0012, 0.01, 0.05], probs: [1.0 / 3.0; 3], p_test, p_z_code: 0.5 }
    }

    #[test]
    fn fock_given_intensity() {
        let mu: f64 = 0.003;
        assert_abs_diff_eq!(q_fock_given_intensity(0, 0, mu, mu), (-4.0 * mu).exp(), epsilon = 1e-16);
        assert_abs_diff_eq!(q_fock_given_intensity(1, 0, mu, mu), (-4.0 * mu).exp() * 2.0 * mu, epsilon = 1e-16);
        let s: f64 = (0..30).flat_map(|a| (0..30).map(move |b| (a, b))).map(|(a, b)| q_fock_given_intensity(a, b, 0.4, 0.1)).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_intensity() {
        let m = model(1.0);
        for ia in 0..3 {
            for ib in 0..3 {
                assert_abs_diff_eq!(q_intensity_joint(ia, ib, &m), 1.0 / 9.0, epsilon = 1e-15);
            }
        }
        let m = model(0.5);
        assert_abs_diff_eq!(q_intensity_joint(0, 0, &m), 1.0 / 15.0, epsilon = 1e-15);
        let s: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| q_intensity_joint(a, b, &m)).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bayes_normalized() {
        let m = IntensityModel { probs: [0.6, 0.3, 0.1], ..model(0.4) };
        for (na, nb) in [(0, 0), (1, 0), (2, 3), (5, 1)] {
            let s: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| q_intensity_given_fock(a, b, na, nb, &m).unwrap()).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        let single = IntensityModel { probs: [1.0, 0.0, 0.0], ..model(0.5) };
        assert_abs_diff_eq!(q_intensity_given_fock(0, 0, 2, 1, &single).unwrap(), 1.0, epsilon = 1e-15);
        let vac = IntensityModel { intensities: [0.0, 0.1, 0.2], probs: [1.0, 0.0, 0.0], ..model(0.5) };
        assert!(q_intensity_given_fock(0, 0, 1, 0, &vac).is_err());
    }

    #[test]
    fn bayes_vacuum_oracle() {
        // evaluated independently in 50-digit decimal arithmetic
        let m = model(0.5);
        assert_abs_diff_eq!(q_intensity_given_fock(0, 0, 0, 0, &m).unwrap(), ORACLE_Q00, epsilon = 1e-14);
    }

    const ORACLE_Q00: f64 = 0.071_885_059_936_437_97;

    #[test]
    fn infinite_round_trip() {
        let m = model(0.5);
        let truth: Vec<((usize, usize), f64)> = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| ((a, b), 1e6 / (1.0 + (a * 3 + b) as f64)))
            .collect();
        let counts = forward_counts(&truth, &m);
        let est = estimate_fock_counts_infinite(&counts, &m).unwrap();
        for ((a, b), n) in truth {
            let p = est.get(a, b).unwrap().point.unwrap();
            assert!((p / n - 1.0).abs() < 1e-6, "({a},{b}) {p} vs {n}");
        }
        assert!(!est.flags.ill_conditioned);
        let zero = estimate_fock_counts_infinite(&[[0.0; 3]; 3], &m).unwrap();
        assert!(zero.entries.iter().all(|e| e.bound.point == Some(0.0)));
    }

    #[test]
    fn nnls_respects_sign() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0, 1.0]);
        let x = nnls(&a, &b);
        assert!(x[1] == 0.0);
        assert_abs_diff_eq!(x[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_model_flags() {
        let m = IntensityModel { probs: [1.0, 0.0, 0.0], ..model(0.5) };
        let counts = [[100.0, 0.0, 0.0], [0.0; 3], [0.0; 3]];
        let est = estimate_fock_counts_finite(&FiniteDecoyInput { counts, test_rounds: None }, &m, &DecoyEpsilons::uniform(1e-3)).unwrap();
        assert!(est.flags.degenerate);
        assert_eq!(est.low_sum.upper, 100.0);
    }

    #[test]
    fn finite_contains_infinite() {
        let m = model(0.5);
        let truth: Vec<((usize, usize), f64)> = vec![((0, 0), 5e3), ((1, 0), 4e5), ((0, 1), 4e5), ((1, 1), 2e3), ((2, 0), 3e3), ((0, 2), 3e3)];
        let counts = forward_counts(&truth, &m);
        let inf = estimate_fock_counts_infinite(&counts, &m).unwrap();
        for eps in [0.999_999, 1e-3] {
            let fin = estimate_fock_counts_finite(&FiniteDecoyInput { counts, test_rounds: None }, &m, &DecoyEpsilons::uniform(eps)).unwrap();
            let tol = 1e-6 * 1e6;
            assert!(fin.low_sum.contains(inf.low_sum.point.unwrap(), tol), "{:?} {:?}", fin.low_sum, inf.low_sum);
            for e in &fin.entries {
                assert!(e.bound.contains(inf.get(e.n_a, e.n_b).unwrap().point.unwrap(), tol), "{e:?}");
            }
            assert!(fin.x1_test_upper + tol >= inf.x1_test_upper);
        }
    }

    #[test]
    fn bias_limits() {
        let m = model(0.5);
        let mut est = estimate_fock_counts_infinite(&[[0.0; 3]; 3], &m).unwrap();
        assert_eq!(delta_bias(&est, 100.0, &m, None).unwrap().delta_bias, 0.0);
        est.x1_test_upper = 5.0;
        let b = delta_bias(&est, 1e4, &m, None).unwrap();
        // (1-s)/s = pC pXC / pT, then / pXC
        assert_abs_diff_eq!(b.delta_bias, 5.0 * 0.5 / 0.5 / 1e4, epsilon = 1e-15);
        let b1 = delta_bias(&est, 1e4, &model(1.0), None).unwrap();
        assert_eq!(b1.delta_bias, 0.0);
        let fin = delta_bias(&est, 1e4, &m, Some(1e-6)).unwrap();
        assert!(fin.delta_bias > b.delta_bias);
        assert!(delta_bias(&est, 0.0, &m, None).is_err());
    }
}
