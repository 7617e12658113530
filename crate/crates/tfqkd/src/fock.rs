//! Dense truncated multimode Fock space with optional qubit registers.
//!
//! Basis ordering: qubits are the most significant digits (qubit 0 first),
//! followed by modes in order, each with radix `cutoff + 1`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default per-mode cutoff for mean photon numbers up to about 0.01.
pub const DEFAULT_CUTOFF: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeLayout {
    cutoffs: Vec<usize>,
    qubit_count: usize,
}

impl ModeLayout {
    pub fn new(cutoffs: Vec<usize>, qubit_count: usize) -> Self {
        ModeLayout { cutoffs, qubit_count }
    }

    pub fn uniform(modes: usize, cutoff: usize, qubit_count: usize) -> Self {
        ModeLayout::new(vec![cutoff; modes], qubit_count)
    }

    pub fn mode_count(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn cutoff(&self, mode: usize) -> usize {
        self.cutoffs[mode]
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn mode_dim(&self) -> usize {
        self.cutoffs.iter().map(|c| c + 1).product()
    }

    pub fn dim(&self) -> usize {
        (1usize << self.qubit_count) * self.mode_dim()
    }

    pub fn mode_stride(&self, mode: usize) -> usize {
        self.cutoffs[mode + 1..].iter().map(|c| c + 1).product()
    }

    pub fn qubit_stride(&self, qubit: usize) -> usize {
        self.mode_dim() << (self.qubit_count - 1 - qubit)
    }

    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.mode_stride(mode)) % (self.cutoffs[mode] + 1)
    }

    pub fn qubit_value(&self, index: usize, qubit: usize) -> usize {
        (index / self.qubit_stride(qubit)) & 1
    }

    pub fn index_of(&self, qubits: &[usize], occupations: &[usize]) -> usize {
        let mut idx = 0;
        for (q, &b) in qubits.iter().enumerate() {
            idx += b * self.qubit_stride(q);
        }
        for (m, &n) in occupations.iter().enumerate() {
            idx += n * self.mode_stride(m);
        }
        idx
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.mode_count() {
            return Err(Error::Layout(format!("mode {mode} outside layout with {} modes", self.mode_count())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    layout: ModeLayout,
    amps: Vec<C64>,
    leakage: f64,
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

fn binom(n: usize, k: usize, fact: &[f64]) -> f64 {
    fact[n] / (fact[k] * fact[n - k])
}

/// Poisson tail P(N > cutoff) for mean `mean`, summed directly.
pub fn poisson_tail(mean: f64, cutoff: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut term = (-mean).exp();
    for n in 1..=cutoff + 1 {
        term *= mean / n as f64;
    }
    let mut sum = 0.0;
    let mut n = cutoff + 1;
    while term > sum * 1e-18 && term > 0.0 {
        sum += term;
        n += 1;
        term *= mean / n as f64;
    }
    sum
}

impl FockVector {
    pub fn zeros(layout: ModeLayout) -> Self {
        let dim = layout.dim();
        FockVector { layout, amps: vec![C64::new(0.0, 0.0); dim], leakage: 0.0 }
    }

    pub fn vacuum(layout: ModeLayout) -> Self {
        let mut v = FockVector::zeros(layout);
        v.amps[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_amplitudes(layout: ModeLayout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::Layout(format!("{} amplitudes for dimension {}", amps.len(), layout.dim())));
        }
        Ok(FockVector { layout, amps, leakage: 0.0 })
    }

    /// Truncated coherent state on one mode; the Poisson tail beyond the
    /// cutoff is recorded as leakage.
    pub fn coherent(alpha: C64, cutoff: usize) -> Self {
        let mean = alpha.norm_sqr();
        let mut amps = Vec::with_capacity(cutoff + 1);
        let mut c = C64::new((-mean / 2.0).exp(), 0.0);
        for n in 0..=cutoff {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            amps.push(c);
        }
        FockVector { layout: ModeLayout::uniform(1, cutoff, 0), amps, leakage: poisson_tail(mean, cutoff) }
    }

    pub fn number_state(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(Error::Domain(format!("occupation {n} above cutoff {cutoff}")));
        }
        let mut v = FockVector::zeros(ModeLayout::uniform(1, cutoff, 0));
        v.amps[n] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Single qubit a0|0> + a1|1> with no modes.
    pub fn qubit(a0: C64, a1: C64) -> Self {
        FockVector { layout: ModeLayout::new(vec![], 1), amps: vec![a0, a1], leakage: 0.0 }
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, qubits: &[usize], occupations: &[usize]) -> C64 {
        self.amps[self.layout.index_of(qubits, occupations)]
    }

    /// Squared norm discarded by truncation so far.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        FockVector {
            layout: self.layout.clone(),
            amps: self.amps.iter().map(|a| a * s).collect(),
            leakage: self.leakage * s.norm_sqr(),
        }
    }

    pub fn add(&self, other: &FockVector) -> Result<Self> {
        self.same_layout(other)?;
        Ok(FockVector {
            layout: self.layout.clone(),
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
            leakage: self.leakage + other.leakage,
        })
    }

    fn same_layout(&self, other: &FockVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Layout(format!("{:?} vs {:?}", self.layout, other.layout)));
        }
        Ok(())
    }

    /// Sesquilinear inner product <self|other>.
    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        self.same_layout(other)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// |<a|b>|^2 / (|a|^2 |b|^2).
    pub fn fidelity(&self, other: &FockVector) -> Result<f64> {
        let ov = self.inner(other)?.norm_sqr();
        Ok(ov / (self.norm_sqr() * other.norm_sqr()))
    }

    /// Tensor product; qubits of `self` precede those of `other`, and
    /// likewise for modes.
    pub fn tensor(&self, other: &FockVector) -> Self {
        let (la, lb) = (&self.layout, &other.layout);
        let mut cutoffs = la.cutoffs.clone();
        cutoffs.extend_from_slice(&lb.cutoffs);
        let layout = ModeLayout::new(cutoffs, la.qubit_count + lb.qubit_count);
        let (ma, mb) = (la.mode_dim(), lb.mode_dim());
        let (qa, qb) = (1usize << la.qubit_count, 1usize << lb.qubit_count);
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        for ia in 0..qa {
            for ib in 0..qb {
                let qi = ia * qb + ib;
                for xa in 0..ma {
                    let a = self.amps[ia * ma + xa];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let base = (qi * ma + xa) * mb;
                    let boff = ib * mb;
                    for xb in 0..mb {
                        amps[base + xb] = a * other.amps[boff + xb];
                    }
                }
            }
        }
        let leakage = self.leakage * other.norm_sqr() + other.leakage * self.norm_sqr();
        FockVector { layout, amps, leakage }
    }

    /// 50:50 beam splitter: a -> (c + d)/sqrt2, b -> (c - d)/sqrt2, so that
    /// |alpha>|beta> maps to |(alpha+beta)/sqrt2>|(alpha-beta)/sqrt2>.
    pub fn beam_splitter(&self, mode_a: usize, mode_b: usize) -> Result<Self> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.beam_splitter_with(mode_a, mode_b, s, s)
    }

    /// General real beam splitter a+ -> t c+ + r d+, b+ -> r c+ - t d+ with
    /// t^2 + r^2 = 1. Amplitude pushed beyond the cutoff is added to leakage.
    pub fn beam_splitter_with(&self, mode_a: usize, mode_b: usize, t: f64, r: f64) -> Result<Self> {
        let l = &self.layout;
        l.check_mode(mode_a)?;
        l.check_mode(mode_b)?;
        if mode_a == mode_b {
            return Err(Error::Layout("beam splitter needs two distinct modes".into()));
        }
        let cut = l.cutoff(mode_a);
        if l.cutoff(mode_b) != cut {
            return Err(Error::Layout(format!("cutoffs differ: {} vs {}", cut, l.cutoff(mode_b))));
        }
        let fact = factorials(2 * cut);
        // coeff[na][nb][k]: amplitude of |k, na+nb-k> from |na, nb>
        let mut coeff = vec![vec![Vec::new(); cut + 1]; cut + 1];
        for na in 0..=cut {
            for nb in 0..=cut {
                let n = na + nb;
                let norm = 1.0 / (fact[na] * fact[nb]).sqrt();
                let mut out = vec![0.0; n + 1];
                for i in 0..=na {
                    let ta = binom(na, i, &fact) * t.powi(i as i32) * r.powi((na - i) as i32);
                    for j in 0..=nb {
                        let tb = binom(nb, j, &fact) * r.powi(j as i32) * (-t).powi((nb - j) as i32);
                        out[i + j] += ta * tb;
                    }
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o *= norm * (fact[k] * fact[n - k]).sqrt();
                }
                coeff[na][nb] = out;
            }
        }
        let (sa, sb) = (l.mode_stride(mode_a), l.mode_stride(mode_b));
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        let mut leak = 0.0;
        let mut block = vec![C64::new(0.0, 0.0); (2 * cut + 1) * (2 * cut + 1)];
        let w = 2 * cut + 1;
        for base in 0..self.amps.len() {
            if l.occupation(base, mode_a) != 0 || l.occupation(base, mode_b) != 0 {
                continue;
            }
            block.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for na in 0..=cut {
                for nb in 0..=cut {
                    let a = self.amps[base + na * sa + nb * sb];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let n = na + nb;
                    for (k, c) in coeff[na][nb].iter().enumerate() {
                        block[k * w + (n - k)] += a * c;
                    }
                }
            }
            for k in 0..w {
                for m in 0..w {
                    let v = block[k * w + m];
                    if k <= cut && m <= cut {
                        amps[base + k * sa + m * sb] = v;
                    } else {
                        leak += v.norm_sqr();
                    }
                }
            }
        }
        Ok(FockVector { layout: l.clone(), amps, leakage: self.leakage + leak })
    }

    /// Appends a vacuum mode with the given cutoff as the last mode.
    pub fn append_vacuum_mode(&self, cutoff: usize) -> Self {
        let mut cutoffs = self.layout.cutoffs.clone();
        cutoffs.push(cutoff);
        let layout = ModeLayout::new(cutoffs, self.layout.qubit_count);
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * (cutoff + 1)] = *a;
        }
        FockVector { layout, amps, leakage: self.leakage }
    }

    /// Loss as a beam splitter of the given transmissivity coupling `mode`
    /// to a fresh vacuum ancilla appended as the last mode. The ancilla is
    /// kept; sum over its occupations to trace it out.
    pub fn loss_channel(&self, mode: usize, transmissivity: f64) -> Result<Self> {
        self.layout.check_mode(mode)?;
        if !(0.0..=1.0).contains(&transmissivity) {
            return Err(Error::Domain(format!("transmissivity {transmissivity} not in [0,1]")));
        }
        let ext = self.append_vacuum_mode(self.layout.cutoff(mode));
        let anc = ext.layout.mode_count() - 1;
        ext.beam_splitter_with(mode, anc, transmissivity.sqrt(), (1.0 - transmissivity).sqrt())
    }

    /// Keeps only amplitudes whose total occupation over `modes` equals `n`.
    pub fn number_projector(&self, modes: &[usize], n: usize) -> Result<Self> {
        let mut max = 0;
        for &m in modes {
            self.layout.check_mode(m)?;
            max += self.layout.cutoff(m);
        }
        if n > max {
            return Err(Error::Domain(format!("photon number {n} exceeds summed cutoff {max}")));
        }
        let mut out = self.clone();
        out.leakage = 0.0;
        for (i, a) in out.amps.iter_mut().enumerate() {
            let tot: usize = modes.iter().map(|&m| self.layout.occupation(i, m)).sum();
            if tot != n {
                *a = C64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }

    /// Contracts qubit `q` with the bra <bra| (given by the ket's
    /// amplitudes), removing that qubit from the layout.
    pub fn qubit_contract(&self, q: usize, ket: [C64; 2]) -> Result<Self> {
        let l = &self.layout;
        if q >= l.qubit_count {
            return Err(Error::Layout(format!("qubit {q} outside layout")));
        }
        let layout = ModeLayout::new(l.cutoffs.clone(), l.qubit_count - 1);
        let stride = l.qubit_stride(q);
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        let mut j = 0;
        for i in 0..self.amps.len() {
            if (i / stride) & 1 == 1 {
                continue;
            }
            amps[j] = ket[0].conj() * self.amps[i] + ket[1].conj() * self.amps[i + stride];
            j += 1;
        }
        Ok(FockVector { layout, amps, leakage: 0.0 })
    }

    /// Probability of each joint occupation pattern of `modes`.
    pub fn occupation_distribution(&self, modes: &[usize]) -> Result<BTreeMap<Vec<usize>, f64>> {
        for &m in modes {
            self.layout.check_mode(m)?;
        }
        let mut out = BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let key: Vec<usize> = modes.iter().map(|&m| self.layout.occupation(i, m)).collect();
            *out.entry(key).or_insert(0.0) += p;
        }
        Ok(out)
    }

    /// Reduced density matrix on the kept qubits and modes; rows are indexed
    /// in the sub-layout with the same ordering convention.
    pub fn reduced_density(&self, keep_qubits: &[usize], keep_modes: &[usize]) -> Result<DMatrix<C64>> {
        let l = &self.layout;
        for &m in keep_modes {
            l.check_mode(m)?;
        }
        if keep_qubits.iter().any(|&q| q >= l.qubit_count) {
            return Err(Error::Layout("qubit outside layout".into()));
        }
        let sub = ModeLayout::new(keep_modes.iter().map(|&m| l.cutoff(m)).collect(), keep_qubits.len());
        let rest_q: Vec<usize> = (0..l.qubit_count).filter(|q| !keep_qubits.contains(q)).collect();
        let rest_m: Vec<usize> = (0..l.mode_count()).filter(|m| !keep_modes.contains(m)).collect();
        let rest = ModeLayout::new(rest_m.iter().map(|&m| l.cutoff(m)).collect(), rest_q.len());
        let mut psi = DMatrix::<C64>::zeros(sub.dim(), rest.dim());
        for (i, a) in self.amps.iter().enumerate() {
            let sq: Vec<usize> = keep_qubits.iter().map(|&q| l.qubit_value(i, q)).collect();
            let so: Vec<usize> = keep_modes.iter().map(|&m| l.occupation(i, m)).collect();
            let rq: Vec<usize> = rest_q.iter().map(|&q| l.qubit_value(i, q)).collect();
            let ro: Vec<usize> = rest_m.iter().map(|&m| l.occupation(i, m)).collect();
            psi[(sub.index_of(&sq, &so), rest.index_of(&rq, &ro))] = *a;
        }
        Ok(&psi * psi.adjoint())
    }
}
