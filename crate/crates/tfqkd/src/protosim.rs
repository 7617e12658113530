//! Monte-Carlo simulation of the protocol under the honest relay model.
//!
//! Outcomes are tallied into a finite category space. The per-round sampler
//! draws every random variable of a round; the batched sampler draws one
//! multinomial over the analytic category probabilities.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{circle_average, click_stats, is_bit_error, slice_average, PhysicalParams};
use crate::decoy::PairCounts;
use crate::error::{domain, Error, Result};
use crate::keyrate::{CodeObservation, KeyCounts};
use crate::states::Basis;

pub const SCHEMA: &str = "tfqkd-counts/1";
/// Largest round count whose tallies stay exact in f64 downstream.
pub const MAX_ROUNDS: u64 = 1 << 53;
pub const DEFAULT_SHARDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Test,
    CodeZ,
    CodeX,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slice {
    In,
    Out,
    /// Test mode: phases stay secret.
    Na,
}

/// A detected round, coarse-grained to what the analysis uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category {
    pub mode: Mode,
    pub i_a: u8,
    pub i_b: u8,
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub bit_a: u8,
    pub bit_b: u8,
    pub slice: Slice,
    pub t: u8,
}

/// Key of the no-detection bucket.
pub const NONE_KEY: &str = "none";

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Test => "test",
            Mode::CodeZ => "codez",
            Mode::CodeX => "codex",
        };
        let slice = match self.slice {
            Slice::In => "in",
            Slice::Out => "out",
            Slice::Na => "na",
        };
        write!(
            f,
            "{mode}/{}{}/{}{}/{}{}/{slice}/t{}",
            self.i_a,
            self.i_b,
            self.basis_a.letter(),
            self.basis_b.letter(),
            self.bit_a,
            self.bit_b,
            self.t
        )
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Schema(format!("bad category key {s:?}"));
        let parts: Vec<&str> = s.split('/').collect();
        let [mode, pair, bases, bits, slice, t] = parts[..] else { return Err(bad()) };
        let mode = match mode {
            "test" => Mode::Test,
            "codez" => Mode::CodeZ,
            "codex" => Mode::CodeX,
            _ => return Err(bad()),
        };
        let slice = match slice {
            "in" => Slice::In,
            "out" => Slice::Out,
            "na" => Slice::Na,
            _ => return Err(bad()),
        };
        let two = |x: &str| -> Option<(char, char)> {
            let mut c = x.chars();
            let r = (c.next()?, c.next()?);
            c.next().is_none().then_some(r)
        };
        let digit = |c: char, max: u32| c.to_digit(10).filter(|d| *d <= max).map(|d| d as u8);
        let basis = |c: char| match c {
            'Z' => Some(Basis::Z),
            'Y' => Some(Basis::Y),
            _ => None,
        };
        let (pa, pb) = two(pair).ok_or_else(bad)?;
        let (ba, bb) = two(bases).ok_or_else(bad)?;
        let (ja, jb) = two(bits).ok_or_else(bad)?;
        let t = match t {
            "t1" => 1,
            "t2" => 2,
            _ => return Err(bad()),
        };
        let cat = Category {
            mode,
            i_a: digit(pa, 2).ok_or_else(bad)?,
            i_b: digit(pb, 2).ok_or_else(bad)?,
            basis_a: basis(ba).ok_or_else(bad)?,
            basis_b: basis(bb).ok_or_else(bad)?,
            bit_a: digit(ja, 1).ok_or_else(bad)?,
            bit_b: digit(jb, 1).ok_or_else(bad)?,
            slice,
            t,
        };
        if !cat.is_valid() {
            return Err(bad());
        }
        Ok(cat)
    }
}

impl Category {
    fn is_valid(&self) -> bool {
        match self.mode {
            Mode::Test => self.slice == Slice::Na,
            _ => self.i_a == self.i_b && self.slice != Slice::Na,
        }
    }

    pub fn matched_basis(&self) -> Option<Basis> {
        (self.basis_a == self.basis_b).then_some(self.basis_a)
    }

    /// Every category, in a fixed order.
    pub fn all() -> Vec<Category> {
        let mut out = Vec::new();
        for mode in [Mode::Test, Mode::CodeZ, Mode::CodeX] {
            for i_a in 0..3u8 {
                for i_b in 0..3u8 {
                    for basis_a in [Basis::Z, Basis::Y] {
                        for basis_b in [Basis::Z, Basis::Y] {
                            for bit_a in 0..2u8 {
                                for bit_b in 0..2u8 {
                                    for slice in [Slice::In, Slice::Out, Slice::Na] {
                                        for t in [1u8, 2] {
                                            let c = Category { mode, i_a, i_b, basis_a, basis_b, bit_a, bit_b, slice, t };
                                            if c.is_valid() {
                                                out.push(c);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    PerRound,
    #[default]
    Batched,
}

impl FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-round" => Ok(Sampler::PerRound),
            "batched" => Ok(Sampler::Batched),
            _ => Err(Error::Params(format!("unknown sampler {s:?}"))),
        }
    }
}

/// Outcome probabilities per round; the no-detection mass comes last.
#[derive(Clone, Debug)]
pub struct CategoryProbabilities {
    pub categories: Vec<Category>,
    pub probs: Vec<f64>,
    pub p_none: f64,
}

fn mode_weights(i_a: u8, i_b: u8, params: &PhysicalParams) -> [(Mode, f64); 3] {
    if i_a != i_b {
        [(Mode::Test, 1.0), (Mode::CodeZ, 0.0), (Mode::CodeX, 0.0)]
    } else {
        let pc = params.p_code();
        [(Mode::Test, params.p_test), (Mode::CodeZ, pc * params.p_z_code), (Mode::CodeX, pc * params.p_x_code())]
    }
}

pub fn category_probabilities(params: &PhysicalParams) -> Result<CategoryProbabilities> {
    params.validate()?;
    let frac = params.slice_fraction();
    let mut map: BTreeMap<Category, f64> = BTreeMap::new();
    for i_a in 0..3u8 {
        for i_b in 0..3u8 {
            let (ma, mb) = (params.intensities[i_a as usize], params.intensities[i_b as usize]);
            let p_pair = params.intensity_probs[i_a as usize] * params.intensity_probs[i_b as usize];
            if p_pair == 0.0 {
                continue;
            }
            for basis_a in [Basis::Z, Basis::Y] {
                for basis_b in [Basis::Z, Basis::Y] {
                    let p_bases = params.basis_prob_a(basis_a) * params.basis_prob_b(basis_b);
                    if p_bases == 0.0 {
                        continue;
                    }
                    for bit_a in 0..2u8 {
                        for bit_b in 0..2u8 {
                            let off = basis_a.encoding_phase(bit_a) - basis_b.encoding_phase(bit_b);
                            let w = p_pair * p_bases * 0.25;
                            for t in [1u8, 2] {
                                let full = circle_average(|x| click_stats(x + off, ma, mb, params).p_t(t));
                                let inside = frac * slice_average(params.slice_width, |x| click_stats(x + off, ma, mb, params).p_t(t));
                                for (mode, pm) in mode_weights(i_a, i_b, params) {
                                    if pm == 0.0 {
                                        continue;
                                    }
                                    let base = Category { mode, i_a, i_b, basis_a, basis_b, bit_a, bit_b, slice: Slice::Na, t };
                                    if mode == Mode::Test {
                                        map.insert(base, w * pm * full);
                                    } else {
                                        map.insert(Category { slice: Slice::In, ..base }, w * pm * inside);
                                        map.insert(Category { slice: Slice::Out, ..base }, w * pm * (full - inside).max(0.0));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let categories = Category::all();
    let probs: Vec<f64> = categories.iter().map(|c| map.get(c).copied().unwrap_or(0.0)).collect();
    let p_none = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    Ok(CategoryProbabilities { categories, probs, p_none })
}

/// Counts document exchanged between the simulator and the finite path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsDocument {
    pub schema: String,
    pub params: PhysicalParams,
    pub n_rounds: u64,
    pub seed: u64,
    pub sampler: Sampler,
    pub counts: BTreeMap<String, u64>,
}

impl CountsDocument {
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CountsDocument = serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.schema != SCHEMA {
            return Err(Error::Schema(format!("expected schema {SCHEMA}, found {}", doc.schema)));
        }
        doc.params.validate()?;
        let mut total = 0u64;
        for (k, v) in &doc.counts {
            if k != NONE_KEY {
                k.parse::<Category>()?;
            }
            total = total.checked_add(*v).ok_or_else(|| Error::Schema("count overflow".into()))?;
        }
        if total != doc.n_rounds {
            return Err(Error::Schema(format!("counts sum to {total}, document says {}", doc.n_rounds)));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn get(&self, c: &Category) -> u64 {
        self.counts.get(&c.to_string()).copied().unwrap_or(0)
    }

    /// Parsed (category, count) pairs, no-detection bucket excluded.
    pub fn iter(&self) -> impl Iterator<Item = (Category, u64)> + '_ {
        self.counts.iter().filter(|(k, _)| k.as_str() != NONE_KEY).filter_map(|(k, v)| Some((k.parse().ok()?, *v)))
    }

    /// Inputs for the finite key at the key intensity and announcement `t`.
    pub fn key_counts(&self, t: u8) -> KeyCounts {
        let mut test_pairs: PairCounts = [[0.0; 3]; 3];
        let mut code = CodeObservation::default();
        for (c, n) in self.iter() {
            let n = n as f64;
            if c.t != t {
                continue;
            }
            let Some(b) = c.matched_basis() else { continue };
            match c.mode {
                Mode::Test => test_pairs[c.i_a as usize][c.i_b as usize] += n,
                Mode::CodeZ if c.slice == Slice::In && c.i_a == 0 => match b {
                    Basis::Z => {
                        code.zz += n;
                        if is_bit_error(t, c.bit_a, c.bit_b) {
                            code.zz_err += n;
                        }
                    }
                    Basis::Y => {
                        code.yy += n;
                        if c.bit_a != c.bit_b {
                            code.yy_perp += n;
                        } else {
                            code.yy_par += n;
                        }
                    }
                },
                _ => {}
            }
        }
        KeyCounts { n_rounds: self.n_rounds as f64, t, test_pairs, code }
    }
}

fn check_rounds(n: u64) -> Result<()> {
    if n == 0 {
        return Err(domain("need at least one round"));
    }
    if n > MAX_ROUNDS {
        return Err(domain(format!("{n} rounds exceeds the supported maximum {MAX_ROUNDS}")));
    }
    Ok(())
}

/// Expected tallies N P(category); the last entry is the no-detection mass.
pub fn expected_counts(params: &PhysicalParams, n_rounds: f64) -> Result<BTreeMap<String, f64>> {
    let cp = category_probabilities(params)?;
    let mut out: BTreeMap<String, f64> = cp.categories.iter().zip(&cp.probs).map(|(c, p)| (c.to_string(), n_rounds * p)).collect();
    out.insert(NONE_KEY.to_string(), n_rounds * cp.p_none);
    Ok(out)
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0,1)").sample(rng)
}

fn sample_batched(cp: &CategoryProbabilities, n: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut left = n;
    let mut mass = 1.0;
    let mut out = vec![0u64; cp.probs.len()];
    for (slot, &p) in out.iter_mut().zip(&cp.probs) {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let k = binomial(&mut rng, left, (p / mass).min(1.0));
        *slot = k;
        left -= k;
        mass -= p;
    }
    out.push(left);
    out
}

struct RoundSampler<'a> {
    params: &'a PhysicalParams,
    index: BTreeMap<Category, usize>,
    none: usize,
}

impl RoundSampler<'_> {
    fn pick3(rng: &mut ChaCha8Rng, probs: &[f64; 3]) -> u8 {
        let u: f64 = rng.random();
        if u < probs[0] {
            0
        } else if u < probs[0] + probs[1] {
            1
        } else {
            2
        }
    }

    fn round(&self, rng: &mut ChaCha8Rng) -> usize {
        let p = self.params;
        let i_a = Self::pick3(rng, &p.intensity_probs);
        let i_b = Self::pick3(rng, &p.intensity_probs);
        let basis_a = if rng.random_bool(p.p_z_a) { Basis::Z } else { Basis::Y };
        let basis_b = if rng.random_bool(p.p_z_b) { Basis::Z } else { Basis::Y };
        let bit_a: u8 = rng.random_range(0..2);
        let bit_b: u8 = rng.random_range(0..2);
        let theta_a = rng.random_range(0.0..2.0 * PI);
        let theta_b = rng.random_range(0.0..2.0 * PI);
        let phi = theta_a - theta_b + basis_a.encoding_phase(bit_a) - basis_b.encoding_phase(bit_b);
        let s = click_stats(phi, p.intensities[i_a as usize], p.intensities[i_b as usize], p);
        let q1 = -(-s.mean_d1).exp_m1() + p.p_dark * (-s.mean_d1).exp();
        let q2 = -(-s.mean_d2).exp_m1() + p.p_dark * (-s.mean_d2).exp();
        let c1 = rng.random_bool(q1.clamp(0.0, 1.0));
        let c2 = rng.random_bool(q2.clamp(0.0, 1.0));
        let mut t = match (c1, c2) {
            (false, false) => return self.none,
            (true, false) => 1u8,
            (false, true) => 2,
            (true, true) => {
                if rng.random_bool(0.5) {
                    1
                } else {
                    2
                }
            }
        };
        if p.misalignment > 0.0 && rng.random_bool(p.misalignment) {
            t = 3 - t;
        }
        // mode is drawn after the detection is known
        let mode = if i_a != i_b {
            Mode::Test
        } else {
            let u: f64 = rng.random();
            if u < p.p_test {
                Mode::Test
            } else if u < p.p_test + p.p_code() * p.p_z_code {
                Mode::CodeZ
            } else {
                Mode::CodeX
            }
        };
        let slice = if mode == Mode::Test {
            Slice::Na
        } else {
            let d = (theta_a - theta_b).rem_euclid(2.0 * PI);
            if d.min(2.0 * PI - d) <= 0.5 * p.slice_width {
                Slice::In
            } else {
                Slice::Out
            }
        };
        self.index[&Category { mode, i_a, i_b, basis_a, basis_b, bit_a, bit_b, slice, t }]
    }
}

fn sample_per_round(params: &PhysicalParams, n: u64, seed: u64, shards: usize) -> Vec<u64> {
    let cats = Category::all();
    let none = cats.len();
    let index: BTreeMap<Category, usize> = cats.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let sampler = RoundSampler { params, index, none };
    let shards = shards.max(1) as u64;
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let rounds = n / shards + u64::from(s < n % shards);
            let mut tally = vec![0u64; none + 1];
            for _ in 0..rounds {
                tally[sampler.round(&mut rng)] += 1;
            }
            tally
        })
        .reduce(|| vec![0u64; none + 1], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
}

pub fn simulate(params: &PhysicalParams, n_rounds: u64, seed: u64, sampler: Sampler) -> Result<CountsDocument> {
    simulate_with_shards(params, n_rounds, seed, sampler, DEFAULT_SHARDS)
}

/// Results depend on `shards` for the per-round sampler, never on the
/// thread pool.
pub fn simulate_with_shards(params: &PhysicalParams, n_rounds: u64, seed: u64, sampler: Sampler, shards: usize) -> Result<CountsDocument> {
    check_rounds(n_rounds)?;
    params.validate()?;
    let cats = Category::all();
    let tally = match sampler {
        Sampler::Batched => sample_batched(&category_probabilities(params)?, n_rounds, seed),
        Sampler::PerRound => sample_per_round(params, n_rounds, seed, shards),
    };
    let mut counts = BTreeMap::new();
    for (c, &k) in cats.iter().zip(&tally) {
        if k > 0 {
            counts.insert(c.to_string(), k);
        }
    }
    counts.insert(NONE_KEY.to_string(), tally[cats.len()]);
    Ok(CountsDocument { schema: SCHEMA.to_string(), params: params.clone(), n_rounds, seed, sampler, counts })
}
