//! Run configuration, rate scans, finite evaluation and the identity suite
//! behind the `tfqkd` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{plob_bound_with, PhysicalParams, LOW_PHOTON_SET};
use crate::fock::{FockVector, DEFAULT_CUTOFF};
use crate::keyrate::{finite_key_length, total_asymptotic_rate, EpsilonBudget, KeyRateResult, RateFlags};
use crate::protosim::{simulate, CountsDocument, Sampler};
use crate::states::{coin_state, prob_xc1_in_state, purification_identity_check, DEFAULT_PHASE_GRID};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub l_min: f64,
    pub l_max: f64,
    pub l_step: f64,
    /// Overrides the key intensity.
    pub mu: Option<f64>,
    /// Sum t=1 and t=2 into rate_total.
    pub sum_both: bool,
    pub log10: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { l_min: 100.0, l_max: 700.0, l_step: 10.0, mu: None, sum_both: true, log10: false }
    }
}

impl ScanConfig {
    pub fn distances(&self) -> Result<Vec<f64>> {
        let ok = self.l_min.is_finite() && self.l_max.is_finite() && self.l_step > 0.0 && self.l_max >= self.l_min;
        if !ok {
            return Err(Error::Params(format!(
                "empty scan grid: l_min={} l_max={} l_step={}",
                self.l_min, self.l_max, self.l_step
            )));
        }
        let n = ((self.l_max - self.l_min) / self.l_step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.l_min + i as f64 * self.l_step).collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub sampler: Sampler,
    pub n_rounds: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 1, sampler: Sampler::Batched, n_rounds: 1_000_000_000_000, output: None, format: OutputFormat::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub cutoff: usize,
    pub phase_grid: usize,
    /// Mean photon number per pulse; defaults to the key intensity.
    pub mu: Option<f64>,
    /// Phases per party for the zero-bias sweep.
    pub theta_points: usize,
    pub covariance_pairs: usize,
    pub max_mean: f64,
    pub tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            cutoff: DEFAULT_CUTOFF,
            phase_grid: DEFAULT_PHASE_GRID,
            mu: None,
            theta_points: 8,
            covariance_pairs: 100,
            max_mean: 0.05,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub epsilon: EpsilonBudget,
    pub scan: ScanConfig,
    pub run: RunSection,
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Params(format!("config: {e}")))?;
        cfg.physical.validate()?;
        cfg.epsilon.validate()?;
        Ok(cfg)
    }

    /// Physical parameters with the key intensity replaced by `mu`. A decoy
    /// equal to `mu` takes the old key value so intensities stay distinct.
    pub fn params_with_mu(&self, mu: Option<f64>) -> PhysicalParams {
        let mut p = self.physical.clone();
        if let Some(mu) = mu {
            let old = p.intensities[0];
            if let Some(slot) = p.intensities[1..].iter().position(|&m| m == mu) {
                p.intensities[slot + 1] = old;
            }
            p.intensities[0] = mu;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub l_km: f64,
    pub rate_total: f64,
    pub rate_mu_t1: f64,
    pub rate_mu_t2: f64,
    pub plob: f64,
    pub e_z: f64,
    pub e_y: f64,
    pub delta_bias: f64,
    pub flags: String,
    pub t1: KeyRateResult,
    pub t2: KeyRateResult,
}

fn flag_names(prefix: &str, f: &RateFlags, out: &mut Vec<String>) {
    if f.phase_error_saturated {
        out.push(format!("{prefix}:phase_sat"));
    }
    if f.vacuous_bound {
        out.push(format!("{prefix}:vacuous"));
    }
    if f.transfer_saturated {
        out.push(format!("{prefix}:transfer_sat"));
    }
    if f.decoy.ill_conditioned {
        out.push(format!("{prefix}:ill_cond"));
    }
    if f.decoy.infeasible {
        out.push(format!("{prefix}:infeasible"));
    }
}

/// One asymptotic row per distance, in grid order.
pub fn rate_scan(config: &RunConfig) -> Result<Vec<ScanRow>> {
    let distances = config.scan.distances()?;
    let base = config.params_with_mu(config.scan.mu);
    base.validate()?;
    let sum_both = config.scan.sum_both;
    distances
        .par_iter()
        .map(|&l| {
            let p = base.with_distance(l);
            let s = total_asymptotic_rate(&p, sum_both)?;
            let mut flags = Vec::new();
            flag_names("t1", &s.t1.flags, &mut flags);
            flag_names("t2", &s.t2.flags, &mut flags);
            Ok(ScanRow {
                l_km: l,
                rate_total: s.total,
                rate_mu_t1: s.t1.rate,
                rate_mu_t2: s.t2.rate,
                // capacity is unbounded at zero distance
                plob: if l > 0.0 { plob_bound_with(l, p.alpha, p.loss_model)? } else { f64::INFINITY },
                e_z: s.t1.e_z,
                e_y: s.t1.e_y,
                delta_bias: s.t1.delta_bias,
                flags: flags.join("|"),
                t1: s.t1,
                t2: s.t2,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "L_km,rate_total,rate_mu_t1,rate_mu_t2,plob,eZ,eY,delta_bias,flags";

fn rate_field(v: f64, log10: bool) -> String {
    if !log10 {
        format!("{v:e}")
    } else if v > 0.0 {
        format!("{:e}", v.log10())
    } else {
        String::new()
    }
}

/// Rates and PLOB become log10 values under `log10`; a zero rate leaves
/// the field empty.
pub fn write_csv(rows: &[ScanRow], log10: bool) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:e},{}",
            r.l_km,
            rate_field(r.rate_total, log10),
            rate_field(r.rate_mu_t1, log10),
            rate_field(r.rate_mu_t2, log10),
            rate_field(r.plob, log10),
            r.e_z,
            r.e_y,
            r.delta_bias,
            r.flags
        );
    }
    s
}

pub fn write_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

pub enum CountsSource {
    Simulate { n_rounds: u64, seed: u64, sampler: Sampler },
    Document(Box<CountsDocument>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteReport {
    pub n_rounds: u64,
    pub seed: u64,
    pub sampler: Sampler,
    pub distance_km: f64,
    pub results: Vec<KeyRateResult>,
    pub key_length: f64,
    /// Asymptotic rate times the round count, for comparison.
    pub asymptotic_key_length: f64,
    pub eps_pe: f64,
    pub eps_s: f64,
}

/// Finite key over both announcements. A counts document carries its own
/// physical parameters, which take precedence over the config.
pub fn finite_eval(config: &RunConfig, source: CountsSource) -> Result<FiniteReport> {
    let doc = match source {
        CountsSource::Simulate { n_rounds, seed, sampler } => simulate(&config.physical, n_rounds, seed, sampler)?,
        CountsSource::Document(d) => *d,
    };
    let params = &doc.params;
    let mu = params.intensities[0];
    let mut results = Vec::with_capacity(2);
    for t in [1u8, 2] {
        results.push(finite_key_length(&doc.key_counts(t), &config.epsilon, params, mu)?);
    }
    let asym = total_asymptotic_rate(params, true)?.total * doc.n_rounds as f64;
    Ok(FiniteReport {
        n_rounds: doc.n_rounds,
        seed: doc.seed,
        sampler: doc.sampler,
        distance_km: params.distance_km,
        key_length: results.iter().map(|r| r.key_length).sum(),
        results,
        asymptotic_key_length: asym,
        eps_pe: config.epsilon.parameter_estimation(),
        eps_s: config.epsilon.secrecy(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "ok     " } else { "FLAGGED" };
            let _ = writeln!(s, "{tag} {:<18} max_dev={:.3e} tol={:.0e}  {}", c.name, c.max_deviation, c.tolerance, c.detail);
        }
        s
    }
}

fn check(name: &str, dev: f64, tol: f64, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: dev <= tol, max_deviation: dev, tolerance: tol, detail }
}

/// Largest P(X_C=1 | n_A, n_B) over the low-photon set and a phase grid.
pub fn low_photon_bias_max(mu: f64, params: &PhysicalParams, cutoff: usize, theta_points: usize) -> Result<f64> {
    let coin = params.coin()?;
    let thetas: Vec<f64> = (0..theta_points).map(|k| 2.0 * std::f64::consts::PI * k as f64 / theta_points as f64).collect();
    let pairs: Vec<(f64, f64)> = thetas.iter().flat_map(|&a| thetas.iter().map(move |&b| (a, b))).collect();
    let worst = pairs
        .par_iter()
        .map(|&(ta, tb)| -> Result<f64> {
            let st = coin_state(ta, tb, mu, coin, cutoff)?;
            let mut w = 0.0_f64;
            for (na, nb) in LOW_PHOTON_SET {
                if let Some(p) = prob_xc1_in_state(&st, na, nb, coin)? {
                    w = w.max(p);
                }
            }
            Ok(w)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Worst fidelity deficit of BS|a>|b> against |(a+b)/sqrt2>|(a-b)/sqrt2>
/// over seeded random pairs with |a|^2, |b|^2 <= max_mean.
pub fn beam_splitter_covariance(pairs: usize, max_mean: f64, cutoff: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let r = (rng.random::<f64>() * max_mean).sqrt();
        C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
    };
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let out = FockVector::coherent(a, cutoff).tensor(&FockVector::coherent(b, cutoff)).beam_splitter(0, 1)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let target = FockVector::coherent((a + b) * s, cutoff).tensor(&FockVector::coherent((a - b) * s, cutoff));
        let f = out.fidelity(&target)?;
        worst = worst.max(1.0 - f);
    }
    Ok(worst)
}

/// Runs the identity suite; failures are report entries, not errors.
pub fn verify(config: &RunConfig) -> Result<VerifyReport> {
    let v = &config.verify;
    let mu = v.mu.unwrap_or(config.physical.intensities[0]);
    let mut checks = Vec::new();

    let pur = purification_identity_check(mu, v.cutoff, v.phase_grid)?;
    // the expansion is infinite; a truncated tail counts as deviation
    let dev = pur.max_deviation.max(pur.truncation_tail);
    checks.push(check(
        "purification",
        dev,
        v.tolerance,
        format!("grid={} cutoff={} grid_dev={:.3e} tail={:.3e}", v.phase_grid, v.cutoff, pur.max_deviation, pur.truncation_tail),
    ));

    let bias = low_photon_bias_max(mu, &config.physical, v.cutoff, v.theta_points)?;
    checks.push(check("low_photon_bias", bias, 1e-12, format!("{}x{} phases, mu={mu}", v.theta_points, v.theta_points)));

    let cov = beam_splitter_covariance(v.covariance_pairs, v.max_mean, v.cutoff, config.run.seed)?;
    checks.push(check("bs_covariance", cov, 1e-9, format!("{} pairs, |alpha|^2<={}", v.covariance_pairs, v.max_mean)));

    let hom = FockVector::number_state(1, 2)?.tensor(&FockVector::number_state(1, 2)?).beam_splitter(0, 1)?;
    let coinc = hom.amplitude(&[], &[1, 1]).norm_sqr();
    checks.push(check("two_photon_dip", coinc, 1e-15, "P(1,1) after 50:50".into()));

    let (e1, e2) = (0.37, 0.58);
    let alpha = C64::new(mu.sqrt().max(0.1), 0.0);
    let twice = FockVector::coherent(alpha, v.cutoff).loss_channel(0, e1)?.loss_channel(0, e2)?;
    let once = FockVector::coherent(alpha, v.cutoff).loss_channel(0, e1 * e2)?;
    let d2 = twice.occupation_distribution(&[0])?;
    let d1 = once.occupation_distribution(&[0])?;
    let loss_dev = d1.iter().map(|(k, p)| (p - d2.get(k).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max);
    checks.push(check("loss_composition", loss_dev, v.tolerance, format!("eta={e1}*{e2}")));

    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_rejected() {
        let mut c = RunConfig::default();
        c.scan.l_max = 50.0;
        assert!(rate_scan(&c).is_err());
        c.scan = ScanConfig { l_step: 0.0, ..ScanConfig::default() };
        assert!(rate_scan(&c).is_err());
    }

    #[test]
    fn grid_includes_end() {
        let s = ScanConfig { l_min: 100.0, l_max: 700.0, l_step: 100.0, ..ScanConfig::default() };
        assert_eq!(s.distances().unwrap(), vec![100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0]);
    }

    #[test]
    fn zero_mu_scan_is_zero() {
        let mut c = RunConfig::default();
        c.scan = ScanConfig { l_min: 0.0, l_max: 300.0, l_step: 100.0, mu: Some(0.0), ..ScanConfig::default() };
        let rows = rate_scan(&c).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.rate_total == 0.0));
        let csv = write_csv(&rows, true);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,,,,"));
    }

    #[test]
    fn mu_override_keeps_intensities_distinct() {
        let c = RunConfig::default();
        let p = c.params_with_mu(Some(0.0003));
        assert_eq!(p.intensities, [0.0003, 0.0012, 0.0]);
        p.validate().unwrap();
    }

    #[test]
    fn csv_header_and_stability() {
        let mut c = RunConfig::default();
        c.scan = ScanConfig { l_min: 100.0, l_max: 200.0, l_step: 50.0, ..ScanConfig::default() };
        let a = write_csv(&rate_scan(&c).unwrap(), false);
        let b = write_csv(&rate_scan(&c).unwrap(), false);
        assert_eq!(a, b);
        assert_eq!(a.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn toml_sections() {
        let c = RunConfig::from_toml(
            "[physical]\ndistance_km = 50.0\n[scan]\nl_min = 10.0\nl_max = 20.0\nl_step = 5.0\n[run]\nseed = 7\nsampler = \"per-round\"\n",
        )
        .unwrap();
        assert_eq!(c.physical.distance_km, 50.0);
        assert_eq!(c.run.sampler, Sampler::PerRound);
        assert_eq!(c.scan.distances().unwrap().len(), 3);
        assert!(RunConfig::from_toml("[physical]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[physical]\neta_det = 2.0\n").is_err());
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let c = RunConfig::from_toml(include_str!("../config/default.toml")).unwrap();
        let d = RunConfig::default();
        assert_eq!(c.physical, d.physical);
        assert_eq!(c.epsilon, d.epsilon);
        assert_eq!(c.scan, d.scan);
        assert_eq!(c.verify, d.verify);
    }

    #[test]
    fn zero_counts_give_zero_key() {
        let c = RunConfig::default();
        let mut counts = std::collections::BTreeMap::new();
        counts.insert("none".to_string(), 1000u64);
        let doc = CountsDocument {
            schema: crate::protosim::SCHEMA.into(),
            params: c.physical.clone(),
            n_rounds: 1000,
            seed: 0,
            sampler: Sampler::Batched,
            counts,
        };
        let r = finite_eval(&c, CountsSource::Document(Box::new(doc))).unwrap();
        assert_eq!(r.key_length, 0.0);
        assert!((r.eps_s - (2.0 * (c.epsilon.pa + c.epsilon.parameter_estimation())).sqrt()).abs() < 1e-20);
    }

    #[test]
    fn verify_default_passes() {
        let mut c = RunConfig::default();
        c.verify.theta_points = 3;
        c.verify.covariance_pairs = 5;
        let r = verify(&c).unwrap();
        assert!(r.all_passed(), "{}", r.render());
    }

    #[test]
    fn verify_cutoff_one_flags_purification() {
        let mut c = RunConfig::default();
        c.verify = VerifyConfig { cutoff: 1, theta_points: 2, covariance_pairs: 3, ..VerifyConfig::default() };
        let r = verify(&c).unwrap();
        let pur = &r.checks[0];
        assert!(!pur.passed);
        assert!(pur.max_deviation > 1e-4);
    }

    #[test]
    fn verify_vacuum_is_trivial() {
        let mut c = RunConfig::default();
        c.verify = VerifyConfig { mu: Some(0.0), theta_points: 2, covariance_pairs: 3, ..VerifyConfig::default() };
        let r = verify(&c).unwrap();
        assert!(r.all_passed(), "{}", r.render());
        assert_eq!(r.checks[1].max_deviation, 0.0);
    }
}
