use std::collections::BTreeMap;

use tfqkd::channel::PhysicalParams;
use tfqkd::protosim::{expected_counts, simulate, simulate_with_shards, Mode, Sampler, Slice};

fn params() -> PhysicalParams {
    PhysicalParams { distance_km: 20.0, ..PhysicalParams::default() }
}

/// Tallies by (mode, intensity pair, t), which keeps every bucket populated.
fn coarse(doc: &tfqkd::protosim::CountsDocument) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for (c, n) in doc.iter() {
        *out.entry(format!("{:?}/{}{}/t{}", c.mode, c.i_a, c.i_b, c.t)).or_insert(0) += n;
    }
    out
}

#[test]
fn per_round_and_batched_agree() {
    let n = 2_000_000;
    let a = coarse(&simulate(&params(), n, 11, Sampler::PerRound).unwrap());
    let b = coarse(&simulate(&params(), n, 12, Sampler::Batched).unwrap());
    for (k, &x) in &a {
        let y = *b.get(k).unwrap_or(&0);
        let sigma = ((x + y) as f64).sqrt().max(1.0);
        assert!(((x as f64) - (y as f64)).abs() <= 5.0 * sigma, "{k}: {x} vs {y}");
    }
}

#[test]
fn per_round_matches_expectation() {
    let n = 2_000_000u64;
    let p = params();
    let doc = simulate(&p, n, 5, Sampler::PerRound).unwrap();
    let exp = expected_counts(&p, n as f64).unwrap();
    let det_obs: u64 = doc.iter().map(|(_, c)| c).sum();
    let det_exp: f64 = exp.iter().filter(|(k, _)| k.as_str() != "none").map(|(_, v)| v).sum();
    assert!((det_obs as f64 - det_exp).abs() < 5.0 * det_exp.sqrt(), "{det_obs} vs {det_exp}");
}

#[test]
fn code_slice_fraction() {
    let p = params();
    let doc = simulate(&p, 3_000_000, 3, Sampler::PerRound).unwrap();
    let (mut inside, mut all) = (0u64, 0u64);
    for (c, n) in doc.iter() {
        if c.mode != Mode::Test {
            all += n;
            if c.slice == Slice::In {
                inside += n;
            }
        }
    }
    // detection rate is flat in the phase difference once averaged over bits
    let f = inside as f64 / all as f64;
    let want = p.slice_fraction();
    let sigma = (want * (1.0 - want) / all as f64).sqrt();
    assert!((f - want).abs() < 5.0 * sigma, "{f} vs {want}");
}

#[test]
fn shard_count_is_part_of_the_stream() {
    let p = params();
    let a = simulate_with_shards(&p, 100_000, 9, Sampler::PerRound, 4).unwrap();
    let b = simulate_with_shards(&p, 100_000, 9, Sampler::PerRound, 4).unwrap();
    assert_eq!(a.counts, b.counts);
    let total: u64 = a.counts.values().sum();
    assert_eq!(total, 100_000);
}
