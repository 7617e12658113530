//! Synthetic Test-mode data for decoy experiments.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use tfqkd::channel::{is_low_photon, PhysicalParams, YieldTable};
use tfqkd::decoy::{q_fock, q_intensity_given_fock, IntensityModel, PairCounts};

pub const MAX_N: usize = 8;

/// Expected matched-basis t=1 detections per photon-number pair over
/// `test_rounds` Test rounds, rounded to whole counts.
pub fn fock_truth(params: &PhysicalParams, test_rounds: f64) -> Vec<((usize, usize), u64)> {
    let model = IntensityModel::from_params(params);
    let table = YieldTable::new(params, MAX_N).unwrap();
    let mut out = Vec::new();
    for na in 0..=MAX_N {
        for nb in 0..=MAX_N {
            let y = table.yield_for(na, nb).unwrap().0;
            let n = (test_rounds * q_fock(na, nb, &model) * y).round() as u64;
            if n > 0 {
                out.push(((na, nb), n));
            }
        }
    }
    out
}

pub struct Trial {
    pub counts: PairCounts,
    /// Multiphoton detections that landed on the key pair.
    pub x1_at_key: f64,
}

/// Assigns every photon-number detection to an intensity pair.
pub fn split(truth: &[((usize, usize), u64)], model: &IntensityModel, seed: u64) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [[0.0; 3]; 3];
    let mut x1 = 0.0;
    for &((na, nb), n) in truth {
        let mut left = n;
        let mut mass = 1.0;
        for k in 0..9 {
            let (ia, ib) = (k / 3, k % 3);
            let q = q_intensity_given_fock(ia, ib, na, nb, model).unwrap_or(0.0);
            let take = if k == 8 || mass <= q {
                left
            } else if q <= 0.0 || left == 0 {
                0
            } else {
                Binomial::new(left, (q / mass).min(1.0)).unwrap().sample(&mut rng)
            };
            left -= take;
            mass -= q;
            counts[ia][ib] += take as f64;
            if (ia, ib) == (0, 0) && !is_low_photon(na, nb) {
                x1 += take as f64;
            }
        }
    }
    Trial { counts, x1_at_key: x1 }
}
