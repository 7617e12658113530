//! Entropy, divergence and concentration deviations used by the finite-key
//! analysis.

use crate::error::{domain, Result};

/// Which side of the mean a Chernoff deviation protects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tail {
    Upper,
    Lower,
}

/// Result of a Chernoff inversion. `saturated` is set when no root exists in
/// the domain and `delta` was clamped to the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChernoffDelta {
    pub delta: f64,
    pub saturated: bool,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(domain(format!("failure probability {eps} not in (0,1]")));
    }
    Ok(())
}

fn check_trials(n: f64) -> Result<()> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(domain(format!("trial count {n} must be >= 1")));
    }
    Ok(())
}

fn xlogx_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("entropy argument {x} not in [0,1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Binary relative entropy D(x||y) in nats.
pub fn kl_divergence(x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(domain(format!("divergence arguments ({x},{y}) not in [0,1]")));
    }
    if (y == 0.0 || y == 1.0) && x != y {
        return Err(domain(format!("divergence infinite for y={y}, x={x}")));
    }
    if x == y {
        return Ok(0.0);
    }
    Ok((xlogx_ratio(x, y) + xlogx_ratio(1.0 - x, 1.0 - y)).max(0.0))
}

/// Azuma deviation sqrt((2/n) ln(1/eps)).
pub fn azuma_delta(n: f64, eps: f64) -> Result<f64> {
    check_trials(n)?;
    check_eps(eps)?;
    Ok((2.0 / n * (1.0 / eps).ln()).sqrt())
}

/// Hoeffding deviation sqrt(ln(1/eps)/(2n)).
pub fn hoeffding_delta(n: f64, eps: f64) -> Result<f64> {
    check_trials(n)?;
    check_eps(eps)?;
    Ok(((1.0 / eps).ln() / (2.0 * n)).sqrt())
}

/// Solves exp(-n D(p +- delta || p)) = eps for delta by bisection.
///
/// The returned delta is the upper end of the final bracket, so the tail
/// bound at the returned value never exceeds `eps`.
pub fn chernoff_delta(p: f64, n: f64, eps: f64, tail: Tail) -> Result<ChernoffDelta> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("base probability {p} not in (0,1)")));
    }
    check_trials(n)?;
    check_eps(eps)?;
    let target = (1.0 / eps).ln();
    if target == 0.0 {
        return Ok(ChernoffDelta { delta: 0.0, saturated: false });
    }
    let max_delta = match tail {
        Tail::Upper => 1.0 - p,
        Tail::Lower => p,
    };
    let exponent = |d: f64| {
        let x = match tail {
            Tail::Upper => (p + d).min(1.0),
            Tail::Lower => (p - d).max(0.0),
        };
        n * kl_divergence(x, p).unwrap_or(f64::INFINITY)
    };
    if exponent(max_delta) < target {
        return Ok(ChernoffDelta { delta: max_delta, saturated: true });
    }
    let (mut lo, mut hi) = (0.0_f64, max_delta);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exponent(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(ChernoffDelta { delta: hi, saturated: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_values() {
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.11).unwrap(), 0.499916, epsilon = 1e-6);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn divergence_values() {
        assert_eq!(kl_divergence(0.3, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(0.5, 0.25).unwrap(), 0.143841, epsilon = 1e-6);
        assert_abs_diff_eq!(kl_divergence(1.0, 0.5).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(kl_divergence(0.5, 0.0).is_err());
    }

    #[test]
    fn azuma_and_hoeffding() {
        assert_eq!(azuma_delta(10.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(azuma_delta(200.0, 0.01).unwrap(), 0.214597, epsilon = 1e-6);
        let a = azuma_delta(300.0, 1e-5).unwrap();
        assert_abs_diff_eq!(azuma_delta(600.0, 1e-5).unwrap(), a / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(hoeffding_delta(1000.0, 1e-10).unwrap(), 0.107298, epsilon = 1e-6);
        assert_eq!(hoeffding_delta(5.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(hoeffding_delta(77.0, 0.2).unwrap(), azuma_delta(77.0, 0.2).unwrap() / 2.0, epsilon = 1e-15);
        assert!(azuma_delta(0.5, 0.1).is_err());
        assert!(hoeffding_delta(10.0, 0.0).is_err());
    }

    #[test]
    fn chernoff_self_consistent() {
        let r = chernoff_delta(0.5, 1e4, 1e-6, Tail::Upper).unwrap();
        assert!(!r.saturated);
        assert_abs_diff_eq!(r.delta, 0.0262766, epsilon = 1e-6);
        let resid = (-kl_divergence(0.5 + r.delta, 0.5).unwrap() * 1e4).exp() - 1e-6;
        assert!(resid.abs() < 1e-9);
        assert_eq!(chernoff_delta(0.3, 100.0, 1.0, Tail::Lower).unwrap().delta, 0.0);
    }

    #[test]
    fn chernoff_saturates() {
        // p^n = 0.9^5 > 1e-2, so the upper tail cannot be pushed below eps
        let r = chernoff_delta(0.9, 5.0, 1e-2, Tail::Upper).unwrap();
        assert!(r.saturated);
        assert_abs_diff_eq!(r.delta, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn chernoff_tail_direction() {
        let up = chernoff_delta(0.2, 500.0, 1e-4, Tail::Upper).unwrap().delta;
        let dn = chernoff_delta(0.2, 500.0, 1e-4, Tail::Lower).unwrap().delta;
        assert!(up > dn, "upper tail of a p<1/2 binomial is heavier: {up} {dn}");
    }
}
