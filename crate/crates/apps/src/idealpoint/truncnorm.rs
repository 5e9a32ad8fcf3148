//! Standard normal draws restricted to a half line.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

const TAIL_SWITCH: f64 = 5.0;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Draws `Z ~ N(0, 1)` conditioned on `Z > lower`.
///
/// Inverse CDF on the upper tail in the bulk, exponential-proposal rejection
/// far in the right tail, plain rejection when the bound is far to the left.
pub fn std_normal_above<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower > TAIL_SWITCH {
        let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = lower + exp.sample(rng);
            let accept = (-0.5 * (z - rate) * (z - rate)).exp();
            if rng.random::<f64>() < accept {
                return z;
            }
        }
    }
    if lower < -TAIL_SWITCH {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > lower {
                return z;
            }
        }
    }
    // P(Z > z) = w P(Z > lower) with w uniform on (0, 1]
    let w = 1.0 - rng.random::<f64>();
    let tail = w * erfc(lower / std::f64::consts::SQRT_2);
    let z = std::f64::consts::SQRT_2 * erfc_inv(tail);
    z.max(lower)
}

/// Draws from `N(mean, 1)` restricted to `(0, ∞)` when `positive`, otherwise
/// to `(-∞, 0)`.
pub fn unit_normal_signed<R: Rng + ?Sized>(mean: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        mean + std_normal_above(-mean, rng)
    } else {
        mean - std_normal_above(mean, rng)
    }
}
