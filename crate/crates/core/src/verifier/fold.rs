//! Folding `sign(batch_norm(x))` into a per-channel threshold test.

use crate::bnn::BatchNorm;

/// When a folded channel emits `+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// `+1` iff `x >= t`.
    AtLeast(f64),
    /// `+1` iff `x <= t`.
    AtMost(f64),
    /// The same sign for every finite input.
    Constant(bool),
}

impl ThresholdRule {
    pub fn fires(&self, x: f64) -> bool {
        match *self {
            ThresholdRule::AtLeast(t) => x >= t,
            ThresholdRule::AtMost(t) => x <= t,
            ThresholdRule::Constant(b) => b,
        }
    }
}

/// Analytic threshold `mean - beta * sqrt(var + eps) / gamma`.
pub fn nominal_threshold(bn: &BatchNorm, c: usize) -> f64 {
    bn.moving_mean[c] - bn.beta[c] * bn.scale_denominator(c) / bn.gamma[c]
}

// Order-preserving map from finite floats to integers (both zeros map to 0).
fn key(x: f64) -> i128 {
    let b = i128::from(x.abs().to_bits());
    if x.is_sign_negative() {
        -b
    } else {
        b
    }
}

fn unkey(k: i128) -> f64 {
    let v = f64::from_bits(k.unsigned_abs() as u64);
    if k < 0 {
        -v
    } else {
        v
    }
}

/// One rule per channel, exact against the floating-point composition
/// `sign(bn.apply(c, x))` for every finite `x`.
///
/// The batch norm is monotone in `x`, so the set where it is non-negative is
/// a ray. Its endpoint is located by bisection over the ordered floats, which
/// absorbs the rounding that makes the analytic threshold off by an ulp.
pub fn fold_bn_sign(bn: &BatchNorm) -> Vec<ThresholdRule> {
    (0..bn.channels()).map(|c| fold_channel(bn, c)).collect()
}

fn fold_channel(bn: &BatchNorm, c: usize) -> ThresholdRule {
    let g = bn.gamma[c];
    let fires = |x: f64| bn.apply(c, x) >= 0.0;
    if g == 0.0 {
        return ThresholdRule::Constant(fires(0.0));
    }
    let (lo, hi) = (key(-f64::MAX), key(f64::MAX));
    if g > 0.0 {
        // Smallest x that fires.
        if !fires(f64::MAX) {
            return ThresholdRule::Constant(false);
        }
        if fires(-f64::MAX) {
            return ThresholdRule::Constant(true);
        }
        let (mut a, mut b) = (lo, hi); // fires(b), !fires(a)
        while b - a > 1 {
            let m = (a + b).div_euclid(2);
            if fires(unkey(m)) {
                b = m;
            } else {
                a = m;
            }
        }
        ThresholdRule::AtLeast(unkey(b))
    } else {
        // Largest x that fires.
        if !fires(-f64::MAX) {
            return ThresholdRule::Constant(false);
        }
        if fires(f64::MAX) {
            return ThresholdRule::Constant(true);
        }
        let (mut a, mut b) = (lo, hi); // fires(a), !fires(b)
        while b - a > 1 {
            let m = (a + b).div_euclid(2);
            if fires(unkey(m)) {
                a = m;
            } else {
                b = m;
            }
        }
        ThresholdRule::AtMost(unkey(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::ops::{batchnorm_forward, sign_quantize};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn bn1(gamma: f64, beta: f64, mean: f64, var: f64, eps: f64) -> BatchNorm {
        BatchNorm {
            gamma: vec![gamma],
            beta: vec![beta],
            moving_mean: vec![mean],
            moving_variance: vec![var],
            eps,
        }
    }

    #[test]
    fn identity_bn_is_raw_sign() {
        let r = fold_bn_sign(&bn1(1.0, 0.0, 0.0, 1.0, 0.0))[0];
        assert_eq!(r, ThresholdRule::AtLeast(0.0));
        assert!(r.fires(0.0) && !r.fires(-1e-300));
    }

    #[test]
    fn negative_gamma_flips_direction() {
        let r = fold_bn_sign(&bn1(-1.0, 0.0, 5.0, 1.0, 0.0))[0];
        assert_eq!(r, ThresholdRule::AtMost(5.0));
    }

    #[test]
    fn zero_gamma_is_sign_of_beta() {
        assert_eq!(
            fold_bn_sign(&bn1(0.0, -0.5, 3.0, 1.0, 0.0))[0],
            ThresholdRule::Constant(false)
        );
        assert_eq!(
            fold_bn_sign(&bn1(0.0, 0.0, 3.0, 1.0, 0.0))[0],
            ThresholdRule::Constant(true)
        );
    }

    #[test]
    fn threshold_near_nominal() {
        let bn = bn1(0.7, 1.3, 12.0, 9.0, 1e-3);
        let t = nominal_threshold(&bn, 0);
        match fold_bn_sign(&bn)[0] {
            ThresholdRule::AtLeast(x) => assert!((x - t).abs() <= 1e-12 * t.abs().max(1.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn direct(bn: &BatchNorm, x: f64) -> bool {
        let t = Tensor::vector(vec![x]);
        sign_quantize(&batchnorm_forward(&t, bn).unwrap()).data()[0] > 0.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fold_matches_composition(
            gamma in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0],
            beta in -10.0f64..10.0,
            mean in -100.0f64..100.0,
            var in 0.0f64..50.0,
            eps in prop_oneof![Just(0.0), Just(1e-3)],
            xs in prop::collection::vec(-200.0f64..200.0, 150),
        ) {
            let bn = bn1(gamma, beta, mean, var, eps);
            let rule = fold_bn_sign(&bn)[0];
            let t = match rule {
                ThresholdRule::AtLeast(t) | ThresholdRule::AtMost(t) => t,
                ThresholdRule::Constant(_) => 0.0,
            };
            let nominal = nominal_threshold(&bn, 0);
            let probes = [t, t.next_up(), t.next_down(), nominal, nominal.next_up(), nominal.next_down()];
            for &x in xs.iter().chain(&probes) {
                prop_assert_eq!(rule.fires(x), direct(&bn, x), "x = {}", x);
            }
        }
    }
}
