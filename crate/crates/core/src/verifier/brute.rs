//! Exhaustive enumeration of the integer grid: the ground-truth oracle.

use std::time::{Duration, Instant};

use crate::bnn::{runner_up_margin, Network};
use crate::vnnlib::{RobustnessProperty, Witness};

use super::{Report, Stats, Verdict, VerifyError};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteConfig {
    /// Refuse boxes with more grid points than this.
    pub budget: u64,
    pub timeout: Option<Duration>,
}

impl Default for BruteConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            timeout: None,
        }
    }
}

/// Number of integer points in the box, saturating at `u64::MAX`.
pub fn grid_points(prop: &RobustnessProperty) -> Option<u64> {
    let b = prop.integer_bounds()?;
    Some(b.iter().fold(1u64, |acc, &(lo, hi)| {
        acc.saturating_mul((hi - lo) as u64 + 1)
    }))
}

pub fn brute_force_verify(net: &Network, prop: &RobustnessProperty) -> Result<Report, VerifyError> {
    brute_force_verify_with(net, prop, &BruteConfig::default())
}

/// Visits every integer point with `X_0` as the most significant digit and
/// returns the first violation, or `Verified` when there is none.
pub fn brute_force_verify_with(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &BruteConfig,
) -> Result<Report, VerifyError> {
    prop.check_network(net)?;
    let start = Instant::now();
    let bounds = prop.integer_bounds().ok_or(VerifyError::EmptyGrid)?;
    let points = grid_points(prop).expect("grid checked");
    if points > cfg.budget {
        return Err(VerifyError::Budget {
            points,
            budget: cfg.budget,
        });
    }
    let mut x: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut visited = 0u64;
    let finish = |verdict, visited| Report {
        verdict,
        stats: Stats {
            nodes: visited,
            elapsed: start.elapsed(),
        },
    };
    loop {
        if cfg.timeout.is_some_and(|t| visited.is_multiple_of(1024) && start.elapsed() >= t) {
            return Ok(finish(Verdict::Timeout, visited));
        }
        let logits = net.forward_flat(&x)?;
        visited += 1;
        if runner_up_margin(&logits, prop.target_label) >= 0.0 {
            let w = Witness::new(x).with_outputs(logits);
            return Ok(finish(Verdict::Falsified(w), visited));
        }
        let mut i = x.len();
        loop {
            if i == 0 {
                return Ok(finish(Verdict::Verified, visited));
            }
            i -= 1;
            if x[i] < bounds[i].1 {
                x[i] += 1.0;
                break;
            }
            x[i] = bounds[i].0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{Layer, QDense};
    use crate::tensor::Tensor;

    fn toy() -> Network {
        let d = QDense::new(4, 2, vec![1, 1, 1, -1, -1, 1, 1, 1], false).unwrap();
        Network::new(vec![4], vec![Layer::QDense(d)], 2).unwrap()
    }

    #[test]
    fn four_input_toy_regression() {
        // Y_0 - Y_1 = 2 * (x0 - x3).
        let net = toy();
        let img = Tensor::vector(vec![3.0, 0.0, 0.0, 2.0]);
        let prop = RobustnessProperty::around(&img, 1.0, 0, 2, false).unwrap();
        assert_eq!(grid_points(&prop), Some(81));
        let r = brute_force_verify(&net, &prop).unwrap();
        // The first grid point is (2, -1, -1, 1); the second ties.
        match r.verdict {
            Verdict::Falsified(w) => {
                assert_eq!(w.input_values, vec![2.0, -1.0, -1.0, 2.0]);
                assert_eq!(r.stats.nodes, 2);
            }
            v => panic!("expected a witness, got {v:?}"),
        }
        let img = Tensor::vector(vec![4.0, 0.0, 0.0, 1.0]);
        let prop = RobustnessProperty::around(&img, 1.0, 0, 2, false).unwrap();
        let r = brute_force_verify(&net, &prop).unwrap();
        assert_eq!(r.verdict, Verdict::Verified);
        assert_eq!(r.stats.nodes, 81);
    }

    #[test]
    fn point_query() {
        let net = toy();
        let img = Tensor::vector(vec![3.0, 0.0, 0.0, 3.0]);
        let prop = RobustnessProperty::around(&img, 0.0, 0, 2, false).unwrap();
        // Tie between the two classes counts as a violation.
        assert!(matches!(
            brute_force_verify(&net, &prop).unwrap().verdict,
            Verdict::Falsified(_)
        ));
    }

    #[test]
    fn refuses_over_budget() {
        let net = toy();
        let img = Tensor::vector(vec![100.0; 4]);
        let prop = RobustnessProperty::around(&img, 100.0, 0, 2, false).unwrap();
        let cfg = BruteConfig {
            budget: 1000,
            timeout: None,
        };
        assert!(matches!(
            brute_force_verify_with(&net, &prop, &cfg),
            Err(VerifyError::Budget { points, budget: 1000 }) if points == 201u64.pow(4)
        ));
    }
}
