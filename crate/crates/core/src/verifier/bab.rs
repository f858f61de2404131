//! Best-first branch and bound over input sub-boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::bnn::{runner_up_margin, Network};
use crate::vnnlib::{RobustnessProperty, Witness};

use super::interval::{ibp_propagate, violation_margin, Interval, IntervalTensor};
use super::{Report, Stats, Verdict, VerifyError};

#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    pub timeout: Option<Duration>,
    /// Give up with `Unknown` after evaluating this many boxes.
    pub max_nodes: u64,
    /// Split on integer midpoints and probe integer points only.
    pub integer_grid: bool,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            timeout: None,
            max_nodes: 1_000_000,
            integer_grid: true,
        }
    }
}

struct Node {
    priority: f64,
    seq: u64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Highest violation first; earlier nodes first among equals.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    net: &'a Network,
    target: usize,
    shape: Vec<usize>,
    nodes: u64,
    seq: u64,
}

impl Search<'_> {
    /// IBP margin of a box; negative means the box is verified.
    fn bound(&mut self, lo: &[f64], hi: &[f64]) -> Result<f64, VerifyError> {
        self.nodes += 1;
        let input = IntervalTensor::new(
            self.shape.clone(),
            lo.iter().zip(hi).map(|(&l, &h)| Interval::new(l, h)).collect(),
        );
        let out = ibp_propagate(self.net, &input)?;
        Ok(violation_margin(&out, self.target))
    }

    fn node(&mut self, priority: f64, lo: Vec<f64>, hi: Vec<f64>) -> Node {
        self.seq += 1;
        Node {
            priority,
            seq: self.seq,
            lo,
            hi,
        }
    }
}

/// Complete on the integer grid: boxes shrink to single points, which the
/// centre probe decides exactly. In continuous mode a box that can no longer
/// be split leaves the verdict `Unknown`.
pub fn bab_verify(
    net: &Network,
    prop: &RobustnessProperty,
    cfg: &BabConfig,
) -> Result<Report, VerifyError> {
    prop.check_network(net)?;
    let start = Instant::now();
    let mut search = Search {
        net,
        target: prop.target_label,
        shape: net.input_shape().to_vec(),
        nodes: 0,
        seq: 0,
    };
    let report = |verdict, nodes| Report {
        verdict,
        stats: Stats {
            nodes,
            elapsed: start.elapsed(),
        },
    };
    let out_of_time = |start: Instant| cfg.timeout.is_some_and(|t| start.elapsed() >= t);
    if out_of_time(start) {
        return Ok(report(Verdict::Timeout, 0));
    }
    let bounds = if cfg.integer_grid {
        prop.integer_bounds().ok_or(VerifyError::EmptyGrid)?
    } else {
        prop.input_bounds.clone()
    };
    let (lo, hi): (Vec<f64>, Vec<f64>) = bounds.into_iter().unzip();
    let root = search.bound(&lo, &hi)?;
    if root < 0.0 {
        return Ok(report(Verdict::Verified, search.nodes));
    }
    let mut heap = BinaryHeap::new();
    let node = search.node(root, lo, hi);
    heap.push(node);
    let mut incomplete = false;
    while let Some(node) = heap.pop() {
        if out_of_time(start) {
            return Ok(report(Verdict::Timeout, search.nodes));
        }
        if search.nodes >= cfg.max_nodes {
            return Ok(report(Verdict::Unknown, search.nodes));
        }
        let probe: Vec<f64> = node
            .lo
            .iter()
            .zip(&node.hi)
            .map(|(&l, &h)| {
                let mid = l + (h - l) / 2.0;
                if cfg.integer_grid {
                    mid.floor().clamp(l, h)
                } else {
                    mid
                }
            })
            .collect();
        let logits = net.forward_flat(&probe)?;
        if runner_up_margin(&logits, prop.target_label) >= 0.0 {
            let w = Witness::new(probe).with_outputs(logits);
            return Ok(report(Verdict::Falsified(w), search.nodes));
        }
        let (dim, width) = node
            .lo
            .iter()
            .zip(&node.hi)
            .map(|(l, h)| h - l)
            .enumerate()
            .fold((0, 0.0), |best, (i, w)| if w > best.1 { (i, w) } else { best });
        if width == 0.0 {
            // A single point, already decided by the probe.
            continue;
        }
        let (l, h) = (node.lo[dim], node.hi[dim]);
        let (left_hi, right_lo) = if cfg.integer_grid {
            let m = (l + (h - l) / 2.0).floor();
            (m, m + 1.0)
        } else {
            let m = l + (h - l) / 2.0;
            if m <= l || m >= h {
                incomplete = true;
                continue;
            }
            (m, m)
        };
        for (clo, chi) in [(l, left_hi), (right_lo, h)] {
            let mut lo = node.lo.clone();
            let mut hi = node.hi.clone();
            lo[dim] = clo;
            hi[dim] = chi;
            let m = search.bound(&lo, &hi)?;
            if m >= 0.0 {
                let child = search.node(m, lo, hi);
                heap.push(child);
            }
        }
    }
    let verdict = if incomplete {
        Verdict::Unknown
    } else {
        Verdict::Verified
    };
    Ok(report(verdict, search.nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{Layer, QDense};
    use crate::tensor::Tensor;
    use crate::verifier::brute::brute_force_verify;

    fn toy() -> Network {
        let d = QDense::new(4, 2, vec![1, 1, 1, -1, -1, 1, 1, 1], false).unwrap();
        Network::new(vec![4], vec![Layer::QDense(d)], 2).unwrap()
    }

    #[test]
    fn root_pruning_uses_one_node() {
        let img = Tensor::vector(vec![9.0, 0.0, 0.0, 1.0]);
        let prop = RobustnessProperty::around(&img, 1.0, 0, 2, false).unwrap();
        let r = bab_verify(&toy(), &prop, &BabConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Verified);
        assert_eq!(r.stats.nodes, 1);
    }

    #[test]
    fn zero_timeout() {
        let img = Tensor::vector(vec![9.0, 0.0, 0.0, 1.0]);
        let prop = RobustnessProperty::around(&img, 1.0, 0, 2, false).unwrap();
        let cfg = BabConfig {
            timeout: Some(Duration::ZERO),
            ..BabConfig::default()
        };
        assert_eq!(bab_verify(&toy(), &prop, &cfg).unwrap().verdict, Verdict::Timeout);
    }

    #[test]
    fn agrees_with_enumeration() {
        for (c0, c3, eps) in [(3.0, 2.0, 1.0), (4.0, 1.0, 1.0), (5.0, 1.0, 2.0), (5.0, 0.0, 2.0)] {
            let img = Tensor::vector(vec![c0, 0.0, 0.0, c3]);
            let prop = RobustnessProperty::around(&img, eps, 0, 2, false).unwrap();
            let a = bab_verify(&toy(), &prop, &BabConfig::default()).unwrap();
            let b = brute_force_verify(&toy(), &prop).unwrap();
            assert_eq!(a.verdict.as_str(), b.verdict.as_str());
        }
    }

    #[test]
    fn continuous_mode_finds_witness() {
        let img = Tensor::vector(vec![1.0, 0.0, 0.0, 0.25]);
        let prop = RobustnessProperty::around(&img, 0.5, 0, 2, false).unwrap();
        let cfg = BabConfig {
            integer_grid: false,
            ..BabConfig::default()
        };
        let r = bab_verify(&toy(), &prop, &cfg).unwrap();
        match r.verdict {
            Verdict::Falsified(w) => assert!(prop.contains(&w.input_values)),
            v => panic!("expected a witness, got {v:?}"),
        }
    }
}
