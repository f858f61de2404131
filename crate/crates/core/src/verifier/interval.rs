//! Interval bound propagation.

use crate::bnn::kernels::{self, Value};
use crate::bnn::{BatchNorm, BnnError, Layer, Network};
use crate::vnnlib::RobustnessProperty;

use super::{Report, Stats, Verdict, VerifyError};

/// A closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

// Each operation applies the concrete f64 operation to the endpoints. Float
// rounding is monotone, so the result encloses every concrete evaluation that
// follows the same operation order.
impl Value for Interval {
    fn zero() -> Self {
        Self::point(0.0)
    }

    fn add_signed(self, w: i8, x: Self) -> Self {
        if w > 0 {
            Self {
                lo: self.lo + x.lo,
                hi: self.hi + x.hi,
            }
        } else {
            Self {
                lo: self.lo - x.hi,
                hi: self.hi - x.lo,
            }
        }
    }

    fn max(self, other: Self) -> Self {
        Self {
            lo: self.lo.max(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    fn sign(self) -> Self {
        if self.lo >= 0.0 {
            Self::point(1.0)
        } else if self.hi < 0.0 {
            Self::point(-1.0)
        } else {
            Self { lo: -1.0, hi: 1.0 }
        }
    }

    fn batch_norm(self, bn: &BatchNorm, c: usize) -> Self {
        let (a, b) = (bn.apply(c, self.lo), bn.apply(c, self.hi));
        if bn.gamma[c] < 0.0 {
            Self { lo: b, hi: a }
        } else {
            Self { lo: a, hi: b }
        }
    }
}

/// Per-entry bounds over a channel-last tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTensor {
    pub shape: Vec<usize>,
    pub bounds: Vec<Interval>,
}

impl IntervalTensor {
    pub fn new(shape: Vec<usize>, bounds: Vec<Interval>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), bounds.len());
        Self { shape, bounds }
    }

    pub fn from_property(net: &Network, prop: &RobustnessProperty) -> Result<Self, VerifyError> {
        prop.check_network(net)?;
        Ok(Self::new(
            net.input_shape().to_vec(),
            prop.input_bounds
                .iter()
                .map(|&(lo, hi)| Interval::new(lo, hi))
                .collect(),
        ))
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.hi).collect()
    }
}

/// Sound bounds on every logit for inputs anywhere in `input`.
pub fn ibp_propagate(net: &Network, input: &IntervalTensor) -> Result<IntervalTensor, VerifyError> {
    if input.shape != net.input_shape() {
        return Err(BnnError::InputShape {
            expected: net.input_shape().to_vec(),
            actual: input.shape.clone(),
        }
        .into());
    }
    let chain = net.shape_chain();
    let mut x = input.bounds.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        let shape = &chain[i];
        x = match layer {
            Layer::QConv(c) => {
                let x = if c.quantize_input() {
                    kernels::sign_all(&x)
                } else {
                    x
                };
                kernels::conv(&x, shape[0], shape[1], c)
            }
            Layer::QDense(d) => {
                let x = if d.quantize_input() {
                    kernels::sign_all(&x)
                } else {
                    x
                };
                kernels::dense(&x, d)
            }
            Layer::MaxPool => kernels::max_pool(&x, shape[0], shape[1], shape[2]),
            Layer::BatchNorm(bn) => kernels::batch_norm(&x, bn),
            Layer::Flatten => x,
        };
    }
    Ok(IntervalTensor::new(vec![net.num_classes()], x))
}

/// Largest `hi(Y_j) - lo(Y_t)` over `j != t`; negative means verified.
pub fn violation_margin(logits: &IntervalTensor, target: usize) -> f64 {
    let t = logits.bounds[target].lo;
    logits
        .bounds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, b)| b.hi - t)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Verified` when the target's lower bound strictly beats every other
/// upper bound; `Unknown` otherwise.
pub fn verify_ibp(net: &Network, prop: &RobustnessProperty) -> Result<Report, VerifyError> {
    let start = std::time::Instant::now();
    let bounds = ibp_propagate(net, &IntervalTensor::from_property(net, prop)?)?;
    let verdict = if violation_margin(&bounds, prop.target_label) < 0.0 {
        Verdict::Verified
    } else {
        Verdict::Unknown
    };
    Ok(Report {
        verdict,
        stats: Stats {
            nodes: 1,
            elapsed: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::QDense;
    use crate::tensor::Tensor;

    #[test]
    fn single_dense_passes_pixel_range() {
        let d = QDense::new(1, 2, vec![1, -1], false).unwrap();
        let net = Network::new(vec![1], vec![Layer::QDense(d)], 2).unwrap();
        let out = ibp_propagate(
            &net,
            &IntervalTensor::new(vec![1], vec![Interval::new(14.0, 34.0)]),
        )
        .unwrap();
        assert_eq!(out.bounds[0], Interval::new(14.0, 34.0));
        assert_eq!(out.bounds[1], Interval::new(-34.0, -14.0));
    }

    #[test]
    fn sign_cases() {
        assert_eq!(Interval::new(-3.0, -0.5).sign(), Interval::point(-1.0));
        assert_eq!(Interval::new(0.0, 2.0).sign(), Interval::point(1.0));
        assert_eq!(Interval::new(-1.0, 0.0).sign(), Interval::new(-1.0, 1.0));
    }

    #[test]
    fn negative_gamma_swaps() {
        let mut bn = BatchNorm::identity(1);
        bn.gamma[0] = -2.0;
        bn.eps = 0.0;
        let out = Interval::new(1.0, 3.0).batch_norm(&bn, 0);
        assert_eq!(out, Interval::new(-6.0, -2.0));
    }

    #[test]
    fn point_box_matches_forward() {
        let d = QDense::new(3, 2, vec![1, -1, 1, -1, -1, 1], false).unwrap();
        let net = Network::new(vec![3], vec![Layer::QDense(d)], 2).unwrap();
        let img = Tensor::vector(vec![4.0, 1.0, 2.0]);
        let prop = RobustnessProperty::around(&img, 0.0, 0, 2, false).unwrap();
        let out = ibp_propagate(&net, &IntervalTensor::from_property(&net, &prop).unwrap()).unwrap();
        let y = net.forward(&img).unwrap();
        assert_eq!(out.lower(), y.data());
        assert_eq!(out.upper(), y.data());
        assert_eq!(verify_ibp(&net, &prop).unwrap().verdict, Verdict::Verified);
    }

    #[test]
    fn tie_at_top_is_not_verified() {
        let d = QDense::new(2, 2, vec![1, 1, 1, 1], false).unwrap();
        let net = Network::new(vec![2], vec![Layer::QDense(d)], 2).unwrap();
        let img = Tensor::vector(vec![1.0, 2.0]);
        let prop = RobustnessProperty::around(&img, 0.0, 0, 2, false).unwrap();
        assert_eq!(verify_ibp(&net, &prop).unwrap().verdict, Verdict::Unknown);
    }
}
