//! Layer kernels generic over the value domain.
//!
//! The same loops evaluate concrete `f64` activations and interval bounds,
//! so interval results enclose concrete results with identical summation
//! order and rounding.

use super::{BatchNorm, QConv, QDense, POOL};

pub(crate) trait Value: Copy {
    fn zero() -> Self;
    /// `acc + w * x` for `w` in `{-1, +1}`.
    fn add_signed(self, w: i8, x: Self) -> Self;
    fn max(self, other: Self) -> Self;
    fn sign(self) -> Self;
    fn batch_norm(self, bn: &BatchNorm, c: usize) -> Self;
}

impl Value for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn add_signed(self, w: i8, x: Self) -> Self {
        if w > 0 {
            self + x
        } else {
            self - x
        }
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn sign(self) -> Self {
        if self >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
    #[inline]
    fn batch_norm(self, bn: &BatchNorm, c: usize) -> Self {
        bn.apply(c, self)
    }
}

pub(crate) fn sign_all<V: Value>(input: &[V]) -> Vec<V> {
    input.iter().map(|v| v.sign()).collect()
}

pub(crate) fn conv<V: Value>(input: &[V], h: usize, w: usize, layer: &QConv) -> Vec<V> {
    let (kh, kw, ci, oc) = (
        layer.kernel_h,
        layer.kernel_w,
        layer.in_channels,
        layer.out_channels,
    );
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![V::zero(); oh * ow * oc];
    for r in 0..oh {
        for c in 0..ow {
            for o in 0..oc {
                let mut acc = V::zero();
                for ky in 0..kh {
                    for kx in 0..kw {
                        let base = ((r + ky) * w + (c + kx)) * ci;
                        let wbase = ((o * kh + ky) * kw + kx) * ci;
                        for ch in 0..ci {
                            acc = acc.add_signed(layer.weights[wbase + ch], input[base + ch]);
                        }
                    }
                }
                out[(r * ow + c) * oc + o] = acc;
            }
        }
    }
    out
}

pub(crate) fn dense<V: Value>(input: &[V], layer: &QDense) -> Vec<V> {
    (0..layer.out_features)
        .map(|o| {
            layer
                .row(o)
                .iter()
                .zip(input)
                .fold(V::zero(), |acc, (&w, &x)| acc.add_signed(w, x))
        })
        .collect()
}

pub(crate) fn max_pool<V: Value>(input: &[V], h: usize, w: usize, ch: usize) -> Vec<V> {
    let (oh, ow) = (h / POOL, w / POOL);
    let mut out = Vec::with_capacity(oh * ow * ch);
    for r in 0..oh {
        for c in 0..ow {
            for k in 0..ch {
                let at = |dy: usize, dx: usize| input[((r * POOL + dy) * w + c * POOL + dx) * ch + k];
                let mut m = at(0, 0);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    m = m.max(at(dy, dx));
                }
                out.push(m);
            }
        }
    }
    out
}

pub(crate) fn batch_norm<V: Value>(input: &[V], bn: &BatchNorm) -> Vec<V> {
    let ch = bn.channels();
    input
        .iter()
        .enumerate()
        .map(|(i, &v)| v.batch_norm(bn, i % ch))
        .collect()
}
