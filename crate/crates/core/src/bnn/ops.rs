//! Per-layer forward operations.

use super::{kernels, packed, BatchNorm, BnnError, Layer, QConv, QDense};
use crate::tensor::Tensor;

/// `+1` for entries `>= 0`, `-1` otherwise.
pub fn sign_quantize(t: &Tensor) -> Tensor {
    t.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

pub fn qconv_forward(input: &Tensor, layer: &QConv) -> Result<Tensor, BnnError> {
    conv_at(0, input, layer)
}

pub fn maxpool_forward(input: &Tensor) -> Result<Tensor, BnnError> {
    pool_at(0, input)
}

pub fn batchnorm_forward(input: &Tensor, layer: &BatchNorm) -> Result<Tensor, BnnError> {
    layer.validate()?;
    bn_at(0, input, layer)
}

pub fn qdense_forward(input: &Tensor, layer: &QDense) -> Result<Tensor, BnnError> {
    dense_at(0, input, layer)
}

pub(crate) fn layer_forward(index: usize, layer: &Layer, x: &Tensor) -> Result<Tensor, BnnError> {
    match layer {
        Layer::QConv(c) => conv_at(index, x, c),
        Layer::MaxPool => pool_at(index, x),
        Layer::BatchNorm(bn) => bn_at(index, x, bn),
        Layer::Flatten => Ok(Tensor::vector(x.data().to_vec())),
        Layer::QDense(d) => dense_at(index, x, d),
    }
}

fn output(index: usize, layer: &Layer, input: &Tensor, data: Vec<f64>) -> Result<Tensor, BnnError> {
    let shape = layer.output_shape(index, input.shape())?;
    Ok(Tensor::new(shape, data).expect("kernel output matches its shape"))
}

fn conv_at(index: usize, input: &Tensor, layer: &QConv) -> Result<Tensor, BnnError> {
    let wrapped = Layer::QConv(layer.clone());
    wrapped.output_shape(index, input.shape())?;
    let (h, w, _) = input.hwc().expect("checked rank");
    let data = if layer.quantize_input {
        packed::binary_conv(
            input.data(),
            h,
            w,
            layer.in_channels,
            layer.kernel_h,
            layer.kernel_w,
            layer.packed(),
        )
    } else {
        kernels::conv(input.data(), h, w, layer)
    };
    output(index, &wrapped, input, data)
}

fn dense_at(index: usize, input: &Tensor, layer: &QDense) -> Result<Tensor, BnnError> {
    if input.shape() != [layer.in_features] {
        return Err(BnnError::Shape {
            layer: index,
            expected: format!("{} features", layer.in_features),
            actual: input.shape().to_vec(),
        });
    }
    let data = if layer.quantize_input {
        packed::binary_dense(input.data(), layer.packed())
    } else {
        kernels::dense(input.data(), layer)
    };
    Ok(Tensor::vector(data))
}

fn pool_at(index: usize, input: &Tensor) -> Result<Tensor, BnnError> {
    Layer::MaxPool.output_shape(index, input.shape())?;
    let (h, w, c) = input.hwc().expect("checked rank");
    output(index, &Layer::MaxPool, input, kernels::max_pool(input.data(), h, w, c))
}

fn bn_at(index: usize, input: &Tensor, layer: &BatchNorm) -> Result<Tensor, BnnError> {
    if input.shape().last() != Some(&layer.channels()) {
        return Err(BnnError::Shape {
            layer: index,
            expected: format!("last axis of {}", layer.channels()),
            actual: input.shape().to_vec(),
        });
    }
    Ok(Tensor::new(input.shape().to_vec(), kernels::batch_norm(input.data(), layer))
        .expect("same shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Direct six-nested-loop cross-correlation, written independently of the kernels.
    fn naive_conv(input: &Tensor, layer: &QConv) -> Vec<f64> {
        let (h, w, ci) = input.hwc().unwrap();
        let x = |r: usize, c: usize, k: usize| {
            let v = input.data()[(r * w + c) * ci + k];
            if layer.quantize_input() {
                if v >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                v
            }
        };
        let (oh, ow) = (h - layer.kernel_h() + 1, w - layer.kernel_w() + 1);
        let mut out = vec![0.0; oh * ow * layer.out_channels()];
        for r in 0..oh {
            for c in 0..ow {
                for o in 0..layer.out_channels() {
                    let mut s = 0.0;
                    for ky in 0..layer.kernel_h() {
                        for kx in 0..layer.kernel_w() {
                            for k in 0..ci {
                                s += layer.weight(o, ky, kx, k) as f64 * x(r + ky, c + kx, k);
                            }
                        }
                    }
                    out[(r * ow + c) * layer.out_channels() + o] = s;
                }
            }
        }
        out
    }

    fn random_signs(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
        (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
    }

    #[test]
    fn sign_convention() {
        let out = sign_quantize(&Tensor::vector(vec![-2.5, 0.0, 7.1]));
        assert_eq!(out.data(), &[-1.0, 1.0, 1.0]);
        let zeros = Tensor::filled(vec![2, 3], 0.0);
        assert!(sign_quantize(&zeros).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conv_all_ones() {
        let input = t(&[2, 2, 1], &[1.0; 4]);
        let plus = QConv::new(1, 1, 2, 2, vec![1; 4], false).unwrap();
        let out = qconv_forward(&input, &plus).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
        let minus = QConv::new(1, 1, 2, 2, vec![-1; 4], false).unwrap();
        assert_eq!(qconv_forward(&input, &minus).unwrap().data(), &[-4.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let oc = rng.random_range(1..4);
            let (kh, kw) = (rng.random_range(1..4), rng.random_range(1..4));
            let data: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
            let input = t(&[5, 5, 2], &data);
            let layer = QConv::new(2, oc, kh, kw, random_signs(&mut rng, oc * kh * kw * 2), trial % 2 == 0)
                .unwrap();
            let out = qconv_forward(&input, &layer).unwrap();
            assert_eq!(out.shape(), &[6 - kh, 6 - kw, oc]);
            let want = naive_conv(&input, &layer);
            for (a, b) in out.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn wide_channel_binary_conv_matches_naive() {
        // more than 64 channels exercises multi-word packing
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ci = 70;
        let data: Vec<f64> = (0..3 * 3 * ci).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = t(&[3, 3, ci], &data);
        let layer = QConv::new(ci, 3, 2, 2, random_signs(&mut rng, 3 * 4 * ci), true).unwrap();
        assert_eq!(qconv_forward(&input, &layer).unwrap().data(), naive_conv(&input, &layer).as_slice());
    }

    #[test]
    fn conv_shape_mismatch_is_structured() {
        let input = t(&[3, 3, 2], &[0.0; 18]);
        let layer = QConv::placeholder(1, 1, 2, 2, false);
        let err = qconv_forward(&input, &layer).unwrap_err();
        assert!(matches!(err, BnnError::Shape { layer: 0, ref actual, .. } if actual == &vec![3, 3, 2]));
    }

    #[test]
    fn pool_examples() {
        let out = maxpool_forward(&t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[4.0]);
        let big = maxpool_forward(&Tensor::filled(vec![11, 11, 64], 3.5)).unwrap();
        assert_eq!(big.shape(), &[5, 5, 64]);
        assert!(big.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn pool_drops_odd_edge() {
        // the trailing row/column hold the largest values and must be ignored
        let data: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let out = maxpool_forward(&t(&[3, 3, 1], &data)).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn batchnorm_examples() {
        let mut bn = BatchNorm::identity(1);
        bn.eps = 0.0;
        let x = t(&[3, 1], &[-1.5, 0.0, 2.25]);
        assert_eq!(batchnorm_forward(&x, &bn).unwrap(), x);
        bn.gamma[0] = 2.0;
        bn.beta[0] = 3.0;
        bn.moving_mean[0] = 1.0;
        assert_eq!(batchnorm_forward(&t(&[1], &[5.0]), &bn).unwrap().data(), &[11.0]);
    }

    #[test]
    fn batchnorm_negative_variance_rejected() {
        let mut bn = BatchNorm::identity(1);
        bn.moving_variance[0] = -1.0;
        assert!(matches!(
            batchnorm_forward(&t(&[1], &[0.0]), &bn),
            Err(BnnError::InvalidModel(_))
        ));
    }

    proptest! {
        #[test]
        fn sign_is_idempotent(v in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let once = sign_quantize(&Tensor::vector(v));
            prop_assert_eq!(sign_quantize(&once), once);
        }

        #[test]
        fn batchnorm_preserves_order_for_positive_gamma(
            gamma in 0.01f64..10.0, beta in -50.0f64..50.0, mean in -50.0f64..50.0,
            var in 0.0f64..20.0, x1 in -1e3f64..1e3, dx in 0.0f64..1e3,
        ) {
            let bn = BatchNorm { gamma: vec![gamma], beta: vec![beta], moving_mean: vec![mean],
                                 moving_variance: vec![var], eps: 1e-3 };
            prop_assert!(bn.apply(0, x1) <= bn.apply(0, x1 + dx));
        }

        #[test]
        fn pool_commutes_with_increasing_batchnorm(
            xs in proptest::collection::vec(-100.0f64..100.0, 4),
            gamma in 0.01f64..5.0, beta in -10.0f64..10.0, mean in -10.0f64..10.0,
        ) {
            let bn = BatchNorm { gamma: vec![gamma], beta: vec![beta], moving_mean: vec![mean],
                                 moving_variance: vec![1.0], eps: 1e-3 };
            let input = Tensor::new(vec![2, 2, 1], xs).unwrap();
            let pool_then_bn = batchnorm_forward(&maxpool_forward(&input).unwrap(), &bn).unwrap();
            let bn_then_pool = maxpool_forward(&batchnorm_forward(&input, &bn).unwrap()).unwrap();
            prop_assert_eq!(pool_then_bn, bn_then_pool);
        }

        #[test]
        fn binarized_sums_are_bounded_with_fan_in_parity(
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..4 * 4 * 3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let input = Tensor::new(vec![4, 4, 3], data).unwrap();
            let layer = QConv::new(3, 2, 3, 2, random_signs(&mut rng, 2 * 3 * 2 * 3), true).unwrap();
            let fan_in = layer.fan_in() as i64;
            for &v in qconv_forward(&input, &layer).unwrap().data() {
                prop_assert_eq!(v.fract(), 0.0);
                let v = v as i64;
                prop_assert!(v.abs() <= fan_in);
                prop_assert_eq!((v - fan_in).rem_euclid(2), 0);
            }
        }
    }
}
