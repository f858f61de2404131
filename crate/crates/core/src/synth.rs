//! Seeded random networks, images and tiny verification instances.
//!
//! Trained weights are not part of this crate; these generators stand in
//! for them in tests, examples and the benchmark fixtures. Batch-norm
//! statistics are scaled to each layer's fan-in so hidden signs are mixed
//! rather than constant.

use rand::Rng;

use crate::bnn::{BatchNorm, Layer, Network, QConv, QDense, DEFAULT_BN_EPS};
use crate::tensor::Tensor;
use crate::vnnlib::RobustnessProperty;

/// Root-mean-square of a uniform pixel in `[0, 255]`.
pub const PIXEL_RMS: f64 = 147.2;

/// Grid points the tiny-instance generator stays under.
pub const TINY_GRID_LIMIT: f64 = 20_000.0;

pub fn random_signs(rng: &mut impl Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
}

/// Statistics for sums with standard deviation `sd`, shifted by `shift`
/// standard deviations (max pooling raises the mean). Values are rounded to
/// `f32` so they survive an ONNX round trip unchanged.
pub fn random_batch_norm(rng: &mut impl Rng, channels: usize, sd: f64, shift: f64) -> BatchNorm {
    let f32_round = |x: f64| x as f32 as f64;
    let mut bn = BatchNorm::identity(channels);
    for c in 0..channels {
        let g = rng.random_range(0.5..1.5);
        bn.gamma[c] = f32_round(if rng.random_bool(0.25) { -g } else { g });
        bn.beta[c] = f32_round(rng.random_range(-0.5..0.5));
        bn.moving_mean[c] = f32_round((shift + rng.random_range(-0.5..0.5)) * sd);
        bn.moving_variance[c] = f32_round(sd * sd * rng.random_range(0.5..1.5));
    }
    bn.eps = DEFAULT_BN_EPS;
    bn
}

/// Same architecture as `net` with random weights and statistics.
/// `input_rms` is the typical magnitude of an input value.
pub fn randomize(net: &Network, rng: &mut impl Rng, input_rms: f64) -> Network {
    let mut sd = 1.0;
    let mut shift = 0.0;
    let layers = net
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::QConv(c) => {
                let n = c.weights().len();
                let rms = if c.quantize_input() { 1.0 } else { input_rms };
                sd = (c.fan_in() as f64).sqrt() * rms;
                shift = 0.0;
                Layer::QConv(
                    QConv::new(
                        c.in_channels(),
                        c.out_channels(),
                        c.kernel_h(),
                        c.kernel_w(),
                        random_signs(rng, n),
                        c.quantize_input(),
                    )
                    .expect("same shape"),
                )
            }
            Layer::QDense(d) => {
                let rms = if d.quantize_input() { 1.0 } else { input_rms };
                sd = (d.in_features() as f64).sqrt() * rms;
                shift = 0.0;
                Layer::QDense(
                    QDense::new(
                        d.in_features(),
                        d.out_features(),
                        random_signs(rng, d.weights().len()),
                        d.quantize_input(),
                    )
                    .expect("same shape"),
                )
            }
            Layer::MaxPool => {
                shift += 1.0;
                Layer::MaxPool
            }
            Layer::BatchNorm(bn) => Layer::BatchNorm(random_batch_norm(rng, bn.channels(), sd, shift)),
            Layer::Flatten => Layer::Flatten,
        })
        .collect();
    Network::new(net.input_shape().to_vec(), layers, net.num_classes()).expect("same chain")
}

/// A synthetic RGB image: a random base colour plus per-pixel noise.
pub fn random_image(rng: &mut impl Rng, h: usize, w: usize) -> Tensor {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(40.0..215.0));
    let data = (0..h * w * 3)
        .map(|i| (base[i % 3] + rng.random_range(-40.0..40.0)).round().clamp(0.0, 255.0))
        .collect();
    Tensor::new(vec![h, w, 3], data).expect("shape matches")
}

/// A random network with input at most 4x4x1, up to two hidden blocks and
/// 2 to 4 classes. `max_pixels` caps `h * w`.
pub fn tiny_network(rng: &mut impl Rng, max_pixels: usize) -> Network {
    let max_pixels = max_pixels.clamp(1, 16);
    let (h, w) = loop {
        let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
        if h * w <= max_pixels {
            break (h, w);
        }
    };
    let mut shape = vec![h, w, 1];
    let mut layers = Vec::new();
    let mut first = true;
    let blocks = rng.random_range(0..=2);
    for _ in 0..blocks {
        let spatial = shape.len() == 3;
        if spatial && rng.random_bool(0.6) {
            let kh = rng.random_range(1..=shape[0].min(2));
            let kw = rng.random_range(1..=shape[1].min(2));
            let oc = rng.random_range(1..=3);
            let weights = random_signs(rng, oc * kh * kw * shape[2]);
            layers.push(Layer::QConv(
                QConv::new(shape[2], oc, kh, kw, weights, !first).expect("valid conv"),
            ));
            shape = vec![shape[0] - kh + 1, shape[1] - kw + 1, oc];
            let pool = shape[0] >= 2 && shape[1] >= 2 && rng.random_bool(0.5);
            let norm = rng.random_bool(0.6);
            let norm_first = rng.random_bool(0.3);
            let bn = Layer::BatchNorm(BatchNorm::identity(oc));
            if norm && norm_first {
                layers.push(bn.clone());
            }
            if pool {
                layers.push(Layer::MaxPool);
                shape = vec![shape[0] / 2, shape[1] / 2, oc];
            }
            if norm && !norm_first {
                layers.push(bn);
            }
        } else {
            if spatial {
                layers.push(Layer::Flatten);
                shape = vec![shape.iter().product()];
            }
            let out = rng.random_range(1..=4);
            let weights = random_signs(rng, out * shape[0]);
            layers.push(Layer::QDense(
                QDense::new(shape[0], out, weights, !first).expect("valid dense"),
            ));
            shape = vec![out];
            if rng.random_bool(0.6) {
                layers.push(Layer::BatchNorm(BatchNorm::identity(out)));
            }
        }
        first = false;
    }
    if shape.len() == 3 {
        layers.push(Layer::Flatten);
        shape = vec![shape.iter().product()];
    }
    let classes = rng.random_range(2..=4);
    let weights = random_signs(rng, classes * shape[0]);
    layers.push(Layer::QDense(
        QDense::new(shape[0], classes, weights, !first).expect("valid dense"),
    ));
    let skeleton = Network::new(vec![h, w, 1], layers, classes).expect("valid chain");
    // Tiny pixels lie in 0..=4.
    randomize(&skeleton, rng, 2.5)
}

/// A tiny network with a property of radius `eps` around an integer image
/// in `0..=4`. The grid of the box stays under [`TINY_GRID_LIMIT`] points.
/// The target is usually the predicted label, sometimes another class.
pub fn tiny_instance(rng: &mut impl Rng, eps: f64) -> (Network, RobustnessProperty) {
    let side = 2.0 * eps + 1.0;
    let max_pixels = (TINY_GRID_LIMIT.ln() / side.ln()).floor().min(16.0) as usize;
    let net = tiny_network(rng, max_pixels);
    let n = net.input_len();
    let image = Tensor::new(
        net.input_shape().to_vec(),
        (0..n).map(|_| f64::from(rng.random_range(0..=4u8))).collect(),
    )
    .expect("shape matches");
    let predicted = net.predict(&image).expect("shape matches");
    let target = if rng.random_bool(0.2) {
        rng.random_range(0..net.num_classes())
    } else {
        predicted
    };
    let prop = RobustnessProperty::around(&image, eps, target, net.num_classes(), false)
        .expect("valid property");
    (net, prop)
}
