//! Binarized network model: layers, shape chaining and exact inference.

mod arch;
pub(crate) mod kernels;
pub mod ops;
mod packed;

use thiserror::Error;

use crate::tensor::Tensor;

pub use arch::{build_arch_a, build_arch_b, build_arch_xnor, count_params, ParamCount};

/// Window and stride of every max-pooling layer.
pub const POOL: usize = 2;

/// Batch-norm epsilon of the training stack, at the float32 precision
/// models are stored with.
pub const DEFAULT_BN_EPS: f64 = 1e-3f32 as f64;

/// Number of GTSRB classes.
pub const GTSRB_CLASSES: usize = 43;

pub type Label = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnnError {
    #[error("layer {layer}: expected input {expected}, got shape {actual:?}")]
    Shape {
        layer: usize,
        expected: String,
        actual: Vec<usize>,
    },
    #[error("input shape {actual:?} does not match network input {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

fn check_signs(weights: &[i8]) -> Result<(), BnnError> {
    match weights.iter().position(|&w| w != 1 && w != -1) {
        None => Ok(()),
        Some(i) => Err(BnnError::InvalidModel(format!(
            "weight {i} is {} (expected -1 or +1)",
            weights[i]
        ))),
    }
}

/// Binary convolution, valid padding, stride 1, no bias.
///
/// Weights are laid out `[out][ky][kx][in]`.
#[derive(Debug, Clone)]
pub struct QConv {
    in_channels: usize,
    out_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<i8>,
    quantize_input: bool,
    packed: packed::PackedRows,
}

impl PartialEq for QConv {
    fn eq(&self, other: &Self) -> bool {
        self.in_channels == other.in_channels
            && self.out_channels == other.out_channels
            && self.kernel_h == other.kernel_h
            && self.kernel_w == other.kernel_w
            && self.quantize_input == other.quantize_input
            && self.weights == other.weights
    }
}

impl QConv {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<i8>,
        quantize_input: bool,
    ) -> Result<Self, BnnError> {
        if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(BnnError::InvalidModel("conv with a zero dimension".into()));
        }
        let expected = out_channels * kernel_h * kernel_w * in_channels;
        if weights.len() != expected {
            return Err(BnnError::InvalidModel(format!(
                "conv expects {expected} weights, got {}",
                weights.len()
            )));
        }
        check_signs(&weights)?;
        let packed =
            packed::PackedRows::conv(&weights, out_channels, kernel_h * kernel_w, in_channels);
        Ok(Self {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights,
            quantize_input,
            packed,
        })
    }

    /// All-`+1` placeholder weights.
    pub fn placeholder(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        quantize_input: bool,
    ) -> Self {
        let n = out_channels * kernel_h * kernel_w * in_channels;
        Self::new(in_channels, out_channels, kernel_h, kernel_w, vec![1; n], quantize_input)
            .expect("placeholder conv is well formed")
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }
    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }
    pub fn quantize_input(&self) -> bool {
        self.quantize_input
    }
    pub fn weights(&self) -> &[i8] {
        &self.weights
    }
    pub(crate) fn packed(&self) -> &packed::PackedRows {
        &self.packed
    }

    #[inline]
    pub fn weight(&self, out: usize, ky: usize, kx: usize, ch: usize) -> i8 {
        self.weights[((out * self.kernel_h + ky) * self.kernel_w + kx) * self.in_channels + ch]
    }

    pub fn fan_in(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }

    pub fn with_quantize_input(mut self, quantize_input: bool) -> Self {
        self.quantize_input = quantize_input;
        self
    }
}

/// Binary fully-connected layer without bias. Weights are `[out][in]`.
#[derive(Debug, Clone)]
pub struct QDense {
    in_features: usize,
    out_features: usize,
    weights: Vec<i8>,
    quantize_input: bool,
    packed: packed::PackedRows,
}

impl PartialEq for QDense {
    fn eq(&self, other: &Self) -> bool {
        self.in_features == other.in_features
            && self.out_features == other.out_features
            && self.quantize_input == other.quantize_input
            && self.weights == other.weights
    }
}

impl QDense {
    pub fn new(
        in_features: usize,
        out_features: usize,
        weights: Vec<i8>,
        quantize_input: bool,
    ) -> Result<Self, BnnError> {
        if in_features == 0 || out_features == 0 {
            return Err(BnnError::InvalidModel("dense with a zero dimension".into()));
        }
        if weights.len() != in_features * out_features {
            return Err(BnnError::InvalidModel(format!(
                "dense expects {} weights, got {}",
                in_features * out_features,
                weights.len()
            )));
        }
        check_signs(&weights)?;
        let packed = packed::PackedRows::conv(&weights, out_features, 1, in_features);
        Ok(Self {
            in_features,
            out_features,
            weights,
            quantize_input,
            packed,
        })
    }

    pub fn placeholder(in_features: usize, out_features: usize, quantize_input: bool) -> Self {
        Self::new(
            in_features,
            out_features,
            vec![1; in_features * out_features],
            quantize_input,
        )
        .expect("placeholder dense is well formed")
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }
    pub fn out_features(&self) -> usize {
        self.out_features
    }
    pub fn quantize_input(&self) -> bool {
        self.quantize_input
    }
    pub fn weights(&self) -> &[i8] {
        &self.weights
    }
    pub(crate) fn packed(&self) -> &packed::PackedRows {
        &self.packed
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> i8 {
        self.weights[out * self.in_features + input]
    }

    pub fn row(&self, out: usize) -> &[i8] {
        &self.weights[out * self.in_features..(out + 1) * self.in_features]
    }

    pub fn with_quantize_input(mut self, quantize_input: bool) -> Self {
        self.quantize_input = quantize_input;
        self
    }
}

/// Inference-mode batch normalization over the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub moving_mean: Vec<f64>,
    pub moving_variance: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            moving_mean: vec![0.0; channels],
            moving_variance: vec![1.0; channels],
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<(), BnnError> {
        let n = self.gamma.len();
        if self.beta.len() != n || self.moving_mean.len() != n || self.moving_variance.len() != n
        {
            return Err(BnnError::InvalidModel(
                "batch-norm parameter vectors differ in length".into(),
            ));
        }
        if let Some(c) = self.moving_variance.iter().position(|&v| !(v >= 0.0)) {
            return Err(BnnError::InvalidModel(format!(
                "batch-norm channel {c} has negative variance {}",
                self.moving_variance[c]
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(BnnError::InvalidModel("batch-norm epsilon is negative".into()));
        }
        if self.moving_variance.iter().any(|&v| v + self.eps <= 0.0) {
            return Err(BnnError::InvalidModel(
                "batch-norm variance plus epsilon must be positive".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn scale_denominator(&self, c: usize) -> f64 {
        (self.moving_variance[c] + self.eps).sqrt()
    }

    /// `gamma * (x - mean) / sqrt(var + eps) + beta` for channel `c`.
    ///
    /// Every step is a monotone floating-point operation, so the result is
    /// monotone in `x` (non-decreasing for `gamma >= 0`).
    #[inline]
    pub fn apply(&self, c: usize, x: f64) -> f64 {
        self.gamma[c] * (x - self.moving_mean[c]) / self.scale_denominator(c) + self.beta[c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    QConv(QConv),
    /// 2x2 window, stride 2, trailing odd row/column dropped.
    MaxPool,
    BatchNorm(BatchNorm),
    Flatten,
    QDense(QDense),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::QConv(_) => "QConv",
            Layer::MaxPool => "MaxPool",
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::Flatten => "Flatten",
            Layer::QDense(_) => "QDense",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::QConv(_) | Layer::QDense(_))
    }

    pub fn quantizes_input(&self) -> bool {
        match self {
            Layer::QConv(c) => c.quantize_input,
            Layer::QDense(d) => d.quantize_input,
            _ => false,
        }
    }

    /// Output shape for the given input shape; `index` is used in errors.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, BnnError> {
        let shape_err = |expected: String| BnnError::Shape {
            layer: index,
            expected,
            actual: input.to_vec(),
        };
        match self {
            Layer::QConv(c) => match *input {
                [h, w, ch] if ch == c.in_channels && h >= c.kernel_h && w >= c.kernel_w => Ok(vec![
                    h - c.kernel_h + 1,
                    w - c.kernel_w + 1,
                    c.out_channels,
                ]),
                _ => Err(shape_err(format!(
                    "[H>={}, W>={}, {}]",
                    c.kernel_h, c.kernel_w, c.in_channels
                ))),
            },
            Layer::MaxPool => match *input {
                [h, w, ch] if h >= POOL && w >= POOL => Ok(vec![h / POOL, w / POOL, ch]),
                _ => Err(shape_err("[H>=2, W>=2, C]".into())),
            },
            Layer::BatchNorm(bn) => {
                if input.last() == Some(&bn.channels()) {
                    Ok(input.to_vec())
                } else {
                    Err(shape_err(format!("last axis of {}", bn.channels())))
                }
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::QDense(d) => match *input {
                [n] if n == d.in_features => Ok(vec![d.out_features]),
                _ => Err(shape_err(format!("[{}]", d.in_features))),
            },
        }
    }
}

/// A feed-forward BNN ending in a dense output block.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    num_classes: usize,
}

impl Network {
    /// Validates the layer chain: shapes, binarization placement, final block.
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        num_classes: usize,
    ) -> Result<Self, BnnError> {
        if !matches!(input_shape.len(), 1 | 3) || input_shape.contains(&0) {
            return Err(BnnError::InvalidModel(format!(
                "bad input shape {input_shape:?}"
            )));
        }
        if num_classes < 2 {
            return Err(BnnError::InvalidModel("need at least two classes".into()));
        }
        let mut seen_linear = false;
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            if let Layer::BatchNorm(bn) = layer {
                bn.validate()?;
            }
            if layer.is_linear() {
                let q = layer.quantizes_input();
                if !seen_linear && q {
                    return Err(BnnError::InvalidModel(format!(
                        "layer {i}: the first linear layer must take real inputs"
                    )));
                }
                if seen_linear && !q {
                    return Err(BnnError::InvalidModel(format!(
                        "layer {i}: linear layers after the first must binarize their input"
                    )));
                }
                seen_linear = true;
            }
            shape = layer.output_shape(i, &shape)?;
        }
        match layers.last() {
            Some(Layer::QDense(d)) if d.out_features == num_classes => {}
            _ => {
                return Err(BnnError::InvalidModel(format!(
                    "final layer must be a dense layer with {num_classes} outputs"
                )))
            }
        }
        debug_assert_eq!(shape, vec![num_classes]);
        Ok(Self {
            input_shape,
            layers,
            num_classes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shape_chain(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(i, shapes.last().unwrap())
                .expect("validated at construction");
            shapes.push(next);
        }
        shapes
    }

    /// Logits `Y_0 .. Y_{L-1}` for one image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor, BnnError> {
        if image.shape() != self.input_shape.as_slice() {
            return Err(BnnError::InputShape {
                expected: self.input_shape.clone(),
                actual: image.shape().to_vec(),
            });
        }
        let mut x = image.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = ops::layer_forward(i, layer, &x)?;
        }
        Ok(x)
    }

    /// Logits for a flat input in channel-last order.
    pub fn forward_flat(&self, input: &[f64]) -> Result<Vec<f64>, BnnError> {
        let t = Tensor::new(self.input_shape.clone(), input.to_vec()).map_err(|_| {
            BnnError::InputShape {
                expected: self.input_shape.clone(),
                actual: vec![input.len()],
            }
        })?;
        Ok(self.forward(&t)?.into_data())
    }

    pub fn predict(&self, image: &Tensor) -> Result<Label, BnnError> {
        Ok(argmax(self.forward(image)?.data()))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Label {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `max_{j != target} (Y_j - Y_target)`; non-negative exactly when some other
/// class ties or beats the target.
pub fn runner_up_margin(logits: &[f64], target: Label) -> f64 {
    logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, &y)| y - logits[target])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0, 5.0, 5.0, 1.0]), 1);
        assert_eq!(argmax(&[9.0, -1.0]), 0);
    }

    #[test]
    fn rejects_non_sign_weights() {
        let err = QDense::new(2, 1, vec![1, 0], false).unwrap_err();
        assert!(matches!(err, BnnError::InvalidModel(_)));
    }

    #[test]
    fn rejects_negative_variance() {
        let mut bn = BatchNorm::identity(2);
        bn.moving_variance[1] = -0.5;
        let net = Network::new(
            vec![2],
            vec![
                Layer::QDense(QDense::placeholder(2, 2, false)),
                Layer::BatchNorm(bn),
                Layer::QDense(QDense::placeholder(2, 2, true)),
            ],
            2,
        );
        assert!(matches!(net, Err(BnnError::InvalidModel(m)) if m.contains("negative variance")));
    }

    #[test]
    fn binarization_placement_is_enforced() {
        let quantized_first = Network::new(
            vec![3],
            vec![Layer::QDense(QDense::placeholder(3, 2, true))],
            2,
        );
        assert!(quantized_first.is_err());
        let real_second = Network::new(
            vec![3],
            vec![
                Layer::QDense(QDense::placeholder(3, 3, false)),
                Layer::QDense(QDense::placeholder(3, 2, false)),
            ],
            2,
        );
        assert!(real_second.is_err());
    }

    #[test]
    fn shape_error_names_layer() {
        let net = Network::new(
            vec![4, 4, 1],
            vec![
                Layer::QConv(QConv::placeholder(1, 2, 3, 3, false)),
                Layer::QConv(QConv::placeholder(2, 2, 3, 3, true)),
                Layer::QDense(QDense::placeholder(2, 2, true)),
            ],
            2,
        );
        match net {
            Err(BnnError::Shape { layer, actual, .. }) => {
                assert_eq!(layer, 1);
                assert_eq!(actual, vec![2, 2, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn margin_counts_ties() {
        assert_eq!(runner_up_margin(&[3.0, 3.0, 1.0], 0), 0.0);
        assert_eq!(runner_up_margin(&[5.0, 3.0, 1.0], 0), -2.0);
    }
}
