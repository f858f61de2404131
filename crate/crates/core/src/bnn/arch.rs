//! The three benchmark architectures and parameter accounting.
//!
//! Builders produce all-`+1` placeholder weights and identity batch norms;
//! real weights arrive through the ONNX loader.

use super::{BatchNorm, BnnError, Layer, Network, QConv, QDense, GTSRB_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Number of `±1` weights.
    pub binary: usize,
    /// Trainable real parameters (`gamma` and `beta` of each batch norm).
    pub real: usize,
    pub total: usize,
}

pub fn count_params(net: &Network) -> ParamCount {
    let mut binary = 0;
    let mut real = 0;
    for layer in net.layers() {
        match layer {
            Layer::QConv(c) => binary += c.weights().len(),
            Layer::QDense(d) => binary += d.weights().len(),
            Layer::BatchNorm(bn) => real += 2 * bn.channels(),
            Layer::MaxPool | Layer::Flatten => {}
        }
    }
    ParamCount {
        binary,
        real,
        total: binary + real,
    }
}

/// Spec of a layer before the incoming channel count is known.
enum Block {
    Conv(usize, usize),
    Pool,
    Norm,
    Flatten,
    Dense(usize),
}

fn assemble(h: usize, w: usize, blocks: &[Block]) -> Result<Network, BnnError> {
    let mut shape = vec![h, w, 3];
    let mut layers = Vec::with_capacity(blocks.len());
    let mut first_linear = true;
    for (i, block) in blocks.iter().enumerate() {
        let layer = match *block {
            Block::Conv(out, k) => {
                let in_ch = *shape.last().unwrap();
                let l = QConv::placeholder(in_ch, out, k, k, !first_linear);
                first_linear = false;
                Layer::QConv(l)
            }
            Block::Pool => Layer::MaxPool,
            Block::Norm => Layer::BatchNorm(BatchNorm::identity(*shape.last().unwrap())),
            Block::Flatten => Layer::Flatten,
            Block::Dense(out) => {
                let l = QDense::placeholder(shape.iter().product(), out, !first_linear);
                first_linear = false;
                Layer::QDense(l)
            }
        };
        shape = layer.output_shape(i, &shape)?;
        layers.push(layer);
    }
    Network::new(vec![h, w, 3], layers, GTSRB_CLASSES)
}

/// QConv(32,5x5)-MP-BN, QConv(64,5x5)-MP-BN, QConv(64,3x3)-MP-BN,
/// Flatten, QDense(1024)-BN, QDense(43).
pub fn build_arch_a(h: usize, w: usize) -> Result<Network, BnnError> {
    use Block::*;
    assemble(
        h,
        w,
        &[
            Conv(32, 5),
            Pool,
            Norm,
            Conv(64, 5),
            Pool,
            Norm,
            Conv(64, 3),
            Pool,
            Norm,
            Flatten,
            Dense(1024),
            Norm,
            Dense(GTSRB_CLASSES),
        ],
    )
}

/// Like arch A but the third block has no pooling and the hidden dense
/// layer has 256 units.
pub fn build_arch_b(h: usize, w: usize) -> Result<Network, BnnError> {
    use Block::*;
    assemble(
        h,
        w,
        &[
            Conv(32, 5),
            Pool,
            Norm,
            Conv(64, 5),
            Pool,
            Norm,
            Conv(64, 3),
            Norm,
            Flatten,
            Dense(256),
            Norm,
            Dense(GTSRB_CLASSES),
        ],
    )
}

/// QConv(16,3x3), QConv(32,2x2), Flatten, QDense(43): binary weights only.
pub fn build_arch_xnor(h: usize, w: usize) -> Result<Network, BnnError> {
    use Block::*;
    assemble(
        h,
        w,
        &[Conv(16, 3), Conv(32, 2), Flatten, Dense(GTSRB_CLASSES)],
    )
}
