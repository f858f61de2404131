//! Mapping between ONNX graphs and [`Network`].
//!
//! ONNX tensors are channel-first (`NCHW`); the network is channel-last.
//! Conv kernels are transposed at this boundary, and dense layers fed by a
//! flattened feature map have their input columns permuted so that both
//! sides compute the same function.

use std::collections::{HashMap, HashSet};

use super::proto::{
    AttrValue, Attribute, Dim, GraphProto, ModelProto, NodeProto, OpsetId, TensorProto, ValueInfo,
};
use super::OnnxError;
use crate::bnn::{BatchNorm, Layer, Network, QConv, QDense};

/// The one opset version of the default domain the codec reads and writes.
pub const OPSET_VERSION: i64 = 13;

const IR_VERSION: i64 = 7;
const INPUT_NAME: &str = "input";
const OUTPUT_NAME: &str = "output";

/// Maps positions of an ONNX (channel-first) flattened vector to positions
/// of the channel-last flattened vector.
fn flatten_permutation(h: usize, w: usize, c: usize) -> Vec<usize> {
    let mut perm = vec![0; h * w * c];
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                perm[(ch * h + r) * w + col] = (r * w + col) * c + ch;
            }
        }
    }
    perm
}

fn as_dims(shape: &[usize]) -> Vec<i64> {
    shape.iter().map(|&d| d as i64).collect()
}

struct GraphBuilder {
    nodes: Vec<NodeProto>,
    initializers: Vec<TensorProto>,
    next: usize,
}

impl GraphBuilder {
    fn fresh(&mut self, stem: &str) -> String {
        self.next += 1;
        format!("{stem}_{}", self.next)
    }

    fn node(&mut self, op: &str, inputs: Vec<String>, out: String, attributes: Vec<Attribute>) -> String {
        let name = format!("{op}_{}", self.nodes.len());
        self.nodes.push(NodeProto {
            inputs,
            outputs: vec![out.clone()],
            name,
            op_type: op.into(),
            attributes,
            ..Default::default()
        });
        out
    }

    fn init_f32(&mut self, stem: &str, dims: &[i64], values: impl IntoIterator<Item = f64>) -> String {
        let name = self.fresh(stem);
        let values: Vec<f32> = values.into_iter().map(|v| v as f32).collect();
        self.initializers.push(TensorProto::from_f32(&name, dims, &values));
        name
    }
}

/// Encodes a network as an ONNX model (opset 13). Parameters are stored as
/// float32.
pub fn serialize_model(net: &Network) -> Vec<u8> {
    let mut g = GraphBuilder {
        nodes: Vec::new(),
        initializers: Vec::new(),
        next: 0,
    };
    let input_dims = match net.input_shape() {
        [h, w, c] => vec![1, *c as i64, *h as i64, *w as i64],
        [n] => vec![1, *n as i64],
        _ => unreachable!("networks take rank-1 or rank-3 inputs"),
    };
    let chain = net.shape_chain();
    let mut cur = INPUT_NAME.to_string();
    let mut perm: Option<Vec<usize>> = None;
    let last = net.layers().len() - 1;

    for (i, layer) in net.layers().iter().enumerate() {
        let shape = &chain[i];
        let out = if i == last {
            OUTPUT_NAME.to_string()
        } else {
            g.fresh("t")
        };
        if layer.quantizes_input() {
            let s = g.fresh("sign");
            cur = g.node("Sign", vec![cur], s, vec![]);
        }
        cur = match layer {
            Layer::QConv(c) => {
                let (oc, ic, kh, kw) = (c.out_channels(), c.in_channels(), c.kernel_h(), c.kernel_w());
                let mut values = Vec::with_capacity(c.weights().len());
                for o in 0..oc {
                    for ch in 0..ic {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                values.push(c.weight(o, ky, kx, ch) as f64);
                            }
                        }
                    }
                }
                let w = g.init_f32("conv_w", &as_dims(&[oc, ic, kh, kw]), values);
                g.node(
                    "Conv",
                    vec![cur, w],
                    out,
                    vec![
                        Attribute::ints("kernel_shape", &[kh as i64, kw as i64]),
                        Attribute::ints("strides", &[1, 1]),
                        Attribute::ints("pads", &[0, 0, 0, 0]),
                        Attribute::ints("dilations", &[1, 1]),
                        Attribute::int("group", 1),
                    ],
                )
            }
            Layer::MaxPool => g.node(
                "MaxPool",
                vec![cur],
                out,
                vec![
                    Attribute::ints("kernel_shape", &[2, 2]),
                    Attribute::ints("strides", &[2, 2]),
                ],
            ),
            Layer::BatchNorm(bn) => {
                let n = bn.channels();
                let order: Vec<usize> = perm.clone().unwrap_or_else(|| (0..n).collect());
                let pick = |v: &Vec<f64>| order.iter().map(|&k| v[k]).collect::<Vec<_>>();
                let dims = [n as i64];
                let scale = g.init_f32("bn_scale", &dims, pick(&bn.gamma));
                let bias = g.init_f32("bn_bias", &dims, pick(&bn.beta));
                let mean = g.init_f32("bn_mean", &dims, pick(&bn.moving_mean));
                let var = g.init_f32("bn_var", &dims, pick(&bn.moving_variance));
                g.node(
                    "BatchNormalization",
                    vec![cur, scale, bias, mean, var],
                    out,
                    vec![Attribute::float("epsilon", bn.eps as f32)],
                )
            }
            Layer::Flatten => {
                perm = match shape[..] {
                    [h, w, c] => Some(flatten_permutation(h, w, c)),
                    _ => perm.take(),
                };
                g.node("Flatten", vec![cur], out, vec![Attribute::int("axis", 1)])
            }
            Layer::QDense(d) => {
                let (n_in, n_out) = (d.in_features(), d.out_features());
                let order: Vec<usize> = perm.take().unwrap_or_else(|| (0..n_in).collect());
                let mut values = Vec::with_capacity(n_in * n_out);
                for o in 0..n_out {
                    let row = d.row(o);
                    values.extend(order.iter().map(|&k| row[k] as f64));
                }
                let b = g.init_f32("dense_w", &as_dims(&[n_out, n_in]), values);
                g.node("Gemm", vec![cur, b], out, vec![Attribute::int("transB", 1)])
            }
        };
    }

    let model = ModelProto {
        ir_version: IR_VERSION,
        producer_name: "bnnverify".into(),
        opset_imports: vec![OpsetId {
            domain: String::new(),
            version: OPSET_VERSION,
        }],
        graph: Some(GraphProto {
            name: "bnn".into(),
            nodes: g.nodes,
            initializers: g.initializers,
            inputs: vec![ValueInfo::tensor(INPUT_NAME, &input_dims)],
            outputs: vec![ValueInfo::tensor(OUTPUT_NAME, &[1, net.num_classes() as i64])],
        }),
    };
    model.encode()
}

fn structure(msg: impl Into<String>) -> OnnxError {
    OnnxError::Structure(msg.into())
}

fn dim_usize(v: i64, what: &str) -> Result<usize, OnnxError> {
    usize::try_from(v)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| structure(format!("{what} has invalid dimension {v}")))
}

fn input_shape(info: &ValueInfo) -> Result<Vec<usize>, OnnxError> {
    let known = |d: &Dim| match d {
        Dim::Value(v) => dim_usize(*v, &info.name),
        _ => Err(structure(format!("input '{}' has a symbolic dimension", info.name))),
    };
    match info.dims.as_slice() {
        [_, c, h, w] => Ok(vec![known(h)?, known(w)?, known(c)?]),
        [_, n] => Ok(vec![known(n)?]),
        other => Err(structure(format!(
            "input '{}' must be [N,C,H,W] or [N,F], got rank {}",
            info.name,
            other.len()
        ))),
    }
}

fn check_ints(node: &NodeProto, name: &str, default: Option<&[i64]>, allowed: &dyn Fn(&[i64]) -> bool) -> Result<(), OnnxError> {
    let value = node.ints_attr(name).or(default);
    match value {
        Some(v) if !allowed(v) => Err(structure(format!(
            "{} '{}': unsupported {name} {v:?}",
            node.op_type, node.name
        ))),
        _ => Ok(()),
    }
}

fn check_auto_pad(node: &NodeProto) -> Result<(), OnnxError> {
    match node.attr("auto_pad") {
        None => Ok(()),
        Some(AttrValue::String(s)) if s == b"NOTSET" || s == b"VALID" => Ok(()),
        Some(_) => Err(structure(format!("{} '{}': padding is not supported", node.op_type, node.name))),
    }
}

fn sign_values(t: &TensorProto) -> Result<Vec<i8>, OnnxError> {
    t.values_f64()?
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            if v == 1.0 {
                Ok(1)
            } else if v == -1.0 {
                Ok(-1)
            } else {
                Err(OnnxError::NonBinaryWeight {
                    tensor: t.name.clone(),
                    index,
                    value: v,
                })
            }
        })
        .collect()
}

fn check_zero_bias(t: Option<&TensorProto>, node: &NodeProto) -> Result<(), OnnxError> {
    if let Some(t) = t {
        if t.values_f64()?.iter().any(|&v| v != 0.0) {
            return Err(structure(format!(
                "{} '{}' has a non-zero bias; binary layers carry no bias",
                node.op_type, node.name
            )));
        }
    }
    Ok(())
}

struct ChainState<'a> {
    inits: HashMap<&'a str, &'a TensorProto>,
    shape: Vec<usize>,
    perm: Option<Vec<usize>>,
    pending_sign: bool,
    layers: Vec<Layer>,
}

impl<'a> ChainState<'a> {
    fn init(&self, node: &NodeProto, slot: usize) -> Result<Option<&'a TensorProto>, OnnxError> {
        match node.inputs.get(slot).map(String::as_str) {
            None | Some("") => Ok(None),
            Some(name) => self.inits.get(name).copied().map(Some).ok_or_else(|| {
                structure(format!(
                    "{} '{}': input {slot} ('{name}') must be a constant initializer",
                    node.op_type, node.name
                ))
            }),
        }
    }

    fn required(&self, node: &NodeProto, slot: usize) -> Result<&'a TensorProto, OnnxError> {
        self.init(node, slot)?.ok_or_else(|| {
            structure(format!("{} '{}' is missing input {slot}", node.op_type, node.name))
        })
    }

    fn push(&mut self, layer: Layer) -> Result<(), OnnxError> {
        self.shape = layer.output_shape(self.layers.len(), &self.shape)?;
        self.layers.push(layer);
        Ok(())
    }

    fn take_sign(&mut self) -> bool {
        std::mem::take(&mut self.pending_sign)
    }

    fn apply(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        match node.op_type.as_str() {
            "Sign" => self.pending_sign = true,
            "Conv" => self.conv(node)?,
            "MaxPool" => self.max_pool(node)?,
            "BatchNormalization" => self.batch_norm(node)?,
            "Flatten" => {
                if node.int_attr("axis").unwrap_or(1) != 1 {
                    return Err(structure(format!("Flatten '{}' must use axis 1", node.name)));
                }
                self.flatten()?;
            }
            "Reshape" => {
                let target = self.required(node, 1)?.values_i64()?;
                let total: usize = self.shape.iter().product();
                let flat = match target.as_slice() {
                    [1, -1] | [-1] => true,
                    [a, b] => (*a == 1 || *a == -1) && *b == total as i64,
                    [n] => *n == total as i64,
                    _ => false,
                };
                if !flat {
                    return Err(structure(format!(
                        "Reshape '{}' to {target:?} is not a flatten",
                        node.name
                    )));
                }
                self.flatten()?;
            }
            "Gemm" => self.gemm(node)?,
            "MatMul" => self.matmul(node)?,
            other => return Err(OnnxError::UnsupportedOp(other.to_string())),
        }
        Ok(())
    }

    fn conv(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        if node.int_attr("group").unwrap_or(1) != 1 {
            return Err(structure(format!("Conv '{}': grouped convolution", node.name)));
        }
        check_auto_pad(node)?;
        check_ints(node, "strides", None, &|v| v.iter().all(|&s| s == 1))?;
        check_ints(node, "dilations", None, &|v| v.iter().all(|&s| s == 1))?;
        check_ints(node, "pads", None, &|v| v.iter().all(|&s| s == 0))?;
        let w = self.required(node, 1)?;
        check_zero_bias(self.init(node, 2)?, node)?;
        let [oc, ic, kh, kw] = w.dims[..] else {
            return Err(structure(format!("Conv '{}': weight must be rank 4", node.name)));
        };
        let (oc, ic, kh, kw) = (
            dim_usize(oc, &w.name)?,
            dim_usize(ic, &w.name)?,
            dim_usize(kh, &w.name)?,
            dim_usize(kw, &w.name)?,
        );
        check_ints(node, "kernel_shape", None, &|v| v == [kh as i64, kw as i64])?;
        let onnx = sign_values(w)?;
        let mut weights = Vec::with_capacity(onnx.len());
        for o in 0..oc {
            for ky in 0..kh {
                for kx in 0..kw {
                    for ch in 0..ic {
                        weights.push(onnx[((o * ic + ch) * kh + ky) * kw + kx]);
                    }
                }
            }
        }
        let q = self.take_sign();
        self.push(Layer::QConv(QConv::new(ic, oc, kh, kw, weights, q)?))
    }

    fn max_pool(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        check_auto_pad(node)?;
        match node.ints_attr("kernel_shape") {
            Some([2, 2]) => {}
            _ => return Err(structure(format!("MaxPool '{}' must use a 2x2 window", node.name))),
        }
        check_ints(node, "strides", Some(&[1, 1]), &|v| v == [2, 2])?;
        check_ints(node, "pads", None, &|v| v.iter().all(|&s| s == 0))?;
        check_ints(node, "dilations", None, &|v| v.iter().all(|&s| s == 1))?;
        if node.int_attr("ceil_mode").unwrap_or(0) != 0 {
            return Err(structure(format!("MaxPool '{}': ceil_mode is not supported", node.name)));
        }
        // sign commutes with max, so a pending binarization passes through
        self.push(Layer::MaxPool)
    }

    fn batch_norm(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        if self.pending_sign {
            return Err(structure(format!(
                "Sign must feed a Conv or Gemm, not BatchNormalization '{}'",
                node.name
            )));
        }
        if node.int_attr("training_mode").unwrap_or(0) != 0 {
            return Err(structure(format!("BatchNormalization '{}' is in training mode", node.name)));
        }
        let read = |slot| -> Result<Vec<f64>, OnnxError> { self.required(node, slot)?.values_f64() };
        let (gamma, beta, mean, var) = (read(1)?, read(2)?, read(3)?, read(4)?);
        let n = gamma.len();
        let reorder = |v: Vec<f64>| -> Vec<f64> {
            match &self.perm {
                Some(p) if p.len() == v.len() => {
                    let mut out = vec![0.0; v.len()];
                    for (pos, &k) in p.iter().enumerate() {
                        out[k] = v[pos];
                    }
                    out
                }
                _ => v,
            }
        };
        let bn = BatchNorm {
            gamma: reorder(gamma),
            beta: reorder(beta),
            moving_mean: reorder(mean),
            moving_variance: reorder(var),
            eps: node.float_attr("epsilon").map_or(1e-5f32 as f64, f64::from),
        };
        if bn.beta.len() != n || bn.moving_mean.len() != n || bn.moving_variance.len() != n {
            return Err(structure(format!(
                "BatchNormalization '{}': parameter lengths differ",
                node.name
            )));
        }
        bn.validate()?;
        self.push(Layer::BatchNorm(bn))
    }

    fn flatten(&mut self) -> Result<(), OnnxError> {
        if let [h, w, c] = self.shape[..] {
            self.perm = Some(flatten_permutation(h, w, c));
        }
        self.push(Layer::Flatten)
    }

    fn gemm(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        if node.float_attr("alpha").unwrap_or(1.0) != 1.0 {
            return Err(structure(format!("Gemm '{}': alpha must be 1", node.name)));
        }
        if node.int_attr("transA").unwrap_or(0) != 0 {
            return Err(structure(format!("Gemm '{}': transA is not supported", node.name)));
        }
        let b = self.required(node, 1)?;
        check_zero_bias(self.init(node, 2)?, node)?;
        let trans_b = node.int_attr("transB").unwrap_or(0) != 0;
        self.dense(node, b, trans_b)
    }

    fn matmul(&mut self, node: &NodeProto) -> Result<(), OnnxError> {
        let b = self.required(node, 1)?;
        self.dense(node, b, false)
    }

    fn dense(&mut self, node: &NodeProto, b: &TensorProto, trans_b: bool) -> Result<(), OnnxError> {
        let [d0, d1] = b.dims[..] else {
            return Err(structure(format!("{} '{}': weight must be rank 2", node.op_type, node.name)));
        };
        let (d0, d1) = (dim_usize(d0, &b.name)?, dim_usize(d1, &b.name)?);
        let (n_in, n_out) = if trans_b { (d1, d0) } else { (d0, d1) };
        let onnx = sign_values(b)?;
        let perm = match self.perm.take() {
            Some(p) if p.len() == n_in => p,
            _ => (0..n_in).collect(),
        };
        let mut weights = vec![0i8; n_in * n_out];
        for o in 0..n_out {
            for (pos, &k) in perm.iter().enumerate() {
                let v = if trans_b { onnx[o * n_in + pos] } else { onnx[pos * n_out + o] };
                weights[o * n_in + k] = v;
            }
        }
        let q = self.take_sign();
        self.push(Layer::QDense(QDense::new(n_in, n_out, weights, q)?))
    }
}

/// Decodes an ONNX model in the supported subset into a [`Network`].
pub fn parse_model(bytes: &[u8]) -> Result<Network, OnnxError> {
    let model = ModelProto::decode(bytes)?;
    let default_opset: Vec<i64> = model
        .opset_imports
        .iter()
        .filter(|o| o.domain.is_empty() || o.domain == "ai.onnx")
        .map(|o| o.version)
        .collect();
    if default_opset != [OPSET_VERSION] {
        return Err(OnnxError::UnsupportedOpset {
            found: format!("{default_opset:?}"),
        });
    }
    let graph = model
        .graph
        .as_ref()
        .ok_or_else(|| structure("model has no graph"))?;

    let inits: HashMap<&str, &TensorProto> = graph
        .initializers
        .iter()
        .map(|t| (t.name.as_str(), t))
        .collect();
    let data_inputs: Vec<&ValueInfo> = graph
        .inputs
        .iter()
        .filter(|v| !inits.contains_key(v.name.as_str()))
        .collect();
    let [input] = data_inputs[..] else {
        return Err(structure(format!(
            "expected exactly one graph input, found {}",
            data_inputs.len()
        )));
    };
    let [output] = &graph.outputs[..] else {
        return Err(structure(format!(
            "expected exactly one graph output, found {}",
            graph.outputs.len()
        )));
    };

    let mut produced: HashSet<&str> = inits.keys().copied().collect();
    produced.insert(input.name.as_str());
    for n in &graph.nodes {
        produced.extend(n.outputs.iter().map(String::as_str));
    }
    for n in &graph.nodes {
        if !n.domain.is_empty() && n.domain != "ai.onnx" {
            return Err(OnnxError::UnsupportedOp(format!("{}::{}", n.domain, n.op_type)));
        }
        if let Some(missing) = n
            .inputs
            .iter()
            .find(|i| !i.is_empty() && !produced.contains(i.as_str()))
        {
            return Err(OnnxError::Dangling(missing.clone()));
        }
    }
    if !produced.contains(output.name.as_str()) {
        return Err(OnnxError::Dangling(output.name.clone()));
    }

    let mut consumers: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        for name in n.inputs.iter().filter(|s| !inits.contains_key(s.as_str())) {
            consumers.entry(name.as_str()).or_default().push(i);
        }
    }

    let mut state = ChainState {
        inits,
        shape: input_shape(input)?,
        perm: None,
        pending_sign: false,
        layers: Vec::new(),
    };
    let input_shape = state.shape.clone();
    let mut cur = input.name.as_str();
    let mut visited = vec![false; graph.nodes.len()];
    while cur != output.name {
        let next = consumers.get(cur).map(Vec::as_slice).unwrap_or(&[]);
        let [idx] = next[..] else {
            return Err(structure(format!(
                "tensor '{cur}' must feed exactly one node, feeds {}",
                next.len()
            )));
        };
        let node = &graph.nodes[idx];
        if visited[idx] {
            return Err(structure(format!("cycle through node '{}'", node.name)));
        }
        visited[idx] = true;
        let data: Vec<&String> = node
            .inputs
            .iter()
            .filter(|s| !s.is_empty() && !state.inits.contains_key(s.as_str()))
            .collect();
        if data.len() != 1 || node.inputs.first().map(String::as_str) != Some(cur) {
            return Err(structure(format!(
                "node '{}' must take the running tensor as its only data input",
                node.name
            )));
        }
        state.apply(node)?;
        cur = node
            .outputs
            .first()
            .map(String::as_str)
            .ok_or_else(|| structure(format!("node '{}' has no output", node.name)))?;
    }
    if let Some(i) = visited.iter().position(|v| !v) {
        let n = &graph.nodes[i];
        return Err(structure(format!(
            "node '{}' ({}) is not on the input-to-output chain",
            n.name, n.op_type
        )));
    }
    if state.pending_sign {
        return Err(structure("Sign must feed a Conv or Gemm"));
    }
    let num_classes = match state.layers.last() {
        Some(Layer::QDense(d)) => d.out_features(),
        _ => return Err(structure("the graph must end with a dense layer")),
    };
    Ok(Network::new(input_shape, state.layers, num_classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::build_arch_xnor;

    fn tiny() -> Network {
        let conv = QConv::new(1, 2, 2, 2, vec![1, -1, 1, 1, -1, -1, 1, -1], false).unwrap();
        Network::new(
            vec![3, 3, 1],
            vec![
                Layer::QConv(conv),
                Layer::Flatten,
                Layer::QDense(QDense::new(8, 2, (0..16).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect(), true).unwrap()),
            ],
            2,
        )
        .unwrap()
    }

    fn graph_of(bytes: &[u8]) -> ModelProto {
        ModelProto::decode(bytes).unwrap()
    }

    #[test]
    fn xnor_round_trip_is_structural_identity() {
        let net = build_arch_xnor(30, 30).unwrap();
        assert_eq!(parse_model(&serialize_model(&net)).unwrap(), net);
    }

    #[test]
    fn tiny_round_trip() {
        let net = tiny();
        assert_eq!(parse_model(&serialize_model(&net)).unwrap(), net);
    }

    #[test]
    fn unsupported_op_is_named() {
        let mut model = graph_of(&serialize_model(&tiny()));
        let g = model.graph.as_mut().unwrap();
        let last = g.nodes.last_mut().unwrap();
        last.outputs[0] = "logits".into();
        g.nodes.push(NodeProto {
            inputs: vec!["logits".into()],
            outputs: vec!["output".into()],
            name: "softmax".into(),
            op_type: "Softmax".into(),
            ..Default::default()
        });
        let err = parse_model(&model.encode()).unwrap_err();
        assert_eq!(err, OnnxError::UnsupportedOp("Softmax".into()));
        assert!(err.to_string().contains("Softmax"));
    }

    #[test]
    fn non_binary_weight_rejected() {
        let mut model = graph_of(&serialize_model(&tiny()));
        let g = model.graph.as_mut().unwrap();
        let t = &mut g.initializers[0];
        t.raw_data[0..4].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(
            parse_model(&model.encode()),
            Err(OnnxError::NonBinaryWeight { index: 0, .. })
        ));
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut model = graph_of(&serialize_model(&tiny()));
        model.graph.as_mut().unwrap().nodes[0].inputs[1] = "nowhere".into();
        assert_eq!(
            parse_model(&model.encode()).unwrap_err(),
            OnnxError::Dangling("nowhere".into())
        );
    }

    #[test]
    fn other_opsets_rejected() {
        let mut model = graph_of(&serialize_model(&tiny()));
        model.opset_imports[0].version = 11;
        assert!(matches!(
            parse_model(&model.encode()),
            Err(OnnxError::UnsupportedOpset { .. })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = serialize_model(&tiny());
        let err = parse_model(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.offset().is_some(), "{err}");
    }

    #[test]
    fn accepts_matmul_with_float_data() {
        // x[1,3] -> MatMul(B = [[1,-1],[1,1],[-1,1]]) -> y[1,2]
        let b = TensorProto {
            name: "B".into(),
            dims: vec![3, 2],
            data_type: super::super::proto::DATA_TYPE_FLOAT,
            float_data: vec![1.0, -1.0, 1.0, 1.0, -1.0, 1.0],
            ..Default::default()
        };
        let model = ModelProto {
            ir_version: 7,
            opset_imports: vec![OpsetId { domain: String::new(), version: OPSET_VERSION }],
            graph: Some(GraphProto {
                nodes: vec![NodeProto {
                    inputs: vec!["x".into(), "B".into()],
                    outputs: vec!["y".into()],
                    op_type: "MatMul".into(),
                    ..Default::default()
                }],
                initializers: vec![b],
                inputs: vec![ValueInfo::tensor("x", &[1, 3])],
                outputs: vec![ValueInfo::tensor("y", &[1, 2])],
                ..Default::default()
            }),
            ..Default::default()
        };
        let net = parse_model(&model.encode()).unwrap();
        let logits = net.forward_flat(&[2.0, 3.0, 5.0]).unwrap();
        assert_eq!(logits, vec![2.0 + 3.0 - 5.0, -2.0 + 3.0 + 5.0]);
    }
}
