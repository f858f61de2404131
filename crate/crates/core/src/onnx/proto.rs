//! The subset of ONNX messages the codec reads and writes.
//!
//! Unknown fields are skipped on read. Repeated numeric fields are accepted
//! both packed and unpacked.

use super::wire::{FieldReader, FieldWriter, Payload, WireField};
use super::OnnxError;

pub const DATA_TYPE_FLOAT: i32 = 1;
pub const DATA_TYPE_INT64: i32 = 7;
pub const DATA_TYPE_DOUBLE: i32 = 11;

const ATTR_FLOAT: u64 = 1;
const ATTR_INT: u64 = 2;
const ATTR_STRING: u64 = 3;
const ATTR_FLOATS: u64 = 6;
const ATTR_INTS: u64 = 7;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelProto {
    pub ir_version: i64,
    pub producer_name: String,
    pub opset_imports: Vec<OpsetId>,
    pub graph: Option<GraphProto>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpsetId {
    pub domain: String,
    pub version: i64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphProto {
    pub name: String,
    pub nodes: Vec<NodeProto>,
    pub initializers: Vec<TensorProto>,
    pub inputs: Vec<ValueInfo>,
    pub outputs: Vec<ValueInfo>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeProto {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub name: String,
    pub op_type: String,
    pub domain: String,
    pub attributes: Vec<Attribute>,
    /// Offset of the node message, for diagnostics.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Float(f32),
    Int(i64),
    String(Vec<u8>),
    Floats(Vec<f32>),
    Ints(Vec<i64>),
    /// Tensor, graph or other kinds the codec never interprets.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub value: AttrValue,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorProto {
    pub name: String,
    pub dims: Vec<i64>,
    pub data_type: i32,
    pub float_data: Vec<f32>,
    pub double_data: Vec<f64>,
    pub int64_data: Vec<i64>,
    pub raw_data: Vec<u8>,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dim {
    Value(i64),
    Param(String),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueInfo {
    pub name: String,
    pub elem_type: i32,
    pub dims: Vec<Dim>,
}

fn malformed(field: &WireField, reason: impl Into<String>) -> OnnxError {
    OnnxError::Malformed {
        offset: field.offset,
        reason: reason.into(),
    }
}

fn expect_bytes<'a>(field: &WireField<'a>, what: &str) -> Result<&'a [u8], OnnxError> {
    match field.payload {
        Payload::Bytes(b) => Ok(b),
        _ => Err(malformed(field, format!("{what} must be length-delimited"))),
    }
}

fn expect_varint(field: &WireField, what: &str) -> Result<u64, OnnxError> {
    match field.payload {
        Payload::Varint(v) => Ok(v),
        _ => Err(malformed(field, format!("{what} must be a varint"))),
    }
}

fn expect_string(field: &WireField, what: &str) -> Result<String, OnnxError> {
    let b = expect_bytes(field, what)?;
    String::from_utf8(b.to_vec()).map_err(|_| malformed(field, format!("{what} is not UTF-8")))
}

fn push_int64s(field: &WireField, out: &mut Vec<i64>, what: &str) -> Result<(), OnnxError> {
    match field.payload {
        Payload::Varint(v) => out.push(v as i64),
        Payload::Bytes(body) => {
            let mut pos = 0;
            while pos < body.len() {
                let (v, next) = super::wire::decode_varint(body, pos)
                    .map_err(|e| e.shifted(field.offset))?;
                out.push(v as i64);
                pos = next;
            }
        }
        _ => return Err(malformed(field, format!("{what} has the wrong wire type"))),
    }
    Ok(())
}

fn push_floats(field: &WireField, out: &mut Vec<f32>, what: &str) -> Result<(), OnnxError> {
    match field.payload {
        Payload::Fixed32(bits) => out.push(f32::from_bits(bits)),
        Payload::Bytes(body) => {
            if body.len() % 4 != 0 {
                return Err(malformed(field, format!("packed {what} is not a multiple of 4 bytes")));
            }
            out.extend(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
            );
        }
        _ => return Err(malformed(field, format!("{what} has the wrong wire type"))),
    }
    Ok(())
}

fn push_doubles(field: &WireField, out: &mut Vec<f64>) -> Result<(), OnnxError> {
    match field.payload {
        Payload::Fixed64(bits) => out.push(f64::from_bits(bits)),
        Payload::Bytes(body) => {
            if body.len() % 8 != 0 {
                return Err(malformed(field, "packed double_data is not a multiple of 8 bytes"));
            }
            out.extend(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
            );
        }
        _ => return Err(malformed(field, "double_data has the wrong wire type")),
    }
    Ok(())
}

impl ModelProto {
    pub fn decode(bytes: &[u8]) -> Result<Self, OnnxError> {
        let mut m = ModelProto::default();
        for field in FieldReader::new(bytes, 0) {
            let f = field?;
            match f.field_number {
                1 => m.ir_version = expect_varint(&f, "ir_version")? as i64,
                2 => m.producer_name = expect_string(&f, "producer_name")?,
                7 => m.graph = Some(GraphProto::decode(expect_bytes(&f, "graph")?, f.offset)?),
                8 => m
                    .opset_imports
                    .push(OpsetId::decode(expect_bytes(&f, "opset_import")?, f.offset)?),
                _ => {}
            }
        }
        Ok(m)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.int64(1, self.ir_version);
        w.string(2, &self.producer_name);
        if let Some(g) = &self.graph {
            w.message(7, g.encode());
        }
        for op in &self.opset_imports {
            let mut o = FieldWriter::new();
            o.string(1, &op.domain).int64(2, op.version);
            w.message(8, o);
        }
        w.finish()
    }
}

impl OpsetId {
    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut o = OpsetId::default();
        for field in FieldReader::new(bytes, base) {
            let f = field?;
            match f.field_number {
                1 => o.domain = expect_string(&f, "opset domain")?,
                2 => o.version = expect_varint(&f, "opset version")? as i64,
                _ => {}
            }
        }
        Ok(o)
    }
}

impl GraphProto {
    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut g = GraphProto::default();
        for field in FieldReader::new(bytes, base) {
            let f = field?;
            match f.field_number {
                1 => g.nodes.push(NodeProto::decode(expect_bytes(&f, "node")?, f.offset)?),
                2 => g.name = expect_string(&f, "graph name")?,
                5 => g
                    .initializers
                    .push(TensorProto::decode(expect_bytes(&f, "initializer")?, f.offset)?),
                11 => g.inputs.push(ValueInfo::decode(expect_bytes(&f, "input")?, f.offset)?),
                12 => g.outputs.push(ValueInfo::decode(expect_bytes(&f, "output")?, f.offset)?),
                _ => {}
            }
        }
        Ok(g)
    }

    fn encode(&self) -> FieldWriter {
        let mut w = FieldWriter::new();
        for n in &self.nodes {
            w.message(1, n.encode());
        }
        w.string(2, &self.name);
        for t in &self.initializers {
            w.message(5, t.encode());
        }
        for v in &self.inputs {
            w.message(11, v.encode());
        }
        for v in &self.outputs {
            w.message(12, v.encode());
        }
        w
    }
}

impl NodeProto {
    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut n = NodeProto {
            offset: base,
            ..Default::default()
        };
        for field in FieldReader::new(bytes, base) {
            let f = field?;
            match f.field_number {
                1 => n.inputs.push(expect_string(&f, "node input")?),
                2 => n.outputs.push(expect_string(&f, "node output")?),
                3 => n.name = expect_string(&f, "node name")?,
                4 => n.op_type = expect_string(&f, "op_type")?,
                5 => n
                    .attributes
                    .push(Attribute::decode(expect_bytes(&f, "attribute")?, f.offset)?),
                7 => n.domain = expect_string(&f, "node domain")?,
                _ => {}
            }
        }
        Ok(n)
    }

    fn encode(&self) -> FieldWriter {
        let mut w = FieldWriter::new();
        for i in &self.inputs {
            w.string(1, i);
        }
        for o in &self.outputs {
            w.string(2, o);
        }
        w.string(3, &self.name);
        w.string(4, &self.op_type);
        for a in &self.attributes {
            w.message(5, a.encode());
        }
        if !self.domain.is_empty() {
            w.string(7, &self.domain);
        }
        w
    }

    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.value)
    }

    pub fn int_attr(&self, name: &str) -> Option<i64> {
        match self.attr(name) {
            Some(AttrValue::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn ints_attr(&self, name: &str) -> Option<&[i64]> {
        match self.attr(name) {
            Some(AttrValue::Ints(v)) => Some(v),
            _ => None,
        }
    }

    pub fn float_attr(&self, name: &str) -> Option<f32> {
        match self.attr(name) {
            Some(AttrValue::Float(f)) => Some(*f),
            _ => None,
        }
    }
}

impl Attribute {
    pub fn int(name: &str, v: i64) -> Self {
        Self {
            name: name.into(),
            value: AttrValue::Int(v),
        }
    }

    pub fn ints(name: &str, v: &[i64]) -> Self {
        Self {
            name: name.into(),
            value: AttrValue::Ints(v.to_vec()),
        }
    }

    pub fn float(name: &str, v: f32) -> Self {
        Self {
            name: name.into(),
            value: AttrValue::Float(v),
        }
    }

    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut name = String::new();
        let mut kind = None;
        let (mut f, mut i, mut s) = (None, None, None);
        let (mut floats, mut ints) = (Vec::new(), Vec::new());
        for field in FieldReader::new(bytes, base) {
            let fld = field?;
            match fld.field_number {
                1 => name = expect_string(&fld, "attribute name")?,
                2 => match fld.payload {
                    Payload::Fixed32(bits) => f = Some(f32::from_bits(bits)),
                    _ => return Err(malformed(&fld, "attribute f must be fixed32")),
                },
                3 => i = Some(expect_varint(&fld, "attribute i")? as i64),
                4 => s = Some(expect_bytes(&fld, "attribute s")?.to_vec()),
                7 => push_floats(&fld, &mut floats, "attribute floats")?,
                8 => push_int64s(&fld, &mut ints, "attribute ints")?,
                20 => kind = Some(expect_varint(&fld, "attribute type")?),
                _ => {}
            }
        }
        // Older writers omit `type`; infer it from whichever field is set.
        let kind = kind.unwrap_or(if f.is_some() {
            ATTR_FLOAT
        } else if i.is_some() {
            ATTR_INT
        } else if s.is_some() {
            ATTR_STRING
        } else if !floats.is_empty() {
            ATTR_FLOATS
        } else if !ints.is_empty() {
            ATTR_INTS
        } else {
            0
        });
        let value = match kind {
            ATTR_FLOAT => AttrValue::Float(f.unwrap_or(0.0)),
            ATTR_INT => AttrValue::Int(i.unwrap_or(0)),
            ATTR_STRING => AttrValue::String(s.unwrap_or_default()),
            ATTR_FLOATS => AttrValue::Floats(floats),
            ATTR_INTS => AttrValue::Ints(ints),
            _ => AttrValue::Unsupported,
        };
        Ok(Self { name, value })
    }

    fn encode(&self) -> FieldWriter {
        let mut w = FieldWriter::new();
        w.string(1, &self.name);
        match &self.value {
            AttrValue::Float(f) => {
                w.float(2, *f).varint(20, ATTR_FLOAT);
            }
            AttrValue::Int(i) => {
                w.int64(3, *i).varint(20, ATTR_INT);
            }
            AttrValue::String(s) => {
                w.bytes(4, s).varint(20, ATTR_STRING);
            }
            AttrValue::Floats(v) => {
                for f in v {
                    w.float(7, *f);
                }
                w.varint(20, ATTR_FLOATS);
            }
            AttrValue::Ints(v) => {
                for i in v {
                    w.int64(8, *i);
                }
                w.varint(20, ATTR_INTS);
            }
            AttrValue::Unsupported => {}
        }
        w
    }
}

impl TensorProto {
    pub fn from_f32(name: &str, dims: &[i64], values: &[f32]) -> Self {
        let mut raw = Vec::with_capacity(values.len() * 4);
        for v in values {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            name: name.into(),
            dims: dims.to_vec(),
            data_type: DATA_TYPE_FLOAT,
            raw_data: raw,
            ..Default::default()
        }
    }

    pub fn from_i64(name: &str, dims: &[i64], values: &[i64]) -> Self {
        Self {
            name: name.into(),
            dims: dims.to_vec(),
            data_type: DATA_TYPE_INT64,
            int64_data: values.to_vec(),
            ..Default::default()
        }
    }

    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut t = TensorProto::default();
        for field in FieldReader::new(bytes, base) {
            let f = field?;
            match f.field_number {
                1 => push_int64s(&f, &mut t.dims, "dims")?,
                2 => t.data_type = expect_varint(&f, "data_type")? as i32,
                4 => push_floats(&f, &mut t.float_data, "float_data")?,
                7 => push_int64s(&f, &mut t.int64_data, "int64_data")?,
                8 => t.name = expect_string(&f, "tensor name")?,
                9 => t.raw_data = expect_bytes(&f, "raw_data")?.to_vec(),
                10 => push_doubles(&f, &mut t.double_data)?,
                13 => t.external = true,
                14 => t.external |= expect_varint(&f, "data_location")? == 1,
                _ => {}
            }
        }
        Ok(t)
    }

    fn encode(&self) -> FieldWriter {
        let mut w = FieldWriter::new();
        w.packed_int64(1, &self.dims);
        w.varint(2, self.data_type as u64);
        if !self.float_data.is_empty() {
            let mut body = Vec::with_capacity(self.float_data.len() * 4);
            for f in &self.float_data {
                body.extend_from_slice(&f.to_le_bytes());
            }
            w.bytes(4, &body);
        }
        if !self.int64_data.is_empty() {
            w.packed_int64(7, &self.int64_data);
        }
        w.string(8, &self.name);
        if !self.raw_data.is_empty() {
            w.bytes(9, &self.raw_data);
        }
        w
    }

    pub fn element_count(&self) -> Option<usize> {
        self.dims.iter().try_fold(1usize, |acc, &d| {
            usize::try_from(d).ok().and_then(|d| acc.checked_mul(d))
        })
    }

    /// Values widened to `f64`, from whichever storage field is populated.
    pub fn values_f64(&self) -> Result<Vec<f64>, OnnxError> {
        let bad = |reason: String| OnnxError::Structure(format!("tensor '{}': {reason}", self.name));
        if self.external {
            return Err(bad("external data is not supported".into()));
        }
        let n = self
            .element_count()
            .ok_or_else(|| bad("invalid dims".into()))?;
        let values: Vec<f64> = match self.data_type {
            DATA_TYPE_FLOAT if !self.raw_data.is_empty() => {
                if self.raw_data.len() != n * 4 {
                    return Err(bad(format!("raw_data holds {} bytes, expected {}", self.raw_data.len(), n * 4)));
                }
                self.raw_data
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect()
            }
            DATA_TYPE_FLOAT => self.float_data.iter().map(|&v| v as f64).collect(),
            DATA_TYPE_DOUBLE if !self.raw_data.is_empty() => {
                if self.raw_data.len() != n * 8 {
                    return Err(bad("raw_data length mismatch".into()));
                }
                self.raw_data
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
            DATA_TYPE_DOUBLE => self.double_data.clone(),
            other => return Err(bad(format!("unsupported data type {other}"))),
        };
        if values.len() != n {
            return Err(bad(format!("holds {} values, dims require {n}", values.len())));
        }
        Ok(values)
    }

    pub fn values_i64(&self) -> Result<Vec<i64>, OnnxError> {
        let bad = |reason: &str| OnnxError::Structure(format!("tensor '{}': {reason}", self.name));
        if self.data_type != DATA_TYPE_INT64 {
            return Err(bad("expected int64 data"));
        }
        if !self.raw_data.is_empty() {
            if !self.raw_data.len().is_multiple_of(8) {
                return Err(bad("raw_data length mismatch"));
            }
            return Ok(self
                .raw_data
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect());
        }
        Ok(self.int64_data.clone())
    }
}

impl ValueInfo {
    pub fn tensor(name: &str, dims: &[i64]) -> Self {
        Self {
            name: name.into(),
            elem_type: DATA_TYPE_FLOAT,
            dims: dims.iter().map(|&d| Dim::Value(d)).collect(),
        }
    }

    fn decode(bytes: &[u8], base: usize) -> Result<Self, OnnxError> {
        let mut v = ValueInfo::default();
        for field in FieldReader::new(bytes, base) {
            let f = field?;
            match f.field_number {
                1 => v.name = expect_string(&f, "value name")?,
                2 => {
                    // TypeProto.tensor_type -> { elem_type, shape { dim* } }
                    for tf in FieldReader::new(expect_bytes(&f, "type")?, f.offset) {
                        let tf = tf?;
                        if tf.field_number != 1 {
                            continue;
                        }
                        for inner in FieldReader::new(expect_bytes(&tf, "tensor_type")?, tf.offset) {
                            let inner = inner?;
                            match inner.field_number {
                                1 => v.elem_type = expect_varint(&inner, "elem_type")? as i32,
                                2 => {
                                    for d in FieldReader::new(expect_bytes(&inner, "shape")?, inner.offset) {
                                        let d = d?;
                                        if d.field_number == 1 {
                                            v.dims.push(decode_dim(expect_bytes(&d, "dim")?, d.offset)?);
                                        }
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(v)
    }

    fn encode(&self) -> FieldWriter {
        let mut shape = FieldWriter::new();
        for d in &self.dims {
            let mut dim = FieldWriter::new();
            match d {
                Dim::Value(v) => {
                    dim.int64(1, *v);
                }
                Dim::Param(p) => {
                    dim.string(2, p);
                }
                Dim::Unknown => {}
            }
            shape.message(1, dim);
        }
        let mut tensor = FieldWriter::new();
        tensor.varint(1, self.elem_type as u64).message(2, shape);
        let mut ty = FieldWriter::new();
        ty.message(1, tensor);
        let mut w = FieldWriter::new();
        w.string(1, &self.name).message(2, ty);
        w
    }
}

fn decode_dim(bytes: &[u8], base: usize) -> Result<Dim, OnnxError> {
    let mut dim = Dim::Unknown;
    for field in FieldReader::new(bytes, base) {
        let f = field?;
        match f.field_number {
            1 => dim = Dim::Value(expect_varint(&f, "dim_value")? as i64),
            2 => dim = Dim::Param(expect_string(&f, "dim_param")?),
            _ => {}
        }
    }
    Ok(dim)
}
