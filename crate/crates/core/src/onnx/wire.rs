//! Protocol-buffer wire format: varints, tags and length-delimited fields.

use super::OnnxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireType {
    Varint,
    Fixed64,
    LengthDelimited,
    Fixed32,
}

impl WireType {
    fn from_bits(bits: u64, offset: usize) -> Result<Self, OnnxError> {
        match bits {
            0 => Ok(WireType::Varint),
            1 => Ok(WireType::Fixed64),
            2 => Ok(WireType::LengthDelimited),
            5 => Ok(WireType::Fixed32),
            other => Err(OnnxError::Malformed {
                offset,
                reason: format!("unsupported wire type {other}"),
            }),
        }
    }

    fn bits(self) -> u64 {
        match self {
            WireType::Varint => 0,
            WireType::Fixed64 => 1,
            WireType::LengthDelimited => 2,
            WireType::Fixed32 => 5,
        }
    }
}

/// Payload of one decoded field. Byte payloads borrow from the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload<'a> {
    Varint(u64),
    Fixed64(u64),
    Bytes(&'a [u8]),
    Fixed32(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireField<'a> {
    pub field_number: u32,
    pub payload: Payload<'a>,
    /// Absolute offset of the payload in the outermost buffer.
    pub offset: usize,
}

impl WireField<'_> {
    pub fn wire_type(&self) -> WireType {
        match self.payload {
            Payload::Varint(_) => WireType::Varint,
            Payload::Fixed64(_) => WireType::Fixed64,
            Payload::Bytes(_) => WireType::LengthDelimited,
            Payload::Fixed32(_) => WireType::Fixed32,
        }
    }
}

/// Decodes a base-128 little-endian varint starting at `offset`.
///
/// Returns the value and the offset just past it. At most ten bytes are read.
pub fn decode_varint(bytes: &[u8], offset: usize) -> Result<(u64, usize), OnnxError> {
    let mut value = 0u64;
    for i in 0..10 {
        let at = offset + i;
        let Some(&b) = bytes.get(at) else {
            return Err(OnnxError::Truncated {
                offset: at,
                what: "varint",
            });
        };
        if i == 9 && b > 1 {
            return Err(OnnxError::Malformed {
                offset: at,
                reason: "varint overflows 64 bits".into(),
            });
        }
        value |= u64::from(b & 0x7f) << (7 * i);
        if b & 0x80 == 0 {
            return Ok((value, at + 1));
        }
    }
    Err(OnnxError::Malformed {
        offset,
        reason: "varint longer than 10 bytes".into(),
    })
}

pub fn encode_varint(mut value: u64, out: &mut Vec<u8>) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Iterates over the fields of one message.
pub struct FieldReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> FieldReader<'a> {
    /// `base` is the absolute offset of `bytes` in the outermost buffer.
    pub fn new(bytes: &'a [u8], base: usize) -> Self {
        Self { bytes, pos: 0, base }
    }

    fn read_field(&mut self) -> Result<WireField<'a>, OnnxError> {
        let tag_at = self.base + self.pos;
        let (tag, next) = decode_varint(self.bytes, self.pos).map_err(|e| e.shifted(self.base))?;
        let field_number = tag >> 3;
        if field_number == 0 || field_number > u64::from(u32::MAX >> 3) {
            return Err(OnnxError::Malformed {
                offset: tag_at,
                reason: format!("invalid field number {field_number}"),
            });
        }
        let wire_type = WireType::from_bits(tag & 7, tag_at)?;
        self.pos = next;
        let offset = self.base + self.pos;
        let payload = match wire_type {
            WireType::Varint => {
                let (v, next) =
                    decode_varint(self.bytes, self.pos).map_err(|e| e.shifted(self.base))?;
                self.pos = next;
                Payload::Varint(v)
            }
            WireType::Fixed64 => Payload::Fixed64(u64::from_le_bytes(self.take(8, "fixed64")?.try_into().unwrap())),
            WireType::Fixed32 => Payload::Fixed32(u32::from_le_bytes(self.take(4, "fixed32")?.try_into().unwrap())),
            WireType::LengthDelimited => {
                let (len, next) =
                    decode_varint(self.bytes, self.pos).map_err(|e| e.shifted(self.base))?;
                self.pos = next;
                let len = usize::try_from(len).map_err(|_| OnnxError::Truncated {
                    offset: self.base + self.pos,
                    what: "length-delimited field",
                })?;
                let body_at = self.base + self.pos;
                let body = self.take(len, "length-delimited field")?;
                return Ok(WireField {
                    field_number: field_number as u32,
                    payload: Payload::Bytes(body),
                    offset: body_at,
                });
            }
        };
        Ok(WireField {
            field_number: field_number as u32,
            payload,
            offset,
        })
    }

    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], OnnxError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(OnnxError::Truncated {
                offset: self.base + self.bytes.len(),
                what,
            }),
        }
    }
}

impl<'a> Iterator for FieldReader<'a> {
    type Item = Result<WireField<'a>, OnnxError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let r = self.read_field();
        if r.is_err() {
            self.pos = self.bytes.len();
        }
        Some(r)
    }
}

/// Appends fields to a message buffer.
#[derive(Default)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    fn tag(&mut self, field: u32, wt: WireType) {
        encode_varint((u64::from(field) << 3) | wt.bits(), &mut self.buf);
    }

    pub fn varint(&mut self, field: u32, value: u64) -> &mut Self {
        self.tag(field, WireType::Varint);
        encode_varint(value, &mut self.buf);
        self
    }

    pub fn int64(&mut self, field: u32, value: i64) -> &mut Self {
        self.varint(field, value as u64)
    }

    pub fn fixed32(&mut self, field: u32, value: u32) -> &mut Self {
        self.tag(field, WireType::Fixed32);
        self.buf.extend_from_slice(&value.to_le_bytes());
        self
    }

    pub fn float(&mut self, field: u32, value: f32) -> &mut Self {
        self.fixed32(field, value.to_bits())
    }

    pub fn bytes(&mut self, field: u32, value: &[u8]) -> &mut Self {
        self.tag(field, WireType::LengthDelimited);
        encode_varint(value.len() as u64, &mut self.buf);
        self.buf.extend_from_slice(value);
        self
    }

    pub fn string(&mut self, field: u32, value: &str) -> &mut Self {
        self.bytes(field, value.as_bytes())
    }

    pub fn message(&mut self, field: u32, msg: FieldWriter) -> &mut Self {
        self.bytes(field, &msg.buf)
    }

    pub fn packed_int64(&mut self, field: u32, values: &[i64]) -> &mut Self {
        let mut body = Vec::new();
        for &v in values {
            encode_varint(v as u64, &mut body);
        }
        self.bytes(field, &body)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn varint_examples() {
        assert_eq!(decode_varint(&[0x01], 0).unwrap(), (1, 1));
        assert_eq!(decode_varint(&[0x96, 0x01], 0).unwrap(), (150, 2));
        assert_eq!(decode_varint(&[0xff, 0x96, 0x01], 1).unwrap(), (150, 3));
    }

    #[test]
    fn varint_errors() {
        assert!(matches!(
            decode_varint(&[0x96], 0),
            Err(OnnxError::Truncated { offset: 1, .. })
        ));
        let overlong = [0xffu8; 11];
        assert!(matches!(decode_varint(&overlong, 0), Err(OnnxError::Malformed { .. })));
        let max = [0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0x01];
        assert_eq!(decode_varint(&max, 0).unwrap(), (u64::MAX, 10));
    }

    #[test]
    fn reader_reports_absolute_offsets() {
        let mut w = FieldWriter::new();
        w.varint(1, 7).string(2, "ab");
        let bytes = w.finish();
        let fields: Vec<_> = FieldReader::new(&bytes, 100).collect::<Result<_, _>>().unwrap();
        assert_eq!(fields[0].payload, Payload::Varint(7));
        assert_eq!(fields[1].payload, Payload::Bytes(b"ab"));
        assert_eq!(fields[1].offset, 100 + 4);
        assert_eq!(fields[1].wire_type(), WireType::LengthDelimited);
    }

    #[test]
    fn reader_rejects_overrun_length() {
        let bytes = [0x12, 0x05, b'a'];
        let err = FieldReader::new(&bytes, 0).next().unwrap().unwrap_err();
        assert!(matches!(err, OnnxError::Truncated { offset: 3, .. }));
    }

    proptest! {
        #[test]
        fn varint_round_trip(v in 0u64..=(1u64 << 32)) {
            let mut buf = Vec::new();
            encode_varint(v, &mut buf);
            let (decoded, end) = decode_varint(&buf, 0).unwrap();
            prop_assert_eq!(decoded, v);
            prop_assert_eq!(end, buf.len());
            let mut again = Vec::new();
            encode_varint(decoded, &mut again);
            prop_assert_eq!(again, buf);
        }

        #[test]
        fn reader_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            for field in FieldReader::new(&bytes, 0) {
                if field.is_err() { break; }
            }
        }
    }
}
