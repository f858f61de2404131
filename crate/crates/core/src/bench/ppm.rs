//! Binary PPM (`P6`, maxval 255) images as channel-last RGB tensors.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpmError {
    #[error("not a binary PPM (expected magic P6)")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    MaxVal(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} bytes after the pixel data")]
    TrailingData(usize),
    #[error("cannot encode tensor: {0}")]
    Encode(String),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PpmError::Header(format!("missing or invalid {what}")))
    }
}

pub fn load_ppm(bytes: &[u8]) -> Result<Tensor, PpmError> {
    if !bytes.starts_with(b"P6") {
        return Err(PpmError::BadMagic);
    }
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")? as usize;
    let height = c.number("height")? as usize;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::Header(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(PpmError::MaxVal(maxval));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(PpmError::Header("no separator after maxval".into())),
    }
    let data = &bytes[c.pos..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| PpmError::Header(format!("image {width}x{height} is too large")))?;
    if data.len() < expected {
        return Err(PpmError::Truncated {
            expected,
            actual: data.len(),
        });
    }
    if data.len() > expected {
        return Err(PpmError::TrailingData(data.len() - expected));
    }
    let values = data.iter().map(|&b| f64::from(b)).collect();
    Ok(Tensor::new(vec![height, width, 3], values).expect("length checked"))
}

/// Encodes an `H x W x 3` tensor of integers in `[0, 255]`.
pub fn write_ppm(image: &Tensor) -> Result<Vec<u8>, PpmError> {
    let (h, w, c) = image
        .hwc()
        .ok_or_else(|| PpmError::Encode(format!("shape {:?} is not H x W x C", image.shape())))?;
    if c != 3 {
        return Err(PpmError::Encode(format!("{c} channels, expected 3")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for &v in image.data() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(PpmError::Encode(format!("pixel value {v} is not a byte")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_red_pixel() {
        let t = load_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(t.shape(), &[1, 1, 3]);
        assert_eq!(t.data(), &[255.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments() {
        let t = load_ppm(b"P6 # made by hand\n2 # width\n1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(t.shape(), &[1, 2, 3]);
        assert_eq!(t.data()[5], 6.0);
    }

    #[test]
    fn short_data_is_truncation() {
        assert_eq!(
            load_ppm(b"P6\n2 2\n255\n\x00\x00\x00"),
            Err(PpmError::Truncated {
                expected: 12,
                actual: 3
            })
        );
    }

    #[test]
    fn rejects_other_formats() {
        assert_eq!(load_ppm(b"P3\n1 1\n255\n0 0 0"), Err(PpmError::BadMagic));
        assert_eq!(load_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(PpmError::MaxVal(65535)));
        assert!(matches!(load_ppm(b"P6\n1\n"), Err(PpmError::Header(_))));
    }

    proptest! {
        #[test]
        fn write_read_round_trip(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..h * w * 3)
                .map(|i| ((seed >> (i % 57)) as u8 ^ i as u8) as f64)
                .collect();
            let t = Tensor::new(vec![h, w, 3], data).unwrap();
            prop_assert_eq!(load_ppm(&write_ppm(&t).unwrap()).unwrap(), t);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let mut input = b"P6".to_vec();
            input.extend(bytes);
            let _ = load_ppm(&input);
        }
    }
}
