//! Bit-packed XNOR/popcount kernels for layers whose inputs are binarized.
//!
//! A set bit encodes `+1`, a clear bit `-1`. Padding bits are zero in both
//! operands, so they never count as disagreements.

#[derive(Debug, Clone)]
pub(crate) struct PackedRows {
    rows: usize,
    positions: usize,
    words: usize,
    bits: Vec<u64>,
}

#[inline]
fn words_for(channels: usize) -> usize {
    channels.div_ceil(64)
}

impl PackedRows {
    /// Packs weights laid out `[row][position][channel]`.
    pub(crate) fn conv(weights: &[i8], rows: usize, positions: usize, channels: usize) -> Self {
        let words = words_for(channels);
        let mut bits = vec![0u64; rows * positions * words];
        for (seg, chunk) in weights.chunks_exact(channels).enumerate() {
            let base = seg * words;
            for (ch, &w) in chunk.iter().enumerate() {
                if w > 0 {
                    bits[base + ch / 64] |= 1 << (ch % 64);
                }
            }
        }
        Self {
            rows,
            positions,
            words,
            bits,
        }
    }

    #[inline]
    fn segment(&self, row: usize, pos: usize) -> &[u64] {
        let start = (row * self.positions + pos) * self.words;
        &self.bits[start..start + self.words]
    }
}

/// Packs the sign of each value (`>= 0` is `+1`), `channels` values per group.
pub(crate) fn pack_signs(values: &[f64], channels: usize) -> Vec<u64> {
    let words = words_for(channels);
    let groups = values.len() / channels;
    let mut bits = vec![0u64; groups * words];
    for (g, chunk) in values.chunks_exact(channels).enumerate() {
        for (ch, &v) in chunk.iter().enumerate() {
            if v >= 0.0 {
                bits[g * words + ch / 64] |= 1 << (ch % 64);
            }
        }
    }
    bits
}

#[inline]
fn disagreements(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Convolution of a sign-binarized `h x w x channels` input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn binary_conv(
    input: &[f64],
    h: usize,
    w: usize,
    channels: usize,
    kh: usize,
    kw: usize,
    weights: &PackedRows,
) -> Vec<f64> {
    let words = words_for(channels);
    let packed = pack_signs(input, channels);
    let (oh, ow, oc) = (h - kh + 1, w - kw + 1, weights.rows);
    let fan_in = (kh * kw * channels) as i64;
    let mut out = vec![0.0; oh * ow * oc];
    for r in 0..oh {
        for c in 0..ow {
            for o in 0..oc {
                let mut miss = 0u32;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let pix = (r + ky) * w + (c + kx);
                        miss += disagreements(
                            &packed[pix * words..(pix + 1) * words],
                            weights.segment(o, ky * kw + kx),
                        );
                    }
                }
                out[(r * ow + c) * oc + o] = (fan_in - 2 * miss as i64) as f64;
            }
        }
    }
    out
}

/// Dense product with a sign-binarized input vector.
pub(crate) fn binary_dense(input: &[f64], weights: &PackedRows) -> Vec<f64> {
    let n = input.len() as i64;
    let packed = pack_signs(input, input.len());
    (0..weights.rows)
        .map(|o| (n - 2 * disagreements(&packed, weights.segment(o, 0)) as i64) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_signed_sum() {
        let weights: Vec<i8> = (0..130).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        let rows = PackedRows::conv(&weights, 2, 1, 65);
        let input: Vec<f64> = (0..65).map(|i| if i % 5 == 0 { -2.0 } else { 0.5 }).collect();
        let got = binary_dense(&input, &rows);
        for (o, &g) in got.iter().enumerate() {
            let want: i64 = (0..65)
                .map(|i| {
                    let a = if input[i] >= 0.0 { 1 } else { -1 };
                    a * weights[o * 65 + i] as i64
                })
                .sum();
            assert_eq!(g, want as f64);
        }
    }
}
