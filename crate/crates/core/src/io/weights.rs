//! `SRW1` network weight container.
//!
//! Layout (little-endian): magic `SRW1`, `u32` layer count, then per layer
//! `u32` out, in, kh, kw, `out·in·kh·kw` `f32` weights, `out` `f32` biases.

use super::binary::Cursor;
use crate::depth::{ConvLayer, SrcnnWeights};
use crate::error::{Error, Location, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SRW1";

/// Exact file size implied by a list of layer shapes `(out, in, kh, kw)`.
pub fn weights_file_len(shapes: &[(usize, usize, usize, usize)]) -> usize {
    8 + shapes
        .iter()
        .map(|&(o, i, kh, kw)| 16 + 4 * (o * i * kh * kw) + 4 * o)
        .sum::<usize>()
}

pub fn parse_srcnn_weights(bytes: &[u8]) -> Result<SrcnnWeights> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::format_at(Location::Byte(0), "bad magic, expected \"SRW1\""));
    }
    let count = c.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::format_at(Location::Byte(4), "network has no layers"));
    }
    let mut layers = Vec::new();
    let mut prev_out = 1;
    for li in 0..count {
        let at = c.pos();
        let shape_err = |m: String| Error::format_at(Location::Byte(at), format!("layer {li}: {m}"));
        let out_c = c.u32("layer header")? as usize;
        let in_c = c.u32("layer header")? as usize;
        let kh = c.u32("layer header")? as usize;
        let kw = c.u32("layer header")? as usize;
        if out_c == 0 || in_c == 0 || kh == 0 || kw == 0 {
            return Err(shape_err(format!("zero dimension in {out_c}x{in_c}x{kh}x{kw}")));
        }
        if in_c != prev_out {
            return Err(shape_err(format!(
                "takes {in_c} channels but the previous stage produces {prev_out}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err(format!("kernel {kh}x{kw} must be odd")));
        }
        let n = out_c
            .checked_mul(in_c)
            .and_then(|v| v.checked_mul(kh))
            .and_then(|v| v.checked_mul(kw))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= c.remaining()))
            .ok_or_else(|| {
                Error::format_at(
                    Location::Byte(bytes.len()),
                    format!("layer {li}: truncated weights for {out_c}x{in_c}x{kh}x{kw}"),
                )
            })?;
        let weights = (0..n).map(|_| c.f32("weights")).collect::<Result<Vec<_>>>()?;
        let biases = (0..out_c).map(|_| c.f32("biases")).collect::<Result<Vec<_>>>()?;
        layers.push(ConvLayer {
            out_channels: out_c,
            in_channels: in_c,
            kernel_h: kh,
            kernel_w: kw,
            weights,
            biases,
        });
        prev_out = out_c;
    }
    c.expect_end()?;
    SrcnnWeights::new(layers).map_err(|e| Error::format_at(Location::Byte(0), e.to_string()))
}

pub fn write_srcnn_weights(w: &SrcnnWeights) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    out.extend_from_slice(&(w.layers().len() as u32).to_le_bytes());
    for l in w.layers() {
        for d in [l.out_channels, l.in_channels, l.kernel_h, l.kernel_w] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(o: usize, i: usize, k: usize) -> ConvLayer {
        ConvLayer {
            out_channels: o,
            in_channels: i,
            kernel_h: k,
            kernel_w: k,
            weights: (0..o * i * k * k).map(|v| v as f32 * 0.5).collect(),
            biases: (0..o).map(|v| -(v as f32)).collect(),
        }
    }

    #[test]
    fn identity_file() {
        let mut b = b"SRW1".to_vec();
        for v in [1u32, 1, 1, 1, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&0.0f32.to_le_bytes());
        assert_eq!(parse_srcnn_weights(&b).unwrap(), SrcnnWeights::identity(1));
    }

    #[test]
    fn canonical_layout_length() {
        let net = SrcnnWeights::new(vec![layer(64, 1, 9), layer(32, 64, 1), layer(1, 32, 5)]).unwrap();
        let b = write_srcnn_weights(&net);
        let expected = 8
            + (16 + 4 * 64 * 81 + 4 * 64)
            + (16 + 4 * 32 * 64 + 4 * 32)
            + (16 + 4 * 32 * 25 + 4);
        assert_eq!(expected, 32_572);
        assert_eq!(b.len(), expected);
        assert_eq!(weights_file_len(&[(64, 1, 9, 9), (32, 64, 1, 1), (1, 32, 5, 5)]), expected);
        assert_eq!(parse_srcnn_weights(&b).unwrap(), net);
    }

    #[test]
    fn malformed() {
        let two_in = SrcnnWeights::identity(1);
        let mut b = write_srcnn_weights(&two_in);
        b[12..16].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(parse_srcnn_weights(&b), Err(Error::Format { location: Location::Byte(8), .. })));

        let good = write_srcnn_weights(&SrcnnWeights::new(vec![layer(2, 1, 3), layer(1, 2, 1)]).unwrap());
        assert!(parse_srcnn_weights(&good).is_ok());
        for cut in [0, 3, 7, 11, 30, good.len() - 1] {
            assert!(parse_srcnn_weights(&good[..cut]).is_err(), "cut at {cut}");
        }
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(parse_srcnn_weights(&trailing).is_err());

        let mut even = good.clone();
        even[16..20].copy_from_slice(&2u32.to_le_bytes());
        assert!(parse_srcnn_weights(&even).is_err());

        let mut chain = good.clone();
        let second = 8 + 16 + 4 * 18 + 8;
        chain[second + 4..second + 8].copy_from_slice(&3u32.to_le_bytes());
        assert!(parse_srcnn_weights(&chain).is_err());

        let last_two = write_srcnn_weights(&SrcnnWeights::new(vec![layer(1, 1, 1)]).unwrap());
        let mut bad_out = last_two;
        bad_out[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(parse_srcnn_weights(&bad_out).is_err());

        let mut huge = good;
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(parse_srcnn_weights(&huge).is_err());
    }
}
