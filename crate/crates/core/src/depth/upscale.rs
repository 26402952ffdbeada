use crate::error::{Error, Result};
use crate::frame::DepthFrame;

/// Source taps for one output coordinate along one axis.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn taps(input_len: usize, factor: usize) -> Vec<Tap> {
    let f = factor as f64;
    let max = (input_len - 1) as f64;
    (0..input_len * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / f - 0.5).clamp(0.0, max);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input_len - 1);
            Tap { lo, hi, t: src - lo as f64 }
        })
        .collect()
}

/// Bilinear upscaling with half-pixel (align-corners-false) sampling.
///
/// An output sample is invalid (0) if any source sample that contributes to
/// it with nonzero weight is invalid.
pub fn upscale_bilinear(frame: &DepthFrame, factor: usize) -> Result<DepthFrame> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upscale factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let (w, h) = frame.dims();
    let (ow, oh) = (w * factor, h * factor);
    let xs = taps(w, factor);
    let ys = taps(h, factor);
    let mut out = vec![0.0; ow * oh];

    for (oy, ty) in ys.iter().enumerate() {
        let r0 = frame.row(ty.lo);
        let r1 = frame.row(ty.hi);
        let out_row = &mut out[oy * ow..(oy + 1) * ow];
        let use_lower = ty.t > 0.0;
        for (o, tx) in out_row.iter_mut().zip(&xs) {
            let a = r0[tx.lo];
            let b = r0[tx.hi];
            let c = r1[tx.lo];
            let d = r1[tx.hi];
            let use_right = tx.t > 0.0;
            let invalid = a == 0.0
                || (use_right && b == 0.0)
                || (use_lower && (c == 0.0 || (use_right && d == 0.0)));
            if invalid {
                continue;
            }
            let top = a + tx.t * (b - a);
            let bottom = c + tx.t * (d - c);
            *o = top + ty.t * (bottom - top);
        }
    }
    Ok(DepthFrame::from_trusted(ow, oh, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_preserved() {
        let f = DepthFrame::filled(5, 3, 1000.0).unwrap();
        let up = upscale_bilinear(&f, 4).unwrap();
        assert_eq!(up.dims(), (20, 12));
        assert!(up.samples().iter().all(|s| *s == 1000.0));
    }

    #[test]
    fn factor_one_is_identity() {
        let f = DepthFrame::new(3, 2, vec![1.0, 0.0, 3.0, 4.0, 5.0, 0.0]).unwrap();
        assert_eq!(upscale_bilinear(&f, 1).unwrap(), f);
        assert!(upscale_bilinear(&f, 0).is_err());
    }

    #[test]
    fn two_by_two_factor_two() {
        let f = DepthFrame::new(2, 2, vec![1000.0, 2000.0, 3000.0, 4000.0]).unwrap();
        let up = upscale_bilinear(&f, 2).unwrap();
        // src coords: -0.25→0 (clamped), 0.25, 0.75, 1.25→1 (clamped)
        #[rustfmt::skip]
        let expected = [
            1000.0, 1250.0, 1750.0, 2000.0,
            1500.0, 1750.0, 2250.0, 2500.0,
            2500.0, 2750.0, 3250.0, 3500.0,
            3000.0, 3250.0, 3750.0, 4000.0,
        ];
        assert_eq!(up.samples(), &expected);
    }

    #[test]
    fn invalid_is_contagious() {
        let f = DepthFrame::new(2, 2, vec![1000.0, 0.0, 3000.0, 4000.0]).unwrap();
        let up = upscale_bilinear(&f, 2).unwrap();
        assert_eq!(up.get(0, 0), 1000.0);
        assert_eq!(up.get(0, 2), 2500.0);
        assert_eq!(up.get(1, 3), 3250.0);
        assert_eq!(up.get(3, 3), 4000.0);
        // anything weighting the top-right sample
        assert_eq!(up.get(1, 0), 0.0);
        assert_eq!(up.get(3, 0), 0.0);
        assert_eq!(up.get(2, 2), 0.0);
    }

    proptest! {
        #[test]
        fn range_and_dims(w in 1usize..6, h in 1usize..6, factor in 1usize..5,
                          seed in prop::collection::vec(0.0f64..5000.0, 36)) {
            let samples: Vec<f64> = seed[..w * h].iter()
                .map(|s| if *s < 500.0 { 0.0 } else { *s })
                .collect();
            let f = DepthFrame::new(w, h, samples.clone()).unwrap();
            let up = upscale_bilinear(&f, factor).unwrap();
            prop_assert_eq!(up.dims(), (w * factor, h * factor));
            let valid: Vec<f64> = samples.into_iter().filter(|s| *s != 0.0).collect();
            if let (Some(lo), Some(hi)) = (
                valid.iter().cloned().reduce(f64::min),
                valid.iter().cloned().reduce(f64::max),
            ) {
                for s in up.samples().iter().filter(|s| **s != 0.0) {
                    prop_assert!(*s >= lo - 1e-9 && *s <= hi + 1e-9);
                }
            }
        }
    }
}
