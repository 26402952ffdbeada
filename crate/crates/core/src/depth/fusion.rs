use crate::error::{Error, Result};
use crate::frame::{ConfidenceFrame, DepthFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    lidar_weight: f64,
    /// Weight each pixel by `c_l / (c_l + c_t)` instead of `lidar_weight`.
    pub use_confidence: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lidar_weight: 0.5,
            use_confidence: false,
        }
    }
}

impl FusionConfig {
    pub fn new(lidar_weight: f64, use_confidence: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&lidar_weight) {
            return Err(Error::Config(format!(
                "lidar_weight must lie in [0, 1], got {lidar_weight}"
            )));
        }
        Ok(Self {
            lidar_weight,
            use_confidence,
        })
    }

    pub fn lidar_weight(&self) -> f64 {
        self.lidar_weight
    }
}

/// Per-pixel weighted average of two aligned depth frames.
///
/// Where only one sensor reports depth, that reading is used as is; where
/// neither does, the output is invalid (0). With `use_confidence`, pixels
/// whose confidences sum to zero fall back to the fixed lidar weight.
pub fn fuse_depth(
    lidar: &DepthFrame,
    truedepth: &DepthFrame,
    conf_l: Option<&ConfidenceFrame>,
    conf_t: Option<&ConfidenceFrame>,
    cfg: &FusionConfig,
) -> Result<DepthFrame> {
    let dims = lidar.dims();
    if truedepth.dims() != dims {
        return Err(Error::Shape(format!(
            "lidar frame is {:?} but truedepth frame is {:?}",
            dims,
            truedepth.dims()
        )));
    }
    for (name, c) in [("lidar", conf_l), ("truedepth", conf_t)] {
        if let Some(c) = c {
            if c.dims() != dims {
                return Err(Error::Shape(format!(
                    "{name} confidence is {:?} but depth is {:?}",
                    c.dims(),
                    dims
                )));
            }
        }
    }

    let l = lidar.samples();
    let t = truedepth.samples();
    let w = cfg.lidar_weight;
    let mut out = Vec::with_capacity(l.len());

    if cfg.use_confidence {
        let (Some(cl), Some(ct)) = (conf_l, conf_t) else {
            return Err(Error::Config(
                "confidence weighting needs both confidence frames".into(),
            ));
        };
        for (((&l, &t), &cl), &ct) in l.iter().zip(t).zip(cl.levels()).zip(ct.levels()) {
            let sum = cl as u32 + ct as u32;
            let w = if sum > 0 { cl as f64 / sum as f64 } else { w };
            out.push(blend(l, t, w));
        }
    } else {
        out.extend(l.iter().zip(t).map(|(&l, &t)| blend(l, t, w)));
    }
    Ok(DepthFrame::from_trusted(dims.0, dims.1, out))
}

#[inline(always)]
fn blend(l: f64, t: f64, w: f64) -> f64 {
    match (l != 0.0, t != 0.0) {
        (true, true) => w * l + (1.0 - w) * t,
        (true, false) => l,
        (false, true) => t,
        (false, false) => 0.0,
    }
}
