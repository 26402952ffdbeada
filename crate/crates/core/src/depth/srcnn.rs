//! Convolutional super-resolution inference (SRCNN-style: bilinear
//! pre-upsampling followed by a stack of same-size convolutions).

use std::ops::Range;

use super::upscale::upscale_bilinear;
use super::DEPTH_FULL_SCALE;
use crate::error::{Error, Result};
use crate::frame::DepthFrame;

/// Output rows computed per strip in [`srcnn_upscale`].
const STRIP_ROWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// `C × H × W` stack of float planes, row-major within each plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PlaneStack {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape("plane stack dimensions must be positive".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} stack needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// `out × in × kh × kw`, row-major.
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl ConvLayer {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Weights(m));
        if self.out_channels == 0 || self.in_channels == 0 {
            return err("channel counts must be positive".into());
        }
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 {
            return err(format!(
                "kernel {}x{} must have odd dimensions",
                self.kernel_h, self.kernel_w
            ));
        }
        let n = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != n {
            return err(format!("expected {n} weights, got {}", self.weights.len()));
        }
        if self.biases.len() != self.out_channels {
            return err(format!(
                "expected {} biases, got {}",
                self.out_channels,
                self.biases.len()
            ));
        }
        if !self.weights.iter().chain(&self.biases).all(|v| v.is_finite()) {
            return err("weights contain non-finite values".into());
        }
        Ok(())
    }

    #[inline]
    fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + c) * self.kernel_h + ky) * self.kernel_w + kx] as f64
    }
}

/// Validated layer stack mapping one depth channel to one depth channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcnnWeights {
    layers: Vec<ConvLayer>,
}

impl SrcnnWeights {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        let (Some(first), Some(last)) = (layers.first(), layers.last()) else {
            return Err(Error::Weights("network has no layers".into()));
        };
        if first.in_channels != 1 {
            return Err(Error::Weights(format!(
                "first layer takes {} channels, expected 1",
                first.in_channels
            )));
        }
        if last.out_channels != 1 {
            return Err(Error::Weights(format!(
                "last layer produces {} channels, expected 1",
                last.out_channels
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|e| Error::Weights(format!("layer {i}: {}", e.root())))?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_channels != pair[0].out_channels {
                return Err(Error::Weights(format!(
                    "layer {} takes {} channels but layer {i} produces {}",
                    i + 1,
                    pair[1].in_channels,
                    pair[0].out_channels
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `depth` single-1×1-layer networks with unit weight and zero bias.
    pub fn identity(depth: usize) -> Self {
        let layer = ConvLayer {
            out_channels: 1,
            in_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            weights: vec![1.0],
            biases: vec![0.0],
        };
        Self {
            layers: vec![layer; depth.max(1)],
        }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }
}

/// Computes `out_rows` of a same-size convolution whose input is the row
/// window `in_rows` of a `full_h`-row frame. Row and column indices outside
/// the frame are clamped (replicate padding); every clamped row must lie in
/// `in_rows`.
fn conv_rows(
    input: &[f64],
    in_rows: Range<usize>,
    full_h: usize,
    width: usize,
    layer: &ConvLayer,
    bias_scale: f64,
    activation: Activation,
    out_rows: Range<usize>,
) -> Vec<f64> {
    let in_len = in_rows.len();
    let out_len = out_rows.len();
    let plane = out_len * width;
    let ph = layer.kernel_h / 2;
    let pw = (layer.kernel_w / 2) as isize;
    let mut out = vec![0.0; layer.out_channels * plane];

    for (o, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        out_plane.fill(layer.biases[o] as f64 * bias_scale);
        for c in 0..layer.in_channels {
            let in_plane = &input[c * in_len * width..(c + 1) * in_len * width];
            for ky in 0..layer.kernel_h {
                for kx in 0..layer.kernel_w {
                    let wv = layer.weight(o, c, ky, kx);
                    let dx = kx as isize - pw;
                    // columns whose source x + dx needs no clamping
                    let x_lo = ((-dx).max(0) as usize).min(width);
                    let x_hi = (width as isize - dx.max(0)).clamp(x_lo as isize, width as isize) as usize;
                    for (ry, y) in out_rows.clone().enumerate() {
                        let sy = (y + ky).saturating_sub(ph).min(full_h - 1);
                        let src = &in_plane[(sy - in_rows.start) * width..][..width];
                        let dst = &mut out_plane[ry * width..][..width];
                        for x in 0..x_lo {
                            dst[x] += wv * src[(x as isize + dx).clamp(0, width as isize - 1) as usize];
                        }
                        if x_hi > x_lo {
                            let off = (x_lo as isize + dx) as usize;
                            for (d, s) in dst[x_lo..x_hi].iter_mut().zip(&src[off..]) {
                                *d += wv * s;
                            }
                        }
                        for x in x_hi..width {
                            dst[x] += wv * src[(x as isize + dx).clamp(0, width as isize - 1) as usize];
                        }
                    }
                }
            }
        }
        if activation == Activation::Relu {
            out_plane.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    out
}

/// Same-size cross-correlation with replicate-edge padding of `(k − 1) / 2`,
/// per-channel bias, and optional ReLU.
pub fn conv2d_forward(
    input: &PlaneStack,
    layer: &ConvLayer,
    activation: Activation,
) -> Result<PlaneStack> {
    layer.validate()?;
    if input.channels != layer.in_channels {
        return Err(Error::Shape(format!(
            "input has {} channels, layer expects {}",
            input.channels, layer.in_channels
        )));
    }
    let h = input.height;
    let data = conv_rows(
        &input.data,
        0..h,
        h,
        input.width,
        layer,
        1.0,
        activation,
        0..h,
    );
    PlaneStack::new(layer.out_channels, h, input.width, data)
}

fn expand(rows: &Range<usize>, pad: usize, full_h: usize) -> Range<usize> {
    rows.start.saturating_sub(pad)..(rows.end + pad).min(full_h)
}

/// Bilinear pre-upsampling followed by the convolution stack.
///
/// The network sees depth divided by [`DEPTH_FULL_SCALE`]. Because every
/// layer is affine and ReLU is positively homogeneous, the same result is
/// obtained by running on millimeters with biases scaled by the full scale,
/// which keeps the identity network bit-exact. Output is clamped to the
/// 16-bit range and pixels invalid after upsampling stay invalid.
pub fn srcnn_upscale(frame: &DepthFrame, weights: &SrcnnWeights, factor: usize) -> Result<DepthFrame> {
    // re-check: the struct may have been built by a caller bypassing `new`
    let weights = SrcnnWeights::new(weights.layers.clone())?;
    let up = upscale_bilinear(frame, factor)?;
    let (w, h) = up.dims();
    let layers = weights.layers();
    let n = layers.len();
    let mut out = vec![0.0; w * h];

    let mut start = 0;
    while start < h {
        let end = (start + STRIP_ROWS).min(h);
        // rows[i] = rows of layer i's input needed for this strip
        let mut rows = vec![start..end; n + 1];
        for i in (0..n).rev() {
            rows[i] = expand(&rows[i + 1], layers[i].kernel_h / 2, h);
        }
        let mut act = up.samples()[rows[0].start * w..rows[0].end * w].to_vec();
        for (i, layer) in layers.iter().enumerate() {
            let activation = if i + 1 < n {
                Activation::Relu
            } else {
                Activation::None
            };
            act = conv_rows(
                &act,
                rows[i].clone(),
                h,
                w,
                layer,
                DEPTH_FULL_SCALE,
                activation,
                rows[i + 1].clone(),
            );
        }
        out[start * w..end * w].copy_from_slice(&act);
        start = end;
    }

    for (o, src) in out.iter_mut().zip(up.samples()) {
        *o = if *src == 0.0 {
            0.0
        } else {
            o.clamp(0.0, DEPTH_FULL_SCALE)
        };
    }
    Ok(DepthFrame::from_trusted(w, h, out))
}
