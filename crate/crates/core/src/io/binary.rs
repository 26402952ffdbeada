//! Little-endian raster formats for depth (`DPT1`) and confidence (`CNF1`).
//!
//! Both share a 12-byte header: 4-byte magic, `u32` width, `u32` height.
//! Depth samples are `u16` millimeters; confidence samples are `u8` levels.

use crate::error::{Error, Location, Result};
use crate::frame::{ConfidenceFrame, DepthFrame};

pub const DEPTH_MAGIC: &[u8; 4] = b"DPT1";
pub const CONFIDENCE_MAGIC: &[u8; 4] = b"CNF1";
const HEADER_LEN: usize = 12;

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format_at(
                Location::Byte(self.bytes.len()),
                format!(
                    "truncated {what}: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.remaining()
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format_at(
                Location::Byte(self.pos),
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

fn read_header(c: &mut Cursor<'_>, magic: &[u8; 4], sample_bytes: usize) -> Result<(usize, usize)> {
    let m = c.take(4, "magic")?;
    if m != magic {
        return Err(Error::format_at(
            Location::Byte(0),
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let w = c.u32("width")? as usize;
    let h = c.u32("height")? as usize;
    if w == 0 || h == 0 {
        return Err(Error::format_at(
            Location::Byte(4),
            format!("dimensions {w}x{h} must be positive"),
        ));
    }
    let payload = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(sample_bytes))
        .ok_or_else(|| Error::format_at(Location::Byte(4), format!("dimensions {w}x{h} overflow")))?;
    if payload != c.remaining() {
        let what = if payload > c.remaining() {
            "truncated payload"
        } else {
            "payload longer than header implies"
        };
        return Err(Error::format_at(
            Location::Byte(HEADER_LEN + payload.min(c.remaining())),
            format!("{what}: {w}x{h} needs {payload} bytes, have {}", c.remaining()),
        ));
    }
    Ok((w, h))
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], w: usize, h: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
}

pub fn read_depth_frame(bytes: &[u8]) -> Result<DepthFrame> {
    let mut c = Cursor::new(bytes);
    let (w, h) = read_header(&mut c, DEPTH_MAGIC, 2)?;
    let samples = c
        .take(w * h * 2, "depth samples")?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as f64)
        .collect();
    DepthFrame::new(w, h, samples)
}

/// Serializes a depth frame. Samples are rounded to the nearest millimeter
/// and clamped to the `u16` range; frames read from this format round-trip
/// unchanged.
pub fn write_depth_frame(frame: &DepthFrame) -> Vec<u8> {
    let (w, h) = frame.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * w * h);
    write_header(&mut out, DEPTH_MAGIC, w, h);
    for s in frame.samples() {
        let q = s.round().clamp(0.0, u16::MAX as f64) as u16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_confidence_frame(bytes: &[u8]) -> Result<ConfidenceFrame> {
    let mut c = Cursor::new(bytes);
    let (w, h) = read_header(&mut c, CONFIDENCE_MAGIC, 1)?;
    let levels = c.take(w * h, "confidence samples")?;
    if let Some(i) = levels.iter().position(|l| *l > ConfidenceFrame::MAX_LEVEL) {
        return Err(Error::format_at(
            Location::Byte(HEADER_LEN + i),
            format!("confidence level {} outside 0..=2", levels[i]),
        ));
    }
    ConfidenceFrame::new(w, h, levels.to_vec())
}

pub fn write_confidence_frame(frame: &ConfidenceFrame) -> Vec<u8> {
    let (w, h) = frame.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h);
    write_header(&mut out, CONFIDENCE_MAGIC, w, h);
    out.extend_from_slice(frame.levels());
    out
}
