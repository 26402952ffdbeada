use crate::error::{Error, Result};
use crate::frame::{DepthFrame, MaskFrame};

/// Affine map from relative depth in `[0, 1]` to millimeters in
/// `[z_near, z_far]`.
///
/// Relative depth has no spare value for "invalid", so validity comes from
/// `valid`: pixels where the mask is zero are emitted as 0 and their input is
/// not range-checked. Without a mask every sample is treated as valid.
pub fn normalize_relative_to_metric(
    frame: &DepthFrame,
    z_near: f64,
    z_far: f64,
    valid: Option<&MaskFrame>,
) -> Result<DepthFrame> {
    if !(z_near.is_finite() && z_far.is_finite() && 0.0 < z_near && z_near < z_far) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < z_near < z_far, got z_near={z_near} z_far={z_far}"
        )));
    }
    if let Some(m) = valid {
        if m.dims() != frame.dims() {
            return Err(Error::Shape(format!(
                "validity mask is {:?} but frame is {:?}",
                m.dims(),
                frame.dims()
            )));
        }
    }
    let span = z_far - z_near;
    let mut out = Vec::with_capacity(frame.samples().len());
    for (i, &s) in frame.samples().iter().enumerate() {
        if valid.is_some_and(|m| m.values()[i] == 0) {
            out.push(0.0);
            continue;
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!(
                "relative depth {s} at sample {i} is outside [0, 1]"
            )));
        }
        out.push((z_near + s * span).min(z_far));
    }
    let (w, h) = frame.dims();
    Ok(DepthFrame::from_trusted(w, h, out))
}
