//! Capture file formats. All binary formats are little-endian; all text
//! formats use `.` as the decimal separator and `#` comments.

mod binary;
mod obj;
mod ply;
mod ppm;
mod text;
mod weights;

use std::path::Path;

pub use binary::{
    read_confidence_frame, read_depth_frame, write_confidence_frame, write_depth_frame,
    CONFIDENCE_MAGIC, DEPTH_MAGIC,
};
pub use obj::read_obj_mesh;
pub use ply::{read_ply, write_ply};
pub use ppm::{read_color_frame, write_color_frame};
pub use text::{
    intrinsics_from, read_intrinsics, read_manifest, read_pose_track, write_intrinsics,
    write_manifest, write_pose_track, CaptureManifest, FrameEntry, KeyValues,
    DEFAULT_INTRINSICS_FILE, DEFAULT_POSES_FILE, POSE_INPUT_TOLERANCE,
};
pub use weights::{parse_srcnn_weights, weights_file_len, write_srcnn_weights, WEIGHTS_MAGIC};

use crate::depth::SrcnnWeights;
use crate::error::{Error, Result};
use crate::frame::{ColorFrame, ConfidenceFrame, DepthFrame};
use crate::geometry::{CameraIntrinsics, PointCloud, Pose};
use crate::voxel::TriangleMesh;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_depth_frame(path: &Path) -> Result<DepthFrame> {
    read_depth_frame(&read_bytes(path)?)
}

pub fn load_confidence_frame(path: &Path) -> Result<ConfidenceFrame> {
    read_confidence_frame(&read_bytes(path)?)
}

pub fn load_color_frame(path: &Path) -> Result<ColorFrame> {
    read_color_frame(&read_bytes(path)?)
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    read_intrinsics(&read_text(path)?)
}

pub fn load_pose_track(path: &Path) -> Result<Vec<Pose>> {
    read_pose_track(&read_text(path)?)
}

pub fn load_weights(path: &Path) -> Result<SrcnnWeights> {
    parse_srcnn_weights(&read_bytes(path)?)
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    read_ply(&read_text(path)?)
}

/// Reads a manifest and records its directory for resolving relative paths.
pub fn load_manifest(path: &Path) -> Result<CaptureManifest> {
    let mut m = read_manifest(&read_text(path)?)?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(m)
}

pub fn load_obj_mesh(path: &Path) -> Result<TriangleMesh> {
    read_obj_mesh(&read_text(path)?)
}
