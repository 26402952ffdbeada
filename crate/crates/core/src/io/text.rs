//! Plain-text capture metadata: key/value files (intrinsics and configs),
//! pose tracks, and capture manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Location, Result};
use crate::geometry::{orthonormality_error, CameraIntrinsics, Pose};

/// Accepted deviation from orthonormality for rotations read from text.
pub const POSE_INPUT_TOLERANCE: f64 = 1e-4;

/// Rotations closer to orthonormal than this are used as written.
const REORTHONORMALIZE_ABOVE: f64 = 1e-12;

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}

/// Content lines of a text file as `(1-based line number, text)`, with
/// comments and blank lines removed.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .filter(|(_, l)| !l.is_empty())
}

fn line_err(line: usize, msg: impl Into<String>) -> Error {
    Error::format_at(Location::Line(line), msg)
}

pub(crate) fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(line_err(line, format!("{what} {tok:?} is not finite"))),
        Err(_) => Err(line_err(line, format!("{what} {tok:?} is not a number"))),
    }
}

/// Parsed "key value" file. Keys are unique; the value is the rest of the
/// line after the first run of whitespace.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    last_line: usize,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in content_lines(text) {
            let (key, value) = line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .unwrap_or((line, ""));
            if value.is_empty() {
                return Err(line_err(n, format!("key {key:?} has no value")));
            }
            if entries.insert(key.to_string(), (n, value.to_string())).is_some() {
                return Err(line_err(n, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self {
            entries,
            last_line: text.lines().count(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Errors on the first key not in `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, (n, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(line_err(*n, format!("unknown key {k:?}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(n, v)| (*n, v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<(usize, &str)> {
        self.get(key)
            .ok_or_else(|| line_err(self.last_line, format!("missing key {key:?}")))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|(n, v)| parse_f64(v, n, key))
            .transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        let (n, v) = self.require(key)?;
        parse_f64(v, n, key)
    }

    pub fn u32(&self, key: &str) -> Result<Option<u32>> {
        self.get(key)
            .map(|(n, v)| {
                v.parse::<u32>()
                    .map_err(|_| line_err(n, format!("{key} {v:?} is not a non-negative integer")))
            })
            .transpose()
    }

    pub fn require_u32(&self, key: &str) -> Result<u32> {
        self.u32(key)?
            .ok_or_else(|| line_err(self.last_line, format!("missing key {key:?}")))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|(n, v)| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(line_err(n, format!("{key} {v:?} is not a boolean"))),
            })
            .transpose()
    }

    /// Whitespace-separated triple of floats.
    pub fn vec3(&self, key: &str) -> Result<Option<Vector3<f64>>> {
        let Some((n, v)) = self.get(key) else {
            return Ok(None);
        };
        let parts: Vec<&str> = v.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(line_err(n, format!("{key} needs three numbers")));
        }
        Ok(Some(Vector3::new(
            parse_f64(parts[0], n, key)?,
            parse_f64(parts[1], n, key)?,
            parse_f64(parts[2], n, key)?,
        )))
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.get(key).map_or(self.last_line, |(n, _)| n)
    }
}

const INTRINSIC_KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];

pub fn read_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    let kv = KeyValues::parse(text)?;
    kv.only(&INTRINSIC_KEYS)?;
    intrinsics_from(&kv)
}

/// Reads intrinsics keys out of a larger key/value file.
pub fn intrinsics_from(kv: &KeyValues) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(
        kv.require_f64("fx")?,
        kv.require_f64("fy")?,
        kv.require_f64("cx")?,
        kv.require_f64("cy")?,
        kv.require_u32("width")?,
        kv.require_u32("height")?,
    )
    .map_err(|e| line_err(kv.line_of("fx"), e.to_string()))
}

pub fn write_intrinsics(intr: &CameraIntrinsics) -> String {
    format!(
        "fx {}\nfy {}\ncx {}\ncy {}\nwidth {}\nheight {}\n",
        intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height
    )
}

/// Gram–Schmidt on the columns; the third column is the cross product so
/// the result is a proper rotation.
fn gram_schmidt(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

fn parse_pose(line: &str, n: usize) -> Result<Pose> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| parse_f64(t, n, "pose entry"))
        .collect::<Result<_>>()?;
    if vals.len() != 12 {
        return Err(line_err(n, format!("pose needs 12 numbers, got {}", vals.len())));
    }
    #[rustfmt::skip]
    let r = Matrix3::new(
        vals[0], vals[1], vals[2],
        vals[4], vals[5], vals[6],
        vals[8], vals[9], vals[10],
    );
    let t = Vector3::new(vals[3], vals[7], vals[11]);
    let ortho = orthonormality_error(&r);
    if ortho > POSE_INPUT_TOLERANCE {
        return Err(line_err(
            n,
            format!("rotation is not orthonormal (max |RᵀR − I| = {ortho:e})"),
        ));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > POSE_INPUT_TOLERANCE {
        return Err(line_err(n, format!("rotation determinant is {det}, expected 1")));
    }
    let r = if ortho > REORTHONORMALIZE_ABOVE {
        gram_schmidt(&r)
    } else {
        r
    };
    Pose::new(r, t).map_err(|e| line_err(n, e.to_string()))
}

/// One camera-to-world pose per content line: the 12 entries of `[R | T]`
/// in row-major order, translation in millimeters.
pub fn read_pose_track(text: &str) -> Result<Vec<Pose>> {
    content_lines(text).map(|(n, l)| parse_pose(l, n)).collect()
}

pub fn write_pose_track(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let (r, t) = (p.rotation(), p.translation());
        for i in 0..3 {
            if i > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{} {} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub index: u64,
    pub timestamp: f64,
    pub depth_lidar: PathBuf,
    pub depth_truedepth: Option<PathBuf>,
    pub conf_lidar: Option<PathBuf>,
    pub conf_truedepth: Option<PathBuf>,
    pub color: Option<PathBuf>,
    /// 0-based record index into the pose track.
    pub pose: usize,
}

/// Ordered frame list plus the intrinsics and pose-track files it refers
/// to. Paths are kept as written and resolved against [`base_dir`].
///
/// [`base_dir`]: CaptureManifest::base_dir
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureManifest {
    pub intrinsics: PathBuf,
    pub poses: PathBuf,
    pub frames: Vec<FrameEntry>,
    pub base_dir: PathBuf,
}

pub const DEFAULT_INTRINSICS_FILE: &str = "intrinsics.txt";
pub const DEFAULT_POSES_FILE: &str = "poses.txt";

impl CaptureManifest {
    pub fn new(frames: Vec<FrameEntry>) -> Self {
        Self {
            intrinsics: DEFAULT_INTRINSICS_FILE.into(),
            poses: DEFAULT_POSES_FILE.into(),
            frames,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn path_token(tok: &str, n: usize, key: &str) -> Result<PathBuf> {
    if tok.is_empty() {
        return Err(line_err(n, format!("{key} has an empty path")));
    }
    Ok(PathBuf::from(tok))
}

/// Parses a manifest. Lines are either directives (`intrinsics <path>`,
/// `poses <path>`) or frames: `index timestamp key=value...` with keys
/// `depth_l` (required), `depth_t`, `conf_l`, `conf_t`, `color` and
/// `pose` (required, 0-based pose record).
pub fn read_manifest(text: &str) -> Result<CaptureManifest> {
    let mut m = CaptureManifest::new(Vec::new());
    for (n, line) in content_lines(text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "intrinsics" | "poses" => {
                if toks.len() != 2 {
                    return Err(line_err(n, format!("{} takes exactly one path", toks[0])));
                }
                let p = path_token(toks[1], n, toks[0])?;
                if toks[0] == "intrinsics" {
                    m.intrinsics = p;
                } else {
                    m.poses = p;
                }
                continue;
            }
            _ => {}
        }
        if toks.len() < 2 {
            return Err(line_err(n, "frame line needs an index and a timestamp"));
        }
        let index: u64 = toks[0]
            .parse()
            .map_err(|_| line_err(n, format!("bad frame index {:?}", toks[0])))?;
        let timestamp = parse_f64(toks[1], n, "timestamp")?;
        if let Some(prev) = m.frames.last() {
            if index <= prev.index {
                return Err(line_err(n, format!("index {index} does not increase past {}", prev.index)));
            }
            if timestamp < prev.timestamp {
                return Err(line_err(n, format!("timestamp {timestamp} goes backwards")));
            }
        }
        let mut depth_lidar = None;
        let mut entry = FrameEntry {
            index,
            timestamp,
            depth_lidar: PathBuf::new(),
            depth_truedepth: None,
            conf_lidar: None,
            conf_truedepth: None,
            color: None,
            pose: 0,
        };
        let mut pose = None;
        for tok in &toks[2..] {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| line_err(n, format!("expected key=value, found {tok:?}")))?;
            let slot = match key {
                "depth_l" => &mut depth_lidar,
                "depth_t" => &mut entry.depth_truedepth,
                "conf_l" => &mut entry.conf_lidar,
                "conf_t" => &mut entry.conf_truedepth,
                "color" => &mut entry.color,
                "pose" => {
                    if pose.is_some() {
                        return Err(line_err(n, "duplicate key \"pose\""));
                    }
                    pose = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| line_err(n, format!("bad pose line {value:?}")))?,
                    );
                    continue;
                }
                other => return Err(line_err(n, format!("unknown key {other:?}"))),
            };
            if slot.is_some() {
                return Err(line_err(n, format!("duplicate key {key:?}")));
            }
            *slot = Some(path_token(value, n, key)?);
        }
        entry.depth_lidar = depth_lidar.ok_or_else(|| line_err(n, "frame has no depth_l"))?;
        entry.pose = pose.ok_or_else(|| line_err(n, "frame has no pose"))?;
        m.frames.push(entry);
    }
    Ok(m)
}

fn path_str(p: &Path) -> Result<&str> {
    let s = p
        .to_str()
        .ok_or_else(|| Error::InvalidArgument(format!("path {} is not UTF-8", p.display())))?;
    if s.is_empty() || s.contains(char::is_whitespace) || s.contains('#') {
        return Err(Error::InvalidArgument(format!(
            "path {s:?} cannot be written to a manifest"
        )));
    }
    Ok(s)
}

pub fn write_manifest(m: &CaptureManifest) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "intrinsics {}", path_str(&m.intrinsics)?);
    let _ = writeln!(out, "poses {}", path_str(&m.poses)?);
    for f in &m.frames {
        let _ = write!(out, "{} {} depth_l={}", f.index, f.timestamp, path_str(&f.depth_lidar)?);
        for (key, p) in [
            ("depth_t", &f.depth_truedepth),
            ("conf_l", &f.conf_lidar),
            ("conf_t", &f.conf_truedepth),
            ("color", &f.color),
        ] {
            if let Some(p) = p {
                let _ = write!(out, " {key}={}", path_str(p)?);
            }
        }
        let _ = writeln!(out, " pose={}", f.pose);
    }
    Ok(out)
}
