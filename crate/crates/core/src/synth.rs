//! Synthetic captures with analytic ground truth.
//!
//! Depth is the exact ray/shape intersection (camera-frame z of the hit).
//! The lidar branch is rendered at the output resolution divided by the
//! lidar factor; the truedepth branch and color at full resolution.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::depth::DEPTH_FULL_SCALE;
use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame, Rgb};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::io::{self, CaptureManifest, FrameEntry, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vector3<f64>, radius: f64 },
    /// The plane `z = const` in world coordinates.
    Plane { z: f64 },
}

impl Shape {
    /// Smallest positive ray parameter of the hit, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Plane { z } => {
                if dir.z == 0.0 {
                    return None;
                }
                let t = (z - origin.z) / dir.z;
                (t > 0.0).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = dir.dot(&oc);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let near = (-b - s) / a;
                let far = (-b + s) / a;
                if near > 0.0 {
                    Some(near)
                } else {
                    (far > 0.0).then_some(far)
                }
            }
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Shape::Plane { z } => (p.z - z).abs(),
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
        }
    }

    fn shade(&self, hit: &Vector3<f64>) -> Rgb {
        match *self {
            Shape::Sphere { center, radius } => {
                let n = (hit - center) / radius;
                let ch = |v: f64| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
                [ch(n.x), ch(n.y), ch(n.z)]
            }
            Shape::Plane { .. } => {
                let cell = (hit.x / 50.0).floor() as i64 + (hit.y / 50.0).floor() as i64;
                if cell.rem_euclid(2) == 0 {
                    [200, 200, 200]
                } else {
                    [60, 60, 60]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub shape: Shape,
    /// Full (output) resolution camera.
    pub intrinsics: CameraIntrinsics,
    /// One camera-to-world pose per frame.
    pub path: Vec<Pose>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub lidar_factor: u32,
    pub truedepth: bool,
    pub color: bool,
}

impl SceneSpec {
    pub fn new(shape: Shape, intrinsics: CameraIntrinsics, path: Vec<Pose>) -> Result<Self> {
        let spec = Self {
            shape,
            intrinsics,
            path,
            noise_sigma: 0.0,
            seed: 0,
            lidar_factor: 4,
            truedepth: true,
            color: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn frame_count(&self) -> usize {
        self.path.len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Shape::Sphere { radius, center } = self.shape {
            if !(radius.is_finite() && radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
            }
        }
        if let Shape::Plane { z } = self.shape {
            if !z.is_finite() {
                return Err(Error::Config("plane z must be finite".into()));
            }
        }
        if self.path.is_empty() {
            return Err(Error::Config("scene needs at least one frame".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        self.lidar_intrinsics().map(|_| ())
    }

    pub fn lidar_intrinsics(&self) -> Result<CameraIntrinsics> {
        if self.lidar_factor == 0 {
            return Err(Error::Config("lidar_factor must be >= 1".into()));
        }
        self.intrinsics
            .downscaled(self.lidar_factor)
            .map_err(|e| Error::Config(format!("lidar_factor {}: {}", self.lidar_factor, e)))
    }

    /// Parses a scene config. Keys: `shape` (sphere|plane), `center`,
    /// `radius`, `plane_z`, `frames`, the six intrinsics keys, `path`
    /// (static|orbit), `camera_position`, `orbit_distance`, `orbit_sweep`
    /// (degrees), `noise_sigma`, `seed`, `lidar_factor`, `truedepth`, `color`.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.only(&[
            "shape", "center", "radius", "plane_z", "frames", "fx", "fy", "cx", "cy", "width",
            "height", "path", "camera_position", "orbit_distance", "orbit_sweep", "noise_sigma",
            "seed", "lidar_factor", "truedepth", "color", "name",
        ])?;
        let (line, shape_name) = kv.require("shape")?;
        let shape = match shape_name {
            "sphere" => Shape::Sphere {
                center: kv.vec3("center")?.unwrap_or_else(|| Vector3::new(0.0, 0.0, 1000.0)),
                radius: kv.require_f64("radius")?,
            },
            "plane" => Shape::Plane {
                z: kv.require_f64("plane_z")?,
            },
            other => return Err(Error::Config(format!("line {line}: unknown shape {other:?}"))),
        };
        let intrinsics = io::intrinsics_from(&kv)?;
        let frames = kv.u32("frames")?.unwrap_or(1) as usize;
        let path = match kv.get("path").map(|(_, v)| v) {
            None | Some("static") => {
                let t = kv.vec3("camera_position")?.unwrap_or_else(Vector3::zeros);
                vec![Pose::from_translation(t); frames]
            }
            Some("orbit") => {
                let center = match shape {
                    Shape::Sphere { center, .. } => center,
                    Shape::Plane { z } => Vector3::new(0.0, 0.0, z),
                };
                let distance = kv.require_f64("orbit_distance")?;
                let sweep = kv.f64("orbit_sweep")?.unwrap_or(360.0).to_radians();
                orbit_path(&center, distance, sweep, frames)?
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "line {}: unknown path {other:?}",
                    kv.line_of("path")
                )))
            }
        };
        let spec = Self {
            shape,
            intrinsics,
            path,
            noise_sigma: kv.f64("noise_sigma")?.unwrap_or(0.0),
            seed: kv.u32("seed")?.unwrap_or(0) as u64,
            lidar_factor: kv.u32("lidar_factor")?.unwrap_or(4),
            truedepth: kv.bool("truedepth")?.unwrap_or(true),
            color: kv.bool("color")?.unwrap_or(true),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Camera-to-world poses on a horizontal circle around `center`, each
/// looking at it with image y pointing down world y. Frame 0 sits at
/// `center - distance·z` with identity rotation; frame `i` is rotated by
/// `sweep·i/frames` about the vertical axis.
pub fn orbit_path(center: &Vector3<f64>, distance: f64, sweep: f64, frames: usize) -> Result<Vec<Pose>> {
    if !(distance.is_finite() && distance > 0.0) || !sweep.is_finite() {
        return Err(Error::Config(format!("bad orbit distance {distance} or sweep {sweep}")));
    }
    (0..frames)
        .map(|i| {
            let theta = sweep * i as f64 / frames as f64;
            let (s, c) = theta.sin_cos();
            let forward = Vector3::new(-s, 0.0, c);
            let right = Vector3::new(c, 0.0, s);
            let down = Vector3::new(0.0, 1.0, 0.0);
            let rotation = Matrix3::from_columns(&[right, down, forward]);
            Pose::new(rotation, center - forward * distance)
        })
        .collect()
}

/// Full-circle orbit helper used by tests and examples.
pub fn full_orbit(center: &Vector3<f64>, distance: f64, frames: usize) -> Result<Vec<Pose>> {
    orbit_path(center, distance, 2.0 * PI, frames)
}

fn ray(intr: &CameraIntrinsics, pose: &Pose, u: usize, v: usize) -> Vector3<f64> {
    let d = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
    pose.rotation() * d
}

/// Noise-free depth in millimeters. Hits beyond the 16-bit range count
/// as misses.
pub fn render_depth(shape: &Shape, intr: &CameraIntrinsics, pose: &Pose) -> DepthFrame {
    let (w, h) = intr.dims();
    let mut samples = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let d = ray(intr, pose, u, v);
            let z = shape
                .intersect(pose.translation(), &d)
                .filter(|t| *t <= DEPTH_FULL_SCALE)
                .unwrap_or(0.0);
            samples.push(z);
        }
    }
    DepthFrame::from_trusted(w, h, samples)
}

pub fn render_color(shape: &Shape, intr: &CameraIntrinsics, pose: &Pose) -> ColorFrame {
    let (w, h) = intr.dims();
    let mut pixels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let d = ray(intr, pose, u, v);
            let c = shape
                .intersect(pose.translation(), &d)
                .map(|t| shape.shade(&(pose.translation() + d * t)))
                .unwrap_or([0, 0, 0]);
            pixels.push(c);
        }
    }
    ColorFrame::new(w, h, pixels).expect("dims match")
}

fn add_noise(frame: DepthFrame, noise: Option<&Normal<f64>>, rng: &mut StdRng) -> DepthFrame {
    let Some(noise) = noise else { return frame };
    let (w, h) = frame.dims();
    let samples = frame
        .into_samples()
        .into_iter()
        .map(|z| if z == 0.0 { 0.0 } else { (z + noise.sample(rng)).max(1.0) })
        .collect();
    DepthFrame::from_trusted(w, h, samples)
}

/// Renders every frame of `spec` into `dir` and writes the manifest as
/// `dir/manifest.txt`. Returns the manifest with `base_dir = dir`.
pub fn synth_capture(spec: &SceneSpec, dir: &Path) -> Result<CaptureManifest> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lidar_intr = spec.lidar_intrinsics()?;
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    let mut rng = StdRng::seed_from_u64(spec.seed);

    let mut frames = Vec::with_capacity(spec.frame_count());
    for (i, pose) in spec.path.iter().enumerate() {
        let name = |suffix: &str| PathBuf::from(format!("frame_{i:04}_{suffix}"));
        let lidar = add_noise(render_depth(&spec.shape, &lidar_intr, pose), noise.as_ref(), &mut rng);
        let lidar_path = name("lidar.dpt");
        io::write_file(&dir.join(&lidar_path), io::write_depth_frame(&lidar))?;

        let truedepth = if spec.truedepth {
            let td = add_noise(render_depth(&spec.shape, &spec.intrinsics, pose), noise.as_ref(), &mut rng);
            let p = name("truedepth.dpt");
            io::write_file(&dir.join(&p), io::write_depth_frame(&td))?;
            Some(p)
        } else {
            None
        };
        let color = if spec.color {
            let p = name("color.ppm");
            let c = render_color(&spec.shape, &spec.intrinsics, pose);
            io::write_file(&dir.join(&p), io::write_color_frame(&c))?;
            Some(p)
        } else {
            None
        };
        frames.push(FrameEntry {
            index: i as u64,
            timestamp: i as f64 / 30.0,
            depth_lidar: lidar_path,
            depth_truedepth: truedepth,
            conf_lidar: None,
            conf_truedepth: None,
            color,
            pose: i,
        });
    }

    let mut manifest = CaptureManifest::new(frames);
    io::write_file(&dir.join(&manifest.intrinsics), io::write_intrinsics(&spec.intrinsics))?;
    io::write_file(&dir.join(&manifest.poses), io::write_pose_track(&spec.path))?;
    io::write_file(&dir.join("manifest.txt"), io::write_manifest(&manifest)?)?;
    manifest.base_dir = dir.to_path_buf();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orthonormality_error, unproject_frame};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 31.5, 23.5, 64, 48).unwrap()
    }

    #[test]
    fn fronto_parallel_plane_is_exact() {
        let d = render_depth(&Shape::Plane { z: 1000.0 }, &intr(), &Pose::identity());
        assert!(d.samples().iter().all(|z| *z == 1000.0));
    }

    #[test]
    fn plane_behind_camera_misses() {
        let d = render_depth(&Shape::Plane { z: -10.0 }, &intr(), &Pose::identity());
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn sphere_on_axis_center_pixel() {
        let i = CameraIntrinsics::new(20.0, 20.0, 10.0, 10.0, 21, 21).unwrap();
        let s = Shape::Sphere {
            center: Vector3::new(0.0, 0.0, 1000.0),
            radius: 200.0,
        };
        let d = render_depth(&s, &i, &Pose::identity());
        assert_eq!(d.get(10, 10), 800.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn rendered_points_lie_on_sphere() {
        let s = Shape::Sphere {
            center: Vector3::new(10.0, -20.0, 900.0),
            radius: 150.0,
        };
        for pose in full_orbit(&Vector3::new(10.0, -20.0, 900.0), 700.0, 5).unwrap() {
            let d = render_depth(&s, &intr(), &pose);
            assert!(d.valid_count() > 100);
            let cloud = unproject_frame(&intr(), &d, None, &pose, 1).unwrap();
            assert!(cloud.points().iter().all(|p| s.distance(p) < 1e-6));
        }
    }

    #[test]
    fn orbit_poses_look_at_center() {
        let c = Vector3::new(0.0, 0.0, 1000.0);
        let path = full_orbit(&c, 600.0, 8).unwrap();
        assert_eq!(path[0], Pose::from_translation(Vector3::new(0.0, 0.0, 400.0)));
        for p in &path {
            assert!(orthonormality_error(p.rotation()) < 1e-12);
            assert!((p.rotation().determinant() - 1.0).abs() < 1e-12);
            let ahead = p.apply(&Vector3::new(0.0, 0.0, 600.0));
            assert!((ahead - c).norm() < 1e-9);
        }
    }

    #[test]
    fn spec_parse() {
        let text = "shape sphere\ncenter 0 0 1000\nradius 200\nframes 10\npath orbit\norbit_distance 800\n\
                    fx 100\nfy 100\ncx 31.5\ncy 23.5\nwidth 64\nheight 48\nnoise_sigma 1.5\nseed 7\n";
        let s = SceneSpec::parse(text).unwrap();
        assert_eq!(s.frame_count(), 10);
        assert_eq!(s.noise_sigma, 1.5);
        assert_eq!(s.lidar_intrinsics().unwrap().dims(), (16, 12));
        let bad = [
            text.replace("radius 200", "radius -1"),
            text.replace("frames 10", "frames 0"),
            text.replace("width 64", "width 62"),
            text.replace("shape sphere", "shape cube"),
            text.replace("noise_sigma 1.5", "noise_sigma -1"),
        ];
        for b in bad {
            assert!(SceneSpec::parse(&b).is_err(), "{b}");
        }
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let mut a = StdRng::seed_from_u64(3);
        let mut b = StdRng::seed_from_u64(3);
        let n = Normal::new(0.0, 50.0).unwrap();
        let f = DepthFrame::new(3, 1, vec![0.0, 2.0, 1000.0]).unwrap();
        let x = add_noise(f.clone(), Some(&n), &mut a);
        assert_eq!(x, add_noise(f, Some(&n), &mut b));
        assert_eq!(x.get(0, 0), 0.0);
        assert!(x.samples()[1..].iter().all(|z| *z >= 1.0));
    }
}
