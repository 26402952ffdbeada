//! Pinhole camera model and rigid-body poses.
//!
//! Camera convention: x right, y down, z forward into the scene. Depth is the
//! camera-frame z coordinate in millimeters.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame, Rgb, WHITE};

/// Tolerance on `‖RᵀR − I‖_max` and `|det R − 1|` for a valid [`Pose`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("sensor dimensions must be positive".into()));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width as usize, self.height as usize)
    }

    /// Intrinsics of the same camera sampled `factor` times denser, with
    /// pixel centers mapped the way the align-corners-false upscalers map them.
    pub fn upscaled(&self, factor: u32) -> Result<Self> {
        let f = factor as f64;
        Self::new(
            self.fx * f,
            self.fy * f,
            (self.cx + 0.5) * f - 0.5,
            (self.cy + 0.5) * f - 0.5,
            self.width * factor,
            self.height * factor,
        )
    }

    /// Inverse of [`CameraIntrinsics::upscaled`]. Fails unless the sensor
    /// dimensions are divisible by `factor`.
    pub fn downscaled(&self, factor: u32) -> Result<Self> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} sensor is not divisible by {factor}",
                self.width, self.height
            )));
        }
        let f = factor as f64;
        Self::new(
            self.fx / f,
            self.fy / f,
            (self.cx + 0.5) / f - 0.5,
            (self.cy + 0.5) / f - 0.5,
            self.width / factor,
            self.height / factor,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordFrame {
    Camera,
    World,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub coords: Vector3<f64>,
    pub frame: CoordFrame,
}

impl Point3 {
    pub fn camera(x: f64, y: f64, z: f64) -> Self {
        Self {
            coords: Vector3::new(x, y, z),
            frame: CoordFrame::Camera,
        }
    }

    pub fn world(x: f64, y: f64, z: f64) -> Self {
        Self {
            coords: Vector3::new(x, y, z),
            frame: CoordFrame::World,
        }
    }

    pub fn x(&self) -> f64 {
        self.coords.x
    }

    pub fn y(&self) -> f64 {
        self.coords.y
    }

    pub fn z(&self) -> f64 {
        self.coords.z
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    /// Column.
    pub u: f64,
    /// Row.
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Camera-to-world rigid transform: `p_world = R · p_camera + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("pose has non-finite entries".into()));
        }
        let ortho = orthonormality_error(&rotation);
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about `axis` (Rodrigues), then translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("rotation axis must be nonzero".into()));
        }
        let k = axis / n;
        let skew = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let rotation =
            Matrix3::identity() + skew * angle.sin() + skew * skew * (1.0 - angle.cos());
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// `max |RᵀR − I|` over all entries.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Colored points sharing one coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    frame: CoordFrame,
    points: Vec<Vector3<f64>>,
    colors: Vec<Rgb>,
}

impl PointCloud {
    pub fn new(frame: CoordFrame, points: Vec<Vector3<f64>>, colors: Vec<Rgb>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::Shape(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            )));
        }
        Ok(Self {
            frame,
            points,
            colors,
        })
    }

    pub fn empty(frame: CoordFrame) -> Self {
        Self {
            frame,
            points: Vec::new(),
            colors: Vec::new(),
        }
    }

    pub fn with_capacity(frame: CoordFrame, n: usize) -> Self {
        Self {
            frame,
            points: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, p: Vector3<f64>, color: Rgb) {
        self.points.push(p);
        self.colors.push(color);
    }

    pub fn frame(&self) -> CoordFrame {
        self.frame
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector3<f64>, &Rgb)> {
        self.points.iter().zip(self.colors.iter())
    }
}

#[inline]
fn unproject_unchecked(intr: &CameraIntrinsics, u: f64, v: f64, depth_mm: f64) -> Vector3<f64> {
    Vector3::new(
        (u - intr.cx) / intr.fx * depth_mm,
        (v - intr.cy) / intr.fy * depth_mm,
        depth_mm,
    )
}

/// Lifts a pixel with metric depth to a camera-frame point (inverse pinhole).
pub fn unproject_pixel(intr: &CameraIntrinsics, px: PixelCoord, depth_mm: f64) -> Result<Point3> {
    if !(px.u.is_finite() && px.v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pixel ({}, {}) is not finite",
            px.u, px.v
        )));
    }
    if !depth_mm.is_finite() || depth_mm < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "depth {depth_mm} must be finite and >= 0"
        )));
    }
    Ok(Point3 {
        coords: unproject_unchecked(intr, px.u, px.v, depth_mm),
        frame: CoordFrame::Camera,
    })
}

/// Forward pinhole projection; returns the pixel and the depth (camera z).
pub fn project_point(intr: &CameraIntrinsics, p: &Point3) -> Result<(PixelCoord, f64)> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument("point is not finite".into()));
    }
    let z = p.z();
    if z <= 0.0 {
        return Err(Error::BehindCamera(z));
    }
    let u = intr.fx * p.x() / z + intr.cx;
    let v = intr.fy * p.y() / z + intr.cy;
    Ok((PixelCoord { u, v }, z))
}

/// Maps a camera-frame point into the world frame: `R·p + T`.
pub fn transform_point(pose: &Pose, p: &Point3) -> Point3 {
    Point3 {
        coords: pose.apply(&p.coords),
        frame: CoordFrame::World,
    }
}

/// `(a ∘ b)(p) = a(b(p))`.
pub fn compose_pose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert_pose(a: &Pose) -> Pose {
    let rt = a.rotation.transpose();
    Pose {
        rotation: rt,
        translation: -(rt * a.translation),
    }
}

/// Unprojects every valid pixel on the `stride` lattice and maps it to the
/// world frame through `pose`. Points are emitted in row-major order.
pub fn unproject_frame(
    intr: &CameraIntrinsics,
    depth: &DepthFrame,
    color: Option<&ColorFrame>,
    pose: &Pose,
    stride: usize,
) -> Result<PointCloud> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    if depth.dims() != intr.dims() {
        return Err(Error::Shape(format!(
            "depth frame is {:?} but intrinsics describe {:?}",
            depth.dims(),
            intr.dims()
        )));
    }
    if let Some(c) = color {
        if c.dims() != depth.dims() {
            return Err(Error::Shape(format!(
                "color frame is {:?} but depth frame is {:?}",
                c.dims(),
                depth.dims()
            )));
        }
    }

    let (w, h) = depth.dims();
    let cols: Vec<(usize, f64)> = (0..w)
        .step_by(stride)
        .map(|x| (x, (x as f64 - intr.cx) / intr.fx))
        .collect();
    let mut cloud = PointCloud::with_capacity(CoordFrame::World, cols.len() * h.div_ceil(stride));
    let (r, t) = (pose.rotation(), pose.translation());
    for y in (0..h).step_by(stride) {
        let row = depth.row(y);
        let yn = (y as f64 - intr.cy) / intr.fy;
        for &(x, xn) in &cols {
            let d = row[x];
            if d == 0.0 {
                continue;
            }
            let p = Vector3::new(xn * d, yn * d, d);
            let rgb = color.map_or(WHITE, |c| c.get(x, y));
            cloud.push(r * p + t, rgb);
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;

    fn vga() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn rot_z(angle: f64, t: Vector3<f64>) -> Pose {
        Pose::from_axis_angle(Vector3::z(), angle, t).unwrap()
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, -0.1, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
    }

    #[test]
    fn upscaled_intrinsics_round_trip() {
        let lo = CameraIntrinsics::new(200.0, 210.0, 127.5, 95.5, 256, 192).unwrap();
        let hi = lo.upscaled(4).unwrap();
        assert_eq!((hi.width, hi.height), (1024, 768));
        assert_eq!(hi.cx, 511.5);
        assert_eq!(hi.downscaled(4).unwrap(), lo);
        assert!(hi.downscaled(3).is_err());
    }

    #[test]
    fn unproject_principal_point() {
        let p = unproject_pixel(&vga(), PixelCoord::new(320.0, 240.0), 1000.0).unwrap();
        assert_eq!(p.coords, Vector3::new(0.0, 0.0, 1000.0));
        assert_eq!(p.frame, CoordFrame::Camera);
    }

    #[test]
    fn unproject_zero_depth_is_origin() {
        let p = unproject_pixel(&vga(), PixelCoord::new(17.0, 400.0), 0.0).unwrap();
        assert_eq!(p.coords, Vector3::zeros());
    }

    #[test]
    fn unproject_off_axis() {
        // (820 − 320) · 2000 / 500 = 2000
        let p = unproject_pixel(&vga(), PixelCoord::new(820.0, 240.0), 2000.0).unwrap();
        assert_eq!(p.coords, Vector3::new(2000.0, 0.0, 2000.0));
    }

    #[test]
    fn unproject_rejects_non_finite() {
        let intr = vga();
        assert!(unproject_pixel(&intr, PixelCoord::new(1.0, 1.0), f64::NAN).is_err());
        assert!(unproject_pixel(&intr, PixelCoord::new(1.0, 1.0), -5.0).is_err());
        assert!(unproject_pixel(&intr, PixelCoord::new(f64::INFINITY, 1.0), 5.0).is_err());
    }

    #[test]
    fn project_examples() {
        let intr = vga();
        let (px, d) = project_point(&intr, &Point3::camera(0.0, 0.0, 1000.0)).unwrap();
        assert_eq!((px.u, px.v, d), (320.0, 240.0, 1000.0));
        let (px, d) = project_point(&intr, &Point3::camera(2000.0, 0.0, 2000.0)).unwrap();
        assert_eq!((px.u, px.v, d), (820.0, 240.0, 2000.0));
        assert!(matches!(
            project_point(&intr, &Point3::camera(1.0, 1.0, 0.0)),
            Err(Error::BehindCamera(_))
        ));
        assert!(matches!(
            project_point(&intr, &Point3::camera(1.0, 1.0, -3.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn transform_examples() {
        let p = Point3::camera(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Pose::identity(), &p).coords, p.coords);

        let q = transform_point(&rot_z(FRAC_PI_2, Vector3::zeros()), &Point3::camera(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(q.coords, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_eq!(q.frame, CoordFrame::World);

        let q = transform_point(
            &rot_z(FRAC_PI_2, Vector3::new(10.0, 0.0, 0.0)),
            &Point3::camera(1.0, 0.0, 0.0),
        );
        assert_abs_diff_eq!(q.coords, Vector3::new(10.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pose_rejects_reflection_and_shear() {
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
        let mut shear = Matrix3::identity();
        shear[(0, 1)] = 1e-3;
        assert!(Pose::new(shear, Vector3::zeros()).is_err());
    }

    #[test]
    fn compose_examples() {
        let b = rot_z(0.3, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(compose_pose(&Pose::identity(), &b), b);

        let half = rot_z(FRAC_PI_4, Vector3::zeros());
        let full = compose_pose(&half, &half);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(*full.rotation(), expected, epsilon = 1e-15);

        let a = Pose::from_axis_angle(Vector3::new(1.0, -2.0, 0.5), 1.1, Vector3::new(5.0, -7.0, 9.0))
            .unwrap();
        let id = compose_pose(&a, &invert_pose(&a));
        assert_abs_diff_eq!(*id.rotation(), Matrix3::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(*id.translation(), Vector3::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_pose(&Pose::identity()), Pose::identity());
        let t = Pose::from_translation(Vector3::new(0.0, 0.0, 5.0));
        assert_eq!(
            invert_pose(&t),
            Pose::from_translation(Vector3::new(0.0, 0.0, -5.0))
        );
    }

    #[test]
    fn unproject_frame_examples() {
        let intr = CameraIntrinsics::new(2.0, 2.0, 0.5, 0.5, 2, 2).unwrap();
        let empty = DepthFrame::filled(2, 2, 0.0).unwrap();
        assert!(unproject_frame(&intr, &empty, None, &Pose::identity(), 1)
            .unwrap()
            .is_empty());

        let one = DepthFrame::new(2, 2, vec![0.0, 0.0, 0.0, 800.0]).unwrap();
        let cloud = unproject_frame(&intr, &one, None, &Pose::identity(), 1).unwrap();
        let direct = unproject_pixel(&intr, PixelCoord::new(1.0, 1.0), 800.0).unwrap();
        assert_eq!(cloud.points(), &[direct.coords]);
        assert_eq!(cloud.colors(), &[WHITE]);

        let intr4 = CameraIntrinsics::new(2.0, 2.0, 1.5, 1.5, 4, 4).unwrap();
        let full = DepthFrame::filled(4, 4, 100.0).unwrap();
        let cloud = unproject_frame(&intr4, &full, None, &Pose::identity(), 2).unwrap();
        assert_eq!(cloud.len(), 4);
    }

    #[test]
    fn unproject_frame_samples_color_and_checks_shapes() {
        let intr = CameraIntrinsics::new(2.0, 2.0, 0.5, 0.5, 2, 2).unwrap();
        let depth = DepthFrame::new(2, 2, vec![10.0, 0.0, 20.0, 30.0]).unwrap();
        let color =
            ColorFrame::new(2, 2, vec![[1, 1, 1], [2, 2, 2], [3, 3, 3], [4, 4, 4]]).unwrap();
        let cloud = unproject_frame(&intr, &depth, Some(&color), &Pose::identity(), 1).unwrap();
        assert_eq!(cloud.colors(), &[[1, 1, 1], [3, 3, 3], [4, 4, 4]]);
        assert_eq!(cloud.points()[1].z, 20.0);

        let wrong = ColorFrame::filled(3, 2, WHITE).unwrap();
        assert!(matches!(
            unproject_frame(&intr, &depth, Some(&wrong), &Pose::identity(), 1),
            Err(Error::Shape(_))
        ));
        let small = DepthFrame::filled(1, 2, 5.0).unwrap();
        assert!(matches!(
            unproject_frame(&intr, &small, None, &Pose::identity(), 1),
            Err(Error::Shape(_))
        ));
        assert!(unproject_frame(&intr, &depth, None, &Pose::identity(), 0).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.2f64..3.2,
            prop::array::uniform3(-5000.0f64..5000.0),
        )
            .prop_filter_map("degenerate axis", |(axis, angle, t)| {
                Pose::from_axis_angle(Vector3::from(axis), angle, Vector3::from(t)).ok()
            })
    }

    proptest! {
        #[test]
        fn depth_linearity(u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.0f64..1e5) {
            let intr = vga();
            let px = PixelCoord::new(u, v);
            let a = unproject_pixel(&intr, px, d).unwrap().coords * 2.0;
            let b = unproject_pixel(&intr, px, 2.0 * d).unwrap().coords;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pose_isometry(pose in arb_pose(),
                         a in prop::array::uniform3(-1e4f64..1e4),
                         b in prop::array::uniform3(-1e4f64..1e4)) {
            let (a, b) = (Vector3::from(a), Vector3::from(b));
            let before = (a - b).norm();
            let after = (pose.apply(&a) - pose.apply(&b)).norm();
            prop_assert!((before - after).abs() <= 1e-6 * before.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn compose_matches_sequential_application(a in arb_pose(), b in arb_pose(),
                                                  p in prop::array::uniform3(-1e3f64..1e3)) {
            let p = Vector3::from(p);
            let direct = compose_pose(&a, &b).apply(&p);
            let seq = a.apply(&b.apply(&p));
            prop_assert!((direct - seq).amax() < 1e-8);
        }

        #[test]
        fn invert_round_trip(a in arb_pose(), p in prop::array::uniform3(-1e4f64..1e4)) {
            let p = Point3::camera(p[0], p[1], p[2]);
            let back = invert_pose(&a).apply(&transform_point(&a, &p).coords);
            prop_assert!((back - p.coords).amax() < 1e-9);
        }
    }
}
