//! Sparse colored voxel grid.
//!
//! Cells are half-open boxes `[i·s, (i+1)·s)` offset by the grid origin.
//! Colors accumulate as integer sums so the grid contents do not depend on
//! insertion order; means are rounded half-up when read.

use nalgebra::Vector3;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame, MaskFrame, Rgb, WHITE};
use crate::geometry::{unproject_frame, CameraIntrinsics, CoordFrame, Point3, PointCloud, Pose};

pub const DEFAULT_VOXEL_SIZE_MM: f64 = 5.0;

/// Integer cell coordinates `(i, j, k)`.
pub type VoxelIndex = [i64; 3];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Accumulator {
    pub count: u64,
    pub sum_r: u64,
    pub sum_g: u64,
    pub sum_b: u64,
}

impl Accumulator {
    #[inline]
    fn add(&mut self, c: Rgb) {
        self.count += 1;
        self.sum_r += c[0] as u64;
        self.sum_g += c[1] as u64;
        self.sum_b += c[2] as u64;
    }

    fn remove(&mut self, c: Rgb) {
        self.count -= 1;
        self.sum_r -= c[0] as u64;
        self.sum_g -= c[1] as u64;
        self.sum_b -= c[2] as u64;
    }

    #[inline]
    fn absorb(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum_r += other.sum_r;
        self.sum_g += other.sum_g;
        self.sum_b += other.sum_b;
    }

    /// Mean color, rounded half-up.
    pub fn mean(&self) -> Rgb {
        let n = self.count.max(1);
        let round = |s: u64| ((2 * s + n) / (2 * n)).min(255) as u8;
        [round(self.sum_r), round(self.sum_g), round(self.sum_b)]
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    acc: Accumulator,
    /// Last `insert_cloud` batch that touched this cell.
    batch: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub points_in: u64,
    pub cells_touched: u64,
}

#[derive(Debug, Clone)]
pub struct VoxelGrid {
    voxel_size: f64,
    origin: Vector3<f64>,
    cells: FxHashMap<VoxelIndex, Cell>,
    batch: u64,
}

impl PartialEq for VoxelGrid {
    fn eq(&self, other: &Self) -> bool {
        self.voxel_size == other.voxel_size
            && self.origin == other.origin
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .all(|(k, c)| other.cells.get(k).is_some_and(|o| o.acc == c.acc))
    }
}

impl VoxelGrid {
    pub fn new(voxel_size: f64, origin: Vector3<f64>) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(Self {
            voxel_size,
            origin,
            cells: FxHashMap::default(),
            batch: 0,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> &Vector3<f64> {
        &self.origin
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Sum of all cell counts.
    pub fn total_count(&self) -> u64 {
        self.cells.values().map(|c| c.acc.count).sum()
    }

    pub fn get(&self, index: &VoxelIndex) -> Option<&Accumulator> {
        self.cells.get(index).map(|c| &c.acc)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&VoxelIndex, &Accumulator)> {
        self.cells.iter().map(|(k, c)| (k, &c.acc))
    }

    /// `floor((p − origin) / voxel_size)` per component.
    #[inline]
    pub fn index_of(&self, p: &Vector3<f64>) -> VoxelIndex {
        let (s, inv, o) = (self.voxel_size, 1.0 / self.voxel_size, &self.origin);
        [
            axis_index(p.x - o.x, s, inv),
            axis_index(p.y - o.y, s, inv),
            axis_index(p.z - o.z, s, inv),
        ]
    }

    pub fn cell_center(&self, index: &VoxelIndex) -> Vector3<f64> {
        let s = self.voxel_size;
        Vector3::new(
            self.origin.x + (index[0] as f64 + 0.5) * s,
            self.origin.y + (index[1] as f64 + 0.5) * s,
            self.origin.z + (index[2] as f64 + 0.5) * s,
        )
    }

    pub fn insert_point(&mut self, p: &Point3, color: Rgb) -> Result<()> {
        check_finite(&p.coords)?;
        let key = self.index_of(&p.coords);
        self.cells
            .entry(key)
            .or_insert(Cell {
                acc: Accumulator::default(),
                batch: 0,
            })
            .acc
            .add(color);
        Ok(())
    }

    /// Inserts every point of `cloud` in order. Fails without changing the
    /// grid if any point is non-finite.
    pub fn insert_cloud(&mut self, cloud: &PointCloud) -> Result<InsertStats> {
        self.batch += 1;
        let batch = self.batch;
        let (points, colors) = (cloud.points(), cloud.colors());
        let (size, inv, o) = (self.voxel_size, 1.0 / self.voxel_size, self.origin);
        let mut touched = 0u64;

        // Runs of consecutive points in one cell are summed before the hash
        // lookup. An axis keeps its index while the scaled coordinate stays
        // inside `lo..hi`, a box shrunk well past the rounding slack of
        // `axis_index`, or while the coordinate repeats exactly.
        let mut key: VoxelIndex = [0; 3];
        let mut acc = Accumulator::default();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut last = [f64::NAN; 3];
        let mut run_start = 0;
        for (i, (p, c)) in points.iter().zip(colors).enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                self.rollback(&points[..run_start], &colors[..run_start]);
                return Err(Error::InvalidArgument(format!("non-finite point {p:?}")));
            }
            let r = [p.x - o.x, p.y - o.y, p.z - o.z];
            let mut same = [false; 3];
            for a in 0..3 {
                let q = r[a] * inv;
                same[a] = (q > lo[a] && q < hi[a]) || r[a] == last[a];
            }
            if same[0] && same[1] && same[2] {
                acc.add(*c);
                continue;
            }
            let mut k = key;
            for a in 0..3 {
                if !same[a] {
                    k[a] = axis_index(r[a], size, inv);
                    last[a] = r[a];
                    let kf = k[a] as f64;
                    let m = (kf.abs() + 1.0) * 1e-13 + 1e-300;
                    lo[a] = kf + m;
                    hi[a] = kf + 1.0 - m;
                }
            }
            if acc.count > 0 && k == key {
                acc.add(*c);
                continue;
            }
            if acc.count > 0 {
                touched += self.absorb(key, &acc, batch) as u64;
            }
            key = k;
            acc = Accumulator::default();
            acc.add(*c);
            run_start = i;
        }
        if acc.count > 0 {
            touched += self.absorb(key, &acc, batch) as u64;
        }
        Ok(InsertStats {
            points_in: cloud.len() as u64,
            cells_touched: touched,
        })
    }

    /// Returns whether this is the first touch of the cell in `batch`.
    #[inline]
    fn absorb(&mut self, key: VoxelIndex, acc: &Accumulator, batch: u64) -> bool {
        let cell = self.cells.entry(key).or_insert(Cell {
            acc: Accumulator::default(),
            batch: 0,
        });
        cell.acc.absorb(acc);
        std::mem::replace(&mut cell.batch, batch) != batch
    }

    /// Exact inverse of inserting `points`; sums are integers.
    fn rollback(&mut self, points: &[Vector3<f64>], colors: &[Rgb]) {
        for (p, c) in points.iter().zip(colors) {
            let key = self.index_of(p);
            let cell = self.cells.get_mut(&key).expect("inserted cell");
            cell.acc.remove(*c);
            if cell.acc.count == 0 {
                self.cells.remove(&key);
            }
        }
    }

    /// Cellwise sum of `other` into `self`. Both grids must share voxel size
    /// and origin.
    pub fn merge(&mut self, other: &VoxelGrid) -> Result<()> {
        if self.voxel_size != other.voxel_size || self.origin != other.origin {
            return Err(Error::InvalidArgument(
                "cannot merge grids with different geometry".into(),
            ));
        }
        for (k, c) in &other.cells {
            self.cells
                .entry(*k)
                .or_insert(Cell {
                    acc: Accumulator::default(),
                    batch: 0,
                })
                .acc
                .absorb(&c.acc);
        }
        Ok(())
    }

    /// One point per occupied cell at the cell center, colored with the
    /// rounded mean, ordered by ascending `(k, j, i)`.
    pub fn to_cloud(&self) -> PointCloud {
        let mut keys: Vec<&VoxelIndex> = self.cells.keys().collect();
        keys.sort_unstable_by_key(|k| (k[2], k[1], k[0]));
        let mut cloud = PointCloud::with_capacity(CoordFrame::World, keys.len());
        for k in keys {
            cloud.push(self.cell_center(k), self.cells[k].acc.mean());
        }
        cloud
    }
}

fn check_finite(p: &Vector3<f64>) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite point {p:?}")))
    }
}

/// `floor(r / size)` as computed with a true division. The reciprocal
/// product differs from the quotient by a few ulps, so its floor is used
/// unless it lies within that distance of an integer.
#[inline]
fn axis_index(r: f64, size: f64, inv: f64) -> i64 {
    let q = r * inv;
    let k = floor_i64(q);
    let kf = k as f64;
    let margin = q.abs() * 1e-14 + f64::MIN_POSITIVE;
    if q - kf > margin && kf + 1.0 - q > margin {
        k
    } else {
        floor_i64(r / size)
    }
}

/// `v.floor() as i64` without the libm call on targets lacking a rounding
/// instruction. Truncation toward zero is corrected for negative fractions.
#[inline]
fn floor_i64(v: f64) -> i64 {
    let t = v as i64;
    if (t as f64) > v {
        t.saturating_sub(1)
    } else {
        t
    }
}

pub fn voxel_index(grid: &VoxelGrid, p: &Point3) -> VoxelIndex {
    grid.index_of(&p.coords)
}

pub fn grid_to_cloud(grid: &VoxelGrid) -> PointCloud {
    grid.to_cloud()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    vertex_colors: Option<Vec<Rgb>>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        vertex_colors: Option<Vec<Rgb>>,
    ) -> Result<Self> {
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite vertex {v:?}")));
        }
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|i| *i >= vertices.len()))
        {
            return Err(Error::InvalidArgument(format!(
                "triangle {t} references {tri:?} but there are {} vertices",
                vertices.len()
            )));
        }
        if let Some(c) = &vertex_colors {
            if c.len() != vertices.len() {
                return Err(Error::Shape(format!(
                    "{} vertex colors for {} vertices",
                    c.len(),
                    vertices.len()
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            vertex_colors,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    fn color(&self, i: usize) -> Rgb {
        self.vertex_colors.as_ref().map_or(WHITE, |c| c[i])
    }
}

/// Rasterizes a mesh into a fresh grid by barycentric supersampling.
///
/// Each triangle is sampled on a lattice fine enough that every lattice
/// edge is at most half a voxel long, so every surface point lies within
/// half a voxel of a sample and hence within one cell of an occupied cell.
/// Zero-area triangles contribute their vertices only.
pub fn voxelize_mesh(mesh: &TriangleMesh, voxel_size: f64, origin: Vector3<f64>) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::new(voxel_size, origin)?;
    let step = voxel_size / 2.0;
    for tri in &mesh.triangles {
        let [a, b, c] = tri.map(|i| mesh.vertices[i]);
        let cols = tri.map(|i| mesh.color(i));
        let e1 = b - a;
        let e2 = c - a;
        let area2 = e1.cross(&e2).norm();
        if area2 <= 1e-12 * e1.norm() * e2.norm() || area2 == 0.0 {
            for (v, col) in [a, b, c].iter().zip(cols) {
                grid.insert_point(&world(*v), col)?;
            }
            continue;
        }
        let longest = e1.norm().max(e2.norm()).max((c - b).norm());
        let n = ((longest / step).ceil() as usize).max(1);
        let nf = n as f64;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let w1 = i as f64 / nf;
                let w2 = j as f64 / nf;
                let w0 = (n - i - j) as f64 / nf;
                // weights exactly 0/1 at the corners reproduce the vertices bit-for-bit
                let p = a * w0 + b * w1 + c * w2;
                grid.insert_point(&world(p), blend_color(&cols, [w0, w1, w2]))?;
            }
        }
    }
    Ok(grid)
}

fn world(p: Vector3<f64>) -> Point3 {
    Point3 {
        coords: p,
        frame: CoordFrame::World,
    }
}

fn blend_color(cols: &[Rgb; 3], w: [f64; 3]) -> Rgb {
    let mut out = [0u8; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let v: f64 = (0..3).map(|k| w[k] * cols[k][ch] as f64).sum();
        *o = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// How [`composite_background`] decides which pixels are background.
/// Exactly one of the two fields must be set.
#[derive(Debug, Clone, Copy, Default)]
pub struct BackgroundSelector<'a> {
    /// Zero mask values are background.
    pub mask: Option<&'a MaskFrame>,
    /// Pixels deeper than this many millimeters are background.
    pub depth_threshold: Option<f64>,
}

impl<'a> BackgroundSelector<'a> {
    pub fn mask(mask: &'a MaskFrame) -> Self {
        Self {
            mask: Some(mask),
            depth_threshold: None,
        }
    }

    pub fn threshold(mm: f64) -> Self {
        Self {
            mask: None,
            depth_threshold: Some(mm),
        }
    }
}

/// Unprojects the valid background pixels of a frame into the grid.
pub fn composite_background(
    grid: &mut VoxelGrid,
    depth: &DepthFrame,
    color: &ColorFrame,
    selector: &BackgroundSelector<'_>,
    intr: &CameraIntrinsics,
    pose: &Pose,
) -> Result<InsertStats> {
    let dims = depth.dims();
    if color.dims() != dims {
        return Err(Error::Shape(format!(
            "color frame is {:?} but depth frame is {:?}",
            color.dims(),
            dims
        )));
    }
    let background: Vec<f64> = match (selector.mask, selector.depth_threshold) {
        (Some(mask), None) => {
            if mask.dims() != dims {
                return Err(Error::Shape(format!(
                    "mask is {:?} but depth frame is {:?}",
                    mask.dims(),
                    dims
                )));
            }
            depth
                .samples()
                .iter()
                .zip(mask.values())
                .map(|(d, m)| if *m == 0 { *d } else { 0.0 })
                .collect()
        }
        (None, Some(t)) => {
            if t.is_nan() {
                return Err(Error::Config("depth threshold is NaN".into()));
            }
            depth
                .samples()
                .iter()
                .map(|d| if *d > t { *d } else { 0.0 })
                .collect()
        }
        (None, None) => {
            return Err(Error::Config(
                "background compositing needs a mask or a depth threshold".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either a mask or a depth threshold, not both".into(),
            ))
        }
    };
    let background = DepthFrame::from_trusted(dims.0, dims.1, background);
    let cloud = unproject_frame(intr, &background, Some(color), pose, 1)?;
    grid.insert_cloud(&cloud)
}
