//! Per-frame reconstruction pipeline and throughput measurement.
//!
//! Stage order is fixed: upscale the lidar branch, fuse with the truedepth
//! branch, optionally rescale relative depth, unproject through the frame
//! pose, and accumulate into the voxel grid.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::depth::{
    fuse_depth, normalize_relative_to_metric, srcnn_upscale, upscale_bilinear, FusionConfig,
    SrcnnWeights, DEPTH_FULL_SCALE,
};
use crate::error::{Error, Result, Stage};
use crate::frame::{ColorFrame, ConfidenceFrame, DepthFrame, MaskFrame};
use crate::geometry::{unproject_frame, CameraIntrinsics, Pose};
use crate::io::{self, CaptureManifest, FrameEntry, KeyValues};
use crate::voxel::{VoxelGrid, DEFAULT_VOXEL_SIZE_MM};

#[derive(Debug, Clone, PartialEq)]
pub enum Upscaler {
    Bilinear,
    Srcnn {
        weights_path: PathBuf,
        weights: SrcnnWeights,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub z_near: f64,
    pub z_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub upscaler: Upscaler,
    pub upscale_factor: usize,
    pub fusion: FusionConfig,
    pub stride: usize,
    pub voxel_size: f64,
    pub grid_origin: Vector3<f64>,
    /// When set, fused depth is read as relative depth at 16-bit full scale
    /// and mapped to `[z_near, z_far]` millimeters.
    pub normalization: Option<Normalization>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            upscaler: Upscaler::Bilinear,
            upscale_factor: 4,
            fusion: FusionConfig::default(),
            stride: 1,
            voxel_size: DEFAULT_VOXEL_SIZE_MM,
            grid_origin: Vector3::zeros(),
            normalization: None,
        }
    }
}

const CONFIG_KEYS: [&str; 11] = [
    "upscaler",
    "weights",
    "upscale_factor",
    "lidar_weight",
    "use_confidence",
    "stride",
    "voxel_size",
    "grid_origin",
    "z_near",
    "z_far",
    "name",
];

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upscale_factor == 0 {
            return Err(Error::Config("upscale_factor must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(Error::Config(format!(
                "voxel_size must be positive, got {}",
                self.voxel_size
            )));
        }
        if !self.grid_origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("grid_origin must be finite".into()));
        }
        if let Some(n) = &self.normalization {
            if !(n.z_near > 0.0 && n.z_near < n.z_far && n.z_far.is_finite()) {
                return Err(Error::Config(format!(
                    "need 0 < z_near < z_far, got {} and {}",
                    n.z_near, n.z_far
                )));
            }
        }
        Ok(())
    }

    /// Parses a "key value" config file. A relative `weights` path is
    /// resolved against `base_dir` and the weights are loaded immediately.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.only(&CONFIG_KEYS)?;
        let mut cfg = PipelineConfig::default();
        let config_err = |key: &str, e: Error| {
            Error::Config(format!("line {}: {}", kv.line_of(key), e.root()))
        };

        match kv.get("upscaler").map(|(_, v)| v) {
            None | Some("bilinear") => {
                if kv.get("weights").is_some() {
                    return Err(Error::Config("weights given but upscaler is bilinear".into()));
                }
            }
            Some("srcnn") => {
                let (_, p) = kv.require("weights")?;
                let path = base_dir.join(p);
                let weights = io::load_weights(&path)?;
                cfg.upscaler = Upscaler::Srcnn {
                    weights_path: path,
                    weights,
                };
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "line {}: unknown upscaler {other:?}",
                    kv.line_of("upscaler")
                )))
            }
        }
        if let Some(f) = kv.u32("upscale_factor")? {
            cfg.upscale_factor = f as usize;
        }
        let lidar_weight = kv.f64("lidar_weight")?.unwrap_or(0.5);
        let use_conf = kv.bool("use_confidence")?.unwrap_or(false);
        cfg.fusion =
            FusionConfig::new(lidar_weight, use_conf).map_err(|e| config_err("lidar_weight", e))?;
        if let Some(s) = kv.u32("stride")? {
            cfg.stride = s as usize;
        }
        if let Some(v) = kv.f64("voxel_size")? {
            cfg.voxel_size = v;
        }
        if let Some(o) = kv.vec3("grid_origin")? {
            cfg.grid_origin = o;
        }
        cfg.normalization = match (kv.f64("z_near")?, kv.f64("z_far")?) {
            (Some(z_near), Some(z_far)) => Some(Normalization { z_near, z_far }),
            (None, None) => None,
            _ => return Err(Error::Config("z_near and z_far must be given together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }
}

/// Everything one frame contributes.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub lidar: DepthFrame,
    pub truedepth: Option<DepthFrame>,
    /// At lidar resolution (replicated up by the upscale factor) or at
    /// output resolution.
    pub conf_lidar: Option<ConfidenceFrame>,
    pub conf_truedepth: Option<ConfidenceFrame>,
    pub color: Option<ColorFrame>,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub io: Duration,
    pub upscale: Duration,
    pub fuse: Duration,
    pub unproject: Duration,
    pub voxelize: Duration,
}

impl StageTimings {
    pub fn get(&self, stage: Stage) -> Duration {
        match stage {
            Stage::Io => self.io,
            Stage::Upscale => self.upscale,
            Stage::Fuse | Stage::Normalize => self.fuse,
            Stage::Unproject => self.unproject,
            Stage::Voxelize => self.voxelize,
        }
    }

    pub fn total(&self) -> Duration {
        self.io + self.upscale + self.fuse + self.unproject + self.voxelize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameStats {
    pub points_inserted: u64,
    pub cells_touched: u64,
    pub timings: StageTimings,
}

fn replicate_levels(c: &ConfidenceFrame, factor: usize) -> Result<ConfidenceFrame> {
    let (w, h) = c.dims();
    let ow = w * factor;
    let mut out = Vec::with_capacity(ow * h * factor);
    for y in 0..h * factor {
        let row = &c.levels()[(y / factor) * w..][..w];
        out.extend((0..ow).map(|x| row[x / factor]));
    }
    ConfidenceFrame::new(ow, h * factor, out)
}

/// Owns the grid and applies frames to it in order.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    config: PipelineConfig,
    intrinsics: CameraIntrinsics,
    grid: VoxelGrid,
}

impl Reconstructor {
    /// `intrinsics` describe the output (upscaled) resolution.
    pub fn new(config: PipelineConfig, intrinsics: CameraIntrinsics) -> Result<Self> {
        config.validate()?;
        let grid = VoxelGrid::new(config.voxel_size, config.grid_origin)?;
        Ok(Self {
            config,
            intrinsics,
            grid,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn into_grid(self) -> VoxelGrid {
        self.grid
    }

    fn upscale(&self, frame: &DepthFrame) -> Result<DepthFrame> {
        let f = self.config.upscale_factor;
        match &self.config.upscaler {
            Upscaler::Bilinear => upscale_bilinear(frame, f),
            Upscaler::Srcnn { weights, .. } => srcnn_upscale(frame, weights, f),
        }
    }

    fn confidence_at_output(&self, c: Option<&ConfidenceFrame>, native: (usize, usize)) -> Result<Option<ConfidenceFrame>> {
        let Some(c) = c else { return Ok(None) };
        if c.dims() == self.intrinsics.dims() {
            Ok(Some(c.clone()))
        } else if c.dims() == native {
            replicate_levels(c, self.config.upscale_factor).map(Some)
        } else {
            Err(Error::Shape(format!(
                "confidence frame is {:?}, expected {:?} or {:?}",
                c.dims(),
                native,
                self.intrinsics.dims()
            )))
        }
    }

    /// Runs one frame through every stage. On error the grid is left as it
    /// was before the call.
    pub fn process_frame(&mut self, bundle: &FrameBundle) -> Result<FrameStats> {
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let upscaled = self.upscale(&bundle.lidar).map_err(|e| e.in_stage(Stage::Upscale))?;
        timings.upscale = t.elapsed();
        if upscaled.dims() != self.intrinsics.dims() {
            return Err(Error::Shape(format!(
                "upscaled lidar is {:?} but intrinsics describe {:?}",
                upscaled.dims(),
                self.intrinsics.dims()
            ))
            .in_stage(Stage::Upscale));
        }

        let t = Instant::now();
        let fused = match &bundle.truedepth {
            Some(td) => {
                let native = bundle.lidar.dims();
                let fuse = || {
                    let cl = self.confidence_at_output(bundle.conf_lidar.as_ref(), native)?;
                    let ct = self.confidence_at_output(bundle.conf_truedepth.as_ref(), native)?;
                    fuse_depth(&upscaled, td, cl.as_ref(), ct.as_ref(), &self.config.fusion)
                };
                fuse().map_err(|e| e.in_stage(Stage::Fuse))?
            }
            None => upscaled,
        };
        let depth = match &self.config.normalization {
            Some(n) => {
                let (w, h) = fused.dims();
                let valid = MaskFrame::new(
                    w,
                    h,
                    fused.samples().iter().map(|s| u8::from(*s != 0.0)).collect(),
                )?;
                let relative = DepthFrame::from_trusted(
                    w,
                    h,
                    fused.samples().iter().map(|s| s / DEPTH_FULL_SCALE).collect(),
                );
                normalize_relative_to_metric(&relative, n.z_near, n.z_far, Some(&valid))
                    .map_err(|e| e.in_stage(Stage::Normalize))?
            }
            None => fused,
        };
        timings.fuse = t.elapsed();

        let t = Instant::now();
        let cloud = unproject_frame(
            &self.intrinsics,
            &depth,
            bundle.color.as_ref(),
            &bundle.pose,
            self.config.stride,
        )
        .map_err(|e| e.in_stage(Stage::Unproject))?;
        timings.unproject = t.elapsed();

        let t = Instant::now();
        let stats = self
            .grid
            .insert_cloud(&cloud)
            .map_err(|e| e.in_stage(Stage::Voxelize))?;
        timings.voxelize = t.elapsed();

        Ok(FrameStats {
            points_inserted: stats.points_in,
            cells_touched: stats.cells_touched,
            timings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub frames_processed: u64,
    pub wall_seconds: f64,
    pub fps: f64,
    /// One entry per stage in [`Stage::TIMED`] order.
    pub stages: Vec<StageSummary>,
    pub points_inserted: u64,
    pub occupied_cells: u64,
}

impl ThroughputReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// One `key=value` record per line: a summary line then one per stage.
    pub fn to_records(&self) -> String {
        let mut out = format!(
            "summary frames={} wall_s={:.6} fps={:.3} points={} cells={}\n",
            self.frames_processed, self.wall_seconds, self.fps, self.points_inserted, self.occupied_cells
        );
        for s in &self.stages {
            out.push_str(&format!(
                "stage={} mean_ms={:.4} max_ms={:.4}\n",
                s.stage, s.mean_ms, s.max_ms
            ));
        }
        out
    }
}

impl fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames processed  {:>12}", self.frames_processed)?;
        writeln!(f, "wall time (s)     {:>12.3}", self.wall_seconds)?;
        writeln!(f, "throughput (fps)  {:>12.2}", self.fps)?;
        writeln!(f, "points inserted   {:>12}", self.points_inserted)?;
        writeln!(f, "occupied cells    {:>12}", self.occupied_cells)?;
        writeln!(f, "{:<10} {:>10} {:>10}", "stage", "mean ms", "max ms")?;
        for s in &self.stages {
            writeln!(f, "{:<10} {:>10.3} {:>10.3}", s.stage.name(), s.mean_ms, s.max_ms)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
struct StageAccumulator {
    sum: [Duration; 5],
    max: [Duration; 5],
    n: u64,
}

impl StageAccumulator {
    fn add(&mut self, t: &StageTimings) {
        for (i, s) in Stage::TIMED.iter().enumerate() {
            let d = t.get(*s);
            self.sum[i] += d;
            self.max[i] = self.max[i].max(d);
        }
        self.n += 1;
    }

    fn summaries(&self) -> Vec<StageSummary> {
        Stage::TIMED
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let max_ms = self.max[i].as_secs_f64() * 1e3;
                let mean_ms = if self.n == 0 {
                    0.0
                } else {
                    (self.sum[i].as_secs_f64() * 1e3 / self.n as f64).min(max_ms)
                };
                StageSummary {
                    stage: *s,
                    mean_ms,
                    max_ms,
                }
            })
            .collect()
    }
}

fn report(acc: &StageAccumulator, wall: Duration, points: u64, grid: &VoxelGrid) -> ThroughputReport {
    let wall_seconds = wall.as_secs_f64().max(f64::MIN_POSITIVE);
    ThroughputReport {
        frames_processed: acc.n,
        wall_seconds,
        fps: acc.n as f64 / wall_seconds,
        stages: acc.summaries(),
        points_inserted: points,
        occupied_cells: grid.occupied() as u64,
    }
}

/// Capture-level context shared by every frame of a manifest.
pub struct Capture {
    pub manifest: CaptureManifest,
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<Pose>,
}

impl Capture {
    pub fn open(manifest: CaptureManifest) -> Result<Self> {
        if manifest.frames.is_empty() {
            return Err(Error::EmptyCapture);
        }
        let intrinsics = io::load_intrinsics(&manifest.resolve(&manifest.intrinsics))?;
        let poses = io::load_pose_track(&manifest.resolve(&manifest.poses))?;
        Ok(Self {
            manifest,
            intrinsics,
            poses,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::open(io::load_manifest(path)?)
    }

    fn load_frame(&self, entry: &FrameEntry) -> Result<FrameBundle> {
        let m = &self.manifest;
        let read = || -> Result<FrameBundle> {
            let pose = *self.poses.get(entry.pose).ok_or_else(|| {
                Error::Config(format!(
                    "pose record {} is beyond the {}-pose track",
                    entry.pose,
                    self.poses.len()
                ))
            })?;
            let opt_depth = |p: &Option<PathBuf>| p.as_ref().map(|p| io::load_depth_frame(&m.resolve(p))).transpose();
            let opt_conf = |p: &Option<PathBuf>| p.as_ref().map(|p| io::load_confidence_frame(&m.resolve(p))).transpose();
            Ok(FrameBundle {
                lidar: io::load_depth_frame(&m.resolve(&entry.depth_lidar))?,
                truedepth: opt_depth(&entry.depth_truedepth)?,
                conf_lidar: opt_conf(&entry.conf_lidar)?,
                conf_truedepth: opt_conf(&entry.conf_truedepth)?,
                color: entry
                    .color
                    .as_ref()
                    .map(|p| io::load_color_frame(&m.resolve(p)))
                    .transpose()?,
                pose,
            })
        };
        read().map_err(|e| e.in_stage(Stage::Io).in_frame(entry.index))
    }

    /// Reads every frame of the capture into memory.
    pub fn preload(&self) -> Result<Vec<(u64, FrameBundle, Duration)>> {
        self.manifest
            .frames
            .iter()
            .map(|e| {
                let t = Instant::now();
                let b = self.load_frame(e)?;
                Ok((e.index, b, t.elapsed()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub throughput: ThroughputReport,
    pub output: PathBuf,
}

/// Processes every manifest frame in order and writes the voxel centers
/// as an ASCII PLY file.
pub fn run_reconstruction(capture: &Capture, cfg: &PipelineConfig, out: &Path) -> Result<ReconstructionReport> {
    let mut rec = Reconstructor::new(cfg.clone(), capture.intrinsics)?;
    let mut acc = StageAccumulator::default();
    let mut points = 0;
    let start = Instant::now();
    for entry in &capture.manifest.frames {
        let t = Instant::now();
        let bundle = capture.load_frame(entry)?;
        let io_time = t.elapsed();
        let mut stats = rec
            .process_frame(&bundle)
            .map_err(|e| e.in_frame(entry.index))?;
        stats.timings.io = io_time;
        acc.add(&stats.timings);
        points += stats.points_inserted;
    }
    let wall = start.elapsed();
    io::write_file(out, io::write_ply(&rec.grid().to_cloud()))?;
    Ok(ReconstructionReport {
        throughput: report(&acc, wall, points, rec.grid()),
        output: out.to_path_buf(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub repeat: usize,
    /// Read all frames before timing starts.
    pub preload: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            warmup: 2,
            repeat: 1,
            preload: true,
        }
    }
}

/// Runs the capture `repeat` times into one grid and reports throughput.
///
/// Warmup frames go through a scratch reconstructor and are not timed.
/// With preloading, `io` reports the preload read times and is excluded
/// from the wall clock.
pub fn bench(capture: &Capture, cfg: &PipelineConfig, opts: &BenchOptions) -> Result<ThroughputReport> {
    if opts.repeat == 0 {
        return Err(Error::Config("repeat must be >= 1".into()));
    }
    let frames = if opts.preload { Some(capture.preload()?) } else { None };
    let entries = &capture.manifest.frames;
    let mut acc = StageAccumulator::default();

    let mut scratch = Reconstructor::new(cfg.clone(), capture.intrinsics)?;
    for i in 0..opts.warmup {
        let e = &entries[i % entries.len()];
        let b = match &frames {
            Some(f) => f[i % f.len()].1.clone(),
            None => capture.load_frame(e)?,
        };
        scratch.process_frame(&b).map_err(|err| err.in_frame(e.index))?;
    }
    drop(scratch);

    let mut rec = Reconstructor::new(cfg.clone(), capture.intrinsics)?;
    let mut points = 0;
    let start = Instant::now();
    for _ in 0..opts.repeat {
        for (i, e) in entries.iter().enumerate() {
            let (stats, io_time) = match &frames {
                Some(f) => (rec.process_frame(&f[i].1), f[i].2),
                None => {
                    let t = Instant::now();
                    let b = capture.load_frame(e)?;
                    let io_time = t.elapsed();
                    (rec.process_frame(&b), io_time)
                }
            };
            let mut stats = stats.map_err(|err| err.in_frame(e.index))?;
            stats.timings.io = io_time;
            acc.add(&stats.timings);
            points += stats.points_inserted;
        }
    }
    let wall = start.elapsed();
    Ok(report(&acc, wall, points, rec.grid()))
}
