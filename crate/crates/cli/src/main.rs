use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use voxfuse_core::depth::{fuse_depth, srcnn_upscale, upscale_bilinear, FusionConfig};
use voxfuse_core::io;
use voxfuse_core::pipeline::{bench, run_reconstruction, BenchOptions, Capture, PipelineConfig, ThroughputReport};
use voxfuse_core::synth::{synth_capture, SceneSpec};
use voxfuse_core::voxel::voxelize_mesh;
use voxfuse_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_FORMAT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_BELOW_THRESHOLD: u8 = 5;

#[derive(Parser)]
#[command(name = "voxfuse", version, about = "RGB-D depth fusion and voxel reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a capture into a PLY point cloud of voxel centers
    Reconstruct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        output: ReportFormat,
    },
    /// Measure pipeline throughput on a capture
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Exit with status 5 when throughput is below this many frames per second
        #[arg(long)]
        require_fps: Option<f64>,
        /// Read frames from disk inside the timed loop
        #[arg(long)]
        no_preload: bool,
        #[command(flatten)]
        output: ReportFormat,
    },
    /// Fuse a lidar and a truedepth frame of equal size
    Fuse {
        #[arg(long)]
        lidar: PathBuf,
        #[arg(long)]
        truedepth: PathBuf,
        #[arg(long = "conf-l", requires = "conf_t")]
        conf_l: Option<PathBuf>,
        #[arg(long = "conf-t", requires = "conf_l")]
        conf_t: Option<PathBuf>,
        /// Lidar weight in [0, 1]; ignored when confidences are given
        #[arg(long, default_value_t = 0.5)]
        weight: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Upscale a depth frame by an integer factor
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        factor: usize,
        #[command(flatten)]
        method: UpscaleMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxelize a triangle mesh given as "v x y z" and "f i j k" lines
    VoxelizeMesh {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        voxel_size: f64,
        #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
        origin: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic capture with analytic ground truth
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct UpscaleMethod {
    #[arg(long)]
    bilinear: bool,
    #[arg(long, value_name = "WEIGHTS")]
    srcnn: Option<PathBuf>,
}

#[derive(Args)]
struct ReportFormat {
    /// Print one key=value record per line instead of the table
    #[arg(long)]
    records: bool,
}

impl ReportFormat {
    fn print(&self, report: &ThroughputReport) {
        if self.records {
            print!("{}", report.to_records());
        } else {
            print!("{report}");
        }
    }
}

enum Failure {
    Core(Error),
    BelowThreshold { fps: f64, required: f64 },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Format { .. } | Error::Weights(_) | Error::EmptyCapture => EXIT_FORMAT,
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

fn write_depth(path: &Path, frame: &voxfuse_core::frame::DepthFrame) -> Result<(), Error> {
    io::write_file(path, io::write_depth_frame(frame))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Reconstruct {
            manifest,
            config,
            out,
            output,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let capture = Capture::load(&manifest)?;
            let report = run_reconstruction(&capture, &cfg, &out)?;
            output.print(&report.throughput);
            if !output.records {
                println!("wrote {} voxels to {}", report.throughput.occupied_cells, report.output.display());
            }
        }
        Command::Bench {
            manifest,
            config,
            warmup,
            repeat,
            require_fps,
            no_preload,
            output,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let capture = Capture::load(&manifest)?;
            let opts = BenchOptions {
                warmup,
                repeat,
                preload: !no_preload,
            };
            let report = bench(&capture, &cfg, &opts)?;
            output.print(&report);
            if let Some(required) = require_fps {
                if report.fps < required {
                    return Err(Failure::BelowThreshold {
                        fps: report.fps,
                        required,
                    });
                }
            }
        }
        Command::Fuse {
            lidar,
            truedepth,
            conf_l,
            conf_t,
            weight,
            out,
        } => {
            let l = io::load_depth_frame(&lidar)?;
            let t = io::load_depth_frame(&truedepth)?;
            let (cl, ct) = match (conf_l, conf_t) {
                (Some(a), Some(b)) => (Some(io::load_confidence_frame(&a)?), Some(io::load_confidence_frame(&b)?)),
                _ => (None, None),
            };
            let cfg = FusionConfig::new(weight, cl.is_some())?;
            let fused = fuse_depth(&l, &t, cl.as_ref(), ct.as_ref(), &cfg)?;
            write_depth(&out, &fused)?;
        }
        Command::Upscale {
            input,
            factor,
            method,
            out,
        } => {
            let frame = io::load_depth_frame(&input)?;
            let up = match method.srcnn {
                Some(w) => srcnn_upscale(&frame, &io::load_weights(&w)?, factor)?,
                None => upscale_bilinear(&frame, factor)?,
            };
            write_depth(&out, &up)?;
        }
        Command::VoxelizeMesh {
            mesh,
            voxel_size,
            origin,
            out,
        } => {
            let mesh = io::load_obj_mesh(&mesh)?;
            let origin = origin.map_or_else(Vector3::zeros, |o| Vector3::new(o[0], o[1], o[2]));
            let grid = voxelize_mesh(&mesh, voxel_size, origin)?;
            io::write_file(&out, io::write_ply(&grid.to_cloud()))?;
            println!("wrote {} voxels to {}", grid.occupied(), out.display());
        }
        Command::Synth { spec, out_dir } => {
            let spec = SceneSpec::parse(&io::read_text(&spec)?)?;
            let manifest = synth_capture(&spec, &out_dir)?;
            println!(
                "wrote {} frames to {}",
                manifest.frames.len(),
                out_dir.join("manifest.txt").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::BelowThreshold { fps, required }) => {
            eprintln!("throughput {fps:.2} fps is below the required {required:.2} fps");
            ExitCode::from(EXIT_BELOW_THRESHOLD)
        }
    }
}
