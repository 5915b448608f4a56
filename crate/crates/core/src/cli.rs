//! Command-line front end.
//!
//! Every subcommand prints one JSON object on stdout when it succeeds. On
//! failure a single JSON line `{"error": kind, "message": ...}` goes to
//! stderr and the process exits nonzero: 2 for usage errors, 1 for
//! everything else.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::eval_metrics::{box_stats, fscore, rotation_error, sample_pairs, translation_error};
use crate::io::{encode_point_cloud_ply, read_grid, read_ply, write_bytes, FormatError};
use crate::io::{
    format_trajectory, intrinsics_to_json, read_intrinsics, read_png16, read_point_cloud,
    read_rimg, read_rimg_for, read_scene, read_trajectory, write_csv, write_grid, write_ply,
    write_png16, write_rimg, OrthonormalityPolicy, ReconstructionRow, RegistrationRow,
    TrajectoryEntry,
};
use crate::lidar_model::LidarIntrinsics;
use crate::mesh_extract::extract_mesh;
use crate::range_image::{from_point_cloud, to_point_cloud, RangeImage};
use crate::registration::{
    initial_translation_by_centroids, parse_schedule, register, RegistrationConfig, ScheduleLevel,
};
use crate::sdf_volume::{IntegrationConfig, VoxelBlockGrid, DEFAULT_TRUNCATION_MULTIPLIER};
use crate::synth::{render_scene_with, RenderOptions, Scene};
use crate::transform::{Point3, RigidTransform};

/// Environment variable supplying the default for `--threads`.
pub const THREADS_ENV: &str = "RANGEFUSE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rangefuse",
    version,
    about = "Range-image LiDAR registration and TSDF reconstruction"
)]
pub struct Cli {
    /// Parameter bundle for kernel size, clip distance and voxel size.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Outdoor)]
    pub preset: Preset,
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Seed for every random choice (pair sampling, synthetic noise).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Project slightly non-orthonormal trajectory rotations back onto SO(3)
    /// instead of rejecting the file.
    #[arg(long, global = true)]
    pub reorthonormalize: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Indoor,
    Outdoor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetValues {
    pub kernel: f64,
    pub clip_max: f64,
    pub voxel: f64,
}

impl Preset {
    pub fn values(self) -> PresetValues {
        match self {
            Preset::Indoor => PresetValues {
                kernel: 0.2,
                clip_max: 10.0,
                voxel: 0.04,
            },
            Preset::Outdoor => PresetValues {
                kernel: 0.5,
                clip_max: 30.0,
                voxel: 0.1,
            },
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between point clouds, range images and PLY point exports.
    Convert(ConvertArgs),
    /// Register one source range image against a destination image.
    Register(RegisterArgs),
    /// Chain frame-to-frame registration over a directory of range images.
    Odometry(OdometryArgs),
    /// Fuse a posed range-image sequence into a voxel block grid.
    Integrate(IntegrateArgs),
    /// Extract the zero-level triangle mesh of a voxel block grid.
    Mesh(MeshArgs),
    /// Registration error sweep over frame distances.
    EvalReg(EvalRegArgs),
    /// Precision, recall and F-score of a reconstruction.
    EvalRecon(EvalReconArgs),
    /// Render range images of a scene from a trajectory.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IntrinsicsArgs {
    /// Intrinsics JSON document.
    #[arg(long, conflicts_with_all = ["height", "width", "fov_min", "fov_max"])]
    pub intrinsics: Option<PathBuf>,
    /// Rows of synthetic intrinsics.
    #[arg(long, requires_all = ["width", "fov_min", "fov_max"])]
    pub height: Option<usize>,
    /// Columns of synthetic intrinsics.
    #[arg(long, requires_all = ["height", "fov_min", "fov_max"])]
    pub width: Option<usize>,
    /// Lower edge of the synthetic vertical field of view, degrees.
    #[arg(long, allow_hyphen_values = true, requires_all = ["height", "width", "fov_max"])]
    pub fov_min: Option<f64>,
    /// Upper edge of the synthetic vertical field of view, degrees.
    #[arg(long, allow_hyphen_values = true, requires_all = ["height", "width", "fov_min"])]
    pub fov_max: Option<f64>,
}

impl IntrinsicsArgs {
    /// The intrinsics named on the command line, if any.
    pub fn resolve(&self) -> Result<Option<LidarIntrinsics>, Failure> {
        if let Some(path) = &self.intrinsics {
            return Ok(Some(
                read_intrinsics(path).map_err(|e| Failure::at(e, path))?,
            ));
        }
        match (self.height, self.width, self.fov_min, self.fov_max) {
            (Some(h), Some(w), Some(lo), Some(hi)) => Ok(Some(LidarIntrinsics::synthetic(
                h,
                w,
                lo.to_radians(),
                hi.to_radians(),
            )?)),
            _ => Ok(None),
        }
    }

    fn require(&self) -> Result<LidarIntrinsics, Failure> {
        self.resolve()?.ok_or_else(|| {
            Failure::usage(
                "intrinsics required: pass --intrinsics or --height/--width/--fov-min/--fov-max",
            )
        })
    }

    /// Command-line intrinsics, else `intrinsics.json` inside `dir`.
    fn for_dir(&self, dir: &Path) -> Result<LidarIntrinsics, Failure> {
        if let Some(intr) = self.resolve()? {
            return Ok(intr);
        }
        let path = dir.join("intrinsics.json");
        read_intrinsics(&path).map_err(|e| Failure::at(e, &path))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClipArgs {
    /// Ranges below this are ignored, meters.
    #[arg(long, default_value_t = 0.0)]
    pub clip_min: f64,
    /// Ranges above this are ignored, meters (default: preset).
    #[arg(long)]
    pub clip_max: Option<f64>,
}

impl ClipArgs {
    fn range(&self, preset: PresetValues) -> Result<(f64, f64), Failure> {
        let max = self.clip_max.unwrap_or(preset.clip_max);
        if !(self.clip_min >= 0.0) || !(max > self.clip_min) {
            return Err(Failure::usage(format!(
                "clip range [{}, {max}] must satisfy 0 <= min < max",
                self.clip_min
            )));
        }
        Ok((self.clip_min, max))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegistrationArgs {
    /// Three-level pyramid 4:20,2:20,1:10.
    #[arg(long, conflicts_with = "iters")]
    pub multi_scale: bool,
    /// Full-resolution iterations of single-scale registration.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Explicit stride:iterations list, coarse to fine, e.g. 4:20,2:20,1:10.
    #[arg(long, conflicts_with_all = ["multi_scale", "iters"])]
    pub schedule: Option<String>,
    /// Pseudo-Huber kernel size and correspondence gate, meters (default: preset).
    #[arg(long)]
    pub kernel: Option<f64>,
}

impl RegistrationArgs {
    fn config(
        &self,
        preset: PresetValues,
        clip: (f64, f64),
    ) -> Result<RegistrationConfig, Failure> {
        let config = if let Some(s) = &self.schedule {
            RegistrationConfig::with_schedule(parse_schedule(s)?)
        } else if self.multi_scale {
            RegistrationConfig::multi_scale()
        } else {
            RegistrationConfig::with_schedule(vec![ScheduleLevel::new(1, self.iters)])
        };
        let mut config = config.with_kernel(self.kernel.unwrap_or(preset.kernel));
        config.clip_min = clip.0;
        config.clip_max = clip.1;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitMode {
    /// Translation aligning the two point-cloud centroids.
    Centroid,
    Identity,
    /// Last pose of the trajectory given by `--init-pose`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Rimg,
    Png16,
    Ply,
    Kitti,
}

impl InputFormat {
    fn from_path(path: &Path) -> Option<Self> {
        match extension(path).as_str() {
            "rimg" => Some(Self::Rimg),
            "png" => Some(Self::Png16),
            "ply" => Some(Self::Ply),
            "bin" => Some(Self::Kitti),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output path; `.rimg`, `.png` (16-bit millimeters) or `.ply` (points).
    #[arg(long)]
    pub out: PathBuf,
    /// Input format (default: from the extension).
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub dst: PathBuf,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    #[arg(long, value_enum, default_value_t = InitMode::Centroid)]
    pub init: InitMode,
    /// Trajectory file read by `--init file`.
    #[arg(long, required_if_eq("init", "file"))]
    pub init_pose: Option<PathBuf>,
    /// Trajectory receiving `0 identity` and `1 pose`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct OdometryArgs {
    /// Directory of `*.rimg` frames, processed in file-name order.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trajectory whose first pose anchors frame 0 (default: identity).
    #[arg(long)]
    pub first_pose: Option<PathBuf>,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// Frame-to-world poses; entry `i` belongs to the `i`-th frame of `--dir`.
    #[arg(long)]
    pub traj: PathBuf,
    /// Voxel edge length, meters (default: preset).
    #[arg(long)]
    pub voxel: Option<f64>,
    /// Truncation distance in voxels.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_MULTIPLIER)]
    pub trunc_mult: f64,
    /// Voxel weight cap (default: 100).
    #[arg(long)]
    pub max_weight: Option<f32>,
    /// Leave voxels far in front of the surface untouched.
    #[arg(long)]
    pub skip_free_space: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Corners below this weight count as unobserved.
    #[arg(long, default_value_t = crate::mesh_extract::DEFAULT_MIN_WEIGHT)]
    pub min_weight: f32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalRegArgs {
    /// Ground-truth frame-to-world poses, one per frame of `--dir`.
    #[arg(long)]
    pub traj_gt: PathBuf,
    #[arg(long)]
    pub dir: PathBuf,
    /// Frame distances: an inclusive range `a..b` or a list `1,5,10`.
    #[arg(long, default_value = "1..30")]
    pub distances: String,
    /// Pairs sampled per frame distance.
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    /// Per-pair CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Box statistics per distance (default: `<out>` with `.summary.csv`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InitMode::Identity)]
    pub init: InitMode,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct EvalReconArgs {
    /// Reconstructed mesh; its vertices are evaluated.
    #[arg(long, required_unless_present = "cloud", conflicts_with = "cloud")]
    pub mesh: Option<PathBuf>,
    /// Reconstructed point cloud (`.ply` or KITTI `.bin`).
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Ground-truth point cloud.
    #[arg(long)]
    pub gt: PathBuf,
    /// Correspondence threshold in voxels.
    #[arg(long, default_value_t = 3.0)]
    pub threshold_mult: f64,
    /// Voxel size the threshold is measured in (default: preset).
    #[arg(long)]
    pub voxel: Option<f64>,
    /// Absolute threshold in meters, overriding the two above.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Name in the `scene` column (default: reconstruction file stem).
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene JSON (default: built-in urban block).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Sensor-to-world poses, one frame per entry.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Additive Gaussian range noise, meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Returns beyond this range are dropped, meters.
    #[arg(long)]
    pub max_range: Option<f64>,
    /// Ground-truth points beyond this range are left out (default: preset clip).
    #[arg(long)]
    pub gt_range: Option<f64>,
    /// Ground-truth points are thinned to one per cube of this edge (default: half the preset voxel).
    #[arg(long)]
    pub gt_spacing: Option<f64>,
    /// Intrinsics (default: 128 x 1024, field of view -22.5 to 22.5 degrees).
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
}

/// A failed command: stable error kind, message and exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
            exit_code: 2,
        }
    }

    fn at(e: Error, path: &Path) -> Self {
        let mut f = Self::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
            exit_code: 1,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = serde_json::Value> = Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let f = Failure::usage(e.to_string().trim().to_string());
            eprintln!("{}", f.to_json());
            return f.exit_code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.exit_code
        }
    }
}

/// Runs a parsed command inside a thread pool sized by `--threads`.
pub fn execute(cli: &Cli) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CliResult {
    let preset = cli.preset.values();
    let policy = if cli.reorthonormalize {
        OrthonormalityPolicy::Reorthonormalize
    } else {
        OrthonormalityPolicy::Reject
    };
    let ctx = Context {
        preset,
        seed: cli.seed,
        policy,
    };
    match &cli.command {
        Command::Convert(a) => convert(&ctx, a),
        Command::Register(a) => register_pair(&ctx, a),
        Command::Odometry(a) => odometry(&ctx, a),
        Command::Integrate(a) => integrate(&ctx, a),
        Command::Mesh(a) => mesh(a),
        Command::EvalReg(a) => eval_reg(&ctx, a),
        Command::EvalRecon(a) => eval_recon(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

struct Context {
    preset: PresetValues,
    seed: u64,
    policy: OrthonormalityPolicy,
}

impl Context {
    fn trajectory(&self, path: &Path) -> CliResult<Vec<TrajectoryEntry>> {
        read_trajectory(path, self.policy).map_err(|e| Failure::at(e, path))
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// `*.rimg` files of `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::at(e.into(), dir))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::at(e.into(), dir))?.path();
        if path.is_file() && extension(&path) == "rimg" {
            frames.push(path);
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(Error::EmptyInput("no .rimg frames in directory").into());
    }
    Ok(frames)
}

fn load_frame(path: &Path, intr: &LidarIntrinsics) -> CliResult<RangeImage> {
    read_rimg_for(path, intr).map_err(|e| Failure::at(e, path))
}

fn pose_json(pose: &RigidTransform) -> serde_json::Value {
    json!(pose.to_rows_3x4().to_vec())
}

fn clip_image(img: &mut RangeImage, clip: (f64, f64)) {
    for v in 0..img.rows() {
        for u in 0..img.cols() {
            let r = img.get(v, u);
            if r > 0.0 && (r < clip.0 || r > clip.1) {
                img.set(v, u, 0.0);
            }
        }
    }
}

fn convert(ctx: &Context, a: &ConvertArgs) -> CliResult {
    let clip = a.clip.range(ctx.preset)?;
    let format = a
        .input_format
        .or_else(|| InputFormat::from_path(&a.input))
        .ok_or_else(|| {
            Failure::usage(format!("cannot infer the format of {}", a.input.display()))
        })?;
    let out_ext = extension(&a.out);
    let intr = a.intrinsics.resolve()?;

    enum Loaded {
        Image(RangeImage),
        Cloud(Vec<Point3>),
    }
    let loaded = match format {
        InputFormat::Rimg => {
            Loaded::Image(read_rimg(&a.input).map_err(|e| Failure::at(e, &a.input))?)
        }
        InputFormat::Png16 => {
            Loaded::Image(read_png16(&a.input).map_err(|e| Failure::at(e, &a.input))?)
        }
        InputFormat::Ply | InputFormat::Kitti => {
            let pts = if format == InputFormat::Ply {
                read_ply(&a.input)
                    .map_err(|e| Failure::at(e, &a.input))?
                    .vertices
            } else {
                read_point_cloud(&a.input).map_err(|e| Failure::at(e, &a.input))?
            };
            Loaded::Cloud(
                pts.into_iter()
                    .filter(|p| {
                        let r = p.norm();
                        r >= clip.0 && r <= clip.1
                    })
                    .collect(),
            )
        }
    };

    let mut summary = json!({ "command": "convert", "output": a.out.display().to_string() });
    match (loaded, out_ext.as_str()) {
        (Loaded::Cloud(pts), "rimg" | "png") => {
            let intr =
                intr.ok_or_else(|| Failure::usage("projecting a point cloud needs intrinsics"))?;
            let (img, stats) = from_point_cloud(&pts, &intr);
            write_image(&a.out, &img)?;
            summary["points"] = json!(pts.len());
            summary["projected"] = json!(stats.projected);
            summary["collisions"] = json!(stats.collisions);
            summary["out_of_fov"] = json!(stats.out_of_fov);
            summary["valid_pixels"] = json!(img.valid_count());
        }
        (Loaded::Cloud(pts), "ply") => {
            write_bytes(&a.out, &encode_point_cloud_ply(&pts))
                .map_err(|e| Failure::at(e, &a.out))?;
            summary["points"] = json!(pts.len());
        }
        (Loaded::Image(mut img), "rimg" | "png") => {
            if let Some(intr) = &intr {
                img.check_intrinsics(intr)?;
            }
            clip_image(&mut img, clip);
            write_image(&a.out, &img)?;
            summary["valid_pixels"] = json!(img.valid_count());
        }
        (Loaded::Image(img), "ply") => {
            let intr =
                intr.ok_or_else(|| Failure::usage("unprojecting a range image needs intrinsics"))?;
            let pts = to_point_cloud(&img, &intr, clip.0, clip.1)?;
            write_bytes(&a.out, &encode_point_cloud_ply(&pts))
                .map_err(|e| Failure::at(e, &a.out))?;
            summary["points"] = json!(pts.len());
        }
        (_, other) => {
            return Err(Failure::usage(format!(
                "unsupported output extension {other:?} (expected rimg, png or ply)"
            )))
        }
    }
    Ok(summary)
}

fn write_image(path: &Path, img: &RangeImage) -> CliResult<()> {
    let result = if extension(path) == "png" {
        write_png16(path, img)
    } else {
        write_rimg(path, img)
    };
    result.map_err(|e| Failure::at(e, path))
}

fn initial_pose(
    mode: InitMode,
    init_pose: Option<&Path>,
    ctx: &Context,
    src: &RangeImage,
    dst: &RangeImage,
    intr: &LidarIntrinsics,
    clip: (f64, f64),
) -> CliResult<RigidTransform> {
    match mode {
        InitMode::Identity => Ok(RigidTransform::identity()),
        InitMode::Centroid => {
            let s = to_point_cloud(src, intr, clip.0, clip.1)?;
            let d = to_point_cloud(dst, intr, clip.0, clip.1)?;
            Ok(initial_translation_by_centroids(&s, &d)?)
        }
        InitMode::File => {
            let path = init_pose.ok_or_else(|| Failure::usage("--init file needs --init-pose"))?;
            let entries = ctx.trajectory(path)?;
            entries
                .last()
                .map(|e| e.pose)
                .ok_or_else(|| Error::EmptyInput("initial pose trajectory is empty").into())
        }
    }
}

fn register_pair(ctx: &Context, a: &RegisterArgs) -> CliResult {
    let intr = a.intrinsics.require()?;
    let clip = a.clip.range(ctx.preset)?;
    let config = a.registration.config(ctx.preset, clip)?;
    let src = load_frame(&a.src, &intr)?;
    let dst = load_frame(&a.dst, &intr)?;
    let init = initial_pose(a.init, a.init_pose.as_deref(), ctx, &src, &dst, &intr, clip)?;
    let result = register(&src, &dst, &intr, &init, &config)?;
    if let Some(out) = &a.out {
        let entries = [
            TrajectoryEntry {
                index: 0,
                pose: RigidTransform::identity(),
            },
            TrajectoryEntry {
                index: 1,
                pose: result.pose,
            },
        ];
        write_bytes(out, format_trajectory(&entries).as_bytes())
            .map_err(|e| Failure::at(e, out))?;
    }
    let last = result.iterations.last();
    Ok(json!({
        "command": "register",
        "pose": pose_json(&result.pose),
        "converged": result.converged,
        "iterations": result.iterations.len(),
        "schedule": config.schedule.iter().map(|l| format!("{}:{}", l.stride, l.iterations)).collect::<Vec<_>>(),
        "correspondences": last.map_or(0, |s| s.correspondences),
        "inlier_rmse": last.map_or(0.0, |s| s.inlier_rmse),
        "elapsed_ms": result.elapsed_ms,
    }))
}

fn odometry(ctx: &Context, a: &OdometryArgs) -> CliResult {
    let frames = list_frames(&a.dir)?;
    let intr = a.intrinsics.for_dir(&a.dir)?;
    let clip = a.clip.range(ctx.preset)?;
    let config = a.registration.config(ctx.preset, clip)?;

    let origin = match &a.first_pose {
        Some(path) => ctx
            .trajectory(path)?
            .first()
            .map(|e| e.pose)
            .ok_or_else(|| Failure::from(Error::EmptyInput("first-pose trajectory is empty")))?,
        None => RigidTransform::identity(),
    };
    let mut entries = vec![TrajectoryEntry {
        index: 0,
        pose: origin,
    }];
    let mut prev = load_frame(&frames[0], &intr)?;
    // Constant-velocity prior: the last relative motion seeds the next pair.
    let mut velocity = RigidTransform::identity();
    let mut unconverged = 0usize;
    let mut total_ms = 0.0;
    for (i, path) in frames.iter().enumerate().skip(1) {
        let cur = load_frame(path, &intr)?;
        let result = register(&cur, &prev, &intr, &velocity, &config)?;
        if !result.converged {
            unconverged += 1;
            warn!("frame {i} ({}) did not converge", path.display());
        }
        total_ms += result.elapsed_ms;
        let pose = entries[i - 1].pose.compose(&result.pose);
        entries.push(TrajectoryEntry { index: i, pose });
        velocity = result.pose;
        prev = cur;
    }
    write_bytes(&a.out, format_trajectory(&entries).as_bytes())
        .map_err(|e| Failure::at(e, &a.out))?;
    Ok(json!({
        "command": "odometry",
        "frames": frames.len(),
        "unconverged": unconverged,
        "registration_ms": total_ms,
        "final_pose": pose_json(&entries[entries.len() - 1].pose),
    }))
}

fn integrate(ctx: &Context, a: &IntegrateArgs) -> CliResult {
    let frames = list_frames(&a.dir)?;
    let intr = a.intrinsics.for_dir(&a.dir)?;
    let clip = a.clip.range(ctx.preset)?;
    let trajectory = ctx.trajectory(&a.traj)?;
    let voxel = a.voxel.unwrap_or(ctx.preset.voxel);
    let mut grid = VoxelBlockGrid::new(voxel, a.trunc_mult * voxel)?;
    if let Some(w) = a.max_weight {
        grid = grid.with_max_weight(w)?;
    }
    let config = IntegrationConfig {
        clip_min: clip.0,
        clip_max: clip.1,
        update_free_space: !a.skip_free_space,
    };

    let mut updated = 0usize;
    for entry in &trajectory {
        let path = frames.get(entry.index).ok_or_else(|| {
            Failure::from(Error::InvalidConfig(format!(
                "trajectory index {} has no frame ({} frames in {})",
                entry.index,
                frames.len(),
                a.dir.display()
            )))
        })?;
        let img = load_frame(path, &intr)?;
        let points: Vec<Point3> = to_point_cloud(&img, &intr, clip.0, clip.1)?
            .iter()
            .map(|p| entry.pose.apply(p))
            .collect();
        let keys = grid.activate_blocks(&points, grid.truncation());
        updated += grid
            .integrate(&img, &intr, &entry.pose, &keys, &config)?
            .voxels_updated;
    }
    write_grid(&a.out, &grid).map_err(|e| Failure::at(e, &a.out))?;
    Ok(json!({
        "command": "integrate",
        "frames": trajectory.len(),
        "blocks": grid.block_count(),
        "voxel_updates": updated,
        "voxel_size": voxel,
        "truncation": grid.truncation(),
    }))
}

fn mesh(a: &MeshArgs) -> CliResult {
    let grid = read_grid(&a.grid).map_err(|e| Failure::at(e, &a.grid))?;
    let mesh = extract_mesh(&grid, a.min_weight);
    write_ply(&a.out, &mesh).map_err(|e| Failure::at(e, &a.out))?;
    Ok(json!({
        "command": "mesh",
        "vertices": mesh.vertices.len(),
        "triangles": mesh.triangles.len(),
    }))
}

/// Parses `a..b` (inclusive) or a comma-separated list of frame distances.
pub fn parse_distances(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || {
        Failure::usage(format!(
            "invalid frame distances {s:?}: expected a..b or a,b,c"
        ))
    };
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let out: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(parse).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    frame_distance: usize,
    metric: &'static str,
    count: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
}

fn eval_reg(ctx: &Context, a: &EvalRegArgs) -> CliResult {
    if a.init == InitMode::File {
        return Err(Failure::usage(
            "eval-reg supports --init identity or centroid",
        ));
    }
    let distances = parse_distances(&a.distances)?;
    let frames = list_frames(&a.dir)?;
    let intr = a.intrinsics.for_dir(&a.dir)?;
    let clip = a.clip.range(ctx.preset)?;
    let config = a.registration.config(ctx.preset, clip)?;
    let gt = ctx.trajectory(&a.traj_gt)?;
    let mut poses: Vec<Option<RigidTransform>> = vec![None; frames.len()];
    for e in &gt {
        if let Some(slot) = poses.get_mut(e.index) {
            *slot = Some(e.pose);
        }
    }
    let length = poses.iter().take_while(|p| p.is_some()).count();
    if length < frames.len() {
        warn!(
            "ground truth covers the first {length} of {} frames",
            frames.len()
        );
    }

    let mut cache: Vec<Option<RangeImage>> = vec![None; length];
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut medians = serde_json::Map::new();
    for &d in &distances {
        if d >= length {
            warn!("frame distance {d} skipped: only {length} posed frames");
            continue;
        }
        let pairs = sample_pairs(length, d, a.pairs, ctx.seed.wrapping_add(d as u64))?;
        let mut rot = Vec::with_capacity(pairs.len());
        let mut trans = Vec::with_capacity(pairs.len());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            for idx in [i, j] {
                if cache[idx].is_none() {
                    cache[idx] = Some(load_frame(&frames[idx], &intr)?);
                }
            }
            let (dst, src) = (cache[i].as_ref().unwrap(), cache[j].as_ref().unwrap());
            let init = initial_pose(a.init, None, ctx, src, dst, &intr, clip)?;
            let result = register(src, dst, &intr, &init, &config)?;
            let truth = poses[i].unwrap().inverse().compose(&poses[j].unwrap());
            let re = rotation_error(&result.pose.rotation, &truth.rotation);
            let te = translation_error(&result.pose.translation, &truth.translation);
            rot.push(re);
            trans.push(te);
            rows.push(RegistrationRow {
                frame_distance: d,
                pair_index: k,
                rot_err_rad: re,
                trans_err_m: te,
                converged: result.converged,
                iters: result.iterations.len(),
                runtime_ms: result.elapsed_ms,
            });
        }
        for (metric, values) in [("rot_err_rad", &rot), ("trans_err_m", &trans)] {
            if let Some(b) = box_stats(values) {
                summary.push(SummaryRow {
                    frame_distance: d,
                    metric,
                    count: b.count,
                    min: b.min,
                    q1: b.q1,
                    median: b.median,
                    q3: b.q3,
                    max: b.max,
                    mean: b.mean,
                });
            }
        }
        if let (Some(r), Some(t)) = (box_stats(&rot), box_stats(&trans)) {
            medians.insert(
                d.to_string(),
                json!({ "rot_err_rad": r.median, "trans_err_m": t.median }),
            );
        }
    }
    write_csv(&a.out, &rows).map_err(|e| Failure::at(e, &a.out))?;
    let summary_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.out.with_extension("summary.csv"));
    write_csv(&summary_path, &summary).map_err(|e| Failure::at(e, &summary_path))?;
    Ok(json!({
        "command": "eval-reg",
        "pairs": rows.len(),
        "summary": summary_path.display().to_string(),
        "median": medians,
    }))
}

fn eval_recon(ctx: &Context, a: &EvalReconArgs) -> CliResult {
    let (path, recon) = match (&a.mesh, &a.cloud) {
        (Some(m), _) => (m, read_ply(m).map_err(|e| Failure::at(e, m))?.vertices),
        (None, Some(c)) => (c, read_point_cloud(c).map_err(|e| Failure::at(e, c))?),
        (None, None) => return Err(Failure::usage("pass --mesh or --cloud")),
    };
    let gt = read_point_cloud(&a.gt).map_err(|e| Failure::at(e, &a.gt))?;
    let threshold = a
        .threshold
        .unwrap_or(a.threshold_mult * a.voxel.unwrap_or(ctx.preset.voxel));
    let score = fscore(&recon, &gt, threshold)?;
    let scene = a.scene.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    if let Some(out) = &a.out {
        let row = ReconstructionRow {
            scene: scene.clone(),
            precision: score.precision,
            recall: score.recall,
            fscore: score.fscore,
            threshold_m: threshold,
        };
        write_csv(out, &[row]).map_err(|e| Failure::at(e, out))?;
    }
    Ok(json!({
        "command": "eval-recon",
        "scene": scene,
        "precision": score.precision,
        "recall": score.recall,
        "fscore": score.fscore,
        "f1": score.f1(),
        "threshold_m": threshold,
        "recon_points": recon.len(),
        "gt_points": gt.len(),
    }))
}

/// Default intrinsics of `synth`: 128 rows, 1024 columns, ±22.5°.
pub fn default_synth_intrinsics() -> LidarIntrinsics {
    LidarIntrinsics::synthetic(128, 1024, (-22.5f64).to_radians(), 22.5f64.to_radians())
        .expect("valid built-in intrinsics")
}

fn synth(ctx: &Context, a: &SynthArgs) -> CliResult {
    let scene = match &a.scene {
        Some(p) => read_scene(p).map_err(|e| Failure::at(e, p))?,
        None => Scene::urban_block(),
    };
    let intr = a
        .intrinsics
        .resolve()?
        .unwrap_or_else(default_synth_intrinsics);
    let poses = ctx.trajectory(&a.poses)?;
    if poses.is_empty() {
        return Err(Error::EmptyInput("trajectory has no poses").into());
    }
    let gt_range = a.gt_range.unwrap_or(ctx.preset.clip_max);
    let spacing = a.gt_spacing.unwrap_or(0.5 * ctx.preset.voxel);
    if !(spacing > 0.0) || !(a.noise_sigma >= 0.0) {
        return Err(Failure::usage(
            "--gt-spacing must be positive and --noise-sigma non-negative",
        ));
    }
    fs::create_dir_all(&a.out).map_err(|e| Failure::at(e.into(), &a.out))?;

    let clean = RenderOptions {
        noise_sigma: 0.0,
        seed: 0,
        max_range: a.max_range.unwrap_or(f64::INFINITY),
    };
    let mut seen: HashSet<[i64; 3]> = HashSet::new();
    let mut gt_points = Vec::new();
    let mut reindexed = Vec::with_capacity(poses.len());
    for (k, entry) in poses.iter().enumerate() {
        let img = render_scene_with(&scene, &intr, &entry.pose, &clean)?;
        for p in to_point_cloud(&img, &intr, 0.0, gt_range)? {
            let w = entry.pose.apply(&p);
            let cell = [
                (w.x / spacing).floor() as i64,
                (w.y / spacing).floor() as i64,
                (w.z / spacing).floor() as i64,
            ];
            if seen.insert(cell) {
                gt_points.push(w);
            }
        }
        let frame = if a.noise_sigma > 0.0 {
            let noisy = RenderOptions {
                noise_sigma: a.noise_sigma,
                seed: ctx.seed.wrapping_add(k as u64),
                ..clean
            };
            render_scene_with(&scene, &intr, &entry.pose, &noisy)?
        } else {
            img
        };
        let path = a.out.join(format!("frame_{k:06}.rimg"));
        write_rimg(&path, &frame).map_err(|e| Failure::at(e, &path))?;
        reindexed.push(TrajectoryEntry {
            index: k,
            pose: entry.pose,
        });
    }
    let intr_path = a.out.join("intrinsics.json");
    write_bytes(&intr_path, intrinsics_to_json(&intr).as_bytes())
        .map_err(|e| Failure::at(e, &intr_path))?;
    let poses_path = a.out.join("poses.txt");
    write_bytes(&poses_path, format_trajectory(&reindexed).as_bytes())
        .map_err(|e| Failure::at(e, &poses_path))?;
    let gt_path = a.out.join("gt.ply");
    write_bytes(&gt_path, &encode_point_cloud_ply(&gt_points))
        .map_err(|e| Failure::at(e, &gt_path))?;
    Ok(json!({
        "command": "synth",
        "frames": poses.len(),
        "gt_points": gt_points.len(),
        "output": a.out.display().to_string(),
    }))
}
