use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::pipeline::{repose, reshape, transfer_clothing, AvatarScene, AvatarState, FramePose, IterationLog, RunConfig};
use crate::{Error, Result};

use super::{benchmark_config, evaluate, fit_dataset, generate_synthetic, plot, turn, Dataset, Manifest, MetricsReport, Stages, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "avatar", version, about = "Fit and animate clothed body avatars")]
struct Cli {
    /// worker threads for rendering and gradients (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// run configuration (TOML); defaults to the built-in benchmark configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AblateArg {
    PoseRefinement,
    Deformation,
    Mrf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic subject
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// standard deviation (radians) of the initial pose noise
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
    /// Fit an avatar to the training frames of a subject
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = StageArg::Both)]
        stage: StageArg,
        /// checkpoint to continue from (required for `--stage 2` alone)
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, value_enum)]
        ablate: Vec<AblateArg>,
    },
    /// Render one frame of a fitted avatar
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        avatar: PathBuf,
        /// index into the avatar's training frames
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// extra rotation about the vertical axis in degrees
        #[arg(long, default_value_t = 0.0)]
        yaw: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Render a fitted avatar in a new pose
    Repose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        avatar: PathBuf,
        /// JSON file with a frame pose (`theta`, `psi`, `camera`)
        #[arg(long)]
        pose: PathBuf,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Render a fitted avatar with new shape coefficients
    Reshape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        avatar: PathBuf,
        /// comma-separated shape coefficients
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Put the clothing of one avatar on the body of another
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        body: PathBuf,
        #[arg(long)]
        clothing: PathBuf,
    },
    /// Score renders of a fitted avatar against a subject's frames
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        avatar: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Draw loss curves and metric plots
    Plot {
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command, text)),
            Err(e) => Err(Error::Invalid(format!("thread pool: {e}"))),
        },
        None => execute(cli.command, text),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => benchmark_config(),
    };
    if let Some(s) = common.seed {
        cfg.schedule.seed = s;
    }
    Ok(cfg)
}

/// Manifest location next to a file output, or inside a directory output.
fn manifest_path(out: &Path) -> PathBuf {
    if out.extension().is_some() {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    } else {
        out.join("manifest.json")
    }
}

fn ensure_parent(out: &Path) -> Result<()> {
    if let Some(p) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

fn read_pose(path: &Path) -> Result<FramePose> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn render_to(scene: &AvatarScene, pose: &FramePose, size: usize, cfg: &RunConfig, out: &Path) -> Result<()> {
    ensure_parent(out)?;
    let r = scene.render(&pose.camera, size, size, &cfg.render, cfg.schedule.seed)?;
    r.image.save(out)?;
    let mut mask = out.to_path_buf();
    mask.set_file_name(format!("{}_clothing.png", out.file_stem().unwrap_or_default().to_string_lossy()));
    r.mask.save(&mask)
}

fn frame_pose(state: &AvatarState, frame: usize) -> Result<FramePose> {
    state.frames.get(frame).cloned().ok_or_else(|| Error::Invalid(format!("avatar has {} frames, asked for {frame}", state.frames.len())))
}

fn execute(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::Synth { out, seed, frames, size, noise } => {
            let spec = SynthSpec { frames, size, pose_noise: noise, ..SynthSpec::default() };
            let scene = generate_synthetic(&spec, seed)?;
            scene.save(&out)?;
            Manifest::new("synth", args, Some(seed), None)?.write(&manifest_path(&out))
        }
        Command::Fit { common, data, stage, resume, ablate } => {
            let mut cfg = load_config(&common)?;
            for a in ablate {
                match a {
                    AblateArg::PoseRefinement => cfg.ablation.pose_refinement = false,
                    AblateArg::Deformation => cfg.ablation.deformation = false,
                    AblateArg::Mrf => cfg.ablation.mrf = false,
                }
            }
            let stages = match stage {
                StageArg::One => Stages::One,
                StageArg::Two => Stages::Two,
                StageArg::Both => Stages::Both,
            };
            let resumed = match (&resume, stages) {
                (Some(p), _) => Some(AvatarState::load(p)?),
                (None, Stages::Two) => return Err(Error::Invalid("--stage 2 needs --resume with a stage-1 checkpoint".into())),
                (None, _) => None,
            };
            let dataset = Dataset::load(&data)?;
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
            let mut manifest = Manifest::new("fit", args, Some(cfg.schedule.seed), Some(&cfg))?;
            manifest.input(&data.join("scene.json"))?;
            manifest.input(&data.join("init.json"))?;
            if let Some(p) = &resume {
                manifest.input(p)?;
            }
            manifest.write(&manifest_path(&common.out))?;
            let outcome = fit_dataset(&dataset, &cfg, stages, resumed, Some(&common.out))?;
            if let Some(log) = outcome.logs.last() {
                log::info!("finished at iteration {} with loss {:.5}", log.iteration + 1, log.total);
            }
            match outcome.error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Render { common, avatar, frame, yaw, size } => {
            let cfg = load_config(&common)?;
            let state = AvatarState::load(&avatar)?;
            let mut pose = frame_pose(&state, frame)?;
            pose.theta = turn(&pose.theta, yaw.to_radians());
            let scene = AvatarScene::new(&state, &state.beta, &pose.theta, &pose.psi)?;
            render_to(&scene, &pose, size, &cfg, &common.out)?;
            let mut m = Manifest::new("render", args, Some(cfg.schedule.seed), Some(&cfg))?;
            m.input(&avatar)?;
            m.write(&manifest_path(&common.out))
        }
        Command::Repose { common, avatar, pose, size } => {
            let cfg = load_config(&common)?;
            let state = AvatarState::load(&avatar)?;
            let p = read_pose(&pose)?;
            render_to(&repose(&state, &p.theta)?, &p, size, &cfg, &common.out)?;
            let mut m = Manifest::new("repose", args, Some(cfg.schedule.seed), Some(&cfg))?;
            m.input(&avatar)?;
            m.input(&pose)?;
            m.write(&manifest_path(&common.out))
        }
        Command::Reshape { common, avatar, beta, frame, size } => {
            let cfg = load_config(&common)?;
            let state = AvatarState::load(&avatar)?;
            if beta.len() > state.beta.len() {
                return Err(Error::Invalid(format!("{} shape coefficients given, the body model has {}", beta.len(), state.beta.len())));
            }
            let mut b = state.beta.clone();
            b[..beta.len()].copy_from_slice(&beta);
            let pose = frame_pose(&state, frame)?;
            render_to(&reshape(&state, &b, &pose.theta)?, &pose, size, &cfg, &common.out)?;
            let mut m = Manifest::new("reshape", args, Some(cfg.schedule.seed), Some(&cfg))?;
            m.input(&avatar)?;
            m.write(&manifest_path(&common.out))
        }
        Command::Transfer { common, body, clothing } => {
            let out = transfer_clothing(&AvatarState::load(&body)?, &AvatarState::load(&clothing)?)?;
            ensure_parent(&common.out)?;
            out.save(&common.out)?;
            let mut m = Manifest::new("transfer", args, common.seed, None)?;
            m.input(&body)?;
            m.input(&clothing)?;
            m.write(&manifest_path(&common.out))
        }
        Command::Eval { common, data, avatar, split } => {
            let cfg = load_config(&common)?;
            let dataset = Dataset::load(&data)?;
            let state = AvatarState::load(&avatar)?;
            let frames = match split {
                SplitArg::Train => dataset.train_indices(),
                SplitArg::Test => dataset.test_indices(),
                SplitArg::All => (0..dataset.scene.frames.len()).collect(),
            };
            let (report, renders) = evaluate(&dataset, &state, &cfg.render, &frames, cfg.schedule.seed)?;
            let dir = &common.out;
            fs::create_dir_all(dir.join("renders"))?;
            for r in &renders {
                r.image.save(&dir.join("renders").join(format!("{:04}_{}.png", r.frame, r.split)))?;
            }
            report.write_csv(&dir.join("metrics.csv"))?;
            plot::plot_metrics(&report, &dir.join("psnr.svg"))?;
            let summary = Summary::from_report(&report);
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!("{}", serde_json::to_string(&summary)?);
            let mut m = Manifest::new("eval", args, Some(cfg.schedule.seed), Some(&cfg))?;
            m.input(&avatar)?;
            m.write(&manifest_path(dir))
        }
        Command::Plot { log, metrics, out } => {
            if log.is_none() && metrics.is_none() {
                return Err(Error::Invalid("plot needs --log and/or --metrics".into()));
            }
            fs::create_dir_all(&out)?;
            if let Some(p) = &log {
                plot::plot_losses(&IterationLog::read_csv(p)?, &out.join("losses.svg"))?;
            }
            if let Some(p) = &metrics {
                plot::plot_metrics(&MetricsReport::read_csv(p)?, &out.join("psnr.svg"))?;
            }
            Manifest::new("plot", args, None, None)?.write(&manifest_path(&out))
        }
    }
}

/// Split means written by `eval`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub train_psnr: Option<f64>,
    pub test_psnr: Option<f64>,
    pub train_ssim: Option<f64>,
    pub test_ssim: Option<f64>,
    pub test_leakage: Option<f64>,
}

impl Summary {
    pub fn from_report(r: &MetricsReport) -> Self {
        Self {
            train_psnr: r.mean_psnr("train"),
            test_psnr: r.mean_psnr("test"),
            train_ssim: r.mean_ssim("train"),
            test_ssim: r.mean_ssim("test"),
            test_leakage: r.mean_leakage("test"),
        }
    }
}
