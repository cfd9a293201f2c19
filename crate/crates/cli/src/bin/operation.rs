use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use telementor::codec::Quality;
use telementor::geometry::CameraIntrinsics;
use telementor::operation::{
    run_operation_service, DirectorySource, DisparityMode, FrameSource, OperationConfig, Pacing,
    SyntheticSource,
};
use telementor::stereo::{BlockMatchParams, SceneSpec};
use telementor::transport::DEFAULT_PORT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Disparity {
    /// Ground truth when the source has it, block matching otherwise.
    Auto,
    GroundTruth,
    BlockMatch,
}

/// Operation-side service: captures stereo frames, streams colour + disparity
/// to a mentor and draws the guidance it sends back.
#[derive(Debug, Parser)]
#[command(name = "operation", version)]
struct Args {
    /// Synthetic scene description (.json) or a directory of left_/right_ PNG pairs.
    #[arg(long)]
    source: PathBuf,
    /// Camera calibration JSON {f, b, cx, cy, width, height}. Required for a
    /// directory source; overrides the scene's own calibration otherwise.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value_t = format!("0.0.0.0:{DEFAULT_PORT}"))]
    listen: String,
    /// JPEG quality 1-100, or "lossless" for PNG.
    #[arg(long, default_value = "90")]
    quality: Quality,
    /// Directory for annotated console frames.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frame statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Frames to replay from a synthetic scene.
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, value_enum, default_value_t = Disparity::Auto)]
    disparity: Disparity,
    /// Nearest depth (m) the block-matching search must reach.
    #[arg(long, default_value_t = 0.08)]
    min_depth: f64,
    /// Capture rate; 0 captures the next frame as soon as the previous
    /// one's guidance is on screen.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Seconds to wait for a mentor before the first capture; 0 starts at once.
    #[arg(long, default_value_t = 0.0)]
    wait_for_mentor: f64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let calib = args
        .calib
        .as_ref()
        .map(|p| {
            CameraIntrinsics::load(p)
                .with_context(|| format!("reading calibration {}", p.display()))
        })
        .transpose()?;

    let (source, has_truth): (Box<dyn FrameSource>, bool) = if args.source.is_dir() {
        let Some(intr) = calib else {
            bail!("--calib is required for a directory source");
        };
        let dir = DirectorySource::open(&args.source, intr)?;
        let truth = args
            .source
            .read_dir()?
            .flatten()
            .any(|e| e.file_name().to_string_lossy().starts_with("disp_"));
        (Box::new(dir), truth)
    } else {
        let mut spec = SceneSpec::load(&args.source)
            .with_context(|| format!("reading scene {}", args.source.display()))?;
        if let Some(intr) = calib {
            spec.intrinsics = intr;
        }
        (Box::new(SyntheticSource::new(&spec, args.frames)?), true)
    };

    let intr = *source.intrinsics();
    let block_match = || -> Result<DisparityMode> {
        Ok(DisparityMode::BlockMatch(BlockMatchParams::for_min_depth(
            &intr,
            args.min_depth,
        )?))
    };
    let disparity = match args.disparity {
        Disparity::GroundTruth => DisparityMode::GroundTruth,
        Disparity::BlockMatch => block_match()?,
        Disparity::Auto if has_truth => DisparityMode::GroundTruth,
        Disparity::Auto => block_match()?,
    };
    let pacing = if args.fps > 0.0 {
        Pacing::Fixed { fps: args.fps }
    } else {
        Pacing::Lockstep {
            timeout: Duration::from_secs(2),
        }
    };
    let config = OperationConfig {
        quality: args.quality,
        disparity,
        pacing,
        out_dir: args.out.clone(),
        stats_path: args.stats.clone(),
        wait_for_mentor: (args.wait_for_mentor > 0.0)
            .then(|| Duration::from_secs_f64(args.wait_for_mentor)),
        ..OperationConfig::default()
    };

    log::info!(
        "listening on {} ({}x{}, quality {})",
        args.listen,
        intr.width,
        intr.height,
        args.quality
    );
    let summary = run_operation_service(&args.listen, source, config)?;
    let closed: Vec<u64> = summary
        .frames
        .iter()
        .filter_map(|f| f.closed_loop_us)
        .collect();
    println!(
        "frames {} sent {} replaced {} feedback {} (malformed {}) sessions {} in {:.1?}",
        summary.frames.len(),
        summary.frames_sent,
        summary.frames_replaced,
        summary.feedback_received,
        summary.feedback_malformed,
        summary.mentor_sessions,
        summary.elapsed,
    );
    if !closed.is_empty() {
        let mean = closed.iter().sum::<u64>() as f64 / closed.len() as f64 / 1000.0;
        println!(
            "closed loop: {mean:.1} ms mean over {} frames",
            closed.len()
        );
    }
    if let Some(f) = summary.failure {
        bail!("service stopped early: {f}");
    }
    Ok(())
}
