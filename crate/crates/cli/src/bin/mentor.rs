use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use telementor::mentor::{run_mentor_client, MentorAgentScript, MentorConfig, RetryPolicy};

/// Mentor-side client: rebuilds the streamed scene as a point cloud and sends
/// guidance from a script or a browser console.
#[derive(Debug, Parser)]
#[command(name = "mentor", version)]
struct Args {
    /// Operation service address.
    #[arg(long)]
    connect: String,
    /// Scripted guidance (JSON action list).
    #[arg(long, conflicts_with = "gateway")]
    script: Option<PathBuf>,
    /// Serve the browser console WebSocket on this address.
    #[arg(long)]
    gateway: Option<String>,
    /// Per-frame statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Leave after this many frames.
    #[arg(long)]
    max_frames: Option<u64>,
    /// Connection attempts before giving up.
    #[arg(long, default_value_t = 5)]
    retries: u32,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let script = args
        .script
        .as_ref()
        .map(|p| {
            MentorAgentScript::load(p).with_context(|| format!("reading script {}", p.display()))
        })
        .transpose()?;
    let config = MentorConfig {
        script,
        gateway: args.gateway.clone(),
        stats_path: args.stats.clone(),
        max_frames: args.max_frames,
        retry: RetryPolicy {
            attempts: args.retries.max(1),
            ..RetryPolicy::default()
        },
        ..MentorConfig::new(&args.connect)
    };
    if let Some(gw) = &args.gateway {
        log::info!("console gateway on ws://{gw}");
    }
    let summary = run_mentor_client(config, None)?;
    println!(
        "frames {} clouds {} skipped {} stale {} feedback {} sessions {} fps {} in {:.1?}",
        summary.frames_received,
        summary.clouds_built,
        summary.frames_skipped,
        summary.frames_dropped_stale,
        summary.feedback_sent,
        summary.sessions,
        summary.fps.map_or("-".to_string(), |f| format!("{f:.1}")),
        summary.elapsed,
    );
    if summary.sessions == 0 {
        anyhow::bail!("could not reach {}", args.connect);
    }
    if let Some(e) = summary.last_error {
        log::warn!("last session error: {e}");
    }
    Ok(())
}
