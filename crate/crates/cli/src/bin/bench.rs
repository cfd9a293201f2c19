use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use telementor::bench::{
    run_accuracy_suite, run_benchmark_with, write_report, BenchConfig, DEFAULT_TRIALS,
    PAPER_RESOLUTIONS,
};
use telementor::codec::Quality;

fn parse_resolution(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .trim()
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("{s:?} is not WIDTHxHEIGHT"))?;
    let parse = |v: &str| v.parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

/// Loopback benchmark: per-stage and closed-loop latency per resolution and
/// re-projection accuracy of guidance.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    /// Comma-separated WIDTHxHEIGHT list; defaults to 1280x720 down to 320x240.
    #[arg(long, value_delimiter = ',', value_parser = parse_resolution)]
    resolutions: Vec<(u32, u32)>,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value = "90")]
    quality: Quality,
    #[arg(long)]
    out: PathBuf,
    /// Trials per accuracy run; 0 skips the accuracy section.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Use ground-truth disparity instead of block matching.
    #[arg(long)]
    ground_truth: bool,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let resolutions = if args.resolutions.is_empty() {
        PAPER_RESOLUTIONS.to_vec()
    } else {
        args.resolutions.clone()
    };
    let config = BenchConfig {
        quality: args.quality,
        frames: args.frames,
        min_frames: args.frames,
        block_match: !args.ground_truth,
        ..BenchConfig::default()
    };
    let mut report = run_benchmark_with(&resolutions, &config);
    if args.trials > 0 {
        run_accuracy_suite(&mut report, args.quality, args.trials).context("accuracy protocol")?;
    }
    write_report(&report, &args.out)
        .with_context(|| format!("writing report to {}", args.out.display()))?;

    println!(
        "{:>10} {:>7} {:>16} {:>8} {:>10}",
        "resolution", "frames", "closed loop ms", "fps", "payload B"
    );
    for r in &report.resolutions {
        let closed = r.stages.as_ref().map_or("-".into(), |s| {
            format!(
                "{:.1} ± {:.1}",
                s.closed_loop_ms.mean, s.closed_loop_ms.stdev
            )
        });
        println!(
            "{:>10} {:>7} {:>16} {:>8} {:>10}",
            format!("{}x{}", r.width, r.height),
            r.frames_measured,
            closed,
            r.mentor_fps.map_or("-".into(), |f| format!("{f:.1}")),
            r.payload_bytes
                .map_or("-".into(), |p| format!("{:.0}", p.mean)),
        );
        for f in &r.failures {
            println!("{:>10} ! {f}", "");
        }
    }
    for a in &report.accuracy {
        match a.error_px {
            Some(e) => println!(
                "accuracy {} {}: {:.3} ± {:.3} px over {} trials",
                a.path, a.kind, e.mean, e.stdev, e.n
            ),
            None => println!("accuracy {} {}: no trial measured", a.path, a.kind),
        }
    }
    println!("report written to {}", args.out.display());
    if report.no_data {
        bail!("no frames were measured");
    }
    Ok(())
}
