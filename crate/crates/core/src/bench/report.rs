use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchError, Summary};

/// Latency of one frame through the closed loop, in microseconds.
///
/// `transmit_us` and `feedback_transmit_us` are each half of the feedback
/// round trip minus the mentor's processing time, since the two ends do not
/// share a clock.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub width: u32,
    pub height: u32,
    pub frame: u64,
    pub disparity_us: u64,
    pub encode_us: u64,
    pub transmit_us: u64,
    pub decode_us: u64,
    /// Point-cloud construction plus view transform.
    pub render_us: u64,
    pub feedback_transmit_us: u64,
    pub overlay_us: u64,
    pub closed_loop_us: u64,
    pub payload_bytes: u64,
}

impl StageTiming {
    pub fn stage_sum_us(&self) -> u64 {
        self.disparity_us
            + self.encode_us
            + self.transmit_us
            + self.decode_us
            + self.render_us
            + self.feedback_transmit_us
            + self.overlay_us
    }

    pub fn max_stage_us(&self) -> u64 {
        [
            self.disparity_us,
            self.encode_us,
            self.transmit_us,
            self.decode_us,
            self.render_us,
            self.feedback_transmit_us,
            self.overlay_us,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

/// Per-stage statistics for one resolution, in milliseconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageSummary {
    pub disparity_ms: Summary,
    pub encode_ms: Summary,
    pub transmit_ms: Summary,
    pub decode_ms: Summary,
    pub render_ms: Summary,
    pub feedback_transmit_ms: Summary,
    pub overlay_ms: Summary,
    pub closed_loop_ms: Summary,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub width: u32,
    pub height: u32,
    pub frames_captured: usize,
    /// Frames with a complete closed loop; the statistics cover these.
    pub frames_measured: usize,
    pub stages: Option<StageSummary>,
    pub mentor_fps: Option<f64>,
    pub payload_bytes: Option<Summary>,
    /// Largest amount by which the stage sum exceeded the closed loop.
    pub slack_ms: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTrial {
    pub path: String,
    pub kind: String,
    pub trial: usize,
    pub target: String,
    /// Pixel distance; `None` when the trial was skipped.
    pub error_px: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub path: String,
    pub kind: String,
    pub error_px: Option<Summary>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub quality: String,
    pub min_frames: usize,
    /// True when no frame was measured at any resolution.
    pub no_data: bool,
    pub resolutions: Vec<ResolutionReport>,
    pub accuracy: Vec<AccuracySummary>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
    #[serde(skip)]
    pub trials: Vec<AccuracyTrial>,
}

fn ms(values: impl Iterator<Item = u64>) -> Summary {
    let v: Vec<f64> = values.map(|us| us as f64 / 1000.0).collect();
    Summary::of(&v).unwrap_or_default()
}

/// Statistics over complete-loop frames, in milliseconds.
pub fn summarize_stages(timings: &[StageTiming]) -> Option<StageSummary> {
    if timings.is_empty() {
        return None;
    }
    let col = |f: fn(&StageTiming) -> u64| ms(timings.iter().map(f));
    Some(StageSummary {
        disparity_ms: col(|t| t.disparity_us),
        encode_ms: col(|t| t.encode_us),
        transmit_ms: col(|t| t.transmit_us),
        decode_ms: col(|t| t.decode_us),
        render_ms: col(|t| t.render_us),
        feedback_transmit_ms: col(|t| t.feedback_transmit_us),
        overlay_ms: col(|t| t.overlay_us),
        closed_loop_ms: col(|t| t.closed_loop_us),
    })
}

pub fn summarize_accuracy(trials: &[AccuracyTrial]) -> Vec<AccuracySummary> {
    let mut groups: Vec<(String, String)> = Vec::new();
    for t in trials {
        let key = (t.path.clone(), t.kind.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    groups
        .into_iter()
        .map(|(path, kind)| {
            let group: Vec<&AccuracyTrial> = trials
                .iter()
                .filter(|t| t.path == path && t.kind == kind)
                .collect();
            let errors: Vec<f64> = group.iter().filter_map(|t| t.error_px).collect();
            AccuracySummary {
                skipped: group.len() - errors.len(),
                error_px: Summary::of(&errors),
                path,
                kind,
            }
        })
        .collect()
}

pub const LATENCY_CSV: &str = "latency.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Writes `latency.csv` (one row per measured frame), `accuracy.csv` (one
/// row per trial) and `summary.json` into `dir`.
pub fn write_report(report: &BenchReport, dir: impl AsRef<Path>) -> Result<(), BenchError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(LATENCY_CSV))?;
    if report.timings.is_empty() {
        w.write_record([
            "width",
            "height",
            "frame",
            "disparity_us",
            "encode_us",
            "transmit_us",
            "decode_us",
            "render_us",
            "feedback_transmit_us",
            "overlay_us",
            "closed_loop_us",
            "payload_bytes",
        ])?;
    }
    for t in &report.timings {
        w.serialize(t)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(ACCURACY_CSV))?;
    w.write_record(["path", "kind", "trial", "target", "error_px", "note"])?;
    for t in &report.trials {
        w.write_record([
            t.path.clone(),
            t.kind.clone(),
            t.trial.to_string(),
            t.target.clone(),
            t.error_px.map(|e| e.to_string()).unwrap_or_default(),
            t.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    std::fs::write(
        dir.join(SUMMARY_JSON),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

pub fn read_latency_csv(path: impl AsRef<Path>) -> Result<Vec<StageTiming>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<BenchReport, BenchError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
