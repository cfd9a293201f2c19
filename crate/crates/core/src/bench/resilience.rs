use std::net::TcpListener;
use std::thread;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_frame, split_ifp, Quality};
use crate::geometry::CameraIntrinsics;
use crate::mentor::run_mentor_client;
use crate::stereo::{gen_synthetic_scene, peg_scene};
use crate::transport::{session_handshake, FramePayload, Role, SessionConfig};

use super::{loopback_mentor, BenchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub frames_sent: usize,
    pub corrupted: usize,
    pub frames_received: u64,
    pub frames_skipped: u64,
    pub clouds_built: u64,
    pub sessions: u64,
}

impl ResilienceReport {
    /// One session carried every frame and exactly the corrupted ones were skipped.
    pub fn survived(&self) -> bool {
        self.sessions == 1
            && self.frames_received == self.frames_sent as u64
            && self.frames_skipped == self.corrupted as u64
            && self.clouds_built + self.frames_skipped == self.frames_sent as u64
    }
}

/// Flips 1–3 random bits inside the compressed image bytes. The frame
/// header and timestamps are left alone: they carry no integrity check and
/// are not what a noisy link is being modelled to hit.
fn corrupt(payload: &mut FramePayload, rng: &mut impl Rng) {
    for _ in 0..rng.random_range(1..=3) {
        let target = if rng.random_bool(0.5) {
            &mut payload.rgb
        } else {
            &mut payload.ifp
        };
        let i = rng.random_range(0..target.len());
        target[i] ^= 1 << rng.random_range(0..8);
    }
}

/// Streams `frames` copies of a small peg-scene frame to a live mentor,
/// corrupting `fraction` of them (rounded, at least one when nonzero).
pub fn run_resilience(
    frames: usize,
    fraction: f64,
    seed: u64,
) -> Result<ResilienceReport, BenchError> {
    let intr = CameraIntrinsics::centered(160, 128, 500.0, 0.005)?;
    let pair = gen_synthetic_scene(&peg_scene(intr, 7))?;
    let encoded = encode_frame(&pair.left, &split_ifp(&pair.disparity)?, Quality::Lossy(90))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if fraction > 0.0 {
        ((frames as f64 * fraction).round() as usize).clamp(1, frames)
    } else {
        0
    };
    let mut corrupt_at = vec![false; frames];
    for i in sample(&mut rng, frames, count) {
        corrupt_at[i] = true;
    }

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    let streamer = thread::spawn(move || -> Result<(), BenchError> {
        let (stream, _) = listener.accept()?;
        let session = session_handshake(
            stream,
            Role::Operation,
            Some(&intr),
            &SessionConfig::default(),
        )?;
        let clock = session.clock();
        let (mut tx, _rx) = session.split()?;
        for bad in corrupt_at {
            let mut payload = FramePayload {
                capture_timestamp_us: clock.now_us(),
                disparity_stage_us: 0,
                encode_stage_us: 0,
                rgb: encoded.rgb_payload.clone(),
                ifp: encoded.ifp_payload.clone(),
            };
            if bad {
                corrupt(&mut payload, &mut rng);
            }
            tx.send_frame(&payload)?;
        }
        tx.send_bye()?;
        Ok(())
    });
    let mentor = run_mentor_client(loopback_mentor(&addr), None);
    streamer
        .join()
        .map_err(|_| BenchError::Setup("streamer panicked".into()))??;
    let mentor = mentor?;
    Ok(ResilienceReport {
        frames_sent: frames,
        corrupted: count,
        frames_received: mentor.frames_received,
        frames_skipped: mentor.frames_skipped,
        clouds_built: mentor.clouds_built,
        sessions: mentor.sessions,
    })
}
