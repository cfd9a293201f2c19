use std::path::{Path, PathBuf};

use crate::codec::pfm::{load_pfm, save_pfm};
use crate::geometry::CameraIntrinsics;
use crate::stereo::{gen_synthetic_scene, SceneSpec, StereoFrame, StereoPair};

use super::OperationError;

/// Produces rectified stereo captures until exhausted.
pub trait FrameSource: Send {
    fn intrinsics(&self) -> &CameraIntrinsics;
    fn next_frame(&mut self) -> Result<Option<StereoFrame>, OperationError>;
}

/// A rendered scene replayed for a fixed number of frames. The camera is
/// static, so every frame is the same capture.
#[derive(Debug)]
pub struct SyntheticSource {
    intrinsics: CameraIntrinsics,
    frame: StereoFrame,
    remaining: usize,
}

impl SyntheticSource {
    pub fn new(spec: &SceneSpec, frames: usize) -> Result<Self, OperationError> {
        let pair = gen_synthetic_scene(spec)?;
        Ok(Self::from_pair(spec.intrinsics, pair, frames))
    }

    pub fn from_pair(intrinsics: CameraIntrinsics, pair: StereoPair, frames: usize) -> Self {
        let frame = StereoFrame {
            left: pair.left,
            right: pair.right,
            ground_truth: Some(pair.disparity),
        };
        Self {
            intrinsics,
            frame,
            remaining: frames,
        }
    }
}

impl FrameSource for SyntheticSource {
    fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    fn next_frame(&mut self) -> Result<Option<StereoFrame>, OperationError> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        Ok(Some(self.frame.clone()))
    }
}

#[derive(Debug, Clone)]
struct SequenceEntry {
    left: PathBuf,
    right: PathBuf,
    disparity: Option<PathBuf>,
}

/// Directory of `left_NNNNNN.png` / `right_NNNNNN.png` pairs, each optionally
/// accompanied by a `disp_NNNNNN.pfm` ground-truth map. Frames play in
/// index order.
#[derive(Debug)]
pub struct DirectorySource {
    intrinsics: CameraIntrinsics,
    entries: Vec<SequenceEntry>,
    next: usize,
}

impl DirectorySource {
    pub fn open(
        dir: impl AsRef<Path>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, OperationError> {
        let dir = dir.as_ref();
        let mut indices: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let idx = name.strip_prefix("left_")?.strip_suffix(".png")?;
                Some(idx.to_string())
            })
            .collect();
        indices.sort();
        let mut entries = Vec::with_capacity(indices.len());
        for idx in indices {
            let right = dir.join(format!("right_{idx}.png"));
            if !right.exists() {
                return Err(OperationError::Source(format!(
                    "{} has no right view",
                    dir.join(format!("left_{idx}.png")).display()
                )));
            }
            let disparity = Some(dir.join(format!("disp_{idx}.pfm"))).filter(|p| p.exists());
            entries.push(SequenceEntry {
                left: dir.join(format!("left_{idx}.png")),
                right,
                disparity,
            });
        }
        if entries.is_empty() {
            return Err(OperationError::Source(format!(
                "no left_*.png frames in {}",
                dir.display()
            )));
        }
        Ok(Self {
            intrinsics,
            entries,
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn load_rgb(path: &Path) -> Result<image::RgbImage, OperationError> {
    let img = image::open(path)
        .map_err(|e| OperationError::Source(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

impl FrameSource for DirectorySource {
    fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    fn next_frame(&mut self) -> Result<Option<StereoFrame>, OperationError> {
        let Some(entry) = self.entries.get(self.next).cloned() else {
            return Ok(None);
        };
        self.next += 1;
        let left = load_rgb(&entry.left)?;
        let right = load_rgb(&entry.right)?;
        let expected = (self.intrinsics.width, self.intrinsics.height);
        if left.dimensions() != expected || right.dimensions() != expected {
            return Err(OperationError::Source(format!(
                "{} is {:?}, calibration expects {expected:?}",
                entry.left.display(),
                left.dimensions()
            )));
        }
        let ground_truth = entry.disparity.as_deref().map(load_pfm).transpose()?;
        Ok(Some(StereoFrame {
            left,
            right,
            ground_truth,
        }))
    }
}

/// Writes `frames` copies of a rendered pair in the layout [`DirectorySource`]
/// reads.
pub fn write_sequence_dir(
    dir: impl AsRef<Path>,
    pair: &StereoPair,
    frames: usize,
) -> Result<(), OperationError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let save = |img: &image::RgbImage, path: PathBuf| {
        img.save(&path)
            .map_err(|e| OperationError::Source(format!("{}: {e}", path.display())))
    };
    for k in 0..frames {
        save(&pair.left, dir.join(format!("left_{k:06}.png")))?;
        save(&pair.right, dir.join(format!("right_{k:06}.png")))?;
        save_pfm(dir.join(format!("disp_{k:06}.pfm")), &pair.disparity)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::peg_scene;

    fn small() -> SceneSpec {
        peg_scene(CameraIntrinsics::centered(96, 80, 500.0, 0.005).unwrap(), 3)
    }

    #[test]
    fn synthetic_source_counts_down() {
        let mut src = SyntheticSource::new(&small(), 2).unwrap();
        assert!(src.next_frame().unwrap().unwrap().ground_truth.is_some());
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn directory_round_trip() {
        let spec = small();
        let pair = gen_synthetic_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sequence_dir(dir.path(), &pair, 3).unwrap();
        let mut src = DirectorySource::open(dir.path(), spec.intrinsics).unwrap();
        assert_eq!(src.len(), 3);
        let frame = src.next_frame().unwrap().unwrap();
        assert_eq!(frame.left, pair.left);
        assert_eq!(frame.right, pair.right);
        assert_eq!(
            frame.ground_truth.unwrap().valid_count(),
            pair.disparity.valid_count()
        );
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        let intr = small().intrinsics;
        assert!(DirectorySource::open(dir.path(), intr).is_err());
        image::RgbImage::new(96, 80)
            .save(dir.path().join("left_000000.png"))
            .unwrap();
        assert!(DirectorySource::open(dir.path(), intr).is_err());
        image::RgbImage::new(95, 80)
            .save(dir.path().join("right_000000.png"))
            .unwrap();
        let mut src = DirectorySource::open(dir.path(), intr).unwrap();
        assert!(src.next_frame().is_err());
    }
}
