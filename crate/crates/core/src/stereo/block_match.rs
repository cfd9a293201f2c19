use image::RgbImage;
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, DisparityMap};

use super::StereoError;

/// A match is rejected when the runner-up cost is within this factor of the
/// best one.
pub const AMBIGUITY_RATIO: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatchParams {
    /// Odd window side, at least 3.
    pub window: u32,
    /// Largest disparity searched, in `(0, 256)`.
    pub max_disparity: u32,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        Self {
            window: 9,
            max_disparity: 64,
        }
    }
}

impl BlockMatchParams {
    /// Search range covering everything at least `min_depth` metres away.
    pub fn for_min_depth(intr: &CameraIntrinsics, min_depth: f64) -> Result<Self, StereoError> {
        if !(min_depth.is_finite() && min_depth > 0.0) {
            return Err(StereoError::Params(format!(
                "min depth {min_depth} must be positive"
            )));
        }
        let d = (intr.depth_scale() / min_depth).ceil();
        let params = Self {
            max_disparity: d.clamp(1.0, 255.0) as u32,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), StereoError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(StereoError::Params(format!(
                "window {} must be odd and >= 3",
                self.window
            )));
        }
        if self.max_disparity == 0 || self.max_disparity >= 256 {
            return Err(StereoError::Params(format!(
                "max disparity {} must be in (0, 256)",
                self.max_disparity
            )));
        }
        Ok(())
    }
}

fn luma(img: &RgbImage) -> Vec<i32> {
    img.pixels()
        .map(|p| (299 * p[0] as i32 + 587 * p[1] as i32 + 114 * p[2] as i32 + 500) / 1000)
        .collect()
}

/// Winner-takes-all SAD matching on a rectified pair with parabolic sub-pixel
/// refinement.
///
/// Pixels within `window/2` of the image edge or closer than
/// `max_disparity + window/2` to the left edge are masked, as are matches that
/// fail the [`AMBIGUITY_RATIO`] test (the runner-up excludes the immediate
/// neighbours of the best disparity) and zero-disparity matches.
pub fn block_match_disparity(
    left: &RgbImage,
    right: &RgbImage,
    params: BlockMatchParams,
) -> Result<DisparityMap, StereoError> {
    params.validate()?;
    if left.dimensions() != right.dimensions() {
        return Err(StereoError::Shape {
            left: left.dimensions(),
            right: right.dimensions(),
        });
    }
    let (w, h) = left.dimensions();
    let (w, h) = (w as usize, h as usize);
    let r = (params.window / 2) as usize;
    let d_max = params.max_disparity as usize;
    let mut out = DisparityMap::invalid(w as u32, h as u32);
    if w <= d_max + 2 * r || h <= 2 * r {
        return Ok(out);
    }
    let (gl, gr) = (luma(left), luma(right));
    let n_d = d_max + 1;

    // Rows are processed in bands; within a band the vertical window sums
    // (`column[d * w + u]`) slide down one row at a time instead of being
    // recomputed.
    const BAND: usize = 16;
    let starts: Vec<usize> = (r..h - r).step_by(BAND).collect();
    let bands: Vec<Vec<(usize, Vec<Option<f32>>)>> = starts
        .into_par_iter()
        .map(|v0| {
            let v_end = (v0 + BAND).min(h - r);
            let mut column = vec![0u32; n_d * w];
            let mut cost = vec![0u32; n_d * w];
            let mut pixel_costs = vec![0u32; n_d];
            let mut rows = Vec::with_capacity(v_end - v0);
            let diff =
                |y: usize, d: usize, u: usize| (gl[y * w + u] - gr[y * w + u - d]).unsigned_abs();
            for d in 0..=d_max {
                let col = &mut column[d * w..(d + 1) * w];
                for y in v0 - r..=v0 + r {
                    for (u, c) in col.iter_mut().enumerate().skip(d) {
                        *c += diff(y, d, u);
                    }
                }
            }
            for v in v0..v_end {
                if v > v0 {
                    let (add, sub) = (v + r, v - r - 1);
                    for d in 0..=d_max {
                        let col = &mut column[d * w..(d + 1) * w];
                        let (la, ra) = (&gl[add * w..(add + 1) * w], &gr[add * w..(add + 1) * w]);
                        let (ls, rs) = (&gl[sub * w..(sub + 1) * w], &gr[sub * w..(sub + 1) * w]);
                        for u in d..w {
                            let plus = (la[u] - ra[u - d]).unsigned_abs();
                            let minus = (ls[u] - rs[u - d]).unsigned_abs();
                            col[u] = col[u] + plus - minus;
                        }
                    }
                }
                for d in 0..=d_max {
                    let col = &column[d * w..(d + 1) * w];
                    let out_row = &mut cost[d * w..(d + 1) * w];
                    let mut acc: u32 = col[d..d + 2 * r + 1].iter().sum();
                    out_row[d + r] = acc;
                    for u in d + r + 1..w - r {
                        acc = acc + col[u + r] - col[u - r - 1];
                        out_row[u] = acc;
                    }
                }
                let row = (0..w)
                    .map(|u| {
                        if u < d_max + r || u >= w - r {
                            return None;
                        }
                        for (d, c) in pixel_costs.iter_mut().enumerate() {
                            *c = cost[d * w + u];
                        }
                        select(&pixel_costs)
                    })
                    .collect();
                rows.push((v, row));
            }
            rows
        })
        .collect();

    for (v, row) in bands.into_iter().flatten() {
        for (u, d) in row.into_iter().enumerate() {
            if let Some(d) = d {
                out.set(u as u32, v as u32, d);
            }
        }
    }
    Ok(out)
}

fn select(costs: &[u32]) -> Option<f32> {
    let (best, &best_cost) = costs.iter().enumerate().min_by_key(|(_, &c)| c)?;
    let runner_up = costs
        .iter()
        .enumerate()
        .filter(|(d, _)| d.abs_diff(best) > 1)
        .map(|(_, &c)| c)
        .min();
    if let Some(second) = runner_up {
        if second as f64 <= best_cost as f64 * AMBIGUITY_RATIO {
            return None;
        }
    }
    let mut d = best as f64;
    if best > 0 && best + 1 < costs.len() {
        let (a, b, c) = (
            costs[best - 1] as f64,
            best_cost as f64,
            costs[best + 1] as f64,
        );
        let denom = a - 2.0 * b + c;
        if denom > 0.0 {
            d += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Some(d.min((costs.len() - 1) as f64) as f32)
}
