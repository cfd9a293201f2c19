use image::{Rgb, RgbImage};

use crate::geometry::{project_point, CameraIntrinsics, Point3};

use super::{GuidanceState, NeedleModel};

pub const CROSSHAIR_SIZE: i64 = 11;
pub const POINTER_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
pub const NEEDLE_COLOR: Rgb<u8> = Rgb([255, 64, 255]);
pub const TRAJECTORY_COLOR: Rgb<u8> = Rgb([0, 255, 0]);

/// Draws the guidance onto a copy of `frame`.
///
/// The pointer becomes an 11 px crosshair centred on the rounded projection;
/// the needle model and trajectory strokes become 2 px polylines. Anything
/// behind the camera is skipped and anything outside the image is clipped.
/// An empty state returns an identical image.
pub fn render_overlay(
    frame: &RgbImage,
    state: &GuidanceState,
    intr: &CameraIntrinsics,
    needle: &NeedleModel,
) -> RgbImage {
    let mut out = frame.clone();
    for stroke in state.strokes.values() {
        draw_polyline(&mut out, intr, stroke, TRAJECTORY_COLOR);
    }
    if let Some(pose) = &state.needle {
        draw_polyline(&mut out, intr, &needle.posed(pose), NEEDLE_COLOR);
    }
    if let Some(p) = state.pointer {
        if let Ok((u, v)) = project_point(intr, p) {
            draw_crosshair(&mut out, u, v, POINTER_COLOR);
        }
    }
    out
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u64) < img.width() as u64 && (y as u64) < img.height() as u64 {
        img.put_pixel(x as u32, y as u32, color);
    }
}

pub fn draw_crosshair(img: &mut RgbImage, u: f64, v: f64, color: Rgb<u8>) {
    if !(u.is_finite() && v.is_finite()) {
        return;
    }
    let limit = 4.0 * (img.width().max(img.height()) as f64 + CROSSHAIR_SIZE as f64);
    if u.abs() > limit || v.abs() > limit {
        return;
    }
    let (cu, cv) = (u.round() as i64, v.round() as i64);
    let arm = CROSSHAIR_SIZE / 2;
    for k in -arm..=arm {
        put(img, cu + k, cv, color);
        if k != 0 {
            put(img, cu, cv + k, color);
        }
    }
}

/// Clips segment `a→b` to the axis-aligned box, returning the surviving part.
fn clip_segment(
    a: (f64, f64),
    b: (f64, f64),
    lo: (f64, f64),
    hi: (f64, f64),
) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.0 - lo.0),
        (dx, hi.0 - a.0),
        (-dy, a.1 - lo.1),
        (dy, hi.1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((
        (a.0 + t0 * dx, a.1 + t0 * dy),
        (a.0 + t1 * dx, a.1 + t1 * dy),
    ))
}

/// 2 px line: a 2×2 stamp sampled every half pixel along the segment.
pub fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let hi = (img.width() as f64 + 1.0, img.height() as f64 + 1.0);
    let Some((a, b)) = clip_segment(a, b, (-2.0, -2.0), hi) else {
        return;
    };
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let steps = (len / 0.5).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        let (x0, y0) = ((x - 0.5).floor() as i64, (y - 0.5).floor() as i64);
        for (ox, oy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            put(img, x0 + ox, y0 + oy, color);
        }
    }
}

/// Projects each vertex and joins consecutive ones; a segment with an
/// endpoint behind the camera is dropped.
pub fn draw_polyline(
    img: &mut RgbImage,
    intr: &CameraIntrinsics,
    points: &[Point3],
    color: Rgb<u8>,
) {
    let projected: Vec<Option<(f64, f64)>> = points
        .iter()
        .map(|&p| {
            project_point(intr, p)
                .ok()
                .filter(|(u, v)| u.is_finite() && v.is_finite())
        })
        .collect();
    if let [Some(only)] = projected[..] {
        draw_segment(img, only, only, color);
    }
    for pair in projected.windows(2) {
        if let [Some(a), Some(b)] = *pair {
            draw_segment(img, a, b, color);
        }
    }
}

/// Centroid of every pixel that differs between `before` and `after`, or
/// `None` when the images are identical or differently sized.
pub fn changed_pixel_centroid(before: &RgbImage, after: &RgbImage) -> Option<(f64, f64)> {
    if before.dimensions() != after.dimensions() {
        return None;
    }
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    for ((u, v, a), b) in before.enumerate_pixels().zip(after.pixels()) {
        if a != b {
            su += u as f64;
            sv += v as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (su / n as f64, sv / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotation, EulerAngles, RigidTransform};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 0.005, 320.0, 256.0, 640, 512).unwrap()
    }

    fn gray() -> RgbImage {
        RgbImage::from_pixel(640, 512, Rgb([40, 40, 40]))
    }

    #[test]
    fn empty_state_is_identity() {
        let frame = RgbImage::from_fn(640, 512, |u, v| Rgb([u as u8, v as u8, (u ^ v) as u8]));
        let out = render_overlay(
            &frame,
            &GuidanceState::default(),
            &intr(),
            &NeedleModel::default(),
        );
        assert_eq!(out, frame);
    }

    #[test]
    fn pointer_on_optical_axis() {
        let state = GuidanceState {
            pointer: Some(Point3::new(0.0, 0.0, 0.1)),
            ..Default::default()
        };
        let out = render_overlay(&gray(), &state, &intr(), &NeedleModel::default());
        assert_eq!(changed_pixel_centroid(&gray(), &out), Some((320.0, 256.0)));
        assert_eq!(*out.get_pixel(320, 256), POINTER_COLOR);
        assert_eq!(*out.get_pixel(325, 256), POINTER_COLOR);
        assert_eq!(*out.get_pixel(326, 256), Rgb([40, 40, 40]));
        assert_eq!(*out.get_pixel(320, 251), POINTER_COLOR);
        let changed = gray()
            .pixels()
            .zip(out.pixels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 21);
    }

    #[test]
    fn crosshair_clipped_at_border() {
        let mut img = gray();
        draw_crosshair(&mut img, 1.0, 1.0, POINTER_COLOR);
        draw_crosshair(&mut img, -1e300, 5.0, POINTER_COLOR);
        draw_crosshair(&mut img, f64::NAN, 5.0, POINTER_COLOR);
        assert_eq!(*img.get_pixel(0, 1), POINTER_COLOR);
        assert_eq!(*img.get_pixel(6, 1), POINTER_COLOR);
    }

    #[test]
    fn points_behind_camera_are_skipped() {
        let state = GuidanceState {
            pointer: Some(Point3::new(0.0, 0.0, -0.1)),
            strokes: [(
                1,
                vec![Point3::new(0.0, 0.0, -0.1), Point3::new(0.01, 0.0, -0.1)],
            )]
            .into(),
            ..Default::default()
        };
        assert_eq!(
            render_overlay(&gray(), &state, &intr(), &NeedleModel::default()),
            gray()
        );
    }

    #[test]
    fn trajectory_is_green_and_clipped() {
        let stroke = vec![Point3::new(-1.0, 0.0, 0.1), Point3::new(1.0, 0.0, 0.1)];
        let state = GuidanceState {
            strokes: [(3, stroke)].into(),
            ..Default::default()
        };
        let out = render_overlay(&gray(), &state, &intr(), &NeedleModel::default());
        for u in 0..640 {
            assert_eq!(*out.get_pixel(u, 256), TRAJECTORY_COLOR);
            assert_eq!(*out.get_pixel(u, 255), TRAJECTORY_COLOR);
            assert_eq!(*out.get_pixel(u, 257), Rgb([40, 40, 40]));
        }
    }

    #[test]
    fn needle_drawn_through_projected_vertices() {
        let needle = NeedleModel::default();
        let pose = RigidTransform::new(
            euler_to_rotation(EulerAngles::new(0.4, 0.2, -0.3)),
            Point3::new(0.0, 0.0, 0.1),
        );
        let state = GuidanceState {
            needle: Some(pose),
            ..Default::default()
        };
        let out = render_overlay(&gray(), &state, &intr(), &needle);
        for p in needle.posed(&pose) {
            let (u, v) = project_point(&intr(), p).unwrap();
            let (u0, v0) = ((u - 0.5).floor() as u32, (v - 0.5).floor() as u32);
            assert_eq!(*out.get_pixel(u0, v0), NEEDLE_COLOR);
        }
    }

    #[test]
    fn overlay_is_deterministic() {
        let state = GuidanceState {
            pointer: Some(Point3::new(0.01, -0.004, 0.11)),
            strokes: [(
                0,
                vec![Point3::new(0.0, 0.0, 0.1), Point3::new(0.01, 0.01, 0.1)],
            )]
            .into(),
            ..Default::default()
        };
        let a = render_overlay(&gray(), &state, &intr(), &NeedleModel::default());
        let b = render_overlay(&gray(), &state, &intr(), &NeedleModel::default());
        assert_eq!(a, b);
    }

    #[test]
    fn clip_rejects_outside_segments() {
        assert!(clip_segment((-5.0, -5.0), (-1.0, -9.0), (0.0, 0.0), (10.0, 10.0)).is_none());
        let (a, b) = clip_segment((-5.0, 5.0), (15.0, 5.0), (0.0, 0.0), (10.0, 10.0)).unwrap();
        assert_eq!((a, b), ((0.0, 5.0), (10.0, 5.0)));
    }
}
