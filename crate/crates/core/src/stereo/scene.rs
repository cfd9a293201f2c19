//! Analytic stereo scenes: ray-cast left view, ground-truth disparity, and a
//! right view obtained by warping the left one along each row.

use std::path::Path;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::MAX_DISPARITY;
use crate::geometry::{
    euler_to_rotation, CameraIntrinsics, DisparityMap, EulerAngles, Point3, Rotation,
};

use super::noise::ValueNoise;
use super::StereoError;

pub type Albedo = [u8; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        albedo: Albedo,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        albedo: Albedo,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        rotation: EulerAngles,
        albedo: Albedo,
    },
}

/// Solid procedural texture modulating each primitive's albedo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    /// Feature size in metres.
    pub scale: f64,
    /// 0 = flat colour, 1 = full-range modulation.
    pub contrast: f64,
    #[serde(default = "default_octaves")]
    pub octaves: u32,
}

fn default_octaves() -> u32 {
    3
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            scale: 0.002,
            contrast: 0.35,
            octaves: 3,
        }
    }
}

/// A named scene location identified by its integer pixel in the left view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTarget {
    pub name: String,
    pub pixel: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub targets: Vec<NamedTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub left: RgbImage,
    pub right: RgbImage,
    pub disparity: DisparityMap,
    /// Left pixels with no counterpart in the right view (covered by a nearer
    /// surface, or shifted out of frame).
    pub occluded: Vec<bool>,
}

/// Ray hit in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Point3,
    pub normal: Point3,
    pub primitive: usize,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, StereoError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StereoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), StereoError> {
        self.intrinsics.validate()?;
        let bad = |m: String| Err(StereoError::Scene(m));
        if !(self.texture.scale > 0.0) || !(0.0..=1.0).contains(&self.texture.contrast) {
            return bad(format!("bad texture {:?}", self.texture));
        }
        for (i, prim) in self.primitives.iter().enumerate() {
            match prim {
                Primitive::Plane { point, normal, .. } => {
                    if !(point[2] > 0.0) || Point3::from_array(*normal).norm() == 0.0 {
                        return bad(format!(
                            "plane {i} must have z > 0 anchor and non-zero normal"
                        ));
                    }
                }
                Primitive::Sphere { center, radius, .. } => {
                    if !(*radius > 0.0) || !(center[2] - radius > 0.0) {
                        return bad(format!("sphere {i} must lie in front of the camera"));
                    }
                }
                Primitive::Box { .. } => {
                    let (_, corners) = box_frame(prim);
                    if corners.iter().any(|c| !(c.z > 0.0)) {
                        return bad(format!("box {i} must lie in front of the camera"));
                    }
                }
            }
        }
        for t in &self.targets {
            if t.pixel[0] >= self.intrinsics.width || t.pixel[1] >= self.intrinsics.height {
                return bad(format!("target {} outside the image", t.name));
            }
        }
        Ok(())
    }

    /// Nearest intersection of the ray through pixel `(u, v)`.
    pub fn cast(&self, u: f64, v: f64) -> Option<Hit> {
        let intr = &self.intrinsics;
        let dir = Point3::new((u - intr.cx) / intr.f, (v - intr.cy) / intr.f, 1.0);
        let mut best: Option<(f64, Point3, usize)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some((t, n)) = intersect(prim, dir) {
                if best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, n, i));
                }
            }
        }
        best.map(|(t, normal, primitive)| Hit {
            point: dir * t,
            normal,
            primitive,
        })
    }

    /// Camera-frame position of a named target.
    pub fn target_point(&self, name: &str) -> Option<Point3> {
        let t = self.targets.iter().find(|t| t.name == name)?;
        self.cast(t.pixel[0] as f64, t.pixel[1] as f64)
            .map(|h| h.point)
    }

    fn shade(&self, noise: &ValueNoise, hit: &Hit, view: Point3) -> Rgb<u8> {
        let albedo = match &self.primitives[hit.primitive] {
            Primitive::Plane { albedo, .. }
            | Primitive::Sphere { albedo, .. }
            | Primitive::Box { albedo, .. } => *albedo,
        };
        let tex = &self.texture;
        let p = hit.point * (1.0 / tex.scale);
        let n = noise.fbm(p.x, p.y, p.z, tex.octaves);
        let modulation = 1.0 - tex.contrast + 2.0 * tex.contrast * n;
        let light = 0.55 + 0.45 * hit.normal.dot(view.normalized()).abs();
        Rgb(albedo.map(|c| (c as f64 * modulation * light).round().clamp(0.0, 255.0) as u8))
    }
}

fn box_frame(prim: &Primitive) -> (Rotation, Vec<Point3>) {
    let Primitive::Box {
        center,
        half_extents,
        rotation,
        ..
    } = prim
    else {
        unreachable!("box_frame on non-box")
    };
    let r = euler_to_rotation(*rotation);
    let c = Point3::from_array(*center);
    let mut corners = Vec::with_capacity(8);
    for k in 0..8 {
        let s = |bit: usize| if k & (1 << bit) != 0 { 1.0 } else { -1.0 };
        let local = Point3::new(
            s(0) * half_extents[0],
            s(1) * half_extents[1],
            s(2) * half_extents[2],
        );
        corners.push(r.apply(local) + c);
    }
    (r, corners)
}

/// Ray `t·dir` from the camera centre; returns depth parameter and unit normal.
fn intersect(prim: &Primitive, dir: Point3) -> Option<(f64, Point3)> {
    match prim {
        Primitive::Plane { point, normal, .. } => {
            let n = Point3::from_array(*normal).normalized();
            let denom = n.dot(dir);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = n.dot(Point3::from_array(*point)) / denom;
            (t > 0.0).then_some((t, n))
        }
        Primitive::Sphere { center, radius, .. } => {
            let c = Point3::from_array(*center);
            let a = dir.dot(dir);
            let b = dir.dot(c);
            let disc = b * b - a * (c.dot(c) - radius * radius);
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = [(b - sq) / a, (b + sq) / a]
                .into_iter()
                .find(|&t| t > 0.0)?;
            Some((t, (dir * t - c) * (1.0 / radius)))
        }
        Primitive::Box {
            center,
            half_extents,
            ..
        } => {
            let (r, _) = box_frame(prim);
            let rt = r.transpose();
            let origin = rt.apply(-Point3::from_array(*center)).to_array();
            let d = rt.apply(dir).to_array();
            let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut axis = 0;
            let mut sign = 1.0;
            for k in 0..3 {
                if d[k].abs() < 1e-15 {
                    if origin[k].abs() > half_extents[k] {
                        return None;
                    }
                    continue;
                }
                let t0 = (-half_extents[k] - origin[k]) / d[k];
                let t1 = (half_extents[k] - origin[k]) / d[k];
                let (lo, hi, s) = if t0 < t1 {
                    (t0, t1, -1.0)
                } else {
                    (t1, t0, 1.0)
                };
                if lo > t_near {
                    t_near = lo;
                    axis = k;
                    sign = s;
                }
                t_far = t_far.min(hi);
            }
            if t_near > t_far || t_near <= 0.0 {
                return None;
            }
            let mut local = [0.0; 3];
            local[axis] = sign;
            Some((t_near, r.apply(Point3::from_array(local))))
        }
    }
}

/// Renders the pair for `spec`. Deterministic: the same spec (including
/// seed) always yields identical bytes.
pub fn gen_synthetic_scene(spec: &SceneSpec) -> Result<StereoPair, StereoError> {
    spec.validate()?;
    let intr = spec.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let noise = ValueNoise::new(spec.seed);
    let fb = intr.depth_scale();

    let rows: Vec<Vec<(Rgb<u8>, Option<f32>)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| match spec.cast(u as f64, v as f64) {
                    Some(hit) => (
                        spec.shade(&noise, &hit, hit.point),
                        Some((fb / hit.point.z) as f32),
                    ),
                    None => (Rgb([0, 0, 0]), None),
                })
                .collect()
        })
        .collect();

    let mut left = RgbImage::new(w, h);
    let mut disparity = DisparityMap::invalid(w, h);
    for (v, row) in rows.iter().enumerate() {
        for (u, (px, d)) in row.iter().enumerate() {
            left.put_pixel(u as u32, v as u32, *px);
            if let Some(d) = d {
                if !(*d as f64 > 0.0 && (*d as f64) < MAX_DISPARITY) {
                    return Err(StereoError::Scene(format!(
                        "disparity {d} at ({u}, {v}) outside (0, {MAX_DISPARITY})"
                    )));
                }
                disparity.set(u as u32, v as u32, *d);
            }
        }
    }

    let (right, occluded) = warp_to_right(&left, &disparity);
    Ok(StereoPair {
        left,
        right,
        disparity,
        occluded,
    })
}

/// Forward-warps each row by `x = u − d`, interpolating between neighbouring
/// pixels of the same surface. Nearer surfaces win; holes are filled from the
/// nearest background pixel in the row.
fn warp_to_right(left: &RgbImage, disp: &DisparityMap) -> (RgbImage, Vec<bool>) {
    let (w, h) = left.dimensions();
    let rows: Vec<(Vec<Rgb<u8>>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut color = vec![Rgb([0u8; 3]); w as usize];
            let mut depth = vec![f64::NEG_INFINITY; w as usize];
            let sample = |u: u32| disp.get(u, v).map(|d| d as f64);
            for u in 0..w {
                let Some(d0) = sample(u) else { continue };
                let x0 = u as f64 - d0;
                let (x1, d1, c1) = match (u + 1 < w).then(|| sample(u + 1)).flatten() {
                    Some(d1) if (d1 - d0).abs() < 1.0 => {
                        (u as f64 + 1.0 - d1, d1, *left.get_pixel(u + 1, v))
                    }
                    _ => (x0, d0, *left.get_pixel(u, v)),
                };
                let c0 = *left.get_pixel(u, v);
                let (lo, hi) = (x0.min(x1), x0.max(x1));
                let start = lo.ceil().max(0.0) as i64;
                let end = hi.floor().min(w as f64 - 1.0) as i64;
                for x in start..=end {
                    let t = if hi > lo {
                        (x as f64 - x0) / (x1 - x0)
                    } else {
                        0.0
                    };
                    let d = d0 + (d1 - d0) * t;
                    if d > depth[x as usize] {
                        depth[x as usize] = d;
                        let mix =
                            |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
                        color[x as usize] =
                            Rgb([mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2])]);
                    }
                }
            }
            fill_holes(&mut color, &depth);
            let occluded = (0..w)
                .map(|u| match sample(u) {
                    None => false,
                    Some(d) => {
                        let x = u as f64 - d;
                        if x < 0.0 || x > w as f64 - 1.0 {
                            return true;
                        }
                        let (a, b) = (x.floor() as usize, x.ceil() as usize);
                        depth[a] > d + 0.5
                            || depth[b] > d + 0.5
                            || depth[a].is_infinite()
                            || depth[b].is_infinite()
                    }
                })
                .collect();
            (color, occluded)
        })
        .collect();

    let mut right = RgbImage::new(w, h);
    let mut occluded = Vec::with_capacity(w as usize * h as usize);
    for (v, (color, occ)) in rows.into_iter().enumerate() {
        for (u, px) in color.into_iter().enumerate() {
            right.put_pixel(u as u32, v as u32, px);
        }
        occluded.extend(occ);
    }
    (right, occluded)
}

fn fill_holes(color: &mut [Rgb<u8>], depth: &[f64]) {
    let n = color.len();
    let filled: Vec<Option<usize>> = (0..n)
        .map(|x| {
            if depth[x].is_finite() {
                return None;
            }
            let left = (0..x).rev().find(|&i| depth[i].is_finite());
            let right = (x + 1..n).find(|&i| depth[i].is_finite());
            match (left, right) {
                (Some(l), Some(r)) => Some(if depth[l] <= depth[r] { l } else { r }),
                (a, b) => a.or(b),
            }
        })
        .collect();
    for (x, src) in filled.into_iter().enumerate() {
        if let Some(s) = src {
            color[x] = color[s];
        }
    }
}

/// Peg-transfer board used for accuracy and size checks: a gently tilted
/// tissue plane, two pegs standing towards the camera, a transfer block and
/// a bead. Geometry is in metres and independent of resolution; targets are
/// placed at the integer pixel nearest to each peg tip.
pub fn peg_scene(intr: CameraIntrinsics, seed: u64) -> SceneSpec {
    let primitives = vec![
        Primitive::Plane {
            point: [0.0, 0.0, 0.12],
            normal: [0.08, -0.15, -1.0],
            albedo: [196, 112, 100],
        },
        Primitive::Box {
            center: [-0.018, 0.004, 0.107],
            half_extents: [0.0018, 0.0018, 0.012],
            rotation: EulerAngles::default(),
            albedo: [220, 220, 200],
        },
        Primitive::Box {
            center: [0.016, -0.006, 0.109],
            half_extents: [0.0018, 0.0018, 0.010],
            rotation: EulerAngles::default(),
            albedo: [200, 220, 220],
        },
        Primitive::Box {
            center: [0.0, 0.012, 0.110],
            half_extents: [0.004, 0.003, 0.003],
            rotation: EulerAngles::new(0.5, 0.0, 0.0),
            albedo: [90, 150, 210],
        },
        Primitive::Sphere {
            center: [-0.004, -0.014, 0.108],
            radius: 0.0035,
            albedo: [230, 200, 80],
        },
    ];
    let mut spec = SceneSpec {
        intrinsics: intr,
        primitives,
        texture: TextureSpec::default(),
        seed,
        targets: vec![],
    };
    let tips = [
        ("start_peg", Point3::new(-0.018, 0.004, 0.095)),
        ("end_peg", Point3::new(0.016, -0.006, 0.099)),
    ];
    for (name, tip) in tips {
        let u = (tip.x * intr.f / tip.z + intr.cx).round() as u32;
        let v = (tip.y * intr.f / tip.z + intr.cy).round() as u32;
        spec.targets.push(NamedTarget {
            name: name.into(),
            pixel: [u, v],
        });
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_intr() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 0.005, 80.0, 60.0, 160, 120).unwrap()
    }

    fn plane_at(z: f64) -> SceneSpec {
        SceneSpec {
            intrinsics: small_intr(),
            primitives: vec![Primitive::Plane {
                point: [0.0, 0.0, z],
                normal: [0.0, 0.0, -1.0],
                albedo: [200, 150, 120],
            }],
            texture: TextureSpec {
                scale: 0.0005,
                contrast: 0.5,
                octaves: 2,
            },
            seed: 11,
            targets: vec![],
        }
    }

    #[test]
    fn fronto_parallel_plane_has_constant_disparity() {
        let pair = gen_synthetic_scene(&plane_at(0.1)).unwrap();
        let expected = (200.0 * 0.005 / 0.1) as f32;
        assert_eq!(pair.disparity.valid_count(), 160 * 120);
        assert!(pair
            .disparity
            .iter_valid()
            .all(|(_, _, d)| (d - expected).abs() < 1e-5));
    }

    #[test]
    fn sphere_apex_disparity_oracle() {
        let spec = SceneSpec {
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.1],
                radius: 0.02,
                albedo: [255, 255, 255],
            }],
            ..plane_at(0.2)
        };
        let pair = gen_synthetic_scene(&spec).unwrap();
        // The ray through the principal point hits the sphere's closest point.
        let d = pair.disparity.get(80, 60).unwrap() as f64;
        assert!((d - 200.0 * 0.005 / (0.1 - 0.02)).abs() < 1e-4, "{d}");
        assert!(pair.disparity.get(0, 0).is_none());
    }

    #[test]
    fn warp_consistency_on_integer_shift() {
        // f·b/z = 10 exactly: the right view is the left view shifted by 10.
        let pair = gen_synthetic_scene(&plane_at(0.1)).unwrap();
        for v in 0..120 {
            for u in 10..160 {
                assert!(!pair.occluded[v as usize * 160 + u as usize]);
                assert_eq!(pair.right.get_pixel(u - 10, v), pair.left.get_pixel(u, v));
            }
            assert!(pair.occluded[v as usize * 160 + 5]);
        }
    }

    #[test]
    fn disparity_range_is_enforced() {
        assert!(matches!(
            gen_synthetic_scene(&plane_at(0.003)),
            Err(StereoError::Scene(_))
        ));
        let behind = SceneSpec {
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.01],
                radius: 0.02,
                albedo: [1, 1, 1],
            }],
            ..plane_at(0.1)
        };
        assert!(behind.validate().is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = peg_scene(small_intr(), 5);
        let a = gen_synthetic_scene(&spec).unwrap();
        let b = gen_synthetic_scene(&spec).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_scene(&SceneSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.left, c.left);
        assert_eq!(a.disparity, c.disparity);
    }

    #[test]
    fn json_round_trip() {
        let spec = peg_scene(small_intr(), 5);
        assert_eq!(SceneSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn box_front_face_depth() {
        let spec = SceneSpec {
            primitives: vec![Primitive::Box {
                center: [0.0, 0.0, 0.1],
                half_extents: [0.01, 0.01, 0.01],
                rotation: EulerAngles::default(),
                albedo: [9, 9, 9],
            }],
            ..plane_at(0.2)
        };
        let hit = spec.cast(80.0, 60.0).unwrap();
        assert!((hit.point.z - 0.09).abs() < 1e-12);
        assert!((hit.normal.z + 1.0).abs() < 1e-12);
    }
}
