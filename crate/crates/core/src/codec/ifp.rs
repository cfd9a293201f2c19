use crate::geometry::DisparityMap;

use super::CodecError;

/// Resolution of the fractional channel.
pub const FRACTION_STEPS: f64 = 256.0;

/// Exclusive upper bound on representable disparity (after carry).
pub const MAX_DISPARITY: f64 = 256.0;

/// Integer / fraction / placeholder image, interleaved `[I, F, P]` per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IfpImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl IfpImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    /// Wraps interleaved bytes, e.g. from a decoded payload.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, CodecError> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(CodecError::Shape(format!(
                "{} bytes for a {width}x{height} IFP image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, u: u32, v: u32) -> usize {
        (v as usize * self.width as usize + u as usize) * 3
    }

    /// `(I, F, P)` at a pixel.
    pub fn get(&self, u: u32, v: u32) -> (u8, u8, u8) {
        let o = self.offset(u, v);
        (self.data[o], self.data[o + 1], self.data[o + 2])
    }

    pub fn set(&mut self, u: u32, v: u32, integer: u8, fraction: u8) {
        let o = self.offset(u, v);
        self.data[o] = integer;
        self.data[o + 1] = fraction;
        self.data[o + 2] = 0;
    }

    pub fn placeholder_is_zero(&self) -> bool {
        self.data.chunks_exact(3).all(|px| px[2] == 0)
    }
}

/// `I = floor(d)`, `F = round(frac(d)·256)` with carry into `I` when the
/// fraction rounds up to 256. Masked pixels become the `(0, 0)` sentinel, as
/// do valid disparities below half a fraction step.
pub fn split_ifp(disp: &DisparityMap) -> Result<IfpImage, CodecError> {
    let mut out = IfpImage::new(disp.width(), disp.height());
    for (u, v, d) in disp.iter_valid() {
        let (integer, fraction) =
            quantize(d as f64).ok_or(CodecError::DisparityOutOfRange { u, v, value: d })?;
        out.set(u, v, integer, fraction);
    }
    Ok(out)
}

#[inline]
fn quantize(d: f64) -> Option<(u8, u8)> {
    if !(d >= 0.0) {
        return None;
    }
    let mut integer = d.floor();
    let mut fraction = ((d - integer) * FRACTION_STEPS).round();
    if fraction >= FRACTION_STEPS {
        fraction = 0.0;
        integer += 1.0;
    }
    (integer < MAX_DISPARITY).then_some((integer as u8, fraction as u8))
}

/// `d = I + F/256`; the `(0, 0)` sentinel is masked.
pub fn merge_ifp(ifp: &IfpImage) -> DisparityMap {
    let values = ifp
        .as_raw()
        .chunks_exact(3)
        .map(|px| px[0] as f32 + px[1] as f32 / FRACTION_STEPS as f32)
        .collect();
    DisparityMap::from_values(ifp.width(), ifp.height(), values).expect("IFP shape")
}

/// Fraction values farther than this from the wrap point cannot have
/// produced a carry error.
const WRAP_MARGIN: u8 = 64;

/// Merge for IFP images that went through a lossy codec.
///
/// Pixels whose integer channel decodes as 0 are masked: codec noise around
/// the sentinel otherwise turns into spurious far points. Near a fraction
/// wrap (F close to 0 or 255) a small error in F flips the value by a whole
/// pixel; those pixels are snapped by ±1 towards the median of their 5x5
/// valid neighbourhood when that brings them within half a pixel of it.
pub fn merge_ifp_lossy(ifp: &IfpImage) -> DisparityMap {
    let (w, h) = ifp.dimensions();
    let raw = ifp.as_raw();
    let value = |i: usize| -> Option<f32> {
        let integer = raw[i * 3];
        (integer != 0).then(|| integer as f32 + raw[i * 3 + 1] as f32 / FRACTION_STEPS as f32)
    };
    let base: Vec<Option<f32>> = (0..w as usize * h as usize).map(value).collect();
    let mut out = DisparityMap::invalid(w, h);
    let mut window = Vec::with_capacity(25);
    for v in 0..h as i64 {
        for u in 0..w as i64 {
            let i = (v * w as i64 + u) as usize;
            let Some(d) = base[i] else { continue };
            let fraction = raw[i * 3 + 1];
            let mut fixed = d;
            let near_wrap = !(WRAP_MARGIN..=u8::MAX - WRAP_MARGIN).contains(&fraction);
            if near_wrap && jumps_from_neighbours(&base, w as i64, h as i64, u, v, d) {
                window.clear();
                for dv in -2..=2 {
                    for du in -2..=2 {
                        let (x, y) = (u + du, v + dv);
                        if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                            if let Some(n) = base[(y * w as i64 + x) as usize] {
                                window.push(n);
                            }
                        }
                    }
                }
                window.sort_by(f32::total_cmp);
                let median = window[window.len() / 2];
                if (d - median).abs() > 0.5 {
                    let candidate = if d > median { d - 1.0 } else { d + 1.0 };
                    if (candidate - median).abs() <= 0.5 {
                        fixed = candidate;
                    }
                }
            }
            out.set(u as u32, v as u32, fixed);
        }
    }
    out
}

/// True when some 4-neighbour differs by more than half a pixel.
fn jumps_from_neighbours(base: &[Option<f32>], w: i64, h: i64, u: i64, v: i64, d: f32) -> bool {
    [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(du, dv)| {
        let (x, y) = (u + du, v + dv);
        x >= 0
            && y >= 0
            && x < w
            && y < h
            && base[(y * w + x) as usize].is_some_and(|n| (n - d).abs() > 0.5)
    })
}
