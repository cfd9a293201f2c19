use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::geometry::DisparityMap;

use super::payload::{self, Container, JpegChannels};
use super::{merge_ifp, merge_ifp_lossy, CodecError, IfpImage};

/// Streaming default.
pub const DEFAULT_QUALITY: Quality = Quality::Lossy(90);

/// JPEG quality, or the PNG-backed exact mode used for regression runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quality {
    Lossy(u8),
    Lossless,
}

impl Quality {
    pub fn lossy(q: u8) -> Result<Self, CodecError> {
        if (1..=100).contains(&q) {
            Ok(Quality::Lossy(q))
        } else {
            Err(CodecError::Quality(q.to_string()))
        }
    }

    pub fn is_lossless(self) -> bool {
        matches!(self, Quality::Lossless)
    }
}

impl Default for Quality {
    fn default() -> Self {
        DEFAULT_QUALITY
    }
}

impl FromStr for Quality {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("lossless") {
            return Ok(Quality::Lossless);
        }
        s.parse::<u8>()
            .map_err(|_| CodecError::Quality(s.to_string()))
            .and_then(Quality::lossy)
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quality::Lossy(q) => write!(f, "{q}"),
            Quality::Lossless => f.write_str("lossless"),
        }
    }
}

/// Compressed colour + IFP pair for one captured frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub rgb_payload: Vec<u8>,
    pub ifp_payload: Vec<u8>,
    pub quality: Quality,
    pub capture_timestamp_us: u64,
    pub sequence: u64,
}

impl EncodedFrame {
    pub fn total_bytes(&self) -> usize {
        self.rgb_payload.len() + self.ifp_payload.len()
    }
}

/// Flattened RGB-D size at 3 colour bytes + 1 disparity byte per pixel.
pub fn raw_frame_bytes(width: u32, height: u32) -> usize {
    width as usize * height as usize * 4
}

pub fn encode_frame(
    rgb: &RgbImage,
    ifp: &IfpImage,
    quality: Quality,
) -> Result<EncodedFrame, CodecError> {
    if rgb.dimensions() != ifp.dimensions() {
        return Err(CodecError::Shape(format!(
            "rgb {:?} vs ifp {:?}",
            rgb.dimensions(),
            ifp.dimensions()
        )));
    }
    let (w, h) = rgb.dimensions();
    let (rgb_payload, ifp_payload) = match quality {
        Quality::Lossy(q) => (
            payload::encode_jpeg(w, h, rgb.as_raw(), q, JpegChannels::Color)?,
            payload::encode_jpeg(w, h, ifp.as_raw(), q, JpegChannels::Raw)?,
        ),
        Quality::Lossless => (
            payload::encode_png(w, h, rgb.as_raw())?,
            payload::encode_png(w, h, ifp.as_raw())?,
        ),
    };
    Ok(EncodedFrame {
        rgb_payload,
        ifp_payload,
        quality,
        capture_timestamp_us: 0,
        sequence: 0,
    })
}

/// Bounds applied while decoding untrusted payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeLimits {
    pub max_dimension: u32,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        Self {
            max_dimension: 4096,
        }
    }
}

/// Decodes both payloads. The container is recognised from its signature;
/// both must use the same one and agree on dimensions. The placeholder
/// channel is returned as decoded.
pub fn decode_frame(enc: &EncodedFrame) -> Result<(RgbImage, IfpImage), CodecError> {
    decode_payloads(&enc.rgb_payload, &enc.ifp_payload, DecodeLimits::default())
        .map(|(rgb, ifp, _)| (rgb, ifp))
}

pub(crate) fn decode_payloads(
    rgb: &[u8],
    ifp: &[u8],
    limits: DecodeLimits,
) -> Result<(RgbImage, IfpImage, bool), CodecError> {
    let kind =
        payload::sniff(rgb).ok_or_else(|| CodecError::Decode("unknown rgb container".into()))?;
    if payload::sniff(ifp) != Some(kind) {
        return Err(CodecError::Decode("rgb and ifp containers differ".into()));
    }
    let max = limits.max_dimension;
    let ((rw, rh, rgb_px), (iw, ih, ifp_px)) = match kind {
        Container::Jpeg => (
            payload::decode_jpeg(rgb, false, max)?,
            payload::decode_jpeg(ifp, true, max)?,
        ),
        Container::Png => (
            payload::decode_png(rgb, max)?,
            payload::decode_png(ifp, max)?,
        ),
    };
    if (rw, rh) != (iw, ih) {
        return Err(CodecError::Shape(format!("rgb {rw}x{rh} vs ifp {iw}x{ih}")));
    }
    let lossless = kind == Container::Png;
    Ok((
        payload::rgb_from_raw(rw, rh, rgb_px)?,
        IfpImage::from_raw(iw, ih, ifp_px)?,
        lossless,
    ))
}

/// Decodes a frame all the way to colour + disparity, choosing the exact or
/// the lossy merge by container.
pub fn decode_disparity(enc: &EncodedFrame) -> Result<(RgbImage, DisparityMap), CodecError> {
    decode_disparity_with(&enc.rgb_payload, &enc.ifp_payload, DecodeLimits::default())
}

pub fn decode_disparity_with(
    rgb: &[u8],
    ifp: &[u8],
    limits: DecodeLimits,
) -> Result<(RgbImage, DisparityMap), CodecError> {
    let (rgb, ifp, lossless) = decode_payloads(rgb, ifp, limits)?;
    let disp = if lossless {
        merge_ifp(&ifp)
    } else {
        merge_ifp_lossy(&ifp)
    };
    Ok((rgb, disp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::split_ifp;

    fn sample(w: u32, h: u32) -> (RgbImage, IfpImage) {
        let rgb = RgbImage::from_fn(w, h, |u, v| {
            image::Rgb([(u * 7) as u8, (v * 5) as u8, ((u + v) * 3) as u8])
        });
        let disp =
            DisparityMap::from_fn(w, h, |u, v| Some(10.0 + u as f32 * 0.37 + v as f32 * 0.11));
        (rgb, split_ifp(&disp).unwrap())
    }

    #[test]
    fn quality_parsing() {
        assert_eq!("lossless".parse::<Quality>().unwrap(), Quality::Lossless);
        assert_eq!("90".parse::<Quality>().unwrap(), Quality::Lossy(90));
        assert!("0".parse::<Quality>().is_err());
        assert!("101".parse::<Quality>().is_err());
        assert!("high".parse::<Quality>().is_err());
        assert_eq!(Quality::Lossy(42).to_string(), "42");
    }

    #[test]
    fn lossless_round_trip_is_exact() {
        let (rgb, ifp) = sample(37, 21);
        let enc = encode_frame(&rgb, &ifp, Quality::Lossless).unwrap();
        let (rgb2, ifp2) = decode_frame(&enc).unwrap();
        assert_eq!(rgb2, rgb);
        assert_eq!(ifp2, ifp);
    }

    #[test]
    fn lossy_round_trip_keeps_dimensions() {
        let (rgb, ifp) = sample(37, 21);
        let enc = encode_frame(&rgb, &ifp, Quality::Lossy(90)).unwrap();
        let (rgb2, ifp2) = decode_frame(&enc).unwrap();
        assert_eq!(rgb2.dimensions(), (37, 21));
        assert_eq!(ifp2.dimensions(), (37, 21));
    }

    #[test]
    fn truncation_is_an_error() {
        let (rgb, ifp) = sample(16, 16);
        for quality in [Quality::Lossy(90), Quality::Lossless] {
            let mut enc = encode_frame(&rgb, &ifp, quality).unwrap();
            enc.ifp_payload.pop();
            assert!(
                matches!(decode_frame(&enc), Err(CodecError::Decode(_))),
                "{quality}"
            );
        }
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let (rgb, ifp) = sample(16, 8);
        for quality in [Quality::Lossy(75), Quality::Lossless] {
            let enc = encode_frame(&rgb, &ifp, quality).unwrap();
            for bit in 0..enc.rgb_payload.len() * 8 {
                let mut bad = enc.clone();
                bad.rgb_payload[bit / 8] ^= 1 << (bit % 8);
                assert!(decode_frame(&bad).is_err(), "{quality} bit {bit}");
            }
        }
    }

    #[test]
    fn zero_size_and_mismatched_inputs() {
        let ifp = IfpImage::new(0, 0);
        assert!(matches!(
            encode_frame(&RgbImage::new(0, 0), &ifp, Quality::Lossy(90)),
            Err(CodecError::Encode(_))
        ));
        assert!(matches!(
            encode_frame(&RgbImage::new(0, 0), &ifp, Quality::Lossless),
            Err(CodecError::Encode(_))
        ));
        assert!(matches!(
            encode_frame(
                &RgbImage::new(4, 4),
                &IfpImage::new(4, 5),
                Quality::Lossless
            ),
            Err(CodecError::Shape(_))
        ));
    }

    #[test]
    fn mixed_containers_rejected() {
        let (rgb, ifp) = sample(8, 8);
        let a = encode_frame(&rgb, &ifp, Quality::Lossy(90)).unwrap();
        let b = encode_frame(&rgb, &ifp, Quality::Lossless).unwrap();
        let mixed = EncodedFrame {
            ifp_payload: b.ifp_payload,
            ..a
        };
        assert!(decode_frame(&mixed).is_err());
    }
}
