//! Container-level helpers: JPEG and PNG encode/decode plus the integrity
//! checks that turn corrupted payloads into errors instead of garbage.

use std::io::Cursor;

use image::{ImageDecoder, RgbImage};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use zune_jpeg::zune_core::colorspace::ColorSpace;
use zune_jpeg::zune_core::options::DecoderOptions;
use zune_jpeg::JpegDecoder;

use super::CodecError;

const SOI: [u8; 2] = [0xFF, 0xD8];
/// APP15 segment carrying a CRC-32 of everything that follows it.
const CHECK_MARKER: [u8; 2] = [0xFF, 0xEF];
const CHECK_TAG: &[u8; 4] = b"SRMC";
const CHECK_SEGMENT_LEN: usize = 12;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Container {
    Jpeg,
    Png,
}

pub(crate) fn sniff(bytes: &[u8]) -> Option<Container> {
    if bytes.starts_with(&SOI) {
        Some(Container::Jpeg)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        Some(Container::Png)
    } else {
        None
    }
}

/// How the three channels are handed to the JPEG coder.
#[derive(Debug, Clone, Copy)]
pub(crate) enum JpegChannels {
    /// Colour image: RGB→YCbCr, chroma subsampled 2x2.
    Color,
    /// Channels coded as-is with no colour transform or subsampling.
    Raw,
}

pub(crate) fn encode_jpeg(
    width: u32,
    height: u32,
    pixels: &[u8],
    quality: u8,
    channels: JpegChannels,
) -> Result<Vec<u8>, CodecError> {
    let (w, h) = jpeg_dims(width, height)?;
    let mut body = Vec::with_capacity(pixels.len() / 8);
    let mut encoder = Encoder::new(&mut body, quality);
    let color = match channels {
        JpegChannels::Color => {
            encoder.set_sampling_factor(SamplingFactor::F_2_2);
            ColorType::Rgb
        }
        JpegChannels::Raw => {
            encoder.set_sampling_factor(SamplingFactor::F_1_1);
            ColorType::Ycbcr
        }
    };
    encoder
        .encode(pixels, w, h, color)
        .map_err(|e| CodecError::Encode(e.to_string()))?;

    let rest = &body[SOI.len()..];
    let mut out = Vec::with_capacity(body.len() + CHECK_SEGMENT_LEN);
    out.extend_from_slice(&SOI);
    out.extend_from_slice(&CHECK_MARKER);
    out.extend_from_slice(&((CHECK_SEGMENT_LEN - 2) as u16).to_be_bytes());
    out.extend_from_slice(CHECK_TAG);
    out.extend_from_slice(&crc32fast::hash(rest).to_be_bytes());
    out.extend_from_slice(rest);
    Ok(out)
}

fn jpeg_dims(width: u32, height: u32) -> Result<(u16, u16), CodecError> {
    match (u16::try_from(width), u16::try_from(height)) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(CodecError::Encode(format!(
            "cannot encode a {width}x{height} image"
        ))),
    }
}

fn verify_jpeg(bytes: &[u8]) -> Result<(), CodecError> {
    let header = 2 + CHECK_SEGMENT_LEN;
    if bytes.len() < header
        || bytes[..2] != SOI
        || bytes[2..4] != CHECK_MARKER
        || bytes[4..6] != ((CHECK_SEGMENT_LEN - 2) as u16).to_be_bytes()
        || &bytes[6..10] != CHECK_TAG
    {
        return Err(CodecError::Decode("missing JPEG integrity segment".into()));
    }
    let expected = u32::from_be_bytes(bytes[10..14].try_into().expect("4 bytes"));
    let actual = crc32fast::hash(&bytes[header..]);
    if expected != actual {
        return Err(CodecError::Decode(format!(
            "JPEG checksum mismatch ({expected:08x} != {actual:08x})"
        )));
    }
    Ok(())
}

/// Decodes a checked JPEG into 3 interleaved channels. With `raw = true` the
/// stored components are returned without colour conversion.
pub(crate) fn decode_jpeg(
    bytes: &[u8],
    raw: bool,
    max_dim: u32,
) -> Result<(u32, u32, Vec<u8>), CodecError> {
    verify_jpeg(bytes)?;
    let colorspace = if raw {
        ColorSpace::YCbCr
    } else {
        ColorSpace::RGB
    };
    let options = DecoderOptions::default()
        .set_max_width(max_dim as usize)
        .set_max_height(max_dim as usize)
        .set_strict_mode(true)
        .jpeg_set_out_colorspace(colorspace);
    let mut decoder = JpegDecoder::new_with_options(Cursor::new(bytes), options);
    let pixels = decoder
        .decode()
        .map_err(|e| CodecError::Decode(format!("jpeg: {e:?}")))?;
    let info = decoder
        .info()
        .ok_or_else(|| CodecError::Decode("jpeg: no header".into()))?;
    let (w, h) = (info.width as u32, info.height as u32);
    if pixels.len() != w as usize * h as usize * 3 {
        return Err(CodecError::Decode(format!(
            "jpeg: {} bytes for {w}x{h}",
            pixels.len()
        )));
    }
    Ok((w, h, pixels))
}

pub(crate) fn encode_png(width: u32, height: u32, pixels: &[u8]) -> Result<Vec<u8>, CodecError> {
    if width == 0 || height == 0 {
        return Err(CodecError::Encode(format!(
            "cannot encode a {width}x{height} image"
        )));
    }
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new_with_quality(
        &mut out,
        image::codecs::png::CompressionType::Fast,
        image::codecs::png::FilterType::Adaptive,
    );
    image::ImageEncoder::write_image(
        encoder,
        pixels,
        width,
        height,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| CodecError::Encode(e.to_string()))?;
    Ok(out)
}

/// Walks every chunk and checks its CRC; the stream must end exactly at IEND.
fn verify_png(bytes: &[u8]) -> Result<(), CodecError> {
    if !bytes.starts_with(&PNG_SIGNATURE) {
        return Err(CodecError::Decode("png: bad signature".into()));
    }
    let mut pos = PNG_SIGNATURE.len();
    loop {
        let header = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| CodecError::Decode("png: truncated chunk header".into()))?;
        let len = u32::from_be_bytes(header[..4].try_into().expect("4 bytes")) as usize;
        let kind = &header[4..8];
        let end = pos
            .checked_add(12)
            .and_then(|p| p.checked_add(len))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| CodecError::Decode("png: truncated chunk".into()))?;
        let stored = u32::from_be_bytes(bytes[end - 4..end].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[pos + 4..end - 4]) != stored {
            return Err(CodecError::Decode("png: chunk checksum mismatch".into()));
        }
        pos = end;
        if kind == b"IEND" {
            return if pos == bytes.len() {
                Ok(())
            } else {
                Err(CodecError::Decode("png: trailing bytes after IEND".into()))
            };
        }
    }
}

pub(crate) fn decode_png(bytes: &[u8], max_dim: u32) -> Result<(u32, u32, Vec<u8>), CodecError> {
    verify_png(bytes)?;
    let decoder = image::codecs::png::PngDecoder::new(Cursor::new(bytes))
        .map_err(|e| CodecError::Decode(format!("png: {e}")))?;
    let (w, h) = decoder.dimensions();
    if w > max_dim || h > max_dim {
        return Err(CodecError::Decode(format!(
            "png: {w}x{h} exceeds limit {max_dim}"
        )));
    }
    if decoder.color_type() != image::ColorType::Rgb8 {
        return Err(CodecError::Decode(format!(
            "png: unexpected colour type {:?}",
            decoder.color_type()
        )));
    }
    let mut pixels = vec![0; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut pixels)
        .map_err(|e| CodecError::Decode(format!("png: {e}")))?;
    Ok((w, h, pixels))
}

pub(crate) fn rgb_from_raw(w: u32, h: u32, pixels: Vec<u8>) -> Result<RgbImage, CodecError> {
    RgbImage::from_raw(w, h, pixels).ok_or_else(|| CodecError::Decode("pixel buffer size".into()))
}
