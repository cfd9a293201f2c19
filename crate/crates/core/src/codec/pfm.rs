//! Single-channel PFM (`Pf`) reading and writing for ground-truth disparity.
//!
//! Rows are stored bottom to top. Masked pixels are written as `+inf`; on
//! read, anything non-finite or non-positive is masked.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::geometry::DisparityMap;

use super::CodecError;

pub fn write_pfm(mut out: impl Write, disp: &DisparityMap) -> Result<(), CodecError> {
    let (w, h) = disp.dimensions();
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let mut row = Vec::with_capacity(w as usize * 4);
    for v in (0..h).rev() {
        row.clear();
        for u in 0..w {
            row.extend_from_slice(&disp.get(u, v).unwrap_or(f32::INFINITY).to_le_bytes());
        }
        out.write_all(&row)?;
    }
    Ok(())
}

pub fn read_pfm(input: impl Read) -> Result<DisparityMap, CodecError> {
    let mut reader = BufReader::new(input);
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(CodecError::Pfm("truncated header".into()));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens.len() != 4 || tokens[0] != "Pf" {
        return Err(CodecError::Pfm(format!("unsupported header {tokens:?}")));
    }
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| CodecError::Pfm(format!("bad dimension {s:?}")))
    };
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| CodecError::Pfm(format!("bad scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(CodecError::Pfm(format!("bad scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let n = (w as usize)
        .checked_mul(h as usize)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| CodecError::Pfm(format!("{w}x{h} too large")))?;
    let mut bytes = vec![0u8; n * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| CodecError::Pfm("truncated pixel data".into()))?;
    let mut values = vec![0f32; n];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4 bytes");
        let d = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (u, v_from_bottom) = (i % w as usize, i / w as usize);
        values[(h as usize - 1 - v_from_bottom) * w as usize + u] = d;
    }
    DisparityMap::from_values(w, h, values).map_err(|e| CodecError::Pfm(e.to_string()))
}

pub fn save_pfm(path: impl AsRef<Path>, disp: &DisparityMap) -> Result<(), CodecError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_pfm(&mut out, disp)?;
    out.flush()?;
    Ok(())
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<DisparityMap, CodecError> {
    read_pfm(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_mask() {
        let disp =
            DisparityMap::from_fn(5, 3, |u, v| (u != v).then_some(u as f32 * 1.5 + v as f32));
        let mut buf = Vec::new();
        write_pfm(&mut buf, &disp).unwrap();
        assert!(buf.starts_with(b"Pf\n5 3\n-1.0\n"));
        assert_eq!(read_pfm(&buf[..]).unwrap(), disp);
    }

    #[test]
    fn bottom_row_first_on_disk() {
        let disp = DisparityMap::from_fn(1, 2, |_, v| Some(if v == 0 { 1.0 } else { 2.0 }));
        let mut buf = Vec::new();
        write_pfm(&mut buf, &disp).unwrap();
        let body = &buf[buf.len() - 8..];
        assert_eq!(f32::from_le_bytes(body[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn big_endian_and_errors() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend_from_slice(&3.25f32.to_be_bytes());
        assert_eq!(read_pfm(&buf[..]).unwrap().get(0, 0), Some(3.25));
        assert!(read_pfm(&b"PF\n1 1\n-1.0\n"[..]).is_err());
        assert!(read_pfm(&b"Pf\n2 2\n-1.0\n\0\0"[..]).is_err());
        assert!(read_pfm(&b"Pf\n"[..]).is_err());
    }
}
