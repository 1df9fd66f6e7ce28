//! Binary PPM (P6, maxval 255) codec.
//!
//! Header: `P6`, whitespace, width, whitespace, height, whitespace, `255`,
//! then exactly one whitespace byte before the RGB payload. `#` comments
//! are allowed between header tokens. The encoder always writes the
//! canonical header `P6\n<w> <h>\n255\n`.

use std::path::Path;

use super::ImageRecord;
use crate::error::{DecodeError, Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        return pos;
    }
}

fn read_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32, DecodeError> {
    *pos = skip_ws_and_comments(bytes, *pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(DecodeError::MalformedHeader(format!("missing {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DecodeError::MalformedHeader(format!("{what} out of range")))
}

fn parse_header(bytes: &[u8]) -> Result<Header, DecodeError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(DecodeError::BadMagic);
    }
    match bytes[1] {
        b'6' => {}
        d @ b'1'..=b'7' => return Err(DecodeError::UnsupportedFormat(format!("P{}", d as char))),
        _ => return Err(DecodeError::BadMagic),
    }
    let mut pos = 2;
    let width = read_number(bytes, &mut pos, "width")?;
    let height = read_number(bytes, &mut pos, "height")?;
    let maxval = read_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(DecodeError::MalformedHeader(format!(
            "zero extent {width}×{height}"
        )));
    }
    if maxval != 255 {
        return Err(DecodeError::UnsupportedMaxval(maxval));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => {
            return Err(DecodeError::MalformedHeader(
                "no whitespace after maxval".into(),
            ))
        }
        None => {
            return Err(DecodeError::Truncated {
                expected: width as usize * height as usize * 3,
                found: 0,
            })
        }
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        payload_start: pos,
    })
}

/// Decodes P6 bytes into `[3,H,W]` RGB values scaled by 1/255.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRecord> {
    let header = parse_header(bytes)?;
    let (w, h) = (header.width, header.height);
    let expected = w * h * 3;
    let payload = &bytes[header.payload_start..];
    if payload.len() < expected {
        return Err(DecodeError::Truncated {
            expected,
            found: payload.len(),
        }
        .into());
    }
    let plane = w * h;
    let mut data = vec![0.0f32; expected];
    for (p, rgb) in payload[..expected].chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = rgb[c] as f32 / 255.0;
        }
    }
    Ok(ImageRecord {
        pixels: Tensor::new(&[3, h, w], data)?,
        original_size: (h, w),
    })
}

pub fn decode_image(path: &Path) -> Result<ImageRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

/// Encodes a `[3,H,W]` tensor; values are clamped to [0,1] and rounded to
/// the nearest of 256 levels.
pub fn encode_ppm(pixels: &Tensor) -> Result<Vec<u8>> {
    let s = pixels.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Shape(format!(
            "PPM encoding needs [3,H,W], got {s:?}"
        )));
    }
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(plane * 3);
    let d = pixels.data();
    for p in 0..plane {
        for c in 0..3 {
            let v = d[c * plane + p];
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}
