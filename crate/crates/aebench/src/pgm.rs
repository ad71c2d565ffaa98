//! Binary 16-bit PGM (`P5`, maxval 4095) holding 12-bit pixels.
use std::path::Path;

use aebench_core::{RawImage, MAX_DN};

use crate::error::{FormatError, FormatResult};
use crate::fsutil;

/// Serializes the pixels of `img`; exposure and timing are not stored.
pub fn encode(img: &RawImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", img.width(), img.height(), MAX_DN);
    let mut out = Vec::with_capacity(header.len() + 2 * img.pixel_count());
    out.extend_from_slice(header.as_bytes());
    for &v in img.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("expected a number in the header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("header number out of range")?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("header must end with a single whitespace byte".into());
    }
    Ok(Header {
        width: fields[0] as usize,
        height: fields[1] as usize,
        maxval: u32::try_from(fields[2]).map_err(|_| "maxval out of range")?,
        data_offset: pos + 1,
    })
}

/// Parses a PGM produced by [`encode`], tagging it with `exposure_us`.
pub fn decode(path: &Path, bytes: &[u8], exposure_us: f64) -> FormatResult<RawImage> {
    let bad = |message: String| FormatError::Pgm {
        path: path.to_path_buf(),
        message,
    };
    let h = parse_header(bytes).map_err(bad)?;
    if h.maxval != u32::from(MAX_DN) {
        return Err(bad(format!("maxval must be {MAX_DN}, got {}", h.maxval)));
    }
    if h.width == 0 || h.height == 0 {
        return Err(bad("empty image".into()));
    }
    let expected = h.width * h.height * 2;
    let payload = &bytes[h.data_offset..];
    if payload.len() != expected {
        return Err(bad(format!("expected {expected} data bytes, found {}", payload.len())));
    }
    let mut data = Vec::with_capacity(h.width * h.height);
    for chunk in payload.chunks_exact(2) {
        let v = u16::from_be_bytes([chunk[0], chunk[1]]);
        if v > MAX_DN {
            return Err(FormatError::DnOutOfRange {
                path: path.to_path_buf(),
                value: v,
            });
        }
        data.push(v);
    }
    Ok(RawImage::new(h.width, h.height, data, exposure_us)?)
}

pub fn write(path: &Path, img: &RawImage) -> FormatResult<()> {
    fsutil::write_atomic(path, &encode(img))
}

pub fn read(path: &Path, exposure_us: f64) -> FormatResult<RawImage> {
    decode(path, &fsutil::read(path)?, exposure_us)
}
