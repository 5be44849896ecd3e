//! Binary PPM (P6, maxval 255) reader and writer.
//!
//! Reading accepts arbitrary header whitespace and `#` comments; writing
//! normalizes the header to `P6\n<w> <h>\n255\n`, so write(read(f)) always
//! reproduces the pixel payload byte-for-byte.

use crate::image::{ImageError, ImageRgb};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpmError {
    #[error("unsupported format: magic is {0:?}, only binary P6 is supported")]
    UnsupportedFormat(String),
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: header declares {expected} bytes, file holds {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<u32, PpmError> {
        let tok = self
            .token()
            .ok_or(PpmError::MalformedHeader("missing header field"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PpmError::MalformedHeader("header field is not a decimal number"))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRgb, PpmError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur
        .token()
        .ok_or(PpmError::MalformedHeader("empty file"))?;
    if magic != b"P6" {
        return Err(PpmError::UnsupportedFormat(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }
    let width = cur.number()? as usize;
    let height = cur.number()? as usize;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(PpmError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the payload
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(PpmError::MalformedHeader("missing separator before payload"));
    }
    cur.pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or(PpmError::MalformedHeader("dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PpmError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    Ok(ImageRgb::from_rgb8(width, height, &payload[..expected])?)
}

pub fn encode_ppm(image: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(&image.to_rgb8());
    out
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ImageRgb, PpmError> {
    decode_ppm(&fs::read(path)?)
}

/// Width and height from the header alone, without touching the payload.
pub fn read_ppm_dims(path: impl AsRef<Path>) -> Result<(usize, usize), PpmError> {
    use std::io::Read;
    let mut head = [0u8; 4096];
    let mut file = fs::File::open(path)?;
    let mut filled = 0;
    while filled < head.len() {
        let n = file.read(&mut head[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    let bytes = &head[..filled];
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token().ok_or(PpmError::MalformedHeader("empty file"))?;
    if magic != b"P6" {
        return Err(PpmError::UnsupportedFormat(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }
    let width = cur.number()? as usize;
    let height = cur.number()? as usize;
    Ok((width, height))
}

pub fn write_ppm(image: &ImageRgb, path: impl AsRef<Path>) -> Result<(), PpmError> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}
