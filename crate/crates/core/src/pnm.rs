//! Binary PGM (P5) images and grayscale PFM (Pf) disparity maps.
//!
//! PGM carries the 8-bit camera images; PFM carries real-valued disparity
//! maps with quiet NaN as the invalid-pixel sentinel. PFM scanlines follow
//! the common bottom-to-top convention and the scale line's sign selects
//! the payload endianness (negative = little-endian). Both endiannesses are
//! accepted on read; files are written little-endian.

use crate::error::{Error, Result};
use crate::image::{DisparityMap, GrayImage};

/// Decodes a binary PGM ("P5", maxval 255) byte stream.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.token()?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"P5\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = cur.ascii_usize("width")?;
    let height = cur.ascii_usize("height")?;
    let maxval = cur.ascii_usize("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval}, only 255 supported")));
    }
    cur.single_whitespace()?;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let payload = cur.rest();
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {} for {}x{}",
            payload.len(),
            expected,
            width,
            height
        )));
    }
    GrayImage::from_vec(width, height, payload.to_vec())
        .map_err(|e| Error::Format(e.to_string()))
}

/// Encodes an image in canonical binary PGM form.
pub fn write_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.as_slice());
    out
}

/// Decodes a grayscale PFM ("Pf") byte stream.
pub fn read_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.token()?;
    match magic {
        b"Pf" => {}
        b"PF" => {
            return Err(Error::Format(
                "color PFM (\"PF\") is not supported, expected grayscale \"Pf\"".into(),
            ))
        }
        other => {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"Pf\"",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let width = cur.ascii_usize("width")?;
    let height = cur.ascii_usize("height")?;
    let scale: f64 = cur
        .token()
        .and_then(|t| {
            std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format("unparsable scale line".into()))
        })
        .map_err(|_| Error::Format("unparsable scale line".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("scale {scale} must be finite and non-zero")));
    }
    let little_endian = scale < 0.0;
    cur.single_whitespace()?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let payload = cur.rest();
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {} for {}x{}",
            payload.len(),
            expected,
            width,
            height
        )));
    }
    let mut data = vec![0.0f64; width * height];
    // Scanlines are stored bottom-up.
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let off = (src_row * width + x) * 4;
            let word: [u8; 4] = payload[off..off + 4].try_into().expect("bounds checked");
            let bits = if little_endian {
                u32::from_le_bytes(word)
            } else {
                u32::from_be_bytes(word)
            };
            data[y * width + x] = f32::from_bits(bits) as f64;
        }
    }
    DisparityMap::from_vec(width, height, data).map_err(|e| Error::Format(e.to_string()))
}

/// Encodes a disparity map as little-endian grayscale PFM.
///
/// The payload is single precision: values read from a PFM file round-trip
/// bit-exactly, and invalid pixels are written as the IEEE quiet-NaN pattern.
pub fn write_pfm(map: &DisparityMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width(), map.height()).into_bytes();
    out.reserve(map.width() * map.height() * 4);
    for y in (0..map.height()).rev() {
        for x in 0..map.width() {
            out.extend_from_slice(&(map.get(x, y) as f32).to_bits().to_le_bytes());
        }
    }
    out
}

/// Header scanner shared by the PNM readers. Tokens are separated by
/// whitespace; `#` starts a comment running to the end of the line.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::Format("truncated header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn ascii_usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        let s = std::str::from_utf8(tok)
            .map_err(|_| Error::Format(format!("non-ASCII {what} field")))?;
        let value: usize = s
            .parse()
            .map_err(|_| Error::Format(format!("unparsable {what} {s:?}")))?;
        if value == 0 {
            return Err(Error::Format(format!("{what} must be positive")));
        }
        Ok(value)
    }

    /// Exactly one whitespace byte separates the header from the payload.
    fn single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Format("missing separator before payload".into()))
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
