//! Grayscale images from PGM files, viewed as functions on `[0,1]²`.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major pixels scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image must have at least one pixel"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::arg("pixel values must lie in [0, 1]"));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    /// Bilinear interpolation with pixel `(r, c)` at `(c/(W−1), r/(H−1))`.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let (c0, c1, tc) = cell(x1, self.width);
        let (r0, r1, tr) = cell(x2, self.height);
        let top = (1.0 - tc) * self.pixel(r0, c0) + tc * self.pixel(r0, c1);
        let bottom = (1.0 - tc) * self.pixel(r1, c0) + tc * self.pixel(r1, c1);
        (1.0 - tr) * top + tr * bottom
    }
}

fn cell(x: f64, len: usize) -> (usize, usize, f64) {
    if len == 1 {
        return (0, 0, 0.0);
    }
    let pos = x.clamp(0.0, 1.0) * (len - 1) as f64;
    let i0 = (pos.floor() as usize).min(len - 2);
    (i0, i0 + 1, pos - i0 as f64)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Parses binary (`P5`) or ASCII (`P2`) PGM bytes.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err(cur.err("expected P2 or P5 magic"));
    }
    let binary = bytes[1] == b'5';
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let mut raw = Vec::with_capacity(count);
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected a single whitespace byte before the raster"));
        }
        cur.pos += 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let need = count * bpp;
        if bytes.len() - cur.pos < need {
            cur.pos = bytes.len();
            return Err(cur.err(format!("raster truncated: need {need} bytes")));
        }
        let data = &bytes[cur.pos..cur.pos + need];
        for i in 0..count {
            let v = if bpp == 2 {
                u32::from(u16::from_be_bytes([data[2 * i], data[2 * i + 1]]))
            } else {
                u32::from(data[i])
            };
            raw.push((cur.pos + i * bpp, v));
        }
    } else {
        for _ in 0..count {
            cur.skip_space_and_comments();
            let at = cur.pos;
            raw.push((at, cur.number("pixel value")?));
        }
    }
    let mut pixels = Vec::with_capacity(count);
    for (at, v) in raw {
        if v > maxval {
            return Err(Error::Parse {
                offset: at,
                message: format!("pixel {v} exceeds maxval {maxval}"),
            });
        }
        pixels.push(v as f64 / maxval as f64);
    }
    GrayImage::new(width, height, pixels)
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_binary() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 255, 0]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img.eval(0.0, 0.0), 0.0);
        assert_eq!(img.eval(1.0, 0.0), 1.0);
        assert_eq!(img.eval(0.0, 1.0), 1.0);
        assert_eq!(img.eval(0.5, 0.5), 0.5);
    }

    #[test]
    fn single_pixel_is_constant() {
        let img = parse_pgm(b"P2 1 1 10 7").unwrap();
        for (x, y) in [(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert_eq!(img.eval(x, y), 0.7);
        }
    }

    #[test]
    fn ascii_and_binary_agree() {
        let ascii = b"P2\n# a comment\n3 2\n# another\n1000\n0 500 1000\n250 750 125\n";
        let mut binary = b"P5 3 2 1000\n".to_vec();
        for v in [0u16, 500, 1000, 250, 750, 125] {
            binary.extend_from_slice(&v.to_be_bytes());
        }
        let a = parse_pgm(ascii).unwrap();
        let b = parse_pgm(&binary).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixel(1, 2), 0.125);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        match parse_pgm(b"P6 1 1 255 x").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 0),
            e => panic!("{e}"),
        }
        match parse_pgm(b"P5 2 2 255\n\x00\x01").unwrap_err() {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 13);
                assert!(message.contains("truncated"));
            }
            e => panic!("{e}"),
        }
        assert!(parse_pgm(b"P2 2 1 9 3 12").is_err());
        assert!(parse_pgm(b"P2 2 1 70000 3 12").is_err());
        assert!(parse_pgm(b"P2 two 1 9").is_err());
    }
}
