//! Netpbm gray and color maps: P2/P5 (PGM) and P3/P6 (PPM) in, P5/P6 out.

use std::fmt;
use std::path::Path;

use irf_core::{ImagePlane, ImageStack};

/// Parse failure with the byte offset where it was noticed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ParseError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos >= self.data.len() {
                return err(self.pos, format!("unexpected end of file, expected {what}"));
            }
            return err(self.pos, format!("expected {what}"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| err(start, format!("{what} out of range")), Ok)
    }
}

/// Decode a PGM or PPM byte buffer. Samples are rescaled so that `maxval`
/// maps to 255.
pub fn decode(data: &[u8]) -> Result<ImageStack, ParseError> {
    if data.len() < 2 || data[0] != b'P' {
        return err(0, "not a netpbm file (missing 'P' magic)");
    }
    let (channels, binary) = match data[1] {
        b'2' => (1, false),
        b'5' => (1, true),
        b'3' => (3, false),
        b'6' => (3, true),
        _ => {
            return err(
                1,
                format!("unsupported netpbm variant P{}", data[1] as char),
            )
        }
    };
    let mut c = Cursor { data, pos: 2 };
    let cols = c.number("width")? as usize;
    let rows = c.number("height")? as usize;
    let maxval = c.number("maxval")?;
    if cols == 0 || rows == 0 {
        return err(c.pos, "zero image dimension");
    }
    if maxval == 0 || maxval > 65535 {
        return err(c.pos, format!("maxval {maxval} outside 1..=65535"));
    }
    let n = rows * cols * channels;
    let mut samples = Vec::with_capacity(n);
    if binary {
        if c.pos >= data.len() || !data[c.pos].is_ascii_whitespace() {
            return err(c.pos, "missing whitespace after maxval");
        }
        c.pos += 1;
        let width = if maxval > 255 { 2 } else { 1 };
        let need = n * width;
        if data.len() - c.pos < need {
            return err(
                data.len(),
                format!("truncated raster: {} of {need} bytes", data.len() - c.pos),
            );
        }
        let raster = &data[c.pos..c.pos + need];
        if width == 1 {
            samples.extend(raster.iter().map(|&b| b as u32));
        } else {
            samples.extend(
                raster
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32),
            );
        }
        for (i, &s) in samples.iter().enumerate() {
            if s > maxval {
                return err(
                    c.pos + i * width,
                    format!("sample {s} exceeds maxval {maxval}"),
                );
            }
        }
    } else {
        for _ in 0..n {
            c.skip_space();
            let at = c.pos;
            let s = c.number("sample")?;
            if s > maxval {
                return err(at, format!("sample {s} exceeds maxval {maxval}"));
            }
            samples.push(s);
        }
    }
    let scale = 255.0 / maxval as f64;
    let planes = (0..channels)
        .map(|ch| {
            ImagePlane::from_fn(rows, cols, |i, k| {
                let s = samples[(i * cols + k) * channels + ch] as f64;
                if maxval == 255 {
                    s
                } else {
                    s * scale
                }
            })
        })
        .collect();
    Ok(ImageStack::new(planes).expect("planes share a shape"))
}

/// Round half to even and clamp to a byte.
pub fn quantize(v: f64) -> u8 {
    if !(v > 0.0) {
        return 0;
    }
    v.round_ties_even().min(255.0) as u8
}

/// Encode one plane as P5 or three as P6.
pub fn encode(image: &ImageStack) -> Vec<u8> {
    let (rows, cols) = image.shape();
    let magic = if image.len() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    out.reserve(rows * cols * image.len());
    for i in 0..rows {
        for k in 0..cols {
            for ch in image.channels() {
                out.push(quantize(ch.get(i, k)));
            }
        }
    }
    out
}

pub fn read_image(path: &Path) -> std::io::Result<Result<ImageStack, ParseError>> {
    Ok(decode(&std::fs::read(path)?))
}

pub fn write_image(path: &Path, image: &ImageStack) -> std::io::Result<()> {
    if image.len() != 1 && image.len() != 3 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("cannot store {} channels as PGM/PPM", image.len()),
        ));
    }
    std::fs::write(path, encode(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_pgm() {
        let img = decode(b"P5\n2 2\n255\n\x00\x55\xaa\xff").unwrap();
        assert_eq!(img.len(), 1);
        assert_eq!(img.channel(0).as_slice(), &[0.0, 85.0, 170.0, 255.0]);
        let ascii = decode(b"P2\n# comment\n2 2 255\n0 85\n170 255\n").unwrap();
        assert_eq!(ascii, img);
    }

    #[test]
    fn ppm_has_three_planes() {
        let img = decode(b"P6 1 2 255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.len(), 3);
        assert_eq!(img.channel(1).as_slice(), &[2.0, 5.0]);
        assert_eq!(encode(&img), b"P6\n1 2\n255\n\x01\x02\x03\x04\x05\x06");
    }

    #[test]
    fn rescales_other_maxvals() {
        let img = decode(b"P2 2 1 15 0 15").unwrap();
        assert_eq!(img.channel(0).as_slice(), &[0.0, 255.0]);
        let wide = decode(b"P5 1 1 65535\n\xff\xff").unwrap();
        assert_eq!(wide.channel(0).get(0, 0), 255.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let e = decode(b"P5\n2 ").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(e.message.contains("height"));
        let e = decode(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
        assert_eq!(e.offset, 13);
        assert!(e.message.contains("truncated"));
        assert_eq!(decode(b"P7\n").unwrap_err().offset, 1);
        assert_eq!(decode(b"GIF89a").unwrap_err().offset, 0);
        assert_eq!(decode(b"P2 2 1 9 3 12").unwrap_err().offset, 11);
    }

    #[test]
    fn quantization_rounds_half_even() {
        assert_eq!(quantize(2.5), 2);
        assert_eq!(quantize(3.5), 4);
        assert_eq!(quantize(-4.0), 0);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(f64::NAN), 0);
    }
}
