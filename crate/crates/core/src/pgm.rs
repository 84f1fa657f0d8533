//! Binary greymap (`P5`, maxval 255) reading and writing.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Map an intensity in `[0, 1]` to a byte, rounding to nearest.
pub fn intensity_to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn byte_to_intensity(b: u8) -> f32 {
    b as f32 / 255.0
}

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                offset: start,
                msg: format!("expected {what}"),
            })
    }
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::Format {
            offset: 0,
            msg: "not a binary PGM (missing P5 magic)".into(),
        });
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format {
            offset: cur.pos,
            msg: format!("only maxval 255 is supported, got {maxval}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format {
            offset: cur.pos,
            msg: "missing whitespace after maxval".into(),
        });
    }
    let start = cur.pos + 1;
    let need = width * height;
    let raster = bytes
        .get(start..start + need)
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            msg: format!("raster truncated: need {need} bytes"),
        })?;
    Ok(GrayImage {
        width,
        height,
        data: raster.to_vec(),
    })
}

pub fn write(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(img)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scaling_endpoints() {
        assert_eq!(intensity_to_byte(1.0), 255);
        assert_eq!(intensity_to_byte(0.0), 0);
        assert_eq!(intensity_to_byte(0.5), 128);
    }

    #[test]
    fn header_with_comment() {
        let img = decode(b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(img.data, vec![0, 255]);
        assert_eq!((img.width, img.height), (2, 1));
    }

    #[test]
    fn rejects_wrong_magic_and_maxval() {
        assert!(matches!(
            decode(b"P2\n1 1\n255\n0"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_is_lossless(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let data: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = GrayImage { width: w, height: h, data };
            prop_assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }
}
