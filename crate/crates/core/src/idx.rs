//! Reader for the IDX files MNIST ships in.
//!
//! Images: magic `0x00000803`, then item count, rows and columns as
//! big-endian `u32`, then one unsigned byte per pixel. Labels: magic
//! `0x00000801`, item count, then one byte per label.

use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{GlyphSet, GlyphSource};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            msg: format!("truncated header: missing {what}"),
        })
}

/// Parse an image/label IDX pair already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<GlyphSet> {
    let magic = be_u32(images, 0, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = be_u32(images, 4, "image count")? as usize;
    let rows = be_u32(images, 8, "row count")? as usize;
    let cols = be_u32(images, 12, "column count")? as usize;
    if rows != cols || rows == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("glyphs must be square and non-empty, got {rows}x{cols}"),
        });
    }

    let magic = be_u32(labels, 0, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let label_count = be_u32(labels, 4, "label count")? as usize;
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            msg: format!("labels header counts {label_count} items, images header counts {count}"),
        });
    }

    let pixel_bytes = count * rows * cols;
    if images.len() < 16 + pixel_bytes {
        return Err(Error::Format {
            offset: images.len(),
            msg: format!("images truncated: need {} bytes", 16 + pixel_bytes),
        });
    }
    if labels.len() < 8 + count {
        return Err(Error::Format {
            offset: labels.len(),
            msg: format!("labels truncated: need {} bytes", 8 + count),
        });
    }

    let glyph_len = rows * cols;
    let glyphs = images[16..16 + pixel_bytes]
        .chunks_exact(glyph_len)
        .map(|g| g.iter().map(|&b| b as f32 / 255.0).collect())
        .collect();
    let mut classes = Vec::with_capacity(count);
    for (i, &c) in labels[8..8 + count].iter().enumerate() {
        if c > 9 {
            return Err(Error::Format {
                offset: 8 + i,
                msg: format!("label {c} outside 0..=9"),
            });
        }
        classes.push(c);
    }
    GlyphSet::new(rows, glyphs, classes, GlyphSource::Idx)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<GlyphSet> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

/// Serialize a glyph set back to an IDX pair. Intensities are quantized to bytes.
pub fn encode_idx(set: &GlyphSet) -> (Vec<u8>, Vec<u8>) {
    let n = set.len() as u32;
    let g = set.glyph_size as u32;
    let mut images = Vec::with_capacity(16 + set.len() * (g * g) as usize);
    for word in [IMAGES_MAGIC, n, g, g] {
        images.extend_from_slice(&word.to_be_bytes());
    }
    for glyph in &set.glyphs {
        images.extend(glyph.iter().map(|&v| (v * 255.0).round() as u8));
    }
    let mut labels = Vec::with_capacity(8 + set.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend_from_slice(&set.classes);
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_pair(n: u32, label_n: u32) -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        for w in [IMAGES_MAGIC, n, 28, 28] {
            images.extend_from_slice(&w.to_be_bytes());
        }
        for i in 0..n as usize * 784 {
            images.push(if i % 784 == 0 { 255 } else { 0 });
        }
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&label_n.to_be_bytes());
        labels.extend((0..label_n).map(|i| (i % 10) as u8));
        (images, labels)
    }

    #[test]
    fn parses_well_formed_pair() {
        let (im, lb) = sample_pair(10, 10);
        let set = parse_idx(&im, &lb).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set.glyph_size, 28);
        assert!(set.glyphs.iter().all(|g| g.len() == 784));
        assert_eq!(set.glyphs[0][0], 1.0);
        assert_eq!(set.glyphs[0][1], 0.0);
    }

    #[test]
    fn count_mismatch_is_reported_at_label_header() {
        let (im, lb) = sample_pair(10, 9);
        match parse_idx(&im, &lb) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, 4);
                assert!(msg.contains("9") && msg.contains("10"));
            }
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_reported_at_zero() {
        let (mut im, lb) = sample_pair(2, 2);
        im[3] = 0x01;
        assert!(matches!(
            parse_idx(&im, &lb),
            Err(Error::Format { offset: 0, .. })
        ));
        let (im, mut lb) = sample_pair(2, 2);
        lb[3] = 0x03;
        assert!(matches!(
            parse_idx(&im, &lb),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_reports_file_length() {
        let (im, lb) = sample_pair(3, 3);
        let cut = &im[..im.len() - 1];
        assert!(
            matches!(parse_idx(cut, &lb), Err(Error::Format { offset, .. }) if offset == cut.len())
        );
        assert!(matches!(
            parse_idx(&im[..10], &lb),
            Err(Error::Format { offset: 10, .. })
        ));
        assert!(matches!(
            parse_idx(&im, &lb[..9]),
            Err(Error::Format { offset: 9, .. })
        ));
    }
}
