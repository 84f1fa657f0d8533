//! Bags, patches and the geometry shared by every sampler.
//!
//! A bag is one grayscale image with a single binary label. Patches are
//! square windows addressed by their integer top-left corner; samplers that
//! work with real-valued centers go through [`clamp_center`].

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchCoord {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl PatchCoord {
    pub fn new(row: usize, col: usize, size: usize) -> Self {
        PatchCoord { row, col, size }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.row + self.size <= height && self.col + self.size <= width
    }

    /// Real-valued center of the window.
    pub fn center(&self) -> (f64, f64) {
        let half = self.size as f64 / 2.0;
        (self.row as f64 + half, self.col as f64 + half)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBag {
    pub id: String,
    pub height: usize,
    pub width: usize,
    /// Row-major intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub label: u8,
    /// Per-pixel ground truth of discriminative regions. Synthetic data only;
    /// never read by training.
    pub truth_mask: Option<Vec<u8>>,
}

impl ImageBag {
    pub fn new(
        id: impl Into<String>,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
        label: u8,
    ) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape {
                expected: height * width,
                actual: pixels.len(),
            });
        }
        if label > 1 {
            return Err(Error::Config(format!(
                "bag label must be 0 or 1, got {label}"
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Numeric(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(ImageBag {
            id: id.into(),
            height,
            width,
            pixels,
            label,
            truth_mask: None,
        })
    }

    pub fn with_truth_mask(mut self, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::Shape {
                expected: self.pixels.len(),
                actual: mask.len(),
            });
        }
        self.truth_mask = Some(mask);
        Ok(self)
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Whether the truth mask marks `(row, col)`. False when no mask exists.
    pub fn in_truth(&self, row: usize, col: usize) -> bool {
        match &self.truth_mask {
            Some(mask) if row < self.height && col < self.width => {
                mask[row * self.width + col] != 0
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub coord: PatchCoord,
    /// `size * size` intensities, row-major.
    pub pixels: Vec<f32>,
}

impl Patch {
    pub fn size(&self) -> usize {
        self.coord.size
    }
}

/// Copy the window at `coord` out of `bag`.
pub fn extract_patch(bag: &ImageBag, coord: PatchCoord) -> Result<Patch> {
    if !coord.fits(bag.height, bag.width) {
        return Err(Error::OutOfBounds {
            coord,
            height: bag.height,
            width: bag.width,
        });
    }
    let mut pixels = Vec::with_capacity(coord.size * coord.size);
    for r in coord.row..coord.row + coord.size {
        let start = r * bag.width + coord.col;
        pixels.extend_from_slice(&bag.pixels[start..start + coord.size]);
    }
    Ok(Patch { coord, pixels })
}

/// Top-left corner of the `size`-square window centered nearest to a real
/// point, clamped so the window lies inside a `height x width` image.
///
/// Rounding is `floor(center - size / 2)`; non-finite inputs saturate.
pub fn clamp_center(
    center_row: f64,
    center_col: f64,
    size: usize,
    height: usize,
    width: usize,
) -> PatchCoord {
    debug_assert!(height >= size && width >= size);
    let half = size as f64 / 2.0;
    let axis = |c: f64, extent: usize| -> usize {
        let max = (extent - size) as f64;
        // `as` saturates and maps NaN to 0.
        (c - half).floor().clamp(0.0, max) as usize
    };
    PatchCoord::new(axis(center_row, height), axis(center_col, width), size)
}

/// Inclusive range of real centers whose window needs no clamping.
pub fn center_range(size: usize, extent: usize) -> (f64, f64) {
    let half = size as f64 / 2.0;
    (half, extent as f64 - half)
}
