//! Synthetic bag datasets: glyph tiles pasted onto a black canvas, where a
//! bag is positive iff it contains at least one glyph of the target class.
//!
//! Two layouts are supported. `Sparse` scatters every glyph uniformly;
//! `Clustered` draws target glyphs around one common center so the
//! discriminative region is concentrated in space.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag::ImageBag;
use crate::error::{Error, Result};
use crate::seeds::{self, tag, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphSource {
    Idx,
    Procedural,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSet {
    pub glyph_size: usize,
    /// `glyph_size * glyph_size` tiles, row-major, intensities in `[0, 1]`.
    pub glyphs: Vec<Vec<f32>>,
    pub classes: Vec<u8>,
    pub source: GlyphSource,
}

impl GlyphSet {
    pub fn new(
        glyph_size: usize,
        glyphs: Vec<Vec<f32>>,
        classes: Vec<u8>,
        source: GlyphSource,
    ) -> Result<Self> {
        if glyphs.len() != classes.len() {
            return Err(Error::Shape {
                expected: glyphs.len(),
                actual: classes.len(),
            });
        }
        let want = glyph_size * glyph_size;
        if let Some(g) = glyphs.iter().find(|g| g.len() != want) {
            return Err(Error::Shape {
                expected: want,
                actual: g.len(),
            });
        }
        if glyphs.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numeric("glyph intensity outside [0, 1]".into()));
        }
        if let Some(c) = classes.iter().find(|&&c| c > 9) {
            return Err(Error::Config(format!("glyph class {c} outside 0..=9")));
        }
        Ok(GlyphSet {
            glyph_size,
            glyphs,
            classes,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn indices_of(&self, class: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.classes[i] == class)
            .collect()
    }

    pub fn indices_except(&self, class: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.classes[i] != class)
            .collect()
    }
}

/// Glyph side used by [`procedural_glyphs`], matching MNIST.
pub const PROCEDURAL_GLYPH_SIZE: usize = 28;
const VARIANTS_PER_CLASS: usize = 8;

// Seven-segment layout: a top, b upper right, c lower right, d bottom,
// e lower left, f upper left, g middle. x and y are the two diagonals; the
// 9 is drawn as a cross so no partial view of another digit resembles it.
const SEGMENTS: [&str; 10] = [
    "abcdef", "bc", "abdeg", "abcdg", "bcfg", "acdfg", "acdefg", "abc", "abcdefg", "xy",
];

fn segment_endpoints(seg: char) -> ((f64, f64), (f64, f64)) {
    const L: f64 = 0.28;
    const R: f64 = 0.72;
    const T: f64 = 0.18;
    const M: f64 = 0.5;
    const B: f64 = 0.82;
    match seg {
        'a' => ((T, L), (T, R)),
        'b' => ((T, R), (M, R)),
        'c' => ((M, R), (B, R)),
        'd' => ((B, L), (B, R)),
        'e' => ((M, L), (B, L)),
        'f' => ((T, L), (M, L)),
        'g' => ((M, L), (M, R)),
        'x' => ((T, L), (B, R)),
        'y' => ((T, R), (B, L)),
        _ => unreachable!("unknown segment {seg}"),
    }
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let len2 = dr * dr + dc * dc;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dr + (p.1 - a.1) * dc) / len2).clamp(0.0, 1.0)
    };
    let (qr, qc) = (a.0 + t * dr, a.1 + t * dc);
    ((p.0 - qr).powi(2) + (p.1 - qc).powi(2)).sqrt()
}

fn render_digit(class: usize, size: usize, rng: &mut Rng) -> Vec<f32> {
    let s = size as f64;
    let jitter = 0.035;
    let shift = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04));
    let half_width = rng.random_range(0.055..0.075) * s;
    let strokes: Vec<_> = SEGMENTS[class]
        .chars()
        .map(|seg| {
            let (a, b) = segment_endpoints(seg);
            let mut j = |p: (f64, f64)| {
                (
                    (p.0 + shift.0 + rng.random_range(-jitter..jitter)) * s,
                    (p.1 + shift.1 + rng.random_range(-jitter..jitter)) * s,
                )
            };
            (j(a), j(b))
        })
        .collect();
    let mut tile = vec![0.0f32; size * size];
    for r in 0..size {
        for c in 0..size {
            let p = (r as f64 + 0.5, c as f64 + 0.5);
            let d = strokes
                .iter()
                .map(|&(a, b)| distance_to_segment(p, a, b))
                .fold(f64::INFINITY, f64::min);
            // one-pixel linear falloff at the stroke edge
            let v = (half_width + 0.5 - d).clamp(0.0, 1.0);
            // byte-quantized so datasets survive a PGM round trip unchanged
            tile[r * size + c] = (v * 255.0).round() as f32 / 255.0;
        }
    }
    tile
}

/// Deterministic stand-in for MNIST: jittered seven-segment digits (the 9
/// is a diagonal cross), several variants per class, rendered into 28x28
/// tiles.
pub fn procedural_glyphs(seed: u64) -> GlyphSet {
    procedural_glyphs_sized(seed, PROCEDURAL_GLYPH_SIZE)
}

pub fn procedural_glyphs_sized(seed: u64, size: usize) -> GlyphSet {
    let mut rng = seeds::stream(seed, &[tag::GLYPHS]);
    let mut glyphs = Vec::with_capacity(10 * VARIANTS_PER_CLASS);
    let mut classes = Vec::with_capacity(10 * VARIANTS_PER_CLASS);
    for class in 0..10 {
        for _ in 0..VARIANTS_PER_CLASS {
            glyphs.push(render_digit(class, size, &mut rng));
            classes.push(class as u8);
        }
    }
    GlyphSet::new(size, glyphs, classes, GlyphSource::Procedural)
        .expect("procedural glyphs are well-formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Sparse,
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub bag_size: usize,
    pub glyph_count_per_bag: usize,
    pub target_class: u8,
    pub positive_target_count_min: usize,
    pub layout: Layout,
    pub cluster_radius: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::desk(Layout::Sparse)
    }
}

impl SynthConfig {
    /// 1024x1024 canvases, 1000 train and 400 test bags.
    pub fn paper(layout: Layout) -> Self {
        SynthConfig {
            bag_size: 1024,
            glyph_count_per_bag: 150,
            target_class: 9,
            positive_target_count_min: 1,
            layout,
            cluster_radius: 40.0,
            seed: 0,
            n_train: 1000,
            n_test: 400,
        }
    }

    /// 256x256 canvases, 200 train and 80 test bags.
    pub fn desk(layout: Layout) -> Self {
        SynthConfig {
            bag_size: 256,
            glyph_count_per_bag: 12,
            target_class: 9,
            positive_target_count_min: 1,
            layout,
            cluster_radius: 24.0,
            seed: 0,
            n_train: 200,
            n_test: 80,
        }
    }

    pub fn validate(&self, glyph_size: usize) -> Result<()> {
        if self.bag_size < glyph_size {
            return Err(Error::Config(format!(
                "bag_size {} smaller than glyph size {glyph_size}",
                self.bag_size
            )));
        }
        if self.positive_target_count_min < 1 {
            return Err(Error::Config(
                "positive_target_count_min must be >= 1".into(),
            ));
        }
        if self.positive_target_count_min > self.glyph_count_per_bag {
            return Err(Error::Config(
                "positive_target_count_min exceeds glyph_count_per_bag".into(),
            ));
        }
        if self.target_class > 9 {
            return Err(Error::Config("target_class must be a digit".into()));
        }
        if self.layout == Layout::Clustered
            && (self.cluster_radius.is_nan() || self.cluster_radius <= 0.0)
        {
            return Err(Error::Config(
                "cluster_radius must be > 0 for clustered layout".into(),
            ));
        }
        Ok(())
    }
}

const PLACEMENT_ATTEMPTS: usize = 500;
const BAG_RESTARTS: usize = 20;

fn overlaps(a: (usize, usize), b: (usize, usize), g: usize) -> bool {
    a.0 < b.0 + g && b.0 < a.0 + g && a.1 < b.1 + g && b.1 < a.1 + g
}

fn free(pos: (usize, usize), placed: &[(usize, usize)], g: usize) -> bool {
    placed.iter().all(|&p| !overlaps(pos, p, g))
}

/// Top-left corners: targets first, then the rest. `None` when some glyph
/// could not be placed within the attempt budget.
fn place(
    cfg: &SynthConfig,
    g: usize,
    n_targets: usize,
    rng: &mut Rng,
) -> Option<Vec<(usize, usize)>> {
    let max_tl = cfg.bag_size - g;
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(cfg.glyph_count_per_bag);
    let half = g as f64 / 2.0;

    let cluster = (cfg.layout == Layout::Clustered).then(|| {
        let lo = half;
        let hi = cfg.bag_size as f64 - half;
        (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
    });

    for i in 0..cfg.glyph_count_per_bag {
        let is_target = i < n_targets;
        let mut ok = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let pos = match cluster {
                Some((cr, cc)) if is_target => {
                    let radius = cfg.cluster_radius * rng.random::<f64>().sqrt();
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let r = (cr + radius * theta.sin() - half).floor();
                    let c = (cc + radius * theta.cos() - half).floor();
                    if r < 0.0 || c < 0.0 || r > max_tl as f64 || c > max_tl as f64 {
                        continue;
                    }
                    let (r, c) = (r as usize, c as usize);
                    let (gr, gc) = (r as f64 + half, c as f64 + half);
                    if (gr - cr).hypot(gc - cc) > cfg.cluster_radius {
                        continue;
                    }
                    (r, c)
                }
                _ => (rng.random_range(0..=max_tl), rng.random_range(0..=max_tl)),
            };
            if free(pos, &placed, g) {
                placed.push(pos);
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

/// Compose one bag. Positive bags receive between `m` and `3m` target
/// glyphs (`m = positive_target_count_min`); negative bags receive none.
pub fn generate_bag(
    cfg: &SynthConfig,
    glyphs: &GlyphSet,
    label: u8,
    id: impl Into<String>,
    rng: &mut Rng,
) -> Result<ImageBag> {
    cfg.validate(glyphs.glyph_size)?;
    let targets = glyphs.indices_of(cfg.target_class);
    let others = glyphs.indices_except(cfg.target_class);
    if targets.is_empty() || others.is_empty() {
        return Err(Error::Config(
            "glyph set needs both target and non-target classes".into(),
        ));
    }
    let g = glyphs.glyph_size;
    let n_targets = if label == 1 {
        let m = cfg.positive_target_count_min;
        rng.random_range(m..=3 * m).min(cfg.glyph_count_per_bag)
    } else {
        0
    };

    let positions = (0..BAG_RESTARTS)
        .find_map(|_| place(cfg, g, n_targets, rng))
        .ok_or_else(|| {
            Error::Placement(format!(
                "could not place {} non-overlapping {g}px glyphs on a {}px canvas; \
                 try a smaller glyph_count_per_bag",
                cfg.glyph_count_per_bag, cfg.bag_size
            ))
        })?;

    let side = cfg.bag_size;
    let mut pixels = vec![0.0f32; side * side];
    let mut mask = vec![0u8; side * side];
    for (i, &(r0, c0)) in positions.iter().enumerate() {
        let is_target = i < n_targets;
        let pool = if is_target { &targets } else { &others };
        let tile = &glyphs.glyphs[*pool.choose(rng).expect("non-empty pool")];
        for r in 0..g {
            let row = (r0 + r) * side + c0;
            pixels[row..row + g].copy_from_slice(&tile[r * g..(r + 1) * g]);
            if is_target {
                mask[row..row + g].fill(1);
            }
        }
    }
    ImageBag::new(id, side, side, pixels, label)?.with_truth_mask(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<ImageBag>,
    pub test: Vec<ImageBag>,
}

fn generate_split(
    cfg: &SynthConfig,
    glyphs: &GlyphSet,
    split_tag: u64,
    name: &str,
    n: usize,
) -> Result<Vec<ImageBag>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(cfg.seed, &[split_tag, i as u64]);
            // alternate labels so each split is balanced to within one bag
            let label = if i % 2 == 0 { 1 } else { 0 };
            generate_bag(cfg, glyphs, label, format!("{name}-{i:05}"), &mut rng)
        })
        .collect()
}

/// Balanced train and test splits, each bag from its own seeded stream.
pub fn generate_dataset(cfg: &SynthConfig, glyphs: &GlyphSet) -> Result<Dataset> {
    cfg.validate(glyphs.glyph_size)?;
    Ok(Dataset {
        train: generate_split(cfg, glyphs, tag::TRAIN_SPLIT, "train", cfg.n_train)?,
        test: generate_split(cfg, glyphs, tag::TEST_SPLIT, "test", cfg.n_test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(layout: Layout) -> SynthConfig {
        SynthConfig {
            n_train: 6,
            n_test: 4,
            seed: 11,
            ..SynthConfig::desk(layout)
        }
    }

    #[test]
    fn procedural_glyphs_are_deterministic() {
        assert_eq!(procedural_glyphs(3), procedural_glyphs(3));
        assert_ne!(procedural_glyphs(3), procedural_glyphs(4));
    }

    #[test]
    fn procedural_glyphs_cover_all_classes() {
        let set = procedural_glyphs(0);
        for class in 0..10u8 {
            assert!(!set.indices_of(class).is_empty());
        }
        assert_eq!(set.glyph_size, 28);
        let nine = &set.glyphs[set.indices_of(9)[0]];
        let four = &set.glyphs[set.indices_of(4)[0]];
        assert_ne!(nine, four);
    }

    #[test]
    fn negative_bag_has_empty_mask() {
        let glyphs = procedural_glyphs(0);
        let mut rng = seeds::stream(1, &[]);
        let bag = generate_bag(&small_cfg(Layout::Sparse), &glyphs, 0, "n", &mut rng).unwrap();
        assert!(bag.truth_mask.unwrap().iter().all(|&m| m == 0));
    }

    #[test]
    fn positive_bag_has_targets() {
        let glyphs = procedural_glyphs(0);
        let mut rng = seeds::stream(2, &[]);
        let bag = generate_bag(&small_cfg(Layout::Sparse), &glyphs, 1, "p", &mut rng).unwrap();
        let marked = bag.truth_mask.unwrap().iter().filter(|&&m| m == 1).count();
        assert!((28 * 28..=3 * 28 * 28).contains(&marked));
    }

    #[test]
    fn overcrowded_canvas_fails_with_placement_error() {
        let glyphs = procedural_glyphs(0);
        let cfg = SynthConfig {
            bag_size: 60,
            glyph_count_per_bag: 5,
            ..small_cfg(Layout::Sparse)
        };
        let mut rng = seeds::stream(0, &[]);
        let err = generate_bag(&cfg, &glyphs, 0, "x", &mut rng).unwrap_err();
        assert!(matches!(err, Error::Placement(ref m) if m.contains("glyph_count_per_bag")));
    }

    #[test]
    fn split_is_balanced_and_deterministic() {
        let glyphs = procedural_glyphs(0);
        let cfg = SynthConfig {
            n_train: 4,
            ..small_cfg(Layout::Clustered)
        };
        let a = generate_dataset(&cfg, &glyphs).unwrap();
        assert_eq!(a.train.iter().filter(|b| b.label == 1).count(), 2);
        assert_eq!(a.test.iter().filter(|b| b.label == 1).count(), 2);
        assert_eq!(a, generate_dataset(&cfg, &glyphs).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg(Layout::Clustered);
        cfg.cluster_radius = 0.0;
        assert!(cfg.validate(28).is_err());
        let mut cfg = small_cfg(Layout::Sparse);
        cfg.positive_target_count_min = 0;
        assert!(cfg.validate(28).is_err());
        assert!(small_cfg(Layout::Sparse).validate(300).is_err());
    }
}
