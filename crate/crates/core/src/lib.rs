//! Multiple instance learning on high-resolution images with three patch
//! sampling strategies: a fixed grid, uniform random draws, and a
//! sequential Monte-Carlo particle sampler that concentrates patches where
//! the classifier currently responds most.
//!
//! The pieces compose bottom-up:
//!
//! - [`bag`]: images, patches and window geometry.
//! - [`synth`], [`idx`], [`store`], [`pgm`]: synthetic glyph datasets and their file formats.
//! - [`samplers`]: grid, uniform and Monte-Carlo patch positions.
//! - [`model`]: a small patch classifier with exact gradients and Adam.
//! - [`mil`]: max / top-k aggregation and the bag loss.
//! - [`harness`], [`experiment`], [`export`]: training, evaluation and artifacts.

pub mod bag;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod harness;
pub mod idx;
pub mod mil;
pub mod model;
pub mod pgm;
pub mod samplers;
pub mod seeds;
pub mod store;
pub mod synth;

pub use bag::{clamp_center, extract_patch, ImageBag, Patch, PatchCoord};
pub use config::{ExperimentConfig, Profile, Strategy};
pub use error::{Error, Result};
pub use mil::{aggregate_max, aggregate_topk, bag_loss_and_grads, Aggregator, BagPrediction};
pub use model::{AdamHyper, ClassifierState, PatchGradient};
pub use samplers::{
    grid_positions, mc_displace, mc_init, mc_normalize, mc_resample, mc_step, uniform_positions,
    GridConfig, MCConfig, Particle, ParticleSet, PatchScorer, ResampleMode,
};
pub use synth::{
    generate_bag, generate_dataset, procedural_glyphs, Dataset, GlyphSet, Layout, SynthConfig,
};
