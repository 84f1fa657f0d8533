//! Experiment configuration, its two built-in profiles, and TOML loading.
//!
//! A config file only needs the keys it changes: it is merged over the
//! defaults of the profile it names (`profile = "desk"` when absent).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mil::Aggregator;
use crate::model::AdamHyper;
use crate::samplers::{GridConfig, MCConfig};
use crate::synth::{self, GlyphSet, Layout, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Grid,
    Uniform,
    MonteCarlo,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Grid, Strategy::Uniform, Strategy::MonteCarlo];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Grid => "grid",
            Strategy::Uniform => "uniform",
            Strategy::MonteCarlo => "monte_carlo",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Strategy::Grid),
            "uniform" => Ok(Strategy::Uniform),
            "monte_carlo" | "mc" => Ok(Strategy::MonteCarlo),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Config(format!("unknown profile `{s}`"))),
        }
    }
}

/// Where bags come from: a dataset directory, or generated from glyphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory written by `store::write_dataset`; overrides generation.
    pub dir: Option<PathBuf>,
    /// IDX image/label files; procedural glyphs are used when absent.
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Side of procedural glyphs.
    pub glyph_size: usize,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            idx_images: None,
            idx_labels: None,
            glyph_size: synth::PROCEDURAL_GLYPH_SIZE,
            synth: SynthConfig::desk(Layout::Sparse),
        }
    }
}

impl DataConfig {
    pub fn glyphs(&self) -> Result<GlyphSet> {
        match (&self.idx_images, &self.idx_labels) {
            (Some(images), Some(labels)) => crate::idx::load_idx(images, labels),
            (None, None) => Ok(synth::procedural_glyphs_sized(
                self.synth.seed,
                self.glyph_size,
            )),
            _ => Err(Error::Config(
                "idx_images and idx_labels must be given together".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub data: DataConfig,
    pub strategy: Strategy,
    pub patch_size: usize,
    /// Patches per bag per training visit. Defaults to the training grid's
    /// patch count so all strategies see the same number of patches.
    pub budget: Option<usize>,
    /// Overlap of the training grid (grid strategy and budget derivation).
    pub train_overlap: f64,
    pub aggregator: Aggregator,
    pub epochs: usize,
    pub hidden: usize,
    pub optimizer: AdamHyper,
    pub mc: MCConfig,
    /// Overlap of the evaluation grid.
    pub eval_overlap: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Single-threaded scoring, and timings kept out of `metrics.csv`, so
    /// repeated runs produce identical files.
    pub sequential: bool,
    /// Positive training bags whose particles are written to `traces.csv`.
    pub trace_bags: usize,
    /// Test bags rendered as probability maps after training.
    pub map_bags: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk(Layout::Sparse)
    }
}

impl ExperimentConfig {
    /// 256px bags, 32px patches, 64 patches per visit, 25 epochs. The
    /// learning rate is 1e-4: at 1e-3 the classifier locks onto ink
    /// density within the first epoch and never recovers.
    pub fn desk(layout: Layout) -> Self {
        ExperimentConfig {
            profile: Profile::Desk,
            data: DataConfig {
                synth: SynthConfig::desk(layout),
                ..DataConfig::default()
            },
            strategy: Strategy::MonteCarlo,
            patch_size: 32,
            budget: None,
            train_overlap: 0.0,
            aggregator: Aggregator::Max,
            epochs: 25,
            hidden: 64,
            optimizer: AdamHyper {
                lr: 1e-4,
                ..AdamHyper::default()
            },
            mc: MCConfig {
                l: 16,
                sigma: 16.0,
                ..MCConfig::with_particles(64, 32)
            },
            eval_overlap: 0.5,
            seed: 0,
            out: None,
            sequential: false,
            trace_bags: 4,
            map_bags: 2,
        }
    }

    /// 1024px bags, 40px patches, 625 patches per visit.
    pub fn paper(layout: Layout) -> Self {
        ExperimentConfig {
            profile: Profile::Paper,
            data: DataConfig {
                synth: SynthConfig::paper(layout),
                ..DataConfig::default()
            },
            patch_size: 40,
            mc: MCConfig::with_particles(625, 40),
            ..ExperimentConfig::desk(layout)
        }
    }

    pub fn for_profile(profile: Profile, layout: Layout) -> Self {
        match profile {
            Profile::Paper => Self::paper(layout),
            Profile::Desk => Self::desk(layout),
        }
    }

    /// Use one seed for data, model, and samplers.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data.synth.seed = seed;
        self.mc.seed = seed;
        self
    }

    pub fn train_grid(&self) -> GridConfig {
        GridConfig::new(self.patch_size, self.train_overlap)
    }

    pub fn eval_grid(&self) -> GridConfig {
        GridConfig::new(self.patch_size, self.eval_overlap)
    }

    /// Budget for bags of the given size.
    pub fn budget_for(&self, height: usize, width: usize) -> usize {
        self.budget.unwrap_or_else(|| {
            crate::samplers::grid_positions(height, width, &self.train_grid()).len()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.budget == Some(0) {
            return Err(Error::Config("budget must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        self.train_grid().validate()?;
        self.eval_grid().validate()?;
        if let Aggregator::TopK(0) = self.aggregator {
            return Err(Error::Config("top_k needs k >= 1".into()));
        }
        if self.strategy == Strategy::MonteCarlo {
            self.mc.validate()?;
            if let Some(b) = self.budget {
                if b != self.mc.n {
                    return Err(Error::Config(format!(
                        "monte_carlo budget {b} differs from particle count {}",
                        self.mc.n
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parse a TOML document, merging it over its profile's defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let profile = match overlay.get("profile") {
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::Config("profile must be a string".into()))?
                .parse()?,
            None => Profile::Desk,
        };
        let layout = overlay
            .get("data")
            .and_then(|d| d.get("synth"))
            .and_then(|s| s.get("layout"))
            .and_then(|l| l.as_str())
            .map(|l| match l {
                "clustered" => Ok(Layout::Clustered),
                "sparse" => Ok(Layout::Sparse),
                other => Err(Error::Config(format!("unknown layout `{other}`"))),
            })
            .transpose()?
            .unwrap_or(Layout::Sparse);
        let base = toml::Table::try_from(Self::for_profile(profile, layout))
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        let merged = merge(base, overlay);
        merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (k, v) in overlay {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
