//! Training loop, evaluation protocol, and sliding-window probability maps.
//!
//! Every bag is one optimizer step: sample patch positions with the chosen
//! strategy, score them, aggregate into a bag score, and back-propagate the
//! bag loss through the contributing patches only.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::bag::{extract_patch, ImageBag, Patch, PatchCoord};
use crate::config::{ExperimentConfig, Strategy};
use crate::error::{Error, Result};
use crate::mil::{aggregate_max, bag_loss_and_grads};
use crate::model::{ClassifierState, Params};
use crate::samplers::{
    grid_positions, mc_init, mc_step, uniform_positions, GridConfig, ParticleSet, PatchScorer,
};
use crate::seeds::{self, tag, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub mean_loss: f64,
    pub seconds: f64,
    /// Fraction of sampled positions (particles, for Monte-Carlo) over
    /// positive bags whose patch center lies in the truth mask. `None` when no positive bag carries a mask.
    pub truth_hit_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ClassifierState,
    pub metrics: Vec<EpochMetrics>,
    /// Particle trace CSV rows (without header), Monte-Carlo strategy only.
    pub traces: String,
    /// Patches scored per bag visit, identical for every bag and epoch.
    pub patches_per_visit: usize,
}

/// Per-bag sampler state that outlives a single visit.
enum BagSampler {
    Grid(Vec<PatchCoord>),
    Uniform,
    MonteCarlo { particles: ParticleSet, rng: Rng },
}

fn patches_at(bag: &ImageBag, coords: &[PatchCoord]) -> Result<Vec<Patch>> {
    coords.iter().map(|&c| extract_patch(bag, c)).collect()
}

fn hit_count(bag: &ImageBag, coords: impl Iterator<Item = PatchCoord>) -> (usize, usize) {
    coords.fold((0, 0), |(hits, total), c| {
        let (r, col) = c.center();
        (
            hits + usize::from(bag.in_truth(r as usize, col as usize)),
            total + 1,
        )
    })
}

/// Positions the uniform strategy draws for bag `bag_index` at `epoch`.
pub fn uniform_visit(
    cfg: &ExperimentConfig,
    height: usize,
    width: usize,
    epoch: usize,
    bag_index: usize,
) -> Vec<PatchCoord> {
    let mut rng = seeds::stream(cfg.seed, &[tag::UNIFORM, epoch as u64, bag_index as u64]);
    let budget = cfg.budget_for(height, width);
    uniform_positions(height, width, cfg.patch_size, budget, &mut rng)
}

/// Train a fresh classifier on `train`, scoring `test` after every epoch.
pub fn train(
    cfg: &ExperimentConfig,
    train: &[ImageBag],
    test: &[ImageBag],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let size = cfg.patch_size;
    let (h, w) = (train[0].height, train[0].width);
    if let Some(b) = train
        .iter()
        .chain(test)
        .find(|b| b.height < size || b.width < size)
    {
        return Err(Error::Config(format!(
            "bag {} ({}x{}) is smaller than the {size}px patch",
            b.id, b.height, b.width
        )));
    }
    if train.iter().any(|b| (b.height, b.width) != (h, w)) {
        return Err(Error::Config("training bags must share one size".into()));
    }

    let budget = cfg.budget_for(h, w);
    let mc = crate::samplers::MCConfig {
        n: budget,
        ..cfg.mc
    };
    let grid = cfg.train_grid();
    let grid_coords = grid_positions(h, w, &grid);
    if cfg.strategy == Strategy::Grid && grid_coords.len() != budget {
        return Err(Error::Config(format!(
            "grid yields {} patches per bag but the budget is {budget}",
            grid_coords.len()
        )));
    }
    if cfg.strategy == Strategy::MonteCarlo {
        mc.validate()?;
    }

    let mut state = ClassifierState::init(size, cfg.hidden, cfg.seed)?.with_hyper(cfg.optimizer);
    let particle_stream = |i: usize, epoch: usize| {
        let path: &[u64] = if mc.persist {
            &[tag::PARTICLES, i as u64]
        } else {
            &[tag::PARTICLES, i as u64, epoch as u64]
        };
        seeds::stream(seeds::derive(cfg.seed, &[mc.seed]), path)
    };
    let fresh_particles = |i: usize, epoch: usize| {
        let mut rng = particle_stream(i, epoch);
        let particles = mc_init(h, w, size, &mc, train[i].id.clone(), &mut rng);
        BagSampler::MonteCarlo { particles, rng }
    };
    let mut samplers: Vec<BagSampler> = (0..train.len())
        .map(|i| match cfg.strategy {
            Strategy::Grid => BagSampler::Grid(grid_coords.clone()),
            Strategy::Uniform => BagSampler::Uniform,
            Strategy::MonteCarlo => fresh_particles(i, 0),
        })
        .collect();
    let traced: Vec<usize> = (0..train.len())
        .filter(|&i| train[i].is_positive())
        .take(cfg.trace_bags)
        .collect();

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut traces = String::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut seeds::stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        if cfg.strategy == Strategy::MonteCarlo && !mc.persist && epoch > 1 {
            for (i, s) in samplers.iter_mut().enumerate() {
                *s = fresh_particles(i, epoch);
            }
        }

        let (mut correct, mut loss_sum) = (0usize, 0.0f64);
        let (mut hits, mut seen) = (0usize, 0usize);
        for &i in &order {
            let bag = &train[i];
            let scorer = state.scorer(!cfg.sequential);
            // `focus` holds where the sampler is looking after this visit
            let (patches, scores, focus) = match &mut samplers[i] {
                BagSampler::Grid(coords) => {
                    let patches = patches_at(bag, coords)?;
                    let scores = scorer.score_all(&patches);
                    (patches, scores, coords.clone())
                }
                BagSampler::Uniform => {
                    let coords = uniform_visit(cfg, h, w, epoch, i);
                    let patches = patches_at(bag, &coords)?;
                    let scores = scorer.score_all(&patches);
                    (patches, scores, coords)
                }
                BagSampler::MonteCarlo { particles, rng } => {
                    // weights changed since the last visit
                    particles.invalidate_scores();
                    let mut ps = std::mem::take(particles);
                    let (mut patches, mut scores) = (Vec::new(), Vec::new());
                    for step in 0..mc.k {
                        let out = mc_step(ps, &scorer, &mc, rng, bag, size)?;
                        if step == 0 && traced.contains(&i) {
                            out.scored.trace_rows(epoch, &mut traces);
                        }
                        for (p, s) in out.evaluated {
                            patches.push(p);
                            scores.push(s);
                        }
                        ps = out.particles;
                    }
                    let focus = ps.particles.iter().map(|p| p.coord(size, h, w)).collect();
                    *particles = ps;
                    (patches, scores, focus)
                }
            };

            if bag.is_positive() && bag.truth_mask.is_some() {
                let (a, b) = hit_count(bag, focus.into_iter());
                hits += a;
                seen += b;
            }

            let pred = cfg.aggregator.aggregate(&scores)?;
            let (loss, grads) = bag_loss_and_grads(&pred, bag.label);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss on bag {} at epoch {epoch} (bag score {})",
                    bag.id, pred.score
                )));
            }
            loss_sum += loss;
            correct += usize::from(pred.predicted_label() == bag.label);

            let mut total = Params::zeros(state.inputs(), state.hidden);
            for &(j, _) in &pred.contributors {
                if grads[j] != 0.0 {
                    total.add_assign(&state.backward(&patches[j], grads[j])?);
                }
            }
            state.adam_update(&total)?;
        }

        let test_acc = if test.is_empty() {
            0.0
        } else {
            evaluate_with(&state.scorer(!cfg.sequential), test, &cfg.eval_grid())?
        };
        metrics.push(EpochMetrics {
            epoch,
            train_acc: correct as f64 / train.len() as f64,
            test_acc,
            mean_loss: loss_sum / train.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
            truth_hit_rate: (seen > 0).then(|| hits as f64 / seen as f64),
        });
    }

    Ok(TrainOutcome {
        state,
        metrics,
        traces,
        patches_per_visit: budget,
    })
}

/// Predicted label of one bag under the grid-and-max protocol.
pub fn predict_bag(scorer: &impl PatchScorer, bag: &ImageBag, grid: &GridConfig) -> Result<u8> {
    let coords = grid_positions(bag.height, bag.width, grid);
    let scores = scorer.score_all(&patches_at(bag, &coords)?);
    Ok(aggregate_max(&scores)?.predicted_label())
}

/// Fraction of bags whose grid-and-max prediction matches the label.
pub fn evaluate_with(
    scorer: &impl PatchScorer,
    bags: &[ImageBag],
    grid: &GridConfig,
) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::Config("cannot evaluate an empty bag list".into()));
    }
    let mut correct = 0;
    for bag in bags {
        correct += usize::from(predict_bag(scorer, bag, grid)? == bag.label);
    }
    Ok(correct as f64 / bags.len() as f64)
}

/// Test accuracy with patches on a grid of the given overlap, max-aggregated.
pub fn evaluate(
    state: &ClassifierState,
    bags: &[ImageBag],
    patch_size: usize,
    overlap: f64,
) -> Result<f64> {
    let grid = GridConfig::new(patch_size, overlap);
    grid.validate()?;
    evaluate_with(&state.scorer(true), bags, &grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    pub patch_size: usize,
    /// Row-major scores, one per window.
    pub values: Vec<f64>,
    /// Window with the highest score (first in row-major order on ties).
    pub argmax: PatchCoord,
}

impl ProbabilityMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn to_image(&self) -> crate::pgm::GrayImage {
        crate::pgm::GrayImage {
            width: self.cols,
            height: self.rows,
            data: self
                .values
                .iter()
                .map(|&v| crate::pgm::intensity_to_byte(v))
                .collect(),
        }
    }
}

/// Dense sliding-window scores over a bag.
pub fn probability_map_with(
    scorer: &impl PatchScorer,
    bag: &ImageBag,
    patch_size: usize,
    stride: usize,
) -> Result<ProbabilityMap> {
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if bag.height < patch_size || bag.width < patch_size {
        return Err(Error::Config(format!(
            "bag {}x{} smaller than patch {patch_size}",
            bag.height, bag.width
        )));
    }
    let rows = (bag.height - patch_size) / stride + 1;
    let cols = (bag.width - patch_size) / stride + 1;
    let coords: Vec<PatchCoord> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| PatchCoord::new(r * stride, c * stride, patch_size)))
        .collect();
    let values = scorer.score_all(&patches_at(bag, &coords)?);
    let best = aggregate_max(&values)?.contributors[0].0;
    Ok(ProbabilityMap {
        rows,
        cols,
        stride,
        patch_size,
        argmax: coords[best],
        values,
    })
}

pub fn probability_map(
    state: &ClassifierState,
    bag: &ImageBag,
    patch_size: usize,
    stride: usize,
) -> Result<ProbabilityMap> {
    if patch_size != state.patch_size {
        return Err(Error::Shape {
            expected: state.patch_size,
            actual: patch_size,
        });
    }
    probability_map_with(&state.scorer(true), bag, patch_size, stride)
}
