//! Patch-position samplers: a fixed regular grid, independent uniform
//! draws, and a sequential Monte-Carlo particle sampler that pulls patches
//! toward regions the classifier currently scores highly.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bag::{center_range, clamp_center, extract_patch, ImageBag, Patch, PatchCoord};
use crate::error::{Error, Result};
use crate::seeds::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub patch_size: usize,
    /// Fraction of the patch side shared by neighbours, in `[0, 1)`.
    pub overlap: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            patch_size: 32,
            overlap: 0.0,
        }
    }
}

impl GridConfig {
    pub fn new(patch_size: usize, overlap: f64) -> Self {
        GridConfig {
            patch_size,
            overlap,
        }
    }

    pub fn stride(&self) -> usize {
        ((self.patch_size as f64 * (1.0 - self.overlap)).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        Ok(())
    }
}

fn axis_starts(extent: usize, size: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..)
        .map(move |i| i * stride)
        .take_while(move |&s| s + size <= extent)
}

/// Row-major cross product of grid starts along both axes.
pub fn grid_positions(height: usize, width: usize, grid: &GridConfig) -> Vec<PatchCoord> {
    let (size, stride) = (grid.patch_size, grid.stride());
    axis_starts(height, size, stride)
        .flat_map(|r| axis_starts(width, size, stride).map(move |c| PatchCoord::new(r, c, size)))
        .collect()
}

/// `count` independent top-left corners, uniform over every legal position.
pub fn uniform_positions(
    height: usize,
    width: usize,
    size: usize,
    count: usize,
    rng: &mut Rng,
) -> Vec<PatchCoord> {
    (0..count)
        .map(|_| {
            PatchCoord::new(
                rng.random_range(0..=height - size),
                rng.random_range(0..=width - size),
                size,
            )
        })
        .collect()
}

/// Anything that maps a patch to a score. Closures work directly.
pub trait PatchScorer {
    fn score(&self, patch: &Patch) -> f64;

    fn score_all(&self, patches: &[Patch]) -> Vec<f64> {
        patches.iter().map(|p| self.score(p)).collect()
    }
}

impl<F: Fn(&Patch) -> f64> PatchScorer for F {
    fn score(&self, patch: &Patch) -> f64 {
        self(patch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Replace the `l` lowest-scoring particles.
    Deterministic,
    /// Draw `l` victims without replacement with weight `1 - score`.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MCConfig {
    /// Particles per bag.
    pub n: usize,
    /// Particles replaced per iteration, `1 <= l < n`.
    pub l: usize,
    /// Iterations per bag visit.
    pub k: usize,
    /// Displacement standard deviation in pixels.
    pub sigma: f64,
    pub resample_mode: ResampleMode,
    pub seed: u64,
    /// Keep each bag's particles between epochs instead of re-drawing them.
    pub persist: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig::with_particles(64, 32)
    }
}

impl MCConfig {
    /// Defaults for `n` particles and a given patch size: `l = n / 4`,
    /// `sigma = patch_size / 2`, one iteration per visit.
    pub fn with_particles(n: usize, patch_size: usize) -> Self {
        MCConfig {
            n,
            l: (n / 4).max(1),
            k: 1,
            sigma: patch_size as f64 / 2.0,
            resample_mode: ResampleMode::Deterministic,
            seed: 0,
            persist: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l >= self.n {
            return Err(Error::Config(format!(
                "need 1 <= l < n, got l={} n={}",
                self.l, self.n
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Center, in pixels.
    pub row: f64,
    pub col: f64,
    /// Classifier output for the patch centered here; `None` until evaluated.
    pub raw_score: Option<f64>,
    pub norm_score: Option<f64>,
    /// Set by the last resample; only such particles are displaced.
    pub resampled: bool,
}

impl Particle {
    pub fn at(row: f64, col: f64) -> Self {
        Particle {
            row,
            col,
            raw_score: None,
            norm_score: None,
            resampled: false,
        }
    }

    pub fn coord(&self, size: usize, height: usize, width: usize) -> PatchCoord {
        clamp_center(self.row, self.col, size, height, width)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub bag_id: String,
    pub iteration: usize,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Forget all cached scores, e.g. after the classifier has been updated.
    pub fn invalidate_scores(&mut self) {
        for p in &mut self.particles {
            p.raw_score = None;
            p.norm_score = None;
        }
    }

    /// Trace rows `bag_id,step,particle_idx,row,col,raw_score,norm_score`;
    /// unset scores are left empty.
    pub fn trace_rows(&self, step: usize, out: &mut String) {
        let fmt = |s: Option<f64>| s.map(|v| v.to_string()).unwrap_or_default();
        for (i, p) in self.particles.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{step},{i},{},{},{},{}",
                self.bag_id,
                p.row,
                p.col,
                fmt(p.raw_score),
                fmt(p.norm_score)
            );
        }
    }
}

pub const TRACE_HEADER: &str = "bag_id,step,particle_idx,row,col,raw_score,norm_score";

fn clamp_to_range(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

/// `n` particles with centers uniform over the legal center range.
pub fn mc_init(
    height: usize,
    width: usize,
    patch_size: usize,
    cfg: &MCConfig,
    bag_id: impl Into<String>,
    rng: &mut Rng,
) -> ParticleSet {
    let (rlo, rhi) = center_range(patch_size, height);
    let (clo, chi) = center_range(patch_size, width);
    let particles = (0..cfg.n)
        .map(|_| Particle::at(rng.random_range(rlo..=rhi), rng.random_range(clo..=chi)))
        .collect();
    ParticleSet {
        particles,
        bag_id: bag_id.into(),
        iteration: 0,
    }
}

/// Min-max rescale into `[0, 1]`. All-equal input maps to 0.5 everywhere.
pub fn mc_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Numeric(
            "cannot normalize an empty score list".into(),
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite particle score {bad}")));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.5; scores.len()]);
    }
    let span = max - min;
    Ok(scores.iter().map(|s| (s - min) / span).collect())
}

/// Index drawn with probability proportional to `weights`; uniform when
/// every weight is zero.
fn weighted_index(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left u just past the end; take the last positive weight
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Replace `l` particles with copies of survivors. Victims are the `l`
/// lowest scores (deterministic) or drawn with weight `1 - score`
/// (stochastic); donors are survivors drawn with weight `score`.
pub fn mc_resample(mut ps: ParticleSet, cfg: &MCConfig, rng: &mut Rng) -> Result<ParticleSet> {
    let n = ps.len();
    if cfg.l == 0 || cfg.l >= n {
        return Err(Error::Config(format!(
            "need 1 <= l < n, got l={} n={n}",
            cfg.l
        )));
    }
    let scores: Vec<f64> = ps
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.norm_score
                .ok_or_else(|| Error::Numeric(format!("particle {i} has no normalized score")))
        })
        .collect::<Result<_>>()?;

    let mut is_victim = vec![false; n];
    match cfg.resample_mode {
        ResampleMode::Deterministic => {
            let mut order: Vec<usize> = (0..n).collect();
            // stable: equal scores keep index order
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
            for &i in &order[..cfg.l] {
                is_victim[i] = true;
            }
        }
        ResampleMode::Stochastic => {
            let mut pool: Vec<usize> = (0..n).collect();
            for _ in 0..cfg.l {
                let weights: Vec<f64> = pool.iter().map(|&i| 1.0 - scores[i]).collect();
                let pick = weighted_index(&weights, rng);
                is_victim[pool.swap_remove(pick)] = true;
            }
        }
    }

    let survivors: Vec<usize> = (0..n).filter(|&i| !is_victim[i]).collect();
    let donor_weights: Vec<f64> = survivors.iter().map(|&i| scores[i]).collect();
    for p in &mut ps.particles {
        p.resampled = false;
    }
    for i in (0..n).filter(|&i| is_victim[i]) {
        let donor = ps.particles[survivors[weighted_index(&donor_weights, rng)]];
        ps.particles[i] = Particle {
            resampled: true,
            ..Particle::at(donor.row, donor.col)
        };
    }
    Ok(ps)
}

/// Gaussian jitter for freshly resampled particles, then clamp every
/// center into the legal range.
pub fn mc_displace(
    mut ps: ParticleSet,
    cfg: &MCConfig,
    rng: &mut Rng,
    height: usize,
    width: usize,
    patch_size: usize,
) -> ParticleSet {
    let rows = center_range(patch_size, height);
    let cols = center_range(patch_size, width);
    let noise = (cfg.sigma > 0.0).then(|| Normal::new(0.0, cfg.sigma).expect("finite sigma"));
    for p in &mut ps.particles {
        if let (true, Some(noise)) = (p.resampled, noise.as_ref()) {
            p.row += noise.sample(rng);
            p.col += noise.sample(rng);
        }
        p.row = clamp_to_range(p.row, rows);
        p.col = clamp_to_range(p.col, cols);
    }
    ps
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub particles: ParticleSet,
    /// Patches evaluated this step, with their raw scores.
    pub evaluated: Vec<(Patch, f64)>,
    /// The set after evaluation and normalization, before resampling.
    pub scored: ParticleSet,
}

/// One evaluate / normalize / resample / displace cycle. Only particles
/// without a cached score are forwarded through `scorer`.
pub fn mc_step(
    mut ps: ParticleSet,
    scorer: &(impl PatchScorer + ?Sized),
    cfg: &MCConfig,
    rng: &mut Rng,
    bag: &ImageBag,
    patch_size: usize,
) -> Result<StepOutcome> {
    let pending: Vec<usize> = (0..ps.len())
        .filter(|&i| ps.particles[i].raw_score.is_none())
        .collect();
    let patches: Vec<Patch> = pending
        .iter()
        .map(|&i| {
            extract_patch(
                bag,
                ps.particles[i].coord(patch_size, bag.height, bag.width),
            )
        })
        .collect::<Result<_>>()?;
    let scores = scorer.score_all(&patches);
    for (&i, &s) in pending.iter().zip(&scores) {
        ps.particles[i].raw_score = Some(s);
    }

    let raw: Vec<f64> = ps.particles.iter().map(|p| p.raw_score.unwrap()).collect();
    for (p, norm) in ps.particles.iter_mut().zip(mc_normalize(&raw)?) {
        p.norm_score = Some(norm);
    }
    let scored = ps.clone();

    let ps = mc_resample(ps, cfg, rng)?;
    let mut ps = mc_displace(ps, cfg, rng, bag.height, bag.width, patch_size);
    ps.iteration += 1;
    Ok(StepOutcome {
        particles: ps,
        evaluated: patches.into_iter().zip(scores).collect(),
        scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn scored_set(scores: &[f64]) -> ParticleSet {
        ParticleSet {
            particles: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Particle {
                    raw_score: Some(s),
                    norm_score: Some(s),
                    ..Particle::at(10.0 * i as f64 + 20.0, 20.0)
                })
                .collect(),
            bag_id: "t".into(),
            iteration: 0,
        }
    }

    fn cfg(n: usize, l: usize, mode: ResampleMode) -> MCConfig {
        MCConfig {
            n,
            l,
            resample_mode: mode,
            ..MCConfig::with_particles(n, 8)
        }
    }

    #[test]
    fn grid_counts_and_stride() {
        assert_eq!(
            grid_positions(1024, 1024, &GridConfig::new(40, 0.0)).len(),
            625
        );
        assert_eq!(
            grid_positions(1536, 2048, &GridConfig::new(224, 0.0)).len(),
            54
        );
        let g = GridConfig::new(40, 0.5);
        assert_eq!(g.stride(), 20);
        let pos = grid_positions(1024, 1024, &g);
        assert_eq!(pos.len(), 2500);
        assert_eq!(pos[1], PatchCoord::new(0, 20, 40));
        assert!(pos.iter().all(|c| c.fits(1024, 1024)));
    }

    #[test]
    fn grid_stride_never_zero() {
        assert_eq!(GridConfig::new(1, 0.9).stride(), 1);
        assert!(GridConfig::new(8, 1.0).validate().is_err());
    }

    #[test]
    fn uniform_edge_cases() {
        let mut rng = seeds::stream(0, &[]);
        assert!(uniform_positions(64, 64, 8, 0, &mut rng).is_empty());
        let all = uniform_positions(8, 8, 8, 50, &mut rng);
        assert!(all.iter().all(|c| *c == PatchCoord::new(0, 0, 8)));
    }

    #[test]
    fn uniform_mean_matches_discrete_uniform() {
        let mut rng = seeds::stream(5, &[]);
        let draws = uniform_positions(1024, 1024, 40, 10_000, &mut rng);
        // discrete uniform on 0..=984: mean 492, variance ((985^2) - 1) / 12
        let mean = 984.0 / 2.0;
        let se = (((985.0f64).powi(2) - 1.0) / 12.0).sqrt() / (10_000f64).sqrt();
        let rm = draws.iter().map(|c| c.row as f64).sum::<f64>() / 1e4;
        let cm = draws.iter().map(|c| c.col as f64).sum::<f64>() / 1e4;
        assert!((rm - mean).abs() < 3.0 * se, "row mean {rm}");
        assert!((cm - mean).abs() < 3.0 * se, "col mean {cm}");
    }

    #[test]
    fn init_is_reproducible() {
        let c = cfg(625, 156, ResampleMode::Deterministic);
        let a = mc_init(1024, 1024, 40, &c, "b", &mut seeds::stream(1, &[]));
        let b = mc_init(1024, 1024, 40, &c, "b", &mut seeds::stream(1, &[]));
        assert_eq!(a, b);
        assert_eq!(a.len(), 625);
        let one = mc_init(
            64,
            64,
            8,
            &MCConfig { n: 1, ..c },
            "s",
            &mut seeds::stream(1, &[]),
        );
        assert_eq!(one.len(), 1);
        assert!(one.particles[0].raw_score.is_none());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(mc_normalize(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(mc_normalize(&[0.7, 0.7, 0.7]).unwrap(), vec![0.5; 3]);
        assert_eq!(mc_normalize(&[0.9, 0.1]).unwrap(), vec![1.0, 0.0]);
        assert!(mc_normalize(&[0.1, f64::NAN]).is_err());
        assert!(mc_normalize(&[f64::INFINITY]).is_err());
        assert!(mc_normalize(&[]).is_err());
    }

    #[test]
    fn deterministic_two_particle_resample() {
        let c = cfg(2, 1, ResampleMode::Deterministic);
        let ps = scored_set(&[1.0, 0.0]);
        let target = (ps.particles[0].row, ps.particles[0].col);
        let out = mc_resample(ps, &c, &mut seeds::stream(0, &[])).unwrap();
        assert_eq!((out.particles[1].row, out.particles[1].col), target);
        assert!(out.particles[1].resampled && out.particles[1].raw_score.is_none());
        assert!(!out.particles[0].resampled);
    }

    #[test]
    fn resample_rejects_l_not_below_n() {
        let c = cfg(3, 3, ResampleMode::Deterministic);
        assert!(mc_resample(scored_set(&[0.1, 0.2, 0.3]), &c, &mut seeds::stream(0, &[])).is_err());
    }

    #[test]
    fn stochastic_victim_frequencies() {
        // victim weights 1 - s = (0, 0.5, 1) -> particle 2 chosen with p = 2/3
        let c = cfg(3, 1, ResampleMode::Stochastic);
        let mut rng = seeds::stream(9, &[]);
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| {
                let out = mc_resample(scored_set(&[1.0, 0.5, 0.0]), &c, &mut rng).unwrap();
                out.particles[2].resampled
            })
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn displacement_std_matches_sigma() {
        let c = MCConfig {
            sigma: 10.0,
            ..cfg(2, 1, ResampleMode::Deterministic)
        };
        let mut rng = seeds::stream(4, &[]);
        let mut deltas = Vec::new();
        for _ in 0..10_000 {
            let mut ps = scored_set(&[0.0]);
            ps.particles[0] = Particle {
                resampled: true,
                ..Particle::at(500.0, 500.0)
            };
            let out = mc_displace(ps, &c, &mut rng, 1024, 1024, 40);
            deltas.push(out.particles[0].row - 500.0);
            deltas.push(out.particles[0].col - 500.0);
        }
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var =
            deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((9.5..=10.5).contains(&sd), "sd {sd}");
    }

    #[test]
    fn zero_sigma_and_survivors_do_not_move() {
        let c = MCConfig {
            sigma: 0.0,
            ..cfg(2, 1, ResampleMode::Deterministic)
        };
        let mut ps = scored_set(&[0.0, 1.0]);
        ps.particles[0].resampled = true;
        let before = ps.clone();
        let out = mc_displace(ps, &c, &mut seeds::stream(0, &[]), 256, 256, 8);
        for (a, b) in before.particles.iter().zip(&out.particles) {
            assert_eq!((a.row, a.col), (b.row, b.col));
        }
    }

    #[test]
    fn corner_particle_with_huge_sigma_stays_legal() {
        let c = MCConfig {
            sigma: 1e6,
            ..cfg(2, 1, ResampleMode::Deterministic)
        };
        let mut ps = scored_set(&[0.0]);
        ps.particles[0] = Particle {
            resampled: true,
            ..Particle::at(4.0, 4.0)
        };
        let out = mc_displace(ps, &c, &mut seeds::stream(0, &[]), 64, 64, 8);
        let p = out.particles[0];
        assert!((4.0..=60.0).contains(&p.row) && (4.0..=60.0).contains(&p.col));
        assert!(p.coord(8, 64, 64).fits(64, 64));
    }

    #[test]
    fn constant_scorer_keeps_count() {
        let bag = ImageBag::new("z", 64, 64, vec![0.0; 64 * 64], 1).unwrap();
        let c = cfg(16, 4, ResampleMode::Deterministic);
        let mut rng = seeds::stream(3, &[]);
        let ps = mc_init(64, 64, 8, &c, "z", &mut rng);
        let out = mc_step(ps, &|_: &Patch| 0.3, &c, &mut rng, &bag, 8).unwrap();
        assert_eq!(out.particles.len(), 16);
        assert_eq!(out.evaluated.len(), 16);
        assert!(out
            .scored
            .particles
            .iter()
            .all(|p| p.norm_score == Some(0.5)));
        // second step only re-evaluates the four replaced particles
        let again = mc_step(out.particles, &|_: &Patch| 0.3, &c, &mut rng, &bag, 8).unwrap();
        assert_eq!(again.evaluated.len(), 4);
        assert_eq!(again.particles.iteration, 2);
    }

    #[test]
    fn trace_rows_format() {
        let mut out = String::new();
        let mut ps = scored_set(&[0.25]);
        ps.particles.push(Particle::at(1.5, 2.0));
        ps.trace_rows(3, &mut out);
        assert_eq!(out, "t,3,0,20,20,0.25,0.25\nt,3,1,1.5,2,,\n");
    }
}
