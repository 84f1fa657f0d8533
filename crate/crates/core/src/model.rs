//! Patch classifier: flattened patch -> fully connected ReLU layer ->
//! single logit -> sigmoid, trained with Adam.
//!
//! All parameters live in one flat vector laid out as
//! `w1 [hidden x inputs] | b1 [hidden] | w2 [hidden] | b2 [1]`, so the
//! optimizer, gradients and checkpoints share one ordering.

use std::io::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag::Patch;
use crate::error::{Error, Result};
use crate::samplers::PatchScorer;
use crate::seeds::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Flat parameter vector with named views.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    inputs: usize,
    hidden: usize,
    pub values: Vec<f64>,
}

/// Gradient of a scalar with respect to every classifier parameter.
pub type PatchGradient = Params;

impl Params {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Params {
            inputs,
            hidden,
            values: vec![0.0; hidden * inputs + 2 * hidden + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.inputs == other.inputs && self.hidden == other.hidden
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w1, rest) = self.values.split_at(self.hidden * self.inputs);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        (w1, b1, w2, b2[0])
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut f64) {
        let (w1, rest) = self.values.split_at_mut(self.hidden * self.inputs);
        let (b1, rest) = rest.split_at_mut(self.hidden);
        let (w2, b2) = rest.split_at_mut(self.hidden);
        (w1, b1, w2, &mut b2[0])
    }

    /// Row `j` of the first-layer weights.
    pub fn w1_row(&self, j: usize) -> &[f64] {
        &self.values[j * self.inputs..(j + 1) * self.inputs]
    }

    pub fn b1(&self) -> &[f64] {
        self.split().1
    }

    pub fn w2(&self) -> &[f64] {
        self.split().2
    }

    pub fn b2(&self) -> f64 {
        self.split().3
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub patch_size: usize,
    pub hidden: usize,
    pub params: Params,
    pub m: Params,
    pub v: Params,
    pub step: u64,
    pub hyper: AdamHyper,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ClassifierState {
    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases, zero moments.
    pub fn init(patch_size: usize, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || patch_size == 0 {
            return Err(Error::Config("hidden and patch_size must be >= 1".into()));
        }
        let inputs = patch_size * patch_size;
        let mut params = Params::zeros(inputs, hidden);
        let mut rng = seeds::stream(seed, &[tag::MODEL_INIT]);
        {
            let (w1, _, w2, _) = params.split_mut();
            let s1 = 1.0 / (inputs as f64).sqrt();
            for w in w1.iter_mut() {
                *w = s1 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            }
            let s2 = 1.0 / (hidden as f64).sqrt();
            for w in w2.iter_mut() {
                *w = s2 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            }
        }
        Ok(ClassifierState {
            patch_size,
            hidden,
            m: Params::zeros(inputs, hidden),
            v: Params::zeros(inputs, hidden),
            params,
            step: 0,
            hyper: AdamHyper::default(),
        })
    }

    pub fn with_hyper(mut self, hyper: AdamHyper) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn inputs(&self) -> usize {
        self.patch_size * self.patch_size
    }

    fn check(&self, patch: &Patch) -> Result<()> {
        if patch.pixels.len() != self.inputs() {
            return Err(Error::Shape {
                expected: self.inputs(),
                actual: patch.pixels.len(),
            });
        }
        Ok(())
    }

    fn hidden_pre(&self, x: &[f32]) -> Vec<f64> {
        // glyph canvases are mostly blank, so gather the lit pixels once
        let lit: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v as f64))
            .collect();
        let b1 = self.params.b1();
        (0..self.hidden)
            .map(|j| {
                let row = self.params.w1_row(j);
                lit.iter().fold(b1[j], |acc, &(i, v)| acc + row[i] * v)
            })
            .collect()
    }

    fn logit_from_pre(&self, pre: &[f64]) -> f64 {
        self.params
            .w2()
            .iter()
            .zip(pre)
            .fold(self.params.b2(), |acc, (&w, &z)| acc + w * z.max(0.0))
    }

    /// Probability that the patch is positive.
    pub fn forward(&self, patch: &Patch) -> Result<f64> {
        self.check(patch)?;
        Ok(sigmoid(
            self.logit_from_pre(&self.hidden_pre(&patch.pixels)),
        ))
    }

    /// `upstream * d(forward)/d(params)`.
    pub fn backward(&self, patch: &Patch, upstream: f64) -> Result<PatchGradient> {
        self.check(patch)?;
        let mut grad = Params::zeros(self.inputs(), self.hidden);
        if upstream == 0.0 {
            return Ok(grad);
        }
        let pre = self.hidden_pre(&patch.pixels);
        let y = sigmoid(self.logit_from_pre(&pre));
        let dz = upstream * y * (1.0 - y);
        let w2 = self.params.w2().to_vec();
        let inputs = self.inputs();
        let (gw1, gb1, gw2, gb2) = grad.split_mut();
        *gb2 = dz;
        for j in 0..self.hidden {
            if pre[j] <= 0.0 {
                continue;
            }
            gw2[j] = dz * pre[j];
            let dh = dz * w2[j];
            gb1[j] = dh;
            let row = &mut gw1[j * inputs..(j + 1) * inputs];
            for (g, &x) in row.iter_mut().zip(&patch.pixels) {
                *g = dh * x as f64;
            }
        }
        Ok(grad)
    }

    /// One Adam step with bias-corrected moments.
    pub fn adam_update(&mut self, grad: &PatchGradient) -> Result<()> {
        if !grad.same_shape(&self.params) {
            return Err(Error::Shape {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        if let Some(i) = grad.values.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "gradient component {i} is not finite"
            )));
        }
        let AdamHyper {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .values
            .iter_mut()
            .zip(self.m.values.iter_mut())
            .zip(self.v.values.iter_mut())
            .zip(&grad.values)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }

    pub fn scorer(&self, parallel: bool) -> ModelScorer<'_> {
        ModelScorer {
            state: self,
            parallel,
        }
    }
}

/// Scores patches with a classifier, optionally across the rayon pool.
/// Each patch is scored independently so both modes give identical values.
pub struct ModelScorer<'a> {
    state: &'a ClassifierState,
    parallel: bool,
}

impl PatchScorer for ModelScorer<'_> {
    fn score(&self, patch: &Patch) -> f64 {
        self.state
            .forward(patch)
            .expect("patch size matches classifier")
    }

    fn score_all(&self, patches: &[Patch]) -> Vec<f64> {
        if self.parallel {
            patches.par_iter().map(|p| self.score(p)).collect()
        } else {
            patches.iter().map(|p| self.score(p)).collect()
        }
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PMILCKP1";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(Error::Format {
                offset: self.bytes.len(),
                msg: format!("checkpoint truncated, needed {n} bytes at {}", self.pos),
            })?;
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ClassifierState {
    /// Layout: magic, `patch_size` and `hidden` as little-endian `u64`, then
    /// little-endian `f64` parameters, first moments and second moments in
    /// parameter order, the `u64` step counter, and finally
    /// `lr, beta1, beta2, epsilon`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 + 24 * self.params.len() + 40);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.patch_size as u64).to_le_bytes());
        out.extend_from_slice(&(self.hidden as u64).to_le_bytes());
        for block in [&self.params, &self.m, &self.v] {
            for x in &block.values {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        let h = self.hyper;
        for x in [h.lr, h.beta1, h.beta2, h.epsilon] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader { bytes, pos: 0 };
        if rd.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "not a classifier checkpoint".into(),
            });
        }
        let patch_size = rd.u64()? as usize;
        let hidden = rd.u64()? as usize;
        if patch_size == 0 || hidden == 0 || patch_size > 1 << 12 || hidden > 1 << 20 {
            return Err(Error::Format {
                offset: 8,
                msg: format!("implausible dimensions patch_size={patch_size} hidden={hidden}"),
            });
        }
        let inputs = patch_size * patch_size;
        let mut block = || -> Result<Params> {
            let mut p = Params::zeros(inputs, hidden);
            for x in p.values.iter_mut() {
                *x = rd.f64()?;
            }
            Ok(p)
        };
        let params = block()?;
        let m = block()?;
        let v = block()?;
        let step = rd.u64()?;
        let hyper = AdamHyper {
            lr: rd.f64()?,
            beta1: rd.f64()?,
            beta2: rd.f64()?,
            epsilon: rd.f64()?,
        };
        Ok(ClassifierState {
            patch_size,
            hidden,
            params,
            m,
            v,
            step,
            hyper,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bag::PatchCoord;

    fn patch(pixels: Vec<f32>, size: usize) -> Patch {
        Patch {
            coord: PatchCoord::new(0, 0, size),
            pixels,
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = ClassifierState::init(40, 64, 7).unwrap();
        assert_eq!(a.params.len(), 64 * 1600 + 64 + 64 + 1);
        assert_eq!(a.params.w1_row(63).len(), 1600);
        assert!(a.params.b1().iter().all(|&b| b == 0.0) && a.params.b2() == 0.0);
        assert_eq!(a, ClassifierState::init(40, 64, 7).unwrap());
        assert_ne!(a, ClassifierState::init(40, 64, 8).unwrap());
        assert!(ClassifierState::init(4, 0, 0).is_err());
    }

    #[test]
    fn zero_model_outputs_half() {
        let mut s = ClassifierState::init(3, 4, 0).unwrap();
        s.params.values.fill(0.0);
        let y = s.forward(&patch(vec![0.3; 9], 3)).unwrap();
        assert_eq!(y, 0.5);
    }

    #[test]
    fn hand_computed_forward() {
        // 1x1 patch, hidden=2: h = relu([0.5*0.5 + 0.1, -1.0*0.5 + 0.2]) = [0.35, 0]
        // z = 2*0.35 + 3*0 - 0.25 = 0.45
        let mut s = ClassifierState::init(1, 2, 0).unwrap();
        s.params.values = vec![0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.25];
        let y = s.forward(&patch(vec![0.5], 1)).unwrap();
        let expected = 1.0 / (1.0 + (-0.45f64).exp());
        assert!((y - expected).abs() < 1e-15, "{y} vs {expected}");
    }

    #[test]
    fn shape_mismatch() {
        let s = ClassifierState::init(3, 2, 0).unwrap();
        assert!(matches!(
            s.forward(&patch(vec![0.0; 4], 2)),
            Err(Error::Shape {
                expected: 9,
                actual: 4
            })
        ));
        assert!(s.backward(&patch(vec![0.0; 4], 2), 1.0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let s = ClassifierState::init(3, 4, 1).unwrap();
        let g = s.backward(&patch(vec![0.5; 9], 3), 0.0).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_unit_has_zero_incoming_gradient() {
        let mut s = ClassifierState::init(2, 2, 1).unwrap();
        // unit 0 pre-activation: negative weights on positive pixels
        s.params.values[..4].copy_from_slice(&[-1.0, -1.0, -1.0, -1.0]);
        let g = s.backward(&patch(vec![0.5; 4], 2), 1.0).unwrap();
        assert!(g.w1_row(0).iter().all(|&v| v == 0.0));
        assert_eq!(g.b1()[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut s = ClassifierState::init(2, 3, 0).unwrap();
        let before = s.params.clone();
        s.adam_update(&Params::zeros(4, 3)).unwrap();
        assert_eq!(s.params, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        for beta1 in [0.5, 0.9, 0.99] {
            let mut s = ClassifierState::init(1, 1, 0)
                .unwrap()
                .with_hyper(AdamHyper {
                    lr: 0.1,
                    beta1,
                    ..AdamHyper::default()
                });
            let before = s.params.values.clone();
            let mut g = Params::zeros(1, 1);
            g.values.fill(1.0);
            s.adam_update(&g).unwrap();
            for (a, b) in s.params.values.iter().zip(&before) {
                assert!(((a - b) + 0.1).abs() < 1e-6, "step {}", a - b);
            }
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(theta) = theta^2 on the output bias only
        let mut s = ClassifierState::init(1, 1, 0)
            .unwrap()
            .with_hyper(AdamHyper {
                lr: 0.05,
                ..AdamHyper::default()
            });
        s.params.values.fill(0.0);
        let last = s.params.len() - 1;
        s.params.values[last] = 1.0;
        for _ in 0..100 {
            let mut g = Params::zeros(1, 1);
            g.values[last] = 2.0 * s.params.values[last];
            s.adam_update(&g).unwrap();
        }
        assert!(
            s.params.values[last].abs() < 0.1,
            "theta {}",
            s.params.values[last]
        );
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut s = ClassifierState::init(1, 1, 0).unwrap();
        let mut g = Params::zeros(1, 1);
        g.values[0] = f64::NAN;
        assert!(matches!(s.adam_update(&g), Err(Error::Numeric(_))));
        assert!(s.adam_update(&Params::zeros(4, 1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut s = ClassifierState::init(4, 3, 2).unwrap();
        let p = patch((0..16).map(|i| i as f32 / 16.0).collect(), 4);
        let g = s.backward(&p, 0.7).unwrap();
        s.adam_update(&g).unwrap();
        let bytes = s.to_bytes();
        let back = ClassifierState::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, s);
        assert!(ClassifierState::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(matches!(
            ClassifierState::from_bytes(b"NOTACKPT...................."),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
