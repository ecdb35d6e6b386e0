//! Pairwise coreference scorer: a two-hidden-layer MLP with sigmoid output.
//!
//! Training minimizes binary cross-entropy on the mean of the directional
//! probabilities of each sample, optimized with Adam over seeded minibatches.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::embedstore::{Direction, FusedRepresentation, PairRepresentation};
use crate::error::{Error, Result};

const SCORER_MAGIC: &[u8; 4] = b"PSC1";
const SCORER_VERSION: u32 = 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Samples per gradient chunk; fixed so reductions do not depend on thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            other => Err(Error::Format(format!("unknown activation id {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            input_dim: 3072,
            hidden1: 768,
            hidden2: 128,
            activation: Activation::Relu,
            epochs: 10,
            learning_rate: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self {
            input_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Invalid(format!(
                "scorer dims must be positive, got {}/{}/{}",
                self.input_dim, self.hidden1, self.hidden2
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.input_dim * self.hidden1
            + self.hidden1
            + self.hidden1 * self.hidden2
            + self.hidden2
            + self.hidden2
            + 1
    }
}

/// Weights stored row-major: `w1` is hidden1×input, `w2` hidden2×hidden1, `w3` 1×hidden2.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub config: ScorerConfig,
}

fn uniform_block(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Fan-in scaled uniform weights, zero biases.
pub fn init_scorer(config: &ScorerConfig) -> Result<ScorerParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (i, h1, h2) = (config.input_dim, config.hidden1, config.hidden2);
    Ok(ScorerParams {
        w1: uniform_block(&mut rng, h1 * i, i),
        b1: vec![0.0; h1],
        w2: uniform_block(&mut rng, h2 * h1, h1),
        b2: vec![0.0; h2],
        w3: uniform_block(&mut rng, h2, h2),
        b3: vec![0.0],
        config: config.clone(),
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)`, stable for large |z|.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: f64,
}

/// Parameter-shaped accumulator used for gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Gradients {
    fn zeros_like(p: &ScorerParams) -> Self {
        Self {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
            w3: vec![0.0; p.w3.len()],
            b3: vec![0.0; 1],
        }
    }

    pub fn blocks(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    fn add(&mut self, other: &Gradients) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, alpha: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= alpha);
        }
    }
}

/// One training example: one or more directional encodings of a pair and
/// a 0/1 label. The model probability is the mean over directions.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub inputs: Vec<Vec<f64>>,
    pub label: f64,
}

impl TrainSample {
    pub fn single(x: Vec<f64>, label: f64) -> Self {
        Self {
            inputs: vec![x],
            label,
        }
    }

    pub fn bidirectional(ab: Vec<f64>, ba: Vec<f64>, label: f64) -> Self {
        Self {
            inputs: vec![ab, ba],
            label,
        }
    }
}

impl ScorerParams {
    pub fn blocks(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimMismatch {
                expected: self.config.input_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scorer input".into()));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let (i, h1, h2) = (self.config.input_dim, self.config.hidden1, self.config.hidden2);
        let z1: Vec<f64> = (0..h1)
            .map(|r| {
                self.b1[r]
                    + self.w1[r * i..(r + 1) * i]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let z2: Vec<f64> = (0..h2)
            .map(|r| {
                self.b2[r]
                    + self.w2[r * h1..(r + 1) * h1]
                        .iter()
                        .zip(&a1)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        let a2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
        let z3 = self.b3[0] + self.w3.iter().zip(&a2).map(|(w, v)| w * v).sum::<f64>();
        Activations { z1, a1, z2, a2, z3 }
    }

    /// Output logit before the sigmoid.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.activations(x).z3)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn forward_batch<X: AsRef<[f64]> + Sync>(&self, xs: &[X]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.forward(x.as_ref())).collect()
    }

    fn backprop(&self, x: &[f64], act: &Activations, upstream: f64, g: &mut Gradients) {
        let (i, h1, h2) = (self.config.input_dim, self.config.hidden1, self.config.hidden2);
        g.b3[0] += upstream;
        let mut dz2 = vec![0.0; h2];
        for r in 0..h2 {
            g.w3[r] += upstream * act.a2[r];
            if act.z2[r] > 0.0 {
                dz2[r] = upstream * self.w3[r];
            }
        }
        let mut da1 = vec![0.0; h1];
        for r in 0..h2 {
            let d = dz2[r];
            if d == 0.0 {
                continue;
            }
            g.b2[r] += d;
            let row = &self.w2[r * h1..(r + 1) * h1];
            let grow = &mut g.w2[r * h1..(r + 1) * h1];
            for c in 0..h1 {
                grow[c] += d * act.a1[c];
                da1[c] += d * row[c];
            }
        }
        for r in 0..h1 {
            if act.z1[r] <= 0.0 {
                continue;
            }
            let d = da1[r];
            g.b1[r] += d;
            let grow = &mut g.w1[r * i..(r + 1) * i];
            for (gw, xv) in grow.iter_mut().zip(x) {
                *gw += d * xv;
            }
        }
    }

    /// BCE of one sample, accumulating its gradient into `g`.
    fn sample_loss_grad(&self, s: &TrainSample, g: Option<&mut Gradients>) -> f64 {
        let acts: Vec<Activations> = s.inputs.iter().map(|x| self.activations(x)).collect();
        let k = acts.len() as f64;
        let log_p: Vec<f64> = acts.iter().map(|a| log_sigmoid(a.z3)).collect();
        let log_q: Vec<f64> = acts.iter().map(|a| log_sigmoid(-a.z3)).collect();
        let log_s = log_mean_exp(&log_p);
        let log_1ms = log_mean_exp(&log_q);
        let y = s.label;
        let loss = -(y * log_s + (1.0 - y) * log_1ms);
        if let Some(g) = g {
            for ((x, act), (lp, lq)) in s.inputs.iter().zip(&acts).zip(log_p.iter().zip(&log_q)) {
                // dσ_k/dz_k / K, divided by s or 1 − s in log space
                let common = lp + lq - k.ln();
                let upstream = -y * (common - log_s).exp() + (1.0 - y) * (common - log_1ms).exp();
                self.backprop(x, act, upstream, g);
            }
        }
        loss
    }

    /// Mean BCE and its gradient over `samples`.
    pub fn loss_and_gradient(&self, samples: &[&TrainSample]) -> (f64, Gradients) {
        let partials: Vec<(f64, Gradients)> = samples
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = Gradients::zeros_like(self);
                let loss: f64 = chunk
                    .iter()
                    .map(|s| self.sample_loss_grad(s, Some(&mut g)))
                    .sum();
                (loss, g)
            })
            .collect();
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (l, g) in &partials {
            loss += l;
            total.add(g);
        }
        let n = samples.len().max(1) as f64;
        total.scale(1.0 / n);
        (loss / n, total)
    }

    pub fn mean_loss(&self, samples: &[TrainSample]) -> f64 {
        let sum: f64 = samples
            .par_iter()
            .map(|s| self.sample_loss_grad(s, None))
            .sum();
        sum / samples.len().max(1) as f64
    }

    /// Probability for a sample: mean of the directional outputs.
    pub fn predict(&self, s: &TrainSample) -> Result<f64> {
        let mut acc = 0.0;
        for x in &s.inputs {
            acc += self.forward(x)?;
        }
        Ok(acc / s.inputs.len().max(1) as f64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::Format(format!("{what} exceeds u32")))
        };
        let mut w = ByteWriter::new();
        w.bytes(SCORER_MAGIC);
        w.u32(SCORER_VERSION);
        w.u32(to_u32(c.input_dim, "input_dim")?);
        w.u32(to_u32(c.hidden1, "hidden1")?);
        w.u32(to_u32(c.hidden2, "hidden2")?);
        w.u8(c.activation.code());
        w.u32(to_u32(c.epochs, "epochs")?);
        w.f64(c.learning_rate);
        w.u32(to_u32(c.batch_size, "batch_size")?);
        w.u64(c.seed);
        for block in self.blocks() {
            w.u64(block.len() as u64);
            for &v in block {
                w.f64(v);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::checked(data)?;
        r.expect_magic(SCORER_MAGIC)?;
        let version = r.u32()?;
        if version != SCORER_VERSION {
            return Err(Error::Format(format!("unsupported PSC version {version}")));
        }
        let config = ScorerConfig {
            input_dim: r.u32()? as usize,
            hidden1: r.u32()? as usize,
            hidden2: r.u32()? as usize,
            activation: Activation::from_code(r.u8()?)?,
            epochs: r.u32()? as usize,
            learning_rate: r.f64()?,
            batch_size: r.u32()? as usize,
            seed: r.u64()?,
        };
        config.validate()?;
        let (i, h1, h2) = (config.input_dim, config.hidden1, config.hidden2);
        let expected = [h1 * i, h1, h2 * h1, h2, h2, 1];
        let mut blocks = Vec::with_capacity(6);
        for want in expected {
            let len = r.u64()? as usize;
            if len != want {
                return Err(Error::DimMismatch {
                    expected: want,
                    actual: len,
                });
            }
            let mut b = Vec::with_capacity(len);
            for _ in 0..len {
                let v = r.f64()?;
                if !v.is_finite() {
                    return Err(Error::NonFinite("scorer weights".into()));
                }
                b.push(v);
            }
            blocks.push(b);
        }
        r.finish()?;
        let mut it = blocks.into_iter();
        let mut next = || it.next().expect("six blocks");
        Ok(Self {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
            w3: next(),
            b3: next(),
            config,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(p: &ScorerParams, lr: f64) -> Self {
        Self {
            m: Gradients::zeros_like(p),
            v: Gradients::zeros_like(p),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut ScorerParams, g: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step);
        let lr = self.lr;
        for (((p, m), v), g) in params
            .blocks_mut()
            .into_iter()
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
            .zip(g.blocks())
        {
            for j in 0..p.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Trains in place for `config.epochs` epochs and returns the per-epoch mean
/// minibatch BCE. Optimizer hyperparameters and the shuffle seed come from
/// `config`; the network shape comes from `params`.
pub fn train(
    params: &mut ScorerParams,
    dataset: &[TrainSample],
    config: &ScorerConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    for s in dataset {
        if s.inputs.is_empty() {
            return Err(Error::Invalid("training sample without inputs".into()));
        }
        if !(s.label == 0.0 || s.label == 1.0) {
            return Err(Error::Invalid(format!("label must be 0 or 1, got {}", s.label)));
        }
        for x in &s.inputs {
            params.check_input(x)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam = Adam::new(params, config.learning_rate);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&TrainSample> = batch.iter().map(|&i| &dataset[i]).collect();
            let (loss, grad) = params.loss_and_gradient(&samples);
            if !loss.is_finite() || grad.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {bi}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(params, &grad);
        }
        trace.push(epoch_loss / dataset.len() as f64);
    }
    if params.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged("non-finite parameters after training".into()));
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub s_ab: f64,
    pub s_ba: f64,
    pub s_mean: f64,
}

impl PairScore {
    pub fn new(a: impl Into<String>, b: impl Into<String>, s_ab: f64, s_ba: f64) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            s_ab,
            s_ba,
            s_mean: (s_ab + s_ba) / 2.0,
        }
    }
}

/// A directional scorer input.
pub trait DirectedInput {
    fn direction(&self) -> Direction;
    fn values(&self) -> &[f64];
}

impl DirectedInput for PairRepresentation {
    fn direction(&self) -> Direction {
        self.direction
    }

    fn values(&self) -> &[f64] {
        &self.vec
    }
}

impl DirectedInput for FusedRepresentation {
    fn direction(&self) -> Direction {
        self.direction
    }

    fn values(&self) -> &[f64] {
        &self.vec
    }
}

pub fn score_pair<R: DirectedInput>(
    params: &ScorerParams,
    a: &str,
    b: &str,
    rep_ab: &R,
    rep_ba: &R,
) -> Result<PairScore> {
    if rep_ab.direction() != Direction::AB || rep_ba.direction() != Direction::BA {
        return Err(Error::Invalid(format!(
            "expected AB/BA representations, got {:?}/{:?}",
            rep_ab.direction(),
            rep_ba.direction()
        )));
    }
    let s_ab = params.forward(rep_ab.values())?;
    let s_ba = params.forward(rep_ba.values())?;
    Ok(PairScore::new(a, b, s_ab, s_ba))
}
