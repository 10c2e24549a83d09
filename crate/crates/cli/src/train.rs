//! Toy thin-structure segmentation used to compare plain and SPW-weighted
//! cross-entropy end to end.
//!
//! Samples are random thin curves drawn over Gaussian noise. The model is a
//! per-class 5x5 linear filter plus bias followed by a softmax, trained with
//! full-batch gradient descent. Weight maps are recomputed from the current
//! prediction at every step and treated as constants.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use spw_core::metrics::{evaluate_all, ClusterOptions, MetricsRecord, PixelLabeling};
use spw_core::spwloss::{class_weights, label_spw_weight, spw_map, weighted_ce_gradient, weighted_ce_loss};
use spw_core::{LabelField, ProbabilityField, RealGrid, SpwConfig, WeightMap};

use crate::error::{CliError, CliResult};

const RADIUS: isize = 2;
const TAPS: usize = ((2 * RADIUS + 1) * (2 * RADIUS + 1)) as usize;
const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    CrossEntropy,
    Spw,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mode: LossMode,
    pub config: SpwConfig,
    pub samples: usize,
    pub size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub noise: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            mode: LossMode::Spw,
            config: SpwConfig::default(),
            samples: 200,
            size: 64,
            steps: 50,
            learning_rate: 0.1,
            seed: 0,
            noise: 0.6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: RealGrid,
    pub label: LabelField,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// One `step=<i> loss=<value>` line per step.
    pub log: Vec<String>,
    /// Metrics averaged over held-out samples.
    pub metrics: MetricsRecord,
}

impl TrainReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.log {
            out.push_str(line);
            out.push('\n');
        }
        let m = &self.metrics;
        let _ = writeln!(out, "final miou={} mdice={} vi={} ari={}", m.miou, m.mdice, m.vi, m.ari);
        out
    }
}

fn stamp(mask: &mut [usize], size: usize, r: f64, c: f64) {
    let (ri, ci) = (r.round() as isize, c.round() as isize);
    for (dr, dc) in [(0, 0), (1, 0), (0, 1)] {
        let (y, x) = (ri + dr, ci + dc);
        if (0..size as isize).contains(&y) && (0..size as isize).contains(&x) {
            mask[y as usize * size + x as usize] = 1;
        }
    }
}

/// Thin (about 2 px) smoothly turning curves over Gaussian noise.
pub fn generate_sample(size: usize, noise: f64, rng: &mut ChaCha8Rng) -> CliResult<Sample> {
    let mut mask = vec![0usize; size * size];
    let curves = rng.random_range(2..=4);
    let s = size as f64;
    for _ in 0..curves {
        let (mut r, mut c) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let turn = rng.random_range(-0.08..0.08);
        for _ in 0..(2 * size) {
            stamp(&mut mask, size, r, c);
            heading += turn + rng.random_range(-0.1..0.1);
            r += heading.sin();
            c += heading.cos();
            if !(0.0..s).contains(&r) || !(0.0..s).contains(&c) {
                break;
            }
        }
    }
    let normal = Normal::new(0.0, noise).map_err(|e| CliError::input(format!("noise: {e}")))?;
    let image = RealGrid::from_fn(size, size, |row, col| mask[row * size + col] as f64 + normal.sample(rng));
    let label = LabelField::from_class_ids(size, size, mask, CLASSES)?;
    Ok(Sample { image, label })
}

pub fn generate_dataset(count: usize, size: usize, noise: f64, rng: &mut ChaCha8Rng) -> CliResult<Vec<Sample>> {
    (0..count).map(|_| generate_sample(size, noise, rng)).collect()
}

/// Per-class 5x5 filter taps and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchModel {
    pub taps: [[f64; TAPS]; CLASSES],
    pub bias: [f64; CLASSES],
}

impl PatchModel {
    fn zeros() -> Self {
        Self { taps: [[0.0; TAPS]; CLASSES], bias: [0.0; CLASSES] }
    }

    fn params(&self) -> Vec<f64> {
        self.taps.iter().flatten().chain(self.bias.iter()).copied().collect()
    }

    fn from_params(p: &[f64]) -> Self {
        let mut m = Self::zeros();
        for c in 0..CLASSES {
            m.taps[c].copy_from_slice(&p[c * TAPS..(c + 1) * TAPS]);
            m.bias[c] = p[CLASSES * TAPS + c];
        }
        m
    }

    /// Zero-padded correlation of the image with each class filter.
    pub fn logits(&self, image: &RealGrid) -> Vec<RealGrid> {
        let (h, w) = (image.height() as isize, image.width() as isize);
        (0..CLASSES)
            .map(|c| {
                RealGrid::from_fn(h as usize, w as usize, |row, col| {
                    let mut acc = self.bias[c];
                    for (j, tap) in self.taps[c].iter().enumerate() {
                        let (dr, dc) = (j as isize / 5 - RADIUS, j as isize % 5 - RADIUS);
                        let (y, x) = (row as isize + dr, col as isize + dc);
                        if (0..h).contains(&y) && (0..w).contains(&x) {
                            acc += tap * image.get(y as usize, x as usize);
                        }
                    }
                    acc
                })
            })
            .collect()
    }

    /// Parameter gradient given the gradient with respect to the logits.
    fn backward(image: &RealGrid, dlogits: &[RealGrid]) -> Vec<f64> {
        let (h, w) = (image.height() as isize, image.width() as isize);
        let mut grad = vec![0.0; CLASSES * TAPS + CLASSES];
        for (c, g) in dlogits.iter().enumerate() {
            for row in 0..h {
                for col in 0..w {
                    let gv = g.get(row as usize, col as usize);
                    grad[CLASSES * TAPS + c] += gv;
                    for j in 0..TAPS {
                        let (dr, dc) = (j as isize / 5 - RADIUS, j as isize % 5 - RADIUS);
                        let (y, x) = (row + dr, col + dc);
                        if (0..h).contains(&y) && (0..w).contains(&x) {
                            grad[c * TAPS + j] += gv * image.get(y as usize, x as usize);
                        }
                    }
                }
            }
        }
        grad
    }
}

/// Per-sample state that does not change during training.
struct Prepared<'a> {
    sample: &'a Sample,
    base: RealGrid,
    label_map: Option<RealGrid>,
}

fn prepare<'a>(sample: &'a Sample, opts: &TrainOptions) -> CliResult<Prepared<'a>> {
    let wc = class_weights(&sample.label, opts.config.class_weights);
    let size = sample.label.size();
    let base = RealGrid::new(size.height, size.width, sample.label.ids().iter().map(|&c| wc[c]).collect())?;
    let label_map = match opts.mode {
        LossMode::Spw if opts.config.lambda != 0.0 => Some(label_spw_weight(&sample.label, &opts.config)?),
        _ => None,
    };
    Ok(Prepared { sample, base, label_map })
}

fn sample_step(p: &Prepared<'_>, model: &PatchModel, opts: &TrainOptions) -> CliResult<(f64, Vec<f64>)> {
    let logits = model.logits(&p.sample.image);
    let probs = ProbabilityField::softmax(&logits)?;
    let weights = match &p.label_map {
        None => WeightMap::new(p.base.clone())?,
        Some(label_map) => {
            let spw = if opts.config.include_prediction {
                label_map.add(&spw_map(probs.channels(), &opts.config)?)?
            } else {
                label_map.clone()
            };
            WeightMap::new(p.base.zip_with(&spw, |b, s| b + opts.config.lambda * s)?)?
        }
    };
    let loss = weighted_ce_loss(&p.sample.label, &probs, &weights, opts.config.reduction)?;
    let dlogits = weighted_ce_gradient(&p.sample.label, &logits, &weights, opts.config.reduction)?;
    Ok((loss, PatchModel::backward(&p.sample.image, &dlogits)))
}

/// Averages metrics of the model's argmax prediction over `samples`.
pub fn evaluate_model(model: &PatchModel, samples: &[Sample]) -> CliResult<MetricsRecord> {
    let per: Vec<MetricsRecord> = samples
        .par_iter()
        .map(|s| {
            let probs = ProbabilityField::softmax(&model.logits(&s.image))?;
            let size = s.label.size();
            let to_u32 = |v: &[usize]| v.iter().map(|&c| c as u32).collect::<Vec<_>>();
            let gt = PixelLabeling::new(size.height, size.width, to_u32(s.label.ids()))?;
            let pred = PixelLabeling::new(size.height, size.width, to_u32(&probs.argmax()))?;
            Ok(evaluate_all(&gt, &pred, CLASSES, ClusterOptions::default())?)
        })
        .collect::<CliResult<_>>()?;
    let n = per.len().max(1) as f64;
    Ok(MetricsRecord {
        miou: per.iter().map(|m| m.miou).sum::<f64>() / n,
        mdice: per.iter().map(|m| m.mdice).sum::<f64>() / n,
        vi: per.iter().map(|m| m.vi).sum::<f64>() / n,
        ari: per.iter().map(|m| m.ari).sum::<f64>() / n,
    })
}

/// Trains on `opts.samples` generated samples and evaluates on a held-out
/// quarter as many. Runs on the current rayon pool; per-sample results are
/// reduced in sample order, so the log does not depend on the thread count.
pub fn train(opts: &TrainOptions) -> CliResult<TrainReport> {
    opts.config.validate()?;
    if opts.steps == 0 {
        return Err(CliError::input("steps must be at least 1"));
    }
    if opts.samples == 0 || opts.size < 2 * RADIUS as usize + 1 {
        return Err(CliError::input("need at least one sample of size 5 or more"));
    }
    if !(opts.learning_rate > 0.0 && opts.learning_rate.is_finite()) {
        return Err(CliError::input("learning rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let train_set = generate_dataset(opts.samples, opts.size, opts.noise, &mut rng)?;
    let held_out = generate_dataset(opts.samples.div_ceil(4), opts.size, opts.noise, &mut rng)?;
    let prepared: Vec<Prepared<'_>> =
        train_set.par_iter().map(|s| prepare(s, opts)).collect::<CliResult<_>>()?;

    let mut params = PatchModel::zeros().params();
    let mut log = Vec::with_capacity(opts.steps);
    let n = prepared.len() as f64;
    for step in 1..=opts.steps {
        let model = PatchModel::from_params(&params);
        let results: Vec<(f64, Vec<f64>)> =
            prepared.par_iter().map(|p| sample_step(p, &model, opts)).collect::<CliResult<_>>()?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (l, g) in &results {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(CliError::internal(format!("loss diverged at step {step}")));
        }
        log.push(format!("step={step} loss={loss}"));
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= opts.learning_rate * g / n;
        }
    }
    let metrics = evaluate_model(&PatchModel::from_params(&params), &held_out)?;
    Ok(TrainReport { log, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_thin_and_deterministic() {
        let a = generate_sample(64, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_sample(64, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.image, b.image);
        let fg = a.label.class_counts()[1] as f64 / (64.0 * 64.0);
        assert!(fg > 0.005 && fg < 0.4, "foreground fraction {fg}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = generate_sample(12, 0.5, &mut rng).unwrap();
        let mut params: Vec<f64> = (0..CLASSES * TAPS + CLASSES).map(|_| rng.random_range(-0.3..0.3)).collect();
        let opts = TrainOptions { mode: LossMode::CrossEntropy, ..TrainOptions::default() };
        let p = prepare(&s, &opts).unwrap();
        let (_, grad) = sample_step(&p, &PatchModel::from_params(&params), &opts).unwrap();
        let h = 1e-6;
        for i in [0, 7, TAPS + 12, CLASSES * TAPS + 1] {
            params[i] += h;
            let (up, _) = sample_step(&p, &PatchModel::from_params(&params), &opts).unwrap();
            params[i] -= 2.0 * h;
            let (down, _) = sample_step(&p, &PatchModel::from_params(&params), &opts).unwrap();
            params[i] += h;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
