//! Wall-clock scaling of the weight-map computation against plain
//! cross-entropy.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spw_core::spwloss::{class_weights, cross_entropy, level_weight_maps, pixel_weights, weighted_ce_loss};
use spw_core::{LabelField, ProbabilityField, RealGrid, SpwConfig, WeightMap};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub config: SpwConfig,
    pub seed: u64,
    /// Spread per-channel pyramids over the rayon pool.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { sizes: vec![256, 512, 1024], reps: 5, config: SpwConfig::default(), seed: 0, parallel: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    /// Median time of the weight map alone.
    pub weights_ms: f64,
    /// Median time of weight map plus weighted loss.
    pub spw_ms: f64,
    /// Median time of unweighted cross-entropy.
    pub ce_ms: f64,
}

impl BenchRow {
    /// Relative change of the weighted loss time over plain cross-entropy,
    /// in percent.
    pub fn delta_to_ce(&self) -> f64 {
        100.0 * (self.spw_ms - self.ce_ms) / self.ce_ms.max(1e-9)
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Weight-map time ratio between consecutive sizes.
    pub fn growth(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].weights_ms / w[0].weights_ms).collect()
    }

    /// Least-squares slope of `ln t` against `ln(HW log HW)`; 1 means the
    /// measured times track `HW log HW`.
    pub fn exponent(&self) -> Option<f64> {
        if self.rows.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| {
                let n = (r.size * r.size) as f64;
                ((n * n.ln()).ln(), r.weights_ms.ln())
            })
            .collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("size\tweights_ms\tspw_loss_ms\tce_ms\tdelta_to_ce\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.3}\t{:.3}\t{:.3}\t{:+.0}%",
                r.size,
                r.weights_ms,
                r.spw_ms,
                r.ce_ms,
                r.delta_to_ce()
            );
        }
        for (w, g) in self.rows.windows(2).zip(self.growth()) {
            let _ = writeln!(out, "growth {}->{}: {g:.2}x", w[0].size, w[1].size);
        }
        if let Some(e) = self.exponent() {
            let _ = writeln!(out, "exponent vs HW log HW: {e:.3}");
        }
        out
    }
}

/// Random binary label and a matching random prediction.
pub fn random_pair(size: usize, rng: &mut ChaCha8Rng) -> CliResult<(LabelField, ProbabilityField)> {
    let ids: Vec<usize> = (0..size * size).map(|_| usize::from(rng.random_bool(0.3))).collect();
    let label = LabelField::from_class_ids(size, size, ids, 2)?;
    let fg = RealGrid::from_fn(size, size, |_, _| rng.random_range(0.0..1.0));
    let pred = ProbabilityField::from_foreground(&fg)?;
    Ok((label, pred))
}

fn summed_map(maps: Vec<Vec<RealGrid>>, like: &RealGrid) -> CliResult<RealGrid> {
    let mut acc = RealGrid::zeros(like.height(), like.width());
    for level in maps.into_iter().flatten() {
        acc = acc.add(&level)?;
    }
    Ok(acc)
}

/// Same value as [`pixel_weights`], with the per-channel pyramids computed
/// concurrently on the current rayon pool. Summation order matches the
/// sequential path, so results are bitwise identical.
pub fn pixel_weights_parallel(
    label: &LabelField,
    pred: Option<&ProbabilityField>,
    cfg: &SpwConfig,
) -> CliResult<WeightMap> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(pixel_weights(label, pred, cfg)?);
    }
    let pred = pred.filter(|_| cfg.include_prediction);
    let mut channels: Vec<&RealGrid> = label.indicators().iter().collect();
    if let Some(p) = pred {
        if p.size() != label.size() || p.classes() != label.classes() {
            return Ok(pixel_weights(label, Some(p), cfg)?);
        }
        channels.extend(p.channels());
    }
    let maps: Vec<Vec<RealGrid>> =
        channels.par_iter().map(|c| level_weight_maps(c, cfg)).collect::<Result<_, _>>()?;
    let classes = label.classes();
    let mut maps = maps.into_iter();
    let first = &label.indicators()[0];
    let mut spw = summed_map(maps.by_ref().take(classes).collect(), first)?;
    if pred.is_some() {
        spw = spw.add(&summed_map(maps.collect(), first)?)?;
    }
    let wc = class_weights(label, cfg.class_weights);
    let size = label.size();
    let base = RealGrid::new(size.height, size.width, label.ids().iter().map(|&c| wc[c]).collect())?;
    Ok(WeightMap::new(base.zip_with(&spw, |b, s| b + cfg.lambda * s)?)?)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn run_bench(opts: &BenchOptions) -> CliResult<BenchReport> {
    if opts.reps == 0 {
        return Err(CliError::input("--reps must be at least 1"));
    }
    if opts.sizes.is_empty() {
        return Err(CliError::input("no sizes given"));
    }
    opts.config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::with_capacity(opts.sizes.len());
    for &size in &opts.sizes {
        if size == 0 {
            return Err(CliError::input("sizes must be positive"));
        }
        let (label, pred) = random_pair(size, &mut rng)?;
        let weights_fn = |l: &LabelField, p: &ProbabilityField| -> CliResult<WeightMap> {
            if opts.parallel {
                pixel_weights_parallel(l, Some(p), &opts.config)
            } else {
                Ok(pixel_weights(l, Some(p), &opts.config)?)
            }
        };
        // Warm the FFT plan and filter caches so reps measure steady state.
        let warm = weights_fn(&label, &pred)?;
        std::hint::black_box(&warm);

        let (mut tw, mut ts, mut tc) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..opts.reps {
            let t = Instant::now();
            let w = weights_fn(&label, &pred)?;
            let t_w = t.elapsed().as_secs_f64() * 1e3;
            let loss = weighted_ce_loss(&label, &pred, &w, opts.config.reduction)?;
            let t_s = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(loss);
            tw.push(t_w);
            ts.push(t_s);

            let t = Instant::now();
            let ce = cross_entropy(&label, &pred, opts.config.reduction)?;
            tc.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(ce);
        }
        rows.push(BenchRow { size, weights_ms: median(tw), spw_ms: median(ts), ce_ms: median(tc) });
    }
    Ok(BenchReport { rows })
}
