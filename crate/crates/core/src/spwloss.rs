//! Steerable-pyramid weight maps and the weighted cross-entropy built on them.
//!
//! A per-class indicator or probability channel is decomposed, every
//! analytic subband is reduced to its amplitude envelope, level `i` is scaled
//! by `beta^(i-1)` and interpolated back to full resolution, and everything
//! is summed over levels, orientations and channels. The pixel weight is
//! `w(x) = w_c(x) + lambda * (map(Y) + map(P))`, and the loss is the
//! negative weighted log-likelihood of the true class.
//!
//! Weight maps are constants for differentiation: the gradient only flows
//! through the log-probability term.

use crate::envelope::upsample_grid;
use crate::error::{shape_mismatch, Result, SpwError};
use crate::filters::FilterBankSpec;
use crate::grid::{crop_to, pad_to_multiple, GridSize, RealGrid};
use crate::pyramid::envelope_sums;

/// Probabilities are clamped to at least this before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassWeightMode {
    /// `w_c = 1` for every class.
    #[default]
    Uniform,
    /// `w_c ∝ 1 / frequency`, normalized to a unit pixel average over the label.
    InverseFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpwConfig {
    pub lambda: f64,
    pub beta: f64,
    pub levels: usize,
    pub orientations: usize,
    pub class_weights: ClassWeightMode,
    pub reduction: Reduction,
    /// When false only the label contributes to the SPW term.
    pub include_prediction: bool,
}

impl Default for SpwConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            beta: 0.9,
            levels: 4,
            orientations: 4,
            class_weights: ClassWeightMode::Uniform,
            reduction: Reduction::Mean,
            include_prediction: true,
        }
    }
}

impl SpwConfig {
    pub fn filter_spec(&self) -> Result<FilterBankSpec> {
        FilterBankSpec::new(self.orientations, self.levels)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SpwError::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SpwError::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        self.filter_spec().map(|_| ())
    }
}

/// One-hot ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    size: GridSize,
    ids: Vec<usize>,
    indicators: Vec<RealGrid>,
}

impl LabelField {
    /// Builds a label from per-pixel class ids in `0..classes`.
    pub fn from_class_ids(height: usize, width: usize, ids: Vec<usize>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(SpwError::InvalidParameter(format!("need at least 2 classes, got {classes}")));
        }
        if height == 0 || width == 0 || ids.len() != height * width {
            return Err(SpwError::DataLength { height, width, len: ids.len() });
        }
        if let Some(bad) = ids.iter().find(|&&c| c >= classes) {
            return Err(SpwError::InvalidParameter(format!("class id {bad} out of range for {classes} classes")));
        }
        let indicators = (0..classes)
            .map(|c| RealGrid::new(height, width, ids.iter().map(|&id| if id == c { 1.0 } else { 0.0 }).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { size: GridSize::new(height, width), ids, indicators })
    }

    /// Expands a binary foreground grid (values exactly 0 or 1) into a
    /// background/foreground pair.
    pub fn from_foreground(mask: &RealGrid) -> Result<Self> {
        let ids = mask
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                _ => Err(SpwError::InvalidParameter(format!("foreground mask value {v} at {i} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_class_ids(mask.height(), mask.width(), ids, 2)
    }

    pub fn classes(&self) -> usize {
        self.indicators.len()
    }

    pub fn size(&self) -> GridSize {
        self.size
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn indicators(&self) -> &[RealGrid] {
        &self.indicators
    }

    /// Per-class pixel counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &id in &self.ids {
            counts[id] += 1;
        }
        counts
    }
}

/// Per-class probability channels summing to one at each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    channels: Vec<RealGrid>,
}

impl ProbabilityField {
    pub fn new(channels: Vec<RealGrid>) -> Result<Self> {
        if channels.len() < 2 {
            return Err(SpwError::InvalidParameter(format!("need at least 2 classes, got {}", channels.len())));
        }
        let size = channels[0].size();
        if let Some(bad) = channels.iter().find(|c| c.size() != size) {
            return Err(shape_mismatch((size.height, size.width), (bad.height(), bad.width())));
        }
        for i in 0..size.area() {
            let mut total = 0.0;
            for ch in &channels {
                let p = ch.data()[i];
                if !(0.0..=1.0).contains(&p) {
                    return Err(SpwError::InvalidParameter(format!("probability {p} at pixel {i} outside [0, 1]")));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-6 {
                return Err(SpwError::InvalidParameter(format!("probabilities at pixel {i} sum to {total}")));
            }
        }
        Ok(Self { channels })
    }

    /// Binary field `(1 - p, p)` from a foreground probability grid.
    pub fn from_foreground(p: &RealGrid) -> Result<Self> {
        Self::new(vec![p.map(|v| 1.0 - v), p.clone()])
    }

    pub fn uniform(classes: usize, height: usize, width: usize) -> Result<Self> {
        let classes_f = classes as f64;
        Self::new((0..classes).map(|_| RealGrid::filled(height, width, 1.0 / classes_f)).collect())
    }

    pub fn one_hot(label: &LabelField) -> Self {
        Self { channels: label.indicators.clone() }
    }

    /// Per-pixel softmax over class logits.
    pub fn softmax(logits: &[RealGrid]) -> Result<Self> {
        let first = logits.first().ok_or_else(|| SpwError::InvalidParameter("no logits".into()))?;
        let size = first.size();
        if let Some(bad) = logits.iter().find(|l| l.size() != size) {
            return Err(shape_mismatch((size.height, size.width), (bad.height(), bad.width())));
        }
        let mut channels = vec![vec![0.0; size.area()]; logits.len()];
        let mut exps = vec![0.0; logits.len()];
        for i in 0..size.area() {
            let max = logits.iter().map(|l| l.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (e, l) in exps.iter_mut().zip(logits) {
                *e = (l.data()[i] - max).exp();
                total += *e;
            }
            for (ch, e) in channels.iter_mut().zip(&exps) {
                ch[i] = e / total;
            }
        }
        let channels = channels
            .into_iter()
            .map(|d| RealGrid::new(size.height, size.width, d))
            .collect::<Result<Vec<_>>>()?;
        if channels.len() < 2 {
            return Err(SpwError::InvalidParameter("need at least 2 classes".into()));
        }
        Ok(Self { channels })
    }

    pub fn classes(&self) -> usize {
        self.channels.len()
    }

    pub fn size(&self) -> GridSize {
        self.channels[0].size()
    }

    pub fn channels(&self) -> &[RealGrid] {
        &self.channels
    }

    /// Index of the most probable class at every pixel (first wins on ties).
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.size().area())
            .map(|i| {
                let mut best = 0;
                for c in 1..self.classes() {
                    if self.channels[c].data()[i] > self.channels[best].data()[i] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Per-pixel loss weights `w(x) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub grid: RealGrid,
}

impl WeightMap {
    pub fn new(grid: RealGrid) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|&w| w < 0.0) {
            return Err(SpwError::InvalidParameter(format!("negative weight at pixel {i}")));
        }
        Ok(Self { grid })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        Self { grid: RealGrid::filled(height, width, 1.0) }
    }
}

/// Full-resolution, `beta`-scaled weight of every pyramid level for a
/// single channel. Summing the levels gives the channel's SPW map.
pub fn level_weight_maps(channel: &RealGrid, cfg: &SpwConfig) -> Result<Vec<RealGrid>> {
    cfg.validate()?;
    let spec = cfg.filter_spec()?;
    let (padded, original) = pad_to_multiple(channel, spec.size_factor())?;
    let full = padded.size();
    envelope_sums(&padded, spec)?
        .into_iter()
        .enumerate()
        .map(|(i, mut native)| {
            let factor = cfg.beta.powi(i as i32);
            native.data_mut().iter_mut().for_each(|v| *v *= factor);
            let up = upsample_grid(&native, full)?;
            if original == full {
                Ok(up)
            } else {
                crop_to(&up, original)
            }
        })
        .collect()
}

/// SPW map of a stack of channels: pyramid envelopes summed over levels,
/// orientations and channels.
pub fn spw_map(channels: &[RealGrid], cfg: &SpwConfig) -> Result<RealGrid> {
    let first = channels.first().ok_or_else(|| SpwError::InvalidParameter("no channels".into()))?;
    let size = first.size();
    let mut acc = RealGrid::zeros(size.height, size.width);
    for ch in channels {
        if ch.size() != size {
            return Err(shape_mismatch((size.height, size.width), (ch.height(), ch.width())));
        }
        for level in level_weight_maps(ch, cfg)? {
            acc.add_assign(&level)?;
        }
    }
    Ok(acc)
}

/// Label-only SPW term.
pub fn label_spw_weight(label: &LabelField, cfg: &SpwConfig) -> Result<RealGrid> {
    spw_map(label.indicators(), cfg)
}

fn check_pair(label: &LabelField, pred: &ProbabilityField) -> Result<()> {
    if label.size() != pred.size() {
        let (a, b) = (label.size(), pred.size());
        return Err(shape_mismatch((a.height, a.width), (b.height, b.width)));
    }
    if label.classes() != pred.classes() {
        return Err(SpwError::ShapeMismatch {
            expected: format!("{} classes", label.classes()),
            actual: format!("{} classes", pred.classes()),
        });
    }
    Ok(())
}

/// `map(Y) + map(P)`. The result is a constant: nothing downstream
/// differentiates through it.
pub fn combined_spw_weight(label: &LabelField, pred: &ProbabilityField, cfg: &SpwConfig) -> Result<RealGrid> {
    check_pair(label, pred)?;
    label_spw_weight(label, cfg)?.add(&spw_map(pred.channels(), cfg)?)
}

/// Class-imbalance weight of every class.
pub fn class_weights(label: &LabelField, mode: ClassWeightMode) -> Vec<f64> {
    match mode {
        ClassWeightMode::Uniform => vec![1.0; label.classes()],
        ClassWeightMode::InverseFrequency => {
            let counts = label.class_counts();
            let total = label.ids().len() as f64;
            let present = counts.iter().filter(|&&n| n > 0).count() as f64;
            let mut weights: Vec<f64> = counts
                .iter()
                .map(|&n| if n > 0 { total / (present * n as f64) } else { f64::NAN })
                .collect();
            // Absent classes take the largest assigned weight.
            let max = weights.iter().copied().filter(|w| !w.is_nan()).fold(0.0, f64::max);
            for w in &mut weights {
                if w.is_nan() {
                    *w = max;
                }
            }
            weights
        }
    }
}

/// `w(x) = w_c(x) + lambda * w_SPW(x)`.
///
/// `pred = None` (or `include_prediction = false`) drops the prediction
/// term and uses the label-only map.
pub fn pixel_weights(label: &LabelField, pred: Option<&ProbabilityField>, cfg: &SpwConfig) -> Result<WeightMap> {
    cfg.validate()?;
    if let Some(p) = pred {
        check_pair(label, p)?;
    }
    let wc = class_weights(label, cfg.class_weights);
    let size = label.size();
    let base: Vec<f64> = label.ids().iter().map(|&c| wc[c]).collect();
    let base = RealGrid::new(size.height, size.width, base)?;
    if cfg.lambda == 0.0 {
        return WeightMap::new(base);
    }
    let spw = match pred {
        Some(p) if cfg.include_prediction => combined_spw_weight(label, p, cfg)?,
        _ => label_spw_weight(label, cfg)?,
    };
    WeightMap::new(base.zip_with(&spw, |b, s| b + cfg.lambda * s)?)
}

fn check_weights(label: &LabelField, weights: &WeightMap) -> Result<()> {
    if weights.grid.size() != label.size() {
        let (a, b) = (label.size(), weights.grid.size());
        return Err(shape_mismatch((a.height, a.width), (b.height, b.width)));
    }
    Ok(())
}

fn reduce(total: f64, pixels: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / pixels as f64,
    }
}

/// `-sum_x w(x) log P_true(x)`, optionally averaged over pixels.
pub fn weighted_ce_loss(
    label: &LabelField,
    pred: &ProbabilityField,
    weights: &WeightMap,
    reduction: Reduction,
) -> Result<f64> {
    check_pair(label, pred)?;
    check_weights(label, weights)?;
    let mut total = 0.0;
    for (i, (&c, &w)) in label.ids().iter().zip(weights.grid.data()).enumerate() {
        total -= w * pred.channels()[c].data()[i].max(PROBABILITY_FLOOR).ln();
    }
    Ok(reduce(total, label.ids().len(), reduction))
}

/// Unweighted cross-entropy, `-sum_x log P_true(x)`.
pub fn cross_entropy(label: &LabelField, pred: &ProbabilityField, reduction: Reduction) -> Result<f64> {
    check_pair(label, pred)?;
    let mut total = 0.0;
    for (i, &c) in label.ids().iter().enumerate() {
        total -= pred.channels()[c].data()[i].max(PROBABILITY_FLOOR).ln();
    }
    Ok(reduce(total, label.ids().len(), reduction))
}

/// Gradient of [`weighted_ce_loss`] of `softmax(logits)` with respect to the
/// logits: `w(x) (P_c(x) - Y_c(x))`, with `w` held fixed.
pub fn weighted_ce_gradient(
    label: &LabelField,
    logits: &[RealGrid],
    weights: &WeightMap,
    reduction: Reduction,
) -> Result<Vec<RealGrid>> {
    let probs = ProbabilityField::softmax(logits)?;
    check_pair(label, &probs)?;
    check_weights(label, weights)?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / label.ids().len() as f64,
    };
    probs
        .channels()
        .iter()
        .zip(label.indicators())
        .map(|(p, y)| {
            let g = p
                .data()
                .iter()
                .zip(y.data())
                .zip(weights.grid.data())
                .map(|((&p, &y), &w)| w * (p - y) * scale)
                .collect();
            RealGrid::new(p.height(), p.width(), g)
        })
        .collect()
}
