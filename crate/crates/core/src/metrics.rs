//! Segmentation metrics: mIoU and mDice on class masks, variation of
//! information and adjusted Rand index on instance labelings.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{shape_mismatch, Result, SpwError};

/// Row-major per-pixel integer ids (classes or clusters).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelLabeling {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl PixelLabeling {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SpwError::EmptyGrid { height, width });
        }
        if labels.len() != height * width {
            return Err(SpwError::DataLength { height, width, len: labels.len() });
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn same_shape(&self, other: &PixelLabeling) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(shape_mismatch((self.height, self.width), (other.height, other.width)));
        }
        Ok(())
    }
}

/// Co-occurrence counts between the clusters of two labelings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Nonzero cells `(row, col) -> n_ij`. Rows and columns are numbered
    /// by first appearance, so the table is invariant to id relabeling.
    pub cells: BTreeMap<(usize, usize), u64>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    /// Builds the table from two id sequences, optionally restricted to a
    /// pixel subset.
    pub fn from_pairs(pairs: impl Iterator<Item = (u32, u32)>) -> Self {
        let mut rows: HashMap<u32, usize> = HashMap::new();
        let mut cols: HashMap<u32, usize> = HashMap::new();
        let mut cells = BTreeMap::new();
        let mut row_sums = Vec::new();
        let mut col_sums = Vec::new();
        let mut total = 0;
        for (a, b) in pairs {
            let next = rows.len();
            let i = *rows.entry(a).or_insert(next);
            let next = cols.len();
            let j = *cols.entry(b).or_insert(next);
            if i == row_sums.len() {
                row_sums.push(0);
            }
            if j == col_sums.len() {
                col_sums.push(0);
            }
            row_sums[i] += 1;
            col_sums[j] += 1;
            *cells.entry((i, j)).or_insert(0) += 1;
            total += 1;
        }
        Self { cells, row_sums, col_sums, total }
    }

    pub fn new(a: &PixelLabeling, b: &PixelLabeling) -> Result<Self> {
        a.same_shape(b)?;
        Ok(Self::from_pairs(a.labels.iter().copied().zip(b.labels.iter().copied())))
    }

    /// `H(A) + H(B) - 2 I(A; B)` in nats, summed as
    /// `sum_ij p_ij (ln(a_i / n_ij) + ln(b_j / n_ij))` so every term is
    /// non-negative and identical partitions give exactly zero.
    pub fn variation_of_information(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.total as f64;
        self.cells
            .iter()
            .map(|(&(i, j), &nij)| {
                let nij_f = nij as f64;
                let a = self.row_sums[i] as f64;
                let b = self.col_sums[j] as f64;
                nij_f / n * ((a / nij_f).ln() + (b / nij_f).ln())
            })
            .sum()
    }

    /// Adjusted Rand index; 1 when the chance-corrected denominator vanishes
    /// (both labelings single-cluster, or both all-singleton).
    pub fn adjusted_rand_index(&self) -> Result<f64> {
        if self.total < 2 {
            return Err(SpwError::InvalidParameter(format!("ARI needs at least 2 pixels, got {}", self.total)));
        }
        let pairs = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
        let index: f64 = self.cells.values().map(|&c| pairs(c)).sum();
        let sum_a: f64 = self.row_sums.iter().map(|&c| pairs(c)).sum();
        let sum_b: f64 = self.col_sums.iter().map(|&c| pairs(c)).sum();
        let expected = sum_a * sum_b / pairs(self.total);
        let max = 0.5 * (sum_a + sum_b);
        if max == expected {
            return Ok(1.0);
        }
        Ok((index - expected) / (max - expected))
    }
}

/// 4-connected components of every class. Ids start at 0 and are assigned
/// in raster order of each component's first pixel.
pub fn connected_components(mask: &PixelLabeling) -> PixelLabeling {
    let (h, w) = (mask.height, mask.width);
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if out[start] != UNSET {
            continue;
        }
        let class = mask.labels[start];
        out[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if out[q] == UNSET && mask.labels[q] == class {
                    out[q] = next;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        next += 1;
    }
    PixelLabeling { height: h, width: w, labels: out }
}

/// Per-class `(intersection, |gt|, |pred|)` pixel counts.
fn class_overlaps(gt: &PixelLabeling, pred: &PixelLabeling, classes: usize) -> Result<Vec<(u64, u64, u64)>> {
    gt.same_shape(pred)?;
    let mut stats = vec![(0u64, 0u64, 0u64); classes];
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        let (g, p) = (g as usize, p as usize);
        if g >= classes || p >= classes {
            return Err(SpwError::InvalidParameter(format!("class id {} out of range for {classes}", g.max(p))));
        }
        stats[g].1 += 1;
        stats[p].2 += 1;
        if g == p {
            stats[g].0 += 1;
        }
    }
    Ok(stats)
}

/// Per-class IoU; `None` for classes absent from both labelings.
pub fn class_iou(gt: &PixelLabeling, pred: &PixelLabeling, classes: usize) -> Result<Vec<Option<f64>>> {
    Ok(class_overlaps(gt, pred, classes)?
        .into_iter()
        .map(|(i, a, b)| (a + b > 0).then(|| i as f64 / (a + b - i) as f64))
        .collect())
}

/// Per-class Dice; `None` for classes absent from both labelings.
pub fn class_dice(gt: &PixelLabeling, pred: &PixelLabeling, classes: usize) -> Result<Vec<Option<f64>>> {
    Ok(class_overlaps(gt, pred, classes)?
        .into_iter()
        .map(|(i, a, b)| (a + b > 0).then(|| 2.0 * i as f64 / (a + b) as f64))
        .collect())
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return 1.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

pub fn miou(gt: &PixelLabeling, pred: &PixelLabeling, classes: usize) -> Result<f64> {
    Ok(mean_present(&class_iou(gt, pred, classes)?))
}

pub fn mdice(gt: &PixelLabeling, pred: &PixelLabeling, classes: usize) -> Result<f64> {
    Ok(mean_present(&class_dice(gt, pred, classes)?))
}

pub fn variation_of_information(a: &PixelLabeling, b: &PixelLabeling) -> Result<f64> {
    Ok(ContingencyTable::new(a, b)?.variation_of_information())
}

pub fn adjusted_rand_index(a: &PixelLabeling, b: &PixelLabeling) -> Result<f64> {
    ContingencyTable::new(a, b)?.adjusted_rand_index()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClusterOptions {
    /// Drop pixels whose ground-truth class is 0 from the VI/ARI comparison.
    pub exclude_background: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub miou: f64,
    pub mdice: f64,
    pub vi: f64,
    pub ari: f64,
}

/// mIoU/mDice on the class masks, VI/ARI on their 4-connected component
/// labelings.
pub fn evaluate_all(
    gt_mask: &PixelLabeling,
    pred_mask: &PixelLabeling,
    classes: usize,
    options: ClusterOptions,
) -> Result<MetricsRecord> {
    let miou = miou(gt_mask, pred_mask, classes)?;
    let mdice = mdice(gt_mask, pred_mask, classes)?;
    let gt_cc = connected_components(gt_mask);
    let pred_cc = connected_components(pred_mask);
    let table = if options.exclude_background {
        ContingencyTable::from_pairs(
            gt_mask
                .labels
                .iter()
                .zip(gt_cc.labels.iter().zip(&pred_cc.labels))
                .filter(|(&class, _)| class != 0)
                .map(|(_, (&a, &b))| (a, b)),
        )
    } else {
        ContingencyTable::new(&gt_cc, &pred_cc)?
    };
    let vi = table.variation_of_information();
    // Fewer than two foreground pixels leaves nothing to pair up.
    let ari = if table.total < 2 { 1.0 } else { table.adjusted_rand_index()? };
    Ok(MetricsRecord { miou, mdice, vi, ari })
}
