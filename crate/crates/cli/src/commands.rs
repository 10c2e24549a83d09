//! File-level subcommands: decompose, weightmap, loss and metrics.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spw_core::envelope::amplitude;
use spw_core::grid::{crop_to, pad_to_multiple};
use spw_core::metrics::{evaluate_all, ClusterOptions, PixelLabeling};
use spw_core::pyramid::decompose;
use spw_core::spwloss::{pixel_weights, weighted_ce_loss};
use spw_core::{FilterBankSpec, GridSize, LabelField, ProbabilityField, RealGrid, SpwConfig};

use crate::error::{CliError, CliResult};
use crate::io::{read_class_image, read_intensity, read_prediction, write_preview};
use crate::pfm;
use crate::record::{reduction_name, Record, RunManifest};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))
}

fn level_crop(original: GridSize, level: usize) -> GridSize {
    let div = 1 << (level - 1);
    GridSize::new(original.height.div_ceil(div), original.width.div_ceil(div))
}

fn write_map(dir: &Path, stem: &str, grid: &RealGrid, manifest: &mut RunManifest) -> CliResult<()> {
    let map = dir.join(format!("{stem}.pfm"));
    pfm::write(&map, grid)?;
    write_preview(&dir.join(format!("{stem}.png")), grid)?;
    manifest.add_output(&map);
    Ok(())
}

/// Decomposes an image and writes the high-pass residue, every subband
/// envelope and the low-pass residue as float maps with PNG previews.
///
/// Inputs whose size is not a multiple of `2^(N-1)` are mirror-padded and
/// every output is cropped back to the matching fraction of the input size.
pub fn cmd_decompose(image: &Path, spec: FilterBankSpec, out_dir: &Path) -> CliResult<Record> {
    spec.validate()?;
    let mut manifest = RunManifest { inputs: vec![image.to_path_buf()], ..Default::default() };

    let t = Instant::now();
    let img = read_intensity(image)?;
    manifest.timings.push(("read".into(), t.elapsed()));

    let t = Instant::now();
    let (padded, original) = pad_to_multiple(&img, spec.size_factor())?;
    let pyramid = decompose(&padded, spec)?;
    manifest.timings.push(("decompose".into(), t.elapsed()));

    let t = Instant::now();
    ensure_dir(out_dir)?;
    write_map(out_dir, "highpass", &crop_to(&pyramid.high_pass, original)?, &mut manifest)?;
    for (i, level) in pyramid.subbands.iter().enumerate() {
        let crop = level_crop(original, i + 1);
        for (k, band) in level.iter().enumerate() {
            let env = crop_to(&amplitude(band, i + 1).grid, crop)?;
            write_map(out_dir, &format!("band_l{}_o{}", i + 1, k + 1), &env, &mut manifest)?;
        }
    }
    let low = crop_to(&pyramid.low_pass, level_crop(original, spec.levels))?;
    write_map(out_dir, "lowpass", &low, &mut manifest)?;
    manifest.timings.push(("write".into(), t.elapsed()));

    let mut record = manifest.to_record();
    record
        .push("orientations", spec.orientations)
        .push("levels", spec.levels)
        .push("size.original", original)
        .push("size.padded", padded.size());
    for i in 1..=spec.levels {
        record.push(format!("size.level{i}"), level_crop(original, i));
    }
    fs::write(out_dir.join("manifest.txt"), record.to_string())
        .map_err(|e| CliError::internal(format!("cannot write manifest: {e}")))?;
    Ok(record)
}

fn load_label_and_prediction(
    label_path: &Path,
    pred_path: Option<&Path>,
) -> CliResult<(LabelField, Option<ProbabilityField>)> {
    let class_image = read_class_image(label_path)?;
    match pred_path {
        Some(p) => {
            let classes = if p.is_dir() { count_channel_files(p)?.max(class_image.class_count()) } else { 2 };
            if class_image.class_count() > classes {
                return Err(CliError::input(format!(
                    "class-count mismatch: label {} has {} classes, prediction {} has {classes}",
                    label_path.display(),
                    class_image.class_count(),
                    p.display()
                )));
            }
            let pred = read_prediction(p, classes)?;
            let label = class_image.to_label(classes)?;
            if label.size() != pred.size() {
                return Err(CliError::input(format!(
                    "size mismatch: label {} vs prediction {}",
                    label.size(),
                    pred.size()
                )));
            }
            Ok((label, Some(pred)))
        }
        None => {
            let classes = class_image.class_count();
            Ok((class_image.to_label(classes)?, None))
        }
    }
}

fn count_channel_files(dir: &Path) -> CliResult<usize> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot list {}: {e}", dir.display())))?;
    Ok(entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension().and_then(|e| e.to_str()).is_some_and(|e| {
                    e.eq_ignore_ascii_case("pfm") || e.eq_ignore_ascii_case("png")
                })
        })
        .count())
}

/// Writes `w(x)` for a label and optional prediction.
pub fn cmd_weightmap(label_path: &Path, pred_path: Option<&Path>, cfg: &SpwConfig, out: &Path) -> CliResult<Record> {
    cfg.validate()?;
    let mut manifest = RunManifest { config: Some(*cfg), inputs: vec![label_path.to_path_buf()], ..Default::default() };
    manifest.inputs.extend(pred_path.map(Path::to_path_buf));

    let t = Instant::now();
    let (label, pred) = load_label_and_prediction(label_path, pred_path)?;
    manifest.timings.push(("read".into(), t.elapsed()));

    let t = Instant::now();
    let weights = pixel_weights(&label, pred.as_ref(), cfg)?;
    manifest.timings.push(("weights".into(), t.elapsed()));

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    pfm::write(out, &weights.grid)?;
    let preview: PathBuf = out.with_extension("png");
    write_preview(&preview, &weights.grid)?;
    manifest.add_output(out);
    manifest.add_output(&preview);

    let mut record = manifest.to_record();
    let prediction_used = pred.is_some() && cfg.include_prediction;
    record
        .push("classes", label.classes())
        .push("size", label.size())
        .push("prediction_map", prediction_used)
        .push("weight.min", weights.grid.min())
        .push("weight.max", weights.grid.max())
        .push("weight.mean", weights.grid.mean());
    Ok(record)
}

/// Evaluates the weighted cross-entropy of a prediction against a label.
pub fn cmd_loss(label_path: &Path, pred_path: &Path, cfg: &SpwConfig) -> CliResult<Record> {
    cfg.validate()?;
    let mut record = Record::new();
    record.push_config(cfg);

    let t = Instant::now();
    let (label, pred) = load_label_and_prediction(label_path, Some(pred_path))?;
    let pred = pred.expect("prediction requested");
    let t_read = t.elapsed();

    let t = Instant::now();
    let weights = pixel_weights(&label, Some(&pred), cfg)?;
    let t_weights = t.elapsed();

    let t = Instant::now();
    let loss = weighted_ce_loss(&label, &pred, &weights, cfg.reduction)?;
    let t_loss = t.elapsed();

    record
        .push("classes", label.classes())
        .push("size", label.size())
        .push("reduction", reduction_name(cfg.reduction))
        .push("loss", loss)
        .push_timing("read", t_read)
        .push_timing("weights", t_weights)
        .push_timing("loss", t_loss);
    Ok(record)
}

/// mIoU, mDice, VI and ARI between two class images.
pub fn cmd_metrics(gt_path: &Path, pred_path: &Path, options: ClusterOptions) -> CliResult<Record> {
    let gt = read_class_image(gt_path)?;
    let pred = read_class_image(pred_path)?;
    if (gt.height, gt.width) != (pred.height, pred.width) {
        return Err(CliError::input(format!(
            "size mismatch: {} is {}x{}, {} is {}x{}",
            gt_path.display(),
            gt.height,
            gt.width,
            pred_path.display(),
            pred.height,
            pred.width
        )));
    }
    let classes = gt.class_count().max(pred.class_count());
    let gt_l = PixelLabeling::new(gt.height, gt.width, gt.ids)?;
    let pred_l = PixelLabeling::new(pred.height, pred.width, pred.ids)?;
    let m = evaluate_all(&gt_l, &pred_l, classes, options)?;
    let mut record = Record::new();
    record
        .push("classes", classes)
        .push("components", "4-connected")
        .push("exclude_background", options.exclude_background)
        .push("miou", m.miou)
        .push("mdice", m.mdice)
        .push("vi", m.vi)
        .push("ari", m.ari);
    Ok(record)
}
