//! Image, label and probability inputs; preview outputs.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageReader};
use spw_core::{LabelField, ProbabilityField, RealGrid};

use crate::error::{CliError, CliResult};
use crate::pfm;

fn open_image(path: &Path) -> CliResult<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?
        .decode()
        .map_err(|e| CliError::input(format!("{} is not a readable image: {e}", path.display())))
}

/// Reads an 8/16-bit grayscale or RGB(A) image as intensities in `[0, 1]`;
/// color is reduced to Rec. 601 luminance.
pub fn read_intensity(path: &Path) -> CliResult<RealGrid> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let unsupported = || CliError::input(format!("{}: unsupported pixel format {:?}", path.display(), img.color()));
    let luma = |r: f64, g: f64, b: f64| 0.299 * r + 0.587 * g + 0.114 * b;
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => {
            b.pixels().map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()) / 255.0).collect()
        }
        DynamicImage::ImageRgba8(b) => {
            b.pixels().map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()) / 255.0).collect()
        }
        DynamicImage::ImageRgb16(b) => {
            b.pixels().map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()) / 65535.0).collect()
        }
        DynamicImage::ImageRgba16(b) => {
            b.pixels().map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()) / 65535.0).collect()
        }
        _ => return Err(unsupported()),
    };
    Ok(RealGrid::new(h, w, data)?)
}

/// Integer class ids stored as pixel values of an 8/16-bit image. RGB is
/// accepted only when all three channels agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassImage {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<u32>,
}

impl ClassImage {
    /// `max id + 1`, at least 2.
    pub fn class_count(&self) -> usize {
        (self.ids.iter().copied().max().unwrap_or(0) as usize + 1).max(2)
    }

    pub fn to_label(&self, classes: usize) -> CliResult<LabelField> {
        let ids = self.ids.iter().map(|&v| v as usize).collect();
        Ok(LabelField::from_class_ids(self.height, self.width, ids, classes)?)
    }
}

pub fn read_class_image(path: &Path) -> CliResult<ClassImage> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let from_rgb = |px: &mut dyn Iterator<Item = [u32; 3]>| -> CliResult<Vec<u32>> {
        px.map(|[r, g, b]| {
            if r == g && g == b {
                Ok(r)
            } else {
                Err(CliError::input(format!("{}: color label pixel ({r},{g},{b}) is not a class id", path.display())))
            }
        })
        .collect()
    };
    let ids = match &img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| u32::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| u32::from(p.0[0])).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| u32::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| u32::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(b) => from_rgb(&mut b.pixels().map(|p| p.0.map(u32::from)))?,
        DynamicImage::ImageRgba8(b) => from_rgb(&mut b.pixels().map(|p| [p.0[0], p.0[1], p.0[2]].map(u32::from)))?,
        DynamicImage::ImageRgb16(b) => from_rgb(&mut b.pixels().map(|p| p.0.map(u32::from)))?,
        DynamicImage::ImageRgba16(b) => from_rgb(&mut b.pixels().map(|p| [p.0[0], p.0[1], p.0[2]].map(u32::from)))?,
        _ => return Err(CliError::input(format!("{}: unsupported pixel format {:?}", path.display(), img.color()))),
    };
    Ok(ClassImage { height: h, width: w, ids })
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read_probability_channel(path: &Path) -> CliResult<RealGrid> {
    if has_ext(path, "pfm") {
        pfm::read(path)
    } else {
        read_intensity(path)
    }
}

/// Reads a prediction as a probability field with `classes` channels.
///
/// A directory holds one channel per class (`.pfm` or image files, sorted
/// by file name). A single file is the foreground probability of a binary
/// task: a float map, or an 8/16-bit image scaled to `[0, 1]`.
pub fn read_prediction(path: &Path, classes: usize) -> CliResult<ProbabilityField> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::input(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && (has_ext(p, "pfm") || has_ext(p, "png")))
            .collect();
        files.sort();
        if files.len() != classes {
            return Err(CliError::input(format!(
                "class-count mismatch: label has {classes} classes, {} holds {} channel files",
                path.display(),
                files.len()
            )));
        }
        let channels = files.iter().map(|f| read_probability_channel(f)).collect::<CliResult<Vec<_>>>()?;
        return ProbabilityField::new(channels).map_err(|e| CliError::input(format!("{}: {e}", path.display())));
    }
    if classes != 2 {
        return Err(CliError::input(format!(
            "class-count mismatch: label has {classes} classes but {} is a single foreground map",
            path.display()
        )));
    }
    let fg = read_probability_channel(path)?;
    ProbabilityField::from_foreground(&fg).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Writes an 8-bit min/max-normalized preview of a grid.
pub fn write_preview(path: &Path, grid: &RealGrid) -> CliResult<()> {
    let (lo, hi) = (grid.min(), grid.max());
    let span = hi - lo;
    let pixels: Vec<u8> = grid
        .data()
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(grid.width() as u32, grid.height() as u32, pixels)
        .ok_or_else(|| CliError::internal("preview buffer size mismatch"))?;
    img.save(path).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

/// Writes class ids as an 8-bit (ids < 256) or 16-bit grayscale PNG.
pub fn write_class_image(path: &Path, image: &ClassImage) -> CliResult<()> {
    let (w, h) = (image.width as u32, image.height as u32);
    let max = image.ids.iter().copied().max().unwrap_or(0);
    let result = if max < 256 {
        GrayImage::from_raw(w, h, image.ids.iter().map(|&v| v as u8).collect()).map(|img| img.save(path))
    } else if max < 65536 {
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, image.ids.iter().map(|&v| v as u16).collect::<Vec<u16>>())
            .map(|img| img.save(path))
    } else {
        return Err(CliError::input("class ids above 65535 cannot be stored as PNG"));
    };
    result
        .ok_or_else(|| CliError::internal("class image buffer size mismatch"))?
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}
