//! Analytic steerable pyramid, computed entirely in the Fourier domain.
//!
//! Layout for `N` levels and `K` orientations on an `H x W` image:
//!
//! ```text
//! high_pass          H x W              real
//! subbands[0][0..K]  H x W              complex (analytic)
//! subbands[1][0..K]  H/2 x W/2
//! ...
//! subbands[N-1][..]  H/2^(N-1) x W/2^(N-1)
//! low_pass           H/2^(N-1) x W/2^(N-1)   real
//! ```
//!
//! Downsampling crops the low-pass spectrum to its central half, which is
//! alias-free because `L(r)` vanishes from `pi/2` onward. The real part of
//! every analytic subband equals the classical real steerable subband, and
//! [`reconstruct`] inverts the decomposition through those real parts.

use num_complex::Complex64;

use crate::error::{shape_mismatch, Result, SpwError};
use crate::filters::{cached_filter_bank, FilterBankSpec};
use crate::grid::{accumulate_inverse_modulus, forward_fft, inverse_fft, resample_spectrum, ComplexGrid, GridSize, RealGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidDecomposition {
    pub high_pass: RealGrid,
    /// `subbands[level][orientation]`, level 0 at full resolution.
    pub subbands: Vec<Vec<ComplexGrid>>,
    pub low_pass: RealGrid,
    pub spec: FilterBankSpec,
    /// Size of the decomposed image.
    pub original_size: GridSize,
}

impl PyramidDecomposition {
    /// A decomposition with every coefficient zero.
    pub fn zeros(spec: FilterBankSpec, size: GridSize) -> Result<Self> {
        spec.check_size(size.height, size.width)?;
        let subbands = (1..=spec.levels)
            .map(|i| {
                let s = spec.level_size(size, i);
                vec![ComplexGrid::zeros(s.height, s.width); spec.orientations]
            })
            .collect();
        let low = spec.level_size(size, spec.levels);
        Ok(Self {
            high_pass: RealGrid::zeros(size.height, size.width),
            subbands,
            low_pass: RealGrid::zeros(low.height, low.width),
            spec,
            original_size: size,
        })
    }

    pub fn levels(&self) -> usize {
        self.subbands.len()
    }

    pub fn orientations(&self) -> usize {
        self.spec.orientations
    }

    /// Number of stored coefficient grids (`1 + N K + 1`).
    pub fn grid_count(&self) -> usize {
        2 + self.subbands.iter().map(Vec::len).sum::<usize>()
    }

    /// Coefficient energy with every level's samples weighted by the area
    /// they cover at full resolution (`4^(level-1)`).
    pub fn area_weighted_energy(&self) -> f64 {
        let mut total = self.high_pass.energy();
        for (i, level) in self.subbands.iter().enumerate() {
            let w = 4f64.powi(i as i32);
            total += w * level.iter().map(ComplexGrid::energy).sum::<f64>();
        }
        total + 4f64.powi(self.levels() as i32 - 1) * self.low_pass.energy()
    }

    fn check_layout(&self) -> Result<()> {
        let size = self.original_size;
        self.spec.check_size(size.height, size.width)?;
        if self.high_pass.size() != size {
            return Err(shape_mismatch((size.height, size.width), dims(self.high_pass.size())));
        }
        if self.subbands.len() != self.spec.levels {
            return Err(SpwError::ShapeMismatch {
                expected: format!("{} levels", self.spec.levels),
                actual: format!("{} levels", self.subbands.len()),
            });
        }
        for (i, level) in self.subbands.iter().enumerate() {
            let expected = self.spec.level_size(size, i + 1);
            if level.len() != self.spec.orientations {
                return Err(SpwError::ShapeMismatch {
                    expected: format!("{} orientations", self.spec.orientations),
                    actual: format!("{} orientations at level {}", level.len(), i + 1),
                });
            }
            if let Some(bad) = level.iter().find(|b| b.size() != expected) {
                return Err(shape_mismatch(dims(expected), dims(bad.size())));
            }
        }
        let low = self.spec.level_size(size, self.spec.levels);
        if self.low_pass.size() != low {
            return Err(shape_mismatch(dims(low), dims(self.low_pass.size())));
        }
        Ok(())
    }
}

fn dims(s: GridSize) -> (usize, usize) {
    (s.height, s.width)
}

/// Halves both dimensions of a spectrum whose support lies inside the
/// central half band, preserving spatial amplitudes.
fn downsample_spectrum(s: &ComplexGrid) -> ComplexGrid {
    resample_spectrum(s, s.height() / 2, s.width() / 2).scale(Complex64::new(0.25, 0.0))
}

fn upsample_spectrum(s: &ComplexGrid, size: GridSize) -> ComplexGrid {
    resample_spectrum(s, size.height, size.width).scale(Complex64::new(4.0, 0.0))
}

/// Decomposes `image` into high-pass residue, `N x K` analytic subbands and
/// low-pass residue. Both dimensions must be multiples of `2^(N-1)`.
pub fn decompose(image: &RealGrid, spec: FilterBankSpec) -> Result<PyramidDecomposition> {
    let (subbands, residues) = analyze(image, spec, true)?;
    let (high_pass, low_pass) = residues.expect("residues requested");
    Ok(PyramidDecomposition { high_pass, subbands, low_pass, spec, original_size: image.size() })
}

/// The analytic subbands of [`decompose`] without the two residues.
pub fn analytic_subbands(image: &RealGrid, spec: FilterBankSpec) -> Result<Vec<Vec<ComplexGrid>>> {
    Ok(analyze(image, spec, false)?.0)
}

/// Per level, the sum over orientations of the analytic subband moduli at
/// the level's native resolution. Equal to summing the moduli of the
/// [`decompose`] subbands, but computed band by band in one reused buffer.
pub fn envelope_sums(image: &RealGrid, spec: FilterBankSpec) -> Result<Vec<RealGrid>> {
    let bank = cached_filter_bank(spec, image.height(), image.width())?;
    let mut low = forward_fft(image);
    low.mul_real_assign(&bank.low0)?;
    let mut buffer = vec![Complex64::new(0.0, 0.0); image.len()];

    let mut sums = Vec::with_capacity(spec.levels);
    for (i, level) in bank.levels.iter().enumerate() {
        let (h, w) = dims(level.size);
        let mut acc = vec![0.0; h * w];
        for mask in &level.analytic {
            accumulate_inverse_modulus(low.data(), mask.data(), h, w, &mut buffer[..h * w], &mut acc);
        }
        let acc = RealGrid::new(h, w, acc)?;
        sums.push(acc);
        if i + 1 < spec.levels {
            low.mul_real_assign(&level.lowpass)?;
            low = downsample_spectrum(&low);
        }
    }
    Ok(sums)
}

type Residues = Option<(RealGrid, RealGrid)>;

fn analyze(image: &RealGrid, spec: FilterBankSpec, residues: bool) -> Result<(Vec<Vec<ComplexGrid>>, Residues)> {
    let bank = cached_filter_bank(spec, image.height(), image.width())?;
    let spectrum = forward_fft(image);

    let high_pass = residues.then(|| spectrum.mul_real(&bank.high0).map(|s| inverse_fft(&s).re())).transpose()?;
    let mut low = spectrum.mul_real(&bank.low0)?;

    let mut subbands = Vec::with_capacity(spec.levels);
    for (i, level) in bank.levels.iter().enumerate() {
        let bands = level
            .analytic
            .iter()
            .map(|mask| Ok(inverse_fft(&low.mul_real(mask)?)))
            .collect::<Result<Vec<_>>>()?;
        subbands.push(bands);
        if i + 1 < spec.levels {
            low = downsample_spectrum(&low.mul_real(&level.lowpass)?);
        } else if residues {
            low = low.mul_real(&level.lowpass)?;
        }
    }
    let residues = high_pass.map(|h| (h, inverse_fft(&low).re()));
    Ok((subbands, residues))
}

/// Inverts [`decompose`] using the real (classical) part of each subband.
pub fn reconstruct(p: &PyramidDecomposition) -> Result<RealGrid> {
    p.check_layout()?;
    let size = p.original_size;
    let bank = cached_filter_bank(p.spec, size.height, size.width)?;

    let mut acc = forward_fft(&p.low_pass);
    for (i, level) in bank.levels.iter().enumerate().rev() {
        if i + 1 < p.spec.levels {
            acc = upsample_spectrum(&acc, level.size);
        }
        acc = acc.mul_real(&level.lowpass)?;
        for (band, mask) in p.subbands[i].iter().zip(&level.bands) {
            acc = acc.add(&forward_fft(&band.re()).mul_real(mask)?)?;
        }
    }
    let full = acc.mul_real(&bank.low0)?.add(&forward_fft(&p.high_pass).mul_real(&bank.high0)?)?;
    Ok(inverse_fft(&full).re())
}
