//! Dense 2-D grids, the 2-D discrete Fourier transform, padding and
//! spectral resampling.
//!
//! All grids are row-major. The Fourier convention is the unnormalized
//! forward DFT and the `1/(HW)`-normalized inverse. Frequency bin `u` of an
//! `n`-point axis represents the signed frequency `wrap(u, n)`, taken in
//! `(-n/2, n/2]` so the Nyquist bin of an even axis is positive.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_mismatch, Result, SpwError};

/// Height and width of a grid, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSize {
    pub height: usize,
    pub width: usize,
}

impl GridSize {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub const fn area(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for GridSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(SpwError::EmptyGrid { height, width });
    }
    if len != height * width {
        return Err(SpwError::DataLength { height, width, len });
    }
    Ok(())
}

/// `H x W` grid of real scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealGrid {
    /// Builds a grid from row-major data, rejecting bad lengths and non-finite values.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpwError::NonFinite { index });
        }
        Ok(Self { height, width, data })
    }

    /// Panics on zero dimensions.
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        RealGrid { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, factor: f64) -> RealGrid {
        self.map(|v| v * factor)
    }

    /// Element-wise `self + other`.
    pub fn add(&self, other: &RealGrid) -> Result<RealGrid> {
        self.zip_with(other, |a, b| a + b)
    }

    pub(crate) fn add_assign(&mut self, other: &RealGrid) -> Result<()> {
        if self.size() != other.size() {
            return Err(shape_mismatch((self.height, self.width), (other.height, other.width)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn zip_with(&self, other: &RealGrid, f: impl Fn(f64, f64) -> f64) -> Result<RealGrid> {
        if self.size() != other.size() {
            return Err(shape_mismatch((self.height, self.width), (other.height, other.width)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(RealGrid { height: self.height, width: self.width, data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_complex(&self) -> ComplexGrid {
        ComplexGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// `H x W` grid of complex scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(SpwError::NonFinite { index });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self { height, width, data: vec![Complex64::new(0.0, 0.0); height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn re(&self) -> RealGrid {
        RealGrid { height: self.height, width: self.width, data: self.data.iter().map(|c| c.re).collect() }
    }

    pub fn norm(&self) -> RealGrid {
        RealGrid { height: self.height, width: self.width, data: self.data.iter().map(|c| c.norm_sqr().sqrt()).collect() }
    }

    pub fn scale(&self, factor: Complex64) -> ComplexGrid {
        ComplexGrid { height: self.height, width: self.width, data: self.data.iter().map(|&c| c * factor).collect() }
    }

    /// Multiplies every sample by the matching real mask value.
    pub(crate) fn mul_real_assign(&mut self, mask: &RealGrid) -> Result<()> {
        if self.size() != mask.size() {
            return Err(shape_mismatch((self.height, self.width), (mask.height, mask.width)));
        }
        for (c, &m) in self.data.iter_mut().zip(&mask.data) {
            *c *= m;
        }
        Ok(())
    }

    pub fn mul_real(&self, mask: &RealGrid) -> Result<ComplexGrid> {
        if self.size() != mask.size() {
            return Err(shape_mismatch((self.height, self.width), (mask.height, mask.width)));
        }
        let data = self.data.iter().zip(&mask.data).map(|(&c, &m)| c * m).collect();
        Ok(ComplexGrid { height: self.height, width: self.width, data })
    }

    pub fn add(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        if self.size() != other.size() {
            return Err(shape_mismatch((self.height, self.width), (other.height, other.width)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(ComplexGrid { height: self.height, width: self.width, data })
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

type PlanKey = (usize, bool);

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> = OnceLock::new();
    let cell = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cell.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, inverse))
        .or_insert_with(|| if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) })
        .clone()
}

// Columns are transformed in strips of this many, gathered into a small
// contiguous buffer that stays cache-resident.
const COLUMN_STRIP: usize = 16;

thread_local! {
    // Strip buffer and FFT scratch, reused across calls on each thread.
    static BUFFERS: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Hooks that let callers fuse their own element-wise work into the two
/// passes of a 2-D transform instead of sweeping the grid separately.
#[derive(Default)]
struct Passes<'a> {
    /// Writes row `r` of the input just before that row is transformed.
    fill_row: Option<&'a mut dyn FnMut(usize, &mut [Complex64])>,
    /// Rows known to be zero on input; their row transform is skipped.
    zero_rows: Option<&'a [bool]>,
    /// Receives transformed columns `c0..c0 + n` as a column-major strip
    /// instead of having them written back.
    take_strip: Option<&'a mut dyn FnMut(usize, usize, &[Complex64])>,
}

fn fft2_passes(data: &mut [Complex64], height: usize, width: usize, inverse: bool, mut passes: Passes<'_>) {
    let zero = Complex64::new(0.0, 0.0);
    let row_plan = plan(width, inverse);
    let col_plan = plan(height, inverse);
    BUFFERS.with(|cell| {
        let (strip, scratch) = &mut *cell.borrow_mut();
        let need = row_plan.get_inplace_scratch_len().max(col_plan.get_inplace_scratch_len());
        if scratch.len() < need {
            scratch.resize(need, zero);
        }
        let row_scratch = &mut scratch[..row_plan.get_inplace_scratch_len()];
        if passes.fill_row.is_none() && passes.zero_rows.is_none() {
            row_plan.process_with_scratch(data, row_scratch);
        } else {
            for (r, row) in data.chunks_exact_mut(width).enumerate() {
                if let Some(fill) = passes.fill_row.as_mut() {
                    fill(r, row);
                }
                if !passes.zero_rows.is_some_and(|z| z[r]) {
                    row_plan.process_with_scratch(row, row_scratch);
                }
            }
        }

        if strip.len() < COLUMN_STRIP * height {
            strip.resize(COLUMN_STRIP * height, zero);
        }
        let col_scratch = &mut scratch[..col_plan.get_inplace_scratch_len()];
        for c0 in (0..width).step_by(COLUMN_STRIP) {
            let bw = COLUMN_STRIP.min(width - c0);
            let strip = &mut strip[..bw * height];
            for r in 0..height {
                for (j, &v) in data[r * width + c0..r * width + c0 + bw].iter().enumerate() {
                    strip[j * height + r] = v;
                }
            }
            col_plan.process_with_scratch(strip, col_scratch);
            match passes.take_strip.as_mut() {
                Some(take) => take(c0, bw, strip),
                None => {
                    for r in 0..height {
                        for (j, v) in data[r * width + c0..r * width + c0 + bw].iter_mut().enumerate() {
                            *v = strip[j * height + r];
                        }
                    }
                }
            }
        }
    });
}

/// Unnormalized 2-D DFT of a row-major `height x width` buffer, in place.
pub(crate) fn fft2_in_place(data: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    fft2_passes(data, height, width, inverse, Passes::default());
}

/// Adds `|IDFT(spectrum * mask)|` (normalized inverse) to `acc`, using
/// `work` as the transform buffer. All slices hold `height x width` values.
pub(crate) fn accumulate_inverse_modulus(
    spectrum: &[Complex64],
    mask: &[f64],
    height: usize,
    width: usize,
    work: &mut [Complex64],
    acc: &mut [f64],
) {
    let norm = 1.0 / (height * width) as f64;
    let mut fill = |r: usize, row: &mut [Complex64]| {
        let range = r * width..(r + 1) * width;
        for ((b, &s), &m) in row.iter_mut().zip(&spectrum[range.clone()]).zip(&mask[range]) {
            *b = s * (m * norm);
        }
    };
    let mut take = |c0: usize, n: usize, strip: &[Complex64]| {
        for r in 0..height {
            let out = &mut acc[r * width + c0..r * width + c0 + n];
            for (j, a) in out.iter_mut().enumerate() {
                *a += strip[j * height + r].norm_sqr().sqrt();
            }
        }
    };
    let passes = Passes { fill_row: Some(&mut fill), zero_rows: None, take_strip: Some(&mut take) };
    fft2_passes(work, height, width, true, passes);
}

/// Fourier zero-pad interpolation of `g` onto a larger grid, rescaled by
/// the area ratio so per-pixel amplitudes are kept; negative ringing is
/// clamped to zero. Rows of the padded spectrum that stay zero skip their
/// row transform.
pub(crate) fn zero_pad_interpolate(g: &RealGrid, height: usize, width: usize) -> RealGrid {
    let spectrum = forward_fft(g);
    let mut up = resample_spectrum(&spectrum, height, width);
    let mut zero_rows = vec![true; height];
    for targets in axis_map(g.height, height) {
        for (r, _) in targets {
            zero_rows[r] = false;
        }
    }
    // Area rescaling and the inverse normalization collapse to 1 / source area.
    let norm = 1.0 / (g.height * g.width) as f64;
    let mut out = vec![0.0; height * width];
    let mut take = |c0: usize, n: usize, strip: &[Complex64]| {
        for r in 0..height {
            let row = &mut out[r * width + c0..r * width + c0 + n];
            for (j, v) in row.iter_mut().enumerate() {
                *v = (strip[j * height + r].re * norm).max(0.0);
            }
        }
    };
    let passes = Passes { fill_row: None, zero_rows: Some(&zero_rows), take_strip: Some(&mut take) };
    fft2_passes(&mut up.data, height, width, true, passes);
    RealGrid { height, width, data: out }
}

/// Unnormalized forward 2-D DFT of a real grid.
pub fn forward_fft(g: &RealGrid) -> ComplexGrid {
    let mut c = g.to_complex();
    fft2_in_place(&mut c.data, c.height, c.width, false);
    c
}

/// Unnormalized forward 2-D DFT of a complex grid.
pub fn forward_fft_complex(g: &ComplexGrid) -> ComplexGrid {
    let mut data = g.data.clone();
    fft2_in_place(&mut data, g.height, g.width, false);
    ComplexGrid { height: g.height, width: g.width, data }
}

/// Inverse 2-D DFT with `1/(HW)` normalization.
pub fn inverse_fft(s: &ComplexGrid) -> ComplexGrid {
    let mut data = s.data.clone();
    fft2_in_place(&mut data, s.height, s.width, true);
    let norm = 1.0 / (s.height * s.width) as f64;
    for v in &mut data {
        *v *= norm;
    }
    ComplexGrid { height: s.height, width: s.width, data }
}

// ---------------------------------------------------------------------------
// Frequency coordinates
// ---------------------------------------------------------------------------

/// Signed frequency index of bin `index` on an `n`-point axis, in `(-n/2, n/2]`.
#[inline]
pub fn wrap_frequency(index: usize, n: usize) -> isize {
    let i = index as isize;
    let n = n as isize;
    if 2 * i > n {
        i - n
    } else {
        i
    }
}

/// Polar frequency coordinates `(r, theta)` of every bin of an `H x W` spectrum.
///
/// `r` is in radians/sample, up to `pi * sqrt(2)` at the corners, and
/// `theta = atan2(omega_y, omega_x)` lies in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCoords {
    pub radius: RealGrid,
    pub angle: RealGrid,
}

impl FrequencyCoords {
    pub fn for_size(height: usize, width: usize) -> Self {
        let mut radius = Vec::with_capacity(height * width);
        let mut angle = Vec::with_capacity(height * width);
        for u in 0..height {
            let wy = 2.0 * PI * wrap_frequency(u, height) as f64 / height as f64;
            for v in 0..width {
                let wx = 2.0 * PI * wrap_frequency(v, width) as f64 / width as f64;
                radius.push(wx.hypot(wy));
                angle.push(wy.atan2(wx));
            }
        }
        Self {
            radius: RealGrid { height, width, data: radius },
            angle: RealGrid { height, width, data: angle },
        }
    }
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

/// Reflects `index` into `0..n` without repeating the edge sample.
fn mirror_index(index: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = index % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn next_multiple(n: usize, factor: usize) -> usize {
    n.div_ceil(factor) * factor
}

/// Mirror-pads the right and bottom edges so both dimensions become the
/// smallest multiples of `factor` not below the originals.
///
/// Returns the padded grid and the original size for [`crop_to`].
pub fn pad_to_multiple(g: &RealGrid, factor: usize) -> Result<(RealGrid, GridSize)> {
    if factor == 0 {
        return Err(SpwError::InvalidParameter("padding factor must be >= 1".into()));
    }
    let original = g.size();
    let height = next_multiple(g.height, factor);
    let width = next_multiple(g.width, factor);
    if height == g.height && width == g.width {
        return Ok((g.clone(), original));
    }
    let padded = RealGrid::from_fn(height, width, |r, c| {
        g.get(mirror_index(r, g.height), mirror_index(c, g.width))
    });
    Ok((padded, original))
}

/// Returns the top-left sub-grid of the recorded size.
pub fn crop_to(g: &RealGrid, size: GridSize) -> Result<RealGrid> {
    if size.height > g.height || size.width > g.width || size.height == 0 || size.width == 0 {
        return Err(shape_mismatch((g.height, g.width), (size.height, size.width)));
    }
    if size == g.size() {
        return Ok(g.clone());
    }
    let mut data = Vec::with_capacity(size.area());
    for r in 0..size.height {
        let start = r * g.width;
        data.extend_from_slice(&g.data[start..start + size.width]);
    }
    Ok(RealGrid { height: size.height, width: size.width, data })
}

// ---------------------------------------------------------------------------
// Spectral resampling
// ---------------------------------------------------------------------------

/// Destination bins and weights for every source bin of one axis.
///
/// Growing an even axis splits its Nyquist bin evenly between `+n/2` and
/// `-n/2`; shrinking to an even axis folds `+m/2` and `-m/2` into the new
/// Nyquist bin. Bins outside the destination band are dropped. With these
/// rules a shrink exactly undoes a grow.
fn axis_map(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    (0..from)
        .map(|index| {
            let f = wrap_frequency(index, from);
            let to_i = to as isize;
            let dest = |freq: isize| freq.rem_euclid(to_i) as usize;
            if to == from {
                vec![(index, 1.0)]
            } else if to > from {
                if from % 2 == 0 && 2 * f == from as isize {
                    vec![(dest(f), 0.5), (dest(-f), 0.5)]
                } else {
                    vec![(dest(f), 1.0)]
                }
            } else if 2 * f.abs() < to_i || (to % 2 == 0 && 2 * f.abs() == to_i) {
                vec![(dest(f), 1.0)]
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Moves a spectrum onto a grid of another size, keeping every bin at the
/// same signed frequency. Amplitudes are not rescaled.
pub fn resample_spectrum(s: &ComplexGrid, height: usize, width: usize) -> ComplexGrid {
    if s.height == height && s.width == width {
        return s.clone();
    }
    let rows = axis_map(s.height, height);
    let cols = axis_map(s.width, width);
    let mut out = ComplexGrid::zeros(height, width);
    for (r, row_targets) in rows.iter().enumerate() {
        for &(dr, wr) in row_targets {
            let src_row = &s.data[r * s.width..(r + 1) * s.width];
            let dst_row = &mut out.data[dr * width..(dr + 1) * width];
            for (c, col_targets) in cols.iter().enumerate() {
                let value = src_row[c] * wr;
                for &(dc, wc) in col_targets {
                    dst_row[dc] += value * wc;
                }
            }
        }
    }
    out
}
