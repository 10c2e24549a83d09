//! Polar-separable steerable pyramid filters.
//!
//! A band-pass filter for orientation `k` is `B_k(r, theta) = H(r) G_k(theta)`
//! with a raised-cosine (in log-frequency) radial high-pass `H` and an
//! angular gain `G_k(theta) = alpha |cos(theta - pi k / K)|^(K-1)`. `H` and
//! its complement `L = sqrt(1 - H^2)` form a power-complementary pair, and
//! `sum_k G_k^2 = 1`, which together make the pyramid a tight frame.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, SpwError};
use crate::grid::{FrequencyCoords, GridSize, RealGrid};

/// Samples with `|cos(theta - phi_k)|` below this are on the analytic dividing line.
const DIVIDING_LINE_TOL: f64 = 1e-12;

/// Number of orientations and pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterBankSpec {
    pub orientations: usize,
    pub levels: usize,
}

impl Default for FilterBankSpec {
    fn default() -> Self {
        Self { orientations: 4, levels: 4 }
    }
}

impl FilterBankSpec {
    pub fn new(orientations: usize, levels: usize) -> Result<Self> {
        let spec = Self { orientations, levels };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orientations == 0 {
            return Err(SpwError::InvalidParameter("orientations must be >= 1".into()));
        }
        if self.levels == 0 {
            return Err(SpwError::InvalidParameter("levels must be >= 1".into()));
        }
        // Each level halves the grid; beyond this the factor overflows.
        if self.levels > 30 {
            return Err(SpwError::InvalidParameter("levels must be <= 30".into()));
        }
        Ok(())
    }

    /// Both grid dimensions must be multiples of this (`2^(N-1)`).
    pub fn size_factor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn check_size(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let factor = self.size_factor();
        if height == 0 || width == 0 || height % factor != 0 || width % factor != 0 {
            return Err(SpwError::Divisibility { height, width, factor, levels: self.levels });
        }
        Ok(())
    }

    /// Grid size of level `level` (1-based) for a full-resolution size.
    pub fn level_size(&self, full: GridSize, level: usize) -> GridSize {
        let div = 1 << (level - 1);
        GridSize::new(full.height / div, full.width / div)
    }
}

/// Radial high-pass response: 0 below `pi/4`, 1 above `pi/2`, and
/// `cos(pi/2 * log2(2r/pi))` in between.
pub fn radial_highpass(r: f64) -> f64 {
    if r <= FRAC_PI_4 {
        0.0
    } else if r >= FRAC_PI_2 {
        1.0
    } else {
        (FRAC_PI_2 * (2.0 * r / PI).log2()).cos()
    }
}

/// Power complement of [`radial_highpass`].
pub fn radial_lowpass(r: f64) -> f64 {
    if r <= FRAC_PI_4 {
        1.0
    } else if r >= FRAC_PI_2 {
        0.0
    } else {
        // sin(x) == sqrt(1 - cos(x)^2) on the transition, without cancellation.
        (FRAC_PI_2 * (2.0 * r / PI).log2()).sin().abs()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Angular normalizer `alpha = 2^(K-1) (K-1)! / sqrt(K (2(K-1))!)`.
pub fn angular_normalizer(orientations: usize) -> f64 {
    let order = orientations - 1;
    2f64.powi(order as i32) * factorial(order) / (orientations as f64 * factorial(2 * order)).sqrt()
}

/// Preferred direction `pi k / K` of orientation `k` in `1..=K`.
pub fn orientation_angle(k: usize, orientations: usize) -> f64 {
    PI * k as f64 / orientations as f64
}

/// Angular gain `G_k(theta)` for orientation `k` in `1..=K`.
pub fn angular_gain(theta: f64, k: usize, orientations: usize) -> f64 {
    debug_assert!(orientations >= 1 && (1..=orientations).contains(&k));
    let c = (theta - orientation_angle(k, orientations)).cos().abs();
    angular_normalizer(orientations) * c.powi(orientations as i32 - 1)
}

/// Filters sampled at one pyramid level.
#[derive(Debug, Clone)]
pub struct LevelFilters {
    pub size: GridSize,
    /// `H(r)` on this level's grid.
    pub highpass: RealGrid,
    /// `L(r)` on this level's grid.
    pub lowpass: RealGrid,
    /// Real band masks `H(r) G_k(theta)`, one per orientation.
    pub bands: Vec<RealGrid>,
    /// Analytic band masks: twice the real mask on the half-plane facing
    /// the orientation, the real mask on the dividing line, zero elsewhere.
    pub analytic: Vec<RealGrid>,
}

/// Sampled frequency responses for one `(spec, size)` pair.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub spec: FilterBankSpec,
    pub size: GridSize,
    /// High-pass residue mask `H(r/2)` at full resolution.
    pub high0: RealGrid,
    /// Complementary low-pass `L(r/2)` at full resolution.
    pub low0: RealGrid,
    pub levels: Vec<LevelFilters>,
    pub alpha: f64,
}

fn sample_level(spec: &FilterBankSpec, size: GridSize) -> LevelFilters {
    let coords = FrequencyCoords::for_size(size.height, size.width);
    let highpass = coords.radius.map(radial_highpass);
    let lowpass = coords.radius.map(radial_lowpass);
    let k_count = spec.orientations;
    let mut bands = Vec::with_capacity(k_count);
    let mut analytic = Vec::with_capacity(k_count);
    for k in 1..=k_count {
        let phi = orientation_angle(k, k_count);
        let real = highpass
            .zip_with(&coords.angle, |h, theta| h * angular_gain(theta, k, k_count))
            .expect("same size");
        let half_plane = real
            .zip_with(&coords.angle, |b, theta| {
                let side = (theta - phi).cos();
                if side.abs() <= DIVIDING_LINE_TOL {
                    b
                } else if side > 0.0 {
                    2.0 * b
                } else {
                    0.0
                }
            })
            .expect("same size");
        bands.push(real);
        analytic.push(half_plane);
    }
    LevelFilters { size, highpass, lowpass, bands, analytic }
}

/// Samples `H0`, `L0` and every level's band masks for a `height x width` image.
pub fn build_filter_bank(spec: FilterBankSpec, height: usize, width: usize) -> Result<FilterBank> {
    spec.check_size(height, width)?;
    let full = GridSize::new(height, width);
    let coords = FrequencyCoords::for_size(height, width);
    let high0 = coords.radius.map(|r| radial_highpass(r / 2.0));
    let low0 = coords.radius.map(|r| radial_lowpass(r / 2.0));
    let levels = (1..=spec.levels).map(|i| sample_level(&spec, spec.level_size(full, i))).collect();
    Ok(FilterBank { spec, size: full, high0, low0, levels, alpha: angular_normalizer(spec.orientations) })
}

type BankKey = (FilterBankSpec, usize, usize);
type BankSlot = Arc<OnceLock<Arc<FilterBank>>>;

/// Shared, lazily built filter bank. Each key is constructed at most once;
/// concurrent callers for the same key wait on the first construction.
pub fn cached_filter_bank(spec: FilterBankSpec, height: usize, width: usize) -> Result<Arc<FilterBank>> {
    spec.check_size(height, width)?;
    static CACHE: OnceLock<Mutex<HashMap<BankKey, BankSlot>>> = OnceLock::new();
    let slot = {
        let mut map = CACHE
            .get_or_init(|| Mutex::new(HashMap::new()))
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        map.entry((spec, height, width)).or_default().clone()
    };
    Ok(slot
        .get_or_init(|| Arc::new(build_filter_bank(spec, height, width).expect("size checked")))
        .clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn highpass_boundaries_and_midpoint() {
        assert_abs_diff_eq!(radial_highpass(FRAC_PI_2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(radial_highpass(FRAC_PI_4), 0.0, epsilon = 1e-15);
        // Continuity just inside the transition band.
        assert_abs_diff_eq!(radial_highpass(FRAC_PI_2 - 1e-9), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(radial_highpass(FRAC_PI_4 + 1e-9), 0.0, epsilon = 1e-7);
        let mid = PI / (2.0 * 2f64.sqrt());
        assert_abs_diff_eq!(radial_highpass(mid), 0.707_106_78, epsilon = 1e-8);
        assert_abs_diff_eq!(radial_lowpass(mid), 0.707_106_78, epsilon = 1e-8);
    }

    #[test]
    fn lowpass_constant_regions() {
        assert_eq!(radial_lowpass(PI / 8.0), 1.0);
        assert_eq!(radial_lowpass(PI), 0.0);
        assert_eq!(radial_highpass(0.0), 0.0);
    }

    #[test]
    fn radial_partition_of_unity_and_monotone() {
        let mut prev = 0.0;
        for i in 0..=20_000 {
            let r = PI * 2f64.sqrt() * i as f64 / 20_000.0;
            let (h, l) = (radial_highpass(r), radial_lowpass(r));
            assert!((h * h + l * l - 1.0).abs() <= 1e-10);
            assert!(h >= prev, "highpass decreased at r = {r}");
            prev = h;
        }
    }

    #[test]
    fn angular_gain_examples() {
        // 8 * 3! / sqrt(4 * 6!) = 48 / sqrt(2880)
        assert_abs_diff_eq!(angular_normalizer(4), 48.0 / 2880f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(angular_gain(PI / 2.0, 2, 4), 0.894_427_19, epsilon = 1e-8);
        for k in 1..=4 {
            let theta = orientation_angle(k, 4) + FRAC_PI_2;
            assert_abs_diff_eq!(angular_gain(theta, k, 4), 0.0, epsilon = 1e-15);
        }
        for theta in [-3.0, -0.5, 0.0, 1.0, 3.1] {
            assert_eq!(angular_gain(theta, 1, 1), 1.0);
        }
    }

    #[test]
    fn angular_tiling_is_constant() {
        for orientations in 1..=8 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..10_000 {
                let theta = -PI + 2.0 * PI * (i as f64 + 0.5) / 10_000.0;
                let s: f64 = (1..=orientations).map(|k| angular_gain(theta, k, orientations).powi(2)).sum();
                lo = lo.min(s);
                hi = hi.max(s);
            }
            assert!(hi - lo <= 1e-10, "K = {orientations}: spread {}", hi - lo);
            assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn bank_size_ladder() {
        let bank = build_filter_bank(FilterBankSpec::default(), 512, 512).unwrap();
        let sizes: Vec<usize> = bank.levels.iter().map(|l| l.size.height).collect();
        assert_eq!(sizes, vec![512, 256, 128, 64]);
        assert!(bank.levels.iter().all(|l| l.analytic.len() == 4 && l.bands.len() == 4));
    }

    #[test]
    fn bank_rejects_incompatible_size() {
        let err = build_filter_bank(FilterBankSpec::default(), 100, 96).unwrap_err();
        assert!(matches!(err, SpwError::Divisibility { factor: 8, .. }));
        assert!(FilterBankSpec::new(0, 4).is_err());
    }

    #[test]
    fn single_orientation_mask_is_doubled_highpass_on_right_half_plane() {
        let bank = build_filter_bank(FilterBankSpec::new(1, 1).unwrap(), 8, 8).unwrap();
        let level = &bank.levels[0];
        let coords = FrequencyCoords::for_size(8, 8);
        for u in 0..8 {
            for v in 0..8 {
                let (r, theta) = (coords.radius.get(u, v), coords.angle.get(u, v));
                let h = radial_highpass(r);
                // K = 1 points at theta = pi, so the kept half-plane is
                // cos(theta - pi) > 0, i.e. omega_x < 0; the opposite
                // half-plane theta in (-pi/2, pi/2) is dropped.
                let expected = if v == 0 {
                    h
                } else if theta.abs() > FRAC_PI_2 {
                    2.0 * h
                } else {
                    0.0
                };
                assert_abs_diff_eq!(level.analytic[0].get(u, v), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dc_is_zero_and_values_bounded() {
        let bank = build_filter_bank(FilterBankSpec::default(), 64, 64).unwrap();
        for level in &bank.levels {
            for mask in level.analytic.iter().chain(&level.bands) {
                assert_eq!(mask.get(0, 0), 0.0);
                assert!(mask.min() >= 0.0 && mask.max() <= 2.0);
            }
        }
    }

    #[test]
    fn analytic_masks_preserve_energy_across_half_planes() {
        let bank = build_filter_bank(FilterBankSpec::default(), 32, 32).unwrap();
        let level = &bank.levels[0];
        let coords = FrequencyCoords::for_size(32, 32);
        let n = 32usize;
        for (k, (analytic, real)) in level.analytic.iter().zip(&level.bands).enumerate() {
            let phi = orientation_angle(k + 1, 4);
            for u in 0..n {
                for v in 0..n {
                    let b2 = real.get(u, v).powi(2);
                    let a = analytic.get(u, v);
                    if (coords.angle.get(u, v) - phi).cos().abs() <= DIVIDING_LINE_TOL {
                        assert_abs_diff_eq!(a * a, b2, epsilon = 1e-12);
                    } else if u != n / 2 && v != n / 2 {
                        // Negated bin shares |H G_k| and sits on the opposite half-plane.
                        let a_neg = analytic.get((n - u) % n, (n - v) % n);
                        assert_abs_diff_eq!(a * a + a_neg * a_neg, 4.0 * b2, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cache_returns_shared_bank() {
        let spec = FilterBankSpec::new(3, 2).unwrap();
        let a = cached_filter_bank(spec, 16, 24).unwrap();
        let b = cached_filter_bank(spec, 16, 24).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let handles: Vec<_> =
            (0..4).map(|_| std::thread::spawn(move || cached_filter_bank(spec, 16, 24).unwrap())).collect();
        for h in handles {
            assert!(Arc::ptr_eq(&a, &h.join().unwrap()));
        }
    }
}
