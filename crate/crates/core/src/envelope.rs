//! Amplitude envelopes of analytic subbands and Fourier zero-pad upsampling.

use crate::error::{shape_mismatch, Result, SpwError};
use crate::grid::{zero_pad_interpolate, ComplexGrid, GridSize, RealGrid};

/// Non-negative amplitude map of one subband.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMap {
    pub grid: RealGrid,
    /// Pyramid level (1-based) the envelope came from.
    pub level: usize,
    /// Native size of the subband, before any upsampling.
    pub source_size: GridSize,
}

impl EnvelopeMap {
    pub fn size(&self) -> GridSize {
        self.grid.size()
    }
}

/// Per-pixel modulus of an analytic subband.
pub fn amplitude(subband: &ComplexGrid, level: usize) -> EnvelopeMap {
    EnvelopeMap { grid: subband.norm(), level, source_size: subband.size() }
}

/// Interpolates `e` onto a `target` grid by zero-padding its spectrum.
///
/// The spectrum is rescaled by the area ratio so per-pixel amplitudes are
/// kept, and negative ringing is clamped to zero.
pub fn upsample_zero_pad(e: &EnvelopeMap, target: GridSize) -> Result<EnvelopeMap> {
    let grid = upsample_grid(&e.grid, target)?;
    Ok(EnvelopeMap { grid, level: e.level, source_size: e.source_size })
}

pub(crate) fn upsample_grid(g: &RealGrid, target: GridSize) -> Result<RealGrid> {
    let source = g.size();
    if target.height < source.height || target.width < source.width {
        return Err(SpwError::TargetTooSmall {
            source_h: source.height,
            source_w: source.width,
            target_h: target.height,
            target_w: target.width,
        });
    }
    if target == source {
        return Ok(g.clone());
    }
    Ok(zero_pad_interpolate(g, target.height, target.width))
}

/// Orientation-summed weight of one level, `beta^(level-1) * sum_k envelope_k`,
/// at the level's native resolution.
pub fn scale_weight(envelopes: &[EnvelopeMap], beta: f64, level: usize) -> Result<RealGrid> {
    if level == 0 {
        return Err(SpwError::InvalidParameter("level is 1-based".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SpwError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let first = envelopes
        .first()
        .ok_or_else(|| SpwError::InvalidParameter("scale_weight needs at least one envelope".into()))?;
    let size = first.size();
    let mut acc = vec![0.0; size.area()];
    for e in envelopes {
        if e.size() != size {
            return Err(shape_mismatch((size.height, size.width), (e.grid.height(), e.grid.width())));
        }
        for (a, v) in acc.iter_mut().zip(e.grid.data()) {
            *a += v;
        }
    }
    let factor = beta.powi(level as i32 - 1);
    RealGrid::new(size.height, size.width, acc.into_iter().map(|v| v * factor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{forward_fft, inverse_fft, resample_spectrum};
    use num_complex::Complex64;
    use crate::filters::{angular_gain, radial_highpass, FilterBankSpec};
    use crate::pyramid::decompose;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn env(grid: RealGrid) -> EnvelopeMap {
        let size = grid.size();
        EnvelopeMap { grid, level: 1, source_size: size }
    }

    #[test]
    fn amplitude_basics() {
        let zero = amplitude(&ComplexGrid::zeros(4, 4), 1);
        assert!(zero.grid.data().iter().all(|&v| v == 0.0));
        let one = ComplexGrid::from_fn(3, 3, |r, c| {
            if (r, c) == (1, 2) {
                Complex64::new(3.0, 4.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert_eq!(amplitude(&one, 2).grid.get(1, 2), 5.0);
    }

    #[test]
    fn amplitude_ignores_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let band = ComplexGrid::from_fn(8, 8, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let rotated = band.scale(Complex64::from_polar(1.0, 1.234));
        let a = amplitude(&band, 1);
        let b = amplitude(&rotated, 1);
        for (x, y) in a.grid.data().iter().zip(b.grid.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn sinusoid_envelope_is_flat_at_filter_gain() {
        // cos(omega y) at omega = 3pi/8 lands on bin 24 of a 128 grid and
        // sits inside level 1 of orientation k = 2 (theta = pi/2).
        let n = 128;
        let amp = 2.0;
        let omega = 3.0 * PI / 8.0;
        let img = RealGrid::from_fn(n, n, |r, _| amp * (omega * r as f64).cos());
        let p = decompose(&img, FilterBankSpec::default()).unwrap();
        let e = amplitude(&p.subbands[0][1], 1);
        let expected = amp * radial_highpass(omega) * angular_gain(PI / 2.0, 2, 4);
        for r in 8..n - 8 {
            for c in 8..n - 8 {
                assert!((e.grid.get(r, c) - expected).abs() <= 0.05 * expected);
            }
        }
    }

    #[test]
    fn upsample_constant_and_identity() {
        let c = 1.75;
        let up = upsample_zero_pad(&env(RealGrid::filled(4, 4, c)), GridSize::new(8, 8)).unwrap();
        assert!(up.grid.data().iter().all(|v| (v - c).abs() <= 1e-10));
        assert_eq!(up.source_size, GridSize::new(4, 4));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = RealGrid::from_fn(6, 10, |_, _| rng.random_range(0.0..1.0));
        let same = upsample_zero_pad(&env(g.clone()), g.size()).unwrap();
        assert_eq!(same.grid, g);
    }

    #[test]
    fn upsample_rejects_smaller_target() {
        let e = env(RealGrid::zeros(8, 8));
        assert!(matches!(upsample_zero_pad(&e, GridSize::new(4, 16)), Err(SpwError::TargetTooSmall { .. })));
    }

    /// Periodic interpolation kernel of an `n`-point even axis, by direct
    /// summation over its frequencies (Nyquist split into a cosine).
    fn dirichlet(t: f64, n: usize) -> f64 {
        let half = (n / 2) as i64;
        let mut s = 0.0;
        for m in -(half - 1)..half {
            s += (2.0 * PI * m as f64 * t / n as f64).cos();
        }
        s += (PI * t).cos();
        s / n as f64
    }

    #[test]
    fn impulse_upsamples_to_dirichlet_kernel() {
        let impulse = RealGrid::from_fn(8, 8, |r, c| if (r, c) == (4, 4) { 1.0 } else { 0.0 });
        let up = upsample_zero_pad(&env(impulse), GridSize::new(16, 16)).unwrap();
        assert!((up.grid.get(8, 8) - 1.0).abs() <= 1e-10);
        for p in 0..16 {
            for q in 0..16 {
                let ty = p as f64 / 2.0 - 4.0;
                let tx = q as f64 / 2.0 - 4.0;
                let expected = (dirichlet(ty, 8) * dirichlet(tx, 8)).max(0.0);
                assert!((up.grid.get(p, q) - expected).abs() <= 1e-10, "({p},{q})");
            }
        }
    }

    #[test]
    fn upsample_keeps_mean_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = RealGrid::from_fn(8, 12, |_, _| 5.0 + rng.random_range(0.0..1.0));
        let target = GridSize::new(32, 24);
        let up = upsample_zero_pad(&env(g.clone()), target).unwrap();
        assert!(up.grid.min() > 0.0, "no clamping expected");
        assert!((up.grid.mean() - g.mean()).abs() <= 1e-10);

        let ratio = g.size().area() as f64 / target.area() as f64;
        let down = inverse_fft(&resample_spectrum(&forward_fft(&up.grid), 8, 12).scale(ratio.into())).re();
        for (a, b) in down.data().iter().zip(g.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn scale_weight_cases() {
        let zeros = vec![env(RealGrid::zeros(4, 4)); 4];
        assert!(scale_weight(&zeros, 0.9, 2).unwrap().data().iter().all(|&v| v == 0.0));

        let a = env(RealGrid::filled(2, 2, 1.5));
        let b = env(RealGrid::filled(2, 2, 0.25));
        let plain = scale_weight(&[a.clone(), b.clone()], 1.0, 4).unwrap();
        assert!(plain.data().iter().all(|&v| v == 1.75));

        let single = scale_weight(&[env(RealGrid::filled(3, 3, 1.0))], 0.9, 3).unwrap();
        assert!(single.data().iter().all(|v| (v - 0.81).abs() < 1e-15));

        let wrong = env(RealGrid::zeros(3, 2));
        assert!(matches!(scale_weight(&[a, wrong], 0.9, 1), Err(SpwError::ShapeMismatch { .. })));
        assert!(scale_weight(&[], 0.9, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn scale_weight_is_positively_homogeneous(seed in 0u64..500, s in 0.0f64..10.0, level in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let envs: Vec<EnvelopeMap> =
                (0..3).map(|_| env(RealGrid::from_fn(4, 5, |_, _| rng.random_range(0.0..2.0)))).collect();
            let scaled: Vec<EnvelopeMap> = envs.iter().map(|e| env(e.grid.scale(s))).collect();
            let base = scale_weight(&envs, 0.9, level).unwrap();
            let out = scale_weight(&scaled, 0.9, level).unwrap();
            for (x, y) in base.data().iter().zip(out.data()) {
                proptest::prop_assert!((x * s - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
