use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use specseg_core::segmentation::symmetric_eigen;
use specseg_core::series::{fourier_grid, MultivariateSeries};
use specseg_core::spectral::{
    kernel_constants, kernel_value, periodogram, smooth_spectral, smoothed_at, KernelFamily,
    KernelSpec,
};
use specseg_core::stats::adaptive_simpson;
use std::f64::consts::PI;

fn gaussian_series(t_len: usize, p: usize, seed: u64) -> MultivariateSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((t_len, p));
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    MultivariateSeries::new(x).unwrap()
}

/// Direct transform J(w) = (2 pi T)^(-1/2) sum_{t=1..T} X_t e^(-i t w),
/// written independently of the library's internals.
fn dft_oracle(series: &MultivariateSeries, w: f64) -> Vec<Complex64> {
    let x = series.values();
    let (t_len, p) = x.dim();
    let norm = 1.0 / (2.0 * PI * t_len as f64).sqrt();
    (0..p)
        .map(|a| {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 1..=t_len {
                let phase = Complex64::new(0.0, -(t as f64) * w).exp();
                acc += x[[t - 1, a]] * phase;
            }
            acc * norm
        })
        .collect()
}

fn periodogram_oracle(series: &MultivariateSeries, w: f64) -> Array2<Complex64> {
    let j = dft_oracle(series, w);
    let p = j.len();
    let mut m = Array2::<Complex64>::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            m[[a, b]] = j[a] * j[b].conj();
        }
    }
    m
}

fn wrap(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// O(T^2) smoothing oracle: for every positive Fourier frequency, sum kernel
/// weights against direct-DFT periodograms over the whole Fourier circle.
fn brute_smooth(series: &MultivariateSeries, kernel: &KernelSpec) -> Vec<Array2<Complex64>> {
    let t_len = series.t_len();
    let p = series.dim();
    let h = kernel.bandwidth(t_len);
    let step = 2.0 * PI / t_len as f64;
    let circle: Vec<Array2<Complex64>> = (0..t_len)
        .map(|j| periodogram_oracle(series, step * j as f64))
        .collect();
    let mut out = Vec::new();
    for k in 1..=(t_len - 1) / 2 {
        let w = step * k as f64;
        let mut acc = Array2::<Complex64>::zeros((p, p));
        for (j, pj) in circle.iter().enumerate() {
            let delta = wrap(w - step * j as f64);
            let weight = kernel.value(delta / h) / h * step;
            if weight != 0.0 {
                acc = acc + pj.mapv(|v| v * weight);
            }
        }
        out.push(acc);
    }
    out
}

#[test]
fn bartlett_priestley_values() {
    let bp = KernelFamily::BartlettPriestley;
    assert!((kernel_value(bp, 0.0) - 3.0 / (4.0 * PI)).abs() < 1e-15);
    assert_eq!(kernel_value(bp, PI), 0.0);
    assert!((kernel_value(bp, PI / 2.0) - 9.0 / (16.0 * PI)).abs() < 1e-15);
    assert_eq!(kernel_value(bp, 4.0), 0.0);
    for theta in [0.1, 0.7, 2.0, 3.0] {
        assert_eq!(kernel_value(bp, theta), kernel_value(bp, -theta));
        assert!(kernel_value(bp, theta) >= 0.0);
    }
}

#[test]
fn parzen_values() {
    let pz = KernelFamily::Parzen;
    // Raw Parzen at 0 is 1; renormalized by the raw integral 3 pi / 4.
    assert!((kernel_value(pz, 0.0) - 4.0 / (3.0 * PI)).abs() < 1e-15);
    // At half support x = 1/2 both cubic pieces give 1/4.
    assert!((kernel_value(pz, PI / 2.0) - 1.0 / (3.0 * PI)).abs() < 1e-15);
    assert_eq!(kernel_value(pz, PI), 0.0);
    assert_eq!(kernel_value(pz, -3.5), 0.0);
    for theta in [0.2, 1.1, 2.9] {
        assert_eq!(kernel_value(pz, theta), kernel_value(pz, -theta));
        assert!(kernel_value(pz, theta) >= 0.0);
    }
}

#[test]
fn kernels_integrate_to_one() {
    for family in [KernelFamily::BartlettPriestley, KernelFamily::Parzen] {
        let integral = adaptive_simpson(&|u| kernel_value(family, u), -PI, PI, 1e-12);
        assert!(
            (integral - 1.0).abs() < 1e-10,
            "{family:?} integrates to {integral}"
        );
    }
}

#[test]
fn constants_match_frozen_references() {
    let (mu_bp, s2_bp) = kernel_constants(KernelFamily::BartlettPriestley);
    assert!((mu_bp - 3.0 / (5.0 * PI)).abs() < 1e-10);
    assert!((s2_bp - 334.0 / 385.0).abs() < 1e-8);

    let (mu_pz, s2_pz) = kernel_constants(KernelFamily::Parzen);
    assert!((mu_pz - 0.305173287706).abs() < 1e-6);
    assert!((s2_pz - 1.368961045423).abs() < 1e-6);

    assert!(mu_bp > 0.0 && s2_bp > 0.0 && mu_pz > 0.0 && s2_pz > 0.0);
}

#[test]
fn kernel_spec_validation_and_bandwidth() {
    assert!(KernelSpec::new(KernelFamily::BartlettPriestley, 0.0).is_err());
    assert!(KernelSpec::new(KernelFamily::BartlettPriestley, 0.5).is_err());
    assert!(KernelSpec::new(KernelFamily::BartlettPriestley, -0.1).is_err());
    let spec = KernelSpec::new(KernelFamily::Parzen, 0.25).unwrap();
    assert!((spec.bandwidth(16) - 0.5).abs() < 1e-15);
    let default = KernelSpec::default();
    assert_eq!(default.family(), KernelFamily::BartlettPriestley);
    assert!((default.q() - 0.15).abs() < 1e-15);
}

#[test]
fn cosine_input_concentrates_periodogram() {
    let t_len = 8;
    let mut x = Array2::<f64>::zeros((t_len, 1));
    for t in 1..=t_len {
        x[[t - 1, 0]] = (t as f64 * PI / 2.0).cos();
    }
    let series = MultivariateSeries::new(x).unwrap();
    let grid = fourier_grid(t_len).unwrap();
    let mats = periodogram(&series, &grid);
    // Grid is {pi/4, pi/2, 3 pi/4}; the signal lives at pi/2.
    let at_peak = mats[1][[0, 0]].re;
    let others = (mats[0][[0, 0]].re + mats[2][[0, 0]].re) / 2.0;
    assert!(
        at_peak > 10.0 * others,
        "peak {at_peak} vs background {others}"
    );
}

#[test]
fn periodogram_fft_equals_direct_summation() {
    let series = gaussian_series(8, 3, 42).demean();
    let grid = fourier_grid(8).unwrap();
    let fft_mats = periodogram(&series, &grid);
    for (k, &w) in grid.frequencies().iter().enumerate() {
        let oracle = periodogram_oracle(&series, w);
        for a in 0..3 {
            for b in 0..3 {
                let diff = (fft_mats[k][[a, b]] - oracle[[a, b]]).norm();
                assert!(diff < 1e-12, "mismatch {diff} at freq {k} entry ({a},{b})");
            }
        }
    }
}

#[test]
fn periodogram_hermitian_nonnegative_diagonal() {
    let series = gaussian_series(64, 3, 7).demean();
    let grid = fourier_grid(64).unwrap();
    for m in periodogram(&series, &grid) {
        for a in 0..3 {
            for b in 0..3 {
                assert!((m[[a, b]] - m[[b, a]].conj()).norm() < 1e-12);
            }
            assert!(m[[a, a]].im.abs() < 1e-14);
            assert!(m[[a, a]].re >= -1e-14);
        }
    }
}

#[test]
fn smoothing_matches_brute_force() {
    let kernel = KernelSpec::default();
    let series = gaussian_series(64, 2, 3).demean();
    let est = smooth_spectral(&series, &kernel).unwrap();
    let oracle = brute_smooth(&series, &kernel);
    assert_eq!(est.matrices().len(), oracle.len());
    for (m, o) in est.matrices().iter().zip(&oracle) {
        for a in 0..2 {
            for b in 0..2 {
                assert!((m[[a, b]] - o[[a, b]]).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn white_noise_spectrum_is_flat_at_sigma_sq_over_two_pi() {
    let kernel = KernelSpec::default();
    let sigma_sq = 2.0f64;
    let mut grand_mean = 0.0;
    let seeds = 50;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut x = Array2::<f64>::zeros((2048, 1));
        for v in x.iter_mut() {
            *v = sigma_sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        let series = MultivariateSeries::new(x).unwrap().demean();
        let est = smooth_spectral(&series, &kernel).unwrap();
        let mean: f64 = est.matrices().iter().map(|m| m[[0, 0]].re).sum::<f64>()
            / est.matrices().len() as f64;
        grand_mean += mean;
    }
    grand_mean /= seeds as f64;
    let target = sigma_sq / (2.0 * PI);
    assert!(
        (grand_mean - target).abs() < 0.15 * target,
        "mean level {grand_mean} vs flat spectrum {target}"
    );
}

#[test]
fn smoothed_estimate_is_hermitian_with_psd_real_part() {
    let kernel = KernelSpec::default();
    let series = gaussian_series(128, 3, 9).demean();
    let est = smooth_spectral(&series, &kernel).unwrap();
    for m in est.matrices() {
        let mut re = Array2::<f64>::zeros((3, 3));
        for a in 0..3 {
            for b in 0..3 {
                assert!((m[[a, b]] - m[[b, a]].conj()).norm() < 1e-10);
                re[[a, b]] = 0.5 * (m[[a, b]].re + m[[b, a]].re);
            }
            assert!(m[[a, a]].im.abs() < 1e-12);
            assert!(m[[a, a]].re >= -1e-12);
        }
        let eigen = symmetric_eigen(&re).unwrap();
        assert!(
            eigen.eigenvalues.iter().all(|&l| l >= -1e-10),
            "negative eigenvalue in smoothed real part"
        );
    }
}

#[test]
fn negative_frequency_is_conjugate() {
    let kernel = KernelSpec::default();
    let series = gaussian_series(96, 2, 21).demean();
    for w in [0.3, 1.0, 2.5] {
        let plus = smoothed_at(&series, &kernel, w);
        let minus = smoothed_at(&series, &kernel, -w);
        for a in 0..2 {
            for b in 0..2 {
                assert!((minus[[a, b]] - plus[[a, b]].conj()).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn scaling_series_scales_spectrum_quadratically() {
    let kernel = KernelSpec::default();
    let series = gaussian_series(64, 2, 5).demean();
    let est = smooth_spectral(&series, &kernel).unwrap();

    // Power-of-two scaling is exact in binary floating point.
    let doubled =
        MultivariateSeries::new(series.values() * 2.0).unwrap();
    let est2 = smooth_spectral(&doubled, &kernel).unwrap();
    for (m, m2) in est.matrices().iter().zip(est2.matrices()) {
        for (v, v2) in m.iter().zip(m2) {
            assert_eq!(v2.re, 4.0 * v.re);
            assert_eq!(v2.im, 4.0 * v.im);
        }
    }

    // General scaling holds to relative round-off.
    let c = 1.7f64;
    let scaled = MultivariateSeries::new(series.values() * c).unwrap();
    let est_c = smooth_spectral(&scaled, &kernel).unwrap();
    for (m, mc) in est.matrices().iter().zip(est_c.matrices()) {
        for (v, vc) in m.iter().zip(mc) {
            let want = v * c * c;
            assert!((vc - want).norm() <= 1e-12 * want.norm().max(1e-12));
        }
    }
}

#[test]
fn spectral_json_has_expected_fields() {
    let kernel = KernelSpec::default();
    let series = gaussian_series(32, 2, 13).demean();
    let est = smooth_spectral(&series, &kernel).unwrap();
    let json = est.to_json();
    assert!(json.get("grid").is_some());
    assert!(json.get("matrices").is_some());
    assert!(json.get("bandwidth").is_some());
    let mats = json["matrices"].as_array().unwrap();
    assert_eq!(mats.len(), est.grid().count());
}
