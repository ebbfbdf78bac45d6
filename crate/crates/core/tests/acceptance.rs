//! Acceptance suite: every numbered release criterion, one test each, at the
//! stated tolerances and runtime budgets. Monte Carlo checks use fixed seeds
//! so each run either passes or fails reproducibly.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use specseg_core::forecasting::{forecast_pipeline, grouped_var_forecast, ForecastConfig};
use specseg_core::metrics::subspace_distance;
use specseg_core::segmentation::{coherence_pvalue, coherence_statistic, segment, SegmentConfig};
use specseg_core::series::MultivariateSeries;
use specseg_core::simgen::{
    build_preset, random_orthogonal, run_preset_study, simulate_arma, ArmaSpec, ModelPreset,
    StudyTable, BURN_IN,
};
use specseg_core::spectral::{kernel_constants, kernel_value, smooth_spectral, KernelFamily, KernelSpec};
use specseg_core::stats::{derive_seed, gauss_legendre};
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const STUDY_REPS: usize = 200;

fn model_study(preset: ModelPreset) -> &'static StudyTable {
    static M1: OnceLock<StudyTable> = OnceLock::new();
    static M2: OnceLock<StudyTable> = OnceLock::new();
    static M3: OnceLock<StudyTable> = OnceLock::new();
    static M5: OnceLock<StudyTable> = OnceLock::new();
    let config = SegmentConfig::default();
    match preset {
        ModelPreset::Model1 => M1.get_or_init(|| {
            run_preset_study(preset, &[200, 500, 1000], STUDY_REPS, &config, 1001).unwrap()
        }),
        ModelPreset::Model2 => M2.get_or_init(|| {
            run_preset_study(preset, &[200, 500, 1000], STUDY_REPS, &config, 1002).unwrap()
        }),
        ModelPreset::Model3 => M3.get_or_init(|| {
            run_preset_study(preset, &[200, 500, 1000], STUDY_REPS, &config, 1003).unwrap()
        }),
        ModelPreset::Model4 => unreachable!("no acceptance study for model 4"),
        ModelPreset::Model5 => M5.get_or_init(|| {
            run_preset_study(preset, &[1000], STUDY_REPS, &config, 1005).unwrap()
        }),
    }
}

fn summary_at(table: &StudyTable, t_len: usize) -> &specseg_core::simgen::StudySummary {
    table
        .summaries
        .iter()
        .find(|s| s.t_len == t_len)
        .expect("summary for requested length")
}

fn gaussian_series(t_len: usize, p: usize, seed: u64) -> MultivariateSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((t_len, p));
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    MultivariateSeries::new(x).unwrap()
}

#[test]
fn criterion_01_kernel_constants() {
    let start = Instant::now();
    let bp = KernelFamily::BartlettPriestley;
    let (mu0_simpson, sigma0_simpson) = kernel_constants(bp);

    // Closed form for the squared Bartlett-Priestley kernel integral.
    let mu0_exact = 3.0 / (5.0 * PI);
    assert!(
        (mu0_simpson - mu0_exact).abs() < 1e-10,
        "mu0 quadrature {mu0_simpson} vs closed form {mu0_exact}"
    );

    // Independent scheme: composite 20-point Gauss-Legendre with panels on
    // the polynomial pieces, which integrates these integrands exactly.
    let k = |u: f64| kernel_value(bp, u);
    let mu0_gl = gauss_legendre(&|u| k(u) * k(u), -PI, PI, 1);
    assert!((mu0_gl - mu0_exact).abs() < 1e-12);

    let g = |v: f64| {
        let lo = (-PI).max(-PI - v);
        let hi = PI.min(PI - v);
        if lo >= hi {
            0.0
        } else {
            gauss_legendre(&|u| k(u) * k(u + v), lo, hi, 1)
        }
    };
    let sigma0_gl = 2.0
        * PI
        * (gauss_legendre(&|v| g(v) * g(v), -2.0 * PI, 0.0, 10)
            + gauss_legendre(&|v| g(v) * g(v), 0.0, 2.0 * PI, 10));
    assert!(
        (sigma0_simpson - sigma0_gl).abs() < 1e-8,
        "sigma0^2 schemes disagree: {sigma0_simpson} vs {sigma0_gl}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    eprintln!(
        "criterion 01: mu0 err {:.2e}, sigma0 cross-scheme err {:.2e}, {elapsed:?}",
        (mu0_simpson - mu0_exact).abs(),
        (sigma0_simpson - sigma0_gl).abs()
    );
}

/// Direct transform, periodogram, and O(T^2) smoothing written from the
/// definitions, independent of the library's FFT path.
mod brute {
    use super::*;

    fn dft(series: &MultivariateSeries, w: f64) -> Vec<Complex64> {
        let x = series.values();
        let (t_len, p) = x.dim();
        let norm = 1.0 / (2.0 * PI * t_len as f64).sqrt();
        (0..p)
            .map(|a| {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 1..=t_len {
                    acc += x[[t - 1, a]] * Complex64::new(0.0, -(t as f64) * w).exp();
                }
                acc * norm
            })
            .collect()
    }

    fn periodogram(series: &MultivariateSeries, w: f64) -> Array2<Complex64> {
        let j = dft(series, w);
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

    pub fn smooth(series: &MultivariateSeries, kernel: &KernelSpec) -> Vec<Array2<Complex64>> {
        let t_len = series.t_len();
        let p = series.dim();
        let h = kernel.bandwidth(t_len);
        let step = 2.0 * PI / t_len as f64;
        let circle: Vec<Array2<Complex64>> = (0..t_len)
            .map(|j| periodogram(series, step * j as f64))
            .collect();
        let mut out = Vec::new();
        for kk in 1..=(t_len - 1) / 2 {
            let w = step * kk as f64;
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
}

#[test]
fn criterion_02_spectral_oracle_equivalence() {
    let start = Instant::now();
    let kernel = KernelSpec::default();
    let lengths = [16usize, 64, 256];
    let dims = [1usize, 2, 4];
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let t_len = lengths[(i % 9) as usize / 3];
        let p = dims[(i % 3) as usize];
        let series = gaussian_series(t_len, p, 7_000 + i);
        let est = smooth_spectral(&series, &kernel).unwrap();
        let oracle = brute::smooth(&series, &kernel);
        assert_eq!(est.matrices().len(), oracle.len());
        for (m, o) in est.matrices().iter().zip(&oracle) {
            for (a, b) in m.iter().zip(o) {
                worst = worst.max((a.re - b.re).abs()).max((a.im - b.im).abs());
            }
        }
    }
    assert!(worst < 1e-10, "max abs deviation {worst}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    eprintln!("criterion 02: max abs deviation {worst:.3e}, {elapsed:?}");
}

#[test]
fn criterion_03_null_calibration() {
    let start = Instant::now();
    let kernel = KernelSpec::default();
    let t_len = 2000;
    let reps = 500;
    let mut rejections = 0usize;
    for rep in 0..reps {
        let series = gaussian_series(t_len, 2, derive_seed(3001, 0, rep as u64)).demean();
        let est = smooth_spectral(&series, &kernel).unwrap();
        let d = coherence_statistic(&est, 0, 1, None).unwrap();
        if coherence_pvalue(d, t_len, &kernel, None) < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!(
        (0.01..=0.12).contains(&rate),
        "null rejection rate {rate} outside [0.01, 0.12]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    eprintln!("criterion 03: null rejection rate {rate:.3}, {elapsed:?}");
}

#[test]
fn criterion_04_power_and_consistency() {
    let start = Instant::now();
    // Shared-stream lead-lag pair: two shifted copies of one ARMA stream.
    let stream = ArmaSpec::new(
        vec![0.5, 0.3],
        vec![-0.9, 0.3, 1.2, 1.3],
        1.0,
    )
    .unwrap();
    let kernel = KernelSpec::default();
    let reps = 200u64;
    let mut rates = Vec::new();
    for (li, &t_len) in [200usize, 500, 2000].iter().enumerate() {
        let mut rejected = 0usize;
        for rep in 0..reps {
            let z = simulate_arma(
                &stream,
                t_len + 1,
                BURN_IN,
                derive_seed(4001, li as u64, rep),
            );
            let mut x = Array2::<f64>::zeros((t_len, 2));
            for t in 0..t_len {
                x[[t, 0]] = z[t];
                x[[t, 1]] = z[t + 1];
            }
            let series = MultivariateSeries::new(x).unwrap().demean();
            let est = smooth_spectral(&series, &kernel).unwrap();
            let d = coherence_statistic(&est, 0, 1, None).unwrap();
            if coherence_pvalue(d, t_len, &kernel, None) < 0.05 {
                rejected += 1;
            }
        }
        rates.push(rejected as f64 / reps as f64);
    }
    assert!(
        rates[2] >= 0.95,
        "rejection rate at T=2000 is {}",
        rates[2]
    );
    assert!(
        rates[0] <= rates[1] && rates[1] <= rates[2],
        "rates not nondecreasing: {rates:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    eprintln!("criterion 04: rejection rates {rates:?}, {elapsed:?}");
}

#[test]
fn criterion_05_model1_study() {
    let start = Instant::now();
    let table = model_study(ModelPreset::Model1);
    let s = summary_at(table, 1000);
    assert!(
        s.mean_avg_m2 <= 0.03,
        "conditional mean avg distance^2 {}",
        s.mean_avg_m2
    );
    assert!(
        s.mean_max_m2 <= 0.05,
        "conditional mean max distance^2 {}",
        s.mean_max_m2
    );
    assert!(s.pct_correct >= 75.0, "percent correct {}", s.pct_correct);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}");
    eprintln!(
        "criterion 05: pct {:.1}, avg {:.4}, max {:.4}, {elapsed:?}",
        s.pct_correct, s.mean_avg_m2, s.mean_max_m2
    );
}

#[test]
fn criterion_06_model2_study() {
    let start = Instant::now();
    let table = model_study(ModelPreset::Model2);
    let s1000 = summary_at(table, 1000);
    let s200 = summary_at(table, 200);
    assert!(
        s1000.mean_avg_m2 <= 0.015,
        "conditional mean avg distance^2 {}",
        s1000.mean_avg_m2
    );
    assert!(
        s1000.pct_correct > s200.pct_correct,
        "pct correct did not improve: {} at T=200 vs {} at T=1000",
        s200.pct_correct,
        s1000.pct_correct
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}");
    eprintln!(
        "criterion 06: avg {:.4} at T=1000, pct {:.1} -> {:.1}, {elapsed:?}",
        s1000.mean_avg_m2, s200.pct_correct, s1000.pct_correct
    );
}

#[test]
fn criterion_07_model3_study() {
    let start = Instant::now();
    let table = model_study(ModelPreset::Model3);
    let s = summary_at(table, 500);
    assert!(
        s.mean_avg_m2 <= 0.02,
        "conditional mean avg distance^2 {}",
        s.mean_avg_m2
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}");
    eprintln!(
        "criterion 07: avg {:.4} at T=500 (pct {:.1}), {elapsed:?}",
        s.mean_avg_m2, s.pct_correct
    );
}

/// Median of the per-replication average squared distances among correct
/// recoveries at one length.
fn conditional_median_avg(table: &StudyTable, t_len: usize) -> f64 {
    let mut vals: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.t_len == t_len && r.correct)
        .map(|r| r.avg_m2)
        .collect();
    assert!(
        !vals.is_empty(),
        "no correct recoveries at T={t_len} to take a median over"
    );
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals[vals.len() / 2]
}

#[test]
fn criterion_08_rate_direction() {
    for preset in [ModelPreset::Model1, ModelPreset::Model2, ModelPreset::Model3] {
        let table = model_study(preset);
        let m200 = conditional_median_avg(table, 200);
        let m500 = conditional_median_avg(table, 500);
        let m1000 = conditional_median_avg(table, 1000);
        assert!(
            m200 > m500 && m500 > m1000,
            "{}: medians not strictly decreasing: {m200:.5} / {m500:.5} / {m1000:.5}",
            preset.name()
        );
        eprintln!(
            "criterion 08: {} medians {m200:.5} > {m500:.5} > {m1000:.5}",
            preset.name()
        );
    }
}

#[test]
fn criterion_09_single_group_detection() {
    let table = model_study(ModelPreset::Model5);
    let rows: Vec<_> = table.rows.iter().filter(|r| r.t_len == 1000).collect();
    assert_eq!(rows.len(), STUDY_REPS);
    let ones = rows.iter().filter(|r| r.m_hat == 1).count();
    let fraction = ones as f64 / rows.len() as f64;
    assert!(
        fraction >= 0.60,
        "single-group declared in {fraction} of runs"
    );
    eprintln!("criterion 09: single-group fraction {fraction:.3}");
}

#[test]
fn criterion_10_metric_identities() {
    let start = Instant::now();
    for i in 0..100u64 {
        let p = 3 + (i % 6) as usize;
        // Rank between 1 and p/2 so an orthogonal complement of equal
        // dimension exists inside the same orthogonal frame.
        let r = 1 + (i as usize) % (p / 2);
        let q = random_orthogonal(p, 10_000 + i);
        let b1 = q.slice(ndarray::s![.., 0..r]).to_owned();
        let b2 = q.slice(ndarray::s![.., r..2 * r]).to_owned();

        // Identical spans score (numerically) zero.
        let self_dist = subspace_distance(&b1, &b1).unwrap();
        assert!(self_dist <= 1e-7, "self distance {self_dist}");

        // Orthogonal-complement spans score one.
        let orth = subspace_distance(&b1, &b2).unwrap();
        assert!(orth >= 1.0 - 1e-12 && orth <= 1.0, "orthogonal distance {orth}");

        // Rotating a basis within its span moves distances by nothing.
        let other = random_orthogonal(p, 20_000 + i)
            .slice(ndarray::s![.., 0..r])
            .to_owned();
        let rot = random_orthogonal(r, 30_000 + i);
        let before = subspace_distance(&b1, &other).unwrap();
        let after = subspace_distance(&b1.dot(&rot), &other).unwrap();
        assert!(
            (before - after).abs() <= 1e-10,
            "rotation moved the distance by {}",
            (before - after).abs()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    eprintln!("criterion 10: 100 instances verified, {elapsed:?}");
}

#[test]
fn criterion_11_scale_equivariance() {
    let config = SegmentConfig::default();
    for seed in 0..50u64 {
        let (series, _) = build_preset(ModelPreset::Model1, 500, 11_000 + seed).unwrap();
        let scaled = MultivariateSeries::new(series.values() * 3.7).unwrap();
        let r1 = segment(&series, &config).unwrap();
        let r2 = segment(&scaled, &config).unwrap();
        assert_eq!(r1.groups, r2.groups, "groups differ at seed {seed}");
        assert_eq!(r1.adjacency, r2.adjacency, "adjacency differs at seed {seed}");
        assert_eq!(
            r1.demixing.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r2.demixing.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "demixing bits differ at seed {seed}"
        );
    }
    eprintln!("criterion 11: 50 datasets bit-identical under scaling");
}

#[test]
fn criterion_12_forecast_pipeline_oracle() {
    let t_len = 500usize;
    let windows = 100usize;
    let total = t_len + windows;
    let (series, truth) = build_preset(ModelPreset::Model1, total, 777).unwrap();
    let values = series.values();

    // Consecutive true groups in the latent ordering.
    let mut true_groups: Vec<Vec<usize>> = Vec::new();
    let mut next = 0usize;
    for &size in &truth.group_sizes {
        true_groups.push((next..next + size).collect());
        next += size;
    }

    let config = ForecastConfig::default();
    let mut pipeline_se = 0.0f64;
    let mut oracle_se = 0.0f64;
    for w in 0..windows {
        let train =
            MultivariateSeries::new(values.slice(ndarray::s![w..w + t_len, ..]).to_owned())
                .unwrap();
        let actual = values.index_axis(Axis(0), w + t_len);

        let pipe = forecast_pipeline(&train, 1, &config).unwrap();
        let (oracle_fc, _) =
            grouped_var_forecast(&train, &truth.mixing, &true_groups, 1, config.max_order)
                .unwrap();

        for j in 0..series.dim() {
            pipeline_se += (pipe.forecast[[0, j]] - actual[j]).powi(2);
            oracle_se += (oracle_fc[[0, j]] - actual[j]).powi(2);
        }
    }
    let ratio = pipeline_se / oracle_se;
    assert!(
        ratio <= 1.1,
        "pipeline MSE exceeds the oracle by more than 10%: ratio {ratio}"
    );
    eprintln!("criterion 12: pipeline/oracle 1-step MSE ratio {ratio:.4}");
}
