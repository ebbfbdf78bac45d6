//! Synthetic data generators and simulation-study drivers.
//!
//! Data are built in two layers: independent ARMA streams are assembled into
//! a latent vector whose coordinates are lagged, weighted copies of the
//! streams (so coordinates sharing a stream are dependent and coordinates on
//! different streams are not), and the observed series is an orthogonal
//! mixture of that latent vector.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::evaluate_segmentation;
use crate::segmentation::{segment, SegmentConfig};
use crate::series::MultivariateSeries;
use crate::stats::derive_seed;

/// Samples discarded from the start of every simulated stream so the
/// recursion forgets its zero initial state.
pub const BURN_IN: usize = 500;

/// Margin by which autoregressive characteristic roots must clear the unit
/// circle.
const STATIONARITY_MARGIN: f64 = 1e-8;

/// A univariate ARMA process: coefficients for
/// `x_t = sum_i ar[i] x_{t-1-i} + e_t + sum_j ma[j] e_{t-1-j}`
/// with Gaussian innovations of the given standard deviation.
#[derive(Debug, Clone)]
pub struct ArmaSpec {
    ar: Vec<f64>,
    ma: Vec<f64>,
    innovation_sd: f64,
}

impl ArmaSpec {
    /// Builds a spec, rejecting non-finite inputs, negative innovation
    /// scale, and autoregressive parts whose characteristic roots do not
    /// lie strictly outside the unit circle.
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, innovation_sd: f64) -> Result<Self> {
        if ar.iter().chain(ma.iter()).any(|c| !c.is_finite()) {
            return Err(Error::invalid("ARMA coefficients must be finite"));
        }
        if !innovation_sd.is_finite() || innovation_sd < 0.0 {
            return Err(Error::invalid(format!(
                "innovation standard deviation must be finite and nonnegative, got {innovation_sd}"
            )));
        }
        let roots = ar_characteristic_roots(&ar);
        for root in &roots {
            let modulus = root.norm();
            if modulus <= 1.0 + STATIONARITY_MARGIN {
                return Err(Error::NonStationary(format!(
                    "autoregressive characteristic root at modulus {modulus:.6} (needs > 1)"
                )));
            }
        }
        Ok(Self { ar, ma, innovation_sd })
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    pub fn innovation_sd(&self) -> f64 {
        self.innovation_sd
    }
}

/// Roots of `1 - ar[0] z - ar[1] z^2 - ...` via Durand-Kerner iteration.
/// Trailing zero coefficients are dropped first so the degree is honest.
fn ar_characteristic_roots(ar: &[f64]) -> Vec<Complex64> {
    let mut coeffs: Vec<f64> = ar.to_vec();
    while coeffs.last() == Some(&0.0) {
        coeffs.pop();
    }
    let degree = coeffs.len();
    if degree == 0 {
        return Vec::new();
    }
    // Monic polynomial c[0] + c[1] z + ... + z^degree.
    let lead = -coeffs[degree - 1];
    let mut monic = vec![Complex64::new(0.0, 0.0); degree + 1];
    monic[0] = Complex64::new(1.0 / lead, 0.0);
    for (i, &a) in coeffs.iter().enumerate().take(degree - 1) {
        monic[i + 1] = Complex64::new(-a / lead, 0.0);
    }
    monic[degree] = Complex64::new(1.0, 0.0);

    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in monic.iter().rev() {
            acc = acc * z + c;
        }
        acc
    };

    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved < 1e-13 {
            break;
        }
    }
    roots
}

/// Simulates one ARMA path using a dedicated generator seeded from `seed`.
pub fn simulate_arma(spec: &ArmaSpec, t_len: usize, burn_in: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_arma_rng(spec, t_len, burn_in, &mut rng)
}

/// Simulates one ARMA path, drawing innovations from the caller's
/// generator. The recursion starts from a zero state; the first `burn_in`
/// samples are discarded.
pub fn simulate_arma_rng<R: Rng>(
    spec: &ArmaSpec,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Array1<f64> {
    let q = spec.ma.len();
    let total = t_len + burn_in;
    // q leading innovations so e_{t-j} exists for every t >= 0.
    let e: Vec<f64> = (0..total + q)
        .map(|_| spec.innovation_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = vec![0.0f64; total];
    for t in 0..total {
        let mut v = e[t + q];
        for (j, &mj) in spec.ma.iter().enumerate() {
            v += mj * e[t + q - 1 - j];
        }
        for (i, &ai) in spec.ar.iter().enumerate() {
            if t >= i + 1 {
                v += ai * x[t - 1 - i];
            }
        }
        x[t] = v;
    }
    Array1::from_iter(x[burn_in..].iter().copied())
}

/// Draws an orthogonal matrix from the rotation-invariant distribution:
/// QR of a standard Gaussian matrix with the sign convention that makes the
/// triangular factor's diagonal positive.
pub fn random_orthogonal(dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_rng(dim, &mut rng)
}

/// Same as [`random_orthogonal`] but consuming the caller's generator.
pub fn random_orthogonal_rng<R: Rng>(dim: usize, rng: &mut R) -> Array2<f64> {
    let mut g = Array2::<f64>::zeros((dim, dim));
    for r in 0..dim {
        for c in 0..dim {
            g[[r, c]] = rng.sample(StandardNormal);
        }
    }
    // Modified Gram-Schmidt with one reorthogonalization pass. Normalizing
    // each pivot to a positive length is exactly the positive-diagonal sign
    // convention, which is what makes the draw rotation invariant.
    let mut q = g;
    for k in 0..dim {
        for _ in 0..2 {
            for j in 0..k {
                let proj: f64 = (0..dim).map(|r| q[[r, j]] * q[[r, k]]).sum();
                for r in 0..dim {
                    q[[r, k]] -= proj * q[[r, j]];
                }
            }
        }
        let norm: f64 = (0..dim).map(|r| q[[r, k]] * q[[r, k]]).sum::<f64>().sqrt();
        assert!(norm > 1e-300, "degenerate Gaussian draw");
        for r in 0..dim {
            q[[r, k]] /= norm;
        }
    }
    q
}

/// One latent coordinate: a scalar weight applied to a stream shifted
/// forward by `lead` steps.
#[derive(Debug, Clone, Copy)]
pub struct ComponentRecipe {
    pub weight: f64,
    pub stream: usize,
    pub lead: usize,
}

/// Full description of a latent construction: the independent streams, the
/// per-coordinate recipes, the contiguous group sizes, and optionally a
/// fixed mixing matrix (a fresh random orthogonal one is drawn per dataset
/// when absent).
#[derive(Debug, Clone)]
pub struct LatentRecipe {
    pub streams: Vec<ArmaSpec>,
    pub components: Vec<ComponentRecipe>,
    pub group_sizes: Vec<usize>,
    pub mixing: Option<Array2<f64>>,
}

impl LatentRecipe {
    fn validate(&self) -> Result<()> {
        let p = self.components.len();
        if p == 0 || self.streams.is_empty() {
            return Err(Error::invalid("latent recipe needs streams and components"));
        }
        if self.group_sizes.iter().any(|&s| s == 0)
            || self.group_sizes.iter().sum::<usize>() != p
        {
            return Err(Error::invalid(format!(
                "group sizes {:?} do not partition {p} components",
                self.group_sizes
            )));
        }
        for (k, comp) in self.components.iter().enumerate() {
            if comp.stream >= self.streams.len() {
                return Err(Error::invalid(format!(
                    "component {k} references stream {} but only {} streams exist",
                    comp.stream,
                    self.streams.len()
                )));
            }
            if !comp.weight.is_finite() || comp.weight == 0.0 {
                return Err(Error::invalid(format!(
                    "component {k} has weight {}, needs finite nonzero",
                    comp.weight
                )));
            }
        }
        // Groups are independent only if no stream spans two of them.
        let mut owner: Vec<Option<usize>> = vec![None; self.streams.len()];
        let mut offset = 0usize;
        for (g, &sz) in self.group_sizes.iter().enumerate() {
            for comp in &self.components[offset..offset + sz] {
                match owner[comp.stream] {
                    Some(prev) if prev != g => {
                        return Err(Error::invalid(format!(
                            "stream {} is used by groups {prev} and {g}; groups must not share streams",
                            comp.stream
                        )));
                    }
                    _ => owner[comp.stream] = Some(g),
                }
            }
            offset += sz;
        }
        if let Some(a) = &self.mixing {
            if a.dim() != (p, p) {
                return Err(Error::invalid(format!(
                    "fixed mixing matrix must be {p}x{p}, got {:?}",
                    a.dim()
                )));
            }
            let gram = a.t().dot(a);
            for i in 0..p {
                for j in 0..p {
                    let target = if i == j { 1.0 } else { 0.0 };
                    if (gram[[i, j]] - target).abs() > 1e-8 {
                        return Err(Error::invalid(
                            "fixed mixing matrix must be orthogonal",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ground truth attached to a generated dataset: the dimension, the
/// contiguous group sizes of the latent vector, the per-coordinate recipes,
/// the mixing matrix actually used, and the seed.
#[derive(Debug, Clone)]
pub struct LatentModelSpec {
    pub p: usize,
    pub group_sizes: Vec<usize>,
    pub components: Vec<ComponentRecipe>,
    pub mixing: Array2<f64>,
    pub seed: u64,
}

/// The five benchmark generators used across the test studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPreset {
    Model1,
    Model2,
    Model3,
    Model4,
    Model5,
}

fn spec(ar: &[f64], ma: &[f64], sd: f64) -> ArmaSpec {
    ArmaSpec::new(ar.to_vec(), ma.to_vec(), sd).expect("preset spec is stationary")
}

fn lead_block(stream: usize, weights: &[f64]) -> Vec<ComponentRecipe> {
    weights
        .iter()
        .enumerate()
        .map(|(lead, &weight)| ComponentRecipe { weight, stream, lead })
        .collect()
}

impl ModelPreset {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::Model1),
            2 => Some(Self::Model2),
            3 => Some(Self::Model3),
            4 => Some(Self::Model4),
            5 => Some(Self::Model5),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::Model1 => 1,
            Self::Model2 => 2,
            Self::Model3 => 3,
            Self::Model4 => 4,
            Self::Model5 => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Model1 => "model1",
            Self::Model2 => "model2",
            Self::Model3 => "model3",
            Self::Model4 => "model4",
            Self::Model5 => "model5",
        }
    }

    /// Series lengths a study of this model uses when none are given.
    pub fn default_lengths(self) -> Vec<usize> {
        match self {
            Self::Model4 => vec![500, 1000, 2000],
            _ => vec![200, 500, 1000],
        }
    }

    /// The generating recipe: stream dynamics, coordinate layout, and group
    /// sizes. Mixing is left free so each dataset draws a fresh orthogonal
    /// matrix.
    pub fn recipe(self) -> LatentRecipe {
        let (streams, components, group_sizes) = match self {
            Self::Model1 => (
                vec![
                    spec(&[0.5, 0.3], &[-0.9, 0.3, 1.2, 1.3], 1.0),
                    spec(&[0.8, -0.5], &[1.0, 0.8, 1.8], 3.0f64.sqrt()),
                    spec(&[-0.7, -0.5], &[-1.0, -0.8], 5.0f64.sqrt()),
                ],
                [
                    lead_block(0, &[1.0, 1.0, 1.0]),
                    lead_block(1, &[1.0, 1.0]),
                    lead_block(2, &[1.0]),
                ]
                .concat(),
                vec![3, 2, 1],
            ),
            Self::Model2 => (
                vec![
                    spec(&[0.9], &[0.8, -0.2], 1.0),
                    spec(&[1.25, -0.75, 0.3], &[], 1.0),
                    spec(&[], &[1.0, -1.0, -0.8], 1.0),
                ],
                [
                    lead_block(0, &[1.0, 1.0, 1.0]),
                    lead_block(1, &[1.0, 1.0]),
                    lead_block(2, &[1.0]),
                ]
                .concat(),
                vec![3, 2, 1],
            ),
            Self::Model3 => (
                vec![
                    spec(&[0.45], &[], 3.0f64.sqrt()),
                    spec(&[0.8, -0.5], &[1.0, 0.8, 1.8], 5.0f64.sqrt()),
                    spec(&[-0.7, -0.5], &[-1.0, -0.8], 1.0),
                ],
                [
                    lead_block(0, &[1.0, 0.7, -0.5, 0.2]),
                    lead_block(1, &[1.0, 1.0, 1.0]),
                    lead_block(2, &[1.0, -0.9]),
                ]
                .concat(),
                vec![4, 3, 2],
            ),
            Self::Model4 => (
                vec![
                    spec(&[-0.4, 0.5], &[1.0, 0.8, 1.5, 1.8], 1.0),
                    spec(&[0.85, -0.3], &[1.0, 0.5, 1.2], 1.0),
                    spec(&[0.9, -0.6], &[0.5], 1.0),
                ],
                [
                    lead_block(0, &[1.0, 1.0, 1.0, 1.0]),
                    lead_block(1, &[1.0, 1.0, 1.0]),
                    lead_block(2, &[1.0, 1.0]),
                ]
                .concat(),
                vec![4, 3, 2],
            ),
            Self::Model5 => (
                vec![spec(&[0.75], &[1.0, -0.7, -0.6], 1.0)],
                lead_block(0, &[1.0; 7]),
                vec![7],
            ),
        };
        LatentRecipe { streams, components, group_sizes, mixing: None }
    }
}

/// A seven-dimensional recipe with five groups (two pairs, three singles)
/// whose streams have well-separated scales. Useful as a realistic demo
/// input where group recovery is reliable at moderate lengths.
pub fn wind_like_recipe() -> LatentRecipe {
    LatentRecipe {
        streams: vec![
            spec(&[0.6], &[0.4], 3.0),
            spec(&[-0.5], &[0.7], 1.0),
            spec(&[0.8], &[], 0.45),
            spec(&[-0.75], &[], 0.18),
            spec(&[0.3], &[0.9], 0.07),
        ],
        components: [
            lead_block(0, &[1.0, 1.0]),
            lead_block(1, &[1.0, 1.0]),
            vec![
                ComponentRecipe { weight: 1.0, stream: 2, lead: 0 },
                ComponentRecipe { weight: 1.0, stream: 3, lead: 0 },
                ComponentRecipe { weight: 1.0, stream: 4, lead: 0 },
            ],
        ]
        .concat(),
        group_sizes: vec![2, 2, 1, 1, 1],
        mixing: None,
    }
}

/// Seven mutually independent streams observed directly (identity mixing),
/// with strongly separated scales. Every coordinate is its own group.
pub fn independent_streams_recipe() -> LatentRecipe {
    let streams = vec![
        spec(&[0.6], &[0.4], 3.0),
        spec(&[-0.5], &[0.7], 1.7),
        spec(&[0.8], &[], 0.9),
        spec(&[-0.75], &[], 0.5),
        spec(&[0.3], &[0.9], 0.28),
        spec(&[0.55], &[-0.4], 0.16),
        spec(&[-0.35], &[], 0.09),
    ];
    let components = (0..streams.len())
        .map(|s| ComponentRecipe { weight: 1.0, stream: s, lead: 0 })
        .collect();
    let p = streams.len();
    LatentRecipe {
        streams,
        components,
        group_sizes: vec![1; p],
        mixing: Some(Array2::eye(p)),
    }
}

/// Generates one dataset from a recipe: simulates the streams (sequentially
/// from one seeded generator), assembles the latent coordinates, applies
/// the mixing matrix, and returns the observations together with the ground
/// truth.
pub fn build_model(
    recipe: &LatentRecipe,
    t_len: usize,
    seed: u64,
) -> Result<(MultivariateSeries, LatentModelSpec)> {
    recipe.validate()?;
    if t_len == 0 {
        return Err(Error::invalid("series length must be positive"));
    }
    let p = recipe.components.len();
    let max_lead = recipe.components.iter().map(|c| c.lead).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let needed = t_len
        .checked_add(max_lead)
        .ok_or_else(|| Error::invalid("series length overflow"))?;
    let streams: Vec<Array1<f64>> = recipe
        .streams
        .iter()
        .map(|s| simulate_arma_rng(s, needed, BURN_IN, &mut rng))
        .collect();

    let mut latent = Array2::<f64>::zeros((t_len, p));
    for (k, comp) in recipe.components.iter().enumerate() {
        let z = &streams[comp.stream];
        for t in 0..t_len {
            latent[[t, k]] = comp.weight * z[t + comp.lead];
        }
    }

    let mixing = match &recipe.mixing {
        Some(a) => a.clone(),
        None => random_orthogonal_rng(p, &mut rng),
    };
    let observed = latent.dot(&mixing.t());
    let series = MultivariateSeries::new(observed)?;
    let truth = LatentModelSpec {
        p,
        group_sizes: recipe.group_sizes.clone(),
        components: recipe.components.clone(),
        mixing,
        seed,
    };
    Ok((series, truth))
}

/// Generates a preset dataset. Convenience wrapper over [`build_model`].
pub fn build_preset(
    preset: ModelPreset,
    t_len: usize,
    seed: u64,
) -> Result<(MultivariateSeries, LatentModelSpec)> {
    build_model(&preset.recipe(), t_len, seed)
}

/// One replication's outcome inside a study.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub model: String,
    pub t_len: usize,
    pub rep: usize,
    pub seed: u64,
    pub correct: bool,
    pub m_hat: usize,
    pub max_m2: f64,
    pub avg_m2: f64,
}

/// Aggregates for one series length within a study. The distance means are
/// conditional on correct recoveries and NaN when there were none.
#[derive(Debug, Clone)]
pub struct StudySummary {
    pub model: String,
    pub t_len: usize,
    pub pct_correct: f64,
    pub mean_max_m2: f64,
    pub mean_avg_m2: f64,
    pub reps: usize,
}

/// Complete study output: one row per replication plus one summary per
/// series length.
#[derive(Debug, Clone)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<StudySummary>,
}

/// Runs `reps` independent replications at each series length: generate,
/// segment, score. Replications run in parallel; each draws its seed from
/// the master seed, the length, and the replication index, so results do
/// not depend on thread scheduling. A replication whose segmentation fails
/// outright is recorded as incorrect with sentinel distances.
pub fn run_study(
    recipe: &LatentRecipe,
    model_name: &str,
    lengths: &[usize],
    reps: usize,
    config: &SegmentConfig,
    master_seed: u64,
) -> Result<StudyTable> {
    recipe.validate()?;
    if lengths.is_empty() || reps == 0 {
        return Err(Error::invalid("study needs at least one length and one replication"));
    }
    let mut rows = Vec::with_capacity(lengths.len() * reps);
    let mut summaries = Vec::with_capacity(lengths.len());
    for &t_len in lengths {
        let batch: Vec<StudyRow> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(master_seed, t_len as u64, rep as u64);
                let outcome = build_model(recipe, t_len, seed)
                    .and_then(|(series, truth)| {
                        let result = segment(&series, config)?;
                        evaluate_segmentation(&result, &truth)
                    });
                match outcome {
                    Ok(report) => StudyRow {
                        model: model_name.to_string(),
                        t_len,
                        rep,
                        seed,
                        correct: report.correct,
                        m_hat: report.m_hat,
                        max_m2: report.max_m2,
                        avg_m2: report.avg_m2,
                    },
                    Err(_) => StudyRow {
                        model: model_name.to_string(),
                        t_len,
                        rep,
                        seed,
                        correct: false,
                        m_hat: 0,
                        max_m2: 1.0,
                        avg_m2: 1.0,
                    },
                }
            })
            .collect();

        let n_correct = batch.iter().filter(|r| r.correct).count();
        let (mean_max, mean_avg) = if n_correct > 0 {
            let sm: f64 = batch.iter().filter(|r| r.correct).map(|r| r.max_m2).sum();
            let sa: f64 = batch.iter().filter(|r| r.correct).map(|r| r.avg_m2).sum();
            (sm / n_correct as f64, sa / n_correct as f64)
        } else {
            (f64::NAN, f64::NAN)
        };
        summaries.push(StudySummary {
            model: model_name.to_string(),
            t_len,
            pct_correct: 100.0 * n_correct as f64 / reps as f64,
            mean_max_m2: mean_max,
            mean_avg_m2: mean_avg,
            reps,
        });
        rows.extend(batch);
    }
    Ok(StudyTable { rows, summaries })
}

/// Runs a preset study with the preset's default lengths when `lengths` is
/// empty.
pub fn run_preset_study(
    preset: ModelPreset,
    lengths: &[usize],
    reps: usize,
    config: &SegmentConfig,
    master_seed: u64,
) -> Result<StudyTable> {
    let owned;
    let lengths = if lengths.is_empty() {
        owned = preset.default_lengths();
        &owned[..]
    } else {
        lengths
    };
    run_study(&preset.recipe(), preset.name(), lengths, reps, config, master_seed)
}

/// Writes per-replication rows as CSV with a header line.
pub fn write_study_csv(table: &StudyTable, path: &Path) -> Result<()> {
    let mut out = String::from("model,T,rep,seed,correct,m_hat,max_m2,avg_m2\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            r.t_len,
            r.rep,
            r.seed,
            u8::from(r.correct),
            r.m_hat,
            r.max_m2,
            r.avg_m2
        )
        .expect("writing to string cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes per-length summaries as CSV with a header line.
pub fn write_summary_csv(table: &StudyTable, path: &Path) -> Result<()> {
    let mut out = String::from("model,T,pct_correct,mean_max_m2,mean_avg_m2,reps\n");
    for s in &table.summaries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.model, s.t_len, s.pct_correct, s.mean_max_m2, s.mean_avg_m2, s.reps
        )
        .expect("writing to string cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
