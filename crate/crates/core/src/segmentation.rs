//! End-to-end segmentation: accumulate the summed spectral matrix, rotate by
//! its eigenvectors, test every coordinate pair for nonzero spectral
//! coherence with FDR correction, and cut the resulting graph into groups.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg;
use crate::series::{FrequencyBand, MultivariateSeries};
use crate::spectral::{smooth_spectral, KernelSpec, SpectralEstimate};
use crate::stats::normal_sf;

const PI: f64 = std::f64::consts::PI;

/// Eigendecomposition of the summed spectral matrix S = L D L'.
#[derive(Debug, Clone)]
pub struct EigenSummary {
    /// The symmetric input matrix.
    pub s_matrix: Array2<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`; each
    /// column's largest-magnitude entry is positive.
    pub eigenvectors: Array2<f64>,
}

/// All pairwise coherence-test outputs. Matrices are symmetric; diagonals
/// hold the conventions statistic = 0, p-values = 1.
#[derive(Debug, Clone)]
pub struct PairTestReport {
    pub statistic: Array2<f64>,
    pub pvalue_raw: Array2<f64>,
    pub pvalue_adjusted: Array2<f64>,
    pub alpha: f64,
}

/// Multiple-testing correction for the p(p-1)/2 pairwise tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdrMethod {
    /// Benjamini-Hochberg step-up.
    Bh,
    /// Benjamini-Yekutieli (BH times the harmonic-sum factor).
    By,
}

impl FdrMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FdrMethod::Bh => "bh",
            FdrMethod::By => "by",
        }
    }
}

/// Configuration for `segment`.
#[derive(Debug, Clone)]
pub struct SegmentConfig {
    pub kernel: KernelSpec,
    pub alpha: f64,
    pub fdr: FdrMethod,
    /// Restrict the analysis to a frequency band; None means the full (0, pi).
    pub band: Option<FrequencyBand>,
    /// Practical-significance floor: a pair is declared dependent only when
    /// its coherence mass reaches this fraction of the maximum possible mass
    /// over the band (perfect coherence integrates to 2 x band length).
    /// Guards against the O(1) spurious coherence that eigenvector estimation
    /// error leaks between coordinates from different latent blocks. 0
    /// disables the floor, leaving the pure FDR-corrected test.
    pub coherence_floor: f64,
    /// Warn when (eigengap between the eigenvalue sets of different groups) /
    /// (largest eigenvalue) falls below this.
    pub eigengap_threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            alpha: 0.05,
            fdr: FdrMethod::Bh,
            band: None,
            coherence_floor: 0.1,
            eigengap_threshold: 1e-6,
        }
    }
}

impl SegmentConfig {
    /// Checks the cross-field constraints that the type system cannot:
    /// alpha in (0,1), the coherence floor in [0,1). Called by [`segment`];
    /// exposed so front ends can fail fast before expensive work.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.coherence_floor >= 0.0 && self.coherence_floor < 1.0) {
            return Err(Error::invalid(format!(
                "coherence floor = {} outside [0, 1)",
                self.coherence_floor
            )));
        }
        Ok(())
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "kernel": self.kernel.family().name(),
            "q": self.kernel.q(),
            "alpha": self.alpha,
            "fdr": self.fdr.name(),
            "band": self.band.map(|b| [b.lo, b.hi]),
            "coherence_floor": self.coherence_floor,
        })
    }
}

/// Full output of the segmentation pipeline.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub eigen: EigenSummary,
    pub report: PairTestReport,
    /// Symmetric 0/1 matrix; entry (a, b) = 1 iff adjusted p-value <= alpha.
    pub adjacency: Array2<u8>,
    /// Groups of transformed-coordinate indices (0-based), each sorted
    /// ascending, groups ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    /// Concatenation of `groups`: original coordinate index at each sorted
    /// position.
    pub permutation: Vec<usize>,
    /// Rows extract the group-ordered transformed series: demixing = P' L'.
    pub demixing: Array2<f64>,
    /// Inverse of demixing: mixing = L P, columns grouped by `groups`.
    pub mixing: Array2<f64>,
    pub m_hat: usize,
    /// Minimum |eigenvalue difference| across coordinates in different
    /// groups; +infinity when a single group remains.
    pub eigengap: f64,
    pub eigengap_warning: bool,
    pub config: SegmentConfig,
}

impl SegmentationResult {
    /// JSON with stable field names. Groups and the permutation use 1-based
    /// indices; matrices are row-major.
    pub fn to_json(&self) -> serde_json::Value {
        let flat = |m: &Array2<f64>| m.iter().copied().collect::<Vec<f64>>();
        json!({
            "m_hat": self.m_hat,
            "groups": self.groups.iter()
                .map(|g| g.iter().map(|i| i + 1).collect::<Vec<usize>>())
                .collect::<Vec<_>>(),
            "permutation": self.permutation.iter().map(|i| i + 1).collect::<Vec<usize>>(),
            "demixing": flat(&self.demixing),
            "mixing": flat(&self.mixing),
            "eigenvalues": self.eigen.eigenvalues.to_vec(),
            "statistic": flat(&self.report.statistic),
            "pvalues_raw": flat(&self.report.pvalue_raw),
            "pvalues_adjusted": flat(&self.report.pvalue_adjusted),
            "adjacency": self.adjacency.iter().map(|&e| e as u32).collect::<Vec<u32>>(),
            "eigengap": if self.eigengap.is_finite() { json!(self.eigengap) } else { json!("inf") },
            "eigengap_warning": self.eigengap_warning,
            "config": self.config.to_json(),
        })
    }
}

/// Sum of Re fhat(w_j) over grid frequencies inside the band (all of them
/// when `band` is None), symmetrized as (S + S') / 2.
pub fn accumulate_sx(
    spec: &SpectralEstimate,
    band: Option<&FrequencyBand>,
) -> Result<Array2<f64>> {
    let p = spec.dim();
    let mut s = Array2::<f64>::zeros((p, p));
    let mut used = 0usize;
    for (k, &w) in spec.grid().frequencies().iter().enumerate() {
        if let Some(b) = band {
            if !b.contains(w) {
                continue;
            }
        }
        used += 1;
        let m = spec.matrix(k);
        for a in 0..p {
            for bcol in 0..p {
                s[[a, bcol]] += m[[a, bcol]].re;
            }
        }
    }
    if used == 0 {
        let b = band.expect("full grid is never empty");
        return Err(Error::EmptyBand { lo: b.lo, hi: b.hi });
    }
    // Symmetrize; Re fhat is symmetric up to rounding.
    let st = s.t().to_owned();
    Ok((&s + &st) * 0.5)
}

/// Eigendecomposition of a symmetric matrix with descending eigenvalues and
/// the deterministic sign convention.
pub fn symmetric_eigen(s: &Array2<f64>) -> Result<EigenSummary> {
    let p = s.nrows();
    if s.ncols() != p {
        return Err(Error::invalid("matrix must be square"));
    }
    let scale = s.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for a in 0..p {
        for b in (a + 1)..p {
            if (s[[a, b]] - s[[b, a]]).abs() > 1e-8 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({a}, {b})"
                )));
            }
        }
    }
    let (eigenvalues, eigenvectors) = linalg::jacobi_eigen(s)?;
    Ok(EigenSummary {
        s_matrix: s.clone(),
        eigenvalues,
        eigenvectors,
    })
}

/// Rowwise rotation: returns the series with rows L' x_t, i.e. X L.
pub fn transform(series: &MultivariateSeries, l: &Array2<f64>) -> Result<MultivariateSeries> {
    if l.nrows() != series.dim() {
        return Err(Error::invalid(format!(
            "transform dimension mismatch: series has {} components, matrix is {}x{}",
            series.dim(),
            l.nrows(),
            l.ncols()
        )));
    }
    MultivariateSeries::new(series.values().dot(l))
}

/// The spectral estimate of the rotated series: fhat_Y(w) = L' fhat_X(w) L
/// for every grid frequency (exact identity, no re-smoothing needed).
pub fn transform_spectral(spec: &SpectralEstimate, l: &Array2<f64>) -> SpectralEstimate {
    let lc = l.mapv(|x| Complex64::new(x, 0.0));
    let lt = lc.t().to_owned();
    let matrices: Vec<Array2<Complex64>> = spec
        .matrices()
        .iter()
        .map(|m| lt.dot(m).dot(&lc))
        .collect();
    SpectralEstimate::from_parts(spec.grid().clone(), matrices, spec.bandwidth(), spec.t_len())
}

/// Integrated squared coherence between components a and b: the Riemann sum
/// of |fhat_ab|^2 / (fhat_aa fhat_bb) over grid frequencies in the band, with
/// cell width 2 pi / T, doubled for the symmetric negative-frequency half.
/// Perfect coherence over the full band gives about 2 pi.
pub fn coherence_statistic(
    spec: &SpectralEstimate,
    a: usize,
    b: usize,
    band: Option<&FrequencyBand>,
) -> Result<f64> {
    let p = spec.dim();
    if a == b || a >= p || b >= p {
        return Err(Error::invalid(format!(
            "coherence statistic needs two distinct component indices < {p}, got ({a}, {b})"
        )));
    }
    // Floor tiny diagonal spectra at a scale-relative epsilon so the ratio
    // stays finite; heavy flooring means the data is effectively degenerate.
    let f_total = spec.grid().count();
    let mut trace_sum = 0.0;
    for m in spec.matrices() {
        for d in 0..p {
            trace_sum += m[[d, d]].re;
        }
    }
    let floor = (1e-12 * trace_sum / (p * f_total) as f64).max(f64::MIN_POSITIVE);

    let mut sum = 0.0;
    let mut used = 0usize;
    let mut floored = 0usize;
    for (k, &w) in spec.grid().frequencies().iter().enumerate() {
        if let Some(bd) = band {
            if !bd.contains(w) {
                continue;
            }
        }
        used += 1;
        let m = spec.matrix(k);
        let faa = m[[a, a]].re;
        let fbb = m[[b, b]].re;
        if faa < floor || fbb < floor {
            floored += 1;
        }
        let denom = faa.max(floor) * fbb.max(floor);
        sum += m[[a, b]].norm_sqr() / denom;
    }
    if used == 0 {
        let bd = band.expect("full grid is never empty");
        return Err(Error::EmptyBand { lo: bd.lo, hi: bd.hi });
    }
    let fraction = floored as f64 / used as f64;
    if fraction > 0.1 {
        return Err(Error::DegenerateSpectrum {
            a,
            b,
            fraction: 100.0 * fraction,
        });
    }
    Ok(2.0 * (2.0 * PI / spec.t_len() as f64) * sum)
}

fn band_length(band: Option<&FrequencyBand>) -> f64 {
    band.map(|b| b.length()).unwrap_or(PI)
}

/// One-sided upper-tail p-value for the coherence statistic under the null of
/// zero coherence.
///
/// The normalized statistic T sqrt(h) D is asymptotically normal; with the
/// estimator's conventions (density-scale smoothing, doubled Riemann sum over
/// the band of length L) its effective null moments are
/// mean = 4 pi L mu0 / sqrt(h) and variance = 8 pi L sigma0^2, which Monte
/// Carlo confirms (empirical mean within 3 standard errors at T = 2000).
pub fn coherence_pvalue(
    stat: f64,
    t_len: usize,
    kernel: &KernelSpec,
    band: Option<&FrequencyBand>,
) -> f64 {
    let h = kernel.bandwidth(t_len);
    let l = band_length(band);
    let mean = 4.0 * PI * l * kernel.mu0() / h.sqrt();
    let var = 8.0 * PI * l * kernel.sigma0_sq();
    let z = (t_len as f64 * h.sqrt() * stat - mean) / var.sqrt();
    normal_sf(z).max(f64::MIN_POSITIVE)
}

/// The statistic value at the center of the null distribution (standardized
/// statistic zero, p-value one half) for a series length and band.
pub fn null_center(t_len: usize, kernel: &KernelSpec, band: Option<&FrequencyBand>) -> f64 {
    let h = kernel.bandwidth(t_len);
    4.0 * PI * band_length(band) * kernel.mu0() / (t_len as f64 * h)
}

/// Step-up FDR adjustment. BH multiplies sorted p-values by n / rank;
/// BY additionally multiplies by the harmonic sum 1 + 1/2 + ... + 1/n.
/// Output is clipped to [0, 1] and returned in the input order.
pub fn fdr_adjust(pvals: &[f64], method: FdrMethod) -> Vec<f64> {
    let n = pvals.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(pvals.iter().all(|p| (0.0..=1.0).contains(p)));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pvals[i].partial_cmp(&pvals[j]).unwrap());
    let factor = match method {
        FdrMethod::Bh => 1.0,
        FdrMethod::By => (1..=n).map(|i| 1.0 / i as f64).sum(),
    };
    let mut adj: Vec<f64> = idx
        .iter()
        .enumerate()
        .map(|(rank, &i)| pvals[i] * factor * n as f64 / (rank + 1) as f64)
        .collect();
    for r in (0..n - 1).rev() {
        adj[r] = adj[r].min(adj[r + 1]);
    }
    let mut out = vec![0.0; n];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = adj[rank].clamp(0.0, 1.0);
    }
    out
}

/// Adjacency matrix: e_ab = 1 iff the adjusted p-value is at most alpha
/// (a != b); symmetric with zero diagonal.
pub fn build_adjacency(report: &PairTestReport) -> Array2<u8> {
    let p = report.pvalue_adjusted.nrows();
    let mut e = Array2::<u8>::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            if a != b && report.pvalue_adjusted[[a, b]] <= report.alpha {
                e[[a, b]] = 1;
            }
        }
    }
    e
}

/// Connected components of an undirected graph given as a symmetric 0/1
/// matrix. Groups are ordered by their smallest member, members ascending.
pub fn connected_components(e: &Array2<u8>) -> Vec<Vec<usize>> {
    let p = e.nrows();
    let mut seen = vec![false; p];
    let mut groups = Vec::new();
    for start in 0..p {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for u in 0..p {
                if !seen[u] && e[[v, u]] != 0 {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        groups.push(comp);
    }
    groups
}

/// Quantization grid for the canonicalized series: entries are rounded to
/// multiples of 2^-16 after RMS normalization, so inputs that differ only by
/// an overall positive scale produce bit-identical downstream results.
const CANON_QUANT: f64 = 65536.0;

fn canonicalize(series: &MultivariateSeries) -> MultivariateSeries {
    let (demeaned, _) = series.demean_with_means();
    let mut v = demeaned.into_values();
    let n = v.len() as f64;
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if rms > 0.0 {
        v.mapv_inplace(|x| (x / rms * CANON_QUANT).round() / CANON_QUANT);
    }
    MultivariateSeries::new(v).expect("canonical form of a finite series is finite")
}

/// Run the whole segmentation pipeline on a series.
///
/// Steps: demean and canonicalize the scale -> kernel-smoothed spectral
/// estimate -> summed spectral matrix over the band -> eigendecomposition ->
/// rotate the spectral estimate -> all pairwise coherence tests -> FDR
/// adjustment and coherence-mass floor -> adjacency -> connected components
/// -> permutation and demixing matrix.
pub fn segment(series: &MultivariateSeries, config: &SegmentConfig) -> Result<SegmentationResult> {
    config.validate()?;
    let t_len = series.t_len();
    let p = series.dim();
    if t_len < 2 * p {
        return Err(Error::invalid(format!(
            "series too short: T = {t_len} < 2p = {}",
            2 * p
        )));
    }

    let canon = canonicalize(series);
    let fx = smooth_spectral(&canon, &config.kernel)?;
    let s = accumulate_sx(&fx, config.band.as_ref())?;
    let eigen = symmetric_eigen(&s)?;
    let fy = transform_spectral(&fx, &eigen.eigenvectors);

    let band = config.band.as_ref();
    let mut statistic = Array2::<f64>::zeros((p, p));
    let mut pvalue_raw = Array2::<f64>::from_elem((p, p), 1.0);
    let mut flat_pvals = Vec::with_capacity(p * (p - 1) / 2);
    for a in 0..p {
        for b in (a + 1)..p {
            let d = coherence_statistic(&fy, a, b, band)?;
            let pv = coherence_pvalue(d, t_len, &config.kernel, band);
            statistic[[a, b]] = d;
            statistic[[b, a]] = d;
            pvalue_raw[[a, b]] = pv;
            pvalue_raw[[b, a]] = pv;
            flat_pvals.push(pv);
        }
    }
    let adjusted = fdr_adjust(&flat_pvals, config.fdr);

    // Fold the coherence-mass floor into the adjusted p-values: pairs whose
    // coherence mass stays below the floor are never declared dependent, so
    // the adjacency rule stays "adjusted p <= alpha".
    let mass_needed = config.coherence_floor * 2.0 * band_length(band);
    let mut pvalue_adjusted = Array2::<f64>::from_elem((p, p), 1.0);
    let mut k = 0usize;
    for a in 0..p {
        for b in (a + 1)..p {
            let mut pv = adjusted[k];
            k += 1;
            if statistic[[a, b]] < mass_needed {
                pv = 1.0;
            }
            pvalue_adjusted[[a, b]] = pv;
            pvalue_adjusted[[b, a]] = pv;
        }
    }

    let report = PairTestReport {
        statistic,
        pvalue_raw,
        pvalue_adjusted,
        alpha: config.alpha,
    };
    let adjacency = build_adjacency(&report);
    let groups = connected_components(&adjacency);
    let m_hat = groups.len();
    let permutation: Vec<usize> = groups.iter().flatten().copied().collect();

    // mixing = L P (columns reordered by the permutation); demixing = P' L'.
    let mut mixing = Array2::<f64>::zeros((p, p));
    for (pos, &orig) in permutation.iter().enumerate() {
        for r in 0..p {
            mixing[[r, pos]] = eigen.eigenvectors[[r, orig]];
        }
    }
    let demixing = mixing.t().to_owned();

    // Eigenvalue separation between distinct groups of transformed
    // coordinates; a single group has nothing to separate.
    let mut eigengap = f64::INFINITY;
    for (gi, g) in groups.iter().enumerate() {
        for g2 in groups.iter().skip(gi + 1) {
            for &a in g {
                for &b in g2 {
                    let d = (eigen.eigenvalues[a] - eigen.eigenvalues[b]).abs();
                    eigengap = eigengap.min(d);
                }
            }
        }
    }
    let scale = eigen.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let eigengap_warning =
        eigengap.is_finite() && scale > 0.0 && eigengap / scale < config.eigengap_threshold;

    Ok(SegmentationResult {
        eigen,
        report,
        adjacency,
        groups,
        permutation,
        demixing,
        mixing,
        m_hat,
        eigengap,
        eigengap_warning,
        config: config.clone(),
    })
}
