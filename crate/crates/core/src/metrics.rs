//! Distances between estimated and true mixing structures.
//!
//! The central quantity is a subspace distance between column spans of two
//! half-orthogonal matrices. Segmentation output is scored by matching
//! estimated groups to true groups so that the total squared distance is
//! minimized, then checking that the match is size-consistent and that every
//! estimated group picked the closest true candidate among those of its size.

use ndarray::{Array2, ArrayView2};
use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres_min;

use crate::error::{Error, Result};
use crate::linalg::jacobi_eigen;
use crate::segmentation::SegmentationResult;
use crate::simgen::LatentModelSpec;

/// Sentinel cost assigned to group pairs of unequal size. Any real squared
/// distance lies in [0, 1], so 2.0 can never be preferred over a valid pair.
const SIZE_MISMATCH_COST: f64 = 2.0;

/// Tolerance on `B' B = I` when validating half-orthogonality.
const ORTHO_TOL: f64 = 1e-8;

/// Outcome of scoring one segmentation against the generating structure.
#[derive(Debug, Clone)]
pub struct SubspaceReport {
    /// Squared distance for each matched group pair, in estimated-group
    /// order. Empty when the group count was wrong.
    pub per_group_m2: Vec<f64>,
    /// Largest per-group squared distance (1.0 when the group count or the
    /// size multiset was wrong).
    pub max_m2: f64,
    /// Mean per-group squared distance (1.0 in the same failure cases).
    pub avg_m2: f64,
    /// Whether the segmentation recovered the structure: right group count,
    /// matched sizes agree, and every estimated group attained the minimal
    /// distance among true groups of its own size.
    pub correct: bool,
    /// Number of groups the segmentation produced.
    pub m_hat: usize,
    /// Number of groups in the generating structure.
    pub m_true: usize,
}

fn check_half_orthogonal(b: &ArrayView2<'_, f64>, label: &str) -> Result<()> {
    let r = b.ncols();
    if r == 0 {
        return Err(Error::invalid(format!("{label}: matrix has no columns")));
    }
    if b.nrows() < r {
        return Err(Error::invalid(format!(
            "{label}: {} rows cannot carry {} orthonormal columns",
            b.nrows(),
            r
        )));
    }
    let gram = b.t().dot(b);
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            if (gram[[i, j]] - target).abs() > ORTHO_TOL {
                return Err(Error::invalid(format!(
                    "{label}: columns are not orthonormal (gram[{i},{j}] = {})",
                    gram[[i, j]]
                )));
            }
        }
    }
    Ok(())
}

/// Squared subspace distance between the column spans of two half-orthogonal
/// matrices with the same shape: `1 - tr(B1 B1' B2 B2') / r`, clamped into
/// [0, 1] against floating-point overshoot.
///
/// The trace equals the squared Frobenius norm of `B1' B2`, which is cheaper
/// to form than the p-by-p projectors.
fn subspace_m2_unchecked(b1: &ArrayView2<'_, f64>, b2: &ArrayView2<'_, f64>) -> f64 {
    let cross = b1.t().dot(b2);
    let r = b1.ncols() as f64;
    let t: f64 = cross.iter().map(|v| v * v).sum();
    (1.0 - t / r).clamp(0.0, 1.0)
}

/// Distance between the column spans of two half-orthogonal matrices.
///
/// Both matrices must have the same shape and orthonormal columns (checked
/// to a small tolerance). Returns a value in [0, 1]: 0 for identical spans,
/// 1 for orthogonal spans.
pub fn subspace_distance(b1: &Array2<f64>, b2: &Array2<f64>) -> Result<f64> {
    if b1.dim() != b2.dim() {
        return Err(Error::invalid(format!(
            "subspace distance needs equal shapes, got {:?} and {:?}",
            b1.dim(),
            b2.dim()
        )));
    }
    check_half_orthogonal(&b1.view(), "first basis")?;
    check_half_orthogonal(&b2.view(), "second basis")?;
    Ok(subspace_m2_unchecked(&b1.view(), &b2.view()).sqrt())
}

/// Finds the minimum-cost assignment of rows to columns for a square cost
/// matrix. Exhaustive search for small sizes, Hungarian algorithm above.
fn min_cost_matching(cost: &Array2<f64>) -> Vec<usize> {
    let m = cost.nrows();
    if m <= 8 {
        let mut best = f64::INFINITY;
        let mut best_perm: Vec<usize> = (0..m).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        // Heap's algorithm, iterative form.
        let mut stack = vec![0usize; m];
        let eval = |perm: &[usize], best: &mut f64, best_perm: &mut Vec<usize>| {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            if c < *best {
                *best = c;
                best_perm.copy_from_slice(perm);
            }
        };
        eval(&perm, &mut best, &mut best_perm);
        let mut i = 1;
        while i < m {
            if stack[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(stack[i], i);
                }
                eval(&perm, &mut best, &mut best_perm);
                stack[i] += 1;
                i = 1;
            } else {
                stack[i] = 0;
                i += 1;
            }
        }
        best_perm
    } else {
        // Scale to integers for the Hungarian solver; 1e12 keeps twelve
        // digits of the squared distances, far below any meaningful tie.
        let rows: Vec<Vec<i64>> = (0..m)
            .map(|i| (0..m).map(|j| (cost[[i, j]] * 1e12).round() as i64).collect())
            .collect();
        let weights = Matrix::from_rows(rows).expect("square cost matrix");
        let (_, assignment) = kuhn_munkres_min(&weights);
        assignment
    }
}

/// Scores a segmentation against the latent structure that generated the
/// data.
///
/// Estimated group subspaces are the corresponding column blocks of the
/// estimated mixing matrix; true group subspaces are column blocks of the
/// generating orthogonal matrix. Groups are matched by minimizing the total
/// squared subspace distance, with pairs of unequal size excluded.
pub fn evaluate_segmentation(
    result: &SegmentationResult,
    truth: &LatentModelSpec,
) -> Result<SubspaceReport> {
    let p = result.mixing.nrows();
    if p != truth.p {
        return Err(Error::invalid(format!(
            "segmentation dimension {p} does not match generating dimension {}",
            truth.p
        )));
    }
    let m_hat = result.groups.len();
    let m_true = truth.group_sizes.len();

    let failure = |m_hat| SubspaceReport {
        per_group_m2: Vec::new(),
        max_m2: 1.0,
        avg_m2: 1.0,
        correct: false,
        m_hat,
        m_true,
    };

    if m_hat != m_true || m_hat == 0 {
        return Ok(failure(m_hat));
    }
    let est_sizes: Vec<usize> = result.groups.iter().map(|g| g.len()).collect();
    let mut est_sorted = est_sizes.clone();
    est_sorted.sort_unstable();
    let mut true_sorted = truth.group_sizes.clone();
    true_sorted.sort_unstable();
    if est_sorted != true_sorted {
        return Ok(failure(m_hat));
    }

    // Column blocks: estimated groups are contiguous in the mixing matrix
    // (it is built group by group); true groups are contiguous in the
    // generating matrix by construction.
    let mut est_offsets = Vec::with_capacity(m_hat);
    let mut acc = 0usize;
    for &s in &est_sizes {
        est_offsets.push(acc);
        acc += s;
    }
    let mut true_offsets = Vec::with_capacity(m_true);
    acc = 0;
    for &s in &truth.group_sizes {
        true_offsets.push(acc);
        acc += s;
    }

    let mut cost = Array2::<f64>::from_elem((m_hat, m_true), SIZE_MISMATCH_COST);
    for i in 0..m_hat {
        let bi = result
            .mixing
            .slice(ndarray::s![.., est_offsets[i]..est_offsets[i] + est_sizes[i]]);
        for j in 0..m_true {
            if est_sizes[i] != truth.group_sizes[j] {
                continue;
            }
            let bj = truth
                .mixing
                .slice(ndarray::s![.., true_offsets[j]..true_offsets[j] + truth.group_sizes[j]]);
            cost[[i, j]] = subspace_m2_unchecked(&bi, &bj);
        }
    }

    let assignment = min_cost_matching(&cost);
    let sizes_agree = assignment
        .iter()
        .enumerate()
        .all(|(i, &j)| est_sizes[i] == truth.group_sizes[j]);

    let per_group_m2: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if est_sizes[i] == truth.group_sizes[j] {
                cost[[i, j]]
            } else {
                1.0
            }
        })
        .collect();

    // Every estimated group must have matched the closest true group among
    // those of its own size; otherwise the assignment only looks right in
    // aggregate while individual groups point at the wrong subspaces.
    let row_min_attained = sizes_agree
        && assignment.iter().enumerate().all(|(i, &j)| {
            let row_min = (0..m_true)
                .filter(|&k| truth.group_sizes[k] == est_sizes[i])
                .map(|k| cost[[i, k]])
                .fold(f64::INFINITY, f64::min);
            cost[[i, j]] <= row_min + 1e-12
        });

    let max_m2 = per_group_m2.iter().fold(0.0f64, |a, &b| a.max(b));
    let avg_m2 = per_group_m2.iter().sum::<f64>() / per_group_m2.len() as f64;
    Ok(SubspaceReport {
        per_group_m2,
        max_m2,
        avg_m2,
        correct: sizes_agree && row_min_attained,
        m_hat,
        m_true,
    })
}

/// Smallest eigenvalue separation between distinct diagonal blocks of a
/// symmetric matrix under the given contiguous partition.
///
/// Infinite for a single block: with nothing to separate, the gap imposes no
/// constraint. The matrix is assumed block-diagonal under the partition; off
/// -block entries are ignored.
pub fn eigengap(s: &Array2<f64>, group_sizes: &[usize]) -> Result<f64> {
    let p = s.nrows();
    if s.ncols() != p {
        return Err(Error::invalid("eigengap needs a square matrix"));
    }
    let total: usize = group_sizes.iter().sum();
    if total != p || group_sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid(format!(
            "group sizes {group_sizes:?} do not partition dimension {p}"
        )));
    }
    if group_sizes.len() == 1 {
        return Ok(f64::INFINITY);
    }
    let mut block_eigs: Vec<Vec<f64>> = Vec::with_capacity(group_sizes.len());
    let mut off = 0usize;
    for &sz in group_sizes {
        let block = s.slice(ndarray::s![off..off + sz, off..off + sz]).to_owned();
        let (vals, _) = jacobi_eigen(&block)?;
        block_eigs.push(vals.to_vec());
        off += sz;
    }
    let mut gap = f64::INFINITY;
    for a in 0..block_eigs.len() {
        for b in a + 1..block_eigs.len() {
            for &la in &block_eigs[a] {
                for &lb in &block_eigs[b] {
                    gap = gap.min((la - lb).abs());
                }
            }
        }
    }
    Ok(gap)
}
