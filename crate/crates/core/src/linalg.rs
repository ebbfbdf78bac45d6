//! Dense linear algebra for small matrices: symmetric eigendecomposition,
//! least squares, and Cholesky. Dimensions here are tiny (p is rarely above
//! 10), so simple dense algorithms with deterministic, platform-independent
//! behavior are preferred over BLAS bindings.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Each eigenvector is sign-normalized so that its largest-magnitude
/// entry is positive (ties broken by the lowest index), which makes the
/// decomposition deterministic.
pub(crate) fn jacobi_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        let vals = Array1::from_iter(m.diag().iter().copied());
        return Ok((vals, v));
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);
    let max_sweeps = 100;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            converged = true;
            break;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let apq = m[[i, j]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[j, j]] - m[[i, i]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns i and j of m.
                for k in 0..n {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..n {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
                for k in 0..n {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenFailure(format!(
            "Jacobi sweep limit ({max_sweeps}) reached"
        )));
    }

    // Sort descending by eigenvalue; stable in the original index for ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        let col = v.index_axis(Axis(1), old);
        for r in 0..n {
            vecs[[r, new]] = col[r];
        }
    }
    sign_normalize_columns(&mut vecs);
    Ok((vals, vecs))
}

/// Flip column signs so each column's largest-magnitude entry is positive,
/// ties broken by the lowest row index.
pub(crate) fn sign_normalize_columns(m: &mut Array2<f64>) {
    let (rows, cols) = m.dim();
    for c in 0..cols {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for r in 0..rows {
            let a = m[[r, c]].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if m[[best, c]] < 0.0 {
            for r in 0..rows {
                m[[r, c]] = -m[[r, c]];
            }
        }
    }
}

/// Least-squares solution of `a * x = b` via Householder QR, for a full
/// column-rank `a` with nrows >= ncols. `b` may hold multiple right-hand
/// sides as columns. Returns None when `a` is (numerically) rank deficient.
pub(crate) fn lstsq_qr(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let (n, m) = a.dim();
    let rhs = b.ncols();
    if b.nrows() != n || n < m {
        return None;
    }
    let mut r = a.clone();
    let mut qtb = b.clone();

    for k in 0..m {
        // Householder vector for column k, rows k..n.
        let mut norm = 0.0;
        for i in k..n {
            norm += r[[i, k]] * r[[i, k]];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if r[[k, k]] >= 0.0 { -norm } else { norm };
        let mut v = Array1::<f64>::zeros(n - k);
        for i in k..n {
            v[i - k] = r[[i, k]];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            // Apply H = I - 2 v v' / (v'v) to the trailing block of r and to qtb.
            for col in k..m {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i - k] * r[[i, col]];
                }
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    r[[i, col]] -= f * v[i - k];
                }
            }
            for col in 0..rhs {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i - k] * qtb[[i, col]];
                }
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    qtb[[i, col]] -= f * v[i - k];
                }
            }
        }
        r[[k, k]] = alpha;
        for i in (k + 1)..n {
            r[[i, k]] = 0.0;
        }
    }

    // Rank check on the diagonal of R.
    let rmax = (0..m).map(|k| r[[k, k]].abs()).fold(0.0f64, f64::max);
    if rmax == 0.0 {
        return None;
    }
    let tol = f64::EPSILON * (n.max(m) as f64) * rmax;
    for k in 0..m {
        if r[[k, k]].abs() <= tol {
            return None;
        }
    }

    // Back substitution.
    let mut x = Array2::<f64>::zeros((m, rhs));
    for col in 0..rhs {
        for k in (0..m).rev() {
            let mut acc = qtb[[k, col]];
            for j in (k + 1)..m {
                acc -= r[[k, j]] * x[[j, col]];
            }
            x[[k, col]] = acc / r[[k, k]];
        }
    }
    Some(x)
}

/// Least squares with a minimum-norm fallback. Well-conditioned systems go
/// through Householder QR; rank-deficient ones are solved through the
/// eigen-pseudoinverse of the normal equations, which gives the
/// Moore-Penrose (minimum-norm) solution. Lagged designs built from
/// lead-lag copies of one scalar stream are exactly collinear, so rank
/// deficiency is an expected input here, not an error.
pub(crate) fn lstsq_min_norm(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    if let Some(x) = lstsq_qr(a, b) {
        return Some(x);
    }
    let (n, m) = a.dim();
    if b.nrows() != n || n < m {
        return None;
    }
    let gram = a.t().dot(a);
    let proj = a.t().dot(b);
    let (vals, vecs) = jacobi_eigen(&gram).ok()?;
    let vmax = vals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if vmax == 0.0 {
        return Some(Array2::zeros((m, b.ncols())));
    }
    let cutoff = f64::EPSILON * (n.max(m) as f64) * vmax;
    let mut scaled = vecs.t().dot(&proj);
    for (k, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
        let lam = vals[k];
        let inv = if lam > cutoff { 1.0 / lam } else { 0.0 };
        row.mapv_inplace(|x| x * inv);
    }
    Some(vecs.dot(&scaled))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// or None when a pivot is not strictly positive.
pub(crate) fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 {
            return None;
        }
        l[[j, j]] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / l[[j, j]];
        }
    }
    Some(l)
}

/// log det of a symmetric nonnegative-definite matrix via Cholesky, with a
/// tiny diagonal ridge as a last resort so that near-singular residual
/// covariances yield a large negative value instead of failing.
pub(crate) fn logdet_psd(a: &Array2<f64>) -> f64 {
    if let Some(l) = cholesky(a) {
        return 2.0 * l.diag().iter().map(|x| x.ln()).sum::<f64>();
    }
    let n = a.nrows();
    let scale = a.diag().iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    let ridge = (scale * 1e-12).max(1e-300);
    let mut b = a.clone();
    for i in 0..n {
        b[[i, i]] += ridge;
    }
    match cholesky(&b) {
        Some(l) => 2.0 * l.diag().iter().map(|x| x.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}
