//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Thin singular value decomposition `a = u * diag(s) * vᵀ` with singular
/// values sorted in decreasing order and a deterministic sign convention:
/// the first nonzero entry of every left singular vector is nonnegative.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Svd {
    let k = a.nrows().min(a.ncols());
    let dec = a.clone().svd(true, true);
    let u_raw = dec.u.expect("u requested");
    let vt_raw = dec.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));

    let mut u = DMatrix::zeros(a.nrows(), k);
    let mut v = DMatrix::zeros(a.ncols(), k);
    let mut s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = dec.singular_values[src];
        let mut ucol = u_raw.column(src).into_owned();
        let mut vcol = vt_raw.row(src).transpose();
        let scale = ucol.amax().max(f64::MIN_POSITIVE);
        if let Some(first) = ucol.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                ucol.neg_mut();
                vcol.neg_mut();
            }
        }
        u.set_column(dst, &ucol);
        v.set_column(dst, &vcol);
    }
    Svd { u, s, v }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(s: &DVector<f64>, rel_tol: f64) -> usize {
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    numerical_rank(&svd(a).s, rel_tol)
}

/// Extends the orthonormal columns of `q` (n×k) to an n×n orthogonal matrix
/// whose first k columns are `q`.
pub fn complete_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < n {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = -1.0;
        for k in 0..n {
            let mut r = DVector::zeros(n);
            r[k] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let p = c.dot(&r);
                    r.axpy(-p, c, 1.0);
                }
            }
            let nr = r.norm();
            if nr > best_norm {
                best_norm = nr;
                best = Some(r);
            }
        }
        let r = best.expect("n > 0");
        cols.push(r / best_norm);
    }
    DMatrix::from_columns(&cols)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// diagonal of R made positive).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = gaussian_matrix(n, n, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal basis (as columns) of the span of the columns of `a`.
pub fn orthonormal_span(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let dec = svd(a);
    let r = numerical_rank(&dec.s, rel_tol);
    dec.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the right null space of `a`.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to a square system so the SVD returns a complete right basis
    let mut padded = DMatrix::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let dec = svd(&padded);
    let r = numerical_rank(&dec.s, rel_tol);
    dec.v.columns(r, n - r).into_owned()
}

/// Sine of the largest principal angle between the column spans of two
/// matrices with orthonormal columns and the same number of columns.
pub fn max_principal_angle_sin(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let residual = a - b * (b.transpose() * a);
    svd(&residual).s.iter().cloned().fold(0.0, f64::max)
}

pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Ordinary least-squares line through (x, y) with its coefficient of
/// determination.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
    })
}
