//! Second-order analysis: the quadratic form of the loss, the dense Hessian
//! by polarization, spectra, negative-curvature directions and the
//! tangent-space/kernel check at single-hidden-layer saddles.
//!
//! States are flattened layer by layer in column-major order, `W_1` first,
//! so the entries of `W_{1,1}` precede those of `W_{1,2}`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::landscape::{
    naive_stratum_dimension, stratum_dimension, verify_critical_conditions, z_product, Saddle,
};
use crate::linalg::{self, max_principal_angle_sin, null_space, orthonormal_span};
use crate::network::{
    check_target, evaluate, product_range, sigma_y, GradientTuple, Products, WeightTuple,
};

/// A variation `ξ = (w_1, …, w_{H+1})`, shaped like the base point.
pub type Direction = WeightTuple;

/// Precomputed products for evaluating first and second variations at one point.
struct Expansion {
    products: Products,
    m: DMatrix<f64>,
    /// `mids[j][k] = W_{k-1} ⋯ W_{j+1}` (0-based layer indices, `j < k`).
    mids: Vec<Vec<DMatrix<f64>>>,
    n: usize,
}

impl Expansion {
    fn new(w: &WeightTuple, s_y: &DVector<f64>) -> Result<Self> {
        check_target(w, s_y)?;
        let products = Products::new(w);
        let m = sigma_y(s_y, w.layer(1).ncols()) - products.total();
        let n = w.depth() + 1;
        let mut mids = vec![Vec::new(); n];
        for (j, row) in mids.iter_mut().enumerate() {
            *row = (0..n)
                .map(|k| {
                    if k > j {
                        // 1-based layers j+2 .. k
                        product_range(w, j + 2, k)
                    } else {
                        DMatrix::zeros(0, 0)
                    }
                })
                .collect();
        }
        Ok(Self {
            products,
            m,
            mids,
            n,
        })
    }

    /// `P¹ = Σ_j (ΠW)_{j+1}^{H+1} ξ_j (ΠW)_1^{j−1}`.
    fn p1(&self, xi: &Direction) -> DMatrix<f64> {
        let p = &self.products;
        let mut acc = DMatrix::zeros(self.m.nrows(), self.m.ncols());
        for j in 0..self.n {
            acc += &p.suffix[j + 2] * &xi.layers()[j] * &p.prefix[j];
        }
        acc
    }

    /// `P² = Σ_{j<k} (ΠW)_{k+1}^{H+1} ξ_k (ΠW)_{j+1}^{k−1} ξ_j (ΠW)_1^{j−1}`.
    fn p2(&self, xi: &Direction) -> DMatrix<f64> {
        let p = &self.products;
        let l = xi.layers();
        let mut acc = DMatrix::zeros(self.m.nrows(), self.m.ncols());
        for j in 0..self.n {
            let right = &l[j] * &p.prefix[j];
            for k in j + 1..self.n {
                acc += &p.suffix[k + 2] * &l[k] * &self.mids[j][k] * &right;
            }
        }
        acc
    }

    fn first(&self, xi: &Direction) -> f64 {
        -self.m.dot(&self.p1(xi))
    }

    fn second(&self, xi: &Direction) -> f64 {
        0.5 * self.p1(xi).norm_squared() - self.m.dot(&self.p2(xi))
    }
}

fn check_direction(w: &WeightTuple, xi: &Direction) -> Result<()> {
    if w.same_shape(xi) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "direction dims {:?} differ from point dims {:?}",
            xi.dims().to_output_first(),
            w.dims().to_output_first()
        )))
    }
}

/// First variation `Δ_Ξ(ξ) = −⟨M, P¹(ξ)⟩`, equal to `⟨∇L, ξ⟩`.
pub fn first_variation(w: &WeightTuple, xi: &Direction, s_y: &DVector<f64>) -> Result<f64> {
    check_direction(w, xi)?;
    Ok(Expansion::new(w, s_y)?.first(xi))
}

/// Second-order coefficient `H_Ξ(ξ) = ½‖P¹(ξ)‖² − ⟨M, P²(ξ)⟩`, valid at any point.
pub fn quadratic_form_general(w: &WeightTuple, xi: &Direction, s_y: &DVector<f64>) -> Result<f64> {
    check_direction(w, xi)?;
    Ok(Expansion::new(w, s_y)?.second(xi))
}

/// Single-hidden-layer form at a critical point:
/// `−tr(w_2 w_{1,1} M_1ᵀ) + ½‖w_2W_{1,1} + W_2w_{1,1}‖² + ½‖w_2W_{1,2} + W_2w_{1,2}‖²`
/// with `M_1` the left `d_y × d_y` block of the residual. Off critical
/// points it drops terms; [`quadratic_form`] only uses it when the critical
/// conditions hold.
pub fn quadratic_form_critical_h1(
    w: &WeightTuple,
    xi: &Direction,
    s_y: &DVector<f64>,
) -> Result<f64> {
    check_direction(w, xi)?;
    if w.depth() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "single-hidden-layer form needs H = 1, got H = {}",
            w.depth()
        )));
    }
    check_target(w, s_y)?;
    let d_y = s_y.len();
    let e = evaluate(w, s_y)?;
    let m1 = e.residual.columns(0, d_y);
    let (w11, w12) = w.split_first();
    let (x11, x12) = xi.split_first();
    let (w2, x2) = (w.layer(2), xi.layer(2));
    let bil = (x2 * &x11).dot(&m1);
    let a = x2 * &w11 + w2 * &x11;
    let b = x2 * &w12 + w2 * &x12;
    Ok(-bil + 0.5 * a.norm_squared() + 0.5 * b.norm_squared())
}

fn use_fast_path(w: &WeightTuple, s_y: &DVector<f64>) -> Result<bool> {
    Ok(w.depth() == 1 && verify_critical_conditions(w, s_y)?.holds(defaults::FAST_PATH_TOL))
}

/// The second-order coefficient of `L(W + ξ) − L(W)`.
pub fn quadratic_form(w: &WeightTuple, xi: &Direction, s_y: &DVector<f64>) -> Result<f64> {
    if use_fast_path(w, s_y)? {
        quadratic_form_critical_h1(w, xi, s_y)
    } else {
        quadratic_form_general(w, xi, s_y)
    }
}

/// Symmetric `A` with `H_Ξ(ξ) = ½ ξᵀ A ξ`, assembled by polarization
/// `A_ij = ½(H(e_i + e_j) − H(e_i − e_j))`.
pub fn hessian_matrix(w: &WeightTuple, s_y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let dims = w.dims();
    let n = dims.state_dim();
    if n > defaults::MAX_HESSIAN_DIM {
        return Err(Error::TooLarge {
            n,
            limit: defaults::MAX_HESSIAN_DIM,
        });
    }
    let fast = use_fast_path(w, s_y)?;
    let exp = Expansion::new(w, s_y)?;
    let form = |flat: &[f64]| -> f64 {
        let xi = WeightTuple::from_flat(&dims, flat).expect("length n");
        if fast {
            quadratic_form_critical_h1(w, &xi, s_y).expect("shapes checked")
        } else {
            exp.second(&xi)
        }
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![0.0; n];
            (i..n)
                .map(|j| {
                    buf[i] += 1.0;
                    buf[j] += 1.0;
                    let plus = form(&buf);
                    buf[j] -= 2.0;
                    let minus = form(&buf);
                    buf[i] -= 1.0;
                    buf[j] += 1.0;
                    0.5 * (plus - minus)
                })
                .collect()
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            a[(i, i + off)] = v;
            a[(i + off, i)] = v;
        }
    }
    Ok(a)
}

/// Eigen-decomposition of the Hessian with signed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSpectrum {
    /// Nondecreasing.
    pub eigenvalues: Vec<f64>,
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
    pub kernel_dimension: usize,
    pub spectral_radius: f64,
    /// Relative tolerance: `|λ| <= zero_tol · spectral_radius` counts as zero.
    pub zero_tol: f64,
}

impl HessianSpectrum {
    /// One eigenvalue per line.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for l in &self.eigenvalues {
            writeln!(writer, "{l:?}")?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Eigenvalues (ascending) and matching eigenvectors as columns.
fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn count_spectrum(values: Vec<f64>, zero_tol: f64) -> HessianSpectrum {
    let rho = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cut = zero_tol * rho;
    let negative = values.iter().filter(|&&l| l < -cut).count();
    let positive = values.iter().filter(|&&l| l > cut).count();
    let zero = values.len() - negative - positive;
    HessianSpectrum {
        eigenvalues: values,
        negative,
        zero,
        positive,
        kernel_dimension: zero,
        spectral_radius: rho,
        zero_tol,
    }
}

pub fn spectrum(w: &WeightTuple, s_y: &DVector<f64>, zero_tol: f64) -> Result<HessianSpectrum> {
    let a = hessian_matrix(w, s_y)?;
    let (values, _) = sorted_eigen(&a);
    Ok(count_spectrum(values, zero_tol))
}

/// A certified negative-curvature direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeDirection {
    pub direction: Direction,
    /// `H_Ξ(ξ)`, negative.
    pub value: f64,
    /// 0-based unfitted output coordinate used.
    pub coordinate: usize,
    pub lambda: f64,
    pub mu: f64,
}

/// At a critical point with `r_Z > r` and `r < d_y`, builds
/// `ξ = (λ v e_kᵀ, 0, …, 0, μ e_k (Zv)ᵀ/‖Zv‖)` with `v ∈ ker R` maximizing
/// `‖Zv‖` and `k` the unfitted coordinate of largest singular value; `μ = 1`
/// and `λ` make the form equal to `−1`. Returns `None` at global minima or
/// when `r_Z = r`.
pub fn negative_direction(w: &WeightTuple, s_y: &DVector<f64>) -> Result<Option<NegativeDirection>> {
    let e = evaluate(w, s_y)?;
    let grad_norm = e.gradient.norm();
    if grad_norm > defaults::CLASSIFY_GRAD_THRESHOLD {
        return Err(Error::NotCritical {
            grad_norm,
            threshold: defaults::CLASSIFY_GRAD_THRESHOLD,
        });
    }
    let d_y = s_y.len();
    let h = w.depth();
    let r_mat = product_range(w, 2, h + 1);
    let z = z_product(w);
    let rank = |m: &DMatrix<f64>| {
        let s = linalg::svd(m).s;
        if s.is_empty() || s[0] < 1e-10 {
            0
        } else {
            linalg::numerical_rank(&s, defaults::CLASSIFY_RANK_TOL)
        }
    };
    let (r, r_z) = (rank(&r_mat), rank(&z));
    if r >= d_y || r_z <= r {
        return Ok(None);
    }
    let m = &e.residual;
    let k = match (0..d_y)
        .filter(|&i| m[(i, i)].abs() > defaults::FITTED_TOL * s_y[i])
        .max_by(|&a, &b| s_y[a].total_cmp(&s_y[b]))
    {
        Some(k) => k,
        None => return Ok(None),
    };

    // v ∈ ker R maximizing ‖Zv‖
    let kernel = null_space(&r_mat, defaults::CLASSIFY_RANK_TOL);
    if kernel.ncols() == 0 {
        return Ok(None);
    }
    let zk = &z * &kernel;
    let top = linalg::svd(&zk);
    if top.s[0] < 1e-12 {
        return Ok(None);
    }
    let v = &kernel * top.v.column(0);
    let zv = &z * &v;
    let zv_norm = zv.norm();

    // ½‖P¹‖² = q μ² with P¹ = μ e_k (Zv)ᵀ Z W_1 / ‖Zv‖
    let zw1 = &z * w.layer(1);
    let q = 0.5 * (zv.transpose() * &zw1).norm_squared() / (zv_norm * zv_norm);
    let c = zv_norm * m[(k, k)];
    if c.abs() < 1e-14 {
        return Ok(None);
    }
    let mu = 1.0;
    let lambda = (1.0 + q) / c;

    let mut xi = WeightTuple::zeros(&w.dims());
    xi.layer_mut(1).column_mut(k).copy_from(&(&v * lambda));
    xi.layer_mut(h + 1)
        .row_mut(k)
        .copy_from(&(zv.transpose() * (mu / zv_norm)));
    let value = quadratic_form_general(w, &xi, s_y)?;
    Ok(Some(NegativeDirection {
        direction: xi,
        value,
        coordinate: k,
        lambda,
        mu,
    }))
}

/// Maps permuted blocks back to a weight tuple: `w_2` row `perm[k]` is
/// row `k` of `[w̃_{2,1}; w̃_{2,2}]`, and `w_{1,1}` column `perm[k]` is
/// column `k` of `[w̃_{1,1,1} | w̃_{1,1,2}]`.
fn unpermute(
    perm: &[usize],
    w2_tilde: &DMatrix<f64>,
    w11_tilde: &DMatrix<f64>,
    w12: &DMatrix<f64>,
) -> Result<WeightTuple> {
    let d_y = perm.len();
    let d1 = w2_tilde.ncols();
    let d_x = d_y + w12.ncols();
    let mut w2 = DMatrix::zeros(d_y, d1);
    let mut w1 = DMatrix::zeros(d1, d_x);
    for (k, &p) in perm.iter().enumerate() {
        w2.row_mut(p).copy_from(&w2_tilde.row(k));
        w1.column_mut(p).copy_from(&w11_tilde.column(k));
    }
    w1.view_mut((0, d_y), (d1, d_x - d_y)).copy_from(w12);
    WeightTuple::new(vec![w1, w2])
}

fn blocks_of(saddle: &Saddle) -> Result<&crate::landscape::SaddleBlocks> {
    saddle.blocks.as_ref().ok_or_else(|| {
        Error::NotConstructedSaddle(format!(
            "saddle with H = {} carries no single-hidden-layer blocks",
            saddle.weights.depth()
        ))
    })
}

/// Tangent vectors to the stratum at a constructed single-hidden-layer
/// saddle, one per entry of the free variations `(a_1, a_2, b_2, c_2)`, with
/// `b_1 = −A⁻¹(a_1A⁻¹D_Y + a_2B_2)` and `c_1 = −A⁻¹a_2C_2`.
pub fn tangent_basis(saddle: &Saddle) -> Result<Vec<Direction>> {
    let b = blocks_of(saddle)?;
    let r = saddle.r;
    let d1 = b.v.nrows();
    let d_y = b.perm.len();
    let extra = b.c2.ncols();
    let a_inv = b
        .a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotConstructedSaddle("A is singular".into()))?;
    let d_mat = DMatrix::from_diagonal(&b.d_y);
    let a_inv_d = &a_inv * &d_mat;

    let build = |a1: &DMatrix<f64>, a2: &DMatrix<f64>, b2: &DMatrix<f64>, c2: &DMatrix<f64>| {
        let b1 = -(&a_inv * (a1 * &a_inv_d + a2 * &b.b2));
        let c1 = -(&a_inv * a2 * &b.c2);
        let mut a12 = DMatrix::zeros(r, d1);
        a12.view_mut((0, 0), (r, r)).copy_from(a1);
        a12.view_mut((0, r), (r, d1 - r)).copy_from(a2);
        let mut w2t = DMatrix::zeros(d_y, d1);
        w2t.view_mut((0, 0), (r, d1)).copy_from(&(a12 * &b.v));
        let mut bb = DMatrix::zeros(d1, r);
        bb.view_mut((0, 0), (r, r)).copy_from(&b1);
        bb.view_mut((r, 0), (d1 - r, r)).copy_from(b2);
        let mut w11t = DMatrix::zeros(d1, d_y);
        w11t.view_mut((0, 0), (d1, r)).copy_from(&b.v.tr_mul(&bb));
        let mut cc = DMatrix::zeros(d1, extra);
        cc.view_mut((0, 0), (r, extra)).copy_from(&c1);
        cc.view_mut((r, 0), (d1 - r, extra)).copy_from(c2);
        let w12 = b.v.tr_mul(&cc);
        unpermute(&b.perm, &w2t, &w11t, &w12)
    };

    let shapes = [(r, r), (r, d1 - r), (d1 - r, r), (d1 - r, extra)];
    let mut out = Vec::new();
    for (slot, &(rows, cols)) in shapes.iter().enumerate() {
        for idx in 0..rows * cols {
            let mut blocks: Vec<DMatrix<f64>> =
                shapes.iter().map(|&(m, n)| DMatrix::zeros(m, n)).collect();
            blocks[slot][idx] = 1.0;
            out.push(build(&blocks[0], &blocks[1], &blocks[2], &blocks[3])?);
        }
    }
    Ok(out)
}

/// Result of comparing the Hessian kernel with the stratum's tangent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentKernelReport {
    pub r: usize,
    pub state_dim: usize,
    pub kernel_dimension: usize,
    /// Free-variation count `r(2d_1 − r) + (d_1 − r)(d_x − d_y)`.
    pub expected_dimension: usize,
    /// The alternative count `r·d_1 + (d_y − r)r + (d_y − r)(d_x − d_y)`.
    pub naive_dimension: usize,
    pub tangent_rank: usize,
    /// `max ‖A t‖ / max(1, ρ)` over an orthonormal tangent basis.
    pub max_annihilation: f64,
    /// Sine of the largest principal angle between kernel and tangent span
    /// (`1` when the dimensions differ).
    pub max_angle_sin: f64,
    pub negative: usize,
    pub positive: usize,
    pub passes: bool,
}

/// Checks at `at` that the Hessian kernel is the tangent space of the
/// stratum through `saddle`. Passing `at = saddle.weights` is the intended
/// use; any other point serves as a negative control.
pub fn tangent_kernel_check(
    saddle: &Saddle,
    at: &WeightTuple,
    s_y: &DVector<f64>,
    zero_tol: f64,
) -> Result<TangentKernelReport> {
    blocks_of(saddle)?;
    if !saddle.weights.same_shape(at) {
        return Err(Error::ShapeMismatch("evaluation point differs in shape from the saddle".into()));
    }
    let dims = saddle.weights.dims();
    let n = dims.state_dim();
    let a = hessian_matrix(at, s_y)?;
    let (values, vectors) = sorted_eigen(&a);
    let spec = count_spectrum(values.clone(), zero_tol);
    let cut = zero_tol * spec.spectral_radius;
    let kernel_cols: Vec<DVector<f64>> = values
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() <= cut)
        .map(|(i, _)| vectors.column(i).into_owned())
        .collect();
    let kernel = if kernel_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&kernel_cols)
    };

    let basis = tangent_basis(saddle)?;
    let t = DMatrix::from_columns(&basis.iter().map(|d| d.flatten()).collect::<Vec<_>>());
    let t = if t.ncols() == 0 { DMatrix::zeros(n, 0) } else { t };
    let q = orthonormal_span(&t, 1e-10);
    let scale = spec.spectral_radius.max(1.0);
    let max_annihilation = q
        .column_iter()
        .map(|c| (&a * c).norm() / scale)
        .fold(0.0, f64::max);
    let max_angle_sin = max_principal_angle_sin(&kernel, &q);
    let expected_dimension = stratum_dimension(saddle.r, &dims)?;
    let passes = spec.kernel_dimension == expected_dimension
        && q.ncols() == expected_dimension
        && max_annihilation <= defaults::ANNIHILATION_TOL
        && max_angle_sin < defaults::ANGLE_TOL;
    Ok(TangentKernelReport {
        r: saddle.r,
        state_dim: n,
        kernel_dimension: spec.kernel_dimension,
        expected_dimension,
        naive_dimension: naive_stratum_dimension(saddle.r, &dims)?,
        tangent_rank: q.ncols(),
        max_annihilation,
        max_angle_sin,
        negative: spec.negative,
        positive: spec.positive,
        passes,
    })
}

/// Matrix of the form restricted to the coordinate pair `(δ_1[i,j], ε_1[i,j])`
/// at a constructed saddle with `0 < r < d_y`, `i < r`, `j < d_y − r`
/// (positions in the fitted-first order). Its eigenvalues are
/// `½(1 ± E_jj / D_ii)`.
pub fn coupling_pair_form(saddle: &Saddle, s_y: &DVector<f64>, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let b = blocks_of(saddle)?;
    let r = saddle.r;
    let d_y = b.perm.len();
    let d1 = b.v.nrows();
    let extra = b.c2.ncols();
    if r == 0 || i >= r || j >= d_y - r {
        return Err(Error::OutOfRange(format!(
            "pair ({i}, {j}) outside {r} x {}",
            d_y - r
        )));
    }
    let a_inv = b
        .a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotConstructedSaddle("A is singular".into()))?;
    let b1 = &a_inv * DMatrix::from_diagonal(&b.d_y);
    let b1_inv = b1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotConstructedSaddle("B_1 is singular".into()))?;
    let d_inv = DMatrix::from_diagonal(&b.d_y.map(|x| 1.0 / x));
    let zero12 = DMatrix::zeros(d1, extra);

    // δ_1 = A d_1 with d_2 = B_2 D_Y⁻¹ δ_1 so that δ_2 = 0
    let delta_dir = {
        let mut delta = DMatrix::zeros(r, d_y - r);
        delta[(i, j)] = 1.0;
        let d_1 = &a_inv * &delta;
        let d_2 = &b.b2 * &d_inv * &delta;
        let mut dd = DMatrix::zeros(d1, d_y - r);
        dd.view_mut((0, 0), (r, d_y - r)).copy_from(&d_1);
        dd.view_mut((r, 0), (d1 - r, d_y - r)).copy_from(&d_2);
        let mut w11t = DMatrix::zeros(d1, d_y);
        w11t.view_mut((0, r), (d1, d_y - r)).copy_from(&b.v.tr_mul(&dd));
        unpermute(&b.perm, &DMatrix::zeros(d_y, d1), &w11t, &zero12)?
    };
    // ε_1ᵀ = e_1 B_1 with e_2 = 0
    let eps_dir = {
        let mut eps_t = DMatrix::zeros(d_y - r, r);
        eps_t[(j, i)] = 1.0;
        let e_1 = eps_t * &b1_inv;
        let mut ee = DMatrix::zeros(d_y - r, d1);
        ee.view_mut((0, 0), (d_y - r, r)).copy_from(&e_1);
        let mut w2t = DMatrix::zeros(d_y, d1);
        w2t.view_mut((r, 0), (d_y - r, d1)).copy_from(&(ee * &b.v));
        unpermute(&b.perm, &w2t, &DMatrix::zeros(d1, d_y), &zero12)?
    };
    let w = &saddle.weights;
    let qx = quadratic_form(w, &delta_dir, s_y)?;
    let qy = quadratic_form(w, &eps_dir, s_y)?;
    let qxy = quadratic_form(w, &delta_dir.add_scaled(&eps_dir, 1.0)?, s_y)?;
    let off = 0.5 * (qxy - qx - qy);
    Ok(DMatrix::from_row_slice(2, 2, &[qx, off, off, qy]))
}

/// Gradient as a direction (for `ξ = −∇L` checks).
pub fn gradient_direction(w: &WeightTuple, s_y: &DVector<f64>) -> Result<GradientTuple> {
    Ok(evaluate(w, s_y)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{construct_saddle, SaddleOptions, Subset};
    use crate::network::{loss, LayerDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s21() -> DVector<f64> {
        DVector::from_vec(vec![2.0, 1.0])
    }

    fn dims(out_first: &[usize]) -> LayerDims {
        LayerDims::from_output_first(out_first).unwrap()
    }

    fn random(d: &LayerDims, seed: u64) -> WeightTuple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WeightTuple::gaussian(d, &vec![0.7; d.depth() + 1], &mut rng)
    }

    #[test]
    fn zero_direction_and_origin() {
        let d = dims(&[1, 1, 1]);
        let w = WeightTuple::zeros(&d);
        let s = DVector::from_vec(vec![3.0]);
        assert_eq!(quadratic_form(&w, &WeightTuple::zeros(&d), &s).unwrap(), 0.0);
        let xi = WeightTuple::new(vec![
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        assert!((quadratic_form(&w, &xi, &s).unwrap() + 3.0).abs() < 1e-14);
        let a = hessian_matrix(&w, &s).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, -3.0, -3.0, 0.0]));
        let sp = spectrum(&w, &s, defaults::ZERO_TOL).unwrap();
        assert_eq!(sp.eigenvalues.len(), 2);
        assert!((sp.eigenvalues[0] + 3.0).abs() < 1e-12 && (sp.eigenvalues[1] - 3.0).abs() < 1e-12);
        assert_eq!((sp.negative, sp.zero, sp.positive), (1, 0, 1));
    }

    #[test]
    fn first_variation_is_gradient_pairing() {
        let d = dims(&[2, 3, 3, 4]);
        let w = random(&d, 1);
        let xi = random(&d, 2);
        let s = s21();
        let g = gradient_direction(&w, &s).unwrap();
        let fv = first_variation(&w, &xi, &s).unwrap();
        assert!((fv - g.dot(&xi).unwrap()).abs() <= 1e-10 * (1.0 + fv.abs()));
        let fv = first_variation(&w, &g.scaled(-1.0), &s).unwrap();
        assert!((fv + g.norm().powi(2)).abs() <= 1e-10 * (1.0 + fv.abs()));
    }

    #[test]
    fn matrix_reproduces_form_at_random_point() {
        let d = dims(&[2, 3, 3, 4]);
        let w = random(&d, 5);
        let s = s21();
        let a = hessian_matrix(&w, &s).unwrap();
        assert_eq!((&a - a.transpose()).norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xi = WeightTuple::gaussian(&d, &[1.0, 1.0, 1.0], &mut rng);
            let f = xi.flatten();
            let via_matrix = 0.5 * f.dot(&(&a * &f));
            let direct = quadratic_form(&w, &xi, &s).unwrap();
            assert!((via_matrix - direct).abs() <= 1e-8 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn fast_path_agrees_at_saddle() {
        let sad = construct_saddle(&s21(), &dims(&[2, 3, 4]), "{1}".parse().unwrap(), 2, SaddleOptions::default())
            .unwrap();
        let xi = random(&dims(&[2, 3, 4]), 8);
        let a = quadratic_form_critical_h1(&sad.weights, &xi, &s21()).unwrap();
        let b = quadratic_form_general(&sad.weights, &xi, &s21()).unwrap();
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn global_minimum_is_psd() {
        let w = WeightTuple::new(vec![
            DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DMatrix::identity(2, 2),
        ])
        .unwrap();
        let sp = spectrum(&w, &s21(), defaults::ZERO_TOL).unwrap();
        assert_eq!(sp.negative, 0);
        assert!(sp.eigenvalues[0] > -1e-8);
        assert!(negative_direction(&w, &s21()).unwrap().is_none());
    }

    #[test]
    fn negative_direction_scalar_origin() {
        let d = dims(&[1, 1, 1]);
        let s = DVector::from_vec(vec![2.0]);
        let nd = negative_direction(&WeightTuple::zeros(&d), &s).unwrap().unwrap();
        assert!((nd.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn saddle_spectra_and_kernel() {
        let d = dims(&[2, 3, 4]);
        for (text, dim) in [("{}", 6), ("{1}", 9), ("{2}", 9)] {
            let fitted: Subset = text.parse().unwrap();
            let sad = construct_saddle(&s21(), &d, fitted, 11, SaddleOptions::default()).unwrap();
            let sp = spectrum(&sad.weights, &s21(), defaults::ZERO_TOL).unwrap();
            assert!(sp.negative >= 1 && sp.positive >= 1);
            assert_eq!(sp.kernel_dimension, dim, "{text}");
            let nd = negative_direction(&sad.weights, &s21()).unwrap().unwrap();
            assert!(nd.value < 0.0);
            let rep = tangent_kernel_check(&sad, &sad.weights, &s21(), defaults::ZERO_TOL).unwrap();
            assert!(rep.passes, "{rep:?}");
        }
    }

    #[test]
    fn negative_control_fails() {
        let d = dims(&[2, 3, 4]);
        let sad = construct_saddle(&s21(), &d, "{1}".parse().unwrap(), 3, SaddleOptions::default()).unwrap();
        let off = sad.weights.add_scaled(&random(&d, 99), 1e-2).unwrap();
        let rep = tangent_kernel_check(&sad, &off, &s21(), defaults::ZERO_TOL).unwrap();
        assert!(!rep.passes);
    }

    #[test]
    fn coupling_pair_eigenvalues() {
        let s = DVector::from_vec(vec![3.0, 2.0, 1.0]);
        let d = dims(&[3, 4, 6]);
        let sad = construct_saddle(&s, &d, "{2}".parse().unwrap(), 5, SaddleOptions::default()).unwrap();
        let b = sad.blocks.as_ref().unwrap();
        for j in 0..2 {
            let m = coupling_pair_form(&sad, &s, 0, j).unwrap();
            let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
            ev.sort_by(f64::total_cmp);
            let ratio = b.e_y[j] / b.d_y[0];
            assert!((ev[0] - 0.5 * (1.0 - ratio)).abs() < 1e-10, "{ev:?} {ratio}");
            assert!((ev[1] - 0.5 * (1.0 + ratio)).abs() < 1e-10);
        }
    }

    #[test]
    fn second_order_taylor_remainder() {
        let d = dims(&[2, 3, 3, 4]);
        let w = random(&d, 21);
        let xi = random(&d, 22);
        let s = s21();
        let l0 = loss(&w, &s).unwrap();
        let mut ratios = Vec::new();
        for k in 0..3 {
            let h = 1e-2 / 2f64.powi(k);
            let x = xi.scaled(h);
            let rem = loss(&w.add_scaled(&x, 1.0).unwrap(), &s).unwrap()
                - l0
                - first_variation(&w, &x, &s).unwrap()
                - quadratic_form(&w, &x, &s).unwrap();
            ratios.push(rem.abs() / x.norm().powi(3));
        }
        assert!(ratios.iter().all(|r| *r < 1e3), "{ratios:?}");
    }

    #[test]
    fn too_large_guard() {
        let d = LayerDims::new(60, &[30], 20).unwrap();
        let w = WeightTuple::zeros(&d);
        let s = DVector::from_fn(20, |i, _| 20.0 - i as f64);
        assert!(matches!(hessian_matrix(&w, &s), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn spectrum_csv_one_per_line() {
        let sp = spectrum(&WeightTuple::zeros(&dims(&[1, 1, 1])), &DVector::from_vec(vec![1.0]), 1e-7).unwrap();
        let mut buf = Vec::new();
        sp.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "-1.0\n1.0\n");
    }
}
