//! Reduction of a raw data/target pair `(X, Y)` to the effective problem.
//!
//! With `X = U_X [S_X | 0] V_Xᵀ` and `Ȳ = Y V_X¹ = U_Y [S_Y | 0] V_Yᵀ`, the raw
//! loss `½‖Y − W_{H+1}⋯W_1 X‖²_F` equals `½‖[S_Y | 0] − W̄_{H+1}⋯W̄_1‖²_F`
//! plus the constant `½‖Y V_X²‖²_F`, where `W̄_1 = W_1 U_X S_X V_Y`,
//! `W̄_{H+1} = U_Yᵀ W_{H+1}` and the middle layers are unchanged.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::landscape::sorted_half_sums;
use crate::linalg::{self, complete_basis, gaussian_matrix, numerical_rank};
use crate::network::{sigma_y, LayerDims, WeightTuple};

/// Training data `X` (`d_x × m`) and targets `Y` (`d_y × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawProblem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl RawProblem {
    /// Checks shapes and the dimension order `m >= d_x >= d_y`. Rank is
    /// checked by [`reduce_problem`].
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "X has {} samples, Y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        let (d_x, m, d_y) = (x.nrows(), x.ncols(), y.nrows());
        if d_y == 0 || !(m >= d_x && d_x >= d_y) {
            return Err(Error::DimensionOrder(format!("m = {m}, d_x = {d_x}, d_y = {d_y}")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.y.nrows()
    }

    /// Raw loss `½‖Y − W_{H+1}⋯W_1 X‖²_F` for weights in raw coordinates.
    pub fn loss(&self, w: &WeightTuple) -> Result<f64> {
        let p = end_to_end(w);
        if p.shape() != (self.d_y(), self.d_x()) {
            return Err(Error::ShapeMismatch(format!(
                "end-to-end map is {:?}, expected {:?}",
                p.shape(),
                (self.d_y(), self.d_x())
            )));
        }
        Ok(0.5 * (&self.y - p * &self.x).norm_squared())
    }
}

/// `W_{H+1} ⋯ W_1`.
pub fn end_to_end(w: &WeightTuple) -> DMatrix<f64> {
    let mut p = w.layer(1).clone();
    for l in &w.layers()[1..] {
        p = l * p;
    }
    p
}

/// The effective problem and the factors relating it to the raw one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedProblem {
    #[serde(with = "crate::io::vector")]
    s_y: DVector<f64>,
    #[serde(with = "crate::io::rows")]
    u_x: DMatrix<f64>,
    #[serde(with = "crate::io::vector")]
    s_x: DVector<f64>,
    #[serde(with = "crate::io::rows")]
    v_x1: DMatrix<f64>,
    #[serde(with = "crate::io::rows")]
    u_y: DMatrix<f64>,
    #[serde(with = "crate::io::rows")]
    v_y: DMatrix<f64>,
    offset: f64,
    dims: LayerDims,
}

impl ReducedProblem {
    /// Target singular values `σ_1 >= … >= σ_{d_y}`.
    pub fn s_y(&self) -> &DVector<f64> {
        &self.s_y
    }

    /// `Σ_Y = [S_Y | 0]`.
    pub fn sigma_y(&self) -> DMatrix<f64> {
        sigma_y(&self.s_y, self.dims.d_x())
    }

    pub fn u_x(&self) -> &DMatrix<f64> {
        &self.u_x
    }

    pub fn s_x(&self) -> &DVector<f64> {
        &self.s_x
    }

    pub fn v_x1(&self) -> &DMatrix<f64> {
        &self.v_x1
    }

    pub fn u_y(&self) -> &DMatrix<f64> {
        &self.u_y
    }

    pub fn v_y(&self) -> &DMatrix<f64> {
        &self.v_y
    }

    /// Constant `½‖Y V_X²‖²_F` separating raw and effective loss.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dims(&self) -> &LayerDims {
        &self.dims
    }

    /// Maps raw weights to reduced coordinates.
    pub fn to_reduced(&self, w: &WeightTuple) -> Result<WeightTuple> {
        self.check_dims(w)?;
        let mut layers = w.layers().to_vec();
        let s_x = DMatrix::from_diagonal(&self.s_x);
        layers[0] = &layers[0] * &self.u_x * s_x * &self.v_y;
        let top = layers.len() - 1;
        layers[top] = self.u_y.tr_mul(&layers[top]);
        WeightTuple::new(layers)
    }

    /// Inverse of [`to_reduced`](Self::to_reduced):
    /// `W_1 = W̄_1 V_Yᵀ S_X⁻¹ U_Xᵀ`, `W_{H+1} = U_Y W̄_{H+1}`.
    pub fn to_raw(&self, w: &WeightTuple) -> Result<WeightTuple> {
        self.check_dims(w)?;
        let mut layers = w.layers().to_vec();
        let s_x_inv = DMatrix::from_diagonal(&self.s_x.map(|s| 1.0 / s));
        layers[0] = &layers[0] * self.v_y.transpose() * s_x_inv * self.u_x.transpose();
        let top = layers.len() - 1;
        layers[top] = &self.u_y * &layers[top];
        WeightTuple::new(layers)
    }

    /// `U_Y Σ_Y V_Yᵀ S_X⁻¹ U_Xᵀ`, the least-squares map expressed through the
    /// reduction factors.
    pub fn least_squares_from_factors(&self) -> DMatrix<f64> {
        let s_x_inv = DMatrix::from_diagonal(&self.s_x.map(|s| 1.0 / s));
        &self.u_y * self.sigma_y() * self.v_y.transpose() * s_x_inv * self.u_x.transpose()
    }

    fn check_dims(&self, w: &WeightTuple) -> Result<()> {
        if w.dims() != self.dims {
            return Err(Error::ShapeMismatch(format!(
                "weights have dims {:?}, problem has {:?}",
                w.dims().to_output_first(),
                self.dims.to_output_first()
            )));
        }
        Ok(())
    }
}

/// Performs the two-stage reduction. Near-degenerate target spectra are not
/// rejected here; [`check_assumptions`] reports them.
pub fn reduce_problem(raw: &RawProblem, hidden_dims: &[usize]) -> Result<ReducedProblem> {
    let dims = LayerDims::new(raw.d_x(), hidden_dims, raw.d_y())?;
    dims.check_dimension_order()?;

    let dx = linalg::svd(&raw.x);
    let rank_x = numerical_rank(&dx.s, defaults::RANK_TOL);
    if rank_x < raw.d_x() {
        return Err(Error::RankDeficient {
            what: "X",
            rank: rank_x,
            expected: raw.d_x(),
        });
    }
    let rank_y = linalg::rank(&raw.y, defaults::RANK_TOL);
    if rank_y < raw.d_y() {
        return Err(Error::RankDeficient {
            what: "Y",
            rank: rank_y,
            expected: raw.d_y(),
        });
    }

    let v_x1 = dx.v;
    let y_bar = &raw.y * &v_x1;
    // ‖Y V_X²‖ is the norm of the part of Y outside the row space of X
    let outside = &raw.y - &y_bar * v_x1.transpose();
    let offset = 0.5 * outside.norm_squared();

    let dy = linalg::svd(&y_bar);
    let v_y = complete_basis(&dy.v);

    Ok(ReducedProblem {
        s_y: dy.s,
        u_x: dx.u,
        s_x: dx.s,
        v_x1,
        u_y: dy.u,
        v_y,
        offset,
        dims,
    })
}

/// Pass/fail flags for the four data assumptions with their measured margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `m >= d_x >= d_y` and every hidden width `>= d_y`.
    pub dimension_order: bool,
    /// `X` and `Y` have full row rank.
    pub full_rank: bool,
    /// Smallest singular value of `X` divided by its largest.
    pub x_min_singular: f64,
    /// Smallest singular value of `Y` divided by its largest.
    pub y_min_singular: f64,
    /// `S_Y` strictly decreasing and positive.
    pub distinct_singular_values: bool,
    /// Smallest gap between consecutive target singular values (`σ_1` when `d_y = 1`).
    pub singular_gap: f64,
    /// All subset half-sums of squared singular values pairwise distinct.
    pub distinct_critical_values: bool,
    /// Smallest gap between two critical values.
    pub critical_gap: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.dimension_order
            && self.full_rank
            && self.distinct_singular_values
            && self.distinct_critical_values
    }
}

fn relative_min_singular(a: &DMatrix<f64>) -> f64 {
    let s = linalg::svd(a).s;
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        0.0
    } else {
        s.iter().cloned().fold(f64::INFINITY, f64::min) / top
    }
}

pub fn check_assumptions(raw: &RawProblem, reduced: &ReducedProblem) -> AssumptionReport {
    let dimension_order = raw.m() >= raw.d_x()
        && raw.d_x() >= raw.d_y()
        && reduced.dims.check_dimension_order().is_ok();
    let x_min_singular = relative_min_singular(&raw.x);
    let y_min_singular = relative_min_singular(&raw.y);
    let full_rank = x_min_singular > defaults::RANK_TOL && y_min_singular > defaults::RANK_TOL;

    let s = &reduced.s_y;
    let sigma_1 = s[0];
    let singular_gap = if s.len() == 1 {
        sigma_1
    } else {
        s.as_slice()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    };
    let positive = s[s.len() - 1] > defaults::RANK_TOL * sigma_1;
    let distinct_singular_values =
        positive && singular_gap > defaults::SINGULAR_GAP_TOL * sigma_1;

    let sums = sorted_half_sums(s);
    let critical_gap = sums
        .windows(2)
        .map(|w| (w[0].1 - w[1].1).abs())
        .fold(f64::INFINITY, f64::min);
    let head = sums[0].1;
    let distinct_critical_values = critical_gap > defaults::CRITICAL_GAP_TOL * head;

    AssumptionReport {
        dimension_order,
        full_rank,
        x_min_singular,
        y_min_singular,
        distinct_singular_values,
        singular_gap: singular_gap.max(0.0),
        distinct_critical_values,
        critical_gap,
    }
}

/// Shape `(m, d_x, d_y)` of a generated problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemShape {
    pub m: usize,
    pub d_x: usize,
    pub d_y: usize,
}

/// Draws `X` and `Y` with i.i.d. centered Gaussian entries of standard
/// deviation `scale`, deterministically from `seed`, and re-checks the
/// rank and spectral assumptions.
pub fn generate_problem(shape: ProblemShape, scale: f64, seed: u64) -> Result<RawProblem> {
    let ProblemShape { m, d_x, d_y } = shape;
    if d_y == 0 || !(m >= d_x && d_x >= d_y) {
        return Err(Error::DimensionOrder(format!("m = {m}, d_x = {d_x}, d_y = {d_y}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::ConfigInvalid(format!("scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian_matrix(d_x, m, scale, &mut rng);
    let y = gaussian_matrix(d_y, m, scale, &mut rng);
    let raw = RawProblem::new(x, y)?;
    let reduced = match reduce_problem(&raw, &[d_y]) {
        Ok(r) => r,
        Err(Error::RankDeficient { .. }) => {
            let report = AssumptionReport {
                dimension_order: true,
                full_rank: false,
                x_min_singular: relative_min_singular(&raw.x),
                y_min_singular: relative_min_singular(&raw.y),
                distinct_singular_values: false,
                singular_gap: 0.0,
                distinct_critical_values: false,
                critical_gap: 0.0,
            };
            return Err(Error::AssumptionViolation(Box::new(report)));
        }
        Err(e) => return Err(e),
    };
    let report = check_assumptions(&raw, &reduced);
    if !report.all_pass() {
        return Err(Error::AssumptionViolation(Box::new(report)));
    }
    Ok(raw)
}

/// `W_LS = Y Xᵀ (X Xᵀ)⁻¹` via the normal equations.
pub fn least_squares_solution(raw: &RawProblem) -> Result<DMatrix<f64>> {
    let rank_x = linalg::rank(&raw.x, defaults::RANK_TOL);
    if rank_x < raw.d_x() {
        return Err(Error::RankDeficient {
            what: "X",
            rank: rank_x,
            expected: raw.d_x(),
        });
    }
    let gram = &raw.x * raw.x.transpose();
    let chol = gram.cholesky().ok_or(Error::RankDeficient {
        what: "X Xᵀ",
        rank: rank_x,
        expected: raw.d_x(),
    })?;
    // (X Xᵀ) W_LSᵀ = X Yᵀ
    let rhs = &raw.x * raw.y.transpose();
    Ok(chol.solve(&rhs).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_problem() -> RawProblem {
        RawProblem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
        )
        .unwrap()
    }

    fn wide_problem() -> RawProblem {
        RawProblem::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 5.0, 0.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn orthogonal_data_diagonal_target() {
        let red = reduce_problem(&diag_problem(), &[2]).unwrap();
        assert!((red.s_y()[0] - 3.0).abs() < 1e-14);
        assert!((red.s_y()[1] - 1.0).abs() < 1e-14);
        assert!(red.offset().abs() < 1e-28);
    }

    #[test]
    fn offset_from_discarded_sample() {
        // Ȳ = [[2,0],[0,1]] and the third sample contributes ½·5² = 12.5
        let raw = wide_problem();
        let red = reduce_problem(&raw, &[2]).unwrap();
        assert!((red.s_y()[0] - 2.0).abs() < 1e-14);
        assert!((red.s_y()[1] - 1.0).abs() < 1e-14);
        assert!((red.offset() - 12.5).abs() < 1e-12);
        let ybar = raw.y() * red.v_x1();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        // V_X¹ is determined up to column signs and order; compare absolute values
        assert!((ybar.abs() - expected).norm() < 1e-12);
    }

    #[test]
    fn repeated_row_is_rank_deficient() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]);
        let raw = RawProblem::new(x, y).unwrap();
        assert!(matches!(
            reduce_problem(&raw, &[1]),
            Err(Error::RankDeficient { what: "X", .. })
        ));
        assert!(matches!(least_squares_solution(&raw), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            RawProblem::new(DMatrix::zeros(4, 2), DMatrix::zeros(2, 2)),
            Err(Error::DimensionOrder(_))
        ));
        assert!(matches!(
            reduce_problem(&diag_problem(), &[1]),
            Err(Error::DimensionOrder(_))
        ));
        let shape = ProblemShape { m: 2, d_x: 4, d_y: 2 };
        assert!(matches!(generate_problem(shape, 1.0, 0), Err(Error::DimensionOrder(_))));
    }

    #[test]
    fn assumption_report_on_diag_problem() {
        let raw = diag_problem();
        let red = reduce_problem(&raw, &[2]).unwrap();
        let rep = check_assumptions(&raw, &red);
        assert!(rep.all_pass());
        assert!((rep.singular_gap - 2.0).abs() < 1e-13);
        // half sums {4.5+0.5, 4.5, 0.5, 0}: smallest gap 0.5
        assert!((rep.critical_gap - 0.5).abs() < 1e-13);
    }

    #[test]
    fn equal_singular_values_fail() {
        let raw = RawProblem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let red = reduce_problem(&raw, &[2]).unwrap();
        let rep = check_assumptions(&raw, &red);
        assert!(!rep.distinct_singular_values);
        assert!(rep.singular_gap < 1e-14);
        assert!(!rep.all_pass());
    }

    #[test]
    fn colliding_half_sums_fail() {
        let raw = RawProblem::new(
            DMatrix::identity(3, 3),
            DMatrix::from_diagonal(&DVector::from_vec(vec![5f64.sqrt(), 2.0, 1.0])),
        )
        .unwrap();
        let red = reduce_problem(&raw, &[3]).unwrap();
        let rep = check_assumptions(&raw, &red);
        assert!(rep.distinct_singular_values);
        assert!(!rep.distinct_critical_values);
        assert!(rep.critical_gap < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let shape = ProblemShape { m: 6, d_x: 4, d_y: 2 };
        let a = generate_problem(shape, 1.0, 7).unwrap();
        let b = generate_problem(shape, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_problem(shape, 1.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_problems_pass_assumptions() {
        let shape = ProblemShape { m: 6, d_x: 4, d_y: 2 };
        let passed = (0..100).filter(|&s| generate_problem(shape, 1.0, s).is_ok()).count();
        assert!(passed >= 99, "{passed}/100");
    }

    #[test]
    fn least_squares_small_cases() {
        let w = least_squares_solution(&diag_problem()).unwrap();
        assert!((w - DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).norm() < 1e-14);
        let w = least_squares_solution(&wide_problem()).unwrap();
        assert!((w - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn least_squares_residual_orthogonal_to_rows() {
        let raw = generate_problem(ProblemShape { m: 9, d_x: 4, d_y: 3 }, 1.0, 21).unwrap();
        let w = least_squares_solution(&raw).unwrap();
        let resid = raw.y() - &w * raw.x();
        assert!((resid * raw.x().transpose()).norm() < 1e-8);
    }

    #[test]
    fn reconstruction_identity() {
        let raw = generate_problem(ProblemShape { m: 7, d_x: 5, d_y: 2 }, 1.0, 3).unwrap();
        let red = reduce_problem(&raw, &[3, 4]).unwrap();
        let rec = red.u_x() * DMatrix::from_diagonal(red.s_x()) * red.v_x1().transpose();
        assert!((rec - raw.x()).norm() / raw.x().norm() < 1e-10);
        let vy = red.v_y();
        assert!((vy.transpose() * vy - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn raw_and_reduced_coordinates_invert() {
        let raw = generate_problem(ProblemShape { m: 7, d_x: 4, d_y: 2 }, 1.0, 5).unwrap();
        let red = reduce_problem(&raw, &[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WeightTuple::gaussian(red.dims(), &[1.0, 1.0], &mut rng);
        let back = red.to_raw(&red.to_reduced(&w).unwrap()).unwrap();
        assert!(back.add_scaled(&w, -1.0).unwrap().norm() < 1e-10);
    }
}
