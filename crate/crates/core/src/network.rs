//! Deep linear network state in reduced coordinates: the weight tuple,
//! partial products, the effective loss, its residual and its gradient.
//!
//! Layer indices in the public API are 1-based: `W₁` maps the input
//! (width `d_x`) to the first hidden layer and `W_{H+1}` maps the last
//! hidden layer to the output (width `d_y`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io::{matrix_from_rows, matrix_to_rows};
use crate::linalg::gaussian_matrix;

/// Layer widths `d_0 = d_x, d_1, …, d_H, d_{H+1} = d_y`, input first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDims {
    widths: Vec<usize>,
}

impl LayerDims {
    /// Builds from `d_x`, the hidden widths `d_1..d_H` and `d_y`.
    pub fn new(d_x: usize, hidden: &[usize], d_y: usize) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::ConfigInvalid("at least one hidden layer is required".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(d_x);
        widths.extend_from_slice(hidden);
        widths.push(d_y);
        if widths.contains(&0) {
            return Err(Error::ConfigInvalid(format!("zero width in {widths:?}")));
        }
        Ok(Self { widths })
    }

    /// Builds from the output-first listing `(d_y, d_H, …, d_1, d_x)`, the
    /// order used on the command line (`--dims 2,3,4`).
    pub fn from_output_first(dims: &[usize]) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::ConfigInvalid(format!(
                "need at least (d_y, d_1, d_x), got {dims:?}"
            )));
        }
        let mut widths = dims.to_vec();
        widths.reverse();
        let d_x = widths[0];
        let d_y = *widths.last().unwrap();
        Self::new(d_x, &widths[1..widths.len() - 1], d_y)
    }

    pub fn to_output_first(&self) -> Vec<usize> {
        self.widths.iter().rev().cloned().collect()
    }

    /// Number of hidden layers H.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    /// Width `d_j` for `0 <= j <= H+1`.
    pub fn width(&self, j: usize) -> usize {
        self.widths[j]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn d_x(&self) -> usize {
        self.widths[0]
    }

    pub fn d_y(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    /// Total number of scalar weights.
    pub fn state_dim(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// Dimension condition: `d_x >= d_y` and every hidden width `>= d_y`.
    pub fn check_dimension_order(&self) -> Result<()> {
        let d_y = self.d_y();
        if self.d_x() < d_y {
            return Err(Error::DimensionOrder(format!("d_x = {} < d_y = {d_y}", self.d_x())));
        }
        if let Some(&h) = self.hidden().iter().find(|&&h| h < d_y) {
            return Err(Error::DimensionOrder(format!("hidden width {h} < d_y = {d_y}")));
        }
        Ok(())
    }
}

/// The state `(W₁, …, W_{H+1})` with `W_j` of shape `d_j × d_{j-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTuple {
    layers: Vec<DMatrix<f64>>,
}

/// Gradients and variations share the shape chain of the state.
pub type GradientTuple = WeightTuple;

impl WeightTuple {
    /// Wraps layers given input first; checks the shape chain.
    pub fn new(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 layers (H >= 1), got {}",
                layers.len()
            )));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "W_{} is {}x{} but W_{} has {} columns",
                    j + 1,
                    pair[0].nrows(),
                    pair[0].ncols(),
                    j + 2,
                    pair[1].ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(dims: &LayerDims) -> Self {
        let layers = dims
            .widths
            .windows(2)
            .map(|w| DMatrix::zeros(w[1], w[0]))
            .collect();
        Self { layers }
    }

    /// I.i.d. centered Gaussian entries; layer `j` uses `scales[j-1]`.
    pub fn gaussian<R: Rng + ?Sized>(dims: &LayerDims, scales: &[f64], rng: &mut R) -> Self {
        assert_eq!(scales.len(), dims.depth() + 1, "one scale per layer");
        let layers = dims
            .widths
            .windows(2)
            .zip(scales)
            .map(|(w, &s)| gaussian_matrix(w[1], w[0], s, rng))
            .collect();
        Self { layers }
    }

    pub fn dims(&self) -> LayerDims {
        let mut widths = vec![self.layers[0].ncols()];
        widths.extend(self.layers.iter().map(|l| l.nrows()));
        LayerDims { widths }
    }

    /// Number of hidden layers H.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// `W_j`, 1-based.
    pub fn layer(&self, j: usize) -> &DMatrix<f64> {
        &self.layers[j - 1]
    }

    pub fn layer_mut(&mut self, j: usize) -> &mut DMatrix<f64> {
        &mut self.layers[j - 1]
    }

    /// Layers, input first.
    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<DMatrix<f64>> {
        self.layers
    }

    pub fn len_flat(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    /// Concatenation of the layers in column-major order, `W₁` first.
    /// Since `W₁ = [W_{1,1} | W_{1,2}]`, this lists `W_{1,1}` before `W_{1,2}`.
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.len_flat());
        self.write_flat(out.as_mut_slice());
        out
    }

    pub fn write_flat(&self, out: &mut [f64]) {
        let mut off = 0;
        for l in &self.layers {
            out[off..off + l.len()].copy_from_slice(l.as_slice());
            off += l.len();
        }
    }

    pub fn from_flat(dims: &LayerDims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.state_dim() {
            return Err(Error::ShapeMismatch(format!(
                "flat vector has {} entries, dims need {}",
                flat.len(),
                dims.state_dim()
            )));
        }
        let mut off = 0;
        let layers = dims
            .widths
            .windows(2)
            .map(|w| {
                let n = w[0] * w[1];
                let m = DMatrix::from_column_slice(w[1], w[0], &flat[off..off + n]);
                off += n;
                m
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn same_shape(&self, other: &WeightTuple) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.shape() == b.shape())
    }

    fn check_same_shape(&self, other: &WeightTuple) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "tuples with dims {:?} and {:?}",
                self.dims().to_output_first(),
                other.dims().to_output_first()
            )))
        }
    }

    /// Frobenius inner product summed over layers.
    pub fn dot(&self, other: &WeightTuple) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.layers.iter().zip(&other.layers).map(|(a, b)| a.dot(b)).sum())
    }

    pub fn norm(&self) -> f64 {
        self.layers.iter().map(|l| l.norm_squared()).sum::<f64>().sqrt()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &WeightTuple, alpha: f64) -> Result<WeightTuple> {
        self.check_same_shape(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a + b * alpha)
            .collect();
        Ok(Self { layers })
    }

    pub fn scaled(&self, alpha: f64) -> WeightTuple {
        Self {
            layers: self.layers.iter().map(|l| l * alpha).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|x| x.is_finite()))
    }

    /// Splits `W₁` into `(W_{1,1}, W_{1,2})` at column `d_y`.
    pub fn split_first(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let w1 = &self.layers[0];
        let d_y = self.layers.last().unwrap().nrows();
        (
            w1.columns(0, d_y).into_owned(),
            w1.columns(d_y, w1.ncols() - d_y).into_owned(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct WeightTupleRepr {
    #[serde(rename = "H")]
    h: usize,
    weights: Vec<Vec<Vec<f64>>>,
}

impl Serialize for WeightTuple {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WeightTupleRepr {
            h: self.depth(),
            weights: self.layers.iter().map(matrix_to_rows).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = WeightTupleRepr::deserialize(d)?;
        let layers = repr
            .weights
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        if layers.len() != repr.h + 1 {
            return Err(D::Error::custom(format!(
                "H = {} but {} weight matrices given",
                repr.h,
                layers.len()
            )));
        }
        WeightTuple::new(layers).map_err(D::Error::custom)
    }
}

/// Prefix and suffix products of a weight tuple.
///
/// `prefix[i] = W_i ⋯ W_1` for `0 <= i <= H+1` (`prefix[0] = I_{d_x}`) and
/// `suffix[i] = W_{H+1} ⋯ W_i` for `1 <= i <= H+2` (`suffix[H+2] = I_{d_y}`).
pub(crate) struct Products {
    pub prefix: Vec<DMatrix<f64>>,
    pub suffix: Vec<DMatrix<f64>>,
}

impl Products {
    pub fn new(w: &WeightTuple) -> Self {
        let n = w.layers.len();
        let d_x = w.layers[0].ncols();
        let d_y = w.layers[n - 1].nrows();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(DMatrix::identity(d_x, d_x));
        for l in &w.layers {
            let next = l * prefix.last().unwrap();
            prefix.push(next);
        }
        let mut suffix = vec![DMatrix::zeros(0, 0); n + 2];
        suffix[n + 1] = DMatrix::identity(d_y, d_y);
        for i in (1..=n).rev() {
            suffix[i] = &suffix[i + 1] * &w.layers[i - 1];
        }
        Self { prefix, suffix }
    }

    pub fn total(&self) -> &DMatrix<f64> {
        self.prefix.last().unwrap()
    }
}

/// `(ΠW)_j^k = W_k ⋯ W_j` for `k >= j`, the identity of size `d_{j-1}` otherwise.
pub fn pi_product(w: &WeightTuple, j: usize, k: usize) -> Result<DMatrix<f64>> {
    let top = w.depth() + 1;
    if j < 1 || j > top || k < 1 || k > top {
        return Err(Error::IndexOutOfRange(format!(
            "(j, k) = ({j}, {k}) with H + 1 = {top}"
        )));
    }
    Ok(product_range(w, j, k))
}

/// Unchecked `(ΠW)_j^k`; valid for `1 <= j <= k+1`, `k <= H+1`.
pub(crate) fn product_range(w: &WeightTuple, j: usize, k: usize) -> DMatrix<f64> {
    if k < j {
        let d = w.layers[j - 1].ncols();
        return DMatrix::identity(d, d);
    }
    let mut p = w.layers[j - 1].clone();
    for l in &w.layers[j..k] {
        p = l * p;
    }
    p
}

/// `Σ_Y = [S_Y | 0]` of shape `d_y × d_x`.
pub fn sigma_y(s_y: &DVector<f64>, d_x: usize) -> DMatrix<f64> {
    let d_y = s_y.len();
    let mut m = DMatrix::zeros(d_y, d_x);
    for i in 0..d_y.min(d_x) {
        m[(i, i)] = s_y[i];
    }
    m
}

pub(crate) fn check_target(w: &WeightTuple, s_y: &DVector<f64>) -> Result<()> {
    let d_y = w.layers.last().unwrap().nrows();
    let d_x = w.layers[0].ncols();
    if d_y != s_y.len() {
        return Err(Error::ShapeMismatch(format!(
            "output width {d_y} but {} target singular values",
            s_y.len()
        )));
    }
    if d_x < d_y {
        return Err(Error::ShapeMismatch(format!("d_x = {d_x} < d_y = {d_y}")));
    }
    Ok(())
}

/// `M = Σ_Y − W_{H+1} ⋯ W_1`.
pub fn residual(w: &WeightTuple, s_y: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_target(w, s_y)?;
    let d_x = w.layers[0].ncols();
    Ok(sigma_y(s_y, d_x) - product_range(w, 1, w.depth() + 1))
}

/// Effective loss `½‖M‖²_F`.
pub fn loss(w: &WeightTuple, s_y: &DVector<f64>) -> Result<f64> {
    Ok(0.5 * residual(w, s_y)?.norm_squared())
}

/// Loss, residual and gradient at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub residual: DMatrix<f64>,
    pub gradient: GradientTuple,
}

pub fn evaluate(w: &WeightTuple, s_y: &DVector<f64>) -> Result<Evaluation> {
    check_target(w, s_y)?;
    let p = Products::new(w);
    let d_x = w.layers[0].ncols();
    let m = sigma_y(s_y, d_x) - p.total();
    let gradient = gradient_from(&p, &m, w.layers.len());
    Ok(Evaluation {
        loss: 0.5 * m.norm_squared(),
        residual: m,
        gradient,
    })
}

/// Component j is `−[(ΠW)_{j+1}^{H+1}]ᵀ M [(ΠW)_1^{j−1}]ᵀ`.
pub(crate) fn gradient_from(p: &Products, m: &DMatrix<f64>, n_layers: usize) -> GradientTuple {
    let layers = (1..=n_layers)
        .map(|j| -(p.suffix[j + 1].tr_mul(m) * p.prefix[j - 1].transpose()))
        .collect();
    WeightTuple { layers }
}

pub fn gradient(w: &WeightTuple, s_y: &DVector<f64>) -> Result<GradientTuple> {
    Ok(evaluate(w, s_y)?.gradient)
}

/// Applies `(U_1, …, U_H, μ)`: `W_j ↦ μ_j U_jᵀ W_j U_{j−1}` with `U_0` and
/// `U_{H+1}` the identity. The effective loss is invariant under this action.
pub fn apply_group_action(w: &WeightTuple, us: &[DMatrix<f64>], mu: &[f64]) -> Result<WeightTuple> {
    let h = w.depth();
    if us.len() != h || mu.len() != h + 1 {
        return Err(Error::ShapeMismatch(format!(
            "need {h} orthogonal matrices and {} scalars, got {} and {}",
            h + 1,
            us.len(),
            mu.len()
        )));
    }
    let dims = w.dims();
    for (i, u) in us.iter().enumerate() {
        let d = dims.width(i + 1);
        if u.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "U_{} must be {d}x{d}, got {:?}",
                i + 1,
                u.shape()
            )));
        }
        let deviation = (u.tr_mul(u) - DMatrix::identity(d, d)).norm();
        if deviation > 1e-10 {
            return Err(Error::NotOrthogonal {
                index: i + 1,
                deviation,
            });
        }
    }
    let prod: f64 = mu.iter().product();
    if !((prod - 1.0).abs() <= 1e-12) {
        return Err(Error::ProductNotOne(prod));
    }
    let layers = w
        .layers
        .iter()
        .enumerate()
        .map(|(idx, wj)| {
            let mut out = wj * mu[idx];
            if idx < h {
                out = us[idx].tr_mul(&out);
            }
            if idx > 0 {
                out *= &us[idx - 1];
            }
            out
        })
        .collect();
    Ok(WeightTuple { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tuple(dims_out_first: &[usize], seed: u64) -> WeightTuple {
        let dims = LayerDims::from_output_first(dims_out_first).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WeightTuple::gaussian(&dims, &vec![1.0; dims.depth() + 1], &mut rng)
    }

    #[test]
    fn dims_round_trip_and_state_dim() {
        let d = LayerDims::from_output_first(&[2, 3, 4]).unwrap();
        assert_eq!(d.d_y(), 2);
        assert_eq!(d.d_x(), 4);
        assert_eq!(d.hidden(), &[3]);
        assert_eq!(d.state_dim(), 3 * 4 + 2 * 3);
        assert_eq!(d.to_output_first(), vec![2, 3, 4]);
        assert!(LayerDims::from_output_first(&[2, 1, 4])
            .unwrap()
            .check_dimension_order()
            .is_err());
    }

    #[test]
    fn identity_when_k_below_j() {
        let w = random_tuple(&[2, 3, 4], 1);
        let p = pi_product(&w, 2, 1).unwrap();
        assert_eq!(p, DMatrix::identity(3, 3));
        let p = pi_product(&w, 1, 0);
        assert!(p.is_err());
        assert!(pi_product(&w, 3, 1).is_err());
    }

    #[test]
    fn small_product() {
        let w = WeightTuple::new(vec![
            DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
        ])
        .unwrap();
        assert_eq!(pi_product(&w, 1, 2).unwrap(), DMatrix::from_element(1, 1, 11.0));
    }

    #[test]
    fn residual_and_loss_at_zero() {
        let dims = LayerDims::from_output_first(&[2, 3, 3]).unwrap();
        let w = WeightTuple::zeros(&dims);
        let s = DVector::from_vec(vec![2.0, 1.0]);
        assert_eq!(residual(&w, &s).unwrap(), sigma_y(&s, 3));
        assert_eq!(loss(&w, &s).unwrap(), 2.5);
        assert_eq!(gradient(&w, &s).unwrap().norm(), 0.0);
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        // W₂ W₁ = [diag(2,1) | 0]
        let w1 = DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let w2 = DMatrix::identity(2, 2);
        let w = WeightTuple::new(vec![w1, w2]).unwrap();
        let s = DVector::from_vec(vec![2.0, 1.0]);
        assert_eq!(loss(&w, &s).unwrap(), 0.0);
        assert_eq!(gradient(&w, &s).unwrap().norm(), 0.0);
    }

    #[test]
    fn residual_matches_direct_multiply() {
        let w = random_tuple(&[2, 2, 3], 4);
        let s = DVector::from_vec(vec![1.5, 0.5]);
        let m = residual(&w, &s).unwrap();
        let (w1, w2) = (w.layer(1), w.layer(2));
        for i in 0..2 {
            for c in 0..3 {
                let mut prod = 0.0;
                for k in 0..2 {
                    prod += w2[(i, k)] * w1[(k, c)];
                }
                let target = if i == c { s[i] } else { 0.0 };
                assert!((m[(i, c)] - (target - prod)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let w = random_tuple(&[2, 3, 4], 2);
        let s = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(loss(&w, &s), Err(Error::ShapeMismatch(_))));
        let bad = WeightTuple::new(vec![DMatrix::zeros(3, 4), DMatrix::zeros(2, 2)]);
        assert!(bad.is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let w = random_tuple(&[2, 3, 3, 4], 7);
        let f = w.flatten();
        let back = WeightTuple::from_flat(&w.dims(), f.as_slice()).unwrap();
        assert_eq!(back, w);
        // W_{1,1} occupies the first d_1 * d_y entries
        let (w11, _) = w.split_first();
        assert_eq!(&f.as_slice()[..w11.len()], w11.as_slice());
    }

    #[test]
    fn group_action_scalars_cancel() {
        let w = random_tuple(&[2, 3, 4], 11);
        let s = DVector::from_vec(vec![2.0, 1.0]);
        let out = apply_group_action(&w, &[DMatrix::identity(3, 3)], &[2.0, 0.5]).unwrap();
        assert!((out.layer(2) * out.layer(1) - w.layer(2) * w.layer(1)).norm() < 1e-14);
        assert!((loss(&out, &s).unwrap() - loss(&w, &s).unwrap()).abs() < 1e-14);
        let same = apply_group_action(&w, &[DMatrix::identity(3, 3)], &[1.0, 1.0]).unwrap();
        assert_eq!(same, w);
    }

    #[test]
    fn group_action_validates() {
        let w = random_tuple(&[2, 3, 4], 12);
        let not_orth = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(
            apply_group_action(&w, &[not_orth], &[1.0, 1.0]),
            Err(Error::NotOrthogonal { .. })
        ));
        assert!(matches!(
            apply_group_action(&w, &[DMatrix::identity(3, 3)], &[2.0, 2.0]),
            Err(Error::ProductNotOne(_))
        ));
    }

    #[test]
    fn json_layout() {
        let w = WeightTuple::new(vec![
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
        ])
        .unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"H":1,"weights":[[[1.0,2.0]],[[3.0]]]}"#);
        let back: WeightTuple = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
