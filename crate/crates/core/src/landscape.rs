//! Critical values, critical-point conditions, classification of limit
//! points, explicit saddle constructions and stratum dimensions.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::defaults;
use crate::error::{Error, Result};
use crate::linalg::{self, gaussian_matrix, random_orthogonal};
use crate::network::{check_target, evaluate, product_range, LayerDims, WeightTuple};

/// A subset of the output coordinates `{1, …, d_y}`, stored as a bit mask
/// over 0-based indices. Text form is 1-based: `{}`, `{1}`, `{1,3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn from_mask(mask: u64) -> Self {
        Subset(mask)
    }

    /// From 0-based indices.
    pub fn from_indices(indices: &[usize]) -> Self {
        Subset(indices.iter().fold(0, |m, &i| m | (1 << i)))
    }

    pub fn full(d_y: usize) -> Self {
        Subset(if d_y >= 64 { u64::MAX } else { (1u64 << d_y) - 1 })
    }

    pub fn mask(&self) -> u64 {
        self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 64 && self.0 & (1 << i) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// 0-based indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..64).filter(|&i| self.contains(i)).collect()
    }

    pub fn complement(&self, d_y: usize) -> Subset {
        Subset(!self.0 & Subset::full(d_y).0)
    }

    /// True when every index is below `d_y`.
    pub fn fits(&self, d_y: usize) -> bool {
        self.0 & !Subset::full(d_y).0 == 0
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl FromStr for Subset {
    type Err = Error;

    /// Accepts `{1,2}`, `1,2`, `{}` and `∅` (1-based).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix('{').unwrap_or(t);
        let t = t.strip_suffix('}').unwrap_or(t).trim();
        if t.is_empty() || t == "∅" {
            return Ok(Subset::EMPTY);
        }
        let mut mask = 0u64;
        for part in t.split(',') {
            let k: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad subset element {part:?} in {s:?}")))?;
            if k == 0 || k > 64 {
                return Err(Error::Parse(format!("subset elements are 1-based, got {k}")));
            }
            mask |= 1 << (k - 1);
        }
        Ok(Subset(mask))
    }
}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All `2^{d_y}` pairs `(S, ½Σ_{i∈S} σ_i²)`, sorted by decreasing value
/// (ties broken by mask).
pub fn sorted_half_sums(s_y: &DVector<f64>) -> Vec<(Subset, f64)> {
    let d_y = s_y.len();
    let mut out: Vec<(Subset, f64)> = (0..1u64 << d_y)
        .map(|mask| {
            let v = (0..d_y)
                .filter(|i| mask & (1 << i) != 0)
                .fold(0.0, |acc, i| acc + s_y[i] * s_y[i]);
            (Subset(mask), 0.5 * v)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalEntry {
    /// The coordinates left unfitted; the value is the half-sum of their
    /// squared singular values.
    pub unfitted: Subset,
    pub value: f64,
}

/// Critical values of the effective loss, sorted decreasing. Entry `j`
/// (0-based) is the `(j+1)`-th critical level; the head is `½‖S_Y‖²_F` (the
/// origin's level) and the tail is `0` (global minima).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub d_y: usize,
    pub entries: Vec<CriticalEntry>,
}

impl CriticalValueTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> f64 {
        self.entries[0].value
    }

    pub fn value(&self, index: usize) -> f64 {
        self.entries[index].value
    }

    /// Index of the level whose fitted coordinates are `fitted`.
    pub fn index_of_fitted(&self, fitted: Subset) -> Option<usize> {
        let unfitted = fitted.complement(self.d_y);
        self.entries.iter().position(|e| e.unfitted == unfitted)
    }

    /// Index of the global-minimum level.
    pub fn global_index(&self) -> usize {
        self.entries.len() - 1
    }

    /// Matching tolerance `VALUE_TOL · (1 + ½‖S_Y‖²)`.
    pub fn match_tolerance(&self) -> f64 {
        defaults::VALUE_TOL * (1.0 + self.head())
    }

    /// Nearest entry `(index, |loss − value|)`; `AmbiguousMatch` when two
    /// entries lie within the matching tolerance.
    pub fn nearest(&self, loss: f64) -> Result<(usize, f64)> {
        let tol = self.match_tolerance();
        let mut best = (0, f64::INFINITY);
        let mut within: Vec<usize> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            let d = (loss - e.value).abs();
            if d < best.1 {
                best = (i, d);
            }
            if d <= tol {
                within.push(i);
            }
        }
        if within.len() > 1 {
            return Err(Error::AmbiguousMatch {
                loss,
                first: self.entries[within[0]].value,
                second: self.entries[within[1]].value,
            });
        }
        Ok(best)
    }

    /// Half the gap from entry `index` to the next lower level, or `None` at the tail.
    pub fn half_gap_below(&self, index: usize) -> Option<f64> {
        self.entries
            .get(index + 1)
            .map(|next| 0.5 * (self.entries[index].value - next.value))
    }

    /// Aligned text, one row per level.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:>5}  {:>3}  {:<16}  {:<16}  {:>24}\n",
            "index", "r", "fitted", "unfitted", "value"
        );
        for (i, e) in self.entries.iter().enumerate() {
            let fitted = e.unfitted.complement(self.d_y);
            out.push_str(&format!(
                "{:>5}  {:>3}  {:<16}  {:<16}  {:>24.16e}\n",
                i + 1,
                fitted.len(),
                fitted.to_string(),
                e.unfitted.to_string(),
                e.value
            ));
        }
        out
    }

    /// CSV with header `index,r,fitted,unfitted,value` (1-based index).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["index", "r", "fitted", "unfitted", "value"])?;
        for (i, e) in self.entries.iter().enumerate() {
            let fitted = e.unfitted.complement(self.d_y);
            wtr.write_record([
                (i + 1).to_string(),
                fitted.len().to_string(),
                fitted.to_string(),
                e.unfitted.to_string(),
                format!("{:?}", e.value),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Enumerates the critical values; fails when two of them are closer than
/// `CRITICAL_GAP_TOL · ½‖S_Y‖²`.
pub fn critical_values(s_y: &DVector<f64>) -> Result<CriticalValueTable> {
    if s_y.is_empty() || s_y.len() > 20 {
        return Err(Error::OutOfRange(format!("d_y = {} outside 1..=20", s_y.len())));
    }
    let sums = sorted_half_sums(s_y);
    let tol = defaults::CRITICAL_GAP_TOL * sums[0].1;
    for w in sums.windows(2) {
        if w[0].1 - w[1].1 <= tol {
            return Err(Error::DegenerateSpectrum(format!(
                "critical values of {} and {} differ by {:e}",
                w[0].0,
                w[1].0,
                w[0].1 - w[1].1
            )));
        }
    }
    Ok(CriticalValueTable {
        d_y: s_y.len(),
        entries: sums
            .into_iter()
            .map(|(unfitted, value)| CriticalEntry { unfitted, value })
            .collect(),
    })
}

/// Residuals of the necessary critical conditions, with `R = (ΠW)_2^{H+1}`:
/// `‖RᵀS_Y − RᵀRW_{1,1}‖`, `‖RW_{1,2}‖`, `‖RW_{1,1}S_Y − RW_{1,1}W_{1,1}ᵀRᵀ‖`,
/// together with the full gradient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConditions {
    pub kernel: f64,
    pub off_block: f64,
    pub symmetric: f64,
    pub grad_norm: f64,
}

impl CriticalConditions {
    pub fn max_residual(&self) -> f64 {
        self.kernel.max(self.off_block).max(self.symmetric)
    }

    /// All three residuals and the gradient norm are within `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.max_residual() <= tol && self.grad_norm <= tol
    }
}

pub fn verify_critical_conditions(w: &WeightTuple, s_y: &DVector<f64>) -> Result<CriticalConditions> {
    check_target(w, s_y)?;
    let top = w.depth() + 1;
    let r = product_range(w, 2, top);
    let (w11, w12) = w.split_first();
    let s = DMatrix::from_diagonal(s_y);
    let rw11 = &r * &w11;
    let kernel = (r.tr_mul(&s) - r.tr_mul(&rw11)).norm();
    let off_block = (&r * &w12).norm();
    let symmetric = (&rw11 * &s - &rw11 * rw11.transpose()).norm();
    let grad_norm = evaluate(w, s_y)?.gradient.norm();
    Ok(CriticalConditions {
        kernel,
        off_block,
        symmetric,
        grad_norm,
    })
}

/// Rank relative to the largest singular value; matrices whose largest
/// singular value is below `1e-10` count as zero.
fn classification_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = linalg::svd(m).s;
    if s[0] < 1e-10 {
        return 0;
    }
    linalg::numerical_rank(&s, defaults::CLASSIFY_RANK_TOL)
}

/// `Z = (ΠW)_2^H`, the identity of size `d_1` when `H = 1`.
pub(crate) fn z_product(w: &WeightTuple) -> DMatrix<f64> {
    product_range(w, 2, w.depth())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub grad_norm: f64,
    /// Rank of `R = (ΠW)_2^{H+1}`.
    pub r: usize,
    /// Rank of `Z = (ΠW)_2^H`.
    pub r_z: usize,
    /// Coordinates `i` with `|M_ii| <= FITTED_TOL · σ_i`.
    pub fitted_subset: Subset,
    pub loss: f64,
    /// 0-based index into the critical-value table.
    pub matched_index: usize,
    pub matched_value: f64,
    pub match_distance: f64,
    pub within_tolerance: bool,
    /// Largest off-diagonal magnitude of `M` (left `d_y × d_y` block and the right block).
    pub offdiag_max: f64,
    pub condition_residuals: CriticalConditions,
    /// `|fitted| = r`, the matched level is the one whose unfitted set is the
    /// complement of the fitted subset, and the match is within tolerance.
    pub consistent: bool,
}

impl CriticalPointReport {
    pub fn is_global_minimum(&self, d_y: usize) -> bool {
        self.consistent && self.r == d_y
    }
}

/// Classifies a (numerically) critical point.
pub fn classify_limit(
    w: &WeightTuple,
    s_y: &DVector<f64>,
    table: &CriticalValueTable,
) -> Result<CriticalPointReport> {
    let e = evaluate(w, s_y)?;
    let grad_norm = e.gradient.norm();
    if grad_norm > defaults::CLASSIFY_GRAD_THRESHOLD {
        return Err(Error::NotCritical {
            grad_norm,
            threshold: defaults::CLASSIFY_GRAD_THRESHOLD,
        });
    }
    let d_y = s_y.len();
    let top = w.depth() + 1;
    let r = classification_rank(&product_range(w, 2, top));
    let r_z = classification_rank(&z_product(w));
    let m = &e.residual;
    let fitted: Vec<usize> = (0..d_y)
        .filter(|&i| m[(i, i)].abs() <= defaults::FITTED_TOL * s_y[i])
        .collect();
    let fitted_subset = Subset::from_indices(&fitted);
    let mut offdiag_max = 0.0f64;
    for i in 0..d_y {
        for j in 0..m.ncols() {
            if i != j {
                offdiag_max = offdiag_max.max(m[(i, j)].abs());
            }
        }
    }
    let (matched_index, match_distance) = table.nearest(e.loss)?;
    let within_tolerance = match_distance <= table.match_tolerance();
    let consistent = within_tolerance
        && fitted_subset.len() == r
        && table.entries[matched_index].unfitted == fitted_subset.complement(d_y);
    Ok(CriticalPointReport {
        grad_norm,
        r,
        r_z,
        fitted_subset,
        loss: e.loss,
        matched_index,
        matched_value: table.value(matched_index),
        match_distance,
        within_tolerance,
        offdiag_max,
        condition_residuals: verify_critical_conditions(w, s_y)?,
        consistent,
    })
}

/// Blocks of a single-hidden-layer saddle, in permuted coordinates where the
/// fitted outputs come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleBlocks {
    /// Invertible `r × r` block of `W̃_{2,1} = [A | 0] V`.
    #[serde(with = "crate::io::rows")]
    pub a: DMatrix<f64>,
    /// Orthogonal `d_1 × d_1`.
    #[serde(with = "crate::io::rows")]
    pub v: DMatrix<f64>,
    /// `(d_1 − r) × r`, lower block of `V W̃_{1,1,1}`.
    #[serde(with = "crate::io::rows")]
    pub b2: DMatrix<f64>,
    /// `(d_1 − r) × (d_x − d_y)`, lower block of `V W_{1,2}`.
    #[serde(with = "crate::io::rows")]
    pub c2: DMatrix<f64>,
    /// `perm[k]` is the output coordinate placed at permuted position `k`:
    /// the fitted indices in increasing order, then the rest.
    pub perm: Vec<usize>,
    /// Fitted singular values in permuted order (the diagonal of `D_Y`).
    #[serde(with = "crate::io::vector")]
    pub d_y: DVector<f64>,
    /// Unfitted singular values in permuted order (the diagonal of `E_Y`).
    #[serde(with = "crate::io::vector")]
    pub e_y: DVector<f64>,
}

/// A constructed critical point fitting exactly `fitted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub weights: WeightTuple,
    pub fitted: Subset,
    pub r: usize,
    /// Present for `H = 1`.
    pub blocks: Option<SaddleBlocks>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaddleOptions {
    /// Sets the free blocks `B_2` and `C_2` (and their deep analogues) to zero.
    pub zero_free_blocks: bool,
}

/// Condition number above which a random block is redrawn.
const CONDITION_LIMIT: f64 = 100.0;

fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let s = linalg::svd(a).s;
    s[0] / s[s.len() - 1]
}

fn well_conditioned(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    for _ in 0..defaults::MAX_CONDITIONING_DRAWS {
        let a = gaussian_matrix(rows, cols, 1.0, rng);
        if condition_number(&a) <= CONDITION_LIMIT {
            return Ok(a);
        }
    }
    Err(Error::BadConditioning(defaults::MAX_CONDITIONING_DRAWS))
}

/// The fitted indices in increasing order followed by the unfitted ones.
fn fitted_first(fitted: Subset, d_y: usize) -> Vec<usize> {
    let mut p = fitted.indices();
    p.extend(fitted.complement(d_y).indices());
    p
}

/// Builds a critical point whose fitted coordinates are exactly `fitted`
/// and whose loss is `½Σ_{i∉fitted} σ_i²`. Deterministic in `seed`.
pub fn construct_saddle(
    s_y: &DVector<f64>,
    dims: &LayerDims,
    fitted: Subset,
    seed: u64,
    opts: SaddleOptions,
) -> Result<Saddle> {
    let d_y = s_y.len();
    if dims.d_y() != d_y {
        return Err(Error::ShapeMismatch(format!(
            "dims have d_y = {}, S_Y has {d_y} entries",
            dims.d_y()
        )));
    }
    dims.check_dimension_order()?;
    if !fitted.fits(d_y) {
        return Err(Error::OutOfRange(format!("subset {fitted} exceeds d_y = {d_y}")));
    }
    let r = fitted.len();
    if r >= d_y {
        return Err(Error::SubsetTooLarge { size: r, d_y });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let saddle = if dims.depth() == 1 {
        shallow_saddle(s_y, dims, fitted, &mut rng, opts)?
    } else {
        deep_saddle(s_y, dims, fitted, &mut rng, opts)?
    };
    let grad = evaluate(&saddle.weights, s_y)?.gradient.norm();
    let scale = 1.0 + s_y[0] * s_y[0];
    if grad > 1e-9 * scale {
        return Err(Error::BadConditioning(defaults::MAX_CONDITIONING_DRAWS));
    }
    Ok(saddle)
}

fn shallow_saddle(
    s_y: &DVector<f64>,
    dims: &LayerDims,
    fitted: Subset,
    rng: &mut ChaCha8Rng,
    opts: SaddleOptions,
) -> Result<Saddle> {
    let (d_x, d1, d_y) = (dims.d_x(), dims.width(1), dims.d_y());
    let r = fitted.len();
    let perm = fitted_first(fitted, d_y);
    let d_vals = DVector::from_iterator(r, perm[..r].iter().map(|&i| s_y[i]));
    let e_vals = DVector::from_iterator(d_y - r, perm[r..].iter().map(|&i| s_y[i]));

    let mut a = well_conditioned(r, r, rng)?;
    if r > 0 {
        // balance A against A⁻¹D: geometric mean of σ(A) becomes √(geometric mean of D)
        let log_mean = |v: &DVector<f64>| v.iter().map(|x| x.ln()).sum::<f64>() / r as f64;
        a *= (0.5 * log_mean(&d_vals) - log_mean(&linalg::svd(&a).s)).exp();
    }
    let v = random_orthogonal(d1, rng);
    let mut b2 = gaussian_matrix(d1 - r, r, 1.0, rng);
    let mut c2 = gaussian_matrix(d1 - r, d_x - d_y, 1.0, rng);
    if opts.zero_free_blocks {
        b2.fill(0.0);
        c2.fill(0.0);
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::BadConditioning(1))?;
    let b1 = &a_inv * DMatrix::from_diagonal(&d_vals);

    // permuted blocks
    let mut a0 = DMatrix::zeros(r, d1);
    a0.view_mut((0, 0), (r, r)).copy_from(&a);
    let w21 = &a0 * &v;
    let mut b = DMatrix::zeros(d1, r);
    b.view_mut((0, 0), (r, r)).copy_from(&b1);
    b.view_mut((r, 0), (d1 - r, r)).copy_from(&b2);
    let w111 = v.tr_mul(&b);
    let mut c = DMatrix::zeros(d1, d_x - d_y);
    c.view_mut((r, 0), (d1 - r, d_x - d_y)).copy_from(&c2);
    let w12 = v.tr_mul(&c);

    let mut w2 = DMatrix::zeros(d_y, d1);
    let mut w1 = DMatrix::zeros(d1, d_x);
    for k in 0..r {
        w2.row_mut(perm[k]).copy_from(&w21.row(k));
        w1.column_mut(perm[k]).copy_from(&w111.column(k));
    }
    w1.view_mut((0, d_y), (d1, d_x - d_y)).copy_from(&w12);

    Ok(Saddle {
        weights: WeightTuple::new(vec![w1, w2])?,
        fitted,
        r,
        blocks: Some(SaddleBlocks {
            a,
            v,
            b2,
            c2,
            perm,
            d_y: d_vals,
            e_y: e_vals,
        }),
    })
}

/// Deep construction: random full-rank middle layers `W_2..W_H`, output
/// layer with zero unfitted rows and random fitted rows, and first layer
/// solving `G W_{1,1,S} = D_Y` with `G = W_{H+1,S} Z` through the
/// pseudo-inverse, plus null-space components of `G`.
fn deep_saddle(
    s_y: &DVector<f64>,
    dims: &LayerDims,
    fitted: Subset,
    rng: &mut ChaCha8Rng,
    opts: SaddleOptions,
) -> Result<Saddle> {
    let h = dims.depth();
    let (d_x, d1, d_y, d_h) = (dims.d_x(), dims.width(1), dims.d_y(), dims.width(h));
    let r = fitted.len();
    let idx = fitted.indices();

    let mut layers: Vec<DMatrix<f64>> = Vec::with_capacity(h + 1);
    layers.push(DMatrix::zeros(d1, d_x));
    for j in 2..=h {
        let (rows, cols) = (dims.width(j), dims.width(j - 1));
        layers.push(well_conditioned(rows, cols, rng)?.scale(1.0 / (cols as f64).sqrt()));
    }
    let top_rows = well_conditioned(r, d_h, rng)?;
    let mut top = DMatrix::zeros(d_y, d_h);
    for (k, &i) in idx.iter().enumerate() {
        top.row_mut(i).copy_from(&top_rows.row(k));
    }
    layers.push(top);

    let mut z = DMatrix::identity(d1, d1);
    for l in &layers[1..h] {
        z = l * z;
    }
    let g = &top_rows * &z;
    let g_pinv = if r == 0 {
        DMatrix::zeros(d1, 0)
    } else {
        g.clone()
            .pseudo_inverse(1e-12)
            .map_err(|_| Error::BadConditioning(1))?
    };
    let proj = DMatrix::identity(d1, d1) - &g_pinv * &g;
    let d_mat = DMatrix::from_diagonal(&DVector::from_iterator(r, idx.iter().map(|&i| s_y[i])));
    let mut n = gaussian_matrix(d1, r, 1.0, rng);
    let mut c = gaussian_matrix(d1, d_x - d_y, 1.0, rng);
    if opts.zero_free_blocks {
        n.fill(0.0);
        c.fill(0.0);
    }
    let w111 = &g_pinv * d_mat + &proj * n;
    let w12 = &proj * c;
    let w1 = &mut layers[0];
    for (k, &i) in idx.iter().enumerate() {
        w1.column_mut(i).copy_from(&w111.column(k));
    }
    w1.view_mut((0, d_y), (d1, d_x - d_y)).copy_from(&w12);

    Ok(Saddle {
        weights: WeightTuple::new(layers)?,
        fitted,
        r,
        blocks: None,
    })
}

/// Dimension `d(r) = r(2d_1 − r) + (d_1 − r)(d_x − d_y)` of the stratum of
/// single-hidden-layer critical points of rank `r`: the number of free
/// variations `(a_1, a_2, b_2, c_2)` at a point of the stratum.
pub fn stratum_dimension(r: usize, dims: &LayerDims) -> Result<usize> {
    let (d_x, d1, d_y) = check_stratum_args(r, dims)?;
    Ok(r * (2 * d1 - r) + (d1 - r) * (d_x - d_y))
}

/// The alternative count `r·d_1 + (d_y − r)r + (d_y − r)(d_x − d_y)`, kept for
/// comparison reports; it disagrees with the free-variation count.
pub fn naive_stratum_dimension(r: usize, dims: &LayerDims) -> Result<usize> {
    let (d_x, d1, d_y) = check_stratum_args(r, dims)?;
    Ok(r * d1 + (d_y - r) * r + (d_y - r) * (d_x - d_y))
}

fn check_stratum_args(r: usize, dims: &LayerDims) -> Result<(usize, usize, usize)> {
    if dims.depth() != 1 {
        return Err(Error::OutOfRange(format!(
            "stratum dimension is defined for one hidden layer, got H = {}",
            dims.depth()
        )));
    }
    dims.check_dimension_order()?;
    let (d_x, d1, d_y) = (dims.d_x(), dims.width(1), dims.d_y());
    if r >= d_y {
        return Err(Error::OutOfRange(format!("r = {r} must be below d_y = {d_y}")));
    }
    Ok((d_x, d1, d_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::loss;

    fn s21() -> DVector<f64> {
        DVector::from_vec(vec![2.0, 1.0])
    }

    fn dims(out_first: &[usize]) -> LayerDims {
        LayerDims::from_output_first(out_first).unwrap()
    }

    #[test]
    fn subset_text_round_trip() {
        let s: Subset = "{1,3}".parse().unwrap();
        assert_eq!(s.indices(), vec![0, 2]);
        assert_eq!(s.to_string(), "{1,3}");
        assert_eq!("{}".parse::<Subset>().unwrap(), Subset::EMPTY);
        assert_eq!("2".parse::<Subset>().unwrap(), Subset::from_indices(&[1]));
        assert!("{0}".parse::<Subset>().is_err());
        assert_eq!(s.complement(3), Subset::from_indices(&[1]));
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"{1,3}\"");
    }

    #[test]
    fn table_for_two_and_one() {
        let t = critical_values(&s21()).unwrap();
        let vals: Vec<f64> = t.entries.iter().map(|e| e.value).collect();
        assert_eq!(vals, vec![2.5, 2.0, 0.5, 0.0]);
        let keys: Vec<String> = t.entries.iter().map(|e| e.unfitted.to_string()).collect();
        assert_eq!(keys, vec!["{1,2}", "{1}", "{2}", "{}"]);
        let t = critical_values(&DVector::from_vec(vec![3.0])).unwrap();
        assert_eq!(t.entries.iter().map(|e| e.value).collect::<Vec<_>>(), vec![4.5, 0.0]);
    }

    #[test]
    fn colliding_values_are_degenerate() {
        let s = DVector::from_vec(vec![5f64.sqrt(), 2.0, 1.0]);
        assert!(matches!(critical_values(&s), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn table_text_and_csv() {
        let t = critical_values(&s21()).unwrap();
        assert_eq!(t.to_text().lines().count(), 5);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,r,fitted,unfitted,value\n1,0,{},\"{1,2}\",2.5\n"));
    }

    #[test]
    fn origin_is_critical_and_classified() {
        let w = WeightTuple::zeros(&dims(&[2, 3, 4]));
        let c = verify_critical_conditions(&w, &s21()).unwrap();
        assert_eq!(c.max_residual(), 0.0);
        let t = critical_values(&s21()).unwrap();
        let rep = classify_limit(&w, &s21(), &t).unwrap();
        assert_eq!(rep.r, 0);
        assert_eq!(rep.r_z, 3);
        assert!(rep.fitted_subset.is_empty());
        assert_eq!(rep.matched_index, 0);
        assert_eq!(rep.loss, 2.5);
        assert!(rep.consistent);
    }

    #[test]
    fn not_critical_is_rejected() {
        let w = WeightTuple::new(vec![
            DMatrix::from_element(3, 4, 0.3),
            DMatrix::from_element(2, 3, 0.2),
        ])
        .unwrap();
        let t = critical_values(&s21()).unwrap();
        assert!(matches!(classify_limit(&w, &s21(), &t), Err(Error::NotCritical { .. })));
    }

    #[test]
    fn shallow_saddles_for_each_subset() {
        let t = critical_values(&s21()).unwrap();
        for (text, expect) in [("{}", 2.5), ("{1}", 0.5), ("{2}", 2.0)] {
            let fitted: Subset = text.parse().unwrap();
            let s = construct_saddle(&s21(), &dims(&[2, 3, 4]), fitted, 9, SaddleOptions::default())
                .unwrap();
            let l = loss(&s.weights, &s21()).unwrap();
            assert!((l - expect).abs() < 1e-12, "{text}: {l}");
            let c = verify_critical_conditions(&s.weights, &s21()).unwrap();
            assert!(c.holds(1e-10), "{c:?}");
            let rep = classify_limit(&s.weights, &s21(), &t).unwrap();
            assert_eq!(rep.r, fitted.len());
            assert_eq!(rep.fitted_subset, fitted);
            assert!(rep.consistent);
            assert!(rep.r_z >= rep.r);
        }
    }

    #[test]
    fn zeroed_empty_saddle_is_origin() {
        let s = construct_saddle(
            &s21(),
            &dims(&[2, 3, 4]),
            Subset::EMPTY,
            1,
            SaddleOptions {
                zero_free_blocks: true,
            },
        )
        .unwrap();
        assert_eq!(s.weights.norm(), 0.0);
    }

    #[test]
    fn kernel_identity_on_shallow_saddle() {
        // ker W_2ᵀ = ker (W_2 W_{1,1})ᵀ
        let s = construct_saddle(
            &s21(),
            &dims(&[2, 3, 4]),
            "{2}".parse().unwrap(),
            4,
            SaddleOptions::default(),
        )
        .unwrap();
        let w2 = s.weights.layer(2);
        let (w11, _) = s.weights.split_first();
        let k1 = linalg::null_space(&w2.transpose(), 1e-10);
        let k2 = linalg::null_space(&(w2 * w11).transpose(), 1e-10);
        assert_eq!(k1.ncols(), 1);
        assert!(linalg::max_principal_angle_sin(&k1, &k2) < 1e-8);
    }

    #[test]
    fn deep_saddles() {
        let s = DVector::from_vec(vec![3.0, 2.0, 1.0]);
        let t = critical_values(&s).unwrap();
        let d = dims(&[3, 4, 4, 5]);
        for mask in 0..7u64 {
            let fitted = Subset::from_mask(mask);
            let sad = construct_saddle(&s, &d, fitted, mask, SaddleOptions::default()).unwrap();
            let rep = classify_limit(&sad.weights, &s, &t).unwrap();
            assert_eq!(rep.fitted_subset, fitted);
            assert_eq!(rep.r, fitted.len());
            assert!(rep.r_z > rep.r);
            assert!(rep.consistent, "{rep:?}");
            assert!(rep.condition_residuals.holds(1e-10));
        }
    }

    #[test]
    fn saddle_errors() {
        let d = dims(&[2, 3, 4]);
        assert!(matches!(
            construct_saddle(&s21(), &d, Subset::full(2), 0, SaddleOptions::default()),
            Err(Error::SubsetTooLarge { .. })
        ));
    }

    #[test]
    fn stratum_dimensions() {
        let d = dims(&[2, 3, 4]);
        assert_eq!(stratum_dimension(0, &d).unwrap(), 6);
        assert_eq!(stratum_dimension(1, &d).unwrap(), 9);
        assert!(stratum_dimension(2, &d).is_err());
        assert_eq!(naive_stratum_dimension(0, &d).unwrap(), 4);
        assert!(stratum_dimension(0, &dims(&[2, 3, 3, 4])).is_err());
    }
}
