//! Integration of the gradient flow `Ξ̇ = −∇L(Ξ)`, conservation monitoring,
//! exponential-rate preconditions and empirical rate fits.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::linalg::fit_line;
use crate::network::{check_target, evaluate, LayerDims, WeightTuple};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with per-component error control.
    Rk45 {
        abs_tol: f64,
        rel_tol: f64,
        initial_step: f64,
    },
    /// Explicit gradient descent `W ← W − η∇L`, time advancing by `η` per step.
    /// The invariants are not conserved in this mode.
    Discrete { learning_rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_max: f64,
    pub grad_stop: f64,
    /// Record every k-th accepted step (initial and terminal points are always recorded).
    pub snapshot_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45 {
                abs_tol: defaults::ABS_TOL,
                rel_tol: defaults::REL_TOL,
                initial_step: defaults::INITIAL_STEP,
            },
            t_max: defaults::T_MAX,
            grad_stop: defaults::GRAD_STOP,
            snapshot_stride: defaults::SNAPSHOT_STRIDE,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4 { step },
            ..Self::default()
        }
    }

    pub fn discrete(learning_rate: f64) -> Self {
        Self {
            method: Method::Discrete { learning_rate },
            ..Self::default()
        }
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_grad_stop(mut self, grad_stop: f64) -> Self {
        self.grad_stop = grad_stop;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self.method {
            Method::Rk4 { step } => pos("step", step)?,
            Method::Rk45 {
                abs_tol,
                rel_tol,
                initial_step,
            } => {
                pos("abs_tol", abs_tol)?;
                pos("rel_tol", rel_tol)?;
                pos("initial_step", initial_step)?;
            }
            Method::Discrete { learning_rate } => pos("learning_rate", learning_rate)?,
        }
        pos("t_max", self.t_max)?;
        pos("grad_stop", self.grad_stop)?;
        if self.snapshot_stride == 0 {
            return Err(Error::ConfigInvalid("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether the invariants are conserved by the exact dynamics this method approximates.
    pub fn conserves_invariants(&self) -> bool {
        !matches!(self.method, Method::Discrete { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Horizon,
    Diverged,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Horizon => "horizon",
            StopReason::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub weights: WeightTuple,
}

/// Recorded solution of the flow.
///
/// Row `k` of the record holds `times[k]`, `losses[k]`, `grad_norms[k]` and
/// `drifts[k][j-1]`, the relative deviation of `C_j` from its initial value;
/// `snapshots[k]` holds the state at the same time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub drifts: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub terminal: WeightTuple,
    pub stop_reason: StopReason,
    /// False for discrete gradient descent.
    pub conserved: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().unwrap()
    }

    /// Writes `t,loss,grad_norm,drift_1..drift_H`. In discrete mode the drift
    /// headers carry a `_nonconserved` suffix.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let h = self.terminal.depth();
        let suffix = if self.conserved { "" } else { "_nonconserved" };
        let mut header = vec!["t".to_string(), "loss".into(), "grad_norm".into()];
        header.extend((1..=h).map(|j| format!("drift_{j}{suffix}")));
        wtr.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![
                format!("{:?}", self.times[k]),
                format!("{:?}", self.losses[k]),
                format!("{:?}", self.grad_norms[k]),
            ];
            row.extend(self.drifts[k].iter().map(|d| format!("{d:?}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `C_j = W_{j+1}ᵀW_{j+1} − W_jW_jᵀ` for `j = 1..H`.
pub fn invariants(w: &WeightTuple) -> Vec<DMatrix<f64>> {
    let l = w.layers();
    (0..w.depth())
        .map(|i| l[i + 1].tr_mul(&l[i + 1]) - &l[i] * l[i].transpose())
        .collect()
}

fn relative_drifts(w: &WeightTuple, c0: &[DMatrix<f64>]) -> Vec<f64> {
    invariants(w)
        .iter()
        .zip(c0)
        .map(|(c, c0)| (c - c0).norm() / (1.0 + c0.norm()))
        .collect()
}

/// Maximum over snapshots of `‖C_j(t) − C_j(0)‖_F / (1 + ‖C_j(0)‖_F)`, per `j`.
///
/// A run started at an equilibrium stops at `t = 0` with a single snapshot;
/// its drift is zero.
pub fn invariant_drift(traj: &Trajectory) -> Result<Vec<f64>> {
    let first = traj
        .snapshots
        .first()
        .ok_or(Error::TooFewSnapshots(0))?;
    let c0 = invariants(&first.weights);
    let mut out = vec![0.0f64; c0.len()];
    for s in &traj.snapshots[1..] {
        for (o, d) in out.iter_mut().zip(relative_drifts(&s.weights, &c0)) {
            *o = o.max(d);
        }
    }
    Ok(out)
}

/// Drift of `‖W_j‖²_F − ‖W_{H+1}‖²_F` for `j = 1..H`, relative to `1 + |c_j(0)|`.
pub fn norm_invariant_drift(traj: &Trajectory) -> Result<Vec<f64>> {
    let c = |w: &WeightTuple| -> Vec<f64> {
        let l = w.layers();
        let top = l.last().unwrap().norm_squared();
        l[..l.len() - 1].iter().map(|m| m.norm_squared() - top).collect()
    };
    let first = traj
        .snapshots
        .first()
        .ok_or(Error::TooFewSnapshots(0))?;
    let c0 = c(&first.weights);
    let mut out = vec![0.0f64; c0.len()];
    for s in &traj.snapshots[1..] {
        for ((o, now), start) in out.iter_mut().zip(c(&s.weights)).zip(&c0) {
            *o = f64::max(*o, (now - start).abs() / (1.0 + start.abs()));
        }
    }
    Ok(out)
}

/// Vector field evaluated on flat states.
struct Field {
    dims: LayerDims,
    s_y: DVector<f64>,
}

impl Field {
    /// Writes `−∇L(y)` to `out`; returns `(L, ‖∇L‖)`.
    fn eval(&self, y: &[f64], out: &mut [f64]) -> (f64, f64) {
        let w = WeightTuple::from_flat(&self.dims, y).expect("flat length fixed by dims");
        let e = evaluate(&w, &self.s_y).expect("shapes checked at entry");
        e.gradient.write_flat(out);
        for v in out.iter_mut() {
            *v = -*v;
        }
        (e.loss, e.gradient.norm())
    }
}

struct Recorder {
    dims: LayerDims,
    c0: Vec<DMatrix<f64>>,
    stride: usize,
    traj_times: Vec<f64>,
    losses: Vec<f64>,
    grad_norms: Vec<f64>,
    drifts: Vec<Vec<f64>>,
    snapshots: Vec<Snapshot>,
}

impl Recorder {
    fn new(w0: &WeightTuple, stride: usize) -> Self {
        Self {
            dims: w0.dims(),
            c0: invariants(w0),
            stride,
            traj_times: Vec::new(),
            losses: Vec::new(),
            grad_norms: Vec::new(),
            drifts: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, y: &[f64], loss: f64, grad_norm: f64) {
        let w = WeightTuple::from_flat(&self.dims, y).expect("flat length fixed by dims");
        self.traj_times.push(t);
        self.losses.push(loss);
        self.grad_norms.push(grad_norm);
        self.drifts.push(relative_drifts(&w, &self.c0));
        self.snapshots.push(Snapshot { t, weights: w });
    }

    fn on_step(&mut self, step: usize, t: f64, y: &[f64], loss: f64, grad_norm: f64) {
        if step % self.stride == 0 {
            self.push(t, y, loss, grad_norm);
        }
    }

    fn finish(
        mut self,
        t: f64,
        y: &[f64],
        loss: f64,
        grad_norm: f64,
        stop_reason: StopReason,
        conserved: bool,
        steps: (usize, usize),
    ) -> Trajectory {
        if self.traj_times.last() != Some(&t) {
            self.push(t, y, loss, grad_norm);
        }
        let terminal = self.snapshots.last().unwrap().weights.clone();
        Trajectory {
            times: self.traj_times,
            losses: self.losses,
            grad_norms: self.grad_norms,
            drifts: self.drifts,
            snapshots: self.snapshots,
            terminal,
            stop_reason,
            conserved,
            accepted_steps: steps.0,
            rejected_steps: steps.1,
        }
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrates the flow from `w0` until `‖∇L‖_F <= grad_stop` or `t = t_max`.
///
/// Continuous methods fail with `NonFiniteState` on overflow; discrete
/// gradient descent instead stops with [`StopReason::Diverged`].
pub fn integrate(w0: &WeightTuple, s_y: &DVector<f64>, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_target(w0, s_y)?;
    if !w0.is_finite() {
        return Err(Error::NonFiniteState { t: 0.0 });
    }
    let field = Field {
        dims: w0.dims(),
        s_y: s_y.clone(),
    };
    match cfg.method {
        Method::Rk45 {
            abs_tol,
            rel_tol,
            initial_step,
        } => rk45(&field, w0, cfg, abs_tol, rel_tol, initial_step),
        Method::Rk4 { step } => rk4(&field, w0, cfg, step),
        Method::Discrete { learning_rate } => discrete(&field, w0, cfg, learning_rate),
    }
}

// Dormand–Prince 5(4) tableau.
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// B minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn rk45(
    field: &Field,
    w0: &WeightTuple,
    cfg: &IntegratorConfig,
    abs_tol: f64,
    rel_tol: f64,
    initial_step: f64,
) -> Result<Trajectory> {
    let n = w0.len_flat();
    let mut y = w0.flatten().as_slice().to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut rec = Recorder::new(w0, cfg.snapshot_stride);

    let (mut loss, mut gnorm) = field.eval(&y, &mut k[0]);
    rec.push(0.0, &y, loss, gnorm);
    let mut t = 0.0;
    let mut h = initial_step.min(cfg.t_max);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    // Near a critical point the step is stability-limited and the stiff
    // components settle at the tolerance level, which puts a floor under
    // the gradient norm. Tighten while the stop is in sight.

    loop {
        if gnorm <= cfg.grad_stop {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Converged, true, (accepted, rejected)));
        }
        let tol_factor = if gnorm <= defaults::POLISH_ONSET * cfg.grad_stop {
            defaults::POLISH_TOL_FACTOR
        } else {
            1.0
        };
        if t >= cfg.t_max {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Horizon, true, (accepted, rejected)));
        }
        let remaining = cfg.t_max - t;
        let clamped = h >= remaining;
        let h_try = if clamped { remaining } else { h };

        {
            let (k0, rest) = k.split_at_mut(1);
            axpy_into(&mut tmp, &y, h_try, &[(A2[0], &k0[0])]);
            field.eval(&tmp, &mut rest[0]);
        }
        for s in 2..6 {
            let (done, rest) = k.split_at_mut(s);
            let coeffs: &[f64] = match s {
                2 => &A3,
                3 => &A4,
                4 => &A5,
                _ => &A6,
            };
            let terms: Vec<(f64, &[f64])> = coeffs
                .iter()
                .zip(done.iter())
                .map(|(&c, kk)| (c, kk.as_slice()))
                .collect();
            axpy_into(&mut tmp, &y, h_try, &terms);
            field.eval(&tmp, &mut rest[0]);
        }
        {
            let (done, rest) = k.split_at_mut(6);
            let terms: Vec<(f64, &[f64])> = B
                .iter()
                .zip(done.iter())
                .map(|(&c, kk)| (c, kk.as_slice()))
                .collect();
            axpy_into(&mut y_new, &y, h_try, &terms);
            let (l7, g7) = field.eval(&y_new, &mut rest[0]);
            loss = l7;
            gnorm = g7;
        }

        let mut acc = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, kk) in k.iter().enumerate() {
                e += E[s] * kk[i];
            }
            let scale = tol_factor * (abs_tol + rel_tol * y[i].abs().max(y_new[i].abs()));
            let r = h_try * e / scale;
            acc += r * r;
        }
        let err = (acc / n as f64).sqrt();

        if err.is_finite() && err <= 1.0 && all_finite(&y_new) {
            t += h_try;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            accepted += 1;
            rec.on_step(accepted, t, &y, loss, gnorm);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposal = h_try * factor;
            h = if clamped { h.max(proposal) } else { proposal };
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h = h_try * factor;
            if h < defaults::MIN_STEP {
                return Err(Error::StepUnderflow { t, h });
            }
            // restore the loss/gradient norm at the current point
            let (l, g) = field.eval(&y, &mut k[0]);
            loss = l;
            gnorm = g;
        }
    }
}

fn rk4(field: &Field, w0: &WeightTuple, cfg: &IntegratorConfig, step: f64) -> Result<Trajectory> {
    let n = w0.len_flat();
    let mut y = w0.flatten().as_slice().to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut rec = Recorder::new(w0, cfg.snapshot_stride);
    let mut t = 0.0;
    let mut steps = 0usize;
    loop {
        let (loss, gnorm) = field.eval(&y, &mut k1);
        if steps == 0 {
            rec.push(0.0, &y, loss, gnorm);
        } else {
            rec.on_step(steps, t, &y, loss, gnorm);
        }
        if gnorm <= cfg.grad_stop {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Converged, true, (steps, 0)));
        }
        if t >= cfg.t_max {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Horizon, true, (steps, 0)));
        }
        let h = step.min(cfg.t_max - t);
        axpy_into(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
        field.eval(&tmp, &mut k2);
        axpy_into(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
        field.eval(&tmp, &mut k3);
        axpy_into(&mut tmp, &y, h, &[(1.0, &k3)]);
        field.eval(&tmp, &mut k4);
        let yc = y.clone();
        axpy_into(
            &mut y,
            &yc,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        );
        // the last step lands exactly on the horizon
        t = if h < step { cfg.t_max } else { t + h };
        steps += 1;
        if !all_finite(&y) {
            return Err(Error::NonFiniteState { t });
        }
    }
}

fn discrete(field: &Field, w0: &WeightTuple, cfg: &IntegratorConfig, lr: f64) -> Result<Trajectory> {
    let n = w0.len_flat();
    let mut y = w0.flatten().as_slice().to_vec();
    let mut g = vec![0.0; n];
    let mut rec = Recorder::new(w0, cfg.snapshot_stride);
    let max_steps = (cfg.t_max / lr).ceil() as usize;
    let mut steps = 0usize;
    loop {
        let t = steps as f64 * lr;
        let (loss, gnorm) = field.eval(&y, &mut g);
        if !(loss.is_finite() && gnorm.is_finite() && all_finite(&y)) {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Diverged, false, (steps, 0)));
        }
        if steps == 0 {
            rec.push(0.0, &y, loss, gnorm);
        } else {
            rec.on_step(steps, t, &y, loss, gnorm);
        }
        if gnorm <= cfg.grad_stop {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Converged, false, (steps, 0)));
        }
        if steps >= max_steps {
            return Ok(rec.finish(t, &y, loss, gnorm, StopReason::Horizon, false, (steps, 0)));
        }
        for (yi, gi) in y.iter_mut().zip(&g) {
            *yi += lr * gi;
        }
        steps += 1;
    }
}

/// Sorted (nondecreasing) eigenvalues of a symmetric matrix.
pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Rate predictions from the initial invariants when the exponential
/// preconditions hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialPrediction {
    /// `Π_{l=1}^{H} λ_{d_l − d_{l+1} + 1}(C_l)`, eigenvalues in nondecreasing order.
    pub alpha: f64,
    /// The factors `λ_{d_l − d_{l+1} + 1}(C_l)`.
    pub factors: Vec<f64>,
    /// `λ_{d_{j+1}}(C_j)` for each `j`: the single-layer reading of the rate.
    pub single_layer: Vec<f64>,
}

/// Returns a prediction iff `d_1 >= … >= d_H` and each `C_j` has at least
/// `d_{j+1}` positive eigenvalues (with `d_{H+1} = d_y`).
pub fn check_exponential_preconditions(w0: &WeightTuple) -> Option<ExponentialPrediction> {
    let dims = w0.dims();
    let h = dims.depth();
    if dims.hidden().windows(2).any(|p| p[0] < p[1]) {
        return None;
    }
    let mut factors = Vec::with_capacity(h);
    let mut single_layer = Vec::with_capacity(h);
    for (j, c) in invariants(w0).iter().enumerate() {
        let d_j = dims.width(j + 1);
        let d_next = dims.width(j + 2);
        let ev = sorted_eigenvalues(c);
        let scale = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let positive = ev.iter().filter(|&&l| l > defaults::RANK_TOL * scale).count();
        if scale == 0.0 || positive < d_next || d_next > d_j {
            return None;
        }
        factors.push(ev[d_j - d_next]);
        single_layer.push(ev[d_next - 1]);
    }
    Some(ExponentialPrediction {
        alpha: factors.iter().product(),
        factors,
        single_layer,
    })
}

/// Checks `L(t_{k+1}) <= L(t_k)·exp(−2α(1 − slack)(t_{k+1} − t_k))` between
/// consecutive records of the decay window. Returns the largest violation of
/// the log ratio (nonpositive when the bound holds). Records with loss below
/// `1e-280` are skipped.
pub fn exponential_bound_violation(traj: &Trajectory, alpha: f64, slack: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..decay_window(&traj.losses, 0.0).saturating_sub(1) {
        let (l0, l1) = (traj.losses[k], traj.losses[k + 1]);
        if l0 < 1e-280 || l1 < 1e-280 {
            continue;
        }
        let dt = traj.times[k + 1] - traj.times[k];
        let v = (l1 / l0).ln() + 2.0 * alpha * (1.0 - slack) * dt;
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Exponential,
    Polynomial,
    Undetermined,
}

/// A line fit in the log domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub kind: RateKind,
    /// `α` in `exp(−2αt)` or the exponent in `t^{−α}`.
    pub rate: f64,
    pub fit_quality: f64,
    pub exponential: Option<DecayFit>,
    pub polynomial: Option<DecayFit>,
    pub points: usize,
    /// Predicted rates from the initial state, when the preconditions hold.
    pub prediction: Option<ExponentialPrediction>,
}

/// Fits the decay of `L(t) − L∞` on the tail half of a record.
///
/// `terminal_loss` should be the exact critical value the run converged to
/// (the numerical terminal loss itself sits at the noise floor).
pub fn fit_rate(traj: &Trajectory, terminal_loss: f64) -> Result<RateEstimate> {
    let mut est = fit_rate_samples(&traj.times, &traj.losses, terminal_loss)?;
    est.prediction = traj
        .snapshots
        .first()
        .and_then(|s| check_exponential_preconditions(&s.weights));
    Ok(est)
}

/// Length of the usable decay record: it ends where the loss first
/// increases (the exact flow is monotone, so an increase marks the
/// integrator's noise floor) or where `L − L∞` drops below
/// `FIT_NOISE_FLOOR` times its largest value.
pub fn decay_window(losses: &[f64], terminal_loss: f64) -> usize {
    let top = losses.iter().fold(0.0f64, |m, &l| m.max(l - terminal_loss));
    let floor = defaults::FIT_NOISE_FLOOR * top;
    let mut n = losses.len();
    for k in 1..losses.len() {
        if losses[k] > losses[k - 1] {
            n = k;
            break;
        }
        if losses[k] - terminal_loss < floor {
            n = k;
            break;
        }
    }
    n
}

/// Fits `ln(L − L∞)` against `t` and against `ln t` over the tail of the
/// decay window: the samples in the lower half of its log-loss span, or the
/// last `FIT_MIN_POINTS` samples if that half is thinner.
pub fn fit_rate_samples(times: &[f64], losses: &[f64], terminal_loss: f64) -> Result<RateEstimate> {
    let n = decay_window(losses, terminal_loss).min(times.len());
    let floor = 1e-12 * terminal_loss.abs() + 1e-24;
    let samples: Vec<(f64, f64)> = (0..n)
        .filter(|&k| losses[k] - terminal_loss > floor && times[k] > 0.0)
        .map(|k| (times[k], (losses[k] - terminal_loss).ln()))
        .collect();
    let tail: Vec<(f64, f64)> = match (samples.first(), samples.last()) {
        (Some(&(_, hi)), Some(&(_, lo))) => {
            let mid = 0.5 * (hi + lo);
            let lower: Vec<_> = samples.iter().copied().filter(|s| s.1 <= mid).collect();
            if lower.len() >= defaults::FIT_MIN_POINTS {
                lower
            } else {
                samples[samples.len().saturating_sub(defaults::FIT_MIN_POINTS)..].to_vec()
            }
        }
        _ => Vec::new(),
    };
    let (ts, ls): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
    if ts.len() < defaults::FIT_MIN_POINTS {
        return Err(Error::InsufficientDecay(format!(
            "{} usable points above the noise floor, need {}",
            ts.len(),
            defaults::FIT_MIN_POINTS
        )));
    }
    let exp = fit_line(&ts, &ls).map(|f| DecayFit {
        rate: -f.slope / 2.0,
        r_squared: f.r_squared,
    });
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let poly = fit_line(&log_t, &ls).map(|f| DecayFit {
        rate: -f.slope,
        r_squared: f.r_squared,
    });
    let best = match (exp, poly) {
        (Some(e), Some(p)) => {
            if e.r_squared >= p.r_squared {
                (RateKind::Exponential, e)
            } else {
                (RateKind::Polynomial, p)
            }
        }
        (Some(e), None) => (RateKind::Exponential, e),
        (None, Some(p)) => (RateKind::Polynomial, p),
        (None, None) => {
            return Err(Error::InsufficientDecay("degenerate sample times".into()));
        }
    };
    let kind = if best.1.r_squared < defaults::FIT_QUALITY_MIN {
        RateKind::Undetermined
    } else {
        best.0
    };
    Ok(RateEstimate {
        kind,
        rate: best.1.rate,
        fit_quality: best.1.r_squared,
        exponential: exp,
        polynomial: poly,
        points: ts.len(),
        prediction: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(w1: f64, w2: f64) -> WeightTuple {
        WeightTuple::new(vec![
            DMatrix::from_element(1, 1, w1),
            DMatrix::from_element(1, 1, w2),
        ])
        .unwrap()
    }

    #[test]
    fn equilibrium_does_not_move() {
        let s = DVector::from_vec(vec![2.0, 1.0]);
        let w = WeightTuple::new(vec![
            DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DMatrix::identity(2, 2),
        ])
        .unwrap();
        let tr = integrate(&w, &s, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        assert_eq!(tr.accepted_steps, 0);
        assert_eq!(tr.terminal, w);
        assert_eq!(invariant_drift(&tr).unwrap(), vec![0.0]);

        let zero = WeightTuple::zeros(&w.dims());
        let tr = integrate(&zero, &s, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.terminal, zero);
        assert_eq!(tr.stop_reason, StopReason::Converged);
    }

    /// Independent fixed-step RK4 on the scalar system
    /// `ẇ1 = w2(σ − w2w1)`, `ẇ2 = w1(σ − w2w1)`.
    fn reference_scalar(mut w1: f64, mut w2: f64, sigma: f64, t: f64, h: f64) -> (f64, f64) {
        let f = |a: f64, b: f64| {
            let m = sigma - a * b;
            (b * m, a * m)
        };
        let steps = (t / h).round() as usize;
        for _ in 0..steps {
            let k1 = f(w1, w2);
            let k2 = f(w1 + 0.5 * h * k1.0, w2 + 0.5 * h * k1.1);
            let k3 = f(w1 + 0.5 * h * k2.0, w2 + 0.5 * h * k2.1);
            let k4 = f(w1 + h * k3.0, w2 + h * k3.1);
            w1 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            w2 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (w1, w2)
    }

    #[test]
    fn scalar_problem_converges_and_matches_reference() {
        let s = DVector::from_vec(vec![1.5]);
        let w0 = scalar(0.3, -0.2);
        let tr = integrate(&w0, &s, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        assert!(tr.final_loss() < 1e-12);
        let p = tr.terminal.layer(2)[(0, 0)] * tr.terminal.layer(1)[(0, 0)];
        assert!((p - 1.5).abs() < 1e-6);

        let short = IntegratorConfig::default().with_t_max(2.0);
        let tr = integrate(&w0, &s, &short).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Horizon);
        assert_eq!(tr.final_time(), 2.0);
        let (r1, r2) = reference_scalar(0.3, -0.2, 1.5, 2.0, 1e-4);
        assert!((tr.terminal.layer(1)[(0, 0)] - r1).abs() < 1e-8);
        assert!((tr.terminal.layer(2)[(0, 0)] - r2).abs() < 1e-8);

        let tr4 = integrate(&w0, &s, &IntegratorConfig::rk4(1e-3).with_t_max(2.0)).unwrap();
        assert!((tr4.terminal.layer(1)[(0, 0)] - r1).abs() < 1e-8);
        assert_eq!(tr4.final_time(), 2.0);
    }

    #[test]
    fn rk4_conserves_invariants_deep() {
        let dims = LayerDims::from_output_first(&[2, 3, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w0 = WeightTuple::gaussian(&dims, &[0.5, 0.577, 0.577], &mut rng);
        let s = DVector::from_vec(vec![2.0, 1.0]);
        let cfg = IntegratorConfig::rk4(1e-3).with_t_max(50.0);
        let tr = integrate(&w0, &s, &cfg).unwrap();
        for d in invariant_drift(&tr).unwrap() {
            assert!(d <= 1e-6, "{d}");
        }
        for d in norm_invariant_drift(&tr).unwrap() {
            assert!(d <= 1e-6, "{d}");
        }
        for w in tr.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn times_strictly_increase_and_snapshots_align() {
        let dims = LayerDims::from_output_first(&[2, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w0 = WeightTuple::gaussian(&dims, &[0.5, 0.577], &mut rng);
        let s = DVector::from_vec(vec![2.0, 1.0]);
        let tr = integrate(&w0, &s, &IntegratorConfig::default()).unwrap();
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.snapshots.len(), tr.times.len());
        for (snap, (&t, &l)) in tr.snapshots.iter().zip(tr.times.iter().zip(&tr.losses)) {
            assert_eq!(snap.t, t);
            assert!((loss(&snap.weights, &s).unwrap() - l).abs() <= 1e-14 * (1.0 + l));
        }
    }

    #[test]
    fn discrete_mode_diverges_with_huge_step() {
        let s = DVector::from_vec(vec![1.0]);
        let tr = integrate(&scalar(3.0, 3.0), &s, &IntegratorConfig::discrete(10.0)).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Diverged);
        assert!(!tr.conserved);
        let tr = integrate(&scalar(0.5, 0.7), &s, &IntegratorConfig::discrete(0.05)).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,loss,grad_norm,drift_1_nonconserved\n"));
    }

    #[test]
    fn invalid_config_rejected() {
        let s = DVector::from_vec(vec![1.0]);
        let bad = IntegratorConfig::rk4(0.0);
        assert!(matches!(integrate(&scalar(1.0, 1.0), &s, &bad), Err(Error::ConfigInvalid(_))));
        let bad = IntegratorConfig::default().with_stride(0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn preconditions_small_cases() {
        let p = check_exponential_preconditions(&scalar(0.0, 1.0)).unwrap();
        assert_eq!(p.alpha, 1.0);
        assert!(check_exponential_preconditions(&scalar(0.0, 0.0)).is_none());

        // C_1 = W_2ᵀW_2 − W_1W_1ᵀ with eigenvalues (2, 1, −1)
        let w2 = DMatrix::from_row_slice(2, 3, &[2f64.sqrt(), 0.0, 0.0, 0.0, 1.0, 0.0]);
        let w1 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let w = WeightTuple::new(vec![w1, w2]).unwrap();
        let p = check_exponential_preconditions(&w).unwrap();
        assert!((p.alpha - 1.0).abs() < 1e-12);
        assert!((p.single_layer[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preconditions_need_pyramid() {
        let dims = LayerDims::new(4, &[2, 3], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WeightTuple::gaussian(&dims, &[0.01, 1.0, 10.0], &mut rng);
        assert!(check_exponential_preconditions(&w).is_none());
    }

    #[test]
    fn synthetic_exponential_and_polynomial() {
        let t: Vec<f64> = (1..=200).map(|k| k as f64 * 0.05).collect();
        let l: Vec<f64> = t.iter().map(|t| (-4.0 * t).exp()).collect();
        let e = fit_rate_samples(&t, &l, 0.0).unwrap();
        assert_eq!(e.kind, RateKind::Exponential);
        assert!((e.rate - 2.0).abs() < 0.02);

        let t: Vec<f64> = (1..=200).map(|k| k as f64).collect();
        let l: Vec<f64> = t.iter().map(|t| t.powi(-2)).collect();
        let e = fit_rate_samples(&t, &l, 0.0).unwrap();
        assert_eq!(e.kind, RateKind::Polynomial);
        assert!((e.rate - 2.0).abs() < 0.02);
        assert!((0.0..=1.0).contains(&e.fit_quality));
    }

    #[test]
    fn noise_plateau_is_cut() {
        let t: Vec<f64> = (1..=400).map(|k| k as f64 * 0.05).collect();
        let l: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(k, t)| (-4.0 * t).exp().max(1e-17 * (1.0 + (k % 3) as f64)))
            .collect();
        assert!(decay_window(&l, 0.0) < 400);
        let e = fit_rate_samples(&t, &l, 0.0).unwrap();
        assert_eq!(e.kind, RateKind::Exponential);
        assert!((e.rate - 2.0).abs() < 0.02, "{e:?}");
    }

    #[test]
    fn flat_record_has_insufficient_decay() {
        let t: Vec<f64> = (1..=50).map(|k| k as f64).collect();
        let l = vec![0.5; 50];
        assert!(matches!(
            fit_rate_samples(&t, &l, 0.5),
            Err(Error::InsufficientDecay(_))
        ));
    }
}
