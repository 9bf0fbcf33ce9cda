//! Numeric defaults shared by the library and the command-line tool.
//!
//! Everything tunable lives here so that `lingdd defaults` can print the
//! full set in one place.

/// A singular value is nonzero iff it exceeds this multiple of the largest one.
pub const RANK_TOL: f64 = 1e-8;
/// Minimum gap between consecutive target singular values, relative to the largest.
pub const SINGULAR_GAP_TOL: f64 = 1e-6;
/// Minimum gap between critical values, relative to half the squared target norm.
pub const CRITICAL_GAP_TOL: f64 = 1e-6;

/// Adaptive integrator tolerances.
pub const ABS_TOL: f64 = 1e-10;
pub const REL_TOL: f64 = 1e-10;
pub const INITIAL_STEP: f64 = 1e-3;
/// Adaptive steps below this size abort the integration.
pub const MIN_STEP: f64 = 1e-14;
pub const T_MAX: f64 = 1e4;
pub const GRAD_STOP: f64 = 1e-8;
/// RK45 tightens its tolerances by `POLISH_TOL_FACTOR` once the gradient
/// norm is within `POLISH_ONSET` times the stopping threshold.
pub const POLISH_ONSET: f64 = 100.0;
pub const POLISH_TOL_FACTOR: f64 = 1e-3;
pub const SNAPSHOT_STRIDE: usize = 25;
pub const RK4_STEP: f64 = 1e-3;

/// Rate fitting: a fit is accepted when its coefficient of determination reaches this.
pub const FIT_QUALITY_MIN: f64 = 0.9;
pub const FIT_MIN_POINTS: usize = 20;
/// Decay records are cut where `L − L∞` falls below this fraction of its largest value.
pub const FIT_NOISE_FLOOR: f64 = 1e-13;

/// Classification of limit points.
pub const CLASSIFY_GRAD_THRESHOLD: f64 = 1e-6;
pub const CLASSIFY_RANK_TOL: f64 = 1e-6;
pub const FITTED_TOL: f64 = 1e-5;
/// Critical values match when |L - L(j)| <= VALUE_TOL * (1 + L(1)).
pub const VALUE_TOL: f64 = 1e-6;
/// A terminal counts as a global minimum when its loss is below this.
pub const GLOBAL_LOSS_TOL: f64 = 1e-8;

/// Hessian analysis.
pub const ZERO_TOL: f64 = 1e-7;
pub const ANNIHILATION_TOL: f64 = 1e-6;
pub const ANGLE_TOL: f64 = 1e-6;
pub const MAX_HESSIAN_DIM: usize = 2000;
/// Critical-condition residual below which the single-hidden-layer Hessian shortcut is used.
pub const FAST_PATH_TOL: f64 = 1e-8;
pub const MAX_CONDITIONING_DRAWS: usize = 10;

/// Experiments.
pub const ESCAPE_EPSILON: f64 = 1e-3;
pub const PROBLEM_SCALE: f64 = 1.0;

/// Environment variable naming the default output directory of the CLI.
pub const OUTPUT_DIR_ENV: &str = "LINGDD_OUT";

/// All defaults as (name, value) pairs, for printing.
pub fn table() -> Vec<(&'static str, String)> {
    vec![
        ("rank_tol", format!("{RANK_TOL:e}")),
        ("singular_gap_tol", format!("{SINGULAR_GAP_TOL:e}")),
        ("critical_gap_tol", format!("{CRITICAL_GAP_TOL:e}")),
        ("abs_tol", format!("{ABS_TOL:e}")),
        ("rel_tol", format!("{REL_TOL:e}")),
        ("initial_step", format!("{INITIAL_STEP:e}")),
        ("min_step", format!("{MIN_STEP:e}")),
        ("t_max", format!("{T_MAX:e}")),
        ("grad_stop", format!("{GRAD_STOP:e}")),
        ("polish_onset", format!("{POLISH_ONSET:e}")),
        ("polish_tol_factor", format!("{POLISH_TOL_FACTOR:e}")),
        ("snapshot_stride", SNAPSHOT_STRIDE.to_string()),
        ("rk4_step", format!("{RK4_STEP:e}")),
        ("fit_quality_min", FIT_QUALITY_MIN.to_string()),
        ("fit_min_points", FIT_MIN_POINTS.to_string()),
        ("fit_noise_floor", format!("{FIT_NOISE_FLOOR:e}")),
        ("classify_grad_threshold", format!("{CLASSIFY_GRAD_THRESHOLD:e}")),
        ("classify_rank_tol", format!("{CLASSIFY_RANK_TOL:e}")),
        ("fitted_tol", format!("{FITTED_TOL:e}")),
        ("value_tol", format!("{VALUE_TOL:e}")),
        ("global_loss_tol", format!("{GLOBAL_LOSS_TOL:e}")),
        ("zero_tol", format!("{ZERO_TOL:e}")),
        ("annihilation_tol", format!("{ANNIHILATION_TOL:e}")),
        ("angle_tol", format!("{ANGLE_TOL:e}")),
        ("max_hessian_dim", MAX_HESSIAN_DIM.to_string()),
        ("fast_path_tol", format!("{FAST_PATH_TOL:e}")),
        ("escape_epsilon", format!("{ESCAPE_EPSILON:e}")),
        ("init_scale", "1/sqrt(fan_in)".to_string()),
        ("problem_scale", PROBLEM_SCALE.to_string()),
        ("output_dir_env", OUTPUT_DIR_ENV.to_string()),
    ]
}
