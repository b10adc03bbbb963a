//! Robust PCR for approximately known conditional laws.
//!
//! When counterfeits come from an estimate of `L(X|Z)` whose expected total
//! variation distance to the truth is at most `delta`, the label
//! probabilities can each drift from `1/L` by up to `delta`. The robust
//! statistic minimizes the chi-squared discrepancy over that drift ball:
//!
//! ```text
//! U(delta) = min_p  L / (n (1 + L delta)) * sum_s (W_s - n p_s)^2
//!     s.t.  p_s >= 0,  |p_s - 1/L| <= delta,  sum_s p_s = 1
//! ```
//!
//! and keeps the same rejection thresholds as the plain test. The QP is
//! separable with a common box, so the exact minimizer is a clamped shift
//! `p_s = clamp(W_s/n + mu, lo, hi)` with the scalar `mu` found by
//! bisection on the simplex constraint.

use serde::{Deserialize, Serialize};

use crate::data::{ConditionalSampler, Dataset, ScoreFunction};
use crate::pearson::{self, LabelCounts, PcrConfig, PcrResult};
use crate::{PcrError, Result};

/// Parameters of a robust PCR run: a drift radius on top of the usual
/// configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Bound on the expected total variation distance between the true and
    /// the sampling conditional law.
    pub delta: f64,
    pub pcr: PcrConfig,
}

impl RobustConfig {
    pub fn new(delta: f64, pcr: PcrConfig) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(PcrError::domain(format!("RobustConfig: delta = {delta} < 0")));
        }
        pcr.validate()?;
        Ok(RobustConfig { delta, pcr })
    }
}

/// Exact solution of the box-simplex projection QP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    /// The minimizing probability vector.
    pub p: Vec<f64>,
    /// `sum_s (target_s - p_s)^2` at the minimizer.
    pub objective: f64,
    /// The simplex multiplier: `p_s = clamp(target_s + multiplier, lo, hi)`.
    pub multiplier: f64,
}

/// Minimize `sum_s (target_s - p_s)^2` subject to `lo <= p_s <= hi` and
/// `sum_s p_s = 1`.
///
/// `sum_s clamp(target_s + mu, lo, hi)` is continuous and nondecreasing in
/// `mu`, so bisection pins the simplex constraint to `|sum p - 1| <= 1e-12`.
pub fn solve_box_simplex_qp(targets: &[f64], lower: f64, upper: f64) -> Result<QpSolution> {
    let l = targets.len();
    if l == 0 {
        return Err(PcrError::domain("solve_box_simplex_qp: empty target vector"));
    }
    if !(lower <= upper) {
        return Err(PcrError::domain(format!(
            "solve_box_simplex_qp: lower {lower} > upper {upper}"
        )));
    }
    if l as f64 * lower > 1.0 + 1e-12 || (l as f64) * upper < 1.0 - 1e-12 {
        return Err(PcrError::domain(format!(
            "solve_box_simplex_qp: box [{lower}, {upper}]^{l} does not meet the simplex"
        )));
    }
    let sum_at = |mu: f64| -> f64 { targets.iter().map(|&t| (t + mu).clamp(lower, upper)).sum() };

    let t_min = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo_mu = lower - t_max; // sum = l * lower <= 1
    let mut hi_mu = upper - t_min; // sum = l * upper >= 1
    for _ in 0..200 {
        let mid = 0.5 * (lo_mu + hi_mu);
        let s = sum_at(mid);
        if (s - 1.0).abs() <= 1e-12 {
            lo_mu = mid;
            hi_mu = mid;
            break;
        }
        if s < 1.0 {
            lo_mu = mid;
        } else {
            hi_mu = mid;
        }
    }
    let mu = 0.5 * (lo_mu + hi_mu);
    let p: Vec<f64> = targets.iter().map(|&t| (t + mu).clamp(lower, upper)).collect();
    let objective = targets.iter().zip(&p).map(|(&t, &q)| (t - q) * (t - q)).sum();
    Ok(QpSolution {
        p,
        objective,
        multiplier: mu,
    })
}

/// KKT residual of a solution: interior coordinates must sit exactly at
/// `target + mu`, coordinates clamped low must have `target + mu <= lo`,
/// clamped high `target + mu >= hi`, plus the simplex feasibility residual.
pub fn kkt_residual(sol: &QpSolution, targets: &[f64], lower: f64, upper: f64) -> f64 {
    let mu = sol.multiplier;
    let mut worst: f64 = (sol.p.iter().sum::<f64>() - 1.0).abs();
    for (&t, &p) in targets.iter().zip(&sol.p) {
        let free = t + mu;
        let r = if p <= lower {
            // active lower bound: multiplier pushes down
            (free - lower).max(0.0)
        } else if p >= upper {
            (upper - free).max(0.0)
        } else {
            (p - free).abs()
        };
        worst = worst.max(r);
        worst = worst.max((p - p.clamp(lower, upper)).abs());
    }
    worst
}

/// The robust statistic `U(delta)` for observed label counts.
///
/// Nonincreasing in `delta`; at `delta = 0` it equals the plain statistic
/// exactly (same arithmetic path).
pub fn robust_statistic(counts: &LabelCounts, delta: f64) -> Result<(f64, QpSolution)> {
    if !(delta >= 0.0) {
        return Err(PcrError::domain(format!("robust_statistic: delta = {delta} < 0")));
    }
    let l = counts.num_labels();
    let n = counts.total() as f64;
    let lf = l as f64;
    let uniform = 1.0 / lf;
    let lower = (uniform - delta).max(0.0);
    let upper = (uniform + delta).min(1.0);
    if delta == 0.0 {
        let u = pearson::pcr_statistic(counts, l);
        let p = vec![uniform; l];
        let objective = counts
            .counts()
            .iter()
            .map(|&w| {
                let d = w as f64 / n - uniform;
                d * d
            })
            .sum();
        return Ok((
            u,
            QpSolution {
                p,
                objective,
                multiplier: 0.0,
            },
        ));
    }
    let targets: Vec<f64> = counts.counts().iter().map(|&w| w as f64 / n).collect();
    let sol = solve_box_simplex_qp(&targets, lower, upper)?;
    let u = lf * n / (1.0 + lf * delta) * sol.objective;
    Ok((u, sol))
}

/// Pinsker bound on the expected total variation between `N(mu, 1)` and
/// `N(mu, (1+eta)^2)`:
/// `delta = sqrt((log(1+eta) + 1/(2(1+eta)^2) - 1/2) / 2)`.
pub fn pinsker_delta_gaussian(eta: f64) -> Result<f64> {
    if !(eta > -1.0) {
        return Err(PcrError::domain(format!(
            "pinsker_delta_gaussian: eta = {eta} <= -1"
        )));
    }
    let s = 1.0 + eta;
    let kl = s.ln() + 1.0 / (2.0 * s * s) - 0.5;
    // KL >= 0; clamp rounding noise at eta ~ 0
    Ok((0.5 * kl.max(0.0)).sqrt())
}

/// Result of a robust run: the usual PCR output plus the QP diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustPcrResult {
    #[serde(flatten)]
    pub pcr: PcrResult,
    pub delta: f64,
    pub qp_objective: f64,
    /// The minimizing label-probability vector.
    pub p_hat: Vec<f64>,
}

/// Run the PCR labelling with counterfeits from the approximate sampler and
/// evaluate the robust statistic. Thresholds and p-values are the plain
/// ones, applied to `U(delta)`.
pub fn run_robust_pcr(
    data: &Dataset,
    sampler_hat: &dyn ConditionalSampler,
    score: &dyn ScoreFunction,
    cfg: &RobustConfig,
    seed: u64,
) -> Result<RobustPcrResult> {
    let base = pearson::run_pcr(data, sampler_hat, score, &cfg.pcr, seed)?;
    let (u, sol) = robust_statistic(&base.counts, cfg.delta)?;
    let l = cfg.pcr.num_labels;
    let thr = pearson::threshold(cfg.pcr.threshold_kind, l, cfg.pcr.alpha)?;
    let result = PcrResult {
        statistic: u,
        threshold: thr,
        p_finite: pearson::p_value_finite(u, l),
        p_asym: pearson::p_value_asym(u, l)?,
        reject: u >= thr,
        counts: base.counts,
        ranks: base.ranks,
    };
    Ok(RobustPcrResult {
        pcr: result,
        delta: cfg.delta,
        qp_objective: sol.objective,
        p_hat: sol.p,
    })
}
