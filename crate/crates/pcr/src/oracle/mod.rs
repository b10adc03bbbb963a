//! Numerical evaluation of the PCR power theory.
//!
//! The central object is the conditional ordinal dominance curve
//!
//! ```text
//! R(u) = E_{(Z,Y)}[ F_{T|ZY}( F_{T|Z}^{-1}(u; Z,Y); Z,Y ) ]
//! ```
//!
//! the population PP-curve between the original score law and the
//! counterfeit score law. Its derivative `r(u)` (the conditional relative
//! density) is identically 1 under the null; the conditional dependency
//! power `Delta = int |r - 1|` measures distance from the null and drives
//! the power bounds. From `r` the module computes exact per-label
//! probabilities, the partial-sum sandwich, the power-bound predicates, and
//! the noncentral chi-squared power prediction.

pub mod curve_sim;
pub mod models;
mod quadrature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use quadrature::gaussian_expectation;

use crate::rng::RngStream;
use crate::special::{chi2_cdf, chi2_quantile, ln_gamma, Chi2Params};
use crate::{PcrError, Result};

/// A model for which both conditional score CDFs can be evaluated.
///
/// `Draw` carries whatever per-`(z, y)` state the CDFs need (closed-form
/// parameters, or a numerically tabulated posterior).
pub trait OdcModel: Sync {
    type Draw: Send + Sync;

    /// One draw from `L(Z, Y)`.
    fn sample_zy(&self, rng: &mut RngStream) -> Self::Draw;

    /// `F_{T|ZY}(t)`: CDF of the score when `X ~ L(X|Z,Y)`.
    fn cdf_t_given_zy(&self, t: f64, draw: &Self::Draw) -> f64;

    /// `F_{T|Z}(t)`: CDF of the score when `X ~ L(X|Z)` (the counterfeit
    /// law).
    fn cdf_t_given_z(&self, t: f64, draw: &Self::Draw) -> f64;

    /// Initial bracket for inverting `cdf_t_given_z`; expanded as needed.
    fn t_bracket(&self, _draw: &Self::Draw) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Invert a monotone CDF by exponential bracket expansion and bisection to
/// 1e-12 in `t`.
fn invert_cdf<F: Fn(f64) -> f64>(f: &F, u: f64, hint: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = hint;
    if !(lo < hi) {
        hi = lo + 1.0;
    }
    let mut width = hi - lo;
    for _ in 0..200 {
        if f(lo) <= u {
            break;
        }
        lo -= width;
        width *= 2.0;
    }
    let mut width = hi - lo;
    for _ in 0..200 {
        if f(hi) >= u {
            break;
        }
        hi += width;
        width *= 2.0;
    }
    if f(lo) > u || f(hi) < u {
        return Err(PcrError::numerical(format!(
            "CDF inversion bracket failed at u = {u}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The estimated conditional ordinal dominance curve on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdcCurve {
    /// Grid over `[0, 1]` (endpoints pinned to `R(0) = 0`, `R(1) = 1`).
    pub grid: Vec<f64>,
    /// `R(u)` at each grid point.
    pub big_r: Vec<f64>,
    /// `r(u)` by central finite differences (one-sided at the endpoints),
    /// clamped at zero.
    pub rel_density: Vec<f64>,
    /// Estimated Lipschitz constant of `r` (max difference quotient).
    pub lipschitz_c: f64,
    /// Estimated bound `sup |r|`.
    pub bound_b: f64,
}

impl OdcCurve {
    /// `R` evaluated by linear interpolation.
    pub fn r_at(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let h = self.grid[1] - self.grid[0];
        let i = ((u / h) as usize).min(self.grid.len() - 2);
        let w = (u - self.grid[i]) / h;
        self.big_r[i] * (1.0 - w) + self.big_r[i + 1] * w
    }
}

/// Estimate the conditional ODC of `model` on a uniform grid with
/// `grid_intervals + 1` points, averaging over `zy_samples` seeded draws of
/// `(Z, Y)`.
///
/// The same fixed draw set is used for every grid point, so the estimated
/// curve is smooth in `u` and finite differences of it estimate `r`
/// without differencing noise.
pub fn conditional_odc<M: OdcModel>(
    model: &M,
    grid_intervals: usize,
    zy_samples: usize,
    seed: u64,
) -> Result<OdcCurve> {
    if grid_intervals < 8 {
        return Err(PcrError::domain("conditional_odc: need at least 8 grid intervals"));
    }
    if zy_samples < 1 {
        return Err(PcrError::domain("conditional_odc: zy_samples must be positive"));
    }
    let g = grid_intervals;
    let grid: Vec<f64> = (0..=g).map(|i| i as f64 / g as f64).collect();

    // fixed, seeded draw set shared across all u
    let draws: Vec<M::Draw> = (0..zy_samples)
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            model.sample_zy(&mut rng)
        })
        .collect();

    // chunked deterministic reduction: each chunk sums in order, chunks are
    // then combined in index order
    let chunk = zy_samples.div_ceil(64).max(1);
    let partials: Result<Vec<Vec<f64>>> = draws
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = vec![0.0; g + 1];
            for draw in block {
                let f_z = |t: f64| model.cdf_t_given_z(t, draw);
                let mut bracket = model.t_bracket(draw);
                for i in 1..g {
                    let u = i as f64 / g as f64;
                    let t = invert_cdf(&f_z, u, bracket)?;
                    // the next grid point's root is above this one
                    bracket = (t, t + (bracket.1 - bracket.0).max(1e-6));
                    acc[i] += model.cdf_t_given_zy(t, draw);
                }
            }
            Ok(acc)
        })
        .collect();
    let partials = partials?;

    let mut big_r = vec![0.0; g + 1];
    for part in &partials {
        for (i, v) in part.iter().enumerate() {
            big_r[i] += v;
        }
    }
    for v in big_r.iter_mut() {
        *v /= zy_samples as f64;
    }
    big_r[0] = 0.0;
    big_r[g] = 1.0;

    let h = 1.0 / g as f64;
    let mut rel = vec![0.0; g + 1];
    for i in 1..g {
        rel[i] = ((big_r[i + 1] - big_r[i - 1]) / (2.0 * h)).max(0.0);
    }
    rel[0] = ((big_r[1] - big_r[0]) / h).max(0.0);
    rel[g] = ((big_r[g] - big_r[g - 1]) / h).max(0.0);

    let bound_b = rel.iter().cloned().fold(0.0, f64::max);
    let lipschitz_c = rel
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / h)
        .fold(0.0, f64::max);

    Ok(OdcCurve {
        grid,
        big_r,
        rel_density: rel,
        lipschitz_c,
        bound_b,
    })
}

/// The conditional dependency power `Delta = int_0^1 |r(u) - 1| du`
/// (trapezoid rule on the curve's grid).
pub fn dependency_power(curve: &OdcCurve) -> f64 {
    trapezoid(&curve.grid, |i| (curve.rel_density[i] - 1.0).abs())
}

fn trapezoid<F: Fn(usize) -> f64>(grid: &[f64], f: F) -> f64 {
    let mut acc = 0.0;
    for i in 0..grid.len() - 1 {
        acc += 0.5 * (f(i) + f(i + 1)) * (grid[i + 1] - grid[i]);
    }
    acc
}

/// Per-label probabilities with their renormalization drift.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelProbabilities {
    pub p: Vec<f64>,
    /// `sum(p) - 1`: quadrature drift, reported rather than hidden.
    pub sum_error: f64,
}

/// Label probabilities
/// `p_s = sum_{j=(s-1)K}^{sK-1} C(M,j) int u^j (1-u)^{M-j} r(u) du`
/// by trapezoid quadrature with log-space binomial-beta weights.
pub fn label_probabilities(curve: &OdcCurve, k: usize, l: usize) -> Result<LabelProbabilities> {
    if k < 1 || l < 2 {
        return Err(PcrError::domain("label_probabilities: need K >= 1, L >= 2"));
    }
    let m = k * l - 1;
    let mf = m as f64;
    let ln_choose: Vec<f64> = (0..=m)
        .map(|j| ln_gamma(mf + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma((m - j) as f64 + 1.0))
        .collect();

    // bin weight B_s(u) = P(Bin(M, u) in [(s-1)K, sK-1])
    let bin_weight = |s: usize, u: f64| -> f64 {
        if u == 0.0 {
            return if s == 1 { 1.0 } else { 0.0 };
        }
        if u == 1.0 {
            return if s == l { 1.0 } else { 0.0 };
        }
        let (lnu, ln1mu) = (u.ln(), (-u).ln_1p());
        let mut acc = 0.0;
        for j in (s - 1) * k..s * k {
            let lw = ln_choose[j] + j as f64 * lnu + (m - j) as f64 * ln1mu;
            acc += lw.exp();
        }
        acc
    };

    let p: Vec<f64> = (1..=l)
        .into_par_iter()
        .map(|s| {
            trapezoid(&curve.grid, |i| {
                bin_weight(s, curve.grid[i]) * curve.rel_density[i]
            })
        })
        .collect();
    for (s, v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(PcrError::numerical(format!(
                "label_probabilities: bin {} produced {v}",
                s + 1
            )));
        }
    }
    let sum_error = p.iter().sum::<f64>() - 1.0;
    Ok(LabelProbabilities { p, sum_error })
}

/// `nu_K = 2 (4 D^2 log K / sqrt(K))^{2/5}` with `D = C/2 + 2B`: the
/// polynomial-approximation slack in the label-probability sandwich.
pub fn nu_k(k: f64, bound_b: f64, lipschitz_c: f64) -> f64 {
    let d = 0.5 * lipschitz_c + 2.0 * bound_b;
    2.0 * (4.0 * d * d * k.ln() / k.sqrt()).powf(0.4)
}

/// Evaluation of the power lower-bound conditions for both thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPredicates {
    pub finite_ok: bool,
    pub asym_ok: bool,
    pub rhs_finite: f64,
    pub rhs_asym: f64,
    pub nu_k: f64,
}

/// Evaluate both power-bound right-hand sides and compare against the
/// dependency power. Requires `nu_K < 1`.
#[allow(clippy::too_many_arguments)]
pub fn power_lower_bound_predicates(
    delta_t: f64,
    n: usize,
    l: usize,
    k: f64,
    alpha: f64,
    beta: f64,
    bound_b: f64,
    lipschitz_c: f64,
) -> Result<PowerPredicates> {
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(PcrError::domain(
            "power_lower_bound_predicates: alpha, beta must lie in (0, 1)",
        ));
    }
    if n == 0 || l < 2 || !(k > 1.0) {
        return Err(PcrError::domain(
            "power_lower_bound_predicates: need n >= 1, L >= 2, K > 1",
        ));
    }
    let nu = nu_k(k, bound_b, lipschitz_c);
    if !(nu < 1.0) {
        return Err(PcrError::domain(format!(
            "power_lower_bound_predicates: nu_K = {nu} >= 1 (K too small)"
        )));
    }
    let lf = l as f64;
    let nf = n as f64;
    let common = lipschitz_c / lf + lf * nu;

    let rhs_finite = 32.0 * lf.powf(0.25) / nf.sqrt()
        * (1.0 / alpha.sqrt()).max(1.0 / beta).sqrt()
        + common;

    let la = (1.0 / alpha).ln();
    let lb = (1.0 / beta).ln();
    let inner = (3.0 * lb).sqrt() + (3.0 * lb + 2.0 * la.sqrt() + 2.0 * la).sqrt();
    let rhs_asym = lf.powf(0.25) / nf.sqrt() * inner.max(1.0) + common;

    Ok(PowerPredicates {
        finite_ok: delta_t >= rhs_finite,
        asym_ok: delta_t >= rhs_asym,
        rhs_finite,
        rhs_asym,
        nu_k: nu,
    })
}

/// Asymptotic power prediction: `U` converges to noncentral chi-squared
/// with `L-1` dof and `lambda = n L sum_s (p_s - 1/L)^2`, so the predicted
/// asymptotic power is the upper tail of that law at the asymptotic
/// threshold.
pub fn predicted_power_asym(p_s: &[f64], n: usize, alpha: f64) -> Result<f64> {
    let l = p_s.len();
    if l < 2 {
        return Err(PcrError::domain("predicted_power_asym: need L >= 2"));
    }
    let sum: f64 = p_s.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(PcrError::domain(format!(
            "predicted_power_asym: probabilities sum to {sum}"
        )));
    }
    let lf = l as f64;
    let lambda: f64 = n as f64 * lf * p_s.iter().map(|&p| (p - 1.0 / lf) * (p - 1.0 / lf)).sum::<f64>();
    let q = chi2_quantile(1.0 - alpha, lf - 1.0)?;
    let params = Chi2Params::new(lf - 1.0, lambda)?;
    Ok(1.0 - chi2_cdf(q, &params)?)
}

/// Moments and the concentration scale of the CRT failure analysis for a
/// regression function `g`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaReport {
    /// `eta = sqrt((3 + 2 E[X^2 g^2]) / (3 + 2 E[g^2]))`.
    pub eta: f64,
    pub e_g: f64,
    pub e_g2: f64,
    pub e_x2g: f64,
    pub e_x2g2: f64,
}

/// Quadrature evaluation of the moments entering the CRT concentration
/// bound for an even regression function `g`.
pub fn crt_eta<G: Fn(f64) -> f64>(g: G, tol: f64, max_evals: usize) -> Result<EtaReport> {
    let (e_g, _) = gaussian_expectation(|z| g(z), tol, max_evals)?;
    let (e_g2, _) = gaussian_expectation(|z| g(z) * g(z), tol, max_evals)?;
    let (e_x2g, _) = gaussian_expectation(|z| z * z * g(z), tol, max_evals)?;
    let (e_x2g2, _) = gaussian_expectation(|z| z * z * g(z) * g(z), tol, max_evals)?;
    let eta = ((3.0 + 2.0 * e_x2g2) / (3.0 + 2.0 * e_g2)).sqrt();
    Ok(EtaReport {
        eta,
        e_g,
        e_g2,
        e_x2g,
        e_x2g2,
    })
}

/// The concentration bound on `P(|p - 1/2| >= delta)` for the CRT
/// p-statistic with `M` counterfeits, at the asymptotic sample-size limit.
pub fn crt_concentration_bound(eta: f64, delta: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    if !(delta > 1.0 / mf) {
        return Err(PcrError::domain(format!(
            "crt_concentration_bound: need delta > 1/M (delta = {delta}, M = {m})"
        )));
    }
    let (e_phi2, _) = gaussian_expectation(
        |z| {
            let v = crate::special::normal_cdf(eta * z);
            v * v
        },
        1e-12,
        4_000_000,
    )?;
    Ok((1.0 / (delta - 1.0 / mf)).powi(2)
        * (0.25 / mf + (mf - 1.0) / mf * (e_phi2 - 0.25)))
}

/// The full power report for one model/configuration, as serialized by the
/// command line `oracle` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerReport {
    pub delta_t: f64,
    pub p_s: Vec<f64>,
    pub p_sum_error: f64,
    pub l1_gap: f64,
    pub nu_k: f64,
    pub lower_bound_finite: f64,
    pub lower_bound_asym: f64,
    pub finite_ok: bool,
    pub asym_ok: bool,
    pub predicted_power_asym: f64,
    pub bound_b: f64,
    pub lipschitz_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// Assemble the report: curve summaries, label probabilities, bound
/// predicates and the predicted asymptotic power.
pub fn power_report(
    curve: &OdcCurve,
    n: usize,
    l: usize,
    k: usize,
    alpha: f64,
    beta: f64,
    eta: Option<f64>,
) -> Result<PowerReport> {
    let delta_t = dependency_power(curve);
    let probs = label_probabilities(curve, k, l)?;
    let lf = l as f64;
    let l1_gap: f64 = probs.p.iter().map(|&p| (p - 1.0 / lf).abs()).sum();
    let preds = power_lower_bound_predicates(
        delta_t,
        n,
        l,
        k as f64,
        alpha,
        beta,
        curve.bound_b,
        curve.lipschitz_c,
    );
    // nu_K >= 1 is a legitimate outcome for small K; report it without bounds
    let (nu, rhs_f, rhs_a, f_ok, a_ok) = match preds {
        Ok(p) => (p.nu_k, p.rhs_finite, p.rhs_asym, p.finite_ok, p.asym_ok),
        Err(_) => (
            nu_k(k as f64, curve.bound_b, curve.lipschitz_c),
            f64::INFINITY,
            f64::INFINITY,
            false,
            false,
        ),
    };
    let predicted = predicted_power_asym(&renormalize(&probs.p), n, alpha)?;
    Ok(PowerReport {
        delta_t,
        p_s: probs.p,
        p_sum_error: probs.sum_error,
        l1_gap,
        nu_k: nu,
        lower_bound_finite: rhs_f,
        lower_bound_asym: rhs_a,
        finite_ok: f_ok,
        asym_ok: a_ok,
        predicted_power_asym: predicted,
        bound_b: curve.bound_b,
        lipschitz_c: curve.lipschitz_c,
        eta,
    })
}

fn renormalize(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|&v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::models::CurveOdcModel;

    #[test]
    fn null_curve_is_identity() {
        let model = CurveOdcModel::from_relative_density(|_| 1.0, 512).unwrap();
        let curve = conditional_odc(&model, 256, 16, 1).unwrap();
        for (i, &u) in curve.grid.iter().enumerate() {
            assert!((curve.big_r[i] - u).abs() < 1e-9, "R({u}) = {}", curve.big_r[i]);
        }
        assert!(dependency_power(&curve) <= 1e-6);
    }

    #[test]
    fn odc_monotone_for_any_model() {
        let model =
            CurveOdcModel::from_relative_density(|u| 1.0 + 0.9 * (2.0 * u - 1.0), 512).unwrap();
        let curve = conditional_odc(&model, 128, 64, 3).unwrap();
        for w in curve.big_r.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        // integral of r telescopes to R(1) - R(0) = 1
        let total = trapezoid(&curve.grid, |i| curve.rel_density[i]);
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn dependency_power_piecewise_example() {
        // r = 2 on (0, 1/2), 0 on (1/2, 1) => Delta = 1
        let model = CurveOdcModel::from_relative_density(
            |u| if u < 0.5 { 2.0 } else { 0.0 },
            4096,
        )
        .unwrap();
        let curve = conditional_odc(&model, 1024, 8, 5).unwrap();
        let d = dependency_power(&curve);
        assert!((d - 1.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn uniform_relative_density_gives_uniform_labels() {
        let model = CurveOdcModel::from_relative_density(|_| 1.0, 256).unwrap();
        let curve = conditional_odc(&model, 1024, 8, 7).unwrap();
        for (k, l) in [(1usize, 5usize), (4, 5), (10, 3), (3, 8)] {
            let probs = label_probabilities(&curve, k, l).unwrap();
            for &p in &probs.p {
                assert!((p - 1.0 / l as f64).abs() < 1e-6, "k={k} l={l}: {p}");
            }
            assert!(probs.sum_error.abs() < 1e-6);
        }
    }

    #[test]
    fn partial_sum_lower_bound_on_test_curves() {
        for gamma in [0.0, 0.5, 0.9] {
            let model = CurveOdcModel::from_relative_density(
                move |u| 1.0 + gamma * (2.0 * u - 1.0),
                512,
            )
            .unwrap();
            let curve = conditional_odc(&model, 1024, 8, 11).unwrap();
            for (k, l) in [(4usize, 5usize), (20, 4)] {
                let probs = label_probabilities(&curve, k, l).unwrap();
                let mut partial = 0.0;
                for ell in 1..=l {
                    partial += probs.p[ell - 1];
                    let r_at = curve.r_at(ell as f64 / l as f64);
                    assert!(
                        partial >= r_at - 1e-8,
                        "gamma={gamma} k={k} l={l} ell={ell}: {partial} < {r_at}"
                    );
                }
            }
        }
    }

    #[test]
    fn partial_sum_upper_bound_with_slack() {
        let model =
            CurveOdcModel::from_relative_density(|u| 1.0 + 0.8 * (2.0 * u - 1.0), 512).unwrap();
        let curve = conditional_odc(&model, 1024, 8, 13).unwrap();
        let k = 200usize;
        let l = 4usize;
        let probs = label_probabilities(&curve, k, l).unwrap();
        let nu = nu_k(k as f64, curve.bound_b, curve.lipschitz_c);
        let mut partial = 0.0;
        for ell in 1..=l {
            partial += probs.p[ell - 1];
            assert!(partial <= curve.r_at(ell as f64 / l as f64) + nu + 1e-8);
        }
    }

    #[test]
    fn l1_gap_lower_bound() {
        let model =
            CurveOdcModel::from_relative_density(|u| 1.0 + 0.9 * (2.0 * u - 1.0), 512).unwrap();
        let curve = conditional_odc(&model, 1024, 8, 17).unwrap();
        let k = 200usize;
        let l = 6usize;
        let probs = label_probabilities(&curve, k, l).unwrap();
        let lf = l as f64;
        let l1: f64 = probs.p.iter().map(|&p| (p - 1.0 / lf).abs()).sum();
        let delta = dependency_power(&curve);
        let nu = nu_k(k as f64, curve.bound_b, curve.lipschitz_c);
        assert!(l1 >= delta - lf * nu - curve.lipschitz_c / lf - 1e-8);
    }

    #[test]
    fn predicates_reject_null() {
        let p = power_lower_bound_predicates(0.0, 1000, 5, 1e9, 0.1, 0.5, 1.0, 1.0).unwrap();
        assert!(!p.finite_ok);
        assert!(!p.asym_ok);
        assert!(p.rhs_finite > 0.0);
        assert!(p.rhs_asym > 0.0);
    }

    #[test]
    fn predicate_nu_precondition() {
        assert!(power_lower_bound_predicates(1.0, 1000, 5, 10.0, 0.1, 0.5, 2.0, 2.0).is_err());
    }

    #[test]
    fn bound_rhs_has_interior_minimizer_in_l() {
        // the RHS decreases then increases in L, minimized near n^{2/5}
        let n = 100_000;
        let k = 1e30; // the K -> infinity regime where the L tradeoff is visible
        let mut values = Vec::new();
        for l in 2..=256usize {
            let p = power_lower_bound_predicates(1.0, n, l, k, 0.1, 0.5, 1.0, 1.0).unwrap();
            values.push(p.rhs_asym);
        }
        let (argmin, _) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(argmin > 0 && argmin < values.len() - 1, "argmin at edge: {argmin}");
        // n^{2/5} ~ 100; the interior minimizer should be in that decade
        let l_star = argmin + 2;
        assert!((20..=400).contains(&l_star), "L* = {l_star}");
    }

    #[test]
    fn predicted_power_uniform_is_alpha() {
        let p = vec![0.2; 5];
        let pw = predicted_power_asym(&p, 1000, 0.1).unwrap();
        assert!((pw - 0.1).abs() < 1e-9, "{pw}");
    }

    #[test]
    fn predicted_power_monotone_in_signal() {
        let mut prev = 0.0;
        for shift in [0.0, 0.01, 0.02, 0.04, 0.08] {
            let p = vec![0.25 + shift, 0.25 - shift, 0.25 + shift, 0.25 - shift];
            let pw = predicted_power_asym(&p, 2000, 0.1).unwrap();
            assert!(pw >= prev - 1e-12);
            prev = pw;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn crt_eta_trivial_g() {
        let rep = crt_eta(|_| 0.0, 1e-12, 1_000_000).unwrap();
        assert!((rep.eta - 1.0).abs() < 1e-12);
        assert_eq!(rep.e_g2, 0.0);
    }

    #[test]
    fn concentration_bound_requires_delta_above_1_over_m() {
        assert!(crt_concentration_bound(0.05, 0.01, 50).is_err());
        let b = crt_concentration_bound(0.05, 0.2, 200).unwrap();
        assert!(b > 0.0 && b.is_finite());
    }
}
