//! Adaptive quadrature against the standard Gaussian weight.

use crate::{PcrError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn phi(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

struct Budget {
    evals: usize,
    max_evals: usize,
}

impl Budget {
    fn spend(&mut self, n: usize) -> Result<()> {
        self.evals += n;
        if self.evals > self.max_evals {
            Err(PcrError::numerical(format!(
                "quadrature budget of {} evaluations exhausted (divergent or too-sharp integrand?)",
                self.max_evals
            )))
        } else {
            Ok(())
        }
    }
}

/// Adaptive Simpson on one panel.
#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    budget: &mut Budget,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    budget.spend(2)?;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 {
        return Err(PcrError::numerical(
            "quadrature recursion depth exhausted".to_string(),
        ));
    }
    if err.abs() <= 15.0 * tol || (b - a) < 1e-300 {
        return Ok(left + right + err / 15.0);
    }
    let l = simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)?;
    let r = simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)?;
    Ok(l + r)
}

fn integrate_panel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    budget: &mut Budget,
) -> Result<f64> {
    budget.spend(3)?;
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 60, budget)
}

/// `E[f(Z)]` for `Z ~ N(0,1)` by adaptive Simpson over a breakpoint
/// partition of `[-12, 12]` (the tail beyond 12 is below 2e-33 and is
/// dropped).
///
/// The default breakpoints cluster around zero so integrands with sharp
/// spikes at the origin (the `1/(theta^2 + x^2)` family down to
/// `theta ~ 1e-6`) are seen by the initial sampling.
///
/// Returns `(value, error_estimate)`; errors out if `max_evals` function
/// evaluations are exceeded, which is the divergence guard.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(
    f: F,
    tol: f64,
    max_evals: usize,
) -> Result<(f64, f64)> {
    let mut breaks: Vec<f64> = Vec::new();
    for &b in &[
        12.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6,
    ] {
        breaks.push(-b);
    }
    breaks.push(0.0);
    for &b in &[1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0] {
        breaks.push(b);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut budget = Budget {
        evals: 0,
        max_evals,
    };
    let g = |z: f64| f(z) * phi(z);
    let mut total = 0.0;
    let panel_tol = tol / (breaks.len() - 1) as f64;
    for w in breaks.windows(2) {
        total += integrate_panel(&g, w[0], w[1], panel_tol, &mut budget)?;
    }
    Ok((total, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_cdf;

    #[test]
    fn variance_of_standard_normal() {
        let (v, _) = gaussian_expectation(|z| z * z, 1e-12, 1_000_000).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn expectation_of_phi_eta_z_is_half() {
        for &eta in &[0.0, 0.3, 1.7, 10.0] {
            let (v, _) = gaussian_expectation(|z| normal_cdf(eta * z), 1e-12, 2_000_000).unwrap();
            assert!((v - 0.5).abs() < 1e-10, "eta={eta}: {v}");
        }
    }

    #[test]
    fn squared_phi_at_zero_eta() {
        let (v, _) = gaussian_expectation(|z| normal_cdf(0.0 * z).powi(2), 1e-12, 1_000_000)
            .unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sharp_peak_resolved() {
        // E[1/(theta^2 + Z^2)] has closed form (pi/theta) e^{theta^2/2} Phi(-theta) * 2
        // ... checked against the asymptotic sqrt(pi/2)/theta for small theta.
        let theta = 1e-4f64;
        let (v, _) =
            gaussian_expectation(|z| 1.0 / (theta * theta + z * z), 1e-9, 4_000_000).unwrap();
        let lead = (std::f64::consts::PI / 2.0).sqrt() / theta;
        assert!((v / lead - 1.0).abs() < 1e-3, "v={v} lead={lead}");
    }

    #[test]
    fn budget_exhaustion_reported() {
        let r = gaussian_expectation(|z| 1.0 / (1e-12 + z * z), 1e-14, 500);
        assert!(r.is_err());
    }
}
