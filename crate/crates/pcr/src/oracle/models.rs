//! Built-in models with evaluable conditional score CDFs.
//!
//! Three families cover the synthetic experiments:
//!
//! - [`QuadraticOdcModel`]: `Z ~ N(0, I_p)`, `X|Z ~ N(v'Z, 1)`,
//!   `Y|X,Z ~ N((u'Z)^2 + aX, 1)` with score `(y - x - sum z)^2`. Both
//!   conditional CDFs are differences of Gaussian CDFs (the posterior of
//!   `X` given `(Z, Y)` is Gaussian), optionally with a variance-inflated
//!   counterfeit law.
//! - [`CrtFailureOdcModel`]: `X ~ N(0,1)`, `Y = 1/sqrt(theta^2 + X^2) + eps`
//!   with score `(y - x)^2`. The posterior of `X` given `Y` has no closed
//!   form and is tabulated per draw on an adaptive grid.
//! - [`CurveOdcModel`]: a synthetic model whose ODC is a prescribed curve;
//!   the score is its own rank scale (`F_{T|Z} = id` on `[0,1]`).

use crate::data::dot;
use crate::oracle::OdcModel;
use crate::rng::RngStream;
use crate::special::normal_cdf;
use crate::{PcrError, Result};

/// Synthetic model with a prescribed ordinal dominance curve.
///
/// Original scores have CDF `R` on `[0, 1]`; counterfeit scores are
/// uniform, so the model's conditional ODC is exactly `R`.
#[derive(Debug, Clone)]
pub struct CurveOdcModel {
    knots: Vec<f64>,
    big_r: Vec<f64>,
}

impl CurveOdcModel {
    /// Build from a nonnegative relative density `r`; `R` is its normalized
    /// trapezoid integral on a uniform grid with `knots` intervals.
    pub fn from_relative_density<F: Fn(f64) -> f64>(r: F, knots: usize) -> Result<Self> {
        if knots < 8 {
            return Err(PcrError::domain("CurveOdcModel: need at least 8 knots"));
        }
        let h = 1.0 / knots as f64;
        let mut big_r = vec![0.0; knots + 1];
        let mut prev = r(0.0);
        if prev < 0.0 {
            return Err(PcrError::domain("CurveOdcModel: negative relative density"));
        }
        for i in 1..=knots {
            let cur = r(i as f64 * h);
            if cur < 0.0 {
                return Err(PcrError::domain("CurveOdcModel: negative relative density"));
            }
            big_r[i] = big_r[i - 1] + 0.5 * (prev + cur) * h;
            prev = cur;
        }
        let total = big_r[knots];
        if total <= 0.0 {
            return Err(PcrError::domain("CurveOdcModel: density integrates to zero"));
        }
        for v in big_r.iter_mut() {
            *v /= total;
        }
        let knots_grid = (0..=knots).map(|i| i as f64 * h).collect();
        Ok(CurveOdcModel {
            knots: knots_grid,
            big_r,
        })
    }

    pub fn r_at(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let h = self.knots[1];
        let i = ((u / h) as usize).min(self.knots.len() - 2);
        let w = (u - self.knots[i]) / h;
        self.big_r[i] * (1.0 - w) + self.big_r[i + 1] * w
    }

    /// Inverse of `R` by binary search + interpolation; used to sample
    /// original scores.
    pub fn r_inverse(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let idx = self.big_r.partition_point(|&r| r < v);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.big_r.len() {
            return 1.0;
        }
        let (r0, r1) = (self.big_r[idx - 1], self.big_r[idx]);
        let (u0, u1) = (self.knots[idx - 1], self.knots[idx]);
        if r1 > r0 {
            u0 + (v - r0) / (r1 - r0) * (u1 - u0)
        } else {
            u0
        }
    }
}

impl OdcModel for CurveOdcModel {
    type Draw = ();

    fn sample_zy(&self, _rng: &mut RngStream) -> Self::Draw {}

    fn cdf_t_given_zy(&self, t: f64, _draw: &Self::Draw) -> f64 {
        self.r_at(t)
    }

    fn cdf_t_given_z(&self, t: f64, _draw: &Self::Draw) -> f64 {
        t.clamp(0.0, 1.0)
    }

    fn t_bracket(&self, _draw: &Self::Draw) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// The quadratic-regression family with score `(y - x - sum z)^2`.
#[derive(Debug, Clone)]
pub struct QuadraticOdcModel {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Coefficient of `X` in the response; `a = 0` is the null model.
    pub a: f64,
    /// Counterfeit standard deviation (`1 + eta`; 1 when well specified).
    pub counterfeit_sd: f64,
}

/// Per-draw state: everything both CDFs need.
#[derive(Debug, Clone)]
pub struct QuadraticDraw {
    /// `(d - m) / counterfeit_sd` with `d = y - sum z`, `m = v'z`.
    e_counterfeit: f64,
    /// `(d - m_post) / s_post`.
    e_posterior: f64,
    inv_sd_counterfeit: f64,
    inv_s_post: f64,
    /// scale reference for bracketing
    t_scale: f64,
}

impl QuadraticOdcModel {
    pub fn new(u: Vec<f64>, v: Vec<f64>, a: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(PcrError::domain("QuadraticOdcModel: u and v lengths differ"));
        }
        Ok(QuadraticOdcModel {
            u,
            v,
            a,
            counterfeit_sd: 1.0,
        })
    }

    pub fn with_counterfeit_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(PcrError::domain("QuadraticOdcModel: counterfeit sd <= 0"));
        }
        self.counterfeit_sd = sd;
        Ok(self)
    }
}

impl OdcModel for QuadraticOdcModel {
    type Draw = QuadraticDraw;

    fn sample_zy(&self, rng: &mut RngStream) -> Self::Draw {
        let p = self.u.len();
        let z: Vec<f64> = (0..p).map(|_| rng.next_gaussian()).collect();
        let m = dot(&self.v, &z);
        let uz2 = {
            let s = dot(&self.u, &z);
            s * s
        };
        let x = m + rng.next_gaussian();
        let y = uz2 + self.a * x + rng.next_gaussian();
        let d = y - z.iter().sum::<f64>();

        // posterior X | Z, Y ~ N(m_post, s_post^2)
        let prec = 1.0 + self.a * self.a;
        let m_post = (m + self.a * (y - uz2)) / prec;
        let s_post = (1.0 / prec).sqrt();

        QuadraticDraw {
            e_counterfeit: (d - m) / self.counterfeit_sd,
            e_posterior: (d - m_post) / s_post,
            inv_sd_counterfeit: 1.0 / self.counterfeit_sd,
            inv_s_post: 1.0 / s_post,
            t_scale: (d - m).abs().max(1.0),
        }
    }

    fn cdf_t_given_zy(&self, t: f64, draw: &Self::Draw) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rt = t.sqrt() * draw.inv_s_post;
        normal_cdf(draw.e_posterior + rt) - normal_cdf(draw.e_posterior - rt)
    }

    fn cdf_t_given_z(&self, t: f64, draw: &Self::Draw) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rt = t.sqrt() * draw.inv_sd_counterfeit;
        normal_cdf(draw.e_counterfeit + rt) - normal_cdf(draw.e_counterfeit - rt)
    }

    fn t_bracket(&self, draw: &Self::Draw) -> (f64, f64) {
        (0.0, draw.t_scale * draw.t_scale)
    }
}

/// The CRT-failure regression `Y = 1/sqrt(theta^2 + X^2) + eps` with score
/// `(y - x)^2`.
#[derive(Debug, Clone)]
pub struct CrtFailureOdcModel {
    pub theta: f64,
}

/// Per-draw state: the observed `y` and the tabulated posterior CDF of `X`
/// given `Y = y` (symmetric in `x`, stored on the positive half-line).
#[derive(Debug, Clone)]
pub struct CrtFailureDraw {
    y: f64,
    xs: Vec<f64>,
    /// cumulative posterior mass on `[0, xs[i]]`, normalized to 0.5
    half_cdf: Vec<f64>,
}

impl CrtFailureOdcModel {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(PcrError::domain("CrtFailureOdcModel: theta must be positive"));
        }
        Ok(CrtFailureOdcModel { theta })
    }

    fn g(&self, x: f64) -> f64 {
        1.0 / (self.theta * self.theta + x * x).sqrt()
    }

    /// Adaptive half-grid: uniform base + geometric cover of all scales
    /// down to `theta/1000` + a cluster around the likelihood spike at
    /// `g(x*) = y`.
    fn posterior_grid(&self, y: f64) -> Vec<f64> {
        const X_MAX: f64 = 8.5;
        let mut xs = Vec::with_capacity(6200);
        let base = 4096;
        for i in 0..=base {
            xs.push(i as f64 * X_MAX / base as f64);
        }
        let mut x = self.theta * 1e-3;
        while x < X_MAX {
            xs.push(x);
            x *= 1.116; // ~64 points per decade
        }
        if y > self.g(X_MAX) && y < self.g(0.0) {
            let x_star = (1.0 / (y * y) - self.theta * self.theta).max(0.0).sqrt();
            let slope = x_star * y * y * y; // |g'(x*)|
            let spread = (30.0 / slope.max(1e-9)).min(1.0);
            let lo = (x_star - spread).max(0.0);
            let hi = (x_star + spread).min(X_MAX);
            for i in 0..=512 {
                xs.push(lo + (hi - lo) * i as f64 / 512.0);
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        xs
    }

    fn tabulate_posterior(&self, y: f64) -> (Vec<f64>, Vec<f64>) {
        let xs = self.posterior_grid(y);
        // unnormalized log density: -x^2/2 - (y - g(x))^2 / 2
        let ln_dens: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let r = y - self.g(x);
                -0.5 * (x * x + r * r)
            })
            .collect();
        let peak = ln_dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = ln_dens.iter().map(|&l| (l - peak).exp()).collect();
        let mut cum = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cum[xs.len() - 1];
        for c in cum.iter_mut() {
            *c *= 0.5 / total;
        }
        (xs, cum)
    }
}

impl CrtFailureDraw {
    /// Posterior CDF at any real `x` (symmetry: `C(x) = 1/2 + sgn(x) H(|x|)`).
    fn posterior_cdf(&self, x: f64) -> f64 {
        let h = self.half_at(x.abs());
        if x >= 0.0 {
            0.5 + h
        } else {
            0.5 - h
        }
    }

    fn half_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let last = self.xs.len() - 1;
        if x >= self.xs[last] {
            return 0.5;
        }
        let idx = self.xs.partition_point(|&v| v < x).max(1);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        let (c0, c1) = (self.half_cdf[idx - 1], self.half_cdf[idx]);
        if x1 > x0 {
            c0 + (x - x0) / (x1 - x0) * (c1 - c0)
        } else {
            c0
        }
    }
}

impl OdcModel for CrtFailureOdcModel {
    type Draw = CrtFailureDraw;

    fn sample_zy(&self, rng: &mut RngStream) -> Self::Draw {
        let x = rng.next_gaussian();
        let y = self.g(x) + rng.next_gaussian();
        let (xs, half_cdf) = self.tabulate_posterior(y);
        CrtFailureDraw { y, xs, half_cdf }
    }

    fn cdf_t_given_zy(&self, t: f64, draw: &Self::Draw) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rt = t.sqrt();
        draw.posterior_cdf(draw.y + rt) - draw.posterior_cdf(draw.y - rt)
    }

    fn cdf_t_given_z(&self, t: f64, draw: &Self::Draw) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rt = t.sqrt();
        normal_cdf(draw.y + rt) - normal_cdf(draw.y - rt)
    }

    fn t_bracket(&self, draw: &Self::Draw) -> (f64, f64) {
        let s = draw.y.abs().max(1.0);
        (0.0, s * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_model_identity_density() {
        let m = CurveOdcModel::from_relative_density(|_| 1.0, 64).unwrap();
        assert!((m.r_at(0.3) - 0.3).abs() < 1e-12);
        assert!((m.r_inverse(0.6) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn curve_model_rejects_negative_density() {
        assert!(CurveOdcModel::from_relative_density(|u| 1.0 - 2.0 * u, 64).is_err());
    }

    #[test]
    fn quadratic_null_has_equal_cdfs() {
        let model = QuadraticOdcModel::new(vec![0.5, -0.3], vec![0.2, 0.9], 0.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..20 {
            let d = model.sample_zy(&mut rng);
            for &t in &[0.01, 0.5, 1.0, 4.0, 25.0] {
                let a = model.cdf_t_given_zy(t, &d);
                let b = model.cdf_t_given_z(t, &d);
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_cdfs_are_monotone_proper() {
        let model = QuadraticOdcModel::new(vec![1.0, 0.1], vec![-0.4, 0.7], 2.0).unwrap();
        let mut rng = RngStream::new(2, 0);
        let d = model.sample_zy(&mut rng);
        let mut prev = (0.0, 0.0);
        for i in 0..400 {
            let t = i as f64 * 0.25;
            let a = model.cdf_t_given_zy(t, &d);
            let b = model.cdf_t_given_z(t, &d);
            assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            assert!(a >= prev.0 && b >= prev.1);
            prev = (a, b);
        }
        assert!(prev.0 > 0.99 && prev.1 > 0.99);
    }

    #[test]
    fn crt_failure_posterior_is_a_cdf() {
        let model = CrtFailureOdcModel::new(1e-3).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..10 {
            let d = model.sample_zy(&mut rng);
            assert_eq!(d.posterior_cdf(-9.0), 0.0);
            assert_eq!(d.posterior_cdf(9.0), 1.0);
            let mut prev = 0.0;
            for i in -40..=40 {
                let x = i as f64 * 0.2;
                let c = d.posterior_cdf(x);
                assert!(c >= prev - 1e-12);
                prev = c;
            }
        }
    }

    #[test]
    fn crt_failure_posterior_mass_concentrates_where_g_matches_y() {
        let model = CrtFailureOdcModel::new(1e-3).unwrap();
        // y = 2 with tiny noise contribution: posterior should put mass
        // near |x| = 1/2
        let (xs, half) = model.tabulate_posterior(2.0);
        let draw = CrtFailureDraw {
            y: 2.0,
            xs,
            half_cdf: half,
        };
        let inside = draw.posterior_cdf(0.75) - draw.posterior_cdf(0.25);
        let outside_left = draw.posterior_cdf(0.25) - draw.posterior_cdf(0.0);
        assert!(inside > 5.0 * outside_left, "inside={inside} left={outside_left}");
    }
}
