//! The vanilla conditional randomization test (CRT), used as the comparison
//! baseline.
//!
//! The CRT scores whole datasets: it redraws the entire `X` column `M`
//! times, scores each counterfeit dataset, and treats the normalized rank
//! of the original dataset's score as a p-statistic, uniform over
//! `{1/(M+1), ..., 1}` under the null. Rejection looks only at the tails of
//! that rank, which is exactly what the PCR test was built to fix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ConditionalSampler, Dataset, DatasetScore};
use crate::rng::RngStream;
use crate::{PcrError, Result};

/// Rejection region shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    /// Reject `p <= alpha`.
    OneLower,
    /// Reject `p >= 1 - alpha`.
    OneUpper,
    /// Reject `p <= alpha/2` or `p >= 1 - alpha/2`.
    Two,
}

/// Result of a CRT run. The normalized rank is kept as an exact rational
/// `p_num / p_den` so decisions at the `alpha/2` boundary do not depend on
/// float rounding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrtResult {
    #[serde(rename = "M")]
    pub num_counterfeits: usize,
    pub p_num: u64,
    pub p_den: u64,
    pub reject_one_lower: bool,
    pub reject_one_upper: bool,
    pub reject_two: bool,
}

impl CrtResult {
    pub fn p(&self) -> f64 {
        self.p_num as f64 / self.p_den as f64
    }

    pub fn reject(&self, sided: Sided) -> bool {
        match sided {
            Sided::OneLower => self.reject_one_lower,
            Sided::OneUpper => self.reject_one_upper,
            Sided::Two => self.reject_two,
        }
    }
}

/// The normalized rank `(1 + #{j : T(D) >= T(D~_j)}) / (M+1)` as an exact
/// rational `(numerator, M+1)`.
pub fn crt_p(original_dataset_score: f64, counterfeit_dataset_scores: &[f64]) -> Result<(u64, u64)> {
    if counterfeit_dataset_scores.is_empty() {
        return Err(PcrError::domain("crt_p: need at least one counterfeit"));
    }
    if !original_dataset_score.is_finite() {
        return Err(PcrError::domain("crt_p: non-finite dataset score"));
    }
    let num = 1 + counterfeit_dataset_scores
        .iter()
        .filter(|&&t| original_dataset_score >= t)
        .count() as u64;
    Ok((num, counterfeit_dataset_scores.len() as u64 + 1))
}

/// Compare the exact rational `num/den` against a real threshold, guarding
/// against one-ulp float artifacts at the boundary.
fn rational_le(num: u64, den: u64, threshold: f64) -> bool {
    let lhs = num as f64;
    let rhs = threshold * den as f64;
    lhs <= rhs + 4.0 * f64::EPSILON * rhs.abs().max(1.0)
}

fn rational_ge(num: u64, den: u64, threshold: f64) -> bool {
    let lhs = num as f64;
    let rhs = threshold * den as f64;
    lhs >= rhs - 4.0 * f64::EPSILON * rhs.abs().max(1.0)
}

/// The CRT decision for a normalized rank `p = num/den`.
pub fn crt_decide(p_num: u64, p_den: u64, alpha: f64, sided: Sided) -> Result<bool> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PcrError::domain(format!(
            "crt_decide: alpha = {alpha} outside (0, 1)"
        )));
    }
    Ok(match sided {
        Sided::OneLower => rational_le(p_num, p_den, alpha),
        Sided::OneUpper => rational_ge(p_num, p_den, 1.0 - alpha),
        Sided::Two => {
            rational_le(p_num, p_den, 0.5 * alpha) || rational_ge(p_num, p_den, 1.0 - 0.5 * alpha)
        }
    })
}

/// Run the CRT: draw `M` full counterfeit datasets (every `X_i` redrawn from
/// the conditional law), score each, and rank the original among them.
///
/// Counterfeit dataset `j` uses stream `(seed, j)`, so the run is
/// deterministic under any parallel schedule.
pub fn run_crt(
    data: &Dataset,
    sampler: &dyn ConditionalSampler,
    dataset_score: &dyn DatasetScore,
    num_counterfeits: usize,
    alpha: f64,
    seed: u64,
) -> Result<CrtResult> {
    if num_counterfeits < 1 {
        return Err(PcrError::domain("run_crt: M must be at least 1"));
    }
    let original = dataset_score.score_dataset(&data.x, &data.y, &data.z);
    if !original.is_finite() {
        return Err(PcrError::Data {
            index: 0,
            message: format!("dataset score of original data is {original}"),
        });
    }
    let n = data.n();
    let scores: Result<Vec<f64>> = (0..num_counterfeits)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |xt, j| {
                let mut rng = RngStream::new(seed, j as u64);
                for (i, slot) in xt.iter_mut().enumerate() {
                    *slot = sampler.draw(data.z.row(i), &mut rng);
                }
                let t = dataset_score.score_dataset(xt, &data.y, &data.z);
                if !t.is_finite() {
                    return Err(PcrError::Data {
                        index: j,
                        message: format!("dataset score of counterfeit {j} is {t}"),
                    });
                }
                Ok(t)
            },
        )
        .collect();
    let scores = scores?;
    let (p_num, p_den) = crt_p(original, &scores)?;
    Ok(CrtResult {
        num_counterfeits,
        p_num,
        p_den,
        reject_one_lower: crt_decide(p_num, p_den, alpha, Sided::OneLower)?,
        reject_one_upper: crt_decide(p_num, p_den, alpha, Sided::OneUpper)?,
        reject_two: crt_decide(p_num, p_den, alpha, Sided::Two)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SquaredLossScore, SumScore, ZMatrix};
    use crate::data::GaussianLinearSampler;

    #[test]
    fn p_examples() {
        assert_eq!(crt_p(-1.0, &[0.0, 1.0, 2.0, 3.0]).unwrap(), (1, 5));
        assert_eq!(crt_p(9.0, &[0.0, 1.0, 2.0, 3.0]).unwrap(), (5, 5));
        assert_eq!(crt_p(1.5, &[0.0, 1.0, 2.0, 3.0]).unwrap(), (3, 5));
        assert!(crt_p(0.0, &[]).is_err());
    }

    #[test]
    fn decide_examples() {
        // p = 0.5, alpha = 0.1, two-sided: keep
        assert!(!crt_decide(5, 10, 0.1, Sided::Two).unwrap());
        // p = 0.04
        assert!(crt_decide(4, 100, 0.1, Sided::Two).unwrap());
        // p = 0.95, one-upper at alpha = 0.1
        assert!(crt_decide(95, 100, 0.1, Sided::OneUpper).unwrap());
        // boundary: p = alpha/2 exactly rejects
        assert!(crt_decide(5, 100, 0.1, Sided::Two).unwrap());
        assert!(crt_decide(1, 20, 0.1, Sided::Two).unwrap());
        // one step inside the boundary does not
        assert!(!crt_decide(6, 100, 0.1, Sided::Two).unwrap());
    }

    #[test]
    fn run_crt_deterministic() {
        let n = 50;
        let mut rng = RngStream::new(3, 0);
        let x: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let data = Dataset::new(x, y, ZMatrix::empty(n)).unwrap();
        let sampler = GaussianLinearSampler::std_normal();
        let score = SumScore(SquaredLossScore);
        let a = run_crt(&data, &sampler, &score, 99, 0.1, 11).unwrap();
        let b = run_crt(&data, &sampler, &score, 99, 0.1, 11).unwrap();
        assert_eq!(a.p_num, b.p_num);
        assert_eq!(a.p_den, 100);
    }
}
