//! Exact PCR simulation driven by an ordinal dominance curve.
//!
//! For a sample whose score has conditional rank-CDF value `u`, the rank
//! among `M` i.i.d. counterfeits is `1 + Binomial(M, u)` exactly (continuous
//! scores). Simulating at the rank level removes the per-counterfeit cost
//! entirely, which makes power checks feasible at the astronomically large
//! counterfeit ratios the theory's constants demand.

use rand::distributions::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;

use crate::oracle::models::CurveOdcModel;
use crate::pearson::{pcr_statistic, threshold, LabelCounts, ThresholdKind};
use crate::rng::{RngStream, StreamRngCore};
use crate::{PcrError, Result};

/// Power of the PCR test on a synthetic curve model, simulated exactly at
/// the rank level.
///
/// `counterfeit_ratio` is a `u64`: values far beyond anything a draw-level
/// simulation could touch are fine as long as `K * L` fits in a `u64`.
pub fn simulate_curve_pcr_power(
    curve: &CurveOdcModel,
    n: usize,
    num_labels: usize,
    counterfeit_ratio: u64,
    alpha: f64,
    kind: ThresholdKind,
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    if num_labels < 2 {
        return Err(PcrError::domain("simulate_curve_pcr_power: L < 2"));
    }
    let l = num_labels as u64;
    let m = counterfeit_ratio
        .checked_mul(l)
        .and_then(|kl| kl.checked_sub(1))
        .ok_or_else(|| PcrError::domain("simulate_curve_pcr_power: K*L overflows u64"))?;
    let thr = threshold(kind, num_labels, alpha)?;

    let rejections: Result<Vec<bool>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::new(seed, rep as u64);
            let mut w = vec![0u64; num_labels];
            for _ in 0..n {
                // original score's counterfeit-CDF value: V ~ U(0,1) mapped
                // through the inverse ODC
                let u = curve.r_inverse(rng.next_f64());
                let count = if u <= 0.0 {
                    0
                } else if u >= 1.0 {
                    m
                } else {
                    let bin = Binomial::new(m, u).map_err(|e| {
                        PcrError::numerical(format!("binomial sampler: {e}"))
                    })?;
                    bin.sample(&mut StreamRngCore(&mut rng))
                };
                let label = (count / counterfeit_ratio) as usize; // 0-based
                w[label] += 1;
            }
            let counts = LabelCounts::new(w)?;
            Ok(pcr_statistic(&counts, num_labels) >= thr)
        })
        .collect();
    let rejections = rejections?;
    Ok(rejections.iter().filter(|&&r| r).count() as f64 / replicates as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_curve_size_is_controlled() {
        let curve = CurveOdcModel::from_relative_density(|_| 1.0, 64).unwrap();
        let rate = simulate_curve_pcr_power(
            &curve,
            500,
            5,
            4,
            0.1,
            ThresholdKind::Finite,
            400,
            7,
        )
        .unwrap();
        assert!(rate <= 0.1, "finite-threshold size {rate} above alpha");
    }

    #[test]
    fn strong_curve_has_power() {
        let curve =
            CurveOdcModel::from_relative_density(|u| if u > 0.5 { 1.8 } else { 0.2 }, 64).unwrap();
        let rate = simulate_curve_pcr_power(
            &curve,
            500,
            5,
            4,
            0.1,
            ThresholdKind::Asym,
            200,
            11,
        )
        .unwrap();
        assert!(rate > 0.95, "power {rate}");
    }

    #[test]
    fn huge_counterfeit_ratio_is_accepted() {
        let curve = CurveOdcModel::from_relative_density(|_| 1.0, 64).unwrap();
        // K = 1e15, L = 4: rank-level simulation only
        let rate = simulate_curve_pcr_power(
            &curve,
            200,
            4,
            1_000_000_000_000_000,
            0.1,
            ThresholdKind::Finite,
            50,
            3,
        )
        .unwrap();
        assert!(rate <= 0.1);
    }
}
