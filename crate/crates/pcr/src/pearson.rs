//! The PCR test: counterfeit sampling, scoring, ranking, labelling, the
//! Pearson chi-squared statistic over label counts, rejection thresholds and
//! p-values.
//!
//! For each sample `j` the test draws `M = K*L - 1` counterfeits of `X_j`
//! from the conditional law, scores the original and the counterfeits, and
//! records the rank of the original among all `M + 1` scores. Ranks are
//! binned into `L` consecutive blocks of width `K`; under the null
//! hypothesis every label is equally likely, and the statistic
//!
//! ```text
//! U = (L/n) * sum_l (W_l - n/L)^2
//! ```
//!
//! is asymptotically chi-squared with `L - 1` degrees of freedom.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ConditionalSampler, Dataset, ScoreFunction};
use crate::rng::RngStream;
use crate::special::{chi2_cdf, chi2_quantile, Chi2Params};
use crate::{PcrError, Result};

/// Which rejection threshold drives the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdKind {
    /// `L + sqrt(2L/alpha)`; valid at every sample size.
    Finite,
    /// The `1 - alpha` quantile of chi-squared with `L - 1` dof; valid
    /// asymptotically.
    Asym,
}

/// Tie handling when an original score exactly equals a counterfeit score.
///
/// The rank formula counts ties in favour of the original (`>=`). With
/// continuous score laws ties have probability zero and the literal rule is
/// exact; for discrete scores only the random rule keeps the rank uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Literal,
    Random,
}

/// Parameters of one PCR run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PcrConfig {
    /// Number of labels `L >= 2`.
    pub num_labels: usize,
    /// Counterfeit ratio `K >= 1`; the counterfeit count is `M = K*L - 1`.
    pub counterfeit_ratio: usize,
    /// Significance level in (0, 1).
    pub alpha: f64,
    pub threshold_kind: ThresholdKind,
    #[serde(default)]
    pub tie_rule: TieRule,
}

impl PcrConfig {
    pub fn new(num_labels: usize, counterfeit_ratio: usize, alpha: f64) -> Result<Self> {
        let cfg = PcrConfig {
            num_labels,
            counterfeit_ratio,
            alpha,
            threshold_kind: ThresholdKind::Asym,
            tie_rule: TieRule::Literal,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(mut self, kind: ThresholdKind) -> Self {
        self.threshold_kind = kind;
        self
    }

    pub fn with_tie_rule(mut self, rule: TieRule) -> Self {
        self.tie_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(PcrError::domain(format!(
                "PcrConfig: L = {} < 2",
                self.num_labels
            )));
        }
        if self.counterfeit_ratio < 1 {
            return Err(PcrError::domain("PcrConfig: K must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PcrError::domain(format!(
                "PcrConfig: alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Counterfeits per sample, `M = K*L - 1`.
    pub fn num_counterfeits(&self) -> usize {
        self.counterfeit_ratio * self.num_labels - 1
    }
}

/// Per-label sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    w: Vec<u64>,
    n: u64,
}

impl LabelCounts {
    pub fn new(w: Vec<u64>) -> Result<Self> {
        if w.is_empty() {
            return Err(PcrError::domain("LabelCounts: no labels"));
        }
        let n = w.iter().sum();
        Ok(LabelCounts { w, n })
    }

    pub fn from_labels(labels: impl IntoIterator<Item = usize>, num_labels: usize) -> Result<Self> {
        let mut w = vec![0u64; num_labels];
        for l in labels {
            if l < 1 || l > num_labels {
                return Err(PcrError::domain(format!("label {l} outside 1..={num_labels}")));
            }
            w[l - 1] += 1;
        }
        LabelCounts::new(w)
    }

    pub fn counts(&self) -> &[u64] {
        &self.w
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        self.w.len()
    }
}

/// Rank of the original score among `{original} U {counterfeits}`:
/// `1 + #{i : original >= counterfeit_i}`. Ties count for the original.
pub fn rank_among_counterfeits(original_score: f64, counterfeit_scores: &[f64]) -> Result<usize> {
    if counterfeit_scores.is_empty() {
        return Err(PcrError::domain(
            "rank_among_counterfeits: need at least one counterfeit",
        ));
    }
    if !original_score.is_finite() {
        return Err(PcrError::domain("rank_among_counterfeits: non-finite score"));
    }
    Ok(1 + counterfeit_scores
        .iter()
        .filter(|&&t| original_score >= t)
        .count())
}

/// Rank with uniform random tie-breaking: the original is placed uniformly
/// within its block of exactly equal scores.
pub fn rank_with_random_ties(
    original_score: f64,
    counterfeit_scores: &[f64],
    rng: &mut RngStream,
) -> Result<usize> {
    if counterfeit_scores.is_empty() {
        return Err(PcrError::domain(
            "rank_with_random_ties: need at least one counterfeit",
        ));
    }
    let below = counterfeit_scores
        .iter()
        .filter(|&&t| t < original_score)
        .count();
    let tied = counterfeit_scores
        .iter()
        .filter(|&&t| t == original_score)
        .count();
    Ok(1 + below + rng.next_below(tied as u64 + 1) as usize)
}

/// Label of a rank: ranks are partitioned into `L` consecutive blocks
/// `S_l = {(l-1)K + 1, ..., lK}` and the label is the block index,
/// `ceil(rank / K)`.
pub fn assign_label(rank: usize, k: usize, l: usize) -> Result<usize> {
    if rank < 1 || rank > k * l {
        return Err(PcrError::domain(format!(
            "assign_label: rank {rank} outside 1..={}",
            k * l
        )));
    }
    Ok((rank + k - 1) / k)
}

/// The Pearson chi-squared statistic over label counts:
/// `U = (L/n) * sum_l (W_l - n/L)^2`.
pub fn pcr_statistic(counts: &LabelCounts, l: usize) -> f64 {
    debug_assert_eq!(counts.num_labels(), l);
    let n = counts.total() as f64;
    let expected = n / l as f64;
    let ss: f64 = counts
        .counts()
        .iter()
        .map(|&w| {
            let d = w as f64 - expected;
            d * d
        })
        .sum();
    (l as f64 / n) * ss
}

/// Rejection threshold of the requested kind.
pub fn threshold(kind: ThresholdKind, l: usize, alpha: f64) -> Result<f64> {
    if l < 2 {
        return Err(PcrError::domain(format!("threshold: L = {l} < 2")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PcrError::domain(format!(
            "threshold: alpha = {alpha} outside (0, 1)"
        )));
    }
    match kind {
        ThresholdKind::Finite => Ok(l as f64 + (2.0 * l as f64 / alpha).sqrt()),
        ThresholdKind::Asym => chi2_quantile(1.0 - alpha, l as f64 - 1.0),
    }
}

/// Finite-sample p-value: `1` for `U <= L`, else `min(2L/(U-L)^2, 1)`.
/// Super-uniform under the null at every sample size.
pub fn p_value_finite(u: f64, l: usize) -> f64 {
    let lf = l as f64;
    if u <= lf {
        1.0
    } else {
        (2.0 * lf / ((u - lf) * (u - lf))).min(1.0)
    }
}

/// Asymptotic p-value: the upper chi-squared tail `1 - F_{L-1}(U)`.
pub fn p_value_asym(u: f64, l: usize) -> Result<f64> {
    if l < 2 {
        return Err(PcrError::domain(format!("p_value_asym: L = {l} < 2")));
    }
    let params = Chi2Params::central(l as f64 - 1.0)?;
    Ok(1.0 - chi2_cdf(u.max(0.0), &params)?)
}

/// Output of one PCR run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcrResult {
    pub counts: LabelCounts,
    /// The `U` statistic.
    pub statistic: f64,
    /// Threshold of the configured kind.
    pub threshold: f64,
    pub p_finite: f64,
    pub p_asym: f64,
    pub reject: bool,
    /// Per-sample ranks in `[1, M+1]`, in dataset order.
    pub ranks: Vec<usize>,
}

/// The serialized form of a PCR run, as written by the command line tools.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcrReport {
    pub n: usize,
    #[serde(rename = "L")]
    pub num_labels: usize,
    #[serde(rename = "K")]
    pub counterfeit_ratio: usize,
    pub alpha: f64,
    pub counts: Vec<u64>,
    #[serde(rename = "U")]
    pub statistic: f64,
    pub p_finite: f64,
    pub p_asym: f64,
    pub threshold_kind: ThresholdKind,
    pub threshold: f64,
    pub reject: bool,
    pub seed: u64,
}

impl PcrResult {
    pub fn report(&self, cfg: &PcrConfig, seed: u64) -> PcrReport {
        PcrReport {
            n: self.counts.total() as usize,
            num_labels: cfg.num_labels,
            counterfeit_ratio: cfg.counterfeit_ratio,
            alpha: cfg.alpha,
            counts: self.counts.counts().to_vec(),
            statistic: self.statistic,
            p_finite: self.p_finite,
            p_asym: self.p_asym,
            threshold_kind: cfg.threshold_kind,
            threshold: self.threshold,
            reject: self.reject,
            seed,
        }
    }
}

/// Rank one sample against freshly drawn counterfeits. The stream must be
/// the sample's dedicated stream; the tie-break draw (if any) comes after
/// the counterfeit draws.
pub(crate) fn rank_one_sample(
    x: f64,
    y: f64,
    z: &[f64],
    sampler: &dyn ConditionalSampler,
    score: &dyn ScoreFunction,
    tie_rule: TieRule,
    scratch: &mut Vec<f64>,
    m: usize,
    rng: &mut RngStream,
    index: usize,
) -> Result<usize> {
    scratch.resize(m, 0.0);
    sampler.draw_many(z, rng, scratch);
    let t = score.score(x, y, z);
    if !t.is_finite() {
        return Err(PcrError::Data {
            index,
            message: format!("score of original sample is {t}"),
        });
    }
    for (i, s) in scratch.iter_mut().enumerate() {
        let v = score.score(*s, y, z);
        if !v.is_finite() {
            return Err(PcrError::Data {
                index,
                message: format!("score of counterfeit {i} is {v}"),
            });
        }
        *s = v;
    }
    match tie_rule {
        TieRule::Literal => rank_among_counterfeits(t, scratch),
        TieRule::Random => rank_with_random_ties(t, scratch, rng),
    }
}

/// Run the PCR test.
///
/// Sample `j` uses the stream `(seed, j)`, so results are deterministic for
/// a given seed no matter how work is scheduled, and a subsample of the
/// dataset reproduces the counterfeits of its retained rows.
pub fn run_pcr(
    data: &Dataset,
    sampler: &dyn ConditionalSampler,
    score: &dyn ScoreFunction,
    cfg: &PcrConfig,
    seed: u64,
) -> Result<PcrResult> {
    cfg.validate()?;
    let n = data.n();
    let m = cfg.num_counterfeits();

    let ranks: Result<Vec<usize>> = (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(m),
            |scratch, j| {
                let mut rng = RngStream::new(seed, j as u64);
                rank_one_sample(
                    data.x[j],
                    data.y[j],
                    data.z.row(j),
                    sampler,
                    score,
                    cfg.tie_rule,
                    scratch,
                    m,
                    &mut rng,
                    j,
                )
            },
        )
        .collect();
    let ranks = ranks?;

    finish_from_ranks(ranks, cfg)
}

/// Aggregate ranks into counts, the statistic, p-values and the decision.
pub(crate) fn finish_from_ranks(ranks: Vec<usize>, cfg: &PcrConfig) -> Result<PcrResult> {
    let k = cfg.counterfeit_ratio;
    let l = cfg.num_labels;
    let labels = ranks
        .iter()
        .map(|&r| assign_label(r, k, l))
        .collect::<Result<Vec<_>>>()?;
    let counts = LabelCounts::from_labels(labels, l)?;
    let statistic = pcr_statistic(&counts, l);
    let thr = threshold(cfg.threshold_kind, l, cfg.alpha)?;
    let p_finite = p_value_finite(statistic, l);
    let p_asym = p_value_asym(statistic, l)?;
    Ok(PcrResult {
        reject: statistic >= thr,
        counts,
        statistic,
        threshold: thr,
        p_finite,
        p_asym,
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GaussianLinearSampler, SquaredLossScore, ZMatrix};

    #[test]
    fn rank_examples() {
        assert_eq!(rank_among_counterfeits(-5.0, &[1.0, 2.0, 3.0]).unwrap(), 1);
        assert_eq!(rank_among_counterfeits(9.0, &[1.0, 2.0, 3.0]).unwrap(), 4);
        assert_eq!(rank_among_counterfeits(2.0, &[1.0, 2.0, 3.0]).unwrap(), 3);
        assert!(rank_among_counterfeits(0.0, &[]).is_err());
    }

    #[test]
    fn rank_invariant_under_counterfeit_permutation() {
        let mut c = vec![0.3, -1.0, 4.0, 0.3, 2.0];
        let r = rank_among_counterfeits(0.5, &c).unwrap();
        c.reverse();
        assert_eq!(rank_among_counterfeits(0.5, &c).unwrap(), r);
        c.swap(0, 3);
        assert_eq!(rank_among_counterfeits(0.5, &c).unwrap(), r);
    }

    #[test]
    fn random_tie_rank_spans_tied_block() {
        let counterfeits = vec![1.0, 1.0, 1.0, 0.0];
        let mut rng = RngStream::new(1, 0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let r = rank_with_random_ties(1.0, &counterfeits, &mut rng).unwrap();
            assert!((2..=5).contains(&r));
            seen.insert(r);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn label_examples() {
        assert_eq!(assign_label(1, 4, 5).unwrap(), 1);
        assert_eq!(assign_label(20, 4, 5).unwrap(), 5);
        assert_eq!(assign_label(5, 4, 5).unwrap(), 2);
        assert!(assign_label(0, 4, 5).is_err());
        assert!(assign_label(21, 4, 5).is_err());
    }

    #[test]
    fn statistic_examples() {
        let even = LabelCounts::new(vec![2, 2, 2, 2]).unwrap();
        assert_eq!(pcr_statistic(&even, 4), 0.0);
        let onehot = LabelCounts::new(vec![10, 0]).unwrap();
        // W = (n, 0, ..., 0) gives n(L-1)
        assert!((pcr_statistic(&onehot, 2) - 10.0).abs() < 1e-12);
        let w = LabelCounts::new(vec![7, 3]).unwrap();
        assert!((pcr_statistic(&w, 2) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold(ThresholdKind::Finite, 5, 0.1).unwrap() - 15.0).abs() < 1e-12);
        assert!(
            (threshold(ThresholdKind::Finite, 2, 0.5).unwrap() - (2.0 + 8.0f64.sqrt())).abs()
                < 1e-12
        );
        // chi2_4(0.9), cross-checked by the quantile oracle in tests/
        assert!((threshold(ThresholdKind::Asym, 5, 0.1).unwrap() - 7.7794).abs() < 1e-3);
        assert!(threshold(ThresholdKind::Asym, 1, 0.1).is_err());
    }

    #[test]
    fn p_value_examples() {
        assert_eq!(p_value_finite(5.0, 5), 1.0);
        let l = 5.0f64;
        assert!((p_value_finite(l + (2.0 * l).sqrt(), 5) - 1.0).abs() < 1e-12);
        assert!((p_value_finite(l + (20.0 * l).sqrt(), 5) - 0.1).abs() < 1e-12);
        assert_eq!(p_value_asym(0.0, 3).unwrap(), 1.0);
        assert!(
            (p_value_asym(2.0 * std::f64::consts::LN_2, 3).unwrap() - 0.5).abs() < 1e-12
        );
        assert!((p_value_asym(7.7794, 5).unwrap() - 0.1).abs() < 1e-4);
    }

    #[test]
    fn p_value_finite_decreasing_above_l() {
        let mut prev = 1.0;
        for i in 0..100 {
            let u = 5.0 + i as f64 * 0.5;
            let p = p_value_finite(u, 5);
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn single_sample_one_hot() {
        // n = 1, L = 2: counts are one-hot and U = L - 1 = 1
        let data = Dataset::new(vec![0.3], vec![1.0], ZMatrix::empty(1)).unwrap();
        let cfg = PcrConfig::new(2, 1, 0.1).unwrap();
        let res = run_pcr(
            &data,
            &GaussianLinearSampler::std_normal(),
            &SquaredLossScore,
            &cfg,
            99,
        )
        .unwrap();
        assert_eq!(res.counts.total(), 1);
        assert!((res.statistic - 1.0).abs() < 1e-12);
        assert_eq!(res.ranks.len(), 1);
    }

    #[test]
    fn run_pcr_deterministic_and_complete() {
        let n = 200;
        let mut rng = RngStream::new(5, 0);
        let x: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let data = Dataset::new(x, y, ZMatrix::empty(n)).unwrap();
        let cfg = PcrConfig::new(5, 4, 0.1).unwrap();
        let sampler = GaussianLinearSampler::std_normal();
        let a = run_pcr(&data, &sampler, &SquaredLossScore, &cfg, 7).unwrap();
        let b = run_pcr(&data, &sampler, &SquaredLossScore, &cfg, 7).unwrap();
        assert_eq!(a.ranks, b.ranks);
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.counts.total() as usize, n);
        assert!(a.ranks.iter().all(|&r| (1..=20).contains(&r)));
        assert_eq!(a.reject, a.statistic >= a.threshold);
    }
}
