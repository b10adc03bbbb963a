//! Synthetic models and the replicated experiment runner.
//!
//! Every experiment is described by an [`ExperimentSpec`] (deserializable
//! from TOML), runs a configured test over independent replicates with
//! per-replicate seeded streams, and reports rejection rates with Monte
//! Carlo standard errors. Results are bit-identical for a fixed seed under
//! any thread count: all randomness is keyed by `(seed, replicate)` and
//! reductions are ordered.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crt::{self, Sided};
use crate::data::{
    Dataset, GaussianLinearSampler, OlsResidualScore, ResidualLinearScore, ScoreFunction,
    SquaredLossScore, SumScore, ZMatrix,
};
use crate::oracle::models::{CrtFailureOdcModel, QuadraticOdcModel};
use crate::parameter_free::{self, CounterfeitSharing, PKind};
use crate::pearson::{self, PcrConfig, ThresholdKind};
use crate::rng::{derive_seed, RngStream};
use crate::robust::{self, pinsker_delta_gaussian, RobustConfig};
use crate::{PcrError, Result};

/// Which synthetic model generates the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// `X ~ N(0,1)`, `Y = 1/sqrt(1e-6 + X^2) + eps` (the CRT failure
    /// example; `theta` fixed at 1e-3).
    CrtFailureExample,
    /// Same regression with a configurable `theta`.
    ThetaFamily,
    /// `Z ~ N(0, I_p)`, `X|Z ~ N(v'Z, 1)`, `Y|X,Z ~ N((u'Z)^2, 1)`.
    QuadraticNull,
    /// Quadratic model with response shift `2X`.
    QuadraticShift,
    /// Quadratic model with configurable shift `aX`.
    QuadraticA,
    /// Quadratic model with shift `aX` whose counterfeits are sampled from
    /// `N(v'Z, (1+eta)^2)` instead of the true law.
    RobustMismatch,
}

/// Model parameters. Fields irrelevant to a given `id` are ignored.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub n: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_p_dim")]
    pub p_dim: usize,
}

fn default_theta() -> f64 {
    1e-3
}

fn default_p_dim() -> usize {
    20
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(PcrError::domain("ModelSpec: n must be at least 1"));
        }
        match self.id {
            ModelId::CrtFailureExample | ModelId::ThetaFamily => {
                if !(self.theta > 0.0) {
                    return Err(PcrError::domain("ModelSpec: theta must be positive"));
                }
            }
            ModelId::RobustMismatch => {
                if !(self.eta > -1.0) {
                    return Err(PcrError::domain("ModelSpec: eta must exceed -1"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn is_quadratic(&self) -> bool {
        matches!(
            self.id,
            ModelId::QuadraticNull
                | ModelId::QuadraticShift
                | ModelId::QuadraticA
                | ModelId::RobustMismatch
        )
    }

    fn shift(&self) -> f64 {
        match self.id {
            ModelId::QuadraticNull => 0.0,
            ModelId::QuadraticShift => 2.0,
            ModelId::QuadraticA | ModelId::RobustMismatch => self.a,
            _ => 0.0,
        }
    }

    fn effective_theta(&self) -> f64 {
        match self.id {
            ModelId::CrtFailureExample => 1e-3,
            _ => self.theta,
        }
    }

    pub fn descriptor(&self) -> String {
        match self.id {
            ModelId::CrtFailureExample => "crt_failure_example".into(),
            ModelId::ThetaFamily => format!("theta_family({:e})", self.theta),
            ModelId::QuadraticNull => "quadratic_null".into(),
            ModelId::QuadraticShift => "quadratic_shift".into(),
            ModelId::QuadraticA => format!("quadratic_a({})", self.a),
            ModelId::RobustMismatch => format!("robust_mismatch(a={},eta={})", self.a, self.eta),
        }
    }

    /// Instantiate the model: for the quadratic family this draws the
    /// coefficient vectors `u, v` from the given stream.
    pub fn instantiate(&self, coeff_rng: &mut RngStream) -> Result<ModelInstance> {
        self.validate()?;
        let (u, v) = if self.is_quadratic() {
            let u: Vec<f64> = (0..self.p_dim).map(|_| coeff_rng.next_gaussian()).collect();
            let v: Vec<f64> = (0..self.p_dim).map(|_| coeff_rng.next_gaussian()).collect();
            (u, v)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(ModelInstance { spec: *self, u, v })
    }
}

/// A model with its coefficient vectors realized.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub spec: ModelSpec,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ModelInstance {
    /// Generate a dataset from this model.
    pub fn gen_dataset(&self, rng: &mut RngStream) -> Result<Dataset> {
        let n = self.spec.n;
        if self.spec.is_quadratic() {
            let p = self.spec.p_dim;
            let a = self.spec.shift();
            let mut z = Vec::with_capacity(n * p);
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row_start = z.len();
                for _ in 0..p {
                    z.push(rng.next_gaussian());
                }
                let zrow = &z[row_start..];
                let m = crate::data::dot(&self.v, zrow);
                let s = crate::data::dot(&self.u, zrow);
                let xi = m + rng.next_gaussian();
                x.push(xi);
                y.push(s * s + a * xi + rng.next_gaussian());
            }
            Dataset::new(x, y, ZMatrix::new(z, p)?)
        } else {
            let theta = self.spec.effective_theta();
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let xi = rng.next_gaussian();
                x.push(xi);
                y.push(1.0 / (theta * theta + xi * xi).sqrt() + rng.next_gaussian());
            }
            Dataset::new(x, y, ZMatrix::empty(n))
        }
    }

    /// The true conditional law `L(X|Z)`.
    pub fn true_sampler(&self) -> GaussianLinearSampler {
        if self.spec.is_quadratic() {
            GaussianLinearSampler {
                coeffs: self.v.clone(),
                intercept: 0.0,
                sd: 1.0,
            }
        } else {
            GaussianLinearSampler::std_normal()
        }
    }

    /// The misspecified sampler, when the model defines one.
    pub fn approx_sampler(&self) -> Option<GaussianLinearSampler> {
        if self.spec.id == ModelId::RobustMismatch {
            Some(GaussianLinearSampler {
                coeffs: self.v.clone(),
                intercept: 0.0,
                sd: 1.0 + self.spec.eta,
            })
        } else {
            None
        }
    }

    /// The matching ODC model for the power oracle (quadratic family).
    pub fn odc_quadratic(&self) -> Result<QuadraticOdcModel> {
        if !self.spec.is_quadratic() {
            return Err(PcrError::domain("odc_quadratic: not a quadratic model"));
        }
        let m = QuadraticOdcModel::new(self.u.clone(), self.v.clone(), self.spec.shift())?;
        if self.spec.id == ModelId::RobustMismatch {
            m.with_counterfeit_sd(1.0 + self.spec.eta)
        } else {
            Ok(m)
        }
    }

    /// The matching ODC model for the power oracle (regression family).
    pub fn odc_crt_failure(&self) -> Result<CrtFailureOdcModel> {
        if self.spec.is_quadratic() {
            return Err(PcrError::domain("odc_crt_failure: not a regression model"));
        }
        CrtFailureOdcModel::new(self.spec.effective_theta())
    }

    /// The score the paper pairs with this model.
    pub fn default_score(&self) -> String {
        if self.spec.is_quadratic() {
            "residual_linear_z1".into()
        } else {
            "sq_loss_xy".into()
        }
    }
}

/// Build one of the named score functions.
///
/// Recognized: `residual_linear_z1`, `sq_loss_xy`,
/// `ols_residual(b0,b1)`.
pub fn score_builtin(name: &str) -> Result<Box<dyn ScoreFunction>> {
    let name = name.trim();
    match name {
        "residual_linear_z1" => Ok(Box::new(ResidualLinearScore)),
        "sq_loss_xy" => Ok(Box::new(SquaredLossScore)),
        _ => {
            if let Some(args) = name
                .strip_prefix("ols_residual(")
                .and_then(|s| s.strip_suffix(')'))
            {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 2 {
                    return Err(PcrError::Config(format!(
                        "ols_residual takes two arguments, got {name:?}"
                    )));
                }
                let b0: f64 = parts[0].trim().parse().map_err(|_| {
                    PcrError::Config(format!("bad b0 in {name:?}"))
                })?;
                let b1: f64 = parts[1].trim().parse().map_err(|_| {
                    PcrError::Config(format!("bad b1 in {name:?}"))
                })?;
                Ok(Box::new(OlsResidualScore { b0, b1 }))
            } else {
                Err(PcrError::Config(format!("unknown score function {name:?}")))
            }
        }
    }
}

/// Threshold selection for experiments: run one or track both from the
/// same replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSel {
    Finite,
    Asym,
    Both,
}

impl ThresholdSel {
    fn kinds(&self) -> Vec<ThresholdKind> {
        match self {
            ThresholdSel::Finite => vec![ThresholdKind::Finite],
            ThresholdSel::Asym => vec![ThresholdKind::Asym],
            ThresholdSel::Both => vec![ThresholdKind::Finite, ThresholdKind::Asym],
        }
    }
}

/// Which test runs on each replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    Pcr {
        l: usize,
        k: usize,
        threshold: ThresholdSel,
    },
    Crt {
        m: usize,
        sided: Sided,
    },
    PfPcr {
        k: usize,
        grid: Vec<usize>,
        p_kind: PKind,
    },
    RobustPcr {
        l: usize,
        k: usize,
        threshold: ThresholdSel,
        /// Total-variation radius; defaults to the Pinsker bound computed
        /// from the model's `eta`.
        #[serde(default)]
        delta: Option<f64>,
    },
}

impl TestKind {
    fn descriptor(&self) -> String {
        match self {
            TestKind::Pcr { .. } => "pcr".into(),
            TestKind::Crt { .. } => "crt".into(),
            TestKind::PfPcr { .. } => "pf_pcr".into(),
            TestKind::RobustPcr { .. } => "robust_pcr".into(),
        }
    }
}

/// When the quadratic coefficient vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffMode {
    /// One draw per experiment, shared by all replicates.
    #[default]
    PerExperiment,
    /// Fresh draw per replicate (rates then average over the coefficient
    /// law, which is how the reference power figures behave).
    PerReplicate,
}

/// A replicated Monte Carlo study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelSpec,
    pub test: TestKind,
    pub alpha: f64,
    /// Score function name; defaults to the model's canonical score.
    #[serde(default)]
    pub score: Option<String>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub coeff_mode: CoeffMode,
}

/// One output row: a rejection rate under one threshold variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub test: String,
    pub l: usize,
    pub k: usize,
    pub alpha: f64,
    pub threshold: String,
    pub replicates: usize,
    pub rate: f64,
    pub se: f64,
}

/// The result of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Wall-clock seconds; excluded from serialized output unless timing
    /// is requested, so that equal seeds give byte-identical files.
    #[serde(skip)]
    pub wall_secs: f64,
}

// stream tags for the independent randomness lanes of an experiment
const LANE_DATA: u64 = 1;
const LANE_TEST: u64 = 2;
const LANE_COEFF_EXPERIMENT: u64 = 3;
const LANE_COEFF_REPLICATE: u64 = 4;

/// Run a replicated experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.model.validate()?;
    if spec.replicates == 0 {
        return Err(PcrError::domain("run_experiment: replicates must be >= 1"));
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(PcrError::domain("run_experiment: alpha outside (0, 1)"));
    }
    let score_name = spec
        .score
        .clone()
        .unwrap_or_else(|| ModelInstance {
            spec: spec.model,
            u: vec![],
            v: vec![],
        }
        .default_score());
    let score = score_builtin(&score_name)?;

    let shared_instance = match spec.coeff_mode {
        CoeffMode::PerExperiment => {
            let mut coeff_rng = RngStream::new(derive_seed(spec.seed, LANE_COEFF_EXPERIMENT), 0);
            Some(spec.model.instantiate(&mut coeff_rng)?)
        }
        CoeffMode::PerReplicate => None,
    };

    let start = Instant::now();
    let outcomes: Result<Vec<Vec<bool>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let instance = match &shared_instance {
                Some(inst) => inst.clone(),
                None => {
                    let mut coeff_rng = RngStream::new(
                        derive_seed(derive_seed(spec.seed, LANE_COEFF_REPLICATE), rep as u64),
                        0,
                    );
                    spec.model.instantiate(&mut coeff_rng)?
                }
            };
            let mut data_rng =
                RngStream::new(derive_seed(derive_seed(spec.seed, LANE_DATA), rep as u64), 0);
            let data = instance.gen_dataset(&mut data_rng)?;
            let test_seed = derive_seed(derive_seed(spec.seed, LANE_TEST), rep as u64);
            run_single(spec, &instance, &data, score.as_ref(), test_seed)
        })
        .collect();
    let outcomes = outcomes?;
    let wall_secs = start.elapsed().as_secs_f64();

    let variants = variant_names(&spec.test);
    let reps = spec.replicates;
    let mut rows = Vec::new();
    for (vi, variant) in variants.iter().enumerate() {
        let hits = outcomes.iter().filter(|o| o[vi]).count();
        let rate = hits as f64 / reps as f64;
        let se = (rate * (1.0 - rate) / reps as f64).sqrt();
        let (l, k) = test_l_k(&spec.test);
        rows.push(ReportRow {
            experiment: spec.name.clone(),
            model: spec.model.descriptor(),
            test: spec.test.descriptor(),
            l,
            k,
            alpha: spec.alpha,
            threshold: variant.clone(),
            replicates: reps,
            rate,
            se,
        });
    }
    Ok(ExperimentReport { rows, wall_secs })
}

fn variant_names(test: &TestKind) -> Vec<String> {
    match test {
        TestKind::Pcr { threshold, .. } | TestKind::RobustPcr { threshold, .. } => threshold
            .kinds()
            .iter()
            .map(|k| match k {
                ThresholdKind::Finite => "finite".to_string(),
                ThresholdKind::Asym => "asym".to_string(),
            })
            .collect(),
        TestKind::Crt { sided, .. } => vec![match sided {
            Sided::OneLower => "one_lower".into(),
            Sided::OneUpper => "one_upper".into(),
            Sided::Two => "two".into(),
        }],
        TestKind::PfPcr { p_kind, .. } => vec![match p_kind {
            PKind::Finite => "finite".into(),
            PKind::Asym => "asym".into(),
        }],
    }
}

fn test_l_k(test: &TestKind) -> (usize, usize) {
    match test {
        TestKind::Pcr { l, k, .. } | TestKind::RobustPcr { l, k, .. } => (*l, *k),
        TestKind::Crt { m, .. } => (0, *m),
        TestKind::PfPcr { k, .. } => (0, *k),
    }
}

fn run_single(
    spec: &ExperimentSpec,
    instance: &ModelInstance,
    data: &Dataset,
    score: &dyn ScoreFunction,
    test_seed: u64,
) -> Result<Vec<bool>> {
    let sampler = instance.true_sampler();
    match &spec.test {
        TestKind::Pcr { l, k, threshold } => {
            let cfg = PcrConfig::new(*l, *k, spec.alpha)?;
            let res = pearson::run_pcr(data, &sampler, score, &cfg, test_seed)?;
            Ok(threshold
                .kinds()
                .iter()
                .map(|kind| {
                    let thr = pearson::threshold(*kind, *l, spec.alpha)?;
                    Ok(res.statistic >= thr)
                })
                .collect::<Result<Vec<bool>>>()?)
        }
        TestKind::Crt { m, sided } => {
            let dataset_score = SumScore(ScoreRef(score));
            let res = crt::run_crt(data, &sampler, &dataset_score, *m, spec.alpha, test_seed)?;
            Ok(vec![res.reject(*sided)])
        }
        TestKind::PfPcr { k, grid, p_kind } => {
            let res = parameter_free::run_parameter_free(
                data,
                &sampler,
                score,
                *k,
                grid,
                spec.alpha,
                *p_kind,
                CounterfeitSharing::Fresh,
                test_seed,
            )?;
            Ok(vec![res.reject])
        }
        TestKind::RobustPcr {
            l,
            k,
            threshold,
            delta,
        } => {
            let counterfeit_sampler = instance.approx_sampler().unwrap_or_else(|| sampler.clone());
            let delta = match delta {
                Some(d) => *d,
                None => pinsker_delta_gaussian(spec.model.eta)?,
            };
            let cfg = RobustConfig::new(delta, PcrConfig::new(*l, *k, spec.alpha)?)?;
            let res = robust::run_robust_pcr(data, &counterfeit_sampler, score, &cfg, test_seed)?;
            Ok(threshold
                .kinds()
                .iter()
                .map(|kind| {
                    let thr = pearson::threshold(*kind, *l, spec.alpha)?;
                    Ok(res.pcr.statistic >= thr)
                })
                .collect::<Result<Vec<bool>>>()?)
        }
    }
}

/// Adapter: treat a `&dyn ScoreFunction` as a `ScoreFunction`.
struct ScoreRef<'a>(&'a dyn ScoreFunction);

impl ScoreFunction for ScoreRef<'_> {
    fn score(&self, x: f64, y: f64, z: &[f64]) -> f64 {
        self.0.score(x, y, z)
    }

    fn descriptor(&self) -> String {
        self.0.descriptor()
    }
}

/// A TOML experiment file: one or more `[[experiment]]` tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub experiment: Vec<ExperimentSpec>,
}

impl ExperimentFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PcrError::Config(format!("experiment toml: {e}")))
    }
}

pub const REPORT_CSV_HEADER: &str =
    "experiment,model,test,L,K,alpha,threshold,replicates,rate,se,seconds";

/// Write reports as CSV. `include_timing` controls the `seconds` column;
/// leaving it empty (the default) keeps equal-seed outputs byte-identical.
pub fn write_reports_csv<W: Write>(
    mut out: W,
    reports: &[ExperimentReport],
    include_timing: bool,
) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for report in reports {
        for row in &report.rows {
            let seconds = if include_timing {
                format!("{:.3}", report.wall_secs)
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.experiment,
                row.model,
                row.test,
                row.l,
                row.k,
                row.alpha,
                row.threshold,
                row.replicates,
                row.rate,
                row.se,
                seconds
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_null_spec() -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            model: ModelSpec {
                id: ModelId::QuadraticNull,
                n: 40,
                theta: 1e-3,
                a: 0.0,
                eta: 0.0,
                p_dim: 5,
            },
            test: TestKind::Pcr {
                l: 4,
                k: 2,
                threshold: ThresholdSel::Both,
            },
            alpha: 0.1,
            score: None,
            replicates: 50,
            seed: 99,
            coeff_mode: CoeffMode::PerExperiment,
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let spec = small_null_spec();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.rate, rb.rate);
            assert_eq!(ra.se, rb.se);
        }
    }

    #[test]
    fn fixed_seed_identical_datasets() {
        let spec = ModelSpec {
            id: ModelId::QuadraticShift,
            n: 10,
            theta: 1e-3,
            a: 0.0,
            eta: 0.0,
            p_dim: 3,
        };
        let mut c1 = RngStream::new(5, 0);
        let mut c2 = RngStream::new(5, 0);
        let i1 = spec.instantiate(&mut c1).unwrap();
        let i2 = spec.instantiate(&mut c2).unwrap();
        assert_eq!(i1.u, i2.u);
        let mut d1 = RngStream::new(7, 1);
        let mut d2 = RngStream::new(7, 1);
        assert_eq!(
            i1.gen_dataset(&mut d1).unwrap(),
            i2.gen_dataset(&mut d2).unwrap()
        );
    }

    #[test]
    fn crt_failure_decorrelates_x_y() {
        // even regression kills the linear term: corr(X, Y) ~ 0 but
        // |X| strongly predicts Y
        let spec = ModelSpec {
            id: ModelId::CrtFailureExample,
            n: 20_000,
            theta: 1e-3,
            a: 0.0,
            eta: 0.0,
            p_dim: 0,
        };
        let inst = spec.instantiate(&mut RngStream::new(1, 0)).unwrap();
        let data = inst.gen_dataset(&mut RngStream::new(2, 0)).unwrap();
        let n = data.n() as f64;
        let mx = data.x.iter().sum::<f64>() / n;
        let my = data.y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut cov_abs = 0.0;
        let mut m_abs = 0.0;
        for i in 0..data.n() {
            cov += (data.x[i] - mx) * (data.y[i] - my);
            m_abs += data.x[i].abs();
        }
        m_abs /= n;
        for i in 0..data.n() {
            cov_abs += (data.x[i].abs() - m_abs) * (data.y[i] - my);
        }
        cov /= n;
        cov_abs /= n;
        assert!(cov.abs() < 0.6, "linear covariance {cov}");
        assert!(cov_abs < -1.0, "|X| should anti-predict Y, got {cov_abs}");
    }

    #[test]
    fn score_builtin_parsing() {
        assert!(score_builtin("residual_linear_z1").is_ok());
        assert!(score_builtin("sq_loss_xy").is_ok());
        let s = score_builtin("ols_residual(1.0, 2.0)").unwrap();
        assert_eq!(s.score(1.0, 3.0, &[]), 0.0);
        assert!(score_builtin("nope").is_err());
        assert!(score_builtin("ols_residual(1.0)").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
[[experiment]]
name = "size_check"
alpha = 0.1
replicates = 10
seed = 42

[experiment.model]
id = "quadratic_null"
n = 100

[experiment.test]
kind = "pcr"
l = 5
k = 4
threshold = "both"
"#;
        let file = ExperimentFile::from_toml(text).unwrap();
        assert_eq!(file.experiment.len(), 1);
        let spec = &file.experiment[0];
        assert_eq!(spec.model.p_dim, 20);
        assert!(matches!(spec.test, TestKind::Pcr { l: 5, k: 4, .. }));
        let report = run_experiment(spec).unwrap();
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn csv_output_shape() {
        let spec = small_null_spec();
        let report = run_experiment(&spec).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[report], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("t,quadratic_null,pcr,4,2,0.1,finite,50,"));
        assert!(row.ends_with(','), "seconds column empty by default: {row}");
    }
}
