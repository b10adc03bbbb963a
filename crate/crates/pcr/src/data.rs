//! Datasets, conditional samplers and score functions.
//!
//! A [`Dataset`] holds `n` rows of `(x, y, z)` with `z` a possibly empty real
//! vector. The CSV layout is a header `x,y,z1,...,zq` followed by one row per
//! sample, all fields plain IEEE-754 decimal text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{PcrError, Result};

/// An `n x q` row-major matrix of confounder values (`q` may be zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMatrix {
    values: Vec<f64>,
    cols: usize,
}

impl ZMatrix {
    pub fn new(values: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 {
            if !values.is_empty() {
                return Err(PcrError::domain("ZMatrix: q = 0 but values nonempty"));
            }
        } else if values.len() % cols != 0 {
            return Err(PcrError::domain(format!(
                "ZMatrix: {} values not divisible by q = {cols}",
                values.len()
            )));
        }
        Ok(ZMatrix { values, cols })
    }

    pub fn empty(rows: usize) -> Self {
        let _ = rows;
        ZMatrix {
            values: Vec::new(),
            cols: 0,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        if self.cols == 0 {
            &[]
        } else {
            &self.values[i * self.cols..(i + 1) * self.cols]
        }
    }
}

/// One dataset: `x`, `y` and the confounder matrix `z`, all with `n` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: ZMatrix,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: ZMatrix) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(PcrError::domain("Dataset: n must be at least 1"));
        }
        if y.len() != n {
            return Err(PcrError::domain(format!(
                "Dataset: x has {n} rows but y has {}",
                y.len()
            )));
        }
        if z.cols > 0 && z.values.len() != n * z.cols {
            return Err(PcrError::domain(format!(
                "Dataset: x has {n} rows but z has {}",
                z.values.len() / z.cols
            )));
        }
        for (i, v) in x.iter().chain(y.iter()).chain(z.values.iter()).enumerate() {
            if !v.is_finite() {
                return Err(PcrError::Data {
                    index: i,
                    message: format!("non-finite entry {v}"),
                });
            }
        }
        Ok(Dataset { x, y, z })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn q(&self) -> usize {
        self.z.cols()
    }

    /// Read a dataset from CSV with header `x,y,z1,...,zq`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(PcrError::Config(format!(
                "dataset csv must start with columns x,y (got {:?})",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        for (k, name) in headers.iter().skip(2).enumerate() {
            let expect = format!("z{}", k + 1);
            if name != expect {
                return Err(PcrError::Config(format!(
                    "dataset csv column {} should be {expect}, got {name}",
                    k + 3
                )));
            }
        }
        let q = headers.len() - 2;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |field: &str| -> Result<f64> {
                field.trim().parse::<f64>().map_err(|_| PcrError::Data {
                    index: row_idx,
                    message: format!("unparseable number {field:?}"),
                })
            };
            if record.len() != q + 2 {
                return Err(PcrError::Data {
                    index: row_idx,
                    message: format!("expected {} fields, got {}", q + 2, record.len()),
                });
            }
            x.push(parse(&record[0])?);
            y.push(parse(&record[1])?);
            for k in 0..q {
                z.push(parse(&record[2 + k])?);
            }
        }
        Dataset::new(x, y, ZMatrix::new(z, q)?)
    }

    /// Write the dataset in the same CSV layout.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["x".to_string(), "y".to_string()];
        for k in 1..=self.q() {
            header.push(format!("z{k}"));
        }
        writer.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.x[i].to_string(), self.y[i].to_string()];
            for v in self.z.row(i) {
                row.push(v.to_string());
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Sampling access to the model-X conditional law `L(X|Z = z)`.
pub trait ConditionalSampler: Sync {
    /// One draw from `L(X|Z=z)`.
    fn draw(&self, z: &[f64], rng: &mut RngStream) -> f64;

    /// Fill `out` with independent draws at the same `z`. Implementations
    /// may precompute per-`z` quantities once.
    fn draw_many(&self, z: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        for slot in out.iter_mut() {
            *slot = self.draw(z, rng);
        }
    }

    fn descriptor(&self) -> String;
}

/// `X | Z ~ N(coeffs' z + intercept, sd^2)`; the workhorse conditional law
/// for the synthetic models. `sd != 1` expresses a deliberately
/// misspecified sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianLinearSampler {
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub sd: f64,
}

impl GaussianLinearSampler {
    pub fn new(coeffs: Vec<f64>, intercept: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(PcrError::domain(format!(
                "GaussianLinearSampler: sd = {sd} <= 0"
            )));
        }
        Ok(GaussianLinearSampler {
            coeffs,
            intercept,
            sd,
        })
    }

    /// Standard normal, ignoring `z` (the `Z = empty` case).
    pub fn std_normal() -> Self {
        GaussianLinearSampler {
            coeffs: Vec::new(),
            intercept: 0.0,
            sd: 1.0,
        }
    }

    pub fn mean(&self, z: &[f64]) -> f64 {
        self.intercept + dot(&self.coeffs, z)
    }
}

impl ConditionalSampler for GaussianLinearSampler {
    fn draw(&self, z: &[f64], rng: &mut RngStream) -> f64 {
        self.mean(z) + self.sd * rng.next_gaussian()
    }

    fn draw_many(&self, z: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        let mean = self.mean(z);
        for slot in out.iter_mut() {
            *slot = mean + self.sd * rng.next_gaussian();
        }
    }

    fn descriptor(&self) -> String {
        format!("gaussian-linear(q={}, sd={})", self.coeffs.len(), self.sd)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A per-sample score `T(x, y, z)`.
pub trait ScoreFunction: Sync {
    fn score(&self, x: f64, y: f64, z: &[f64]) -> f64;
    fn descriptor(&self) -> String;
}

/// `(y - x)^2`: the per-sample form of the squared-loss score.
#[derive(Debug, Clone, Copy)]
pub struct SquaredLossScore;

impl ScoreFunction for SquaredLossScore {
    fn score(&self, x: f64, y: f64, _z: &[f64]) -> f64 {
        (y - x) * (y - x)
    }

    fn descriptor(&self) -> String {
        "sq_loss_xy".into()
    }
}

/// `(y - x - sum(z))^2`: squared residual of the linear predictor with unit
/// coefficients on every confounder column.
#[derive(Debug, Clone, Copy)]
pub struct ResidualLinearScore;

impl ScoreFunction for ResidualLinearScore {
    fn score(&self, x: f64, y: f64, z: &[f64]) -> f64 {
        let r = y - x - z.iter().sum::<f64>();
        r * r
    }

    fn descriptor(&self) -> String {
        "residual_linear_z1".into()
    }
}

/// `(y - b0 - b1 x)^2`: squared residual of a fitted simple regression.
#[derive(Debug, Clone, Copy)]
pub struct OlsResidualScore {
    pub b0: f64,
    pub b1: f64,
}

impl ScoreFunction for OlsResidualScore {
    fn score(&self, x: f64, y: f64, _z: &[f64]) -> f64 {
        let r = y - self.b0 - self.b1 * x;
        r * r
    }

    fn descriptor(&self) -> String {
        format!("ols_residual({},{})", self.b0, self.b1)
    }
}

/// A score of a whole dataset, as used by the CRT.
pub trait DatasetScore: Sync {
    fn score_dataset(&self, x: &[f64], y: &[f64], z: &ZMatrix) -> f64;
    fn descriptor(&self) -> String;
}

/// Lifts a per-sample score to a dataset score by summation.
pub struct SumScore<S>(pub S);

impl<S: ScoreFunction> DatasetScore for SumScore<S> {
    fn score_dataset(&self, x: &[f64], y: &[f64], z: &ZMatrix) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&xi, &yi))| self.0.score(xi, yi, z.row(i)))
            .sum()
    }

    fn descriptor(&self) -> String {
        format!("sum({})", self.0.descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scores() {
        assert_eq!(ResidualLinearScore.score(1.0, 1.0, &[]), 0.0);
        assert_eq!(SquaredLossScore.score(2.0, 5.0, &[]), 9.0);
        assert_eq!(OlsResidualScore { b0: 1.0, b1: 2.0 }.score(1.0, 3.0, &[]), 0.0);
        assert_eq!(ResidualLinearScore.score(1.0, 4.0, &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![], ZMatrix::empty(0)).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0, 2.0], ZMatrix::empty(0)).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![1.0], ZMatrix::empty(0)).is_err());
        let d = Dataset::new(
            vec![1.0, 2.0],
            vec![0.5, 0.25],
            ZMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap(),
        )
        .unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.q(), 2);
        assert_eq!(d.z.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = Dataset::new(
            vec![1.5, -2.25, 0.125],
            vec![0.1, 0.2, 0.3],
            ZMatrix::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap(),
        )
        .unwrap();
        d.to_csv(&path).unwrap();
        let back = Dataset::from_csv(&path).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
    }

    #[test]
    fn sampler_draw_many_matches_draw_distribution() {
        let s = GaussianLinearSampler::new(vec![0.5, -0.25], 1.0, 2.0).unwrap();
        let z = [2.0, 4.0];
        assert_eq!(s.mean(&z), 1.0 + 1.0 - 1.0);
        let mut rng = RngStream::new(7, 0);
        let mut out = [0.0; 4];
        s.draw_many(&z, &mut rng, &mut out);
        let mut rng2 = RngStream::new(7, 0);
        for &v in &out {
            assert_eq!(v, s.mean(&z) + 2.0 * rng2.next_gaussian());
        }
    }
}
