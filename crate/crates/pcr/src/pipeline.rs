//! Tabular workflow: trip-record ingestion, route filtering, kernel
//! conditional Gaussian estimation, OLS residual scores and the grouped PCR
//! test.
//!
//! The conditioning variable is the pair (route, hour-of-day): trip
//! duration given a route and hour is modeled as
//! `N(mu(route, hour), sigma^2(route, hour))` with both functions estimated
//! per route by Nadaraya-Watson smoothing over the hour with a Gaussian
//! kernel (bandwidth 20 minutes). To absorb estimation error in that
//! conditional law, samples are grouped and the PCR test runs at the group
//! level: groups of size 1 recover the per-sample test, one single group
//! would recover the CRT.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ConditionalSampler, Dataset, OlsResidualScore, ScoreFunction, ZMatrix};
use crate::pearson::{self, PcrConfig, PcrResult, ThresholdKind};
use crate::rng::{derive_seed, RngStream};
use crate::{PcrError, Result};

/// One trip record, as read from the trips CSV
/// (`duration_min,start_loc,end_loc,hour,user_type,date,weekday`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub duration_min: f64,
    pub start_loc: String,
    pub end_loc: String,
    /// Fractional hour of day in `[0, 24)`.
    pub hour: f64,
    pub user_type: String,
    /// Day of month.
    pub date: f64,
    pub weekday: String,
}

/// Load outcome: parsed records plus per-row diagnostics for rejected rows.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub records: Vec<TripRecord>,
    /// `(1-based data row, reason)` for each rejected row.
    pub rejected: Vec<(usize, String)>,
}

const TRIP_HEADER: [&str; 7] = [
    "duration_min",
    "start_loc",
    "end_loc",
    "hour",
    "user_type",
    "date",
    "weekday",
];

/// Read trip records. Malformed rows are reported with their line numbers
/// rather than aborting the load; a wrong header is a hard error.
pub fn load_trips(path: impl AsRef<Path>) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.len() == 0 || headers.iter().next().is_none() {
        return Ok(LoadReport {
            records: Vec::new(),
            rejected: Vec::new(),
        });
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != TRIP_HEADER {
        return Err(PcrError::Config(format!(
            "trip csv header must be {:?}, got {:?}",
            TRIP_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((line, format!("unreadable row: {e}")));
                continue;
            }
        };
        match parse_trip(&row) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejected.push((line, reason)),
        }
    }
    Ok(LoadReport { records, rejected })
}

fn parse_trip(row: &csv::StringRecord) -> std::result::Result<TripRecord, String> {
    if row.len() != 7 {
        return Err(format!("expected 7 fields, got {}", row.len()));
    }
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        row[i]
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("unparseable {name}: {:?}", &row[i]))
    };
    let duration_min = num(0, "duration_min")?;
    if !(duration_min > 0.0) {
        return Err(format!("non-positive duration {duration_min}"));
    }
    let hour = num(3, "hour")?;
    if !(0.0..24.0).contains(&hour) {
        return Err(format!("hour {hour} outside [0, 24)"));
    }
    let date = num(5, "date")?;
    Ok(TripRecord {
        duration_min,
        start_loc: row[1].trim().to_string(),
        end_loc: row[2].trim().to_string(),
        hour,
        user_type: row[4].trim().to_string(),
        date,
        weekday: row[6].trim().to_string(),
    })
}

/// Write trip records in the canonical CSV layout.
pub fn write_trips(path: impl AsRef<Path>, records: &[TripRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(TRIP_HEADER)?;
    for r in records {
        w.write_record(&[
            r.duration_min.to_string(),
            r.start_loc.clone(),
            r.end_loc.clone(),
            r.hour.to_string(),
            r.user_type.clone(),
            r.date.to_string(),
            r.weekday.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Keep the test records whose route has at least `min_count` training
/// rides (routes with fewer cannot support a reliable conditional fit).
pub fn filter_routes(
    test_records: &[TripRecord],
    train_records: &[TripRecord],
    min_count: usize,
) -> Vec<TripRecord> {
    use std::collections::HashMap;
    let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
    for r in train_records {
        *counts
            .entry((r.start_loc.as_str(), r.end_loc.as_str()))
            .or_default() += 1;
    }
    test_records
        .iter()
        .filter(|r| {
            counts
                .get(&(r.start_loc.as_str(), r.end_loc.as_str()))
                .is_some_and(|&c| c >= min_count)
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RouteData {
    start: String,
    end: String,
    hours: Vec<f64>,
    durations: Vec<f64>,
}

/// Per-route Nadaraya-Watson conditional mean/variance of duration given
/// the hour of day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelModel {
    routes: Vec<RouteData>,
    /// Kernel bandwidth in hours.
    pub bandwidth_hours: f64,
    /// Variance floor in squared minutes.
    pub var_floor: f64,
}

impl KernelModel {
    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn route_index(&self, start: &str, end: &str) -> Option<usize> {
        self.routes
            .binary_search_by(|r| {
                (r.start.as_str(), r.end.as_str()).cmp(&(start, end))
            })
            .ok()
    }

    /// Kernel-weighted mean and variance at an hour. `None` for an unknown
    /// route index.
    pub fn mu_sigma2(&self, route: usize, hour: f64) -> Option<(f64, f64)> {
        let data = self.routes.get(route)?;
        let b = self.bandwidth_hours;
        // exponent shift keeps the weights finite; ratios are unchanged
        let mut max_e = f64::NEG_INFINITY;
        for &h in &data.hours {
            let d = hour - h;
            max_e = max_e.max(-d * d / (2.0 * b * b));
        }
        let mut wsum = 0.0;
        let mut mu = 0.0;
        for (&h, &d) in data.hours.iter().zip(&data.durations) {
            let dd = hour - h;
            let w = (-dd * dd / (2.0 * b * b) - max_e).exp();
            wsum += w;
            mu += w * d;
        }
        mu /= wsum;
        let mut var = 0.0;
        for (&h, &d) in data.hours.iter().zip(&data.durations) {
            let dd = hour - h;
            let w = (-dd * dd / (2.0 * b * b) - max_e).exp();
            var += w * (d - mu) * (d - mu);
        }
        var /= wsum;
        Some((mu, var.max(self.var_floor)))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| PcrError::Config(format!("kernel model json: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PcrError::Config(format!("kernel model json: {e}")))
    }
}

/// Fit the per-route kernel model. `bandwidth_minutes` applies to the hour
/// axis (20 minutes = 1/3 hour by default).
pub fn kernel_fit(train_records: &[TripRecord], bandwidth_minutes: f64) -> Result<KernelModel> {
    if !(bandwidth_minutes > 0.0) {
        return Err(PcrError::domain("kernel_fit: bandwidth must be positive"));
    }
    use std::collections::BTreeMap;
    let mut by_route: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in train_records {
        let entry = by_route
            .entry((r.start_loc.clone(), r.end_loc.clone()))
            .or_default();
        entry.0.push(r.hour);
        entry.1.push(r.duration_min);
    }
    let routes = by_route
        .into_iter()
        .map(|((start, end), (hours, durations))| RouteData {
            start,
            end,
            hours,
            durations,
        })
        .collect();
    Ok(KernelModel {
        routes,
        bandwidth_hours: bandwidth_minutes / 60.0,
        var_floor: 1e-6,
    })
}

/// Conditional sampler backed by a [`KernelModel`]: `z = [route_index,
/// hour]`, draws `N(mu(route, hour), sigma^2(route, hour))`.
///
/// Draws at an unknown route index return NaN, which downstream scoring
/// reports as a data error with the sample index.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    pub model: KernelModel,
}

impl ConditionalSampler for KernelSampler {
    fn draw(&self, z: &[f64], rng: &mut RngStream) -> f64 {
        let Some(&route) = z.first() else {
            return f64::NAN;
        };
        match self.model.mu_sigma2(route as usize, z[1]) {
            Some((mu, s2)) => mu + s2.sqrt() * rng.next_gaussian(),
            None => f64::NAN,
        }
    }

    fn draw_many(&self, z: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        let Some(&route) = z.first() else {
            out.fill(f64::NAN);
            return;
        };
        match self.model.mu_sigma2(route as usize, z[1]) {
            Some((mu, s2)) => {
                let sd = s2.sqrt();
                for slot in out.iter_mut() {
                    *slot = mu + sd * rng.next_gaussian();
                }
            }
            None => out.fill(f64::NAN),
        }
    }

    fn descriptor(&self) -> String {
        format!("kernel({} routes)", self.model.num_routes())
    }
}

/// Ordinary least squares fit of `y = b0 + b1 x`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(PcrError::domain(
            "ols_fit: need two same-length vectors with at least 2 points",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(PcrError::domain("ols_fit: x has zero variance"));
    }
    let b1 = sxy / sxx;
    Ok((my - b1 * mx, b1))
}

/// Grouped PCR parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroupedPcrConfig {
    pub group_size: usize,
    pub num_labels: usize,
    pub counterfeit_ratio: usize,
    pub alpha: f64,
    #[serde(default = "default_threshold")]
    pub threshold_kind: ThresholdKind,
}

fn default_threshold() -> ThresholdKind {
    ThresholdKind::Finite
}

impl GroupedPcrConfig {
    fn pcr(&self) -> Result<PcrConfig> {
        Ok(PcrConfig::new(self.num_labels, self.counterfeit_ratio, self.alpha)?
            .with_threshold(self.threshold_kind))
    }
}

const LANE_GROUP_SHUFFLE: u64 = 11;

/// PCR over groups of samples.
///
/// Samples are shuffled once (seeded), partitioned into `floor(n/g)`
/// consecutive groups of size `g` (leftovers dropped), and each group is
/// ranked by its mean score against `M` counterfeit group means built by
/// redrawing every member. Member `j` of the dataset always uses stream
/// `(seed, j)`, the same discipline as [`pearson::run_pcr`]; with `g = 1`
/// the shuffle is skipped (assignment is immaterial for singletons) and
/// the output coincides exactly with the per-sample test.
pub fn grouped_pcr(
    data: &Dataset,
    sampler: &dyn ConditionalSampler,
    score: &dyn ScoreFunction,
    cfg: &GroupedPcrConfig,
    seed: u64,
) -> Result<PcrResult> {
    if cfg.group_size == 0 {
        return Err(PcrError::domain("grouped_pcr: group_size must be >= 1"));
    }
    let pcr_cfg = cfg.pcr()?;
    if data.n() < cfg.group_size {
        return Err(PcrError::domain(format!(
            "grouped_pcr: n = {} smaller than group size {}",
            data.n(),
            cfg.group_size
        )));
    }
    let g = cfg.group_size;
    let n_groups = data.n() / g;
    let m = pcr_cfg.num_counterfeits();

    let order: Vec<usize> = if g == 1 {
        (0..data.n()).collect()
    } else {
        let mut order: Vec<usize> = (0..data.n()).collect();
        let mut rng = RngStream::new(derive_seed(seed, LANE_GROUP_SHUFFLE), 0);
        rng.shuffle(&mut order);
        order
    };

    let ranks: Result<Vec<usize>> = (0..n_groups)
        .into_par_iter()
        .map_init(
            || (vec![0.0; m], Vec::with_capacity(m)),
            |(acc, scratch), gi| {
                let members = &order[gi * g..(gi + 1) * g];
                acc.iter_mut().for_each(|v| *v = 0.0);
                let mut group_score = 0.0;
                scratch.resize(m, 0.0);
                for &j in members {
                    let z = data.z.row(j);
                    let mut rng = RngStream::new(seed, j as u64);
                    sampler.draw_many(z, &mut rng, scratch);
                    let t = score.score(data.x[j], data.y[j], z);
                    if !t.is_finite() {
                        return Err(PcrError::Data {
                            index: j,
                            message: format!("score of original sample is {t}"),
                        });
                    }
                    group_score += t;
                    for (slot, &xt) in acc.iter_mut().zip(scratch.iter()) {
                        let v = score.score(xt, data.y[j], z);
                        if !v.is_finite() {
                            return Err(PcrError::Data {
                                index: j,
                                message: format!("counterfeit score is {v}"),
                            });
                        }
                        *slot += v;
                    }
                }
                let inv = 1.0 / g as f64;
                group_score *= inv;
                for v in acc.iter_mut() {
                    *v *= inv;
                }
                pearson::rank_among_counterfeits(group_score, acc)
            },
        )
        .collect();
    let ranks = ranks?;
    pearson::finish_from_ranks(ranks, &pcr_cfg)
}

/// Response variables the workflow can test against trip duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    UserType,
    Date,
    Weekday,
}

impl Response {
    pub fn name(&self) -> &'static str {
        match self {
            Response::UserType => "user_type",
            Response::Date => "date",
            Response::Weekday => "weekday",
        }
    }

    /// Numeric encoding: registered-member indicator, day of month, or
    /// weekday index 1-5 (Monday-Friday).
    pub fn encode(&self, rec: &TripRecord) -> Result<f64> {
        match self {
            Response::UserType => Ok(if rec.user_type == "registered" {
                1.0
            } else {
                0.0
            }),
            Response::Date => Ok(rec.date),
            Response::Weekday => match rec.weekday.as_str() {
                "Monday" => Ok(1.0),
                "Tuesday" => Ok(2.0),
                "Wednesday" => Ok(3.0),
                "Thursday" => Ok(4.0),
                "Friday" => Ok(5.0),
                other => Err(PcrError::Config(format!(
                    "weekday encoding: unknown weekday {other:?}"
                ))),
            },
        }
    }
}

/// Per-response test outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub p_finite: f64,
    pub p_asym: f64,
    #[serde(rename = "U")]
    pub statistic: f64,
    #[serde(rename = "N_groups")]
    pub n_groups: usize,
    #[serde(rename = "L")]
    pub num_labels: usize,
    #[serde(rename = "K")]
    pub counterfeit_ratio: usize,
}

/// Full pipeline output: one entry per response, keyed by response name.
pub type PipelineReport = std::collections::BTreeMap<String, ResponseEntry>;

/// Workflow parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grouped: GroupedPcrConfig,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_minutes: f64,
    #[serde(default = "default_min_count")]
    pub min_route_count: usize,
}

fn default_bandwidth() -> f64 {
    20.0
}

fn default_min_count() -> usize {
    20
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grouped: GroupedPcrConfig {
                group_size: 4,
                num_labels: 10,
                counterfeit_ratio: 200,
                alpha: 0.05,
                threshold_kind: ThresholdKind::Finite,
            },
            bandwidth_minutes: 20.0,
            min_route_count: 20,
        }
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        PcrError::Domain(m) => PcrError::Domain(format!("[{name}] {m}")),
        PcrError::Numerical(m) => PcrError::Numerical(format!("[{name}] {m}")),
        PcrError::Config(m) => PcrError::Config(format!("[{name}] {m}")),
        other => other,
    })
}

/// The full observational workflow: load both CSVs, filter thin routes,
/// fit the kernel conditional law on training data, fit the per-response
/// OLS score on training data, and run the grouped PCR test on the test
/// data for each requested response.
pub fn run_pipeline(
    test_csv: impl AsRef<Path>,
    train_csv: impl AsRef<Path>,
    responses: &[Response],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineReport> {
    let train = stage("load train", load_trips(&train_csv))?;
    let test = stage("load test", load_trips(&test_csv))?;
    if train.records.is_empty() {
        return Err(PcrError::Config("[load train] no usable records".into()));
    }
    let kept = filter_routes(&test.records, &train.records, cfg.min_route_count);
    if kept.is_empty() {
        return Err(PcrError::Config(
            "[filter] no test records survive the route filter".into(),
        ));
    }
    let model = stage("kernel fit", kernel_fit(&train.records, cfg.bandwidth_minutes))?;

    let mut report = PipelineReport::new();
    for response in responses {
        let entry = stage(
            response.name(),
            run_one_response(&kept, &train.records, &model, *response, cfg, seed),
        )?;
        report.insert(response.name().to_string(), entry);
    }
    Ok(report)
}

fn run_one_response(
    kept: &[TripRecord],
    train: &[TripRecord],
    model: &KernelModel,
    response: Response,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<ResponseEntry> {
    // score fitted on training data
    let train_x: Vec<f64> = train.iter().map(|r| r.duration_min).collect();
    let train_y: Vec<f64> = train
        .iter()
        .map(|r| response.encode(r))
        .collect::<Result<_>>()?;
    let (b0, b1) = ols_fit(&train_x, &train_y)?;
    let score = OlsResidualScore { b0, b1 };

    // encode the test set: x = duration, y = response, z = [route, hour]
    let mut x = Vec::with_capacity(kept.len());
    let mut y = Vec::with_capacity(kept.len());
    let mut z = Vec::with_capacity(2 * kept.len());
    for rec in kept {
        let route = model
            .route_index(&rec.start_loc, &rec.end_loc)
            .ok_or_else(|| {
                PcrError::Config(format!(
                    "route ({}, {}) missing from kernel model",
                    rec.start_loc, rec.end_loc
                ))
            })?;
        x.push(rec.duration_min);
        y.push(response.encode(rec)?);
        z.push(route as f64);
        z.push(rec.hour);
    }
    let data = Dataset::new(x, y, ZMatrix::new(z, 2)?)?;
    let sampler = KernelSampler {
        model: model.clone(),
    };
    let res = grouped_pcr(&data, &sampler, &score, &cfg.grouped, seed)?;
    Ok(ResponseEntry {
        p_finite: res.p_finite,
        p_asym: res.p_asym,
        statistic: res.statistic,
        n_groups: res.counts.total() as usize,
        num_labels: cfg.grouped.num_labels,
        counterfeit_ratio: cfg.grouped.counterfeit_ratio,
    })
}

/// Synthetic trip fixture in the exact CSV schema. `effect = 0` makes
/// every response conditionally independent of duration; a positive effect
/// plants a user-type dependence on the within-route duration residual.
#[derive(Debug, Clone, Copy)]
pub struct FixtureSpec {
    pub num_routes: usize,
    /// Mean training rides per route; actual counts vary by -6..+4 across
    /// routes so some routes fall under the default filter.
    pub train_per_route: usize,
    pub test_per_route: usize,
    /// Strength of the planted user-type dependence (log-odds per residual
    /// standard deviation).
    pub effect: f64,
    pub seed: u64,
}

const WEEKDAYS: [&str; 5] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

fn route_mu(r: usize) -> f64 {
    // deterministic spread of base durations over [8, 30] minutes
    8.0 + 22.0 * (r as f64 * 0.618_033_988_749_895).fract()
}

fn route_sd(r: usize) -> f64 {
    1.0 + 0.5 * (r % 3) as f64
}

/// Mean duration of a route at an hour: base plus a +5 minute step after
/// noon.
pub fn fixture_mu(route: usize, hour: f64) -> f64 {
    route_mu(route) + if hour > 12.0 { 5.0 } else { 0.0 }
}

/// Generate `(train, test)` record sets.
pub fn gen_fixture(spec: &FixtureSpec) -> (Vec<TripRecord>, Vec<TripRecord>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in 0..spec.num_routes {
        let train_count = (spec.train_per_route + (r % 11)).saturating_sub(6).max(1);
        let mut rng = RngStream::new(spec.seed, r as u64);
        for _ in 0..train_count {
            train.push(gen_trip(r, 0.0, &mut rng));
        }
        let mut rng_test = RngStream::new(spec.seed, r as u64).substream(1);
        for _ in 0..spec.test_per_route {
            test.push(gen_trip(r, spec.effect, &mut rng_test));
        }
    }
    (train, test)
}

fn gen_trip(route: usize, effect: f64, rng: &mut RngStream) -> TripRecord {
    let hour = 6.0 + 16.0 * rng.next_f64();
    let sd = route_sd(route);
    let resid = rng.next_gaussian();
    let duration = (fixture_mu(route, hour) + sd * resid).max(0.5);
    let p_registered = if effect == 0.0 {
        0.55
    } else {
        1.0 / (1.0 + (-effect * resid).exp())
    };
    let user_type = if rng.next_f64() < p_registered {
        "registered"
    } else {
        "casual"
    };
    TripRecord {
        duration_min: duration,
        start_loc: format!("S{route:04}"),
        end_loc: format!("E{route:04}"),
        hour,
        user_type: user_type.into(),
        date: 1.0 + rng.next_below(30) as f64,
        weekday: WEEKDAYS[rng.next_below(5) as usize].into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(route: &str, dur: f64, hour: f64) -> TripRecord {
        TripRecord {
            duration_min: dur,
            start_loc: route.into(),
            end_loc: format!("{route}-end"),
            hour,
            user_type: "registered".into(),
            date: 15.0,
            weekday: "Tuesday".into(),
        }
    }

    #[test]
    fn load_rejects_bad_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.csv");
        std::fs::write(
            &path,
            "duration_min,start_loc,end_loc,hour,user_type,date,weekday\n\
             12.5,A,B,8.25,registered,3,Monday\n\
             -4.0,A,B,9.0,casual,3,Monday\n\
             8.0,A,B,25.0,casual,3,Monday\n\
             oops,A,B,9.0,casual,3,Monday\n\
             10.0,A,B,10.0,casual,4,Friday\n",
        )
        .unwrap();
        let report = load_trips(&path).unwrap();
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.rejected.len(), 3);
        assert_eq!(report.rejected[0].0, 2);
        assert!(report.rejected[0].1.contains("duration"));
        assert_eq!(report.rejected[1].0, 3);
        assert_eq!(report.rejected[2].0, 4);
    }

    #[test]
    fn load_empty_file_is_empty_not_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let report = load_trips(&path).unwrap();
        assert!(report.records.is_empty());
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn load_wrong_header_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c,d,e,f,g\n1,2,3,4,5,6,7\n").unwrap();
        assert!(load_trips(&path).is_err());
    }

    #[test]
    fn route_filter_boundary() {
        let train: Vec<TripRecord> = (0..19)
            .map(|_| rec("thin", 10.0, 9.0))
            .chain((0..20).map(|_| rec("thick", 10.0, 9.0)))
            .collect();
        let test = vec![rec("thin", 11.0, 10.0), rec("thick", 11.0, 10.0)];
        let kept = filter_routes(&test, &train, 20);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].start_loc, "thick");
    }

    #[test]
    fn kernel_single_point_and_constant_routes() {
        let train = vec![rec("a", 12.0, 9.0)];
        let model = kernel_fit(&train, 20.0).unwrap();
        let (mu, s2) = model.mu_sigma2(0, 17.0).unwrap();
        assert!((mu - 12.0).abs() < 1e-12);
        assert_eq!(s2, 1e-6);

        let train: Vec<TripRecord> = (0..30).map(|i| rec("c", 7.5, 6.0 + i as f64 * 0.5)).collect();
        let model = kernel_fit(&train, 20.0).unwrap();
        let (mu, s2) = model.mu_sigma2(0, 12.0).unwrap();
        assert!((mu - 7.5).abs() < 1e-12);
        assert_eq!(s2, 1e-6);
    }

    #[test]
    fn kernel_translation_equivariance() {
        let mut rng = RngStream::new(9, 0);
        let train: Vec<TripRecord> = (0..60)
            .map(|_| {
                rec(
                    "a",
                    10.0 + 3.0 * rng.next_f64(),
                    6.0 + 12.0 * rng.next_f64(),
                )
            })
            .collect();
        let shifted: Vec<TripRecord> = train
            .iter()
            .map(|r| TripRecord {
                duration_min: r.duration_min + 7.0,
                ..r.clone()
            })
            .collect();
        let m1 = kernel_fit(&train, 20.0).unwrap();
        let m2 = kernel_fit(&shifted, 20.0).unwrap();
        for hour in [7.0, 10.0, 13.5, 17.25] {
            let (mu1, v1) = m1.mu_sigma2(0, hour).unwrap();
            let (mu2, v2) = m2.mu_sigma2(0, hour).unwrap();
            assert!((mu2 - mu1 - 7.0).abs() < 1e-9);
            assert!((v2 - v1).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_json_round_trip() {
        let train = vec![rec("a", 12.0, 9.0), rec("a", 14.0, 15.0)];
        let model = kernel_fit(&train, 20.0).unwrap();
        let back = KernelModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.num_routes(), 1);
        let h = 11.0;
        assert_eq!(model.mu_sigma2(0, h), back.mu_sigma2(0, h));
    }

    #[test]
    fn ols_examples() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (b0, b1) = ols_fit(&x, &y).unwrap();
        assert!((b0 - 1.0).abs() < 1e-12);
        assert!((b1 - 2.0).abs() < 1e-12);

        let (b0, b1) = ols_fit(&x, &[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!((b0, b1), (5.0, 0.0));

        assert!(ols_fit(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(ols_fit(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn ols_residuals_orthogonal_to_x() {
        let mut rng = RngStream::new(21, 0);
        let x: Vec<f64> = (0..200).map(|_| rng.next_gaussian()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 0.3 - 1.2 * v + rng.next_gaussian())
            .collect();
        let (b0, b1) = ols_fit(&x, &y).unwrap();
        let dot: f64 = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| xi * (yi - b0 - b1 * xi))
            .sum();
        assert!(dot.abs() < 1e-10, "{dot}");
    }

    #[test]
    fn fixture_counts_and_schema() {
        let spec = FixtureSpec {
            num_routes: 12,
            train_per_route: 25,
            test_per_route: 10,
            effect: 0.0,
            seed: 5,
        };
        let (train, test) = gen_fixture(&spec);
        assert_eq!(test.len(), 120);
        assert!(train.iter().all(|r| r.duration_min > 0.0));
        assert!(train.iter().all(|r| (0.0..24.0).contains(&r.hour)));
        // some routes must fall below the default filter threshold
        let kept = filter_routes(&test, &train, 20);
        assert!(kept.len() < test.len());
        assert!(!kept.is_empty());
    }
}
