//! Distribution-drift analysis: each period's quantile function is compared
//! with a reference one through a warp of [0, 1], the warps are modelled as
//! CDF paths, and parametric bootstrap bands are drawn around their mean.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::samplers::{simulate_cdf, CdfConfig};
use crate::warp::{TargetWarp, WarpPath};

/// Number of points of the common evaluation grid.
pub const ANALYSIS_GRID: usize = 1001;

/// Floor applied to a non-positive concentration estimate before bootstrapping.
pub const THETA_FLOOR: f64 = 1e-6;

pub fn analysis_grid() -> Vec<f64> {
    (0..ANALYSIS_GRID).map(|k| k as f64 / (ANALYSIS_GRID - 1) as f64).collect()
}

fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Piecewise-linear quantile function through (probs, values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileFunction {
    probs: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn new(probs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if probs.len() != values.len() || probs.len() < 2 {
            return Err(Error::param("quantile function needs matching probs and values, at least 2"));
        }
        if probs[0] != 0.0 || probs[probs.len() - 1] != 1.0 || probs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("probs must increase strictly from 0 to 1"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::param("quantile values must be finite and non-decreasing"));
        }
        Ok(QuantileFunction { probs, values })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.probs.partition_point(|&p| p <= u).clamp(1, self.probs.len() - 1);
        let (p0, p1) = (self.probs[k - 1], self.probs[k]);
        let (q0, q1) = (self.values[k - 1], self.values[k]);
        if q0 == q1 {
            return q0;
        }
        q0 + (u - p0) / (p1 - p0) * (q1 - q0)
    }

    /// inf{u : Q(u) >= x}, extrapolated below the range.
    fn lower_preimage(&self, x: f64) -> Result<f64> {
        let k = self.values.partition_point(|&q| q < x);
        if k == 0 {
            if x == self.values[0] {
                return Ok(0.0);
            }
            let (dp, dq) = self.edge_slope(true)?;
            return Ok(-(self.values[0] - x) * dp / dq);
        }
        if k == self.values.len() {
            let (dp, dq) = self.edge_slope(false)?;
            return Ok(1.0 + (x - self.values[k - 1]) * dp / dq);
        }
        let (p0, p1, q0, q1) = (self.probs[k - 1], self.probs[k], self.values[k - 1], self.values[k]);
        Ok(p0 + (x - q0) / (q1 - q0) * (p1 - p0))
    }

    /// sup{u : Q(u) <= x}, extrapolated above the range.
    fn upper_preimage(&self, x: f64) -> Result<f64> {
        let k = self.values.partition_point(|&q| q <= x);
        let last = self.values.len();
        if k == last {
            if x == self.values[last - 1] {
                return Ok(1.0);
            }
            let (dp, dq) = self.edge_slope(false)?;
            return Ok(1.0 + (x - self.values[last - 1]) * dp / dq);
        }
        if k == 0 {
            let (dp, dq) = self.edge_slope(true)?;
            return Ok(-(self.values[0] - x) * dp / dq);
        }
        let (p0, p1, q0, q1) = (self.probs[k - 1], self.probs[k], self.values[k - 1], self.values[k]);
        Ok(p0 + (x - q0) / (q1 - q0) * (p1 - p0))
    }

    /// (dp, dq) of the first (or last) segment that is not flat.
    fn edge_slope(&self, first: bool) -> Result<(f64, f64)> {
        let n = self.probs.len();
        let seg = |k: usize| (self.probs[k + 1] - self.probs[k], self.values[k + 1] - self.values[k]);
        let found = if first {
            (0..n - 1).map(seg).find(|s| s.1 > 0.0)
        } else {
            (0..n - 1).rev().map(seg).find(|s| s.1 > 0.0)
        };
        found.ok_or_else(|| Error::Degenerate("reference quantile function is constant".into()))
    }
}

/// Quantile function of a sample: the k-th order statistic at k/(N+1), the
/// minimum at 0 and the maximum at 1.
pub fn empirical_quantile(data: &[f64]) -> Result<QuantileFunction> {
    if data.is_empty() {
        return Err(Error::param("empirical quantile of an empty sample"));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("sample contains non-finite values"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut probs = Vec::with_capacity(n + 2);
    let mut values = Vec::with_capacity(n + 2);
    probs.push(0.0);
    values.push(sorted[0]);
    for (k, &x) in sorted.iter().enumerate() {
        probs.push((k + 1) as f64 / (n + 1) as f64);
        values.push(x);
    }
    probs.push(1.0);
    values.push(sorted[n - 1]);
    QuantileFunction::new(probs, values)
}

/// Rescaled warp (g - g(0)) / (g(1) - g(0)) with g = F0 o Q, on the common
/// grid. Where Q is flat at a level x, the flat run is spread linearly over
/// the preimage of x under the reference; outside the reference range F0 is
/// extended with the slope of its nearest non-flat segment.
pub fn warp_from_quantiles(reference: &QuantileFunction, sample: &QuantileFunction) -> Result<WarpPath> {
    let grid = analysis_grid();
    let mut gamma = Vec::with_capacity(grid.len());
    for &u in &grid {
        let x = sample.eval(u);
        let (a0, b0) = (reference.lower_preimage(x)?, reference.upper_preimage(x)?);
        let (ai, bi) = (sample.lower_preimage(x)?, sample.upper_preimage(x)?);
        let g = if bi > ai {
            a0 + (u - ai) / (bi - ai) * (b0 - a0)
        } else {
            0.5 * (a0 + b0)
        };
        gamma.push(g);
    }
    let (g0, g1) = (gamma[0], gamma[gamma.len() - 1]);
    if !(g1 > g0) {
        return Err(Error::Degenerate("warp has equal end values (constant sample?)".into()));
    }
    let mut ys = Vec::with_capacity(gamma.len());
    let mut prev = 0.0f64;
    for g in &gamma {
        let y = ((g - g0) / (g1 - g0)).clamp(prev, 1.0);
        ys.push(y);
        prev = y;
    }
    let last = ys.len() - 1;
    ys[0] = 0.0;
    ys[last] = 1.0;
    WarpPath::new(grid, ys)
}

fn evaluate_all(warps: &[WarpPath], grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if warps.len() < 2 {
        return Err(Error::InsufficientSample(format!(
            "need at least 2 warps, got {}",
            warps.len()
        )));
    }
    Ok(warps.iter().map(|w| w.eval_sorted(grid)).collect())
}

fn mean_curve(values: &[Vec<f64>]) -> Vec<f64> {
    let m = values.len() as f64;
    (0..values[0].len())
        .map(|k| values.iter().map(|v| v[k]).sum::<f64>() / m)
        .collect()
}

/// Pointwise average of the warps on `grid`.
pub fn estimate_phi(warps: &[WarpPath], grid: &[f64]) -> Result<Vec<f64>> {
    Ok(mean_curve(&evaluate_all(warps, grid)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub theta_hat: f64,
    /// The raw estimate was negative.
    pub negative: bool,
}

fn theta_from_values(values: &[Vec<f64>], phi_hat: &[f64], grid: &[f64]) -> Result<ThetaEstimate> {
    let m = values.len() as f64;
    let var: Vec<f64> = (0..grid.len())
        .map(|k| values.iter().map(|v| (v[k] - phi_hat[k]).powi(2)).sum::<f64>() / (m - 1.0))
        .collect();
    let den = trapezoid(grid, &var);
    if !(den > 0.0) {
        return Err(Error::Degenerate("integrated sample variance is zero (identical warps)".into()));
    }
    let num: Vec<f64> = phi_hat.iter().map(|f| f * (1.0 - f)).collect();
    let theta_hat = trapezoid(grid, &num) / den - 1.0;
    Ok(ThetaEstimate {
        theta_hat,
        negative: theta_hat < 0.0,
    })
}

/// int phi_hat (1 - phi_hat) / int v_hat - 1 with v_hat the unbiased
/// pointwise sample variance, both by trapezoid on `grid`.
pub fn estimate_theta(warps: &[WarpPath], phi_hat: &[f64], grid: &[f64]) -> Result<ThetaEstimate> {
    if phi_hat.len() != grid.len() {
        return Err(Error::param("phi_hat and grid differ in length"));
    }
    theta_from_values(&evaluate_all(warps, grid)?, phi_hat, grid)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaStudyRow {
    pub theta: f64,
    pub n: usize,
    pub mean_ratio: f64,
    pub sd_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Repeats, `b_reps` times, the estimation of theta from m CDF paths with
/// identity target and p = 0.5; reports mean and sd of theta_hat / theta.
pub fn theta_study(theta: f64, n_values: &[usize], m: usize, b_reps: usize, master_seed: u64) -> Result<Vec<ThetaStudyRow>> {
    if m < 2 || b_reps < 2 {
        return Err(Error::param("theta study needs m >= 2 and at least 2 repetitions"));
    }
    let grid = analysis_grid();
    let mut rows = Vec::new();
    for &n in n_values {
        let cfg = CdfConfig::new(n, theta, 0.5, TargetWarp::identity())?;
        let ratios: Result<Vec<f64>> = (0..b_reps)
            .into_par_iter()
            .map(|b| {
                let mut rng = RngStream::new(master_seed, b as u64).split(n as u64);
                let values: Vec<Vec<f64>> = (0..m)
                    .map(|_| simulate_cdf(&cfg, &mut rng).map(|w| w.eval_sorted(&grid)))
                    .collect::<Result<_>>()?;
                let phi = mean_curve(&values);
                Ok(theta_from_values(&values, &phi, &grid)?.theta_hat / theta)
            })
            .collect();
        let ratios = ratios?;
        let k = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / k;
        let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        rows.push(ThetaStudyRow {
            theta,
            n,
            mean_ratio: mean,
            sd_ratio: sd,
            ratios,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub phi_hat: Vec<f64>,
    /// phi_hat minus the identity.
    pub centered: Vec<f64>,
    pub half_width: f64,
    pub alpha: f64,
    /// Concentration used for the bootstrap paths.
    pub theta_hat: f64,
    pub theta_clamped: bool,
    pub replicates_used: usize,
    pub seed: u64,
}

impl BandResult {
    /// Columns `prob,phi_hat,centered,lower,upper`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["prob", "phi_hat", "centered", "lower", "upper"])?;
        for k in 0..self.grid.len() {
            let c = self.centered[k];
            wr.write_record([
                format!("{}", self.grid[k]),
                format!("{:e}", self.phi_hat[k]),
                format!("{:e}", c),
                format!("{:e}", c - self.half_width),
                format!("{:e}", c + self.half_width),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "theta_hat": self.theta_hat,
            "theta_clamped": self.theta_clamped,
            "h": self.half_width,
            "alpha": self.alpha,
            "B": self.replicates_used,
            "seed": self.seed,
        })
    }

    pub fn lower(&self) -> Vec<f64> {
        self.centered.iter().map(|c| c - self.half_width).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.centered.iter().map(|c| c + self.half_width).collect()
    }
}

/// Turns a mean curve into a strictly increasing target; flat stretches are
/// tilted by a 1e-9 share of the identity.
pub fn target_from_curve(grid: &[f64], curve: &[f64]) -> Result<TargetWarp> {
    const TILT: f64 = 1e-9;
    let ys: Vec<f64> = curve
        .iter()
        .zip(grid)
        .map(|(y, u)| (1.0 - TILT) * y.clamp(0.0, 1.0) + TILT * u)
        .collect();
    TargetWarp::piecewise(WarpPath::new(grid.to_vec(), ys)?)
}

/// Index (0-based) of the ceil((1 - alpha) B)-th smallest value.
pub fn band_quantile_index(alpha: f64, b_reps: usize) -> usize {
    let k = ((1.0 - alpha) * b_reps as f64 - 1e-9).ceil() as usize;
    k.clamp(1, b_reps) - 1
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_bands(
    phi_hat: &[f64],
    grid: &[f64],
    theta_hat: f64,
    p: f64,
    n_i: usize,
    m: usize,
    b_reps: usize,
    alpha: f64,
    master_seed: u64,
) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if b_reps < 20 {
        return Err(Error::param(format!("need at least 20 bootstrap replicates, got {b_reps}")));
    }
    if m < 1 || n_i < 1 {
        return Err(Error::param("bootstrap needs m >= 1 and n >= 1"));
    }
    if phi_hat.len() != grid.len() {
        return Err(Error::param("phi_hat and grid differ in length"));
    }
    let theta_clamped = !(theta_hat > 0.0);
    let theta = if theta_clamped { THETA_FLOOR } else { theta_hat };
    let target = target_from_curve(grid, phi_hat)?;
    let cfg = CdfConfig::new(n_i, theta, p, target)?;
    let sups: Result<Vec<f64>> = (0..b_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(master_seed, b as u64);
            let mut acc = vec![0.0; grid.len()];
            for _ in 0..m {
                let w = simulate_cdf(&cfg, &mut rng)?;
                for (a, v) in acc.iter_mut().zip(w.eval_sorted(grid)) {
                    *a += v;
                }
            }
            Ok(acc
                .iter()
                .zip(phi_hat)
                .map(|(a, f)| (a / m as f64 - f).abs())
                .fold(0.0, f64::max))
        })
        .collect();
    let mut sups = sups?;
    sups.sort_by(f64::total_cmp);
    let half_width = sups[band_quantile_index(alpha, b_reps)];
    Ok(BandResult {
        grid: grid.to_vec(),
        phi_hat: phi_hat.to_vec(),
        centered: phi_hat.iter().zip(grid).map(|(f, u)| f - u).collect(),
        half_width,
        alpha,
        theta_hat: theta,
        theta_clamped,
        replicates_used: b_reps,
        seed: master_seed,
    })
}

/// One timestamped observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

/// Column names of the observation file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub records: Vec<Record>,
    /// Rows dropped for a missing or unparsable field.
    pub skipped: usize,
}

/// ISO-8601 date, date-time (with or without seconds, `T` or space) or
/// RFC 3339 with offset, converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn read_observations<R: Read>(r: R, schema: &CsvSchema) -> Result<Ingested> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Ingestion(format!("missing column '{name}'")))
    };
    let (ti, vi) = (col(&schema.timestamp_column)?, col(&schema.value_column)?);
    let mut records = Vec::new();
    let mut skipped = 0;
    for row in rd.records() {
        let row = row?;
        let ts = row.get(ti).and_then(parse_timestamp);
        let v = row.get(vi).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        match (ts, v) {
            (Some(timestamp), Some(value)) => records.push(Record { timestamp, value }),
            _ => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::Ingestion("no valid rows".into()));
    }
    Ok(Ingested { records, skipped })
}

pub fn load_observations_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    read_observations(f, schema)
}

pub fn write_observations<W: Write>(w: W, records: &[Record]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["timestamp", "value"])?;
    for r in records {
        wr.write_record([r.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(), format!("{}", r.value)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Half-open time interval [start, end) with a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Period {
    pub label: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Period {
    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.start <= t && t < self.end
    }
}

/// Parses `label=START/END` or `START/END` items separated by commas.
pub fn parse_periods(spec: &str) -> Result<Vec<Period>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (label, range) = match item.split_once('=') {
            Some((l, r)) => (l.trim().to_string(), r),
            None => (item.to_string(), item),
        };
        let (a, b) = range
            .split_once('/')
            .ok_or_else(|| Error::param(format!("period '{item}' is not START/END")))?;
        let start = parse_timestamp(a).ok_or_else(|| Error::param(format!("bad timestamp '{a}'")))?;
        let end = parse_timestamp(b).ok_or_else(|| Error::param(format!("bad timestamp '{b}'")))?;
        if !(start < end) {
            return Err(Error::param(format!("period '{item}' is empty")));
        }
        out.push(Period { label, start, end });
    }
    if out.is_empty() {
        return Err(Error::param("no periods given"));
    }
    Ok(out)
}

/// Consecutive periods [b_k, b_{k+1}) labelled by their bounds.
pub fn periods_from_boundaries(boundaries: &[NaiveDateTime]) -> Result<Vec<Period>> {
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("boundaries must be at least two increasing timestamps"));
    }
    Ok(boundaries
        .windows(2)
        .map(|w| Period {
            label: format!("{}/{}", w[0].format("%Y-%m-%d"), w[1].format("%Y-%m-%d")),
            start: w[0],
            end: w[1],
        })
        .collect())
}

/// Observations of one period.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodDataset {
    pub label: String,
    pub observations: Vec<f64>,
}

impl PeriodDataset {
    pub fn count(&self) -> usize {
        self.observations.len()
    }

    pub fn quantile(&self) -> Result<QuantileFunction> {
        empirical_quantile(&self.observations)
            .map_err(|_| Error::InsufficientSample(format!("period '{}' has no observations", self.label)))
    }
}

/// Assigns every record to the period containing it; records in no period
/// are dropped. Periods may come out empty.
pub fn split_periods(records: &[Record], periods: &[Period]) -> Result<Vec<PeriodDataset>> {
    let mut sorted: Vec<&Period> = periods.iter().collect();
    sorted.sort_by_key(|p| p.start);
    if sorted.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(Error::param("periods overlap"));
    }
    let mut out: Vec<PeriodDataset> = periods
        .iter()
        .map(|p| PeriodDataset {
            label: p.label.clone(),
            observations: Vec::new(),
        })
        .collect();
    for r in records {
        if let Some(i) = periods.iter().position(|p| p.contains(r.timestamp)) {
            out[i].observations.push(r.value);
        }
    }
    Ok(out)
}

/// Random permutation cut into m parts whose sizes differ by at most one
/// (the larger parts first).
pub fn random_split(data: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m > data.len() {
        return Err(Error::param(format!(
            "cannot split {} observations into {m} parts",
            data.len()
        )));
    }
    let mut perm = data.to_vec();
    perm.shuffle(rng);
    let (base, extra) = (data.len() / m, data.len() % m);
    let mut parts = Vec::with_capacity(m);
    let mut it = perm.into_iter();
    for k in 0..m {
        let size = base + usize::from(k < extra);
        parts.push(it.by_ref().take(size).collect());
    }
    Ok(parts)
}

/// One period of a synthetic hourly series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPeriod {
    pub label: String,
    /// ISO-8601 start.
    pub start: String,
    pub hours: usize,
    /// Added to every value.
    #[serde(default)]
    pub shift: f64,
    /// Multiplies the deviation from the base level.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Hourly series: base + seasonal and daily cosines + normal noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub periods: Vec<SynthPeriod>,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_seasonal")]
    pub seasonal_amplitude: f64,
    #[serde(default = "default_daily")]
    pub daily_amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
}

fn default_base() -> f64 {
    7.0
}
fn default_seasonal() -> f64 {
    14.0
}
fn default_daily() -> f64 {
    4.0
}
fn default_noise() -> f64 {
    3.0
}

impl SynthSpec {
    /// Periods of `hours` records starting every `stride_years` from
    /// `first_year`, with the given shifts.
    pub fn yearly(first_year: i32, stride_years: i32, hours: usize, shifts: &[f64]) -> Self {
        SynthSpec {
            periods: shifts
                .iter()
                .enumerate()
                .map(|(k, &shift)| {
                    let y = first_year + k as i32 * stride_years;
                    SynthPeriod {
                        label: format!("{y}-{}", y + stride_years),
                        start: format!("{y}-01-01T00:00:00"),
                        hours,
                        shift,
                        scale: 1.0,
                    }
                })
                .collect(),
            base: default_base(),
            seasonal_amplitude: default_seasonal(),
            daily_amplitude: default_daily(),
            noise_sd: default_noise(),
        }
    }

    /// The periods as half-open intervals, each ending after its last hour.
    pub fn periods(&self) -> Result<Vec<Period>> {
        self.periods
            .iter()
            .map(|p| {
                let start = parse_timestamp(&p.start)
                    .ok_or_else(|| Error::param(format!("bad start '{}'", p.start)))?;
                Ok(Period {
                    label: p.label.clone(),
                    start,
                    end: start + chrono::Duration::hours(p.hours as i64),
                })
            })
            .collect()
    }
}

pub fn synthesize_temperature(spec: &SynthSpec, rng: &mut RngStream) -> Result<Vec<Record>> {
    use chrono::{Datelike, Timelike};
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = Vec::new();
    for (p, period) in spec.periods.iter().zip(spec.periods()?) {
        for h in 0..p.hours {
            let ts = period.start + chrono::Duration::hours(h as i64);
            let season = -(two_pi * (ts.ordinal0() as f64 + 10.0) / 365.25).cos();
            let day = -(two_pi * (ts.hour() as f64 - 3.0) / 24.0).cos();
            let dev = spec.seasonal_amplitude * season
                + spec.daily_amplitude * day
                + spec.noise_sd * rng.standard_normal();
            out.push(Record {
                timestamp: ts,
                value: spec.base + p.shift + p.scale * dev,
            });
        }
    }
    Ok(out)
}

/// Settings of the full pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeOptions {
    pub m: usize,
    pub alpha: f64,
    pub b_reps: usize,
    pub p: f64,
    pub master_seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            m: 50,
            alpha: 0.05,
            b_reps: 100,
            p: 0.5,
            master_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodAnalysis {
    pub label: String,
    pub count: usize,
    /// Path size used for the bootstrap, floor(count / m).
    pub n: usize,
    pub theta_hat: ThetaEstimate,
    pub band: BandResult,
}

/// Estimates and bands for every period against the reference sample.
pub fn analyze_periods(
    reference: &[f64],
    periods: &[PeriodDataset],
    opts: &AnalyzeOptions,
) -> Result<Vec<PeriodAnalysis>> {
    if opts.m < 2 {
        return Err(Error::param("m must be at least 2"));
    }
    let q0 = empirical_quantile(reference)
        .map_err(|_| Error::InsufficientSample("reference period has no observations".into()))?;
    let grid = analysis_grid();
    periods
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let run = || -> Result<PeriodAnalysis> {
                if ds.count() < opts.m {
                    return Err(Error::InsufficientSample(format!(
                        "{} observations cannot be split into m = {} samples",
                        ds.count(),
                        opts.m
                    )));
                }
                let mut split_rng = RngStream::new(opts.master_seed, i as u64);
                let boot_seed = split_rng.split(0).seed();
                let parts = random_split(&ds.observations, opts.m, &mut split_rng)?;
                let warps: Vec<WarpPath> = parts
                    .iter()
                    .map(|part| warp_from_quantiles(&q0, &empirical_quantile(part)?))
                    .collect::<Result<_>>()?;
                let values = evaluate_all(&warps, &grid)?;
                let phi = mean_curve(&values);
                let theta = theta_from_values(&values, &phi, &grid)?;
                let n = ds.count() / opts.m;
                let band = bootstrap_bands(
                    &phi,
                    &grid,
                    theta.theta_hat,
                    opts.p,
                    n,
                    opts.m,
                    opts.b_reps,
                    opts.alpha,
                    boot_seed,
                )?;
                Ok(PeriodAnalysis {
                    label: ds.label.clone(),
                    count: ds.count(),
                    n,
                    theta_hat: theta,
                    band,
                })
            };
            run().map_err(|e| Error::Period {
                label: ds.label.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_conventions() {
        let q = empirical_quantile(&[3.0]).unwrap();
        assert_eq!(q.eval(0.0), 3.0);
        assert_eq!(q.eval(0.7), 3.0);
        let q = empirical_quantile(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert!((q.eval(0.5) - 2.5).abs() < 1e-15);
        assert_eq!(q.eval(0.0), 1.0);
        assert_eq!(q.eval(1.0), 4.0);
        assert_eq!(q.eval(0.2), 1.0);
        assert!(empirical_quantile(&[]).is_err());
    }

    #[test]
    fn quantile_matches_sort_and_index() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..100 {
            let n = 1 + (rng.uniform() * 40.0) as usize;
            let data: Vec<f64> = (0..n).map(|_| (rng.uniform() * 10.0).round()).collect();
            let q = empirical_quantile(&data).unwrap();
            let mut s = data.clone();
            s.sort_by(f64::total_cmp);
            for k in 1..=n {
                assert_eq!(q.eval(k as f64 / (n + 1) as f64), s[k - 1]);
            }
        }
    }

    #[test]
    fn self_comparison_is_identity() {
        let mut rng = RngStream::new(9, 0);
        let data: Vec<f64> = (0..500).map(|_| (rng.standard_normal() * 10.0).round() / 10.0).collect();
        let q = empirical_quantile(&data).unwrap();
        let w = warp_from_quantiles(&q, &q).unwrap();
        for (x, y) in w.xs().iter().zip(w.ys()) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn shifted_uniform_gives_identity() {
        let r = QuantileFunction::new(vec![0.0, 1.0], vec![2.0, 5.0]).unwrap();
        let s = QuantileFunction::new(vec![0.0, 1.0], vec![2.6, 5.6]).unwrap();
        let w = warp_from_quantiles(&r, &s).unwrap();
        for (x, y) in w.xs().iter().zip(w.ys()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn larger_sample_warps_above_identity() {
        let mut rng = RngStream::new(2, 0);
        let a: Vec<f64> = (0..4000).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.standard_normal() + 0.5).collect();
        let w = warp_from_quantiles(&empirical_quantile(&a).unwrap(), &empirical_quantile(&b).unwrap()).unwrap();
        for (x, y) in w.xs().iter().zip(w.ys()) {
            if (0.05..=0.95).contains(x) {
                assert!(*y >= *x, "{x} {y}");
            }
        }
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let r = empirical_quantile(&[1.0, 2.0, 3.0]).unwrap();
        let s = empirical_quantile(&[2.0, 2.0]).unwrap();
        assert!(matches!(warp_from_quantiles(&r, &s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn phi_and_theta_estimators() {
        let grid = analysis_grid();
        let w = WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.7, 1.0]).unwrap();
        let phi = estimate_phi(&[w.clone(), w.clone()], &grid).unwrap();
        assert!((phi[500] - 0.7).abs() < 1e-15);
        assert!(matches!(estimate_phi(&[w.clone()], &grid), Err(Error::InsufficientSample(_))));
        assert!(matches!(estimate_theta(&[w.clone(), w.clone()], &phi, &grid), Err(Error::Degenerate(_))));
        let refl = WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.3, 1.0]).unwrap();
        let phi = estimate_phi(&[w.clone(), refl.clone()], &grid).unwrap();
        assert!(phi.iter().zip(&grid).all(|(f, u)| (f - u).abs() < 1e-12));
        let th = estimate_theta(&[w, refl], &phi, &grid).unwrap();
        // v = 0.32 t^2 on [0, 0.5], mirrored; integral 2 * 0.32 / 24
        let expected = (1.0 / 6.0) / (0.64 / 24.0) - 1.0;
        assert!((th.theta_hat - expected).abs() / expected < 1e-5, "{}", th.theta_hat);
    }

    #[test]
    fn negative_theta_is_flagged() {
        let grid = analysis_grid();
        let a = WarpPath::new(vec![0.0, 0.01, 1.0], vec![0.0, 0.99, 1.0]).unwrap();
        let b = WarpPath::new(vec![0.0, 0.99, 1.0], vec![0.0, 0.01, 1.0]).unwrap();
        let phi = estimate_phi(&[a.clone(), b.clone()], &grid).unwrap();
        let th = estimate_theta(&[a, b], &phi, &grid).unwrap();
        assert!(th.negative && th.theta_hat < 0.0);
    }

    #[test]
    fn quantile_index_convention() {
        assert_eq!(band_quantile_index(0.05, 100), 94);
        assert_eq!(band_quantile_index(0.05, 20), 18);
        assert_eq!(band_quantile_index(0.5, 3), 1);
    }

    #[test]
    fn split_sizes_and_union() {
        let data: Vec<f64> = (0..103).map(f64::from).collect();
        let mut rng = RngStream::new(1, 1);
        let parts = random_split(&data, 10, &mut rng).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, [11, 11, 11, 10, 10, 10, 10, 10, 10, 10]);
        let mut all: Vec<f64> = parts.concat();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, data);
        assert_eq!(random_split(&data, 1, &mut rng).unwrap()[0].len(), 103);
        assert!(random_split(&data, 104, &mut rng).is_err());
    }

    #[test]
    fn ingestion_skips_bad_rows() {
        let text = "timestamp,value\n2013-06-01T00:00,NA\n2012-01-01T01:00,3.5\n2012-01-01 02:00:00,-1\nnot-a-date,2\n";
        let got = read_observations(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.skipped, 2);
        assert!(read_observations("timestamp,value\nx,NA\n".as_bytes(), &CsvSchema::default()).is_err());
        assert!(read_observations("time,v\n".as_bytes(), &CsvSchema::default()).is_err());
    }

    #[test]
    fn ingestion_round_trip() {
        let recs = vec![
            Record {
                timestamp: parse_timestamp("2001-02-03T04:05:06").unwrap(),
                value: 1.234567890123,
            },
            Record {
                timestamp: parse_timestamp("2001-02-03T05:05:06").unwrap(),
                value: -20.5,
            },
        ];
        let mut buf = Vec::new();
        write_observations(&mut buf, &recs).unwrap();
        let back = read_observations(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back.records.len(), 2);
        for (a, b) in recs.iter().zip(&back.records) {
            assert_eq!(a.timestamp, b.timestamp);
            assert!((a.value - b.value).abs() < 1e-9);
        }
    }

    #[test]
    fn periods_are_half_open() {
        let ps = parse_periods("a=2000-01-01/2001-01-01,b=2001-01-01/2002-01-01").unwrap();
        let recs = [
            Record {
                timestamp: parse_timestamp("2001-01-01T00:00").unwrap(),
                value: 1.0,
            },
            Record {
                timestamp: parse_timestamp("2003-01-01").unwrap(),
                value: 2.0,
            },
        ];
        let ds = split_periods(&recs, &ps).unwrap();
        assert_eq!(ds[0].count(), 0);
        assert_eq!(ds[1].observations, vec![1.0]);
        assert!(parse_periods("a=2001-01-01/2000-01-01").is_err());
        assert!(split_periods(&recs, &parse_periods("2000-01-01/2002-01-01,2001-01-01/2003-01-01").unwrap()).is_err());
    }

    #[test]
    fn synthetic_counts_match() {
        let spec = SynthSpec::yearly(1990, 2, 500, &[0.0, 1.0, 2.0]);
        let recs = synthesize_temperature(&spec, &mut RngStream::new(0, 0)).unwrap();
        let ds = split_periods(&recs, &spec.periods().unwrap()).unwrap();
        assert!(ds.iter().all(|d| d.count() == 500));
    }
}
