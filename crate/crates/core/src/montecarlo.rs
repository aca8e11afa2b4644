//! Replication harness: pointwise empirical moments of simulated paths,
//! distances to the target, convergence tables and the large-theta check of
//! the expansion sampler.
//!
//! Replicate r always draws from `RngStream::new(master_seed, r)`. Replicates
//! are processed in fixed chunks whose power sums are combined pairwise, so
//! results are bit-identical for any thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{
    asymptotic_profile, bk_moments_exact, cdf_moments_exact, MomentProfile, ProfileKind,
    ProfileParams, MAX_EXACT_N,
};
use crate::rng::{RngStream, StreamId};
use crate::samplers::{
    simulate_bk, simulate_cdf, simulate_cdh, simulate_mzw, simulate_mzw_original, uniform_partition,
    BkConfig, CdfConfig, MzwConfig,
};
use crate::warp::{TargetWarp, WarpPath};

const CHUNK: usize = 256;
const L2_MESH: usize = 256;

/// Sampler plus its parameters.
#[derive(Clone, Debug)]
pub enum AlgoConfig {
    Cdh { n: usize, theta: f64 },
    Bk(BkConfig),
    Cdf(CdfConfig),
    Mzw(MzwConfig),
    MzwOriginal { v: Vec<f64> },
}

impl AlgoConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgoConfig::Cdh { .. } => "cdh",
            AlgoConfig::Bk(_) => "bk",
            AlgoConfig::Cdf(_) => "cdf",
            AlgoConfig::Mzw(_) => "mzw",
            AlgoConfig::MzwOriginal { .. } => "mzw-original",
        }
    }

    /// n for partition samplers, m for expansion samplers.
    pub fn size(&self) -> usize {
        match self {
            AlgoConfig::Cdh { n, .. } => *n,
            AlgoConfig::Bk(c) => c.n(),
            AlgoConfig::Cdf(c) => c.n(),
            AlgoConfig::Mzw(c) => c.m(),
            AlgoConfig::MzwOriginal { v } => v.len(),
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            AlgoConfig::Cdh { theta, .. } => *theta,
            AlgoConfig::Bk(c) => c.theta(),
            AlgoConfig::Cdf(c) => c.theta(),
            AlgoConfig::Mzw(c) => c.theta(),
            AlgoConfig::MzwOriginal { .. } => 0.0,
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self {
            AlgoConfig::Cdf(c) => Some(c.p()),
            _ => None,
        }
    }

    pub fn simulate(&self, rng: &mut RngStream) -> Result<WarpPath> {
        match self {
            AlgoConfig::Cdh { n, theta } => simulate_cdh(*n, &uniform_partition(*n), *theta, rng),
            AlgoConfig::Bk(c) => simulate_bk(c, rng),
            AlgoConfig::Cdf(c) => simulate_cdf(c, rng),
            AlgoConfig::Mzw(c) => simulate_mzw(c, rng),
            AlgoConfig::MzwOriginal { v } => simulate_mzw_original(v.len(), v, rng),
        }
    }

    /// The warp the paths fluctuate around (identity for the samplers
    /// without a target).
    pub fn target_eval(&self, t: f64) -> f64 {
        match self {
            AlgoConfig::Cdh { .. } | AlgoConfig::MzwOriginal { .. } => t,
            AlgoConfig::Bk(c) => c.target().eval(t),
            AlgoConfig::Cdf(c) => c.target().eval(t),
            AlgoConfig::Mzw(c) => c.target().eval(t).unwrap_or(f64::NAN),
        }
    }

    fn params(&self) -> ProfileParams {
        ProfileParams {
            algorithm: self.name().into(),
            size: Some(self.size()),
            theta: self.theta(),
            p: self.p(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudySpec {
    pub algorithm: AlgoConfig,
    pub replicates: usize,
    pub grid: Vec<f64>,
    pub master_seed: u64,
    /// Whether to integrate the squared L2 distance of every path.
    pub l2: bool,
}

impl StudySpec {
    pub fn new(algorithm: AlgoConfig, replicates: usize, grid: Vec<f64>, master_seed: u64) -> Result<Self> {
        check_study(replicates, &grid)?;
        Ok(StudySpec {
            algorithm,
            replicates,
            grid,
            master_seed,
            l2: true,
        })
    }

    /// Skips the L2 integrals, which dominate the cost for short paths.
    pub fn without_l2(mut self) -> Self {
        self.l2 = false;
        self
    }
}

fn check_study(replicates: usize, grid: &[f64]) -> Result<()> {
    if replicates < 2 {
        return Err(Error::param(format!("need at least 2 replicates, got {replicates}")));
    }
    if grid.is_empty() || grid.iter().any(|t| !(*t >= 0.0 && *t <= 1.0)) {
        return Err(Error::param("grid must be a non-empty subset of [0,1]"));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("grid must be sorted"));
    }
    Ok(())
}

/// 99 points 0.01, ..., 0.99.
pub fn default_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyResult {
    pub empirical: MomentProfile,
    pub mean_se: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// Average squared L2 distance to the target, when computed.
    pub l2_error_mean: Option<f64>,
    pub l2_error_se: Option<f64>,
    /// Average sup distance to the target over the grid.
    pub sup_error_mean: f64,
    pub per_replicate_seeds: Vec<StreamId>,
}

impl StudyResult {
    /// Columns `t,mean,var` plus standard errors.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "mean", "var", "mean_se", "var_se"])?;
        let e = &self.empirical;
        for i in 0..e.grid.len() {
            wr.write_record([
                format!("{}", e.grid[i]),
                format!("{:e}", e.mean[i]),
                format!("{:e}", e.variance[i]),
                format!("{:e}", self.mean_se[i]),
                format!("{:e}", self.variance_se[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "algorithm": self.empirical.params.algorithm,
            "size": self.empirical.params.size,
            "theta": self.empirical.params.theta,
            "p": self.empirical.params.p,
            "replicates": self.per_replicate_seeds.len(),
            "l2_error_mean": self.l2_error_mean,
            "l2_error_se": self.l2_error_se,
            "sup_error_mean": self.sup_error_mean,
            "seeds": self.per_replicate_seeds,
        })
    }
}

/// Per-point power sums of deviations from the target, plus distance sums.
#[derive(Clone, Debug)]
struct Sums {
    count: usize,
    p: [Vec<f64>; 4],
    l2: f64,
    l2_sq: f64,
    sup: f64,
}

impl Sums {
    fn zero(k: usize) -> Self {
        Sums {
            count: 0,
            p: [vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]],
            l2: 0.0,
            l2_sq: 0.0,
            sup: 0.0,
        }
    }

    fn push(&mut self, values: &[f64], reference: &[f64], l2: f64) {
        let mut sup = 0.0f64;
        for (i, (v, r)) in values.iter().zip(reference).enumerate() {
            let d = v - r;
            let d2 = d * d;
            self.p[0][i] += d;
            self.p[1][i] += d2;
            self.p[2][i] += d2 * d;
            self.p[3][i] += d2 * d2;
            sup = sup.max(d.abs());
        }
        self.count += 1;
        self.l2 += l2;
        self.l2_sq += l2 * l2;
        self.sup += sup;
    }

    fn merge(mut self, other: &Sums) -> Self {
        self.count += other.count;
        for k in 0..4 {
            for (a, b) in self.p[k].iter_mut().zip(&other.p[k]) {
                *a += b;
            }
        }
        self.l2 += other.l2;
        self.l2_sq += other.l2_sq;
        self.sup += other.sup;
        self
    }
}

fn pairwise(mut parts: Vec<Sums>) -> Sums {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

fn finish_sums(
    sums: Sums,
    l2: bool,
    grid: &[f64],
    reference: &[f64],
    params: ProfileParams,
    seeds: Vec<StreamId>,
) -> Result<StudyResult> {
    let m = sums.count as f64;
    let k = grid.len();
    let (mut mean, mut variance) = (vec![0.0; k], vec![0.0; k]);
    let (mut mean_se, mut variance_se) = (vec![0.0; k], vec![0.0; k]);
    for i in 0..k {
        let s1 = sums.p[0][i] / m;
        let c2 = (sums.p[1][i] / m - s1 * s1).max(0.0);
        let c4 = sums.p[3][i] / m - 4.0 * s1 * sums.p[2][i] / m + 6.0 * s1 * s1 * sums.p[1][i] / m
            - 3.0 * s1.powi(4);
        let var = c2 * m / (m - 1.0);
        mean[i] = (reference[i] + s1).clamp(0.0, 1.0);
        variance[i] = var;
        mean_se[i] = (var / m).sqrt();
        let v4 = (c4 - var * var * (m - 3.0) / (m - 1.0)) / m;
        variance_se[i] = v4.max(0.0).sqrt();
    }
    let l2_mean = sums.l2 / m;
    let l2_var = ((sums.l2_sq / m - l2_mean * l2_mean) * m / (m - 1.0)).max(0.0);
    Ok(StudyResult {
        empirical: MomentProfile::new(grid.to_vec(), mean, variance, ProfileKind::Empirical, params)?,
        mean_se,
        variance_se,
        l2_error_mean: l2.then_some(l2_mean),
        l2_error_se: l2.then_some((l2_var / m).sqrt()),
        sup_error_mean: sums.sup / m,
        per_replicate_seeds: seeds,
    })
}

/// Stream used by replicate `r` of a study seeded with `master_seed`.
pub fn replicate_stream(master_seed: u64, r: usize) -> RngStream {
    RngStream::new(master_seed, r as u64)
}

/// Runs `replicates` draws of `draw` in deterministic chunks and folds the
/// per-replicate values with `fold` in replicate order within each chunk;
/// chunk results are returned in order.
pub fn run_chunked<T, D, F>(replicates: usize, master_seed: u64, draw: D, fold: F) -> Result<Vec<T>>
where
    T: Send,
    D: Fn(&mut RngStream) -> Result<T> + Sync,
    F: Fn(Vec<T>) -> T + Sync,
{
    let chunks: Vec<usize> = (0..replicates.div_ceil(CHUNK)).collect();
    chunks
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replicates);
            let mut vals = Vec::with_capacity(hi - lo);
            for r in lo..hi {
                let mut rng = replicate_stream(master_seed, r);
                vals.push(draw(&mut rng).map_err(|e| Error::Replicate {
                    index: r,
                    source: Box::new(e),
                })?);
            }
            Ok(fold(vals))
        })
        .collect()
}

/// Study over an arbitrary path generator.
pub fn run_study_with<S, F>(
    replicates: usize,
    grid: &[f64],
    master_seed: u64,
    target: F,
    params: ProfileParams,
    l2: bool,
    sample: S,
) -> Result<StudyResult>
where
    S: Fn(&mut RngStream) -> Result<WarpPath> + Sync,
    F: Fn(f64) -> f64 + Sync,
{
    check_study(replicates, grid)?;
    let reference: Vec<f64> = grid.iter().map(|&t| target(t)).collect();
    let chunks: Vec<usize> = (0..replicates.div_ceil(CHUNK)).collect();
    let parts: Result<Vec<Sums>> = chunks
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replicates);
            let mut sums = Sums::zero(grid.len());
            for r in lo..hi {
                let mut rng = replicate_stream(master_seed, r);
                let path = sample(&mut rng).map_err(|e| Error::Replicate {
                    index: r,
                    source: Box::new(e),
                })?;
                let vals = path.eval_sorted(grid);
                let d = if l2 { path.squared_l2_distance(&target, L2_MESH) } else { 0.0 };
                sums.push(&vals, &reference, d);
            }
            Ok(sums)
        })
        .collect();
    let seeds = (0..replicates)
        .map(|r| replicate_stream(master_seed, r).id())
        .collect();
    finish_sums(pairwise(parts?), l2, grid, &reference, params, seeds)
}

pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    let algo = &spec.algorithm;
    run_study_with(
        spec.replicates,
        &spec.grid,
        spec.master_seed,
        |t| algo.target_eval(t),
        algo.params(),
        spec.l2,
        |rng| algo.simulate(rng),
    )
}

/// Moments of a fixed set of paths, e.g. injected fixtures.
pub fn summarize_paths<F: Fn(f64) -> f64>(
    paths: &[WarpPath],
    grid: &[f64],
    target: F,
    params: ProfileParams,
) -> Result<StudyResult> {
    check_study(paths.len(), grid)?;
    let reference: Vec<f64> = grid.iter().map(|&t| target(t)).collect();
    let mut sums = Sums::zero(grid.len());
    for p in paths {
        sums.push(&p.eval_sorted(grid), &reference, p.squared_l2_distance(&target, L2_MESH));
    }
    finish_sums(sums, true, grid, &reference, params, Vec::new())
}

/// Family for convergence tables.
#[derive(Clone, Debug)]
pub enum ConvergenceFamily {
    Bk { theta: f64, target: TargetWarp },
    Cdf { theta: f64, p: f64, target: TargetWarp },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Exact,
    Asymptotic,
    /// exact when n is within the oracle range, otherwise asymptotic
    Auto,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub reference: &'static str,
    /// Grid average of |empirical mean - reference mean|.
    pub mean_abs_error: f64,
    pub var_abs_error: f64,
    pub mean_errors: Vec<f64>,
    pub var_errors: Vec<f64>,
    /// err(previous n) / err(this n); None on the first row.
    pub mean_ratio: Option<f64>,
    pub var_ratio: Option<f64>,
}

pub fn convergence_study(
    family: &ConvergenceFamily,
    sizes: &[usize],
    reference: Reference,
    replicates: usize,
    grid: &[f64],
    master_seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("sizes must be strictly increasing"));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in sizes {
        let (algo, theta, target) = match family {
            ConvergenceFamily::Bk { theta, target } => {
                (AlgoConfig::Bk(BkConfig::new(n, *theta, target.clone())?), *theta, target)
            }
            ConvergenceFamily::Cdf { theta, p, target } => (
                AlgoConfig::Cdf(CdfConfig::new(n, *theta, *p, target.clone())?),
                *theta,
                target,
            ),
        };
        let res = run_study(&StudySpec::new(algo, replicates, grid.to_vec(), master_seed)?.without_l2())?;
        let exact = match reference {
            Reference::Exact => true,
            Reference::Asymptotic => false,
            Reference::Auto => n <= MAX_EXACT_N,
        };
        let (ref_mean, ref_var) = if exact {
            let mut mm = Vec::with_capacity(grid.len());
            let mut vv = Vec::with_capacity(grid.len());
            for &t in grid {
                let m = match family {
                    ConvergenceFamily::Bk { .. } => bk_moments_exact(t, n, theta, target)?,
                    ConvergenceFamily::Cdf { p, .. } => cdf_moments_exact(t, n, theta, *p, target)?,
                };
                mm.push(m.mean);
                vv.push(m.variance);
            }
            (mm, vv)
        } else {
            let a = asymptotic_profile(grid, theta, target)?;
            (a.mean, a.variance)
        };
        let mean_errors: Vec<f64> = res.empirical.mean.iter().zip(&ref_mean).map(|(a, b)| (a - b).abs()).collect();
        let var_errors: Vec<f64> = res
            .empirical
            .variance
            .iter()
            .zip(&ref_var)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let k = grid.len() as f64;
        let mean_abs_error = mean_errors.iter().sum::<f64>() / k;
        let var_abs_error = var_errors.iter().sum::<f64>() / k;
        let (mean_ratio, var_ratio) = match rows.last() {
            Some(prev) => (
                Some(prev.mean_abs_error / mean_abs_error),
                Some(prev.var_abs_error / var_abs_error),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n,
            reference: if exact { "exact" } else { "asymptotic" },
            mean_abs_error,
            var_abs_error,
            mean_errors,
            var_errors,
            mean_ratio,
            var_ratio,
        });
    }
    Ok(rows)
}

/// Lower and upper factors of the large-theta envelope for the mean of the
/// expansion sampler: phi exp(-(4/sqrt(pi)) sum sqrt(v_i)/sqrt(1+theta)) and
/// phi exp(sum v_i/(1+theta)).
pub fn mzw_mean_envelope(v: &[f64], theta: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + theta);
    let lower = (-(4.0 / std::f64::consts::PI.sqrt()) * s.sqrt() * v.iter().map(|x| x.sqrt()).sum::<f64>()).exp();
    let upper = (s * v.iter().sum::<f64>()).exp();
    (lower, upper)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaLimitRow {
    pub theta: f64,
    pub sup_mean_deviation: f64,
    pub sup_variance: f64,
    pub max_mean_se: f64,
    pub envelope_lower: f64,
    pub envelope_upper: f64,
    /// Every grid point satisfies
    /// lower phi - 4 se <= mean <= upper phi + 4 se.
    pub within_envelope: bool,
}

pub fn mzw_theta_limit_study(
    m: usize,
    v: &[f64],
    target: &TargetWarp,
    thetas: &[f64],
    replicates: usize,
    grid: &[f64],
    master_seed: u64,
) -> Result<Vec<ThetaLimitRow>> {
    if v.len() != m {
        return Err(Error::param(format!("expected {m} variances, got {}", v.len())));
    }
    if thetas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("thetas must be increasing"));
    }
    let smooth = crate::warp::SmoothWarp::from_target(target, crate::warp::GRID_SIZE)?;
    let mut rows = Vec::new();
    for &theta in thetas {
        let cfg = MzwConfig::new(theta, v.to_vec(), smooth.clone(), crate::samplers::ScoreLaw::Gaussian)?;
        let res = run_study(&StudySpec::new(AlgoConfig::Mzw(cfg), replicates, grid.to_vec(), master_seed)?.without_l2())?;
        let (lo, hi) = mzw_mean_envelope(v, theta);
        let mut within = true;
        let mut sup_dev = 0.0f64;
        for (i, &t) in grid.iter().enumerate() {
            let phi = target.eval(t);
            let mean = res.empirical.mean[i];
            let se = res.mean_se[i];
            sup_dev = sup_dev.max((mean - phi).abs());
            if mean < lo * phi - 4.0 * se || mean > hi * phi + 4.0 * se {
                within = false;
            }
        }
        rows.push(ThetaLimitRow {
            theta,
            sup_mean_deviation: sup_dev,
            sup_variance: res.empirical.variance.iter().cloned().fold(0.0, f64::max),
            max_mean_se: res.mean_se.iter().cloned().fold(0.0, f64::max),
            envelope_lower: lo,
            envelope_upper: hi,
            within_envelope: within,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ProfileParams {
        ProfileParams {
            algorithm: "fixture".into(),
            size: None,
            theta: 1.0,
            p: None,
        }
    }

    #[test]
    fn three_replicate_fixture_uses_unbiased_divisor() {
        // values at t = 0.5: 0.2, 0.5, 0.8 -> mean 0.5, variance 0.09
        let paths: Vec<WarpPath> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&y| WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, y, 1.0]).unwrap())
            .collect();
        let r = summarize_paths(&paths, &[0.5], |t| t, params()).unwrap();
        assert!((r.empirical.mean[0] - 0.5).abs() < 1e-15);
        assert!((r.empirical.variance[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn identical_paths_have_zero_variance() {
        let p = WarpPath::new(vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 1.0]).unwrap();
        let r = summarize_paths(&[p.clone(), p], &default_grid(), |t| t, params()).unwrap();
        assert!(r.empirical.variance.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn study_is_deterministic_across_thread_counts() {
        let cfg = CdfConfig::new(10, 2.0, 0.5, TargetWarp::builtin("phi3").unwrap()).unwrap();
        let spec = StudySpec::new(AlgoConfig::Cdf(cfg), 700, default_grid(), 11).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_study(&spec)).unwrap();
        let b = four.install(|| run_study(&spec)).unwrap();
        assert_eq!(a.empirical, b.empirical);
        assert_eq!(a.l2_error_mean.unwrap().to_bits(), b.l2_error_mean.unwrap().to_bits());
        assert_eq!(a.per_replicate_seeds.len(), 700);
    }

    #[test]
    fn spec_validation() {
        let cfg = AlgoConfig::Cdh { n: 3, theta: 1.0 };
        assert!(StudySpec::new(cfg.clone(), 1, default_grid(), 0).is_err());
        assert!(StudySpec::new(cfg.clone(), 5, vec![0.5, 0.2], 0).is_err());
        assert!(StudySpec::new(cfg, 5, vec![1.5], 0).is_err());
    }

    #[test]
    fn replicate_error_carries_index() {
        let r = run_study_with(3, &[0.5], 0, |t| t, params(), false, |rng| {
            if rng.stream_id() == 1 {
                Err(Error::Sampling("boom".into()))
            } else {
                Ok(WarpPath::identity())
            }
        });
        match r {
            Err(Error::Replicate { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn envelope_factors() {
        let (lo, hi) = mzw_mean_envelope(&[1.0], 3.0);
        assert!((lo - (-(4.0 / std::f64::consts::PI.sqrt()) * 0.5).exp()).abs() < 1e-15);
        assert!((hi - 0.25f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn cdh_knot_means() {
        let spec = StudySpec::new(AlgoConfig::Cdh { n: 4, theta: 1.0 }, 4000, vec![0.2, 0.4, 0.6, 0.8], 3).unwrap();
        let r = run_study(&spec).unwrap();
        for i in 0..4 {
            assert!((r.empirical.mean[i] - spec.grid[i]).abs() < 4.0 * r.mean_se[i]);
        }
    }
}
