//! Path simulation: fixed-partition Dirichlet paths (CDH), random-partition
//! Dirichlet paths (BK), polygonal CDF paths with Dirichlet weights (CDF),
//! and truncated log-derivative expansions (MZW, modified and original).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{sample_dirichlet, sample_uniform_order_stats, OrderStatGrid, RngStream};
use crate::warp::{
    cumulative_ordinates, FourierTable, GridFunction, SmoothWarp, TargetWarp, WarpPath, GRID_SIZE,
};

/// Largest |exponent| allowed on the grid before exp overflows.
const EXP_LIMIT: f64 = 700.0;

#[derive(Clone, Debug)]
pub struct BkConfig {
    n: usize,
    theta: f64,
    target: TargetWarp,
}

impl BkConfig {
    pub fn new(n: usize, theta: f64, target: TargetWarp) -> Result<Self> {
        check_size(n)?;
        check_theta(theta)?;
        Ok(BkConfig { n, theta, target })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn target(&self) -> &TargetWarp {
        &self.target
    }
}

#[derive(Clone, Debug)]
pub struct CdfConfig {
    n: usize,
    theta: f64,
    p: f64,
    target: TargetWarp,
}

impl CdfConfig {
    pub fn new(n: usize, theta: f64, p: f64, target: TargetWarp) -> Result<Self> {
        check_size(n)?;
        check_theta(theta)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param(format!("p must lie in (0,1), got {p}")));
        }
        Ok(CdfConfig { n, theta, p, target })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn target(&self) -> &TargetWarp {
        &self.target
    }
}

/// Draws the score of mode `i` (1-based) with the given variance.
pub type ScoreFn = dyn Fn(&mut RngStream, usize, f64) -> f64 + Send + Sync;

/// Law of the expansion scores.
#[derive(Clone)]
pub enum ScoreLaw {
    /// Independent centred normals.
    Gaussian,
    Custom(Arc<ScoreFn>),
}

impl ScoreLaw {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&mut RngStream, usize, f64) -> f64 + Send + Sync + 'static,
    {
        ScoreLaw::Custom(Arc::new(f))
    }

    fn draw(&self, rng: &mut RngStream, i: usize, var: f64) -> f64 {
        match self {
            ScoreLaw::Gaussian => var.sqrt() * rng.standard_normal(),
            ScoreLaw::Custom(f) => f(rng, i, var),
        }
    }
}

impl fmt::Debug for ScoreLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreLaw::Gaussian => write!(f, "Gaussian"),
            ScoreLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Modified expansion sampler: scores with variance v_i/(1+theta) added to
/// the centred log-derivative of the target.
#[derive(Clone, Debug)]
pub struct MzwConfig {
    theta: f64,
    v: Vec<f64>,
    target: SmoothWarp,
    score_law: ScoreLaw,
    table: Arc<FourierTable>,
    center: GridFunction,
}

impl MzwConfig {
    /// `theta = 0` is accepted: it is the unshrunk end of the family.
    pub fn new(theta: f64, v: Vec<f64>, target: SmoothWarp, score_law: ScoreLaw) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::param(format!("theta must be finite and >= 0, got {theta}")));
        }
        check_variances(&v)?;
        let table = Arc::new(FourierTable::new(v.len(), target.grid_size()));
        let center = target.centered_log_derivative();
        Ok(MzwConfig {
            theta,
            v,
            target,
            score_law,
            table,
            center,
        })
    }

    /// Gaussian scores, base variances 1/i^2, target on the default grid.
    pub fn standard(m: usize, theta: f64, target: &TargetWarp) -> Result<Self> {
        MzwConfig::new(
            theta,
            inverse_square_variances(m),
            SmoothWarp::from_target(target, GRID_SIZE)?,
            ScoreLaw::Gaussian,
        )
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn target(&self) -> &SmoothWarp {
        &self.target
    }

    pub fn score_law(&self) -> &ScoreLaw {
        &self.score_law
    }

    /// Variance of score i (1-based).
    pub fn score_variance(&self, i: usize) -> f64 {
        self.v[i - 1] / (1.0 + self.theta)
    }
}

/// v_i = 1/i^2 for i = 1..=m.
pub fn inverse_square_variances(m: usize) -> Vec<f64> {
    (1..=m).map(|i| 1.0 / (i as f64 * i as f64)).collect()
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("theta must be finite and > 0, got {theta}")));
    }
    Ok(())
}

fn check_variances(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::param("truncation order m must be >= 1"));
    }
    if let Some(i) = v.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::param(format!("variance v_{} = {} must be > 0", i + 1, v[i])));
    }
    Ok(())
}

/// Equispaced partition 0, 1/(n+1), ..., 1 with n interior points.
pub fn uniform_partition(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n + 1).map(|i| i as f64 / (n + 1) as f64).collect();
    v[n + 1] = 1.0;
    v
}

/// Fixed partition `grid` (n interior points), heights from the cumulative
/// sums of a symmetric Dirichlet(theta, ..., theta) of size n+1.
pub fn simulate_cdh(n: usize, grid: &[f64], theta: f64, rng: &mut RngStream) -> Result<WarpPath> {
    check_size(n)?;
    check_theta(theta)?;
    if grid.len() != n + 2 {
        return Err(Error::param(format!(
            "partition must hold n + 2 = {} points, got {}",
            n + 2,
            grid.len()
        )));
    }
    OrderStatGrid::new(grid.to_vec())?;
    let w = sample_dirichlet(&vec![theta; n + 1], rng)?;
    WarpPath::new(grid.to_vec(), cumulative_ordinates(w.weights()))
}

/// Cumulative heights for a frozen partition: Dirichlet with parameters
/// theta times the target increments over the partition cells.
pub fn bk_ordinates(cfg: &BkConfig, grid: &OrderStatGrid, rng: &mut RngStream) -> Result<Vec<f64>> {
    let phi: Vec<f64> = grid.knots().iter().map(|&u| cfg.target.eval(u)).collect();
    let params: Vec<f64> = phi.windows(2).map(|w| cfg.theta * (w[1] - w[0]).max(0.0)).collect();
    let w = sample_dirichlet(&params, rng).map_err(|e| {
        let tiny = params
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, a)| format!("smallest parameter {a:e} at cell {}", i + 1))
            .unwrap_or_default();
        Error::Sampling(format!("Dirichlet draw failed ({e}); {tiny}"))
    })?;
    Ok(cumulative_ordinates(w.weights()))
}

pub fn simulate_bk(cfg: &BkConfig, rng: &mut RngStream) -> Result<WarpPath> {
    let grid = sample_uniform_order_stats(cfg.n, rng)?;
    let ys = bk_ordinates(cfg, &grid, rng)?;
    WarpPath::new(grid.into_knots(), ys)
}

/// Heights 0, g_1, ..., g_n, 1 of the polygonal CDF path, where
/// g_j = b_1 + ... + b_j - p b_j and b ~ Dirichlet(theta/n, ..., theta/n).
pub fn cdf_ordinates(n: usize, theta: f64, p: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let beta = sample_dirichlet(&vec![theta / n as f64; n], rng)
        .map_err(|e| Error::Sampling(format!("Dirichlet draw failed: {e}")))?;
    let mut ys = Vec::with_capacity(n + 2);
    ys.push(0.0);
    let mut acc = 0.0;
    let mut prev = 0.0f64;
    for &b in beta.weights() {
        acc += b;
        let y = (acc - p * b).clamp(prev, 1.0);
        ys.push(y);
        prev = y;
    }
    ys.push(1.0);
    Ok(ys)
}

/// Uniforms first, then the Dirichlet weights; neither depends on the
/// target, so the same stream gives the same heights for every target.
pub fn simulate_cdf(cfg: &CdfConfig, rng: &mut RngStream) -> Result<WarpPath> {
    let grid = sample_uniform_order_stats(cfg.n, rng)?;
    let ys = cdf_ordinates(cfg.n, cfg.theta, cfg.p, rng)?;
    let xs: Vec<f64> = grid.knots().iter().map(|&u| cfg.target.inverse(u)).collect();
    if xs.windows(2).all(|w| w[0] < w[1]) && xs[xs.len() - 1] == 1.0 {
        WarpPath::new(xs, ys)
    } else {
        WarpPath::from_rounded(xs, ys)
    }
}

fn expansion_to_warp(values: Vec<f64>) -> Result<SmoothWarp> {
    if let Some(k) = values.iter().position(|v| !(v.abs() <= EXP_LIMIT)) {
        return Err(Error::Sampling(format!(
            "log-derivative reaches {} at node {k}; use smaller variances or a larger theta",
            values[k]
        )));
    }
    SmoothWarp::from_log_derivative(values)
}

/// Modified expansion path for given scores (one per mode).
pub fn mzw_from_scores(cfg: &MzwConfig, scores: &[f64]) -> Result<SmoothWarp> {
    if scores.len() != cfg.m() {
        return Err(Error::param(format!("expected {} scores, got {}", cfg.m(), scores.len())));
    }
    let mut x = cfg.table.combine(scores);
    for (xi, c) in x.iter_mut().zip(cfg.center.values()) {
        *xi += c;
    }
    expansion_to_warp(x)
}

pub fn draw_scores(cfg: &MzwConfig, rng: &mut RngStream) -> Vec<f64> {
    (1..=cfg.m())
        .map(|i| cfg.score_law.draw(rng, i, cfg.score_variance(i)))
        .collect()
}

/// Modified expansion sampler as a smooth warp.
pub fn simulate_mzw_smooth(cfg: &MzwConfig, rng: &mut RngStream) -> Result<SmoothWarp> {
    let scores = draw_scores(cfg, rng);
    mzw_from_scores(cfg, &scores)
}

/// Modified expansion sampler, discretised on the grid nodes.
pub fn simulate_mzw(cfg: &MzwConfig, rng: &mut RngStream) -> Result<WarpPath> {
    Ok(simulate_mzw_smooth(cfg, rng)?.to_path())
}

/// Original expansion sampler: scores N(0, v_i) around the identity.
pub fn simulate_mzw_original_smooth(v: &[f64], rng: &mut RngStream) -> Result<SmoothWarp> {
    check_variances(v)?;
    let table = FourierTable::new(v.len(), GRID_SIZE);
    let scores: Vec<f64> = v.iter().map(|vi| vi.sqrt() * rng.standard_normal()).collect();
    expansion_to_warp(table.combine(&scores))
}

pub fn simulate_mzw_original(m: usize, v: &[f64], rng: &mut RngStream) -> Result<WarpPath> {
    if v.len() != m {
        return Err(Error::param(format!("expected {m} variances, got {}", v.len())));
    }
    Ok(simulate_mzw_original_smooth(v, rng)?.to_path())
}
