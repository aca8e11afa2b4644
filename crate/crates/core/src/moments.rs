//! Exact pointwise mean and variance of random-partition (BK) and polygonal
//! CDF paths, their large-n limits, the L2 risk limit and the variance of the
//! expansion sampler.
//!
//! Conditionally on the partition the first two moments of a path are
//! explicit; what remains is an expectation over the pair of order statistics
//! bracketing t. The sum over the bracket index j of the pair densities
//! n!/((j-1)!(n-j-1)!) u^{j-1}(1-v)^{n-j-1} is a binomial expansion, so the
//! middle terms become one double integral whose kernel is evaluated in log
//! space. Integrals run over the distances a = t - u and b = v - t, on meshes
//! graded geometrically towards the corner a = b = 0 where the interpolation
//! ratio a/(a+b) is discontinuous; Gauss nodes never touch panel ends. Every
//! value is computed with 16- and 12-point rules and the difference is the
//! error estimate.

use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warp::TargetWarp;

/// Largest partition size accepted by the exact oracles.
pub const MAX_EXACT_N: usize = 128;

/// Absolute quadrature error target.
pub const QUAD_TOL: f64 = 1e-8;

/// Slack below zero tolerated on variances before they are clamped.
pub const VARIANCE_SLACK: f64 = 1e-10;

const GRADING: f64 = 0.25;
const CORNER: f64 = 1e-13;
const NEGLIGIBLE: f64 = 1e-17;

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss-Legendre rule on [-1, 1], nodes by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Rule { nodes, weights }
}

fn rules() -> &'static (Rule, Rule) {
    static RULES: OnceLock<(Rule, Rule)> = OnceLock::new();
    RULES.get_or_init(|| (gauss_legendre(16), gauss_legendre(12)))
}

/// Panels of (0, len) graded by `GRADING` towards 0, none wider than `wmax`.
fn graded_mesh(len: f64, wmax: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![len];
    let mut e = len;
    while e > CORNER * len {
        e *= GRADING;
        edges.push(e);
    }
    edges.push(0.0);
    edges.reverse();
    let mut panels = Vec::new();
    for w in edges.windows(2) {
        let pieces = ((w[1] - w[0]) / wmax).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            let lo = w[0] + k as f64 * h;
            let hi = if k + 1 == pieces { w[1] } else { w[0] + (k + 1) as f64 * h };
            panels.push((lo, hi));
        }
    }
    panels
}

fn panel_points(panels: &[(f64, f64)], rule: &Rule) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(panels.len() * rule.nodes.len());
    for &(lo, hi) in panels {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (z, w) in rule.nodes.iter().zip(&rule.weights) {
            pts.push((mid + half * z, half * w));
        }
    }
    pts
}

fn integrate_1d<F: Fn(f64) -> [f64; 2]>(panels: &[(f64, f64)], rule: &Rule, f: F) -> [f64; 2] {
    let mut acc = [0.0; 2];
    for (x, w) in panel_points(panels, rule) {
        let v = f(x);
        acc[0] += w * v[0];
        acc[1] += w * v[1];
    }
    acc
}

/// Tensor-product integral over rectangles of two meshes. Per-axis data is
/// computed once per node by `prep_a`/`prep_b`; `skip(ia, ib)` drops
/// rectangles whose integrand is negligible.
fn integrate_2d<A, B, PA, PB, S, F>(
    pa: &[(f64, f64)],
    pb: &[(f64, f64)],
    rule: &Rule,
    prep_a: PA,
    prep_b: PB,
    skip: S,
    f: F,
) -> [f64; 2]
where
    PA: Fn(f64) -> A,
    PB: Fn(f64) -> B,
    S: Fn(usize, usize) -> bool,
    F: Fn(f64, &A, f64, &B) -> [f64; 2],
{
    let k = rule.nodes.len();
    let pts_a: Vec<(f64, f64, A)> = panel_points(pa, rule)
        .into_iter()
        .map(|(x, w)| (x, w, prep_a(x)))
        .collect();
    let pts_b: Vec<(f64, f64, B)> = panel_points(pb, rule)
        .into_iter()
        .map(|(x, w)| (x, w, prep_b(x)))
        .collect();
    let mut acc = [0.0; 2];
    for ia in 0..pa.len() {
        for ib in 0..pb.len() {
            if skip(ia, ib) {
                continue;
            }
            let mut cell = [0.0; 2];
            for (a, wa, da) in &pts_a[ia * k..(ia + 1) * k] {
                for (b, wb, db) in &pts_b[ib * k..(ib + 1) * k] {
                    let v = f(*a, da, *b, db);
                    cell[0] += wa * wb * v[0];
                    cell[1] += wa * wb * v[1];
                }
            }
            acc[0] += cell[0];
            acc[1] += cell[1];
        }
    }
    acc
}

/// Mean, variance and the quadrature error estimates of both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    pub mean_error: f64,
    pub variance_error: f64,
}

fn check_inputs(t: f64, n: usize) -> Result<()> {
    if n == 0 || n > MAX_EXACT_N {
        return Err(Error::Unsupported(format!(
            "exact moments need 1 <= n <= {MAX_EXACT_N}, got {n}"
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t = {t} must lie in (0,1)")));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("theta must be finite and > 0, got {theta}")));
    }
    Ok(())
}

fn finish(hi: [f64; 2], lo: [f64; 2]) -> ExactMoments {
    let mean = hi[0];
    let mean_error = (hi[0] - lo[0]).abs();
    let var = hi[1] - hi[0] * hi[0];
    let variance_error = (hi[1] - lo[1]).abs() + 2.0 * mean.abs() * mean_error;
    ExactMoments {
        mean,
        variance: if var < 0.0 && var > -VARIANCE_SLACK { 0.0 } else { var },
        mean_error,
        variance_error,
    }
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// First and second moment of the BK path at t, with one rule.
fn bk_raw(t: f64, n: usize, c: f64, phi: &TargetWarp, rule: &Rule) -> [f64; 2] {
    let nf = n as f64;
    let wmax = (2.0 / (nf + 1.0)).min(1.0 / 16.0);
    let ma = graded_mesh(t, wmax);
    let mb = graded_mesh(1.0 - t, wmax);
    let second = |a: f64, d: f64, r: f64| {
        let l = a + d * r;
        [l, c * (a + d * r * r) + (1.0 - c) * l * l]
    };

    // bracket [0, U*_1): abscissa v = U*_1 above t, density n (1-v)^{n-1}
    let left = integrate_1d(&mb, rule, |b| {
        let v = t + b;
        let dens = nf * ((nf - 1.0) * (-v).ln_1p()).exp();
        let m = second(0.0, phi.eval(v), t / v);
        [dens * m[0], dens * m[1]]
    });
    // bracket [U*_n, 1): abscissa u = U*_n below t, density n u^{n-1}
    let right = integrate_1d(&ma, rule, |a| {
        let u = t - a;
        let dens = nf * ((nf - 1.0) * u.ln()).exp();
        let fu = phi.eval(u);
        let m = second(fu, 1.0 - fu, a / (1.0 - u));
        [dens * m[0], dens * m[1]]
    });
    if n == 1 {
        return add(left, right);
    }
    // brackets [U*_j, U*_{j+1}), j = 1..n-1, summed: n(n-1)(1-v+u)^{n-2}
    let log_front = (nf * (nf - 1.0)).ln();
    let skip = |ia: usize, ib: usize| {
        let s = 1.0 - (ma[ia].0 + mb[ib].0);
        s <= 0.0 || log_front + (nf - 2.0) * s.ln() < NEGLIGIBLE.ln()
    };
    let prep_a = |a: f64| phi.eval(t - a);
    let prep_b = |b: f64| phi.eval(t + b);
    let middle = integrate_2d(&ma, &mb, rule, prep_a, prep_b, skip, |a, fu, b, fv| {
        let k = (log_front + (nf - 2.0) * (-(a + b)).ln_1p()).exp();
        let m = second(*fu, fv - fu, a / (a + b));
        [k * m[0], k * m[1]]
    });
    add(add(left, right), middle)
}

/// First and second moment of the CDF path at t, with one rule.
fn cdf_raw(t: f64, n: usize, theta: f64, p: f64, phi: &TargetWarp, sup_d: f64, rule: &Rule) -> [f64; 2] {
    let nf = n as f64;
    let s1 = 1.0 / (nf * (1.0 + theta));
    let s2 = theta / (nf * nf * (1.0 + theta));
    let wmax = (2.0 / ((nf + 1.0) * sup_d)).min(1.0 / 16.0);
    let ma = graded_mesh(t, wmax);
    let mb = graded_mesh(1.0 - t, wmax);

    // bracket [0, x_1): only gamma_1 = (1-p) beta_1 enters
    let left = integrate_1d(&mb, rule, |b| {
        let y = t + b;
        let fy = phi.eval(y);
        let dens = nf * ((nf - 1.0) * (-fy).ln_1p()).exp() * phi.derivative(y);
        let r = t / y;
        let g = (1.0 - p) * r;
        [dens * g / nf, dens * g * g * (s1 + s2)]
    });
    // bracket [x_n, 1): w = 1 - p beta_n (1 - r)
    let right = integrate_1d(&ma, rule, |a| {
        let x = t - a;
        let fx = phi.eval(x);
        let dens = if fx > 0.0 {
            nf * ((nf - 1.0) * fx.ln()).exp() * phi.derivative(x)
        } else {
            0.0
        };
        let q = p * (1.0 - a / (1.0 - x));
        [dens * (1.0 - q / nf), dens * (1.0 - 2.0 * q / nf + q * q * (s1 + s2))]
    });
    if n == 1 {
        return add(left, right);
    }
    let log_front = (nf * (nf - 1.0) * sup_d * sup_d).ln();
    let fa_lo: Vec<f64> = ma.iter().map(|p| phi.eval(t - p.0)).collect();
    let fb_lo: Vec<f64> = mb.iter().map(|p| phi.eval(t + p.0)).collect();
    let skip = |ia: usize, ib: usize| {
        let s = 1.0 - (fb_lo[ib] - fa_lo[ia]);
        s <= 0.0 || log_front + (nf - 2.0) * s.ln() < NEGLIGIBLE.ln()
    };
    let prep_a = |a: f64| (phi.eval(t - a), phi.derivative(t - a));
    let prep_b = |b: f64| (phi.eval(t + b), phi.derivative(t + b));
    let c_coef = (1.0 - 2.0 * p + 2.0 * p * p) * s1 + s2;
    let middle = integrate_2d(&ma, &mb, rule, prep_a, prep_b, skip, |a, &(fx, dx), b, &(fy, dy)| {
        let s = fx + (1.0 - fy);
        if s <= 0.0 {
            return [0.0, 0.0];
        }
        let q = fx / s;
        let k = (nf * (nf - 1.0)).ln() + (nf - 2.0) * s.ln();
        let k = k.exp() * dx * dy;
        // bracket index j = 1 + Binomial(n-2, q) under the summed kernel
        let ej = 1.0 + (nf - 2.0) * q;
        let ej2 = (nf - 2.0) * q * (1.0 - q) + ej * ej;
        let r = a / (a + b);
        let mean = (ej - p + r) / nf;
        let a_coef = (ej - 2.0 * p + p * p) * s1 + (ej2 - 2.0 * p * ej + p * p) * s2;
        let b_coef = p * (1.0 - p) * s1 + (ej - p) * s2;
        [k * mean, k * (a_coef + 2.0 * b_coef * r + c_coef * r * r)]
    });
    add(add(left, right), middle)
}

fn accept(m: ExactMoments, want_mean: bool) -> Result<f64> {
    let (value, err) = if want_mean {
        (m.mean, m.mean_error)
    } else {
        (m.variance, m.variance_error)
    };
    if !(err <= QUAD_TOL) {
        return Err(Error::Accuracy {
            estimate: value,
            error: err,
        });
    }
    Ok(value)
}

/// Exact mean and variance of the BK path at t, with error estimates.
pub fn bk_moments_exact(t: f64, n: usize, theta: f64, target: &TargetWarp) -> Result<ExactMoments> {
    check_inputs(t, n)?;
    check_theta(theta)?;
    let c = 1.0 / (1.0 + theta);
    let (r16, r12) = rules();
    Ok(finish(bk_raw(t, n, c, target, r16), bk_raw(t, n, c, target, r12)))
}

/// Exact mean of the BK path at t. It does not depend on theta.
pub fn bk_mean_exact(t: f64, n: usize, target: &TargetWarp) -> Result<f64> {
    accept(bk_moments_exact(t, n, 1.0, target)?, true)
}

pub fn bk_var_exact(t: f64, n: usize, theta: f64, target: &TargetWarp) -> Result<f64> {
    accept(bk_moments_exact(t, n, theta, target)?, false)
}

/// Exact mean and variance of the CDF path at t, with error estimates.
pub fn cdf_moments_exact(t: f64, n: usize, theta: f64, p: f64, target: &TargetWarp) -> Result<ExactMoments> {
    check_inputs(t, n)?;
    check_theta(theta)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("p must lie in (0,1), got {p}")));
    }
    let sup_d = target.sup_derivative().max(1.0);
    let (r16, r12) = rules();
    Ok(finish(
        cdf_raw(t, n, theta, p, target, sup_d, r16),
        cdf_raw(t, n, theta, p, target, sup_d, r12),
    ))
}

/// Exact mean of the CDF path at t. It does not depend on theta.
pub fn cdf_mean_exact(t: f64, n: usize, p: f64, target: &TargetWarp) -> Result<f64> {
    accept(cdf_moments_exact(t, n, 1.0, p, target)?, true)
}

pub fn cdf_var_exact(t: f64, n: usize, theta: f64, p: f64, target: &TargetWarp) -> Result<f64> {
    accept(cdf_moments_exact(t, n, theta, p, target)?, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Exact,
    Asymptotic,
    Empirical,
}

impl ProfileKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileKind::Exact => "exact",
            ProfileKind::Asymptotic => "asymptotic",
            ProfileKind::Empirical => "empirical",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub algorithm: String,
    /// n or m
    pub size: Option<usize>,
    pub theta: f64,
    pub p: Option<f64>,
}

/// Mean and variance curves on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub kind: ProfileKind,
    pub params: ProfileParams,
}

impl MomentProfile {
    /// Checks lengths and ranges; variances within the slack below zero are
    /// clamped to zero.
    pub fn new(
        grid: Vec<f64>,
        mean: Vec<f64>,
        mut variance: Vec<f64>,
        kind: ProfileKind,
        params: ProfileParams,
    ) -> Result<Self> {
        if grid.len() != mean.len() || grid.len() != variance.len() {
            return Err(Error::param("profile vectors differ in length"));
        }
        for v in &mut variance {
            if *v < -VARIANCE_SLACK || !v.is_finite() {
                return Err(Error::param(format!("variance {v} is negative")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if let Some(m) = mean.iter().find(|m| !(**m >= -1e-8 && **m <= 1.0 + 1e-8)) {
            return Err(Error::param(format!("mean {m} outside [0,1]")));
        }
        Ok(MomentProfile {
            grid,
            mean,
            variance,
            kind,
            params,
        })
    }

    /// Columns `t,mean,variance,kind`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "mean", "variance", "kind"])?;
        for i in 0..self.grid.len() {
            wr.write_record([
                format!("{}", self.grid[i]),
                format!("{:e}", self.mean[i]),
                format!("{:e}", self.variance[i]),
                self.kind.as_str().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Large-n limit: mean phi(t), variance phi(t)(1 - phi(t))/(1 + theta).
pub fn asymptotic_profile(grid: &[f64], theta: f64, target: &TargetWarp) -> Result<MomentProfile> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("theta must be finite and > 0, got {theta}")));
    }
    if let Some(t) = grid.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
        return Err(Error::Domain(format!("grid point {t} outside [0,1]")));
    }
    let mean: Vec<f64> = grid.iter().map(|&t| target.eval(t)).collect();
    let variance = mean.iter().map(|f| f * (1.0 - f) / (1.0 + theta)).collect();
    MomentProfile::new(
        grid.to_vec(),
        mean,
        variance,
        ProfileKind::Asymptotic,
        ProfileParams {
            algorithm: "limit".into(),
            size: None,
            theta,
            p: None,
        },
    )
}

/// Which path family an exact profile describes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExactFamily {
    Bk,
    Cdf { p: f64 },
}

pub fn exact_profile(
    family: ExactFamily,
    grid: &[f64],
    n: usize,
    theta: f64,
    target: &TargetWarp,
) -> Result<MomentProfile> {
    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    for &t in grid {
        let m = match family {
            ExactFamily::Bk => bk_moments_exact(t, n, theta, target)?,
            ExactFamily::Cdf { p } => cdf_moments_exact(t, n, theta, p, target)?,
        };
        mean.push(accept(m, true)?);
        variance.push(accept(m, false)?);
    }
    let (algorithm, p) = match family {
        ExactFamily::Bk => ("bk", None),
        ExactFamily::Cdf { p } => ("cdf", Some(p)),
    };
    MomentProfile::new(
        grid.to_vec(),
        mean,
        variance,
        ProfileKind::Exact,
        ProfileParams {
            algorithm: algorithm.into(),
            size: Some(n),
            theta,
            p,
        },
    )
}

/// (1/(1+theta)) int_0^1 phi(1 - phi). theta = 0 is allowed.
pub fn l2_risk_limit(theta: f64, target: &TargetWarp) -> Result<f64> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("theta must be finite and >= 0, got {theta}")));
    }
    let mut edges: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
    if let TargetWarp::Piecewise(p) = target {
        edges.extend_from_slice(p.xs());
        edges.sort_by(f64::total_cmp);
        edges.dedup();
    }
    let panels: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    let (r16, _) = rules();
    let v = integrate_1d(&panels, r16, |t| {
        let f = target.eval(t);
        [f * (1.0 - f), 0.0]
    });
    Ok(v[0] / (1.0 + theta))
}

/// (1/(1+theta)) sum v_i. theta = 0 is allowed.
pub fn mzw_frechet_variance(v: &[f64], theta: f64) -> Result<f64> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("theta must be finite and >= 0, got {theta}")));
    }
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::param("variances must be > 0"));
    }
    Ok(v.iter().sum::<f64>() / (1.0 + theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        let (r16, r12) = rules();
        for rule in [r16, r12] {
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14);
            let deg = 2 * rule.nodes.len() - 2;
            let v: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert!((v - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn mesh_covers_interval() {
        let m = graded_mesh(0.4, 0.05);
        assert_eq!(m[0].0, 0.0);
        assert_eq!(m.last().unwrap().1, 0.4);
        assert!(m.windows(2).all(|w| w[0].1 == w[1].0));
        assert!(m.iter().all(|(a, b)| b - a <= 0.05 + 1e-15));
    }

    #[test]
    fn identity_bk_mean_is_t() {
        let id = TargetWarp::identity();
        for &t in &[0.1, 0.5, 0.77] {
            for &n in &[1, 2, 5, 30] {
                assert!((bk_mean_exact(t, n, &id).unwrap() - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn guards() {
        let id = TargetWarp::identity();
        assert!(matches!(bk_mean_exact(0.5, 0, &id), Err(Error::Unsupported(_))));
        assert!(matches!(bk_mean_exact(0.5, 129, &id), Err(Error::Unsupported(_))));
        assert!(matches!(cdf_var_exact(0.5, 200, 1.0, 0.5, &id), Err(Error::Unsupported(_))));
        assert!(bk_mean_exact(0.0, 5, &id).is_err());
        assert!(cdf_mean_exact(0.5, 5, 1.0, &id).is_err());
    }

    #[test]
    fn cdf_single_point_closed_form() {
        // n = 1: w(t) = (1-p) t/x if t < x, else 1 - p (1-t)/(1-x), x uniform
        let (t, p) = (0.3, 0.4);
        let id = TargetWarp::identity();
        let m = cdf_moments_exact(t, 1, 2.0, p, &id).unwrap();
        let mean = (1.0 - p) * t * (-t.ln()) + t - p * (1.0 - t) * (-(1.0 - t).ln());
        assert!((m.mean - mean).abs() < 1e-10, "{} vs {mean}", m.mean);
    }

    #[test]
    fn asymptotic_cases() {
        let id = TargetWarp::identity();
        let prof = asymptotic_profile(&[0.0, 0.5, 1.0], 1.0, &id).unwrap();
        assert_eq!(prof.mean[1], 0.5);
        assert_eq!(prof.variance[1], 0.125);
        assert_eq!(prof.variance[0], 0.0);
        assert_eq!(prof.variance[2], 0.0);
        let big = asymptotic_profile(&[0.5], 1e12, &id).unwrap();
        assert!(big.variance[0] < 1e-12);
    }

    #[test]
    fn risk_and_frechet_limits() {
        let id = TargetWarp::identity();
        assert!((l2_risk_limit(0.0, &id).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!((l2_risk_limit(1.0, &id).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        assert!((mzw_frechet_variance(&[1.0, 0.25], 0.0).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn profile_csv_header() {
        let id = TargetWarp::identity();
        let prof = asymptotic_profile(&[0.5], 1.0, &id).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,mean,variance,kind\n0.5,"));
        assert!(s.trim_end().ends_with("asymptotic"));
    }

    // Independent oracle: explicit sum over the bracket index with log-gamma
    // coefficients, Dirichlet second moments from the raw formula, and the
    // corner removed by the substitution a = rho s, b = rho (1 - s).
    mod oracle {
        use crate::warp::TargetWarp;
        use statrs::function::gamma::ln_gamma;

        fn simpson<F: Fn(f64) -> f64>(lo: f64, hi: f64, m: usize, f: F) -> f64 {
            let h = (hi - lo) / m as f64;
            let mut acc = f(lo) + f(hi);
            for k in 1..m {
                acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        }

        /// E[X] and E[X^2] for X = c0 + sum c_i D_i, D ~ Dirichlet(alpha).
        fn dirichlet_linear(c0: f64, c: &[f64], alpha: &[f64]) -> (f64, f64) {
            let a0: f64 = alpha.iter().sum();
            let mean = c0 + c.iter().zip(alpha).map(|(ci, ai)| ci * ai / a0).sum::<f64>();
            let mut sq = 0.0;
            for i in 0..c.len() {
                for k in 0..c.len() {
                    let delta = if i == k { alpha[i] } else { 0.0 };
                    sq += c[i] * c[k] * (alpha[i] * alpha[k] + delta) / (a0 * (a0 + 1.0));
                }
            }
            let lin = mean - c0;
            (mean, c0 * c0 + 2.0 * c0 * lin + sq)
        }

        fn coef(n: usize, j: usize) -> f64 {
            (ln_gamma(n as f64 + 1.0) - ln_gamma(j as f64) - ln_gamma((n - j) as f64)).exp()
        }

        /// Integral over 0 < a < t, 0 < b < 1 - t of g(a, b).
        fn corner_integral<G: Fn(f64, f64) -> f64>(t: f64, m: usize, g: G) -> f64 {
            let half = |lo: f64, hi: f64| {
                simpson(lo, hi, m, |s| {
                    let rmax = if s >= t { t / s } else { (1.0 - t) / (1.0 - s) };
                    rmax * simpson(0.0, 1.0, m, |tau| {
                        let rho = rmax * tau;
                        if rho == 0.0 {
                            return 0.0;
                        }
                        rho * g(rho * s, rho * (1.0 - s))
                    })
                })
            };
            half(0.0, t) + half(t, 1.0)
        }

        pub fn bk(t: f64, n: usize, theta: f64, phi: &TargetWarp) -> (f64, f64) {
            let m = 300;
            let mut e = [0.0; 2];
            let e0 = simpson(t, 1.0, 4 * m, |v| {
                let dens = n as f64 * (1.0 - v).powi(n as i32 - 1);
                let f = phi.eval(v);
                let r = t / v;
                let alpha = [theta * f, theta * (1.0 - f)];
                if alpha[1] <= 0.0 {
                    return dens * r * r;
                }
                dens * dirichlet_linear(0.0, &[r, 0.0], &alpha).0
            });
            let e0sq = simpson(t, 1.0, 4 * m, |v| {
                let dens = n as f64 * (1.0 - v).powi(n as i32 - 1);
                let f = phi.eval(v);
                let r = t / v;
                let alpha = [theta * f, theta * (1.0 - f)];
                if alpha[1] <= 0.0 {
                    return dens * r * r;
                }
                dens * dirichlet_linear(0.0, &[r, 0.0], &alpha).1
            });
            e[0] += e0;
            e[1] += e0sq;
            let edge_n = |k: usize| {
                simpson(0.0, t, 4 * m, move |u| {
                    let dens = n as f64 * u.powi(n as i32 - 1);
                    let f = phi.eval(u);
                    let r = (t - u) / (1.0 - u);
                    let alpha = [theta * f, theta * (1.0 - f)];
                    let mm = if alpha[0] <= 0.0 {
                        (r, r * r)
                    } else {
                        dirichlet_linear(r, &[1.0 - r, 0.0], &alpha)
                    };
                    dens * if k == 0 { mm.0 } else { mm.1 }
                })
            };
            e[0] += edge_n(0);
            e[1] += edge_n(1);
            for j in 1..n {
                let cj = coef(n, j);
                for k in 0..2 {
                    e[k] += corner_integral(t, m, |a, b| {
                        let (u, v) = (t - a, t + b);
                        let dens = cj * u.powi(j as i32 - 1) * (1.0 - v).powi((n - j - 1) as i32);
                        let (fu, fv) = (phi.eval(u), phi.eval(v));
                        let r = a / (a + b);
                        let alpha = [theta * fu, theta * (fv - fu), theta * (1.0 - fv)];
                        let mm = dirichlet_linear(0.0, &[1.0, r, 0.0], &alpha);
                        dens * if k == 0 { mm.0 } else { mm.1 }
                    });
                }
            }
            (e[0], e[1] - e[0] * e[0])
        }

        /// Coefficients of w = c0 + sum c_i beta_i inside bracket j.
        fn cdf_coefs(n: usize, j: usize, p: f64, r: f64) -> (f64, Vec<f64>) {
            let mut c = vec![0.0; n];
            if j == n {
                for ci in c.iter_mut().take(n - 1) {
                    *ci = 1.0 - r;
                }
                c[n - 1] = (1.0 - r) * (1.0 - p);
                return (r, c);
            }
            for ci in c.iter_mut().take(j.saturating_sub(1)) {
                *ci = 1.0;
            }
            if j >= 1 {
                c[j - 1] = (1.0 - r) * (1.0 - p) + r;
            }
            c[j] = r * (1.0 - p);
            (0.0, c)
        }

        pub fn cdf(t: f64, n: usize, theta: f64, p: f64, phi: &TargetWarp) -> (f64, f64) {
            let m = 300;
            let alpha = vec![theta / n as f64; n];
            let moment = |j: usize, r: f64, k: usize| {
                let (c0, c) = cdf_coefs(n, j, p, r);
                let mm = dirichlet_linear(c0, &c, &alpha);
                if k == 0 {
                    mm.0
                } else {
                    mm.1
                }
            };
            let mut e = [0.0; 2];
            for k in 0..2 {
                e[k] += simpson(t, 1.0, 4 * m, |y| {
                    let dens = n as f64 * (1.0 - phi.eval(y)).powi(n as i32 - 1) * phi.derivative(y);
                    dens * moment(0, t / y, k)
                });
                e[k] += simpson(0.0, t, 4 * m, |x| {
                    let dens = n as f64 * phi.eval(x).powi(n as i32 - 1) * phi.derivative(x);
                    dens * moment(n, (t - x) / (1.0 - x), k)
                });
                for j in 1..n {
                    let cj = coef(n, j);
                    e[k] += corner_integral(t, m, |a, b| {
                        let (x, y) = (t - a, t + b);
                        let dens = cj
                            * phi.eval(x).powi(j as i32 - 1)
                            * (1.0 - phi.eval(y)).powi((n - j - 1) as i32)
                            * phi.derivative(x)
                            * phi.derivative(y);
                        dens * moment(j, a / (a + b), k)
                    });
                }
            }
            (e[0], e[1] - e[0] * e[0])
        }
    }

    const BK_CASES: [(f64, usize); 6] = [(0.3, 2), (0.5, 2), (0.3, 5), (0.7, 5), (0.5, 9), (0.85, 9)];

    #[test]
    #[ignore]
    fn print_oracle_values() {
        let phi2 = TargetWarp::builtin("phi2").unwrap();
        let phi3 = TargetWarp::builtin("phi3").unwrap();
        for (t, n) in BK_CASES {
            let (m, v) = oracle::bk(t, n, 1.5, &phi2);
            println!("BK ({t}, {n}, {m:.12e}, {v:.12e}),");
        }
        for (t, n) in BK_CASES {
            let (m, v) = oracle::cdf(t, n, 2.0, 0.3, &phi3);
            println!("CDF ({t}, {n}, {m:.12e}, {v:.12e}),");
        }
    }

    // (t, n, mean, variance) from the oracle above; BK: phi2, theta 1.5;
    // CDF: phi3, theta 2, p 0.3.
    const BK_FROZEN: [(f64, usize, f64, f64); 6] = [
        (0.3, 2, 9.774955360067e-2, 1.479820988383e-2),
        (0.5, 2, 2.535109746814e-1, 3.795233074227e-2),
        (0.3, 5, 3.776918870292e-2, 7.338909693742e-3),
        (0.7, 5, 4.565540661702e-1, 6.140285958914e-2),
        (0.5, 9, 1.329646913065e-1, 3.333572440791e-2),
        (0.85, 9, 7.604653893381e-1, 4.710745221148e-2),
    ];
    const CDF_FROZEN: [(f64, usize, f64, f64); 6] = [
        (0.3, 2, 7.630353793873e-1, 4.117967703658e-2),
        (0.5, 2, 8.691863197447e-1, 1.351604913306e-2),
        (0.3, 5, 7.941753756385e-1, 5.087624074883e-2),
        (0.7, 5, 9.586853229200e-1, 4.093293599636e-3),
        (0.5, 9, 9.249189003832e-1, 1.689365012914e-2),
        (0.85, 9, 9.855323242401e-1, 1.060936778423e-3),
    ];

    #[test]
    fn bk_matches_frozen_oracle() {
        let phi2 = TargetWarp::builtin("phi2").unwrap();
        for (t, n, mean, var) in BK_FROZEN {
            let m = bk_moments_exact(t, n, 1.5, &phi2).unwrap();
            assert!((m.mean - mean).abs() < 1e-9, "t={t} n={n}: {} vs {mean}", m.mean);
            assert!((m.variance - var).abs() < 1e-9, "t={t} n={n}: {} vs {var}", m.variance);
        }
    }

    #[test]
    fn cdf_matches_frozen_oracle() {
        let phi3 = TargetWarp::builtin("phi3").unwrap();
        for (t, n, mean, var) in CDF_FROZEN {
            let m = cdf_moments_exact(t, n, 2.0, 0.3, &phi3).unwrap();
            assert!((m.mean - mean).abs() < 1e-9, "t={t} n={n}: {} vs {mean}", m.mean);
            assert!((m.variance - var).abs() < 1e-9, "t={t} n={n}: {} vs {var}", m.variance);
        }
    }

    #[test]
    fn oracle_reproduces_frozen_values() {
        let phi2 = TargetWarp::builtin("phi2").unwrap();
        let (t, n, mean, var) = BK_FROZEN[2];
        let (m, v) = oracle::bk(t, n, 1.5, &phi2);
        assert!((m - mean).abs() < 1e-11 && (v - var).abs() < 1e-11);
        let phi3 = TargetWarp::builtin("phi3").unwrap();
        let (t, n, mean, var) = CDF_FROZEN[2];
        let (m, v) = oracle::cdf(t, n, 2.0, 0.3, &phi3);
        assert!((m - mean).abs() < 1e-11 && (v - var).abs() < 1e-11);
    }

    #[test]
    fn identity_symmetry() {
        let id = TargetWarp::identity();
        for &n in &[2, 7, 20] {
            for &t in &[0.1, 0.35] {
                let a = bk_moments_exact(t, n, 0.7, &id).unwrap();
                let b = bk_moments_exact(1.0 - t, n, 0.7, &id).unwrap();
                assert!((a.variance - b.variance).abs() < 1e-10);
                let a = cdf_moments_exact(t, n, 0.7, 0.5, &id).unwrap();
                let b = cdf_moments_exact(1.0 - t, n, 0.7, 0.5, &id).unwrap();
                assert!((a.mean - (1.0 - b.mean)).abs() < 1e-10);
                assert!((a.variance - b.variance).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn variance_decreases_in_theta() {
        let phi3 = TargetWarp::builtin("phi3").unwrap();
        let mut prev = f64::INFINITY;
        for &theta in &[0.1, 0.5, 1.0, 4.0, 20.0] {
            let v = bk_var_exact(0.4, 12, theta, &phi3).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn variance_gap_is_order_one_over_n() {
        let phi3 = TargetWarp::builtin("phi3").unwrap();
        let t = 0.5;
        let limit = phi3.eval(t) * (1.0 - phi3.eval(t)) / 2.0;
        let gap = |n: usize| n as f64 * (bk_var_exact(t, n, 1.0, &phi3).unwrap() - limit).abs();
        let ratio = gap(16) / gap(64);
        assert!((0.5..2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn localization_washes_out() {
        let id = TargetWarp::identity();
        let v: Vec<f64> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&p| cdf_var_exact(0.5, 128, 1.0, p, &id).unwrap())
            .collect();
        let (lo, hi) = (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(0.0, f64::max));
        assert!(hi / lo - 1.0 < 0.02, "{v:?}");
    }
}
