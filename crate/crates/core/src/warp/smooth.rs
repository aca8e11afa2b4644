//! Warps with a derivative bounded away from zero, the log-derivative
//! geometry on them, and the centred log-derivative map to zero-mean
//! functions.
//!
//! An element is stored as its log-derivative at the nodes of a uniform grid
//! over [0,1], linear between nodes. Integrals of the derivative are computed
//! exactly cell by cell (the integrand is the exponential of a linear
//! function), so normalisation and the round trip with the centred
//! log-derivative carry no quadrature error beyond rounding.

use std::io::Write;

use super::path::WarpPath;
use super::target::TargetWarp;
use crate::error::{Error, Result};
use crate::rng::neumaier_sum;

/// Default number of grid nodes.
pub const GRID_SIZE: usize = 2048;

/// Lower clamp on path slopes before taking logs.
pub const SLOPE_FLOOR: f64 = 1e-12;

/// (e^x - 1)/x, continuous at 0.
#[inline]
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x * (1.0 + x / 3.0)
    } else {
        x.exp_m1() / x
    }
}

/// Uniform nodes k/(g-1), k = 0..g.
pub fn grid_nodes(g: usize) -> Vec<f64> {
    let h = 1.0 / (g - 1) as f64;
    let mut v: Vec<f64> = (0..g).map(|k| k as f64 * h).collect();
    v[g - 1] = 1.0;
    v
}

/// Integral over [0,1] of the piecewise-linear interpolant (trapezoid rule).
fn trapezoid_mean(v: &[f64]) -> f64 {
    let g = v.len();
    let h = 1.0 / (g - 1) as f64;
    let inner = neumaier_sum(&v[1..g - 1]);
    h * (inner + 0.5 * (v[0] + v[g - 1]))
}

/// Exact integral of the product of two piecewise-linear interpolants.
fn linear_product_integral(a: &[f64], b: &[f64]) -> f64 {
    let g = a.len();
    let h = 1.0 / (g - 1) as f64;
    let cells: Vec<f64> = (0..g - 1)
        .map(|k| {
            let (a0, a1, b0, b1) = (a[k], a[k + 1], b[k], b[k + 1]);
            (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1) / 6.0
        })
        .collect();
    h * neumaier_sum(&cells)
}

fn check_same_grid(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::param(format!("grid sizes differ ({a} vs {b})")));
    }
    Ok(())
}

/// Zero-mean function sampled on a uniform grid over [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps grid values; they must be finite with zero mean (1e-9).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("grid function needs at least two nodes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidElement("grid function has non-finite values".into()));
        }
        let m = trapezoid_mean(&values);
        if m.abs() > 1e-9 {
            return Err(Error::InvalidElement(format!("grid function has mean {m:e}, not 0")));
        }
        Ok(GridFunction { values })
    }

    /// Subtracts the mean from arbitrary finite values.
    pub fn centered(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("grid function needs at least two nodes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidElement("grid function has non-finite values".into()));
        }
        let m = trapezoid_mean(&values);
        for v in &mut values {
            *v -= m;
        }
        Ok(GridFunction { values })
    }

    pub fn zero(g: usize) -> Self {
        GridFunction { values: vec![0.0; g] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        trapezoid_mean(&self.values)
    }

    pub fn dot(&self, other: &GridFunction) -> Result<f64> {
        check_same_grid(self.len(), other.len())?;
        Ok(linear_product_integral(&self.values, &other.values))
    }

    pub fn norm_sq(&self) -> f64 {
        linear_product_integral(&self.values, &self.values)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        check_same_grid(self.len(), other.len())?;
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// One value per line under a `value` header; node k sits at k/(G-1).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["value"])?;
        for v in &self.values {
            wr.write_record([format!("{v:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Warp with strictly positive derivative, stored as a normalised
/// log-derivative on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothWarp {
    log_deriv: Vec<f64>,
    /// exact cell integrals of the derivative; they sum to 1
    cells: Vec<f64>,
}

impl SmoothWarp {
    /// Normalises an arbitrary finite log-derivative so the derivative
    /// integrates to one.
    pub fn from_log_derivative(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("grid needs at least two nodes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidElement("log-derivative has non-finite values".into()));
        }
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = 1.0 / (values.len() - 1) as f64;
        let raw: Vec<f64> = values
            .windows(2)
            .map(|w| h * (w[0] - top).exp() * expm1_ratio(w[1] - w[0]))
            .collect();
        let total = neumaier_sum(&raw);
        let shift = top + total.ln();
        for v in &mut values {
            *v -= shift;
        }
        let cells = raw.into_iter().map(|c| c / total).collect();
        Ok(SmoothWarp {
            log_deriv: values,
            cells,
        })
    }

    pub fn identity(g: usize) -> Self {
        SmoothWarp::from_log_derivative(vec![0.0; g]).expect("zero log-derivative is valid")
    }

    pub fn from_target(target: &TargetWarp, g: usize) -> Result<Self> {
        let nodes = grid_nodes(g);
        let mut vals = Vec::with_capacity(g);
        for &t in &nodes {
            let d = target.derivative(t);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidElement(format!(
                    "target {} has derivative {d} at t = {t}",
                    target.tag()
                )));
            }
            vals.push(d.ln());
        }
        SmoothWarp::from_log_derivative(vals)
    }

    /// Log of the path slopes at the nodes, slopes clamped below at
    /// [`SLOPE_FLOOR`].
    pub fn from_path(path: &WarpPath, g: usize) -> Result<Self> {
        let vals = grid_nodes(g)
            .iter()
            .map(|&t| path.slope_at(t).max(SLOPE_FLOOR).ln())
            .collect();
        SmoothWarp::from_log_derivative(vals)
    }

    pub fn grid_size(&self) -> usize {
        self.log_deriv.len()
    }

    pub fn log_derivative(&self) -> &[f64] {
        &self.log_deriv
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.log_deriv.iter().map(|v| v.exp()).collect()
    }

    /// Values of the warp at the grid nodes.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.log_deriv.len());
        out.push(0.0);
        let mut acc = 0.0;
        for c in &self.cells[..self.cells.len() - 1] {
            acc += c;
            out.push(acc.min(1.0));
        }
        out.push(1.0);
        out
    }

    /// Dense piecewise-linear discretisation on the grid nodes.
    pub fn to_path(&self) -> WarpPath {
        let g = self.grid_size();
        WarpPath::from_rounded(grid_nodes(g), self.cumulative())
            .expect("grid warp is monotone by construction")
    }

    /// Exact value at t (integrating the exponential inside the cell).
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} is outside [0,1]")));
        }
        let g = self.grid_size();
        let h = 1.0 / (g - 1) as f64;
        let k = ((t / h).floor() as usize).min(g - 2);
        let base: f64 = neumaier_sum(&self.cells[..k]);
        let s = (t - k as f64 * h) / h;
        let (a, b) = (self.log_deriv[k], self.log_deriv[k + 1]);
        let part = h * a.exp() * s * expm1_ratio((b - a) * s);
        Ok((base + part).min(1.0))
    }

    /// Perturbation: normalised integral of the product of derivatives.
    pub fn perturb(&self, other: &SmoothWarp) -> Result<SmoothWarp> {
        check_same_grid(self.grid_size(), other.grid_size())?;
        SmoothWarp::from_log_derivative(
            self.log_deriv.iter().zip(&other.log_deriv).map(|(a, b)| a + b).collect(),
        )
    }

    /// Power: normalised integral of the derivative raised to `a`.
    pub fn power(&self, a: f64) -> Result<SmoothWarp> {
        if !a.is_finite() {
            return Err(Error::param("power exponent must be finite"));
        }
        SmoothWarp::from_log_derivative(self.log_deriv.iter().map(|v| a * v).collect())
    }

    /// `self` perturbed by the inverse element of `other`.
    pub fn minus(&self, other: &SmoothWarp) -> Result<SmoothWarp> {
        self.perturb(&other.power(-1.0)?)
    }

    /// Covariance of the log-derivatives over [0,1].
    pub fn inner(&self, other: &SmoothWarp) -> Result<f64> {
        check_same_grid(self.grid_size(), other.grid_size())?;
        let prod = linear_product_integral(&self.log_deriv, &other.log_deriv);
        Ok(prod - trapezoid_mean(&self.log_deriv) * trapezoid_mean(&other.log_deriv))
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self).expect("same grid")
    }

    /// Centred log-derivative: log w' minus its mean.
    pub fn centered_log_derivative(&self) -> GridFunction {
        GridFunction::centered(self.log_deriv.clone()).expect("finite by construction")
    }

    /// Inverse of [`SmoothWarp::centered_log_derivative`].
    pub fn from_centered(h: &GridFunction) -> Result<SmoothWarp> {
        SmoothWarp::from_log_derivative(h.values().to_vec())
    }
}

pub fn perturb(f: &SmoothWarp, g: &SmoothWarp) -> Result<SmoothWarp> {
    f.perturb(g)
}

pub fn power(a: f64, f: &SmoothWarp) -> Result<SmoothWarp> {
    f.power(a)
}

pub fn inner(f: &SmoothWarp, g: &SmoothWarp) -> Result<f64> {
    f.inner(g)
}

pub fn centered_log_derivative(f: &SmoothWarp) -> GridFunction {
    f.centered_log_derivative()
}

pub fn warp_from_log_derivative(h: &GridFunction) -> Result<SmoothWarp> {
    SmoothWarp::from_centered(h)
}
