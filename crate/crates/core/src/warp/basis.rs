use std::f64::consts::{PI, SQRT_2};

use super::smooth::grid_nodes;
use crate::error::{Error, Result};

/// Fourier basis of L2[0,1] without the constant, cosine first:
/// index 2k-1 is sqrt2 cos(2 pi k t), index 2k is sqrt2 sin(2 pi k t).
pub fn fourier_basis(i: usize, t: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::param("basis index starts at 1"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} is outside [0,1]")));
    }
    Ok(basis_value(i, t))
}

#[inline]
fn basis_value(i: usize, t: f64) -> f64 {
    let k = i.div_ceil(2) as f64;
    let arg = 2.0 * PI * k * t;
    if i % 2 == 1 {
        SQRT_2 * arg.cos()
    } else {
        SQRT_2 * arg.sin()
    }
}

/// Covariance kernel sum_i v_i phi_i(s) phi_i(t) of the truncated expansion.
pub fn covariance_kernel(s: f64, t: f64, v: &[f64]) -> Result<f64> {
    if let Some(i) = v.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::param(format!("variance {} at index {} must be >= 0", v[i], i + 1)));
    }
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain("kernel arguments must lie in [0,1]".into()));
    }
    Ok(v
        .iter()
        .enumerate()
        .map(|(i, vi)| vi * basis_value(i + 1, s) * basis_value(i + 1, t))
        .sum())
}

/// Basis functions 1..=m tabulated on the uniform grid of `g` nodes.
#[derive(Clone, Debug)]
pub struct FourierTable {
    m: usize,
    g: usize,
    values: Vec<f64>,
}

impl FourierTable {
    pub fn new(m: usize, g: usize) -> Self {
        let nodes = grid_nodes(g);
        let mut values = Vec::with_capacity(m * g);
        for i in 1..=m {
            values.extend(nodes.iter().map(|&t| basis_value(i, t)));
        }
        FourierTable { m, g, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid_size(&self) -> usize {
        self.g
    }

    /// Row of basis function `i` (1-based).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[(i - 1) * self.g..i * self.g]
    }

    /// sum_i c_i phi_i on the grid.
    pub fn combine(&self, coefs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.g];
        for (i, c) in coefs.iter().enumerate().take(self.m) {
            if *c == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.row(i + 1)) {
                *o += c * b;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// composite Simpson on 20000 cells
    fn simpson<F: Fn(f64) -> f64>(f: F) -> f64 {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn orthonormal_and_centered() {
        for i in 1..=6 {
            let mean = simpson(|t| fourier_basis(i, t).unwrap());
            assert!(mean.abs() < 1e-10);
            for j in 1..=6 {
                let ip = simpson(|t| fourier_basis(i, t).unwrap() * fourier_basis(j, t).unwrap());
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-8, "({i},{j}) -> {ip}");
            }
        }
    }

    #[test]
    fn bounded_and_indexed() {
        assert!(fourier_basis(0, 0.5).is_err());
        assert!((fourier_basis(1, 0.0).unwrap() - SQRT_2).abs() < 1e-15);
        assert!(fourier_basis(2, 0.0).unwrap().abs() < 1e-15);
        for i in 1..=20 {
            for k in 0..=100 {
                assert!(fourier_basis(i, k as f64 / 100.0).unwrap().abs() <= SQRT_2 + 1e-15);
            }
        }
    }

    #[test]
    fn kernel_properties() {
        let v: Vec<f64> = (1..=10).map(|i| 1.0 / (i * i) as f64).collect();
        for (s, t) in [(0.1, 0.7), (0.33, 0.9), (0.5, 0.5)] {
            let a = covariance_kernel(s, t, &v).unwrap();
            let b = covariance_kernel(t, s, &v).unwrap();
            assert!((a - b).abs() < 1e-15);
            assert_eq!(covariance_kernel(s, t, &[0.0; 4]).unwrap(), 0.0);
        }
        assert!(covariance_kernel(0.1, 0.2, &[1.0, -0.5]).is_err());
    }

    #[test]
    fn table_matches_pointwise() {
        let tab = FourierTable::new(5, 33);
        let nodes = grid_nodes(33);
        for i in 1..=5 {
            for (k, t) in nodes.iter().enumerate() {
                assert_eq!(tab.row(i)[k], fourier_basis(i, *t).unwrap());
            }
        }
        let c = tab.combine(&[1.0, 0.0, 2.0]);
        assert!((c[3] - tab.row(1)[3] - 2.0 * tab.row(3)[3]).abs() < 1e-15);
    }
}
