use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear monotone bijection of [0,1], given by its knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Deserialize)]
struct KnotRow {
    x: f64,
    y: f64,
}

impl WarpPath {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::param(format!(
                "knot vectors differ in length ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::param("a warp path needs at least two knots"));
        }
        let last = xs.len() - 1;
        if xs[0] != 0.0 || xs[last] != 1.0 {
            return Err(Error::param("abscissae must run from 0 to 1"));
        }
        if ys[0] != 0.0 || ys[last] != 1.0 {
            return Err(Error::param("ordinates must run from 0 to 1"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::param("knots must be finite"));
        }
        if let Some(k) = xs.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::param(format!("abscissae not strictly increasing at knot {k}")));
        }
        if let Some(k) = ys.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::param(format!("ordinates decrease at knot {k}")));
        }
        Ok(WarpPath { xs, ys })
    }

    /// Builds a path from ordinates that are monotone up to rounding.
    ///
    /// Ordinates are clamped to [0,1] and made non-decreasing with a running
    /// maximum; the endpoints are pinned. Interior knots whose abscissa does
    /// not exceed its predecessor (or reaches 1) are dropped, keeping the
    /// larger ordinate.
    pub(crate) fn from_rounded(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() || n < 2 {
            return Err(Error::param("knot vectors must match and hold at least two knots"));
        }
        let mut kx = Vec::with_capacity(n);
        let mut ky: Vec<f64> = Vec::with_capacity(n);
        kx.push(0.0);
        ky.push(0.0);
        for k in 1..n - 1 {
            let x = xs[k];
            let y = ys[k].clamp(0.0, 1.0).max(*ky.last().unwrap());
            if x >= 1.0 {
                continue;
            }
            if x <= *kx.last().unwrap() {
                if kx.len() > 1 {
                    *ky.last_mut().unwrap() = y;
                }
                continue;
            }
            kx.push(x);
            ky.push(y);
        }
        kx.push(1.0);
        ky.push(1.0);
        WarpPath::new(kx, ky)
    }

    pub fn identity() -> Self {
        WarpPath {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} is outside [0,1]")));
        }
        Ok(self.eval_unchecked(t))
    }

    /// Index k of the segment [xs[k], xs[k+1]) holding t; the last segment
    /// also holds t = 1.
    pub(crate) fn segment(&self, t: f64) -> usize {
        let k = self.xs.partition_point(|&x| x <= t);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        let k = self.segment(t);
        self.interp(k, t)
    }

    #[inline]
    fn interp(&self, k: usize, t: f64) -> f64 {
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        if t == x0 {
            return y0;
        }
        if t == x1 {
            return y1;
        }
        y0 + (y1 - y0) * ((t - x0) / (x1 - x0))
    }

    /// Evaluates at ascending points of [0,1] in one merge pass.
    pub fn eval_sorted(&self, ts: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(ts.len());
        let last = self.xs.len() - 2;
        let mut k = 0;
        for &t in ts {
            while k < last && self.xs[k + 1] <= t {
                k += 1;
            }
            out.push(self.interp(k, t));
        }
        out
    }

    /// Slope of the segment holding t (right-continuous).
    pub fn slope_at(&self, t: f64) -> f64 {
        let k = self.segment(t);
        (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k])
    }

    /// Smallest t with path(t) >= u, by bisection over segments followed by
    /// linear inversion inside the segment.
    pub(crate) fn inverse_unchecked(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let k = self.ys.partition_point(|&y| y < u);
        // ys[k-1] < u <= ys[k]
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        if u == y1 {
            return x1;
        }
        (x0 + (x1 - x0) * ((u - y0) / (y1 - y0))).clamp(x0, x1)
    }

    /// Squared L2 distance to a function, integrating exactly over the knot
    /// structure: 3-point Gauss-Legendre on each piece between the union of
    /// the path knots and a uniform mesh of `mesh` cells.
    pub fn squared_l2_distance<F: Fn(f64) -> f64>(&self, f: F, mesh: usize) -> f64 {
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mesh = mesh.max(1);
        let mut total = 0.0;
        let mut k = 0;
        let mut a = 0.0;
        let mut next_mesh = 1usize;
        while a < 1.0 {
            let m = next_mesh as f64 / mesh as f64;
            let b = if self.xs[k + 1] < m { self.xs[k + 1] } else { m };
            if b > a {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                let mut s = 0.0;
                for (z, w) in NODES.iter().zip(WEIGHTS) {
                    let t = mid + half * z;
                    let d = self.interp(k, t) - f(t);
                    s += w * d * d;
                }
                total += half * s;
            }
            if b == self.xs[k + 1] && k + 2 < self.xs.len() {
                k += 1;
            }
            if b == m {
                next_mesh += 1;
            }
            a = b;
        }
        total
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y"])?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            wr.write_record([format!("{x:e}"), format!("{y:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in rd.deserialize() {
            let row: KnotRow = row?;
            xs.push(row.x);
            ys.push(row.y);
        }
        WarpPath::new(xs, ys)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        WarpPath::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Linear interpolation of `path` at `t`.
pub fn eval_warp(path: &WarpPath, t: f64) -> Result<f64> {
    path.eval(t)
}

/// Cumulative ordinates 0, w1, w1+w2, ..., 1 of a weight vector, clamped so
/// rounding cannot break monotonicity or overshoot 1.
pub(crate) fn cumulative_ordinates(weights: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for &w in &weights[..weights.len() - 1] {
        acc += w;
        out.push(acc.min(1.0));
    }
    out.push(1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_endpoints() {
        let id = WarpPath::identity();
        assert_eq!(eval_warp(&id, 0.3).unwrap(), 0.3);
        let p = WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.2, 1.0]).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert_eq!(p.eval(1.0).unwrap(), 1.0);
        assert!((p.eval(0.75).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(p.eval(0.5).unwrap(), 0.2);
        assert!(p.eval(1.5).is_err());
        assert!(p.eval(-0.1).is_err());
    }

    #[test]
    fn constructor_rejects_bad_knots() {
        assert!(WarpPath::new(vec![0.0, 1.0], vec![0.0, 0.9]).is_err());
        assert!(WarpPath::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 0.1, 0.2, 1.0]).is_err());
        assert!(WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.6, 0.5]).is_err());
        assert!(WarpPath::new(vec![0.0], vec![0.0]).is_err());
        assert!(WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn sorted_eval_matches_pointwise() {
        let p = WarpPath::new(vec![0.0, 0.2, 0.7, 1.0], vec![0.0, 0.5, 0.6, 1.0]).unwrap();
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let a = p.eval_sorted(&ts);
        for (t, v) in ts.iter().zip(a) {
            assert_eq!(v, p.eval(*t).unwrap());
        }
    }

    #[test]
    fn inverse_of_path() {
        let p = WarpPath::new(vec![0.0, 0.2, 0.7, 1.0], vec![0.0, 0.5, 0.6, 1.0]).unwrap();
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            assert!((p.inverse_unchecked(p.eval(t).unwrap()) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_distance_exact_for_identity_vs_square() {
        // int_0^1 (t - t^2)^2 = 1/30
        let d = WarpPath::identity().squared_l2_distance(|t| t * t, 7);
        assert!((d - 1.0 / 30.0).abs() < 1e-14);
        let p = WarpPath::new(vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 1.0]).unwrap();
        // brute force midpoint rule
        let m = 200_000;
        let brute: f64 = (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) / m as f64;
                (p.eval(t).unwrap() - t).powi(2)
            })
            .sum::<f64>()
            / m as f64;
        assert!((p.squared_l2_distance(|t| t, 16) - brute).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let p = WarpPath::new(vec![0.0, 0.123456789, 1.0], vec![0.0, 0.987654321, 1.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y\n"));
        assert_eq!(WarpPath::read_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn rounded_constructor_repairs() {
        let p = WarpPath::from_rounded(
            vec![0.0, 0.3, 0.3, 0.6, 1.0, 1.0],
            vec![0.0, 0.2, 0.25, 0.24, 1.0 + 1e-16, 1.0],
        )
        .unwrap();
        assert_eq!(p.xs(), &[0.0, 0.3, 0.6, 1.0]);
        assert_eq!(p.ys(), &[0.0, 0.25, 0.25, 1.0]);
    }
}
