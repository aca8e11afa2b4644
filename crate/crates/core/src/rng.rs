//! Seeded random primitives. Every random draw in the crate goes through
//! [`RngStream`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Redraws allowed when every gamma variate of a Dirichlet draw is lost.
const DIRICHLET_RETRIES: usize = 16;

/// Splittable random stream.
///
/// A stream is a ChaCha8 keystream keyed by `seed` and positioned on the
/// 64-bit ChaCha stream `stream_id`, so `(seed, stream_id)` fixes the draw
/// sequence bit for bit on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Identity of a stream, as recorded in manifests and study results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn id(&self) -> StreamId {
        StreamId {
            seed: self.seed,
            stream_id: self.stream_id,
        }
    }

    /// Child stream `k`. The child key is derived from the parent's
    /// `(seed, stream_id)`, so children of distinct parents differ and
    /// children of one parent differ by stream. The parent is not advanced.
    pub fn split(&self, k: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id ^ 0x5851_F42D_4C95_7F2D));
        RngStream::new(key, k)
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Non-negative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector {
    weights: Vec<f64>,
}

impl SimplexVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("simplex vector must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("simplex weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("simplex weights sum to {total}")));
        }
        Ok(SimplexVector { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Sorted uniform sample with 0 and 1 appended.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderStatGrid {
    knots: Vec<f64>,
}

impl OrderStatGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::param("grid needs at least the two endpoints"));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(Error::param("grid must start at 0 and end at 1"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("grid must be strictly increasing"));
        }
        Ok(OrderStatGrid { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of interior points.
    pub fn n(&self) -> usize {
        self.knots.len() - 2
    }

    pub fn into_knots(self) -> Vec<f64> {
        self.knots
    }
}

pub fn sample_uniform_order_stats(n: usize, rng: &mut RngStream) -> Result<OrderStatGrid> {
    if n == 0 {
        return Err(Error::param("order statistics need n >= 1"));
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.uniform_open()).collect();
    loop {
        u.sort_unstable_by(f64::total_cmp);
        match u.windows(2).position(|w| w[0] == w[1]) {
            Some(i) => u[i + 1] = rng.uniform_open(),
            None => break,
        }
    }
    let mut knots = Vec::with_capacity(n + 2);
    knots.push(0.0);
    knots.extend_from_slice(&u);
    knots.push(1.0);
    Ok(OrderStatGrid { knots })
}

/// Natural log of a Gamma(shape, 1) variate.
///
/// Marsaglia-Tsang for shape >= 1; below 1 the variate is boosted as
/// G(a) = G(a+1) U^{1/a}, kept in log space so tiny shapes cannot underflow.
pub(crate) fn log_gamma_variate(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let boost = rng.uniform_open().ln() / shape;
        return log_gamma_variate(shape + 1.0, rng) + boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

pub fn sample_gamma(shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::param(format!("gamma shape must be positive, got {shape}")));
    }
    Ok(log_gamma_variate(shape, rng).exp())
}

pub fn sample_dirichlet(params: &[f64], rng: &mut RngStream) -> Result<SimplexVector> {
    if params.is_empty() {
        return Err(Error::param("Dirichlet needs at least one parameter"));
    }
    if let Some(i) = params.iter().position(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::param(format!(
            "Dirichlet parameter {i} is {} (must be finite and >= 0)",
            params[i]
        )));
    }
    if params.iter().all(|&a| a == 0.0) {
        return Err(Error::param("all Dirichlet parameters are zero"));
    }

    let mut logs = vec![f64::NEG_INFINITY; params.len()];
    for _ in 0..DIRICHLET_RETRIES {
        for (l, &a) in logs.iter_mut().zip(params) {
            *l = if a > 0.0 {
                log_gamma_variate(a, rng)
            } else {
                f64::NEG_INFINITY
            };
        }
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() {
            let mut w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total = neumaier_sum(&w);
            for x in &mut w {
                *x /= total;
            }
            return Ok(SimplexVector { weights: w });
        }
    }

    // every draw was lost: put the mass on the largest parameter
    let mut w = vec![0.0; params.len()];
    let imax = params
        .iter()
        .enumerate()
        .fold(0, |best, (i, &a)| if a > params[best] { i } else { best });
    w[imax] = 1.0;
    Ok(SimplexVector { weights: w })
}

pub fn sample_standard_normal(rng: &mut RngStream) -> f64 {
    rng.standard_normal()
}

/// Compensated sum.
pub(crate) fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn same_stream_same_draws() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(7, 4);
        let mut a = RngStream::new(7, 3);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn first_draws_are_frozen() {
        // guards against silent changes of the generator or seeding scheme
        let mut r = RngStream::new(42, 0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = RngStream::new(42, 0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        let mut s = RngStream::new(42, 0).split(5);
        let child = s.next_u64();
        assert!(!first.contains(&child));
    }

    #[test]
    fn split_streams_differ() {
        let root = RngStream::new(1, 0);
        let mut seen = std::collections::HashSet::new();
        for k in 0..64 {
            let mut s = root.split(k);
            assert!(seen.insert(s.next_u64()));
        }
        let mut other = RngStream::new(1, 1).split(0);
        assert!(seen.insert(other.next_u64()));
    }

    #[test]
    fn order_stats_shape() {
        let mut r = RngStream::new(1, 0);
        let g = sample_uniform_order_stats(1, &mut r).unwrap();
        assert_eq!(g.knots().len(), 3);
        assert!(g.knots()[1] > 0.0 && g.knots()[1] < 1.0);
        let g = sample_uniform_order_stats(3, &mut r).unwrap();
        assert_eq!(g.knots().len(), 5);
        assert!(g.knots().windows(2).all(|w| w[0] < w[1]));
        assert!(sample_uniform_order_stats(0, &mut r).is_err());
    }

    #[test]
    fn first_order_stat_mean() {
        // U*_1 of n = 5 uniforms is Beta(1, 5): mean 1/6
        let mut r = RngStream::new(11, 0);
        let m = 100_000;
        let xs: Vec<f64> = (0..m)
            .map(|_| sample_uniform_order_stats(5, &mut r).unwrap().knots()[1])
            .collect();
        let (mean, var) = mean_var(&xs);
        assert!((mean - 1.0 / 6.0).abs() < 3.0 * (var / m as f64).sqrt());
    }

    #[test]
    fn gamma_moments() {
        let mut r = RngStream::new(3, 0);
        let m = 100_000;
        let xs: Vec<f64> = (0..m).map(|_| sample_gamma(1.0, &mut r).unwrap()).collect();
        let (mean, _) = mean_var(&xs);
        assert!((mean - 1.0).abs() < 3.0 / (m as f64).sqrt());

        let xs: Vec<f64> = (0..m).map(|_| sample_gamma(5.0, &mut r).unwrap()).collect();
        let (mean, var) = mean_var(&xs);
        assert!((mean - 5.0).abs() < 4.0 * (5.0 / m as f64).sqrt());
        // Var of the sample variance for Gamma(k): (mu4 - sigma^4)/M, mu4 = 3k^2 + 6k
        let se = ((3.0 * 25.0 + 30.0 - 25.0) / m as f64).sqrt();
        assert!((var - 5.0).abs() < 4.0 * se);

        let x = sample_gamma(1e-8, &mut r).unwrap();
        assert!(x.is_finite() && x >= 0.0);
        assert!(sample_gamma(0.0, &mut r).is_err());
        assert!(sample_gamma(-1.0, &mut r).is_err());
    }

    #[test]
    fn small_shape_gamma_mean() {
        let mut r = RngStream::new(5, 0);
        let m = 200_000;
        let xs: Vec<f64> = (0..m).map(|_| sample_gamma(0.3, &mut r).unwrap()).collect();
        let (mean, var) = mean_var(&xs);
        assert!((mean - 0.3).abs() < 4.0 * (var / m as f64).sqrt());
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut r = RngStream::new(9, 0);
        assert_eq!(sample_dirichlet(&[2.5], &mut r).unwrap().weights(), &[1.0]);
        let w = sample_dirichlet(&[1.0, 0.0, 2.0], &mut r).unwrap();
        assert_eq!(w.weights()[1], 0.0);
        assert!(sample_dirichlet(&[0.0, 0.0], &mut r).is_err());
        assert!(sample_dirichlet(&[1.0, -0.1], &mut r).is_err());
        assert!(sample_dirichlet(&[], &mut r).is_err());
        let w = sample_dirichlet(&[1e-300, 1e-300, 1e-300], &mut r).unwrap();
        assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_moments() {
        // symmetric Dirichlet(theta/n): mean 1/n, var (1/n - 1/n^2)/(1+theta)
        let (n, theta) = (4usize, 1.0);
        let mut r = RngStream::new(13, 0);
        let m = 100_000;
        let draws: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                sample_dirichlet(&vec![theta / n as f64; n], &mut r)
                    .unwrap()
                    .into_weights()
            })
            .collect();
        let first: Vec<f64> = draws.iter().map(|w| w[0]).collect();
        let (mean, var) = mean_var(&first);
        assert!((mean - 0.25).abs() < 4.0 * (var / m as f64).sqrt());
        let expected = (1.0 / 4.0 - 1.0 / 16.0) / (1.0 + theta);
        let fourth = first.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m as f64;
        let se = ((fourth - var * var) / m as f64).sqrt();
        assert!((var - expected).abs() < 4.0 * se, "{var} vs {expected}");
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::new(17, 0);
        let m = 100_000;
        let xs: Vec<f64> = (0..m).map(|_| sample_standard_normal(&mut r)).collect();
        let (mean, var) = mean_var(&xs);
        assert!(mean.abs() < 3.0 / (m as f64).sqrt());
        // Var of sample variance for N(0,1) is 2/M
        assert!((var - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt());
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        let (am, av) = mean_var(&abs);
        assert!((am - (2.0 / std::f64::consts::PI).sqrt()).abs() < 4.0 * (av / m as f64).sqrt());
    }
}
