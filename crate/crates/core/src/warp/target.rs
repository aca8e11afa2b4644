use statrs::function::beta::{beta_reg, ln_beta};

use super::path::WarpPath;
use crate::error::{Error, Result};

/// Tolerance of the bracketed inverse of closed-form targets.
const INVERSE_TOL: f64 = 1e-12;

/// An absolutely continuous warping function with evaluable value, inverse
/// and derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetWarp {
    Identity,
    /// CDF of a Beta(a, b) law.
    BetaCdf { a: f64, b: f64, ln_norm: f64 },
    /// (e^{-rate t} - 1) / (e^{-rate} - 1).
    Exponential { rate: f64 },
    /// Piecewise-linear warp: linear eval, piecewise-constant derivative.
    Piecewise(WarpPath),
}

impl TargetWarp {
    pub fn identity() -> Self {
        TargetWarp::Identity
    }

    pub fn beta_cdf(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::param(format!("Beta shapes must be positive, got ({a}, {b})")));
        }
        Ok(TargetWarp::BetaCdf {
            a,
            b,
            ln_norm: ln_beta(a, b),
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate == 0.0 {
            return Err(Error::param(format!("exponential warp needs a finite non-zero rate, got {rate}")));
        }
        Ok(TargetWarp::Exponential { rate })
    }

    /// Piecewise-linear target; knots must be strictly increasing in both
    /// coordinates so the inverse is single valued.
    pub fn piecewise(path: WarpPath) -> Result<Self> {
        if path.ys().windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("piecewise target must be strictly increasing"));
        }
        Ok(TargetWarp::Piecewise(path))
    }

    /// Built-in targets: `phi1` identity, `phi2` Beta(5,2) CDF, `phi3`
    /// exponential warp with rate 5.
    pub fn builtin(tag: &str) -> Result<Self> {
        match tag {
            "phi1" => Ok(TargetWarp::Identity),
            "phi2" => TargetWarp::beta_cdf(5.0, 2.0),
            "phi3" => TargetWarp::exponential(5.0),
            other => Err(Error::param(format!("unknown target '{other}' (phi1, phi2, phi3)"))),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            TargetWarp::Identity => "phi1".into(),
            TargetWarp::BetaCdf { a, b, .. } if *a == 5.0 && *b == 2.0 => "phi2".into(),
            TargetWarp::BetaCdf { a, b, .. } => format!("beta({a},{b})"),
            TargetWarp::Exponential { rate } if *rate == 5.0 => "phi3".into(),
            TargetWarp::Exponential { rate } => format!("exponential({rate})"),
            TargetWarp::Piecewise(p) => format!("piecewise({} knots)", p.len()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            TargetWarp::Identity => t,
            TargetWarp::BetaCdf { a, b, .. } => {
                if t == 0.0 || t == 1.0 {
                    t
                } else {
                    beta_reg(*a, *b, t)
                }
            }
            TargetWarp::Exponential { rate } => (-rate * t).exp_m1() / (-rate).exp_m1(),
            TargetWarp::Piecewise(p) => p.eval_unchecked(t),
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            TargetWarp::Identity => u,
            TargetWarp::BetaCdf { .. } => {
                if u == 0.0 || u == 1.0 {
                    u
                } else {
                    self.bracketed_inverse(u)
                }
            }
            TargetWarp::Exponential { rate } => {
                if u == 1.0 {
                    return 1.0;
                }
                (-(u * (-rate).exp_m1()).ln_1p() / rate).clamp(0.0, 1.0)
            }
            TargetWarp::Piecewise(p) => p.inverse_unchecked(u),
        }
    }

    /// Derivative, defined everywhere on [0,1] (right derivative at kinks).
    pub fn derivative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            TargetWarp::Identity => 1.0,
            TargetWarp::BetaCdf { a, b, ln_norm } => {
                if (t == 0.0 && *a > 1.0) || (t == 1.0 && *b > 1.0) {
                    return 0.0;
                }
                ((a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() - ln_norm).exp()
            }
            TargetWarp::Exponential { rate } => -rate * (-rate * t).exp() / (-rate).exp_m1(),
            TargetWarp::Piecewise(p) => p.slope_at(t),
        }
    }

    /// Largest derivative over a 4097-point grid.
    pub fn sup_derivative(&self) -> f64 {
        (0..=4096)
            .map(|i| self.derivative(i as f64 / 4096.0))
            .fold(0.0, f64::max)
    }

    /// Bisection down to a 1e-3 bracket, then Newton steps kept inside the
    /// bracket (bisection whenever Newton leaves it), to 1e-12.
    fn bracketed_inverse(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.eval(x) - u;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.derivative(x);
            let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step < INVERSE_TOL || hi - lo < INVERSE_TOL {
                break;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<TargetWarp> {
        ["phi1", "phi2", "phi3"]
            .iter()
            .map(|t| TargetWarp::builtin(t).unwrap())
            .collect()
    }

    #[test]
    fn endpoints_and_monotone() {
        for phi in builtins() {
            assert_eq!(phi.eval(0.0), 0.0);
            assert_eq!(phi.eval(1.0), 1.0);
            let mut prev = 0.0;
            for i in 1..=1000 {
                let v = phi.eval(i as f64 / 1000.0);
                assert!(v > prev, "{} not increasing at {i}", phi.tag());
                prev = v;
            }
        }
    }

    #[test]
    fn beta_matches_polynomial() {
        // Beta(5,2) CDF is 6x^5 - 5x^6
        let phi = TargetWarp::builtin("phi2").unwrap();
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let poly = 6.0 * x.powi(5) - 5.0 * x.powi(6);
            assert!((phi.eval(x) - poly).abs() < 1e-13);
            let dpoly = 30.0 * x.powi(4) * (1.0 - x);
            assert!((phi.derivative(x) - dpoly).abs() < 1e-11);
        }
    }

    #[test]
    fn exponential_closed_form() {
        let phi = TargetWarp::builtin("phi3").unwrap();
        let den = (-5.0f64).exp() - 1.0;
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((phi.eval(t) - ((-5.0 * t).exp() - 1.0) / den).abs() < 1e-14);
            assert!((phi.derivative(t) + 5.0 * (-5.0 * t).exp() / den).abs() < 1e-12);
        }
    }

    #[test]
    fn inverses_on_grid() {
        for phi in builtins() {
            for i in 0..=1000 {
                let t = i as f64 / 1000.0;
                assert!((phi.inverse(phi.eval(t)) - t).abs() < 1e-10, "{} at {t}", phi.tag());
                assert!((phi.eval(phi.inverse(t)) - t).abs() < 1e-10, "{} at u={t}", phi.tag());
            }
        }
    }

    #[test]
    fn piecewise_target() {
        let p = WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        let phi = TargetWarp::piecewise(p).unwrap();
        assert_eq!(phi.eval(0.25), 0.125);
        assert_eq!(phi.derivative(0.25), 0.5);
        assert_eq!(phi.derivative(0.75), 1.5);
        assert!((phi.inverse(0.625) - 0.75).abs() < 1e-15);
        let flat = WarpPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert!(TargetWarp::piecewise(flat).is_err());
    }

    #[test]
    fn unknown_builtin() {
        assert!(TargetWarp::builtin("phi4").is_err());
    }
}
