//! Closed-form lognormal benchmark: call and digital prices, the
//! risk-neutral and physical terminal laws, and synthetic quotes.

use super::{MarketContext, Quote};
use crate::distributions::{std_normal_cdf, Distribution};
use crate::error::{Error, Result};

/// Geometric Brownian motion over one period of length `tau`, with
/// risk-neutral drift `rate` and physical drift `drift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalModel {
    pub spot: f64,
    pub rate: f64,
    pub sigma: f64,
    pub tau: f64,
    pub drift: f64,
}

impl LognormalModel {
    /// A model whose physical drift equals the risk-free rate.
    pub fn new(spot: f64, rate: f64, sigma: f64, tau: f64) -> Result<Self> {
        Self::with_drift(spot, rate, sigma, tau, rate)
    }

    pub fn with_drift(spot: f64, rate: f64, sigma: f64, tau: f64, drift: f64) -> Result<Self> {
        if !(spot > 0.0 && sigma > 0.0 && tau > 0.0 && rate.is_finite() && drift.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lognormal model spot {spot}, sigma {sigma}, tau {tau}"
            )));
        }
        Ok(Self {
            spot,
            rate,
            sigma,
            tau,
            drift,
        })
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau).exp()
    }

    pub fn forward(&self) -> f64 {
        self.spot * (self.rate * self.tau).exp()
    }

    pub fn context(&self) -> MarketContext {
        MarketContext {
            t: 0.0,
            maturity: self.tau,
            bond_price: self.discount(),
            spot: self.spot,
            short_rate: Some(self.rate),
        }
    }

    fn total_vol(&self) -> f64 {
        self.sigma * self.tau.sqrt()
    }

    fn d2(&self, strike: f64) -> f64 {
        let v = self.total_vol();
        ((self.forward() / strike).ln() - 0.5 * v * v) / v
    }

    /// Black–Scholes call price.
    pub fn call(&self, strike: f64) -> f64 {
        if strike <= 0.0 {
            return self.spot - strike * self.discount();
        }
        let d2 = self.d2(strike);
        let d1 = d2 + self.total_vol();
        self.spot * std_normal_cdf(d1) - strike * self.discount() * std_normal_cdf(d2)
    }

    /// Cash-or-nothing call, `e^{-r tau} N(d2)`.
    pub fn digital(&self, strike: f64) -> f64 {
        if strike <= 0.0 {
            return self.discount();
        }
        self.discount() * std_normal_cdf(self.d2(strike))
    }

    /// State price density `e^{-r tau}` times the risk-neutral density.
    pub fn state_price(&self, strike: f64) -> f64 {
        self.discount() * self.risk_neutral().untruncated().pdf(strike)
    }

    fn terminal(&self, mu: f64) -> Distribution {
        let v = self.total_vol();
        Distribution::lognormal(self.spot.ln() + (mu - 0.5 * self.sigma * self.sigma) * self.tau, v)
            .expect("validated parameters")
    }

    pub fn risk_neutral(&self) -> Distribution {
        self.terminal(self.rate)
    }

    pub fn physical(&self) -> Distribution {
        self.terminal(self.drift)
    }

    /// Strikes `F exp(v z)` for `count` evenly spaced standard scores `z` in
    /// `[z_lo, z_hi]`, where `F` is the forward and `v` the total volatility.
    pub fn strikes(&self, count: usize, z_lo: f64, z_hi: f64) -> Vec<f64> {
        let v = self.total_vol();
        (0..count)
            .map(|i| {
                let z = z_lo + (z_hi - z_lo) * i as f64 / (count - 1).max(1) as f64;
                self.forward() * (v * z).exp()
            })
            .collect()
    }

    pub fn quotes(&self, strikes: &[f64]) -> Vec<Quote> {
        strikes
            .iter()
            .map(|&k| Quote {
                strike: k,
                price: self.call(k),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn put_call_parity_at_zero_and_digital_slope() {
        let m = LognormalModel::new(100.0, 0.02, 0.2, 1.0).unwrap();
        let h = 1e-2;
        let fd = -(m.call(100.0 + h) - m.call(100.0 - h)) / (2.0 * h);
        assert_relative_eq!(fd, m.digital(100.0), epsilon = 1e-8);
        let q = (m.call(100.0 + h) - 2.0 * m.call(100.0) + m.call(100.0 - h)) / (h * h);
        assert_relative_eq!(q, m.state_price(100.0), max_relative = 1e-5);
    }
}
