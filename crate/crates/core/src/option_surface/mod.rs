//! Call-price curves and what can be read off them: digital prices, the
//! state price density and its diagnostics.

mod curve;
pub mod model;
mod spd;

use std::io::Read;

use serde::{Deserialize, Serialize};

pub use curve::{fit_call_curve, fit_call_curve_with, CallCurve, FitOptions};
pub use spd::{
    detect_default_mass, implied_short_rate, reconstruct_call_price, recover_bond, recover_spot,
    risk_neutral_measure, state_price_density, state_price_density_with, DefaultMass, RiskNeutralMeasure,
    SpotRecovery, StatePriceDensity,
};

use crate::error::{Error, Result};

/// Tolerances for the option-surface checks.
pub mod tolerances {
    /// Bond identity tolerance for fitted curves.
    pub const SPD_FITTED: f64 = 1e-3;
    /// Bond identity tolerance for analytic densities.
    pub const SPD_ANALYTIC: f64 = 1e-8;
    /// Relative spot recovery tolerance.
    pub const SPOT: f64 = 1e-3;
    /// Largest relative quote move the convex projection may make.
    pub const MAX_PROJECTION: f64 = 0.05;
    /// Slack in discrete arbitrage checks.
    pub const ARBITRAGE: f64 = 1e-10;
}

/// Valuation date, maturity and the riskless bond and spot prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketContext {
    pub t: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub bond_price: f64,
    pub spot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_rate: Option<f64>,
}

impl MarketContext {
    pub fn new(t: f64, maturity: f64, bond_price: f64, spot: f64) -> Result<Self> {
        let ctx = Self {
            t,
            maturity,
            bond_price,
            spot,
            short_rate: None,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Context with `B = exp(-r (T - t))`.
    pub fn from_rate(t: f64, maturity: f64, rate: f64, spot: f64) -> Result<Self> {
        let ctx = Self {
            t,
            maturity,
            bond_price: (-rate * (maturity - t)).exp(),
            spot,
            short_rate: Some(rate),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InconsistentContext(m));
        if !(self.t.is_finite() && self.maturity.is_finite() && self.maturity > self.t) {
            return bad(format!("need T > t, got t = {}, T = {}", self.t, self.maturity));
        }
        if !(self.bond_price > 0.0 && self.bond_price <= 1.0) {
            return bad(format!("bond price {} outside (0, 1]", self.bond_price));
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return bad(format!("spot {} must be positive", self.spot));
        }
        if let Some(r) = self.short_rate {
            let implied = (-r * self.tau()).exp();
            if !((self.bond_price - implied).abs() < 1e-10) {
                return bad(format!(
                    "bond price {} disagrees with exp(-r tau) = {implied} for r = {r}",
                    self.bond_price
                ));
            }
        }
        Ok(())
    }

    /// The short rate if given, else the one implied by the bond price.
    pub fn rate(&self) -> f64 {
        self.short_rate.unwrap_or_else(|| -self.bond_price.ln() / self.tau())
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        let ctx: Self = serde_json::from_reader(reader)?;
        ctx.validate()?;
        Ok(ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub strike: f64,
    pub price: f64,
}

/// Reads `strike,price` rows (header required, any order).
pub fn read_quotes_csv<R: Read>(reader: R) -> Result<Vec<Quote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut quotes = Vec::new();
    for row in rdr.deserialize() {
        let q: Quote = row?;
        quotes.push(q);
    }
    Ok(quotes)
}

pub fn write_quotes_csv<W: std::io::Write>(writer: W, quotes: &[Quote]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["strike", "price"])?;
    for q in quotes {
        w.write_record([crate::io::fmt17(q.strike), crate::io::fmt17(q.price)])?;
    }
    w.flush()?;
    Ok(())
}

/// Sorts by strike and checks the preconditions of a fit.
pub(crate) fn sanitize_quotes(quotes: &[Quote]) -> Result<Vec<Quote>> {
    if quotes.len() < 4 {
        return Err(Error::InsufficientQuotes { got: quotes.len() });
    }
    let mut qs = quotes.to_vec();
    if let Some(q) = qs.iter().find(|q| !(q.strike > 0.0 && q.strike.is_finite())) {
        return Err(Error::InvalidParameter(format!("strike {} must be positive", q.strike)));
    }
    if let Some(q) = qs.iter().find(|q| !(q.price > 0.0 && q.price.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "price {} at strike {} must be positive",
            q.price, q.strike
        )));
    }
    qs.sort_by(|a, b| a.strike.total_cmp(&b.strike));
    if let Some(w) = qs.windows(2).find(|w| w[0].strike == w[1].strike) {
        return Err(Error::InvalidParameter(format!("duplicate strike {}", w[0].strike)));
    }
    Ok(qs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Negative butterfly: the curve is locally concave.
    Butterfly,
    /// A difference quotient below `-B` or above zero.
    Slope,
    /// Price outside `[(S - K B)^+, S]`.
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub strike: f64,
    /// How far the condition is missed, in price or slope units.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageReport {
    pub points_checked: usize,
    pub violations: Vec<Violation>,
}

impl ArbitrageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Static no-arbitrage checks on raw quotes: convexity across consecutive
/// triples, slope bounds, and price bounds against spot and bond.
pub fn check_arbitrage(quotes: &[Quote], ctx: &MarketContext) -> ArbitrageReport {
    let mut qs = quotes.to_vec();
    qs.sort_by(|a, b| a.strike.total_cmp(&b.strike));
    let tol = tolerances::ARBITRAGE;
    let b = ctx.bond_price;
    let mut violations = Vec::new();
    let slopes: Vec<f64> = qs
        .windows(2)
        .map(|w| (w[1].price - w[0].price) / (w[1].strike - w[0].strike))
        .collect();
    for (i, s) in slopes.iter().enumerate() {
        if *s < -b - tol || *s > tol {
            violations.push(Violation {
                kind: ViolationKind::Slope,
                strike: qs[i].strike,
                amount: if *s > 0.0 { *s } else { -b - s },
            });
        }
    }
    for i in 1..slopes.len() {
        let gap = slopes[i] - slopes[i - 1];
        if gap < -tol {
            // Price of the butterfly with unit span, in price units.
            let span = qs[i + 1].strike - qs[i - 1].strike;
            let w_left = (qs[i + 1].strike - qs[i].strike) / span;
            let w_right = (qs[i].strike - qs[i - 1].strike) / span;
            let fly = w_left * qs[i - 1].price + w_right * qs[i + 1].price - qs[i].price;
            violations.push(Violation {
                kind: ViolationKind::Butterfly,
                strike: qs[i].strike,
                amount: -fly,
            });
        }
    }
    for q in &qs {
        let lower = (ctx.spot - q.strike * b).max(0.0);
        let slack = tol * (1.0 + ctx.spot);
        if q.price > ctx.spot + slack {
            violations.push(Violation {
                kind: ViolationKind::Bound,
                strike: q.strike,
                amount: q.price - ctx.spot,
            });
        } else if q.price < lower - slack {
            violations.push(Violation {
                kind: ViolationKind::Bound,
                strike: q.strike,
                amount: lower - q.price,
            });
        }
    }
    ArbitrageReport {
        points_checked: qs.len(),
        violations,
    }
}
