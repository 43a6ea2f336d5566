//! Convex call-price interpolation.
//!
//! Quotes are first projected onto the convex, decreasing cone if needed.
//! The interpolant is a piecewise cubic whose second derivative `q` is
//! continuous and piecewise linear on a refinement of the strike grid, with
//! `q >= 0` at every knot. Among all such curves through the quotes we take
//! the one minimizing a discrete `∫ q‴(K)² dK`.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sanitize_quotes, tolerances, ArbitrageReport, MarketContext, Quote, Violation, ViolationKind};
use crate::error::{Error, Result};
use crate::linalg::{nnls, quadratic_program};

/// Width of the exponential right tail in decay lengths; the curve is
/// treated as zero beyond it.
const TAIL_LENGTHS: f64 = 40.0;

/// The slope at the last strike is held at or below this fraction of the
/// last secant slope, so the exponential tail decays.
const TAIL_SECANT: f64 = 1e-2;

const PENALTY_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Largest relative quote move allowed by the convex projection.
    pub max_projection: f64,
    /// Knots per quote interval; `None` picks about 96 knots overall.
    pub subdivisions: Option<usize>,
    /// Relative amount by which the fitted zero-strike slope may undershoot
    /// `-B` before the fit is rejected.
    pub slope_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_projection: tolerances::MAX_PROJECTION,
            subdivisions: None,
            slope_tolerance: tolerances::SPD_FITTED,
        }
    }
}

/// A fitted call-price curve `K ↦ C(K)` for one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallCurve {
    context: MarketContext,
    quotes: Vec<Quote>,
    /// Quotes after the convexity projection; the curve passes through these.
    adjusted: Vec<Quote>,
    knots: Vec<f64>,
    /// `C''` at the knots.
    density: Vec<f64>,
    /// `C` at the knots.
    price: Vec<f64>,
    /// `C'` at the knots.
    slope: Vec<f64>,
    /// Slope of the linear extension below the first knot.
    low_slope: f64,
    /// Decay rate of the exponential extension above the last knot.
    decay: f64,
    max_projection: f64,
}

pub fn fit_call_curve(quotes: &[Quote], ctx: &MarketContext) -> Result<CallCurve> {
    fit_call_curve_with(quotes, ctx, &FitOptions::default())
}

pub fn fit_call_curve_with(quotes: &[Quote], ctx: &MarketContext, opts: &FitOptions) -> Result<CallCurve> {
    ctx.validate()?;
    let qs = sanitize_quotes(quotes)?;
    let n = qs.len();
    let k1 = qs[0].strike;
    let span = qs[n - 1].strike - k1;
    let top = qs.iter().map(|q| q.price).fold(0.0, f64::max);
    let u: Vec<f64> = qs.iter().map(|q| (q.strike - k1) / span).collect();
    let p: Vec<f64> = qs.iter().map(|q| q.price / top).collect();

    let (p, max_projection) = if is_convex_decreasing(&u, &p) {
        (p, 0.0)
    } else {
        let fitted = project_convex(&u, &p);
        let moved = fitted
            .iter()
            .zip(&p)
            .map(|(f, x)| ((f - x) / x).abs())
            .fold(0.0, f64::max);
        if moved > opts.max_projection {
            return Err(Error::UnrepairableQuotes {
                reason: format!(
                    "convex projection moves a quote by {:.2}% (limit {:.2}%)",
                    100.0 * moved,
                    100.0 * opts.max_projection
                ),
            });
        }
        log::info!("quotes projected onto the convex cone; largest move {:.3e}", moved);
        (fitted, moved)
    };

    let mut subdivisions = opts
        .subdivisions
        .unwrap_or_else(|| (96.0 / (n - 1) as f64).ceil() as usize)
        .clamp(1, 8);
    let (t, m, b) = loop {
        if let Some(sol) = smooth_fit(&u, &p, subdivisions, ctx.bond_price * span / top) {
            break sol;
        }
        if subdivisions >= 64 {
            return Err(Error::UnrepairableQuotes {
                reason: "no convex interpolant through the quotes".into(),
            });
        }
        subdivisions *= 2;
        log::debug!("refining knots to {subdivisions} per quote interval");
    };

    // Back to market units.
    let knots: Vec<f64> = t.iter().map(|x| k1 + span * x).collect();
    let density: Vec<f64> = m.iter().map(|x| top / (span * span) * x).collect();
    let mut price = vec![p[0] * top];
    let mut slope = vec![top / span * b];
    for j in 0..knots.len() - 1 {
        let h = knots[j + 1] - knots[j];
        let (q0, q1) = (density[j], density[j + 1]);
        price.push(price[j] + slope[j] * h + h * h * (2.0 * q0 + q1) / 6.0);
        slope.push(slope[j] + 0.5 * h * (q0 + q1));
    }

    let bond = ctx.bond_price;
    if slope[0] < -bond * (1.0 + opts.slope_tolerance) {
        return Err(Error::UnrepairableQuotes {
            reason: format!("fitted slope {} at the lowest strike is steeper than -B = {}", slope[0], -bond),
        });
    }
    let (c_n, s_n) = (price[price.len() - 1], slope[slope.len() - 1]);
    if !(c_n > 0.0 && s_n < 0.0) {
        return Err(Error::UnrepairableQuotes {
            reason: format!("curve does not decay past the last strike (C = {c_n}, C' = {s_n})"),
        });
    }
    let adjusted = qs
        .iter()
        .zip(&p)
        .map(|(q, x)| Quote {
            strike: q.strike,
            price: x * top,
        })
        .collect();
    let curve = CallCurve {
        context: *ctx,
        quotes: quotes.to_vec(),
        adjusted,
        knots,
        density,
        price,
        slope: slope.clone(),
        low_slope: slope[0].max(-bond),
        decay: -s_n / c_n,
        max_projection,
    };
    let miss = curve
        .adjusted
        .iter()
        .map(|q| ((curve.price(q.strike) - q.price) / q.price).abs())
        .fold(0.0, f64::max);
    log::debug!(
        "fitted {} knots, largest relative interpolation error {:.2e}",
        curve.knots.len(),
        miss
    );
    Ok(curve)
}

fn is_convex_decreasing(u: &[f64], p: &[f64]) -> bool {
    let slopes: Vec<f64> = u.windows(2).zip(p.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
    let tol = 1e-12;
    slopes.iter().all(|s| *s <= tol) && slopes.windows(2).all(|w| w[1] - w[0] >= -tol * (1.0 + w[0].abs()))
}

/// Relative least-squares projection onto convex, decreasing, nonnegative
/// piecewise-linear functions with kinks at the quote strikes.
fn project_convex(u: &[f64], p: &[f64]) -> Vec<f64> {
    let n = u.len();
    // Basis: constant, and (u_j - x)^+ for j = 1..n-1.
    let basis = |i: usize, j: usize| if j == 0 { 1.0 } else { (u[j] - u[i]).max(0.0) };
    let a = DMatrix::from_fn(n, n, |i, j| basis(i, j) / p[i]);
    let rhs = DVector::from_element(n, 1.0);
    let coef = nnls(&a, &rhs);
    (0..n).map(|i| (0..n).map(|j| coef[j] * basis(i, j)).sum()).collect()
}

/// Solves for knot densities in normalized coordinates. Returns the knots,
/// the densities and the slope at the first knot, or `None` if no
/// nonnegative density reproduces the quotes on this knot set.
///
/// The roughness penalty is the squared third divided difference of the
/// knot densities, which leaves `q` free to bend near both ends. The slope at
/// the first knot is kept at or above `-floor`, and the slope at the last
/// knot at or below a small fraction of the last secant slope.
fn smooth_fit(u: &[f64], p: &[f64], subdivisions: usize, floor: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let n = u.len();
    let mut t = Vec::with_capacity((n - 1) * subdivisions + 1);
    for i in 0..n - 1 {
        for s in 0..subdivisions {
            t.push(u[i] + (u[i + 1] - u[i]) * s as f64 / subdivisions as f64);
        }
    }
    t.push(u[n - 1]);
    let knots = t.len();
    // Knot densities, then slacks for the two slope bounds.
    let dim = knots + 2;

    // g(i)·m is C(u_i) - C(0) - C'(0) u_i for quote i.
    let g = |i: usize| {
        let mut row = DVector::zeros(dim);
        let end = i * subdivisions;
        for j in 0..end {
            let h = t[j + 1] - t[j];
            let lever = u[i] - t[j];
            row[j] += 0.5 * lever * h - h * h / 6.0;
            row[j + 1] += 0.5 * lever * h - h * h / 3.0;
        }
        row
    };
    // b = b0 - bm·m, the slope at the first knot.
    let g1 = g(1);
    let b0 = (p[1] - p[0]) / u[1];
    let bm = &g1 / u[1];
    // w·m is C'(u_n) - C'(0).
    let mut w = DVector::zeros(dim);
    for j in 0..knots - 1 {
        let h = t[j + 1] - t[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    let secant = (p[n - 1] - p[n - 2]) / (u[n - 1] - u[n - 2]);

    let mut e = DMatrix::zeros(n, dim);
    let mut d = DVector::zeros(n);
    for i in 2..n {
        let ratio = u[i] / u[1];
        let row = g(i) - &g1 * ratio;
        e.set_row(i - 2, &row.transpose());
        d[i - 2] = p[i] - p[0] - ratio * (p[1] - p[0]);
    }
    // b0 - bm·m - s = -floor
    let mut row = -&bm;
    row[knots] = -1.0;
    e.set_row(n - 2, &row.transpose());
    d[n - 2] = -floor - b0;
    // b0 - bm·m + w·m + s' = TAIL_SECANT * secant
    let mut row = &w - &bm;
    row[knots + 1] = 1.0;
    e.set_row(n - 1, &row.transpose());
    d[n - 1] = TAIL_SECANT * secant - b0;

    let mut q = DMatrix::zeros(dim, dim);
    let order = PENALTY_ORDER;
    for j in 0..knots - order {
        let x = &t[j..=j + order];
        let width = (x[order] - x[0]) / order as f64;
        let fact: f64 = (1..=order).map(|v| v as f64).product();
        let c: Vec<f64> = (0..=order)
            .map(|i| fact / (0..=order).filter(|&k| k != i).map(|k| x[i] - x[k]).product::<f64>())
            .collect();
        for a in 0..=order {
            for b in 0..=order {
                q[(j + a, j + b)] += width * c[a] * c[b];
            }
        }
    }
    let sol = quadratic_program(&q, &e, &d)?;
    if !sol.converged {
        log::warn!("density fit stopped at the iteration limit");
    }
    let m: Vec<f64> = sol.x.iter().take(knots).map(|v| v.max(0.0)).collect();
    let b = b0 - bm.rows(0, knots).dot(&DVector::from_column_slice(&m));
    Some((t, m, b))
}

impl CallCurve {
    pub fn context(&self) -> &MarketContext {
        &self.context
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    /// The quotes the curve interpolates, after any convexity projection.
    pub fn adjusted_quotes(&self) -> &[Quote] {
        &self.adjusted
    }

    /// Largest relative move of a quote made by the projection.
    pub fn max_projection(&self) -> f64 {
        self.max_projection
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn first_strike(&self) -> f64 {
        self.knots[0]
    }

    pub fn last_strike(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// `[0, Kmax]`, where `C(Kmax) = C(K_n) e^{-40}`.
    pub fn domain(&self) -> (f64, f64) {
        (0.0, self.last_strike() + TAIL_LENGTHS / self.decay)
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay
    }

    fn locate(&self, k: f64) -> usize {
        let j = self.knots.partition_point(|x| *x <= k);
        j.saturating_sub(1).min(self.knots.len() - 2)
    }

    /// `(C, C', C'')` at strike `k >= 0`.
    pub fn evaluate(&self, k: f64) -> (f64, f64, f64) {
        let first = self.first_strike();
        let last = self.last_strike();
        if k < first {
            return (self.price[0] + self.low_slope * (k - first), self.low_slope, 0.0);
        }
        if k > last {
            let c = self.price[self.price.len() - 1] * (-self.decay * (k - last)).exp();
            return (c, -self.decay * c, self.decay * self.decay * c);
        }
        let j = self.locate(k);
        let h = self.knots[j + 1] - self.knots[j];
        let x = k - self.knots[j];
        let (m0, m1) = (self.density[j], self.density[j + 1]);
        let dm = (m1 - m0) / h;
        let c = self.price[j] + self.slope[j] * x + 0.5 * m0 * x * x + dm * x * x * x / 6.0;
        let s = self.slope[j] + m0 * x + 0.5 * dm * x * x;
        let q = m0 + dm * x;
        (c, s, q.max(0.0))
    }

    pub fn price(&self, k: f64) -> f64 {
        self.evaluate(k).0
    }

    pub fn first_derivative(&self, k: f64) -> f64 {
        self.evaluate(k).1
    }

    pub fn second_derivative(&self, k: f64) -> f64 {
        self.evaluate(k).2
    }

    /// `C(0⁺)`, the linear extension evaluated at zero strike.
    pub fn zero_strike_price(&self) -> f64 {
        self.price[0] - self.low_slope * self.first_strike()
    }

    /// `C'(0⁺)`.
    pub fn zero_strike_slope(&self) -> f64 {
        self.low_slope
    }

    /// Price of the cash-or-nothing call, `-C'(K)`.
    pub fn digital_price(&self, k: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(k >= lo && k <= hi) {
            return Err(Error::OutOfDomain { strike: k });
        }
        Ok((-self.first_derivative(k)).clamp(0.0, self.context.bond_price))
    }

    /// `∫_a^b C''` from the closed-form slopes; the linear piece below the
    /// first strike carries no density.
    pub fn density_mass(&self, a: f64, b: f64) -> f64 {
        self.first_derivative(b.max(0.0)) - self.first_derivative(a.max(0.0))
    }

    /// Abscissae where `C''` has kinks or jumps.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots
    }

    /// Discrete no-arbitrage checks of the fitted curve on `points` strikes
    /// spread over its domain, plus every knot. Price bounds are checked
    /// with a relative slack of `bound_tolerance` times spot.
    pub fn verify(&self, points: usize, bound_tolerance: f64) -> ArbitrageReport {
        let (_, kmax) = self.domain();
        let mut grid: Vec<f64> = (0..points.max(3)).map(|i| kmax * i as f64 / (points.max(3) - 1) as f64).collect();
        grid.extend_from_slice(&self.knots);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let tol = tolerances::ARBITRAGE;
        let b = self.context.bond_price;
        let spot = self.context.spot;
        let mut violations = Vec::new();
        let h = 1e-3 * (self.last_strike() - self.first_strike()) / self.knots.len() as f64;
        for &k in &grid {
            if k >= h {
                let fly = self.price(k - h) - 2.0 * self.price(k) + self.price(k + h);
                if fly < -tol {
                    violations.push(Violation {
                        kind: ViolationKind::Butterfly,
                        strike: k,
                        amount: -fly,
                    });
                }
            }
            let diff = (self.price(k + h) - self.price(k)) / h;
            if diff < -b - tol || diff > tol {
                violations.push(Violation {
                    kind: ViolationKind::Slope,
                    strike: k,
                    amount: if diff > 0.0 { diff } else { -b - diff },
                });
            }
            let c = self.price(k);
            let lower = (spot - k * b).max(0.0);
            let slack = bound_tolerance * spot;
            if c > spot + slack || c < lower - slack {
                violations.push(Violation {
                    kind: ViolationKind::Bound,
                    strike: k,
                    amount: if c > spot { c - spot } else { lower - c },
                });
            }
        }
        ArbitrageReport {
            points_checked: grid.len(),
            violations,
        }
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        let curve: Self = serde_json::from_reader(reader)?;
        let n = curve.knots.len();
        if n < 2 || curve.density.len() != n || curve.price.len() != n || curve.slope.len() != n {
            return Err(Error::InvalidParameter("curve arrays have inconsistent lengths".into()));
        }
        if !(curve.decay > 0.0) {
            return Err(Error::InvalidParameter(format!("curve decay rate {}", curve.decay)));
        }
        curve.context.validate()?;
        Ok(curve)
    }
}
