//! Values of a cash flow: the closed-form Arrow–Debreu integral, the finite
//! digital-option portfolio that approximates it, and the structural checks
//! built on top of them.

use std::cell::Cell;

use rayon::prelude::*;
use serde::Serialize;

use crate::binding::{build_binding_map, BindingMap};
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::option_surface::{self, MarketContext, StatePriceDensity};
use crate::portfolio::SignedMeasure;
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};

/// Grid used for the supremum in the continuity bound.
const SUP_GRID: usize = 4096;

/// Cash-flow law `φ₁`, benchmark law `φ₂`, the benchmark's state price
/// density and the market context.
#[derive(Debug, Clone)]
pub struct ValuationInputs {
    pub phi1: Distribution,
    pub phi2: Distribution,
    pub spd: StatePriceDensity,
    pub ctx: MarketContext,
}

impl ValuationInputs {
    /// Checks the context and that the density prices the bond within the
    /// fitted-curve tolerance.
    pub fn new(phi1: Distribution, phi2: Distribution, spd: StatePriceDensity, ctx: MarketContext) -> Result<Self> {
        Self::with_tolerance(phi1, phi2, spd, ctx, option_surface::tolerances::SPD_FITTED)
    }

    pub fn with_tolerance(
        phi1: Distribution,
        phi2: Distribution,
        spd: StatePriceDensity,
        ctx: MarketContext,
        tol_spd: f64,
    ) -> Result<Self> {
        ctx.validate()?;
        let gap = (spd.bond_price() - ctx.bond_price).abs();
        if gap > tol_spd * ctx.bond_price {
            return Err(Error::InconsistentContext(format!(
                "state price density prices the bond at {}, context says {}",
                spd.bond_price(),
                ctx.bond_price
            )));
        }
        let (lo, hi) = phi1.support();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cash-flow support [{lo}, {hi}] must be bounded; keep a tail epsilon"
            )));
        }
        let (y_lo, y_hi) = phi2.support();
        let (d_lo, d_hi) = spd.domain();
        if y_lo < d_lo || y_hi > d_hi {
            log::warn!("benchmark support [{y_lo}, {y_hi}] reaches outside the density domain [{d_lo}, {d_hi}]");
        }
        Ok(Self { phi1, phi2, spd, ctx })
    }

    /// The same inputs with another cash-flow law.
    pub fn with_phi1(&self, phi1: Distribution) -> Self {
        Self {
            phi1,
            ..self.clone()
        }
    }

    pub fn binding(&self) -> Result<BindingMap> {
        build_binding_map(&self.phi1, &self.phi2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValuationOptions {
    pub quadrature: QuadratureOptions,
    /// Equiprobable cash-flow panels seeding the adaptive quadrature.
    pub panels: usize,
    /// Intervals in the measure-preservation diagnostic; 0 skips it.
    pub preservation_intervals: usize,
}

impl Default for ValuationOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-12),
            panels: 32,
            preservation_intervals: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    FiniteN,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Mass cut from the cash-flow tails by truncation.
    pub tail_mass: f64,
    /// Value of the positions beyond the truncated benchmark support.
    pub tail_value: f64,
    /// Part of the value carried by the zero-strike state (default atom and
    /// any bond mass the density misses).
    pub zero_state_value: f64,
    pub quadrature_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure_preservation: Option<f64>,
    /// Riskless bond held by the finite portfolio.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bond_position: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValuationReport {
    pub value: f64,
    pub method: Method,
    pub n: Option<usize>,
    pub diagnostics: Diagnostics,
    pub portfolio: SignedMeasure,
}

/// Bond weight of the states below `y`: everything the density does not
/// put above it, including a default atom.
fn low_weight(inputs: &ValuationInputs, y: f64) -> f64 {
    inputs.ctx.bond_price - inputs.spd.mass(y, f64::INFINITY)
}

fn integration_points(inputs: &ValuationInputs, bm: &BindingMap, panels: usize) -> Vec<f64> {
    let (x_lo, x_hi) = inputs.phi1.support();
    let (y_lo, y_hi) = (bm.map(x_lo), bm.map(x_hi));
    let mut pts = inputs.phi1.panel_points(panels);
    pts.extend(
        inputs
            .spd
            .breakpoints()
            .into_iter()
            .chain(inputs.phi2.breakpoints())
            .filter(|k| *k > y_lo && *k < y_hi)
            .map(|k| bm.inverse(k)),
    );
    pts.retain(|x| *x >= x_lo && *x <= x_hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `x φ₁(x) q(K(x)) / φ₂(K(x))` in log space. Deep in the tails `K′` may be
/// huge while the product stays finite; only an exact zero of `φ₂ ∘ K`
/// under positive `φ₁` and `q` is recorded as a failure.
fn integrand<'a>(inputs: &'a ValuationInputs, bm: &'a BindingMap, vanished: &'a Cell<Option<(f64, f64)>>) -> impl Fn(f64) -> f64 + 'a {
    move |x: f64| {
        let a = inputs.phi1.ln_pdf(x);
        if a == f64::NEG_INFINITY {
            return 0.0;
        }
        let k = bm.map(x);
        let lq = inputs.spd.ln_q(k);
        if lq == f64::NEG_INFINITY || lq.is_nan() {
            return 0.0;
        }
        let b = inputs.phi2.ln_pdf(k);
        if b == f64::NEG_INFINITY {
            if vanished.get().is_none() {
                vanished.set(Some((x, k)));
            }
            return 0.0;
        }
        x * (a - b + lq).exp()
    }
}

pub fn value_closed_form(inputs: &ValuationInputs) -> Result<ValuationReport> {
    value_closed_form_with(inputs, &ValuationOptions::default())
}

/// `V = ∫ x φ₁(x) q(K(x)) / φ₂(K(x)) dx` over the truncated cash-flow
/// support, plus the states outside the benchmark's truncated support,
/// which receive the extreme cash-flow levels.
pub fn value_closed_form_with(inputs: &ValuationInputs, opts: &ValuationOptions) -> Result<ValuationReport> {
    let bm = inputs.binding()?;
    let (x_lo, x_hi) = inputs.phi1.support();
    let (y_lo, y_hi) = (bm.map(x_lo), bm.map(x_hi));
    let vanished = Cell::new(None);
    let f = integrand(inputs, &bm, &vanished);
    let integral = integrate_with_breakpoints(f, &integration_points(inputs, &bm, opts.panels), opts.quadrature)?;
    if let Some((x, k)) = vanished.get() {
        return Err(Error::TargetDensityVanishes { x, k });
    }
    let w_lo = low_weight(inputs, y_lo);
    let w_hi = inputs.spd.mass(y_hi, f64::INFINITY);
    let tail_value = x_lo * w_lo + x_hi * w_hi;
    let zero_state_value = x_lo * low_weight(inputs, 0.0);

    let measure_preservation = match opts.preservation_intervals {
        0 => None,
        n => Some(bm.verify_measure_preserving(n)?),
    };
    Ok(ValuationReport {
        value: integral.value + tail_value,
        method: Method::ClosedForm,
        n: None,
        diagnostics: Diagnostics {
            tail_mass: inputs.phi1.tail_mass(),
            tail_value,
            zero_state_value,
            quadrature_error: integral.error,
            measure_preservation,
            bond_position: None,
        },
        portfolio: ad_portfolio(inputs, &bm)?,
    })
}

/// Arrow–Debreu positions: weight `K⁻¹(y)` per unit strike on the benchmark
/// support, extended flat to the density's domain. The zero-strike state is
/// not a strike density and is reported by the valuation instead.
pub fn build_ad_portfolio(inputs: &ValuationInputs) -> Result<SignedMeasure> {
    ad_portfolio(inputs, &inputs.binding()?)
}

fn ad_portfolio(inputs: &ValuationInputs, bm: &BindingMap) -> Result<SignedMeasure> {
    let (x_lo, x_hi) = inputs.phi1.support();
    let (y_lo, y_hi) = (bm.map(x_lo), bm.map(x_hi));
    let (_, d_hi) = inputs.spd.domain();
    let mut kinks: Vec<f64> = inputs.spd.breakpoints();
    kinks.extend(inputs.phi2.panel_points(32));
    kinks.retain(|k| *k > y_lo && *k < y_hi);
    let inner = bm.clone();
    let mut rho = SignedMeasure::from_function_with_breakpoints((y_lo, y_hi), kinks, move |y| inner.inverse(y))?;
    if y_lo > 0.0 {
        let below = SignedMeasure::from_grid(vec![0.0, y_lo], vec![x_lo, x_lo])?;
        rho = rho.combine(1.0, &below, 1.0);
    }
    if d_hi.is_finite() && d_hi > y_hi {
        let above = SignedMeasure::from_grid(vec![y_hi, d_hi], vec![x_hi, x_hi])?;
        rho = rho.combine(1.0, &above, 1.0);
    }
    Ok(rho)
}

/// Equiprobable levels `Q(k/n)`, `k = 0..=n`, using the survival side in
/// the upper half.
fn quantile_points(d: &Distribution, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            if 2 * k <= n {
                d.quantile_unchecked(k as f64 / n as f64)
            } else {
                d.isf_unchecked((n - k) as f64 / n as f64)
            }
        })
        .collect()
}

/// Digital-option portfolio on `n` equiprobable cash-flow intervals.
///
/// Interval `[x_k, x_{k+1}]` is paid its midpoint on the matching benchmark
/// interval `[y_k, y_{k+1}]`. States below `y_0` pay `x_0` and states above
/// `y_n` pay `x_n`. Written in digitals this is a bond position `x_0` plus
/// `(x_1 - x_0)/2` at `y_0`, `(x_{k+1} - x_{k-1})/2` at `y_k` and
/// `(x_n - x_{n-1})/2` at `y_n`.
pub fn finite_portfolio_value(inputs: &ValuationInputs, n: usize) -> Result<ValuationReport> {
    if n < 2 {
        return Err(Error::InvalidPartition(n));
    }
    let xs = quantile_points(&inputs.phi1, n);
    let ys = quantile_points(&inputs.phi2, n);
    let mut weights = Vec::with_capacity(n + 1);
    weights.push(0.5 * (xs[1] - xs[0]));
    for k in 1..n {
        weights.push(0.5 * (xs[k + 1] - xs[k - 1]));
    }
    weights.push(0.5 * (xs[n] - xs[n - 1]));

    let bond = xs[0] * inputs.ctx.bond_price;
    let digitals: f64 = ys.iter().zip(&weights).map(|(y, w)| w * inputs.spd.digital(*y)).sum();
    let mut rho = SignedMeasure::zero();
    for (y, w) in ys.iter().zip(&weights) {
        rho = rho.with_atom(*y, *w);
    }
    let w_lo = low_weight(inputs, ys[0]);
    let w_hi = inputs.spd.mass(ys[n], f64::INFINITY);
    Ok(ValuationReport {
        value: bond + digitals,
        method: Method::FiniteN,
        n: Some(n),
        diagnostics: Diagnostics {
            tail_mass: inputs.phi1.tail_mass(),
            tail_value: xs[0] * w_lo + xs[n] * w_hi,
            zero_state_value: xs[0] * low_weight(inputs, 0.0),
            quadrature_error: 0.0,
            measure_preservation: None,
            bond_position: Some(xs[0]),
        },
        portfolio: rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub value: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub reference: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// True when each error is at most the previous one, up to `slack`.
    pub fn is_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].abs_error <= w[0].abs_error + slack)
    }
}

/// Finite-portfolio values for each `n` against the closed form, computed
/// in parallel and returned in the order of `ns`.
pub fn convergence_study(inputs: &ValuationInputs, ns: &[usize]) -> Result<ConvergenceTable> {
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("partition counts must increase".into()));
    }
    let reference = value_closed_form(inputs)?.value;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let value = finite_portfolio_value(inputs, n)?.value;
            let abs_error = (value - reference).abs();
            Ok(ConvergenceRow {
                n,
                value,
                abs_error,
                rel_error: abs_error / reference.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { reference, rows })
}

/// Value of the cash flow plus a riskless payout `a`.
pub fn mm_separated_value(inputs: &ValuationInputs, a: f64) -> Result<f64> {
    Ok(value_closed_form(&inputs.with_phi1(inputs.phi1.affine(1.0, a)?))?.value)
}

/// Value of `c` times the cash flow.
pub fn scaled_value(inputs: &ValuationInputs, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveScale(c));
    }
    Ok(value_closed_form(&inputs.with_phi1(inputs.phi1.affine(c, 0.0)?))?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpeanReport {
    /// Riskless part, the lowest cash-flow level.
    pub shift: f64,
    pub sigma: f64,
    /// `(E[CF] - shift) / sigma`.
    pub score: f64,
    /// Price of the riskless part, `shift · B`.
    pub shift_value: f64,
}

/// Relative tolerance for counting density modes.
const MODE_TOLERANCE: f64 = 1e-6;

/// Strips the riskless part of a unimodal cash flow and normalizes by its
/// standard deviation.
pub fn sharpean_operation(cf: &Distribution, ctx: &MarketContext) -> Result<SharpeanReport> {
    let modes = cf.count_modes(MODE_TOLERANCE);
    if modes != 1 {
        return Err(Error::NotUnimodal { modes });
    }
    let (mean, var) = cf.mean_variance()?;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sigma = var.sqrt();
    let (shift, _) = cf.support();
    Ok(SharpeanReport {
        shift,
        sigma,
        score: (mean - shift) / sigma,
        shift_value: shift * ctx.bond_price,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// `|V_a - V_b|`.
    pub lhs: f64,
    /// `C · E|CF_a - CF_b|` plus the tail terms.
    pub rhs: f64,
    /// `sup q / φ₂` over the benchmark support.
    pub constant: f64,
    /// `E|CF_a - CF_b|` under the comonotone coupling.
    pub expected_gap: f64,
    /// `sup q`, and the bound it would give.
    pub sup_q: f64,
    pub sup_q_rhs: f64,
    pub holds: bool,
}

/// Compares two cash flows valued against the same benchmark (`φ₂`, `q`
/// and context taken from `a`). The gap `E|CF_a - CF_b|` uses the
/// comonotone coupling, so it equals `∫ |F_a - F_b| dx`.
pub fn continuity_bound_check(a: &ValuationInputs, b: &ValuationInputs) -> Result<ContinuityReport> {
    let b = a.with_phi1(b.phi1.clone());
    let va = value_closed_form(a)?.value;
    let vb = value_closed_form(&b)?.value;

    let mut sup_ratio: f64 = 0.0;
    let mut sup_q: f64 = 0.0;
    for i in 0..=SUP_GRID {
        let y = a.phi2.quantile_unchecked(i as f64 / SUP_GRID as f64);
        let q = a.spd.q(y);
        let p = a.phi2.pdf(y);
        sup_q = sup_q.max(q);
        if q > 0.0 {
            sup_ratio = sup_ratio.max(q / p);
        }
    }
    if !(sup_ratio.is_finite() && sup_q.is_finite()) {
        return Err(Error::UnboundedQ);
    }

    let (fa, fb) = (&a.phi1, &b.phi1);
    let mut pts = fa.panel_points(32);
    pts.extend(fb.panel_points(32));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let opts = QuadratureOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-11);
    let gap = integrate_with_breakpoints(|x| (fa.cdf(x) - fb.cdf(x)).abs(), &pts, opts)?.value;

    let (ya, yb) = (a.phi2.support(), a.phi2.support());
    let (xa, xb) = (fa.support(), fb.support());
    let tails = (xa.0 - xb.0).abs() * low_weight(a, ya.0) + (xa.1 - xb.1).abs() * a.spd.mass(yb.1, f64::INFINITY);
    let lhs = (va - vb).abs();
    let rhs = sup_ratio * gap + tails;
    let slack = 1e-9 * (1.0 + va.abs().max(vb.abs()));
    Ok(ContinuityReport {
        lhs,
        rhs,
        constant: sup_ratio,
        expected_gap: gap,
        sup_q,
        sup_q_rhs: sup_q * gap + tails,
        holds: lhs <= rhs + slack,
    })
}

/// `(x, integrand(x))` on `points` equiprobable cash-flow levels.
pub fn integrand_samples(inputs: &ValuationInputs, points: usize) -> Result<Vec<[f64; 2]>> {
    let bm = inputs.binding()?;
    let vanished = Cell::new(None);
    let f = integrand(inputs, &bm, &vanished);
    let n = points.max(2) - 1;
    Ok(quantile_points(&inputs.phi1, n).into_iter().map(|x| [x, f(x)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::option_surface::model::LognormalModel;
    use approx::assert_relative_eq;

    fn unit_ctx() -> MarketContext {
        MarketContext::new(0.0, 1.0, 1.0, 0.5).unwrap()
    }

    fn uniform_inputs(phi1: Distribution) -> ValuationInputs {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        let spd = StatePriceDensity::from_measure(&u, 1.0).unwrap();
        ValuationInputs::new(phi1, u, spd, unit_ctx()).unwrap()
    }

    fn lognormal_inputs() -> (LognormalModel, ValuationInputs) {
        let m = LognormalModel::with_drift(100.0, 0.02, 0.2, 1.0, 0.07).unwrap();
        let spd = StatePriceDensity::from_measure(&m.risk_neutral(), m.discount()).unwrap();
        let inputs = ValuationInputs::new(m.physical(), m.physical(), spd, m.context()).unwrap();
        (m, inputs)
    }

    #[test]
    fn uniform_idempotent() {
        let r = value_closed_form(&uniform_inputs(Distribution::uniform(0.0, 1.0).unwrap())).unwrap();
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-12);
        assert_eq!(r.method, Method::ClosedForm);
    }

    #[test]
    fn shifted_uniform_adds_the_bond() {
        let inputs = uniform_inputs(Distribution::uniform(0.5, 1.5).unwrap());
        assert_relative_eq!(value_closed_form(&inputs).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lognormal_idempotent() {
        let (_, inputs) = lognormal_inputs();
        let r = value_closed_form(&inputs).unwrap();
        assert_relative_eq!(r.value, 100.0, epsilon = 1e-6);
        assert!(r.diagnostics.measure_preservation.unwrap() < 1e-9);
    }

    #[test]
    fn portfolio_reproduces_value() {
        let (_, inputs) = lognormal_inputs();
        let r = value_closed_form(&inputs).unwrap();
        let spd = inputs.spd.clone();
        let v = r.portfolio.integrate(|k| spd.q(k)).unwrap();
        assert_relative_eq!(v + r.diagnostics.zero_state_value, r.value, max_relative = 1e-8);
        // Identity coupling: the weight at strike y is y.
        for y in [80.0, 100.0, 125.0] {
            assert_relative_eq!(r.portfolio.density(y), y, max_relative = 1e-10);
        }
    }

    #[test]
    fn uniform_portfolio_weights() {
        let u = Distribution::uniform(0.0, 2.0).unwrap();
        let spd = StatePriceDensity::from_measure(&u, 1.0).unwrap();
        let ctx = MarketContext::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let inputs = ValuationInputs::new(Distribution::uniform(0.0, 1.0).unwrap(), u, spd, ctx).unwrap();
        let rho = build_ad_portfolio(&inputs).unwrap();
        for y in [0.2, 1.0, 1.7] {
            assert_relative_eq!(rho.density(y), y / 2.0, epsilon = 1e-14);
        }
        assert!(rho.atoms().is_empty());
    }

    #[test]
    fn finite_uniform_is_exact() {
        let inputs = uniform_inputs(Distribution::uniform(0.0, 1.0).unwrap());
        let r = finite_portfolio_value(&inputs, 4).unwrap();
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-15);
        assert_eq!(r.portfolio.atoms().len(), 5);
        assert_eq!(r.n, Some(4));
        let smoke = finite_portfolio_value(&inputs, 2).unwrap();
        assert!(smoke.value.is_finite() && smoke.portfolio.total_variation().unwrap().is_finite());
        assert!(matches!(finite_portfolio_value(&inputs, 1), Err(Error::InvalidPartition(1))));
    }

    #[test]
    fn finite_lognormal_converges() {
        let (_, inputs) = lognormal_inputs();
        let exact = value_closed_form(&inputs).unwrap().value;
        let v = finite_portfolio_value(&inputs, 1000).unwrap().value;
        assert_relative_eq!(v, exact, max_relative = 1e-3);
    }

    #[test]
    fn convergence_on_uniform_is_flat() {
        let inputs = uniform_inputs(Distribution::uniform(0.0, 1.0).unwrap());
        let t = convergence_study(&inputs, &[2, 10, 100, 1000]).unwrap();
        assert!(t.rows.iter().all(|r| r.abs_error < 1e-12));
        assert_eq!(t.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![2, 10, 100, 1000]);
    }

    #[test]
    fn separation_and_scaling_examples() {
        let (m, inputs) = lognormal_inputs();
        let v = value_closed_form(&inputs).unwrap().value;
        assert_eq!(mm_separated_value(&inputs, 0.0).unwrap(), v);
        assert_relative_eq!(
            mm_separated_value(&inputs, 10.0).unwrap(),
            100.0 + 10.0 * m.discount(),
            epsilon = 1e-2
        );
        assert_relative_eq!(mm_separated_value(&inputs, -5.0).unwrap(), v - 5.0 * m.discount(), epsilon = 1e-8);
        assert_relative_eq!(scaled_value(&inputs, 0.5).unwrap(), 50.0, epsilon = 0.05);
        assert_eq!(scaled_value(&inputs, 1.0).unwrap(), v);
        let uni = uniform_inputs(Distribution::uniform(0.0, 1.0).unwrap());
        assert_relative_eq!(scaled_value(&uni, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(scaled_value(&uni, 0.0), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn sharpean_examples() {
        let ctx = unit_ctx();
        let r = sharpean_operation(&Distribution::uniform(2.0, 4.0).unwrap(), &ctx).unwrap();
        assert_relative_eq!(r.shift, 2.0);
        assert_relative_eq!(r.sigma, 1.0 / 3f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.score, 3f64.sqrt(), max_relative = 1e-12);
        let r = sharpean_operation(&Distribution::uniform(0.0, 1.0).unwrap(), &ctx).unwrap();
        assert_relative_eq!(r.score, 3f64.sqrt(), max_relative = 1e-12);

        let cf = Distribution::lognormal(0.0, 0.4).unwrap();
        let s1 = sharpean_operation(&cf, &ctx).unwrap().score;
        let s2 = sharpean_operation(&cf.affine(3.0, 7.0).unwrap(), &ctx).unwrap().score;
        assert!((s1 - s2).abs() < 1e-9);

        let bimodal = Distribution::mixture(vec![
            (0.5, Distribution::normal(-3.0, 1.0).unwrap()),
            (0.5, Distribution::normal(3.0, 1.0).unwrap()),
        ])
        .unwrap();
        assert!(matches!(
            sharpean_operation(&bimodal, &ctx),
            Err(Error::NotUnimodal { modes: 2 })
        ));
    }

    #[test]
    fn continuity_examples() {
        let a = uniform_inputs(Distribution::uniform(0.0, 1.0).unwrap());
        let same = continuity_bound_check(&a, &a).unwrap();
        assert_eq!(same.lhs, 0.0);
        assert!(same.rhs < 1e-12 && same.holds);

        let b = a.with_phi1(Distribution::uniform(0.01, 1.01).unwrap());
        let r = continuity_bound_check(&a, &b).unwrap();
        assert_relative_eq!(r.lhs, 0.01, epsilon = 1e-10);
        assert_relative_eq!(r.rhs, 0.01, epsilon = 1e-10);
        assert!(r.holds);
    }

    #[test]
    fn states_above_the_benchmark_pay_the_top_level() {
        let ctx = unit_ctx();
        let phi2 = Distribution::uniform(0.0, 1.0).unwrap();
        let spd = StatePriceDensity::from_measure(&Distribution::uniform(0.0, 2.0).unwrap(), 1.0).unwrap();
        let inputs = ValuationInputs::new(Distribution::uniform(0.0, 1.0).unwrap(), phi2, spd, ctx).unwrap();
        let r = value_closed_form(&inputs).unwrap();
        // Half the states lie above y = 1 and all pay x = 1.
        assert_relative_eq!(r.value, 0.5 * 0.5 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn inconsistent_bond_is_rejected() {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        let spd = StatePriceDensity::from_measure(&u, 0.9).unwrap();
        assert!(matches!(
            ValuationInputs::new(u.clone(), u, spd, unit_ctx()),
            Err(Error::InconsistentContext(_))
        ));
    }
}
