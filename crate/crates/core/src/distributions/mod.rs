//! One-dimensional distributions: analytic families, gridded densities and
//! user-supplied density functions, with CDFs, quantiles and expectations.
//!
//! Unbounded supports are truncated at the `tail_epsilon` quantiles and the
//! remaining mass renormalized. [`Distribution::untruncated`] drops the
//! window when exact tails matter.

mod grid;
mod kde;

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use statrs::function::erf::{erfc, erfc_inv};

pub use grid::{GridDensity, GridSpec, Interpolation};
pub use kde::{estimate_density_from_samples, Bandwidth, KdeEstimate, MIN_SAMPLES};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};
use crate::roots::{expand_bracket, monotone_inverse};

/// Default tolerances.
pub mod tolerances {
    /// Normalization tolerance for analytic and function densities.
    pub const NORM_ANALYTIC: f64 = 1e-8;
    /// Normalization tolerance for gridded densities.
    pub const NORM_GRID: f64 = 1e-4;
    /// Tail mass cut from each unbounded end.
    pub const TAIL: f64 = 1e-8;
    /// Relative x-tolerance of quantile root finding.
    pub const ROOT: f64 = 1e-13;
    /// Slack allowed in first-order dominance checks.
    pub const FSD: f64 = 1e-10;
    /// Densities below this are treated as zero.
    pub const DENSITY_FLOOR: f64 = 1e-12;
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -std_normal_quantile(1.0 - p);
    }
    // Halley steps on the lower tail, where the CDF keeps relative precision.
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let e = std_normal_cdf(z) - p;
        let t = e / ln_std_normal_pdf(z).exp();
        z -= t / (1.0 + 0.5 * z * t);
    }
    z
}

fn ln_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// A density supplied as code. Only `pdf`, `cdf` and `support` are required;
/// the quantile falls back to root finding.
pub trait UnivariateDensity: Send + Sync + fmt::Debug {
    fn pdf(&self, x: f64) -> f64;

    fn ln_pdf(&self, x: f64) -> f64 {
        self.pdf(x).ln()
    }

    fn cdf(&self, x: f64) -> f64;

    fn support(&self) -> (f64, f64);

    fn quantile(&self, u: f64) -> f64 {
        generic_quantile(|x| self.cdf(x), |x| self.pdf(x), self.support(), u)
    }

    /// Abscissae where the density is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub(crate) fn generic_quantile<G: Fn(f64) -> f64, D: Fn(f64) -> f64>(cdf: G, pdf: D, support: (f64, f64), u: f64) -> f64 {
    let (lo, hi) = support;
    if u <= 0.0 {
        return lo;
    }
    if u >= 1.0 && hi.is_finite() {
        return hi;
    }
    let a = if lo.is_finite() { lo } else { hi.min(0.0) - 1.0 };
    let b = if hi.is_finite() { hi } else { lo.max(0.0) + 1.0 };
    let (a, b) = match expand_bracket(&cdf, u, a, b) {
        Ok(br) => (if lo.is_finite() { lo } else { br.0 }, if hi.is_finite() { hi } else { br.1 }),
        Err(_) => return if u >= 1.0 { hi } else { f64::NAN },
    };
    monotone_inverse(&cdf, &pdf, u, a, b, tolerances::ROOT).unwrap_or(f64::NAN)
}

/// The base family of a [`Distribution`], before scaling, shifting and
/// truncation.
#[derive(Debug, Clone)]
pub enum Family {
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
    /// `ln X ~ N(mu, sigma²)`.
    Lognormal { mu: f64, sigma: f64 },
    /// Weighted components; weights sum to one.
    Mixture(Vec<(f64, Distribution)>),
    Grid(GridDensity),
    Custom(Arc<dyn UnivariateDensity>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Analytic,
    Grid,
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Family::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad(format!("uniform bounds [{low}, {high}]"))
            }
            Family::Exponential { rate } if !(rate.is_finite() && *rate > 0.0) => bad(format!("exponential rate {rate}")),
            Family::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) => {
                bad(format!("normal mean {mean}, sd {sd}"))
            }
            Family::Lognormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && *sigma > 0.0) => {
                bad(format!("lognormal mu {mu}, sigma {sigma}"))
            }
            Family::Mixture(parts) => {
                if parts.is_empty() {
                    return bad("empty mixture".into());
                }
                if let Some((w, _)) = parts.iter().find(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
                    return bad(format!("mixture weight {w}"));
                }
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                if (total - 1.0).abs() > tolerances::NORM_ANALYTIC {
                    return Err(Error::NonNormalized {
                        mass: total,
                        tolerance: tolerances::NORM_ANALYTIC,
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn kind(&self) -> Kind {
        match self {
            Family::Grid(_) => Kind::Grid,
            Family::Mixture(parts) if parts.iter().any(|(_, d)| d.kind() == Kind::Grid) => Kind::Grid,
            _ => Kind::Analytic,
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Family::Uniform { low, high } => (*low, *high),
            Family::Exponential { .. } | Family::Lognormal { .. } => (0.0, f64::INFINITY),
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Mixture(parts) => parts
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(_, d)| d.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d))),
            Family::Grid(g) => g.support(),
            Family::Custom(c) => c.support(),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Family::Uniform { low, high } => {
                if x >= *low && x <= *high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            Family::Mixture(parts) => parts.iter().map(|(w, d)| w * d.pdf(x)).sum(),
            Family::Grid(g) => g.pdf(x),
            Family::Custom(c) => c.pdf(x).max(0.0),
            _ => self.ln_pdf(x).exp(),
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                if x >= 0.0 {
                    rate.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Normal { mean, sd } => ln_std_normal_pdf((x - mean) / sd) - sd.ln(),
            Family::Lognormal { mu, sigma } => {
                if x > 0.0 {
                    let lx = x.ln();
                    ln_std_normal_pdf((lx - mu) / sigma) - sigma.ln() - lx
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Mixture(parts) => {
                let logs: Vec<f64> = parts
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .map(|(w, d)| w.ln() + d.ln_pdf(x))
                    .collect();
                let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
                }
            }
            Family::Custom(c) => c.ln_pdf(x),
            _ => self.pdf(x).ln(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Family::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Family::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Family::Mixture(parts) => parts.iter().map(|(w, d)| w * d.cdf(x)).sum::<f64>().clamp(0.0, 1.0),
            Family::Grid(g) => g.cdf(x),
            Family::Custom(c) => c.cdf(x).clamp(0.0, 1.0),
        }
    }

    /// Upper tail `1 - F(x)` without cancellation where a closed form exists.
    fn sf(&self, x: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Family::Normal { mean, sd } => std_normal_cdf(-(x - mean) / sd),
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    std_normal_cdf(-(x.ln() - mu) / sigma)
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match self {
            Family::Uniform { low, high } => low + u * (high - low),
            Family::Exponential { rate } => -(-u).ln_1p() / rate,
            Family::Normal { mean, sd } => mean + sd * std_normal_quantile(u),
            Family::Lognormal { mu, sigma } => (mu + sigma * std_normal_quantile(u)).exp(),
            Family::Mixture(parts) => {
                let (lo, hi) = self.support();
                if u <= 0.0 {
                    return lo;
                }
                if u >= 1.0 {
                    return hi;
                }
                // The mixture quantile lies between the component quantiles.
                let qs = parts.iter().filter(|(w, _)| *w > 0.0).map(|(_, d)| d.family_quantile_x(u));
                let (a, b) = qs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q), b.max(q)));
                if a == b {
                    return a;
                }
                monotone_inverse(|x| self.cdf(x), |x| self.pdf(x), u, a, b, tolerances::ROOT).unwrap_or(f64::NAN)
            }
            Family::Grid(g) => g.quantile(u),
            Family::Custom(c) => c.quantile(u),
        }
    }

    /// Inverse of the survival function, accurate for small `s`.
    fn isf(&self, s: f64) -> f64 {
        match self {
            Family::Uniform { low, high } => high - s * (high - low),
            Family::Exponential { rate } => -s.ln() / rate,
            Family::Normal { mean, sd } => mean - sd * std_normal_quantile(s),
            Family::Lognormal { mu, sigma } => (mu - sigma * std_normal_quantile(s)).exp(),
            _ => self.quantile(1.0 - s),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Family::Uniform { low, high } => vec![*low, *high],
            Family::Exponential { .. } | Family::Lognormal { .. } => vec![0.0],
            Family::Normal { .. } => Vec::new(),
            Family::Mixture(parts) => parts.iter().flat_map(|(_, d)| d.breakpoints()).collect(),
            Family::Grid(g) => g.nodes().to_vec(),
            Family::Custom(c) => c.breakpoints(),
        }
    }
}

/// Truncation window in family coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    /// Family mass above `hi`.
    sf_hi: f64,
    mass: f64,
}

/// A probability distribution on the real line.
///
/// Cheap to clone; the family data is shared. The affine map
/// `x = scale * u + shift` is applied exactly on top of the base family.
#[derive(Debug, Clone)]
pub struct Distribution {
    family: Arc<Family>,
    scale: f64,
    shift: f64,
    window: Option<Window>,
    tail_epsilon: f64,
}

impl Distribution {
    fn from_family(family: Family) -> Result<Self> {
        family.validate()?;
        Self::build(Arc::new(family), 1.0, 0.0, tolerances::TAIL)
    }

    fn build(family: Arc<Family>, scale: f64, shift: f64, tail_epsilon: f64) -> Result<Self> {
        if !(tail_epsilon >= 0.0 && tail_epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!("tail epsilon {tail_epsilon}")));
        }
        let (a, b) = family.support();
        let window = if a.is_finite() && b.is_finite() || tail_epsilon == 0.0 {
            None
        } else {
            let lo = if a.is_finite() { a } else { family.quantile(tail_epsilon) };
            let hi = if b.is_finite() { b } else { family.isf(tail_epsilon) };
            let cdf_lo = if a.is_finite() { 0.0 } else { family.cdf(lo) };
            let upper = if b.is_finite() { 0.0 } else { family.sf(hi) };
            Some(Window {
                lo,
                hi,
                cdf_lo,
                sf_hi: upper,
                mass: 1.0 - cdf_lo - upper,
            })
        };
        Ok(Self {
            family,
            scale,
            shift,
            window,
            tail_epsilon,
        })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Self::from_family(Family::Uniform { low, high })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::from_family(Family::Exponential { rate })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::from_family(Family::Normal { mean, sd })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::from_family(Family::Lognormal { mu, sigma })
    }

    /// Mixture of (weight, component) pairs. Components enter untruncated;
    /// the mixture itself is truncated like any unbounded distribution.
    pub fn mixture(parts: Vec<(f64, Distribution)>) -> Result<Self> {
        let parts = parts.into_iter().map(|(w, d)| (w, d.untruncated())).collect();
        Self::from_family(Family::Mixture(parts))
    }

    /// Gridded density. Fails with `NonNormalized` when the trapezoidal mass
    /// of the nodes is off by more than the grid tolerance; otherwise the
    /// interpolant is rescaled to unit mass.
    pub fn from_grid(spec: GridSpec) -> Result<Self> {
        Self::from_grid_with_tolerance(spec, tolerances::NORM_GRID)
    }

    pub fn from_grid_with_tolerance(spec: GridSpec, tolerance: f64) -> Result<Self> {
        spec.validate()?;
        let mass = spec.trapezoid_mass();
        if (mass - 1.0).abs() > tolerance {
            return Err(Error::NonNormalized { mass, tolerance });
        }
        Self::from_family(Family::Grid(GridDensity::new(&spec)?))
    }

    /// Gridded density rescaled to unit mass whatever its total.
    pub fn from_grid_normalized(spec: GridSpec) -> Result<Self> {
        Self::from_family(Family::Grid(GridDensity::new(&spec)?))
    }

    /// Wraps a custom density. Its normalization is the caller's
    /// responsibility; see [`cdf_from_density`] for a checked route.
    pub fn custom(density: Arc<dyn UnivariateDensity>) -> Result<Self> {
        Self::from_family(Family::Custom(density))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn kind(&self) -> Kind {
        self.family.kind()
    }

    /// Affine parameters `(scale, shift)` relative to the base family.
    pub fn affine_parameters(&self) -> (f64, f64) {
        (self.scale, self.shift)
    }

    /// Distribution of `c * X + a`.
    pub fn affine(&self, c: f64, a: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NonPositiveScale(c));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("shift {a}")));
        }
        Ok(Self {
            scale: self.scale * c,
            shift: self.shift * c + a,
            ..self.clone()
        })
    }

    /// The same distribution with its natural, possibly unbounded, support.
    pub fn untruncated(&self) -> Self {
        Self {
            window: None,
            tail_epsilon: 0.0,
            ..self.clone()
        }
    }

    pub fn with_tail_epsilon(&self, eps: f64) -> Result<Self> {
        Self::build(self.family.clone(), self.scale, self.shift, eps)
    }

    pub fn is_truncated(&self) -> bool {
        self.window.is_some()
    }

    /// Mass removed from the unbounded ends.
    pub fn tail_mass(&self) -> f64 {
        self.window.map_or(0.0, |w| 1.0 - w.mass)
    }

    pub fn tail_epsilon(&self) -> f64 {
        self.tail_epsilon
    }

    fn to_family(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    fn from_family_x(&self, u: f64) -> f64 {
        self.scale * u + self.shift
    }

    /// Closed interval carrying all the mass.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = match self.window {
            Some(w) => (w.lo, w.hi),
            None => self.family.support(),
        };
        (self.from_family_x(a), self.from_family_x(b))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let u = self.to_family(x);
        match self.window {
            Some(w) if u < w.lo || u > w.hi => 0.0,
            Some(w) => self.family.pdf(u) / (w.mass * self.scale),
            None => self.family.pdf(u) / self.scale,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let u = self.to_family(x);
        match self.window {
            Some(w) if u < w.lo || u > w.hi => f64::NEG_INFINITY,
            Some(w) => self.family.ln_pdf(u) - (w.mass * self.scale).ln(),
            None => self.family.ln_pdf(u) - self.scale.ln(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = self.to_family(x);
        match self.window {
            Some(w) if u < w.lo => 0.0,
            Some(w) if u >= w.hi => 1.0,
            Some(w) => ((self.family.cdf(u) - w.cdf_lo) / w.mass).clamp(0.0, 1.0),
            None => self.family.cdf(u),
        }
    }

    /// `1 - F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let u = self.to_family(x);
        match self.window {
            Some(w) if u < w.lo => 1.0,
            Some(w) if u >= w.hi => 0.0,
            Some(w) => {
                let upper = w.sf_hi;
                ((self.family.sf(u) - upper) / w.mass).clamp(0.0, 1.0)
            }
            None => self.family.sf(u),
        }
    }

    /// Left-continuous generalized inverse `inf { x : F(x) >= u }`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfRange(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= 0.0 {
            return lo;
        }
        match self.window {
            Some(w) => {
                if u >= 1.0 {
                    return hi;
                }
                let v = self.family.quantile(w.cdf_lo + u * w.mass).clamp(w.lo, w.hi);
                self.from_family_x(v)
            }
            None => self.from_family_x(self.family.quantile(u)),
        }
    }

    /// `x` with `1 - F(x) = s`; the upper-tail counterpart of
    /// [`quantile`](Self::quantile).
    pub fn isf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange(s));
        }
        Ok(self.isf_unchecked(s))
    }

    pub(crate) fn isf_unchecked(&self, s: f64) -> f64 {
        let (lo, hi) = self.support();
        if s >= 1.0 {
            return lo;
        }
        match self.window {
            Some(w) => {
                if s <= 0.0 {
                    return hi;
                }
                let upper = w.sf_hi;
                let v = self.family.isf(upper + s * w.mass).clamp(w.lo, w.hi);
                self.from_family_x(v)
            }
            None => self.from_family_x(self.family.isf(s)),
        }
    }

    /// Untruncated family quantile mapped to x; used for mixture bracketing.
    fn family_quantile_x(&self, u: f64) -> f64 {
        self.from_family_x(self.family.quantile(u))
    }

    /// Points where the density may be non-smooth, within the support.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mut pts: Vec<f64> = self
            .family
            .breakpoints()
            .into_iter()
            .map(|u| self.from_family_x(u))
            .filter(|x| x.is_finite() && *x > lo && *x < hi)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Support endpoints, density breakpoints and `panels - 1` interior
    /// quantiles, sorted: panels that each carry comparable mass.
    pub fn panel_points(&self, panels: usize) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mut pts = vec![lo, hi];
        pts.extend(self.breakpoints());
        if self.kind() == Kind::Grid && pts.len() > 4 * panels {
            // Grid nodes already resolve the density.
        } else {
            pts.extend((1..panels).map(|k| self.quantile_unchecked(k as f64 / panels as f64)));
        }
        pts.retain(|x| !x.is_nan());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `E[payoff(X)]` by adaptive quadrature on equiprobable panels.
    pub fn expectation<F: Fn(f64) -> f64>(&self, payoff: F) -> Result<f64> {
        let pts = self.panel_points(32);
        let size = pts
            .iter()
            .filter(|x| x.is_finite())
            .map(|x| payoff(*x).abs())
            .filter(|v| v.is_finite())
            .fold(1.0, f64::max);
        let opts = QuadratureOptions::default().with_abs_tol(1e-12 * size).with_rel_tol(1e-11);
        self.expectation_with(payoff, opts)
    }

    pub fn expectation_with<F: Fn(f64) -> f64>(&self, payoff: F, opts: QuadratureOptions) -> Result<f64> {
        let pts = self.panel_points(32);
        let f = |x: f64| {
            let p = self.pdf(x);
            if p == 0.0 {
                0.0
            } else {
                payoff(x) * p
            }
        };
        Ok(integrate_with_breakpoints(f, &pts, opts)?.value)
    }

    /// Mean and variance. Closed form for untruncated analytic families,
    /// quadrature otherwise; the affine map is applied exactly afterwards so
    /// standardized quantities are invariant under it.
    pub fn mean_variance(&self) -> Result<(f64, f64)> {
        let (m, v) = match (&*self.family, self.window) {
            (Family::Uniform { low, high }, None) => (0.5 * (low + high), (high - low).powi(2) / 12.0),
            (Family::Exponential { rate }, None) => (1.0 / rate, 1.0 / (rate * rate)),
            (Family::Normal { mean, sd }, None) => (*mean, sd * sd),
            (Family::Lognormal { mu, sigma }, None) => {
                let s2 = sigma * sigma;
                ((mu + 0.5 * s2).exp(), s2.exp_m1() * (2.0 * mu + s2).exp())
            }
            _ => {
                let base = Self {
                    scale: 1.0,
                    shift: 0.0,
                    ..self.clone()
                };
                let m = base.expectation(|u| u)?;
                let v = base.expectation(|u| (u - m) * (u - m))?;
                (m, v)
            }
        };
        Ok((self.scale * m + self.shift, self.scale * self.scale * v))
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.mean_variance()?.0)
    }

    pub fn std_dev(&self) -> Result<f64> {
        Ok(self.mean_variance()?.1.sqrt())
    }

    /// Checks the density invariants on a sample grid: nonnegativity and
    /// unit mass within `tolerance`.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let pts = self.panel_points(64);
        for w in pts.windows(2) {
            if !(w[0].is_finite() && w[1].is_finite()) {
                continue;
            }
            for i in 0..8 {
                let x = w[0] + (w[1] - w[0]) * (i as f64 + 0.5) / 8.0;
                let v = self.pdf(x);
                if v < 0.0 || v.is_nan() {
                    return Err(Error::NegativeDensity { at: x, value: v });
                }
            }
        }
        let mass = self.expectation(|_| 1.0)?;
        if (mass - 1.0).abs() > tolerance {
            return Err(Error::NonNormalized { mass, tolerance });
        }
        Ok(())
    }

    /// Number of strict local maxima of the density on a fine grid over the
    /// support, ignoring wiggles below `rel_tol` of the peak.
    pub fn count_modes(&self, rel_tol: f64) -> usize {
        let (lo, hi) = self.support();
        let n = 2001;
        let ys: Vec<f64> = (0..n)
            .map(|i| self.pdf(lo + (hi - lo) * (i as f64 + 0.5) / n as f64))
            .collect();
        let peak = ys.iter().copied().fold(0.0, f64::max);
        let tol = rel_tol * peak;
        // Walk the sequence recording direction changes beyond the tolerance.
        let mut modes = 0;
        let mut rising = true;
        let mut anchor = ys[0];
        for &y in &ys[1..] {
            if rising {
                if y > anchor {
                    anchor = y;
                } else if y < anchor - tol {
                    modes += 1;
                    rising = false;
                    anchor = y;
                }
            } else if y < anchor {
                anchor = y;
            } else if y > anchor + tol {
                rising = true;
                anchor = y;
            }
        }
        if rising {
            modes += 1;
        }
        modes
    }
}

/// A density given only as a function on an interval.
#[derive(Clone)]
pub struct DensityFunction {
    pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: (f64, f64),
}

impl fmt::Debug for DensityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFunction").field("support", &self.support).finish()
    }
}

impl DensityFunction {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(support: (f64, f64), pdf: F) -> Self {
        Self {
            pdf: Arc::new(pdf),
            support,
        }
    }
}

/// Tabulated CDF over a bounded window of a function density.
#[derive(Debug)]
struct TabulatedDensity {
    density: DensityFunction,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    norm: f64,
}

impl TabulatedDensity {
    fn segment(&self, a: f64, b: f64) -> f64 {
        let opts = QuadratureOptions::default().with_abs_tol(1e-15).with_rel_tol(1e-12);
        integrate_with_breakpoints(|x| (self.density.pdf)(x).max(0.0), &[a, b], opts)
            .map(|i| i.value)
            .unwrap_or(f64::NAN)
            / self.norm
    }
}

impl UnivariateDensity for TabulatedDensity {
    fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            0.0
        } else {
            (self.density.pdf)(x).max(0.0) / self.norm
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let j = self.nodes.partition_point(|n| *n <= x) - 1;
        (self.cumulative[j] + self.segment(self.nodes[j], x)).clamp(0.0, 1.0)
    }

    fn support(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.nodes[0];
        }
        let j = self.cumulative.partition_point(|c| *c < u).clamp(1, self.nodes.len() - 1);
        monotone_inverse(
            |x| self.cdf(x),
            |x| self.pdf(x),
            u,
            self.nodes[j - 1],
            self.nodes[j],
            tolerances::ROOT,
        )
        .unwrap_or(f64::NAN)
    }
}

/// Builds a distribution with a cumulative table from a bare density.
///
/// Unbounded ends are cut where the remaining tail mass drops below the
/// default tail epsilon. Fails with `NegativeDensity` if the function is
/// negative at a sample point and `NonNormalized` if its mass is off by more
/// than `tolerance`.
pub fn cdf_from_density(density: DensityFunction, tolerance: f64) -> Result<Distribution> {
    let (a, b) = density.support;
    if !(a < b) || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidParameter(format!("support [{a}, {b}]")));
    }
    let f = |x: f64| (density.pdf)(x);
    let opts = QuadratureOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-12);
    let mass = integrate_with_breakpoints(
        |x| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        &[a, b],
        opts,
    )?
    .value;
    if (mass - 1.0).abs() > tolerance {
        return Err(Error::NonNormalized { mass, tolerance });
    }
    let eps = tolerances::TAIL;
    let anchor = if a.is_finite() && b.is_finite() {
        0.5 * (a + b)
    } else if a.is_finite() {
        a
    } else if b.is_finite() {
        b
    } else {
        0.0
    };
    let tail_above = |x: f64| integrate_with_breakpoints(f, &[x, b], opts).map(|i| i.value).unwrap_or(0.0);
    let tail_below = |x: f64| integrate_with_breakpoints(f, &[a, x], opts).map(|i| i.value).unwrap_or(0.0);
    let hi = if b.is_finite() { b } else { cut(anchor, 1.0, |x| tail_above(x) <= eps) };
    let lo = if a.is_finite() { a } else { cut(anchor, -1.0, |x| tail_below(x) <= eps) };
    let n = 128;
    let nodes: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    for w in nodes.windows(2) {
        for i in 0..8 {
            let x = w[0] + (w[1] - w[0]) * i as f64 / 8.0;
            let v = f(x);
            if v < 0.0 {
                return Err(Error::NegativeDensity { at: x, value: v });
            }
        }
    }
    let mut table = TabulatedDensity {
        density,
        nodes,
        cumulative: Vec::new(),
        norm: 1.0,
    };
    let mut cumulative = vec![0.0];
    for j in 0..n {
        let s = table.segment(table.nodes[j], table.nodes[j + 1]);
        cumulative.push(cumulative[j] + s);
    }
    let total = cumulative[n];
    table.norm = total;
    table.cumulative = cumulative.into_iter().map(|c| c / total).collect();
    Distribution::custom(Arc::new(table))
}

/// Walks from `anchor` in direction `dir` with doubling steps until `done`
/// holds, then bisects to the crossing.
fn cut<P: Fn(f64) -> bool>(anchor: f64, dir: f64, done: P) -> f64 {
    let mut step = 1.0;
    let mut inner = anchor;
    let mut outer = anchor + dir * step;
    while !done(outer) {
        inner = outer;
        step *= 2.0;
        outer = anchor + dir * step;
        if !outer.is_finite() || step > 1e300 {
            return outer;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (inner + outer);
        if done(mid) {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    outer
}

/// Outcome of a first-order stochastic dominance check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FsdReport {
    /// `F_A >= F_B` at every grid point, up to the slack.
    pub dominates: bool,
    /// `max (F_B - F_A)^+` over the grid.
    pub max_violation: f64,
}

/// Tests `F_A(t) >= F_B(t) - slack` on `grid`, i.e. that B dominates A to
/// first order.
pub fn check_fsd(a: &Distribution, b: &Distribution, grid: &[f64]) -> FsdReport {
    check_fsd_with_slack(a, b, grid, tolerances::FSD)
}

pub fn check_fsd_with_slack(a: &Distribution, b: &Distribution, grid: &[f64], slack: f64) -> FsdReport {
    let max_violation = grid
        .iter()
        .map(|t| (b.cdf(*t) - a.cdf(*t)).max(0.0))
        .fold(0.0, f64::max);
    FsdReport {
        dominates: max_violation <= slack,
        max_violation,
    }
}

/// Evenly spaced grid covering both supports, for [`check_fsd`].
pub fn joint_grid(a: &Distribution, b: &Distribution, points: usize) -> Vec<f64> {
    let (a0, a1) = a.support();
    let (b0, b1) = b.support();
    let (lo, hi) = (a0.min(b0), a1.max(b1));
    let n = points.max(2);
    let mut g: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    g.extend(a.panel_points(64).into_iter().chain(b.panel_points(64)).filter(|x| x.is_finite()));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_cdf_is_identity() {
        let d = Distribution::uniform(0.0, 1.0).unwrap();
        for x in [0.0, 0.1, 0.37, 0.9, 1.0] {
            assert_eq!(d.cdf(x), x);
        }
    }

    #[test]
    fn exponential_cdf_matches_quadrature() {
        let d = Distribution::exponential(1.0).unwrap();
        let oracle = crate::quadrature::integrate(|x| (-x).exp(), 0.0, 1.0, Default::default()).unwrap();
        // Truncation renormalizes by 1 - 1e-8.
        assert_relative_eq!(d.cdf(1.0), oracle.value, epsilon = 2e-8);
        assert_relative_eq!(d.untruncated().cdf(1.0), 0.632_120_558_828_557_7, epsilon = 1e-15);
    }

    #[test]
    fn function_density_tabulates() {
        let d = cdf_from_density(DensityFunction::new((0.0, f64::INFINITY), |x: f64| (-x).exp()), 1e-8).unwrap();
        assert_relative_eq!(d.cdf(1.0), 1.0 - (-1f64).exp(), epsilon = 1e-7);
        let x = d.quantile(0.5).unwrap();
        assert_relative_eq!(x, 2f64.ln(), epsilon = 1e-7);
        let (lo, hi) = d.support();
        assert_eq!(lo, 0.0);
        assert!(hi > 17.0 && hi < 20.0);
    }

    #[test]
    fn function_density_errors() {
        let half = DensityFunction::new((0.0, 1.0), |_| 0.5);
        assert!(matches!(cdf_from_density(half, 1e-8), Err(Error::NonNormalized { .. })));
        let neg = DensityFunction::new((0.0, 1.0), |x| if x < 0.5 { -1.0 } else { 3.0 });
        assert!(matches!(cdf_from_density(neg, 1e-8), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn triangle_grid_median() {
        let d = Distribution::from_grid(GridSpec::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0, 0.0])).unwrap();
        assert_relative_eq!(d.cdf(0.5), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn grid_mass_is_checked() {
        let r = Distribution::from_grid(GridSpec::new(vec![0.0, 1.0], vec![1.0, 1.2]));
        assert!(matches!(r, Err(Error::NonNormalized { .. })));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(Distribution::uniform(0.0, 2.0).unwrap().quantile(0.25).unwrap(), 0.5);
        let e = Distribution::exponential(2.0).unwrap().untruncated();
        let q = e.quantile(0.5).unwrap();
        let bisect = {
            let (mut a, mut b) = (0.0f64, 10.0f64);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if 1.0 - (-2.0 * m).exp() < 0.5 {
                    a = m
                } else {
                    b = m
                }
            }
            b
        };
        assert_relative_eq!(q, bisect, epsilon = 1e-14);
        assert_relative_eq!(q, 0.346_573_590_279_972_6, epsilon = 1e-14);
        for d in [
            Distribution::uniform(-1.0, 3.0).unwrap(),
            Distribution::normal(0.0, 1.0).unwrap(),
            Distribution::exponential(1.0).unwrap(),
        ] {
            assert_eq!(d.quantile(0.0).unwrap(), d.support().0);
        }
        assert!(matches!(
            Distribution::uniform(0.0, 1.0).unwrap().quantile(1.5),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn expectation_examples() {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        assert_relative_eq!(u.expectation(|x| x).unwrap(), 0.5, epsilon = 1e-14);
        let ln = Distribution::lognormal(0.0, 0.2).unwrap().untruncated();
        assert_relative_eq!(ln.expectation(|x| x).unwrap(), 0.02f64.exp(), epsilon = 1e-10);
        for d in [u, ln, Distribution::normal(1.0, 3.0).unwrap()] {
            assert_relative_eq!(d.expectation(|_| 1.0).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn fsd_examples() {
        let u01 = Distribution::uniform(0.0, 1.0).unwrap();
        let shifted = Distribution::uniform(0.5, 1.5).unwrap();
        let narrow = Distribution::uniform(0.0, 0.5).unwrap();
        let grid = joint_grid(&u01, &shifted, 201);
        assert!(check_fsd(&u01, &shifted, &grid).dominates);
        let r = check_fsd(&u01, &u01, &grid);
        assert!(r.dominates && r.max_violation == 0.0);
        let r = check_fsd(&u01, &narrow, &joint_grid(&u01, &narrow, 201));
        assert!(!r.dominates);
        assert_relative_eq!(r.max_violation, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn affine_moments_are_exact() {
        let d = Distribution::lognormal(0.1, 0.4).unwrap();
        let (m, v) = d.mean_variance().unwrap();
        let (m2, v2) = d.affine(3.0, 7.0).unwrap().mean_variance().unwrap();
        assert_eq!(m2, 3.0 * m + 7.0);
        assert_eq!(v2, 9.0 * v);
    }

    #[test]
    fn mixture_quantile_inverts() {
        let m = Distribution::mixture(vec![
            (0.3, Distribution::normal(-2.0, 0.5).unwrap()),
            (0.7, Distribution::normal(1.0, 1.0).unwrap()),
        ])
        .unwrap();
        for i in 1..20 {
            let u = i as f64 / 20.0;
            assert_relative_eq!(m.cdf(m.quantile(u).unwrap()), u, epsilon = 1e-12);
        }
        assert_eq!(m.count_modes(1e-6), 2);
        assert_eq!(Distribution::normal(0.0, 1.0).unwrap().count_modes(1e-6), 1);
    }

    #[test]
    fn truncation_reports_tail_mass() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        assert_relative_eq!(d.tail_mass(), 2e-8, epsilon = 1e-15);
        assert_eq!(d.cdf(d.support().1), 1.0);
        assert!(!d.untruncated().is_truncated());
    }
}
