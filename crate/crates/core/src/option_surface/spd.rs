//! State price densities and the diagnostics read off them.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use super::{tolerances, CallCurve};
use crate::distributions::{generic_quantile, Distribution, UnivariateDensity};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};

#[derive(Debug, Clone)]
enum Source {
    Curve(Arc<CallCurve>),
    /// `mass` times the density of `dist`.
    Measure {
        dist: Distribution,
        mass: f64,
        /// Where `dist` carries all but 1e-12 of its mass.
        span: (f64, f64),
        panels: Vec<f64>,
    },
}

/// Prices of Arrow–Debreu securities per unit strike, `q(K)`, plus an
/// optional point mass at zero strike (the default state).
#[derive(Debug, Clone)]
pub struct StatePriceDensity {
    source: Source,
    zero_atom: f64,
    bond_price: f64,
}

impl StatePriceDensity {
    /// `q = mass * pdf`, for analytic or test densities. The distribution is
    /// used without tail truncation.
    pub fn from_measure(dist: &Distribution, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("state price mass {mass}")));
        }
        let fine = dist.with_tail_epsilon(1e-12)?;
        let span = fine.support();
        let panels = fine.panel_points(32);
        Ok(Self {
            source: Source::Measure {
                dist: dist.untruncated(),
                mass,
                span,
                panels,
            },
            zero_atom: 0.0,
            bond_price: mass,
        })
    }

    /// Adds a point mass at zero strike; the bond price grows by `atom`.
    pub fn with_zero_atom(mut self, atom: f64) -> Result<Self> {
        if !(atom >= 0.0 && atom.is_finite()) {
            return Err(Error::NegativeMass { value: atom });
        }
        self.bond_price += atom - self.zero_atom;
        self.zero_atom = atom;
        Ok(self)
    }

    pub fn curve(&self) -> Option<&CallCurve> {
        match &self.source {
            Source::Curve(c) => Some(c),
            Source::Measure { .. } => None,
        }
    }

    pub fn zero_atom(&self) -> f64 {
        self.zero_atom
    }

    /// The bond price the density is expected to reproduce: the curve
    /// context's `B` for fitted curves, total mass for measures.
    pub fn bond_price(&self) -> f64 {
        self.bond_price
    }

    pub fn q(&self, k: f64) -> f64 {
        if k < 0.0 {
            return 0.0;
        }
        match &self.source {
            Source::Curve(c) => c.second_derivative(k),
            Source::Measure { dist, mass, .. } => mass * dist.pdf(k),
        }
    }

    pub fn ln_q(&self, k: f64) -> f64 {
        if k < 0.0 {
            return f64::NEG_INFINITY;
        }
        match &self.source {
            Source::Curve(c) => c.second_derivative(k).ln(),
            Source::Measure { dist, mass, .. } => mass.ln() + dist.ln_pdf(k),
        }
    }

    /// `∫_a^b q`, excluding the zero atom. Exact, from slopes or CDFs.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        match &self.source {
            Source::Curve(c) => c.density_mass(a, b),
            Source::Measure { dist, mass, .. } => {
                let fa = dist.cdf(a);
                let p = if fa < 0.5 {
                    dist.cdf(b) - fa
                } else {
                    dist.sf(a) - dist.sf(b)
                };
                mass * p.max(0.0)
            }
        }
    }

    /// Price of a digital call struck at `k >= 0`: `∫_k^∞ q`.
    pub fn digital(&self, k: f64) -> f64 {
        self.mass(k.max(0.0), f64::INFINITY)
    }

    /// Strike interval carrying the density.
    pub fn domain(&self) -> (f64, f64) {
        match &self.source {
            Source::Curve(c) => c.domain(),
            Source::Measure { span, .. } => (span.0.max(0.0), span.1),
        }
    }

    /// Strikes where `q` has kinks, jumps, or a change of scale.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.source {
            Source::Curve(c) => c.breakpoints().to_vec(),
            Source::Measure { panels, .. } => panels.iter().copied().filter(|x| x.is_finite()).collect(),
        }
    }

    /// Integration points covering `[0, ∞)`.
    fn cover(&self) -> Vec<f64> {
        let mut pts = vec![0.0];
        pts.extend(self.breakpoints().into_iter().filter(|x| *x > 0.0));
        pts.push(f64::INFINITY);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `∫ f(K) q(K) dK` over `[0, ∞)` by adaptive quadrature.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, opts: QuadratureOptions) -> Result<f64> {
        let g = |k: f64| {
            let q = self.q(k);
            if q == 0.0 {
                0.0
            } else {
                f(k) * q
            }
        };
        Ok(integrate_with_breakpoints(g, &self.cover(), opts)?.value)
    }

    pub fn has_default(&self) -> bool {
        self.zero_atom > 0.0
    }

    /// Writes `K,q` rows on `points` strikes spread over the domain.
    pub fn write_csv<W: Write>(&self, writer: W, points: usize) -> Result<()> {
        let (lo, hi) = self.domain();
        let n = points.max(2);
        let mut ks: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        ks.extend(self.breakpoints().into_iter().filter(|k| *k >= lo && *k <= hi));
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        let rows: Vec<[f64; 2]> = ks.into_iter().map(|k| [k, self.q(k)]).collect();
        crate::io::write_csv(writer, ["K", "q"], &rows)
    }
}

pub fn state_price_density(curve: &CallCurve) -> Result<StatePriceDensity> {
    state_price_density_with(curve, tolerances::SPD_FITTED)
}

/// Reads `q = C''` off a fitted curve. The zero-strike atom `B + C'(0⁺)` is
/// kept only when it exceeds `eps_spd * B`; smaller gaps are fit noise.
pub fn state_price_density_with(curve: &CallCurve, eps_spd: f64) -> Result<StatePriceDensity> {
    let scale = curve.adjusted_quotes().iter().map(|q| q.price).fold(0.0, f64::max)
        / (curve.last_strike() - curve.first_strike()).powi(2);
    let eps_neg = 1e-8 * scale;
    for &k in curve.knots() {
        let (_, _, q) = curve.evaluate(k);
        if q < -eps_neg {
            return Err(Error::NegativeDensity { at: k, value: q });
        }
    }
    let bond = curve.context().bond_price;
    let gap = bond + curve.zero_strike_slope();
    let zero_atom = if gap > eps_spd * bond { gap } else { 0.0 };
    Ok(StatePriceDensity {
        source: Source::Curve(Arc::new(curve.clone())),
        zero_atom,
        bond_price: bond,
    })
}

fn quad_opts() -> QuadratureOptions {
    QuadratureOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-12)
}

/// `∫ q dK + zero_atom`, by quadrature.
pub fn recover_bond(spd: &StatePriceDensity) -> Result<f64> {
    Ok(spd.integrate(|_| 1.0, quad_opts())? + spd.zero_atom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpotRecovery {
    /// `∫ K q(K) dK`.
    pub from_integral: f64,
    /// `C(0⁺)` from the curve's linear extension, when there is a curve.
    pub from_limit: Option<f64>,
}

pub fn recover_spot(spd: &StatePriceDensity, curve: Option<&CallCurve>) -> Result<SpotRecovery> {
    let from_integral = spd.integrate(|k| k, quad_opts())?;
    Ok(SpotRecovery {
        from_integral,
        from_limit: curve.or(spd.curve()).map(|c| c.zero_strike_price()),
    })
}

/// `r̂ = -ln(-C'(0⁺)) / (T - t)`. Overstates the rate when the curve hides a
/// default atom; see [`detect_default_mass`].
pub fn implied_short_rate(curve: &CallCurve) -> Result<f64> {
    let slope = curve.zero_strike_slope();
    if !(-slope > 0.0 && -slope <= 1.0) {
        return Err(Error::SlopeOutOfRange { slope });
    }
    Ok(-(-slope).ln() / curve.context().tau())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefaultMass {
    /// State price of the zero-strike atom, `e^{-r τ} + C'(0⁺)`.
    pub atom_value: f64,
    /// `atom_value / B`.
    pub probability: f64,
}

/// Compares the curve's zero-strike slope with an external rate. A positive
/// gap is state price sitting at `S(T) = 0`.
pub fn detect_default_mass(curve: &CallCurve, r_ext: f64) -> Result<DefaultMass> {
    let ctx = curve.context();
    let atom = (-r_ext * ctx.tau()).exp() + curve.zero_strike_slope();
    if atom < -1e-6 {
        return Err(Error::NegativeMass { value: atom });
    }
    let atom_value = atom.max(0.0);
    Ok(DefaultMass {
        atom_value,
        probability: atom_value / ctx.bond_price,
    })
}

/// `ℚ = q / B` split into its continuous part on `(0, ∞)` and the atom at 0.
#[derive(Debug, Clone)]
pub struct RiskNeutralMeasure {
    /// The continuous part, normalized to unit mass.
    pub distribution: Distribution,
    /// `∫ q / B`, the probability of the continuous part.
    pub continuous_mass: f64,
    pub atom_probability: f64,
    pub defaulted: bool,
}

#[derive(Debug)]
struct CurveDensity {
    curve: Arc<CallCurve>,
    mass: f64,
    floor: f64,
}

impl UnivariateDensity for CurveDensity {
    fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.curve.second_derivative(x) / self.mass
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            ((self.curve.first_derivative(x) - self.floor) / self.mass).clamp(0.0, 1.0)
        }
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn quantile(&self, u: f64) -> f64 {
        generic_quantile(|x| self.cdf(x), |x| self.pdf(x), (self.curve.first_strike(), f64::INFINITY), u)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.curve.breakpoints().to_vec()
    }
}

pub fn risk_neutral_measure(spd: &StatePriceDensity) -> Result<RiskNeutralMeasure> {
    let bond = spd.bond_price();
    let (distribution, mass) = match &spd.source {
        Source::Measure { dist, mass, .. } => (dist.clone(), *mass),
        Source::Curve(curve) => {
            let floor = curve.zero_strike_slope();
            let mass = -floor;
            let density = CurveDensity {
                curve: curve.clone(),
                mass,
                floor,
            };
            (Distribution::custom(Arc::new(density))?, mass)
        }
    };
    Ok(RiskNeutralMeasure {
        distribution,
        continuous_mass: mass / bond,
        atom_probability: spd.zero_atom / bond,
        defaulted: spd.has_default(),
    })
}

/// `∫_K^∞ (x - K) q(x) dx`: the call price implied by the density.
pub fn reconstruct_call_price(spd: &StatePriceDensity, strike: f64) -> Result<f64> {
    let k = strike.max(0.0);
    let mut pts = vec![k];
    pts.extend(spd.breakpoints().into_iter().filter(|x| *x > k));
    pts.push(f64::INFINITY);
    let g = |x: f64| {
        let q = spd.q(x);
        if q == 0.0 {
            0.0
        } else {
            (x - k) * q
        }
    };
    let v = integrate_with_breakpoints(g, &pts, quad_opts())?.value;
    // Below zero strike the payoff gains the atom and the linear part.
    Ok(if strike < 0.0 {
        v + (-strike) * spd.bond_price()
    } else {
        v
    })
}
