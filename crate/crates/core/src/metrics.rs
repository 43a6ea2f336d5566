//! Distances between a physical law `ℙ` and a risk-neutral law `ℚ`: the
//! relative entropy `H(ℙ|ℚ) = ∫ |log dℙ/dℚ| dℙ` and the symmetric distance
//! `d(ℙ,ℚ) = ∫ |log dℙ/dℚ| (1/φ_p + 1/φ_q)⁻¹ dm`.
//!
//! Both are computed on the untruncated densities, in log space.

use serde::Serialize;

use crate::distributions::{tolerances, Distribution};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};

/// Mass either law may put outside the common support.
const OUTSIDE_MASS: f64 = 1e-10;

/// Panels per law seeding the quadrature.
const PANELS: usize = 64;

/// Two equivalent laws on a common support.
#[derive(Debug, Clone)]
pub struct MeasurePair {
    p: Distribution,
    q: Distribution,
    common_support: (f64, f64),
}

impl MeasurePair {
    /// Drops any truncation and checks that each law lives on the other's
    /// support.
    pub fn new(p: &Distribution, q: &Distribution) -> Result<Self> {
        let (p, q) = (p.untruncated(), q.untruncated());
        let (pa, pb) = p.support();
        let (qa, qb) = q.support();
        let (lo, hi) = (pa.max(qa), pb.min(qb));
        if !(lo < hi) {
            return Err(Error::NotEquivalent(format!(
                "supports [{pa}, {pb}] and [{qa}, {qb}] do not overlap"
            )));
        }
        for (name, d) in [("P", &p), ("Q", &q)] {
            let outside = d.cdf(lo) + d.sf(hi);
            if outside > OUTSIDE_MASS {
                return Err(Error::NotEquivalent(format!(
                    "{name} puts mass {outside} outside [{lo}, {hi}]"
                )));
            }
        }
        let pair = Self {
            p,
            q,
            common_support: (lo, hi),
        };
        let floor = tolerances::DENSITY_FLOOR;
        for x in pair.points() {
            if x <= lo || x >= hi {
                continue;
            }
            let (fp, fq) = (pair.p.pdf(x), pair.q.pdf(x));
            if (fp > floor && fq == 0.0) || (fq > floor && fp == 0.0) {
                return Err(Error::NotEquivalent(format!("density ratio degenerates at {x}")));
            }
        }
        Ok(pair)
    }

    pub fn p(&self) -> &Distribution {
        &self.p
    }

    pub fn q(&self) -> &Distribution {
        &self.q
    }

    pub fn common_support(&self) -> (f64, f64) {
        self.common_support
    }

    /// The pair with roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q.clone(),
            q: self.p.clone(),
            common_support: self.common_support,
        }
    }

    /// Support ends and both laws' panel points, sorted. The set does not
    /// depend on the order of the pair.
    fn points(&self) -> Vec<f64> {
        let (lo, hi) = self.common_support;
        let mut pts = vec![lo, hi];
        pts.extend(self.p.panel_points(PANELS));
        pts.extend(self.q.panel_points(PANELS));
        pts.retain(|x| *x >= lo && *x <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn log_densities(&self, x: f64) -> (f64, f64) {
        let tiny = f64::MIN_POSITIVE.ln();
        (self.p.ln_pdf(x).max(tiny), self.q.ln_pdf(x).max(tiny))
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let opts = QuadratureOptions::default().with_abs_tol(1e-14).with_rel_tol(1e-11);
        Ok(integrate_with_breakpoints(f, &self.points(), opts)?.value)
    }
}

/// Which log ratio the relative entropy integrates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyKind {
    /// `∫ |log dℙ/dℚ| dℙ`.
    #[default]
    Absolute,
    /// The usual Kullback–Leibler divergence `∫ log dℙ/dℚ dℙ`.
    Standard,
}

pub fn relative_entropy(pair: &MeasurePair) -> Result<f64> {
    relative_entropy_with(pair, EntropyKind::Absolute)
}

pub fn relative_entropy_with(pair: &MeasurePair, kind: EntropyKind) -> Result<f64> {
    let h = pair.integrate(|x| {
        let (lp, lq) = pair.log_densities(x);
        let r = lp - lq;
        let r = match kind {
            EntropyKind::Absolute => r.abs(),
            EntropyKind::Standard => r,
        };
        if r == 0.0 {
            0.0
        } else {
            lp.exp() * r
        }
    })?;
    // Quadrature noise can leave a tiny negative value on equal laws.
    Ok(h.max(0.0))
}

/// `|log a - log b| · (1/a + 1/b)⁻¹`, written in the sorted logs so that it
/// is symmetric bit for bit.
fn harmonic_integrand(la: f64, lb: f64) -> f64 {
    let (lo, hi) = if la <= lb { (la, lb) } else { (lb, la) };
    let gap = hi - lo;
    if gap == 0.0 {
        return 0.0;
    }
    gap * lo.exp() / (1.0 + (-gap).exp())
}

pub fn symmetric_distance(pair: &MeasurePair) -> Result<f64> {
    pair.integrate(|x| {
        let (lp, lq) = pair.log_densities(x);
        harmonic_integrand(lp, lq)
    })
}

/// `∫ |log dℙ/dℚ| min(φ_p, φ_q) dm`, an upper bound for the symmetric
/// distance.
pub fn min_weight_distance(pair: &MeasurePair) -> Result<f64> {
    pair.integrate(|x| {
        let (lp, lq) = pair.log_densities(x);
        let gap = (lp - lq).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap * lp.min(lq).exp()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub relative_entropy: f64,
    pub reverse_relative_entropy: f64,
    pub standard_kl: f64,
    pub symmetric_distance: f64,
    pub common_support: (f64, f64),
}

pub fn metrics_report(pair: &MeasurePair) -> Result<MetricsReport> {
    Ok(MetricsReport {
        relative_entropy: relative_entropy(pair)?,
        reverse_relative_entropy: relative_entropy(&pair.swapped())?,
        standard_kl: relative_entropy_with(pair, EntropyKind::Standard)?,
        symmetric_distance: symmetric_distance(pair)?,
        common_support: pair.common_support(),
    })
}
