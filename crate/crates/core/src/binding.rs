//! The increasing quantile coupling `K = F₂⁻¹ ∘ F₁` that sends cash-flow
//! levels to benchmark strikes while preserving probability.

use std::io::Write;

use crate::distributions::{tolerances, Distribution};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};

/// Interior points at which construction checks that `φ₂ ∘ K` stays
/// positive.
const CHECK_POINTS: usize = 64;

#[derive(Debug, Clone)]
pub struct BindingMap {
    source: Distribution,
    target: Distribution,
}

/// Couples `phi1` (the cash flow) to `phi2` (the benchmark). Fails with
/// `TargetDensityVanishes` if, at an interior check point, `φ₂(K(x))` is
/// below the density floor while `φ₁(x)` is above it.
pub fn build_binding_map(phi1: &Distribution, phi2: &Distribution) -> Result<BindingMap> {
    let bm = BindingMap {
        source: phi1.clone(),
        target: phi2.clone(),
    };
    let floor = tolerances::DENSITY_FLOOR;
    for i in 1..CHECK_POINTS {
        let u = i as f64 / CHECK_POINTS as f64;
        let x = phi1.quantile_unchecked(u);
        let k = bm.map(x);
        if phi1.pdf(x) > floor && phi2.pdf(k) < floor {
            return Err(Error::TargetDensityVanishes { x, k });
        }
    }
    let (lo, _) = phi1.support();
    if lo != 0.0 {
        log::info!("cash-flow support starts at {lo}, not 0; values follow by shift separation");
    }
    Ok(bm)
}

impl BindingMap {
    pub fn source(&self) -> &Distribution {
        &self.source
    }

    pub fn target(&self) -> &Distribution {
        &self.target
    }

    /// `K(x) = F₂⁻¹(F₁(x))`, evaluated through survival functions in the
    /// upper half so both tails keep their relative precision.
    pub fn map(&self, x: f64) -> f64 {
        let u = self.source.cdf(x);
        if u <= 0.5 {
            self.target.quantile_unchecked(u)
        } else {
            self.target.isf_unchecked(self.source.sf(x))
        }
    }

    /// `K⁻¹(y) = F₁⁻¹(F₂(y))`.
    pub fn inverse(&self, y: f64) -> f64 {
        let u = self.target.cdf(y);
        if u <= 0.5 {
            self.source.quantile_unchecked(u)
        } else {
            self.source.isf_unchecked(self.target.sf(y))
        }
    }

    /// `K′(x) = φ₁(x) / φ₂(K(x))`, formed in log space. Infinite where the
    /// target density underflows and the source does not.
    pub fn derivative(&self, x: f64) -> f64 {
        let a = self.source.ln_pdf(x);
        if a == f64::NEG_INFINITY {
            return 0.0;
        }
        (a - self.target.ln_pdf(self.map(x))).exp()
    }

    /// Largest gap between `ℚ([K(x_k), K(x_{k+1})])` and `ℙ([x_k, x_{k+1}])`
    /// over `n` equiprobable source intervals, with both masses computed by
    /// quadrature of the densities.
    pub fn verify_measure_preserving(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidPartition(n));
        }
        let opts = QuadratureOptions::default().with_abs_tol(1e-14).with_rel_tol(1e-12);
        let xs: Vec<f64> = (0..=n)
            .map(|k| self.source.quantile_unchecked(k as f64 / n as f64))
            .collect();
        let mut worst: f64 = 0.0;
        for w in xs.windows(2) {
            let p = mass(&self.source, w[0], w[1], opts)?;
            let q = mass(&self.target, self.map(w[0]), self.map(w[1]), opts)?;
            worst = worst.max((p - q).abs());
        }
        Ok(worst)
    }

    /// Largest relative gap between `K′` and central differences of `K` on
    /// `grid`. Points within a step of the support ends are skipped.
    pub fn derivative_consistency(&self, grid: &[f64]) -> f64 {
        let (lo, hi) = self.source.support();
        let mut worst: f64 = 0.0;
        for &x in grid {
            let h = 1e-5 * (1.0 + x.abs());
            if !(x - h > lo && x + h < hi) {
                continue;
            }
            let fd = (self.map(x + h) - self.map(x - h)) / (2.0 * h);
            let exact = self.derivative(x);
            if exact.is_finite() && exact > 0.0 {
                worst = worst.max((fd - exact).abs() / exact);
            }
        }
        worst
    }

    /// Samples `(x, K, K′)` at `points` equiprobable source levels.
    pub fn samples(&self, points: usize) -> Vec<[f64; 3]> {
        let n = points.max(2) - 1;
        (0..=n)
            .map(|k| {
                let x = self.source.quantile_unchecked(k as f64 / n as f64);
                [x, self.map(x), self.derivative(x)]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W, points: usize) -> Result<()> {
        crate::io::write_csv(writer, ["x", "K", "Kprime"], &self.samples(points))
    }
}

fn mass(d: &Distribution, a: f64, b: f64, opts: QuadratureOptions) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let mut pts = vec![a];
    pts.extend(d.breakpoints().into_iter().filter(|x| *x > a && *x < b));
    pts.push(b);
    Ok(integrate_with_breakpoints(|x| d.pdf(x), &pts, opts)?.value)
}
