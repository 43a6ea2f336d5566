//! Densities tabulated on a grid, interpolated linearly or by a monotone
//! (Fritsch–Carlson) cubic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::monotone_inverse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    #[default]
    MonotoneCubic,
}

/// Raw grid data: strictly increasing abscissae and nonnegative densities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
}

impl GridSpec {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            nodes,
            values,
            interpolation: Interpolation::default(),
        }
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} nodes but {} values",
                self.nodes.len(),
                self.values.len()
            )));
        }
        if self.nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if let Some(w) = self.nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(format!("nodes not strictly increasing at {}", w[1])));
        }
        if self.nodes.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite entry".into()));
        }
        if let Some((x, v)) = self.nodes.iter().zip(&self.values).find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeDensity { at: *x, value: *v });
        }
        Ok(())
    }

    /// Trapezoidal mass of the node values.
    pub fn trapezoid_mass(&self) -> f64 {
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// A validated, unit-mass grid density with a precomputed CDF table.
#[derive(Debug, Clone)]
pub struct GridDensity {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    cumulative: Vec<f64>,
    interpolation: Interpolation,
}

impl GridDensity {
    /// Builds the interpolant and rescales it to unit mass.
    pub(crate) fn new(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let slopes = match spec.interpolation {
            Interpolation::Linear => vec![0.0; spec.nodes.len()],
            Interpolation::MonotoneCubic => pchip_slopes(&spec.nodes, &spec.values),
        };
        let mut grid = GridDensity {
            nodes: spec.nodes.clone(),
            values: spec.values.clone(),
            slopes,
            cumulative: Vec::new(),
            interpolation: spec.interpolation,
        };
        let mut cumulative = Vec::with_capacity(grid.nodes.len());
        cumulative.push(0.0);
        for j in 0..grid.nodes.len() - 1 {
            let mass = grid.partial(j, 1.0);
            cumulative.push(cumulative[j] + mass);
        }
        let total = *cumulative.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(Error::InvalidGrid("grid carries no mass".into()));
        }
        for v in grid.values.iter_mut().chain(grid.slopes.iter_mut()) {
            *v /= total;
        }
        for c in cumulative.iter_mut() {
            *c /= total;
        }
        grid.cumulative = cumulative;
        Ok(grid)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let j = self.nodes.partition_point(|n| *n <= x);
        Some(j.saturating_sub(1).min(self.nodes.len() - 2))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let Some(j) = self.locate(x) else { return 0.0 };
        let h = self.nodes[j + 1] - self.nodes[j];
        let t = (x - self.nodes[j]) / h;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let v = match self.interpolation {
            Interpolation::Linear => y0 + (y1 - y0) * t,
            Interpolation::MonotoneCubic => {
                let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                    + h * d0 * (t3 - 2.0 * t2 + t)
                    + y1 * (-2.0 * t3 + 3.0 * t2)
                    + h * d1 * (t3 - t2)
            }
        };
        v.max(0.0)
    }

    /// Mass of interval `j` from its left node up to fraction `t` of its width.
    fn partial(&self, j: usize, t: f64) -> f64 {
        let h = self.nodes[j + 1] - self.nodes[j];
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        match self.interpolation {
            Interpolation::Linear => h * (y0 * t + 0.5 * (y1 - y0) * t * t),
            Interpolation::MonotoneCubic => {
                let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                let t4 = t3 * t;
                h * (y0 * (0.5 * t4 - t3 + t)
                    + h * d0 * (0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2)
                    + y1 * (-0.5 * t4 + t3)
                    + h * d1 * (0.25 * t4 - t3 / 3.0))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let j = self.locate(x).expect("inside support");
        let t = (x - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        (self.cumulative[j] + self.partial(j, t)).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= 0.0 {
            return lo;
        }
        if u >= 1.0 {
            // Largest node that still has mass to its left.
            let j = self.cumulative.partition_point(|c| *c < 1.0);
            return self.nodes[j.min(self.nodes.len() - 1)];
        }
        let j = self.cumulative.partition_point(|c| *c < u).clamp(1, self.nodes.len() - 1);
        monotone_inverse(
            |x| self.cdf(x),
            |x| self.pdf(x),
            u,
            self.nodes[j - 1],
            self.nodes[j],
            1e-14,
        )
        .unwrap_or(hi)
    }
}

/// Fritsch–Carlson slopes with the three-point edge rule used by SciPy's
/// `PchipInterpolator`.
pub(crate) fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    let edge = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = edge(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}
