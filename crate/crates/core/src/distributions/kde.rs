//! Gaussian kernel density estimation.

use rayon::prelude::*;

use super::{Distribution, GridSpec};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.06 * sd * n^(-1/5)`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct KdeEstimate {
    pub distribution: Distribution,
    pub bandwidth: f64,
    /// Set when the samples have no spread; the estimate is then a narrow
    /// bump around their common value.
    pub degenerate: bool,
}

/// Smooths `samples` with a Gaussian kernel, then tabulates the estimate on
/// `[min - 3h, max + 3h]` and renormalizes it there.
pub fn estimate_density_from_samples(samples: &[f64], bandwidth: Bandwidth) -> Result<KdeEstimate> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n,
            need: MIN_SAMPLES,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let degenerate = !(sd > 1e-12 * (1.0 + mean.abs()));
    let h = match bandwidth {
        Bandwidth::Fixed(h) if !(h > 0.0 && h.is_finite()) => {
            return Err(Error::InvalidParameter(format!("bandwidth {h}")));
        }
        Bandwidth::Fixed(h) => h,
        Bandwidth::Silverman if degenerate => 1e-3 * (1.0 + mean.abs()),
        Bandwidth::Silverman => 1.06 * sd * (n as f64).powf(-0.2),
    };
    let (lo, hi) = (xs[0] - 3.0 * h, xs[n - 1] + 3.0 * h);
    let nodes_count = (((hi - lo) / (h / 8.0)).ceil() as usize).clamp(257, 16_385);
    let nodes: Vec<f64> = (0..nodes_count)
        .map(|i| lo + (hi - lo) * i as f64 / (nodes_count - 1) as f64)
        .collect();
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values: Vec<f64> = nodes
        .par_iter()
        .map(|&x| {
            let a = xs.partition_point(|s| *s < x - 8.0 * h);
            let b = xs.partition_point(|s| *s <= x + 8.0 * h);
            xs[a..b]
                .iter()
                .map(|s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let distribution = Distribution::from_grid_normalized(GridSpec::new(nodes, values))?;
    if degenerate {
        log::warn!("samples have zero spread; returning a near-delta estimate");
    }
    Ok(KdeEstimate {
        distribution,
        bandwidth: h,
        degenerate,
    })
}
