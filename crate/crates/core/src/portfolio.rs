//! Static portfolios of Arrow–Debreu securities as signed measures on the
//! strike axis: a density of position weights plus point masses.

use std::fmt;
use std::sync::Arc;

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};

/// Position weight per unit strike.
pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Points used to sample function densities for output.
const EXPORT_POINTS: usize = 257;

/// One absolutely continuous piece of a portfolio.
#[derive(Clone)]
pub enum DensityPart {
    /// Piecewise-linear weights on strictly increasing nodes, zero outside.
    Grid { nodes: Vec<f64>, values: Vec<f64> },
    /// Weights given by a function on `domain`, zero outside. `breakpoints`
    /// are kinks the quadrature should respect.
    Function {
        weight: WeightFn,
        domain: (f64, f64),
        breakpoints: Vec<f64>,
    },
}

impl fmt::Debug for DensityPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityPart::Grid { nodes, values } => f
                .debug_struct("Grid")
                .field("nodes", &nodes.len())
                .field("range", &(nodes[0], nodes[nodes.len() - 1]))
                .field("values", &values.len())
                .finish(),
            DensityPart::Function { domain, breakpoints, .. } => f
                .debug_struct("Function")
                .field("domain", domain)
                .field("breakpoints", &breakpoints.len())
                .finish(),
        }
    }
}

impl DensityPart {
    fn domain(&self) -> (f64, f64) {
        match self {
            DensityPart::Grid { nodes, .. } => (nodes[0], nodes[nodes.len() - 1]),
            DensityPart::Function { domain, .. } => *domain,
        }
    }

    fn eval(&self, k: f64) -> f64 {
        let (lo, hi) = self.domain();
        if !(k >= lo && k <= hi) {
            return 0.0;
        }
        match self {
            DensityPart::Grid { nodes, values } => {
                let j = nodes.partition_point(|x| *x <= k).clamp(1, nodes.len() - 1);
                let (x0, x1) = (nodes[j - 1], nodes[j]);
                let s = (k - x0) / (x1 - x0);
                values[j - 1] + s * (values[j] - values[j - 1])
            }
            DensityPart::Function { weight, .. } => weight(k),
        }
    }

    fn points(&self) -> Vec<f64> {
        match self {
            DensityPart::Grid { nodes, .. } => nodes.clone(),
            DensityPart::Function { domain, breakpoints, .. } => {
                let mut pts = vec![domain.0, domain.1];
                pts.extend(breakpoints.iter().copied().filter(|x| *x > domain.0 && *x < domain.1));
                pts
            }
        }
    }
}

/// `ρ = Σ c_i w_i(K) dK + Σ a_j δ_{k_j}`.
#[derive(Debug, Clone, Default)]
pub struct SignedMeasure {
    terms: Vec<(f64, DensityPart)>,
    atoms: Vec<(f64, f64)>,
}

impl SignedMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Linear interpolation of `values` on strictly increasing `nodes`.
    pub fn from_grid(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} nodes and {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("nodes must be finite and strictly increasing".into()));
        }
        Ok(Self {
            terms: vec![(1.0, DensityPart::Grid { nodes, values })],
            atoms: Vec::new(),
        })
    }

    pub fn from_function<F>(domain: (f64, f64), weight: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_function_with_breakpoints(domain, Vec::new(), weight)
    }

    pub fn from_function_with_breakpoints<F>(domain: (f64, f64), breakpoints: Vec<f64>, weight: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(domain.1 > domain.0) || domain.0.is_nan() || domain.1.is_nan() {
            return Err(Error::InvalidGrid(format!("empty domain {domain:?}")));
        }
        Ok(Self {
            terms: vec![(
                1.0,
                DensityPart::Function {
                    weight: Arc::new(weight),
                    domain,
                    breakpoints,
                },
            )],
            atoms: Vec::new(),
        })
    }

    pub fn atom(location: f64, weight: f64) -> Self {
        Self::zero().with_atom(location, weight)
    }

    /// Adds `weight` at `location`, merging with an atom at exactly the same
    /// place. Atoms that cancel are dropped.
    pub fn with_atom(mut self, location: f64, weight: f64) -> Self {
        self.push_atom(location, weight);
        self
    }

    fn push_atom(&mut self, location: f64, weight: f64) {
        match self.atoms.iter().position(|(k, _)| *k == location) {
            Some(i) => {
                self.atoms[i].1 += weight;
                if self.atoms[i].1 == 0.0 {
                    self.atoms.remove(i);
                }
            }
            None if weight != 0.0 => {
                let at = self.atoms.partition_point(|(k, _)| *k < location);
                self.atoms.insert(at, (location, weight));
            }
            None => {}
        }
    }

    /// Atoms sorted by location.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn has_density(&self) -> bool {
        !self.terms.is_empty()
    }

    /// The density `dρ/dK` at `k`, excluding atoms.
    pub fn density(&self, k: f64) -> f64 {
        self.terms.iter().map(|(c, part)| c * part.eval(k)).sum()
    }

    /// Smallest interval holding the density part and every atom.
    pub fn domain(&self) -> Option<(f64, f64)> {
        let spans = self
            .terms
            .iter()
            .map(|(_, p)| p.domain())
            .chain(self.atoms.iter().map(|(k, _)| (*k, *k)));
        spans.reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    fn density_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.terms.iter().flat_map(|(_, p)| p.points()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.integrate_with(f, QuadratureOptions::default())
    }

    /// `∫ f dρ`: quadrature over the density part plus `f` at each atom.
    pub fn integrate_with<F: Fn(f64) -> f64>(&self, f: F, opts: QuadratureOptions) -> Result<f64> {
        let point_part: f64 = self.atoms.iter().map(|(k, w)| w * f(*k)).sum();
        if self.terms.is_empty() {
            return Ok(point_part);
        }
        let g = |k: f64| {
            let w = self.density(k);
            if w == 0.0 {
                0.0
            } else {
                w * f(k)
            }
        };
        Ok(integrate_with_breakpoints(g, &self.density_points(), opts)?.value + point_part)
    }

    /// `|ρ| = ∫ |w| dK + Σ |a_j|`.
    pub fn total_variation(&self) -> Result<f64> {
        let point_part: f64 = self.atoms.iter().map(|(_, w)| w.abs()).sum();
        if self.terms.is_empty() {
            return Ok(point_part);
        }
        let g = |k: f64| self.density(k).abs();
        let opts = QuadratureOptions::default();
        Ok(integrate_with_breakpoints(g, &self.density_points(), opts)?.value + point_part)
    }

    /// `c1 ρ1 + c2 ρ2`. Grid parts on identical nodes are added node by
    /// node; other parts are kept as separate terms.
    pub fn combine(&self, c1: f64, other: &SignedMeasure, c2: f64) -> SignedMeasure {
        let mut out = SignedMeasure::zero();
        for (c, part) in self
            .terms
            .iter()
            .map(|(c, p)| (c * c1, p))
            .chain(other.terms.iter().map(|(c, p)| (c * c2, p)))
        {
            if c == 0.0 {
                continue;
            }
            out.push_term(c, part);
        }
        for (k, w) in &self.atoms {
            out.push_atom(*k, c1 * w);
        }
        for (k, w) in &other.atoms {
            out.push_atom(*k, c2 * w);
        }
        out
    }

    fn push_term(&mut self, c: f64, part: &DensityPart) {
        if let DensityPart::Grid { nodes, values } = part {
            for (c0, existing) in self.terms.iter_mut() {
                if let DensityPart::Grid {
                    nodes: n0,
                    values: v0,
                } = existing
                {
                    if n0 == nodes {
                        for (a, b) in v0.iter_mut().zip(values) {
                            *a = *c0 * *a + c * b;
                        }
                        *c0 = 1.0;
                        return;
                    }
                }
            }
        }
        self.terms.push((c, part.clone()));
    }

    pub fn scaled(&self, c: f64) -> SignedMeasure {
        self.combine(c, &SignedMeasure::zero(), 0.0)
    }

    /// `(K, w(K))` samples of the density part: grid nodes, function
    /// breakpoints, and an even grid over each function domain.
    pub fn density_samples(&self) -> Vec<(f64, f64)> {
        let mut ks = self.density_points();
        for (_, part) in &self.terms {
            if let DensityPart::Function { domain: (lo, hi), .. } = part {
                if lo.is_finite() && hi.is_finite() {
                    let n = EXPORT_POINTS - 1;
                    ks.extend((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
                }
            }
        }
        ks.retain(|k| k.is_finite());
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        ks.into_iter().map(|k| (k, self.density(k))).collect()
    }
}

impl Serialize for SignedMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let ac: Vec<[f64; 2]> = self.density_samples().into_iter().map(|(k, w)| [k, w]).collect();
        let atoms: Vec<[f64; 2]> = self.atoms.iter().map(|(k, w)| [*k, *w]).collect();
        let mut s = serializer.serialize_struct("SignedMeasure", 2)?;
        s.serialize_field("ac", &ac)?;
        s.serialize_field("atoms", &atoms)?;
        s.end()
    }
}
