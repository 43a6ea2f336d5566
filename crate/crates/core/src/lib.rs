//! Valuation of a single-step stochastic cash flow by replicating its
//! distribution with a continuum of Arrow–Debreu securities priced off a
//! benchmark's call-price curve.
//!
//! The pipeline: fit a call curve to quotes ([`option_surface`]), read off
//! the state price density `q = C''`, couple the cash-flow distribution to the
//! benchmark's by the quantile map `K = F₂⁻¹ ∘ F₁` ([`binding`]), and
//! integrate ([`valuation`]).

pub mod binding;
pub mod distributions;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod option_surface;
pub mod portfolio;
pub mod quadrature;
pub mod roots;
pub mod valuation;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/call_curves.md")]
    mod call_curves {}
    #[doc = include_str!("../../../book/src/portfolios.md")]
    mod portfolios {}
    #[doc = include_str!("../../../book/src/binding.md")]
    mod binding {}
    #[doc = include_str!("../../../book/src/valuation.md")]
    mod valuation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
