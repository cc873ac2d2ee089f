//! Differentially private estimation of Gaussian-copula correlation matrices
//! from median-quadrant count statistics.
//!
//! The pipeline has three stages:
//!
//! 1. **Coarsen** ([`quadrant`]): raw data are reduced to the counts
//!    `t_jj'` of records lying above the medians of both variables in a
//!    pair, with a pre-committed lexicographic tie-break so the per-pair
//!    l1-sensitivity is exactly 1.
//! 2. **Privatize** ([`mechanism`]): each count receives integer noise from
//!    the geometric mechanism, or from one of three range-preserving
//!    variants (TGM, BTGM, RGM) when downstream estimation needs counts in
//!    `[0, n/2]`. The total budget splits evenly over the `p(p-1)/2` pairs.
//! 3. **Estimate** ([`estimate`]): the distribution of a quadrant count
//!    given the latent correlation is noncentral hypergeometric
//!    ([`likelihood`]), which yields a noise-naive MLE (estimating equation
//!    plus nearest-correlation projection) and a noise-aware Bayesian
//!    posterior (composite marginal likelihood under the geometric
//!    mechanism, LKJ(1) prior) with credible intervals.
//!
//! [`sim`] and [`harness`] generate synthetic copula data and run replicated
//! accuracy/coverage experiments; [`cli`] wires everything into commands.

pub mod cli;
pub mod correlation;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod likelihood;
pub mod mechanism;
pub mod quadrant;
pub mod sim;

pub use error::{Error, Result};
