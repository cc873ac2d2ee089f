//! Exact distribution of a quadrant count given the copula correlation, and
//! the marginal/composite likelihoods under geometric noise.
//!
//! Conditional on margins fixed at `half_n`, the count follows a noncentral
//! hypergeometric law: `P(T = t | r)` is proportional to
//! `C(half_n, t)^2 * exp(t * eta)` where the natural parameter is
//! `eta = 2 log[(pi + 2 asin r) / (pi - 2 asin r)]`. Everything here runs in
//! log space with precomputed log-binomial tables; the printed formulas
//! overflow for `n` in the hundreds.

use statrs::function::gamma::ln_gamma;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::mechanism::{geom_log_pmf, Mechanism, NoisyCountSet};

/// Correlations are clamped to `|r| <= 1 - R_CLAMP` before evaluating the
/// arcsine link, which is singular at the endpoints.
pub const R_CLAMP: f64 = 1e-9;

/// Quadrant cell probabilities for a latent bivariate normal split at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbabilities {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

/// `p11 = 1/4 + asin(r)/(2 pi)`, with `p00 = p11` and `p10 = p01` by
/// symmetry of the latent normal.
pub fn cell_probs(r: f64) -> Result<CellProbabilities> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::InvalidParam(format!("correlation {r} outside [-1, 1]")));
    }
    let p11 = 0.25 + r.asin() / (2.0 * std::f64::consts::PI);
    let p01 = 0.25 - r.asin() / (2.0 * std::f64::consts::PI);
    Ok(CellProbabilities {
        p11,
        p10: p01,
        p01,
        p00: p11,
    })
}

fn eta_clamped(r: f64) -> f64 {
    let rc = r.clamp(-(1.0 - R_CLAMP), 1.0 - R_CLAMP);
    let a = 2.0 * rc.asin();
    2.0 * ((std::f64::consts::PI + a).ln() - (std::f64::consts::PI - a).ln())
}

/// Natural parameter `eta(r)`, the log odds ratio of the quadrant table.
/// Strictly increasing and antisymmetric; infinite at `|r| = 1`.
pub fn log_odds_ratio(r: f64) -> Result<f64> {
    if r.abs() >= 1.0 {
        return Err(Error::InvalidParam(format!(
            "log odds ratio is infinite at r = {r}"
        )));
    }
    Ok(eta_clamped(r))
}

/// Precomputed `2 log C(half_n, t)` for `t = 0..=half_n`.
#[derive(Debug, Clone)]
pub struct BinomTable {
    half_n: usize,
    log_binom_sq: Vec<f64>,
}

impl BinomTable {
    pub fn new(half_n: usize) -> Self {
        let h = half_n as f64;
        let log_binom_sq = (0..=half_n)
            .map(|t| {
                let t = t as f64;
                2.0 * (ln_gamma(h + 1.0) - ln_gamma(t + 1.0) - ln_gamma(h - t + 1.0))
            })
            .collect();
        Self { half_n, log_binom_sq }
    }

    pub fn half_n(&self) -> usize {
        self.half_n
    }

    fn weights(&self) -> &[f64] {
        &self.log_binom_sq
    }
}

pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// The count distribution for one pair at correlation `r` (clamped).
#[derive(Debug, Clone)]
pub struct PairModel<'a> {
    table: &'a BinomTable,
    r: f64,
    eta: f64,
    log_norm: f64,
}

impl<'a> PairModel<'a> {
    pub fn new(table: &'a BinomTable, r: f64) -> Self {
        let eta = eta_clamped(r);
        let log_norm = log_sum_exp(
            table
                .weights()
                .iter()
                .enumerate()
                .map(|(t, lb)| lb + t as f64 * eta),
        );
        Self {
            table,
            r: r.clamp(-(1.0 - R_CLAMP), 1.0 - R_CLAMP),
            eta,
            log_norm,
        }
    }

    pub fn half_n(&self) -> usize {
        self.table.half_n()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `log P(T = t | r)`.
    pub fn log_pmf(&self, t: usize) -> Result<f64> {
        if t > self.half_n() {
            return Err(Error::InvalidParam(format!(
                "count {t} out of range [0, {}]",
                self.half_n()
            )));
        }
        Ok(self.table.weights()[t] + t as f64 * self.eta - self.log_norm)
    }

    /// The full PMF vector.
    pub fn pmf(&self) -> Vec<f64> {
        self.table
            .weights()
            .iter()
            .enumerate()
            .map(|(t, lb)| (lb + t as f64 * self.eta - self.log_norm).exp())
            .collect()
    }

    /// `E[T | r]`, strictly increasing in `r`.
    pub fn expected(&self) -> f64 {
        self.pmf()
            .iter()
            .enumerate()
            .map(|(t, p)| t as f64 * p)
            .sum()
    }
}

/// One-shot `log P(T = t | r)`.
pub fn log_pmf_t(half_n: usize, r: f64, t: usize) -> Result<f64> {
    let table = BinomTable::new(half_n);
    PairModel::new(&table, r).log_pmf(t)
}

/// One-shot `E[T | r]`.
pub fn expected_t(half_n: usize, r: f64) -> f64 {
    let table = BinomTable::new(half_n);
    PairModel::new(&table, r).expected()
}

/// Likelihood of one noisy count under the geometric mechanism, reusable
/// across `r` evaluations: the noise weights `log P(t_noisy | t)` are fixed,
/// so each evaluation is two log-sum-exp passes over `t = 0..=half_n`.
#[derive(Debug, Clone)]
pub struct NoisyPairLikelihood<'a> {
    table: &'a BinomTable,
    noise: Vec<f64>,
}

impl<'a> NoisyPairLikelihood<'a> {
    pub fn new(table: &'a BinomTable, t_noisy: i64, epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sensitivity must be positive, got {delta}"
            )));
        }
        let noise = (0..=table.half_n() as i64)
            .map(|t| geom_log_pmf(t_noisy - t, epsilon, delta))
            .collect();
        Ok(Self { table, noise })
    }

    /// `log P(T_noisy = t_noisy | r) = log sum_t P(t_noisy | t) P(t | r)`.
    ///
    /// Sampler hot path: both log-sum-exp reductions (the normalizer and
    /// the joint sum) share one sweep for the maxima and one for the sums.
    /// Terms more than 745 below the maximum are skipped; their `exp`
    /// underflows to exactly 0.0, so the result is bit-identical to the
    /// full sum.
    pub fn log_marginal(&self, r: f64) -> f64 {
        let eta = eta_clamped(r);
        let lb = self.table.weights();
        let mut max_norm = f64::NEG_INFINITY;
        let mut max_joint = f64::NEG_INFINITY;
        for (t, (w, nz)) in lb.iter().zip(&self.noise).enumerate() {
            let a = w + t as f64 * eta;
            if a > max_norm {
                max_norm = a;
            }
            let j = a + nz;
            if j > max_joint {
                max_joint = j;
            }
        }
        let mut sum_norm = 0.0;
        let mut sum_joint = 0.0;
        for (t, (w, nz)) in lb.iter().zip(&self.noise).enumerate() {
            let a = w + t as f64 * eta;
            let dn = a - max_norm;
            if dn > -745.0 {
                sum_norm += dn.exp();
            }
            let dj = a + nz - max_joint;
            if dj > -745.0 {
                sum_joint += dj.exp();
            }
        }
        (max_joint + sum_joint.ln()) - (max_norm + sum_norm.ln())
    }
}

/// One-shot marginal log-likelihood of a noisy count.
pub fn log_marginal_likelihood(
    half_n: usize,
    t_noisy: i64,
    r: f64,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    let table = BinomTable::new(half_n);
    Ok(NoisyPairLikelihood::new(&table, t_noisy, epsilon, delta)?.log_marginal(r))
}

/// Composite log-likelihood: the sum of pairwise marginal log-likelihoods
/// at the matrix's off-diagonals. Requires geometric-mechanism counts.
pub fn log_composite_likelihood(r: &CorrelationMatrix, noisy: &NoisyCountSet) -> Result<f64> {
    if r.p() != noisy.p() {
        return Err(Error::Shape(format!(
            "matrix has p={}, counts have p={}",
            r.p(),
            noisy.p()
        )));
    }
    if noisy.mechanism() != Mechanism::Geometric {
        return Err(Error::Validation(format!(
            "composite likelihood models the geometric mechanism, got {}",
            noisy.mechanism()
        )));
    }
    let table = BinomTable::new(noisy.half_n());
    let offdiag = r.offdiag();
    let mut total = 0.0;
    for (idx, value) in noisy.values().iter().enumerate() {
        let lik = NoisyPairLikelihood::new(
            &table,
            *value as i64,
            noisy.epsilon_pair(),
            noisy.delta(),
        )?;
        total += lik.log_marginal(offdiag[idx]);
    }
    Ok(total)
}
