//! Correlation estimators operating on privatized counts: the noise-naive
//! MLE, the noise-aware Bayesian posterior, and the Kendall-tau baseline
//! (the one estimator that touches raw data, spending its own budget).

pub mod bayes;
pub mod kendall;
pub mod mle;
pub mod nearest;

pub use crate::correlation::CorrelationMatrix;
pub use bayes::{bayes_grid_p2, bayes_mh, ess, sample_lkj_prior_mh, MhOptions};
pub use kendall::{kendall_tau, li_kendall_baseline};
pub use mle::{mle_matrix, mle_pair};
pub use nearest::{nearest_correlation, ProjectionInfo};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrant::pair_index;

/// Which estimator a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "mle-nn")]
    MleNn,
    #[serde(rename = "bayes-na")]
    BayesNa,
    #[serde(rename = "li-kendall")]
    LiKendall,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::MleNn => "mle-nn",
            EstimatorKind::BayesNa => "bayes-na",
            EstimatorKind::LiKendall => "li-kendall",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mle-nn" | "mle" => Ok(EstimatorKind::MleNn),
            "bayes-na" | "bayes" => Ok(EstimatorKind::BayesNa),
            "li-kendall" => Ok(EstimatorKind::LiKendall),
            other => Err(Error::InvalidParam(format!(
                "unknown estimator {other:?} (expected mle-nn|bayes-na|li-kendall)"
            ))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sampler health indicators attached to every posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub sampler: String,
    /// Post-burn-in acceptance rate (1.0 for the exact grid).
    pub acceptance: f64,
    /// Per-pair effective sample sizes of the retained draws, in
    /// lexicographic pair order.
    pub ess: Vec<f64>,
}

impl SamplerDiagnostics {
    pub fn min_ess(&self) -> f64 {
        self.ess.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Retained posterior samples of the correlation matrix.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub draws: Vec<CorrelationMatrix>,
    pub burn_in: usize,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorDraws {
    /// Values of one pair across draws.
    pub fn pair_series(&self, j: usize, jp: usize) -> Vec<f64> {
        self.draws.iter().map(|m| m.entry(j, jp)).collect()
    }
}

/// Posterior mean and equal-tailed interval for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub j: usize,
    pub jp: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Element-wise posterior summaries at level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub alpha: f64,
    pub pairs: Vec<PairInterval>,
}

impl IntervalSummary {
    pub fn pair(&self, j: usize, jp: usize, p: usize) -> &PairInterval {
        &self.pairs[pair_index(j, jp, p)]
    }
}

/// Type-7 empirical quantile (interpolated order statistics) of sorted data.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Mean of the draws as a matrix. Monte Carlo averaging keeps this PSD in
/// all but pathological cases; when it is not, project and flag it.
pub fn posterior_mean_matrix(draws: &PosteriorDraws) -> Result<(CorrelationMatrix, bool)> {
    if draws.draws.is_empty() {
        return Err(Error::InvalidParam("no posterior draws".into()));
    }
    let p = draws.draws[0].p();
    let mut mean = nalgebra::DMatrix::zeros(p, p);
    for d in &draws.draws {
        mean += d.matrix();
    }
    mean /= draws.draws.len() as f64;
    match CorrelationMatrix::new(mean.clone()) {
        Ok(m) => Ok((m, false)),
        Err(_) => {
            let (projected, _) = nearest_correlation(&mean)?;
            Ok((projected, true))
        }
    }
}

/// Posterior summary of a conditional regression slope computed from the
/// correlation draws: for each draw,
/// `beta = (R[target,predictor] - R[target,control] R[predictor,control])
///         / (1 - R[predictor,control]^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Draws dropped because the predictor-control correlation was +-1.
    pub excluded: usize,
}

pub fn conditional_regression_coef(
    draws: &PosteriorDraws,
    target: usize,
    predictor: usize,
    control: usize,
    alpha: f64,
) -> Result<CoefficientSummary> {
    if target == predictor || target == control || predictor == control {
        return Err(Error::InvalidParam(
            "target, predictor, and control must be distinct variables".into(),
        ));
    }
    if draws.draws.is_empty() {
        return Err(Error::InvalidParam("no posterior draws".into()));
    }
    let p = draws.draws[0].p();
    if target >= p || predictor >= p || control >= p {
        return Err(Error::Shape(format!("variable index out of range for p={p}")));
    }
    let mut betas = Vec::with_capacity(draws.draws.len());
    let mut excluded = 0usize;
    for d in &draws.draws {
        let rpc = d.entry(predictor, control);
        let denom = 1.0 - rpc * rpc;
        if denom <= 0.0 {
            excluded += 1;
            continue;
        }
        betas.push((d.entry(target, predictor) - d.entry(target, control) * rpc) / denom);
    }
    if betas.is_empty() {
        return Err(Error::Diagnostic(
            "all draws degenerate for the requested coefficient".into(),
        ));
    }
    let mean = betas.iter().sum::<f64>() / betas.len() as f64;
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(CoefficientSummary {
        mean,
        lo: quantile_type7(&betas, alpha / 2.0),
        hi: quantile_type7(&betas, 1.0 - alpha / 2.0),
        excluded,
    })
}

/// Serializable estimate report shared by the CLI commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub p: usize,
    /// Point estimate, row-major.
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<PairInterval>>,
    pub diagnostics: ReportDiagnostics,
    pub source: SourceMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_projected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub was_psd: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius_adjustment: Option<f64>,
}

/// Budget and mechanism metadata echoed from the noisy input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceMeta {
    pub mechanism: String,
    pub epsilon_total: f64,
    pub epsilon_pair: f64,
    pub n: usize,
    pub p: usize,
    pub half_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(i64, i64)>,
}
