//! Replicated experiments and the accuracy/coverage metrics.
//!
//! Each replicate draws a truth matrix, samples copula data, coarsens,
//! privatizes, and estimates. Replicates run in parallel on disjoint RNG
//! streams derived from `(master_seed, replicate, role)`, so reports are
//! identical regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::estimate::{
    bayes_grid_p2, bayes_mh, li_kendall_baseline, mle_matrix, EstimatorKind, MhOptions,
};
use crate::mechanism::{privatize_counts, Mechanism, PrivacyBudget};
use crate::quadrant::{pair_iter, quadrant_counts, TieKeyMatrix};
use crate::sim::{sample_copula_flagged, random_correlation, SimScenario};

/// RNG sub-stream roles within one replicate. Keeping roles separate makes
/// the truth and data identical across estimator choices at a fixed seed.
#[derive(Clone, Copy)]
enum Role {
    Truth = 0,
    Data = 1,
    Keys = 2,
    Noise = 3,
    Estimator = 4,
}

const ROLE_COUNT: u64 = 8;

fn replicate_rng(master_seed: u64, replicate: usize, role: Role) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate as u64 * ROLE_COUNT + role as u64);
    rng
}

/// One replicate's truth, estimate, and (for Bayesian runs) intervals.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub replicate: usize,
    pub truth: CorrelationMatrix,
    pub estimate: CorrelationMatrix,
    /// Per-pair `(lo, hi)` in lexicographic pair order.
    pub intervals: Option<Vec<(f64, f64)>>,
    pub runtime: Duration,
    pub seed: u64,
    pub jittered: bool,
}

/// Element-wise mean absolute error averaged over replicates.
pub fn mae(records: &[RunRecord]) -> Result<f64> {
    let per_run = per_replicate_mae(records)?;
    Ok(per_run.iter().sum::<f64>() / per_run.len() as f64)
}

fn per_replicate_mae(records: &[RunRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::InvalidParam("no records".into()));
    }
    records
        .iter()
        .map(|rec| {
            if rec.truth.p() != rec.estimate.p() {
                return Err(Error::Shape("truth/estimate dimension mismatch".into()));
            }
            let t = rec.truth.offdiag();
            let e = rec.estimate.offdiag();
            Ok(t.iter().zip(&e).map(|(a, b)| (a - b).abs()).sum::<f64>() / t.len() as f64)
        })
        .collect()
}

/// Fraction of (replicate, pair) events whose interval covers the truth,
/// and the mean interval length.
pub fn coverage_and_length(records: &[RunRecord]) -> Result<(f64, f64)> {
    let (cov, len) = per_replicate_coverage(records)?;
    Ok((
        cov.iter().sum::<f64>() / cov.len() as f64,
        len.iter().sum::<f64>() / len.len() as f64,
    ))
}

fn per_replicate_coverage(records: &[RunRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::InvalidParam("no records".into()));
    }
    let mut cov = Vec::with_capacity(records.len());
    let mut len = Vec::with_capacity(records.len());
    for rec in records {
        let intervals = rec
            .intervals
            .as_ref()
            .ok_or_else(|| Error::Validation("records carry no intervals".into()))?;
        let truth = rec.truth.offdiag();
        let mut covered = 0usize;
        let mut total_len = 0.0;
        for (t, (lo, hi)) in truth.iter().zip(intervals) {
            if lo <= t && t <= hi {
                covered += 1;
            }
            total_len += hi - lo;
        }
        cov.push(covered as f64 / truth.len() as f64);
        len.push(total_len / truth.len() as f64);
    }
    Ok((cov, len))
}

/// Metrics for one truth-correlation bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_length: Option<f64>,
}

/// Per-bin metrics with (replicate, pair) events assigned by truth value.
pub fn binned_metrics(records: &[RunRecord], bin_width: f64) -> Result<Vec<BinReport>> {
    if records.is_empty() {
        return Err(Error::InvalidParam("no records".into()));
    }
    if bin_width.is_nan() || bin_width <= 0.0 {
        return Err(Error::InvalidParam("bin width must be positive".into()));
    }
    let bins_f = 2.0 / bin_width;
    let bins = bins_f.round() as usize;
    if bins == 0 || (bins_f - bins as f64).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "bin width {bin_width} does not divide [-1, 1] evenly"
        )));
    }
    let mut abs_err = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    let mut covered = vec![0usize; bins];
    let mut lengths = vec![0.0f64; bins];
    let has_intervals = records.iter().all(|r| r.intervals.is_some());
    for rec in records {
        let truth = rec.truth.offdiag();
        let est = rec.estimate.offdiag();
        for (idx, (t, e)) in truth.iter().zip(&est).enumerate() {
            let bin = (((t + 1.0) / bin_width).floor() as usize).min(bins - 1);
            counts[bin] += 1;
            abs_err[bin] += (t - e).abs();
            if let Some(intervals) = &rec.intervals {
                let (lo, hi) = intervals[idx];
                if lo <= *t && *t <= hi {
                    covered[bin] += 1;
                }
                lengths[bin] += hi - lo;
            }
        }
    }
    Ok((0..bins)
        .map(|b| BinReport {
            lo: -1.0 + b as f64 * bin_width,
            hi: -1.0 + (b + 1) as f64 * bin_width,
            count: counts[b],
            mae: if counts[b] > 0 { abs_err[b] / counts[b] as f64 } else { 0.0 },
            coverage: (has_intervals && counts[b] > 0)
                .then(|| covered[b] as f64 / counts[b] as f64),
            mean_length: (has_intervals && counts[b] > 0)
                .then(|| lengths[b] / counts[b] as f64),
        })
        .collect())
}

/// Aggregated experiment report. Headline numbers carry Monte Carlo
/// standard errors of the replicate-level means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub mae: f64,
    pub mae_se: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_se: Option<f64>,
    pub binned: Vec<BinReport>,
    /// Replicates where the truth factorization needed the eigenvalue floor.
    pub jitter_runs: usize,
    pub scenario: SimScenario,
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Check the estimator/mechanism pairing before spending any work:
/// the MLE needs range-preserving counts, the Bayesian path models the
/// geometric mechanism, and the baseline ignores the noisy counts entirely.
pub fn validate_pairing(estimator: EstimatorKind, mechanism: Mechanism) -> Result<()> {
    match estimator {
        EstimatorKind::MleNn if !mechanism.is_range_preserving() => Err(Error::Validation(
            "mle-nn requires a range-preserving mechanism (tgm|btgm|rgm)".into(),
        )),
        EstimatorKind::BayesNa if mechanism != Mechanism::Geometric => Err(Error::Validation(
            "bayes-na requires the geometric mechanism".into(),
        )),
        _ => Ok(()),
    }
}

fn run_one(scenario: &SimScenario, replicate: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let truth = random_correlation(
        scenario.p,
        &mut replicate_rng(scenario.master_seed, replicate, Role::Truth),
    )?;
    let (data, jittered) = sample_copula_flagged(
        &truth,
        &scenario.marginals,
        scenario.n,
        &mut replicate_rng(scenario.master_seed, replicate, Role::Data),
    )?;
    let key_seed = replicate_rng(scenario.master_seed, replicate, Role::Keys).random::<u64>();
    let keys = TieKeyMatrix::generate(scenario.n, scenario.p, key_seed)?;
    let counts = quadrant_counts(&data, &keys)?;
    let budget = PrivacyBudget::new(scenario.epsilon_total, scenario.p)?;
    let noisy = privatize_counts(
        &counts,
        &budget,
        scenario.mechanism,
        &mut replicate_rng(scenario.master_seed, replicate, Role::Noise),
    )?;

    let mut est_rng = replicate_rng(scenario.master_seed, replicate, Role::Estimator);
    let (estimate, intervals) = match scenario.estimator {
        EstimatorKind::MleNn => {
            let (m, _) = mle_matrix(&noisy)?;
            (m, None)
        }
        EstimatorKind::LiKendall => {
            let (m, _) = li_kendall_baseline(&data, scenario.epsilon_total, &mut est_rng)?;
            (m, None)
        }
        EstimatorKind::BayesNa => {
            let (summary, _draws) = if scenario.p == 2 {
                bayes_grid_p2(
                    noisy.values()[0] as i64,
                    noisy.half_n(),
                    noisy.epsilon_pair(),
                    noisy.delta(),
                    scenario.grid_size,
                    scenario.alpha,
                    scenario.samples,
                    &mut est_rng,
                )?
            } else {
                let opts = MhOptions {
                    samples: scenario.samples,
                    burn_in: scenario.burn_in,
                    alpha: scenario.alpha,
                    ..MhOptions::default()
                };
                bayes_mh(&noisy, &opts, &mut est_rng)?
            };
            let point = CorrelationMatrix::from_pairs(
                scenario.p,
                &summary.pairs.iter().map(|pi| pi.mean).collect::<Vec<_>>(),
            )
            .or_else(|_| {
                // Monte Carlo pair means can fall just outside the PSD cone.
                let raw = crate::correlation::matrix_from_pairs(
                    scenario.p,
                    &summary.pairs.iter().map(|pi| pi.mean).collect::<Vec<_>>(),
                )?;
                crate::estimate::nearest_correlation(&raw).map(|(m, _)| m)
            })?;
            let intervals = summary.pairs.iter().map(|pi| (pi.lo, pi.hi)).collect();
            (point, Some(intervals))
        }
    };

    Ok(RunRecord {
        replicate,
        truth,
        estimate,
        intervals,
        runtime: start.elapsed(),
        seed: scenario.master_seed,
        jittered,
    })
}

/// Run all replicates (in parallel) and aggregate the metrics.
pub fn run_experiment(scenario: &SimScenario) -> Result<(MetricsReport, Vec<RunRecord>)> {
    scenario.validate()?;
    validate_pairing(scenario.estimator, scenario.mechanism)?;

    let records: Vec<RunRecord> = (0..scenario.runs)
        .into_par_iter()
        .map(|h| run_one(scenario, h))
        .collect::<Result<_>>()?;

    let per_mae = per_replicate_mae(&records)?;
    let with_intervals = records.iter().all(|r| r.intervals.is_some());
    let (coverage, coverage_se, mean_length, length_se) = if with_intervals {
        let (cov, len) = per_replicate_coverage(&records)?;
        (
            Some(cov.iter().sum::<f64>() / cov.len() as f64),
            Some(standard_error(&cov)),
            Some(len.iter().sum::<f64>() / len.len() as f64),
            Some(standard_error(&len)),
        )
    } else {
        (None, None, None, None)
    };

    let report = MetricsReport {
        runs: scenario.runs,
        mae: per_mae.iter().sum::<f64>() / per_mae.len() as f64,
        mae_se: standard_error(&per_mae),
        coverage,
        coverage_se,
        mean_length,
        length_se,
        binned: binned_metrics(&records, scenario.bin_width)?,
        jitter_runs: records.iter().filter(|r| r.jittered).count(),
        scenario: scenario.clone(),
    };
    Ok((report, records))
}

/// Write the per-replicate records CSV:
/// `replicate,j,jp,truth_r,est_r,lo,hi,seed` with empty interval fields for
/// point estimators.
pub fn write_records_csv<W: std::io::Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "j", "jp", "truth_r", "est_r", "lo", "hi", "seed"])?;
    for rec in records {
        let p = rec.truth.p();
        for (idx, (j, jp)) in pair_iter(p).enumerate() {
            let (lo, hi) = match &rec.intervals {
                Some(iv) => (iv[idx].0.to_string(), iv[idx].1.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                rec.replicate.to_string(),
                j.to_string(),
                jp.to_string(),
                rec.truth.entry(j, jp).to_string(),
                rec.estimate.entry(j, jp).to_string(),
                lo,
                hi,
                rec.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
