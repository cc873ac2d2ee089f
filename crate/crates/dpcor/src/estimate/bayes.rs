//! Noise-aware Bayesian posterior for the correlation matrix.
//!
//! The target is `LKJ(1) prior x composite marginal likelihood` of the
//! geometric-mechanism counts. Two samplers are provided:
//!
//! * `bayes_grid_p2` — exact grid posterior for a single pair under a
//!   uniform prior (LKJ(1) at p=2 is uniform on the off-diagonal).
//! * `bayes_mh` — adaptive random-walk Metropolis for any `p`, on the
//!   unconstrained canonical-partial-correlation (CPC) parameterization of
//!   the Cholesky factor. Under LKJ(1) the CPCs are independent scaled Beta
//!   variables, so the prior times the transform Jacobian is available in
//!   closed form: each CPC `z` in conditioning column `j` contributes
//!   `beta_j * log(1 - z^2)` with `beta_j = 1 + (p - 2 - j)/2` once the
//!   `tanh` reparameterization is folded in.
//!
//! The proposal is a spherical random walk whose global scale adapts by
//! Robbins-Monro toward 0.234 acceptance during burn-in and is frozen
//! afterwards, which preserves the stationary distribution of the retained
//! draws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::estimate::{
    quantile_type7, IntervalSummary, PairInterval, PosteriorDraws, SamplerDiagnostics,
};
use crate::likelihood::{log_sum_exp, BinomTable, NoisyPairLikelihood};
use crate::mechanism::{Mechanism, NoisyCountSet};
use crate::quadrant::{pair_count, pair_index, pair_iter};

/// Sampler controls. `thin` proposals are made per retained draw, so the
/// chain length is `(burn_in + samples) * thin` proposals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOptions {
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub alpha: f64,
    pub target_accept: f64,
}

impl Default for MhOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            burn_in: 1000,
            thin: 5,
            alpha: 0.05,
            target_accept: 0.234,
        }
    }
}

impl MhOptions {
    fn validate(&self) -> Result<()> {
        if self.samples < 1 || self.thin < 1 {
            return Err(Error::InvalidParam(
                "samples and thin must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Map from unconstrained coordinates to correlation off-diagonals through
/// tanh CPCs and the Cholesky-row construction.
struct CpcTransform {
    p: usize,
    beta: Vec<f64>,
}

impl CpcTransform {
    fn new(p: usize) -> Self {
        let mut beta = vec![0.0; pair_count(p)];
        for (j, i) in pair_iter(p) {
            beta[pair_index(j, i, p)] = 1.0 + 0.5 * (p as f64 - 2.0 - j as f64);
        }
        Self { p, beta }
    }

    /// Off-diagonals of `R(u)` in pair order, and the log prior density of
    /// `u` (LKJ(1) on `R` combined with the full transform Jacobian).
    fn offdiag_and_log_prior(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let p = self.p;
        let mut w = vec![0.0f64; p * p];
        w[0] = 1.0;
        let mut log_prior = 0.0;
        for i in 1..p {
            let mut cum = 1.0f64;
            for c in 0..i {
                let z = u[pair_index(c, i, p)].tanh();
                let one_minus = 1.0 - z * z;
                log_prior += self.beta[pair_index(c, i, p)] * one_minus.ln();
                w[i * p + c] = z * cum;
                cum *= one_minus.sqrt();
            }
            w[i * p + i] = cum;
        }
        let offdiag = pair_iter(p)
            .map(|(j, i)| (0..=j).map(|c| w[i * p + c] * w[j * p + c]).sum::<f64>())
            .collect();
        (offdiag, log_prior)
    }
}

/// Adaptive random-walk Metropolis over the CPC coordinates. Returns the
/// retained off-diagonal vectors and the post-burn-in acceptance rate.
fn run_mh<F: Fn(&[f64]) -> f64>(
    p: usize,
    loglik: F,
    opts: &MhOptions,
    rng: &mut impl Rng,
) -> (Vec<Vec<f64>>, f64) {
    let d = pair_count(p);
    let transform = CpcTransform::new(p);
    let mut u = vec![0.0f64; d];
    let (mut offdiag, log_prior) = transform.offdiag_and_log_prior(&u);
    let mut target = log_prior + loglik(&offdiag);
    let mut log_step = (2.38 / (d as f64).sqrt()).ln();

    let burn_proposals = opts.burn_in * opts.thin;
    let total_proposals = (opts.burn_in + opts.samples) * opts.thin;
    let mut draws = Vec::with_capacity(opts.samples);
    let mut accepted = 0usize;
    let mut proposals_kept = 0usize;

    for t in 0..total_proposals {
        let step = log_step.exp();
        let proposal: Vec<f64> = u
            .iter()
            .map(|ui| {
                let z: f64 = StandardNormal.sample(rng);
                ui + step * z
            })
            .collect();
        let (prop_offdiag, prop_log_prior) = transform.offdiag_and_log_prior(&proposal);
        let prop_target = prop_log_prior + loglik(&prop_offdiag);
        let log_ratio = prop_target - target;
        let accept = !log_ratio.is_nan() && rng.random::<f64>().ln() < log_ratio;
        if accept {
            u = proposal;
            offdiag = prop_offdiag;
            target = prop_target;
        }
        if t < burn_proposals {
            let acc_prob = if log_ratio.is_nan() {
                0.0
            } else {
                log_ratio.exp().min(1.0)
            };
            let gain = (t as f64 + 1.0).powf(-0.6);
            log_step += gain * (acc_prob - opts.target_accept);
        } else {
            proposals_kept += 1;
            if accept {
                accepted += 1;
            }
            if (t + 1 - burn_proposals).is_multiple_of(opts.thin) {
                draws.push(offdiag.clone());
            }
        }
    }
    let acceptance = accepted as f64 / proposals_kept.max(1) as f64;
    (draws, acceptance)
}

/// Interval summary and per-pair ESS over the draw series.
fn summarize_draws(
    p: usize,
    draws: &[CorrelationMatrix],
    alpha: f64,
) -> (IntervalSummary, Vec<f64>) {
    let mut pairs = Vec::with_capacity(pair_count(p));
    let mut ess_per_pair = Vec::with_capacity(pair_count(p));
    for (j, jp) in pair_iter(p) {
        let series: Vec<f64> = draws.iter().map(|m| m.entry(j, jp)).collect();
        ess_per_pair.push(ess(&series));
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let mut sorted = series;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pairs.push(PairInterval {
            j,
            jp,
            mean,
            lo: quantile_type7(&sorted, alpha / 2.0),
            hi: quantile_type7(&sorted, 1.0 - alpha / 2.0),
        });
    }
    (IntervalSummary { alpha, pairs }, ess_per_pair)
}

/// Composite-likelihood posterior sampling for `p >= 2` via adaptive
/// random-walk Metropolis. Requires geometric-mechanism counts.
pub fn bayes_mh(
    noisy: &NoisyCountSet,
    opts: &MhOptions,
    rng: &mut impl Rng,
) -> Result<(IntervalSummary, PosteriorDraws)> {
    opts.validate()?;
    if noisy.mechanism() != Mechanism::Geometric {
        return Err(Error::Validation(format!(
            "the noise-aware posterior models the geometric mechanism, got {}",
            noisy.mechanism()
        )));
    }
    let p = noisy.p();
    let table = BinomTable::new(noisy.half_n());
    let likelihoods: Vec<NoisyPairLikelihood> = noisy
        .values()
        .iter()
        .map(|v| NoisyPairLikelihood::new(&table, *v as i64, noisy.epsilon_pair(), noisy.delta()))
        .collect::<Result<_>>()?;
    let loglik = |offdiag: &[f64]| {
        likelihoods
            .iter()
            .zip(offdiag)
            .map(|(lik, r)| lik.log_marginal(*r))
            .sum::<f64>()
    };
    let (offdraws, acceptance) = run_mh(p, loglik, opts, rng);
    finalize_mh(p, offdraws, acceptance, opts)
}

/// Prior-only chain (likelihood muted), used to validate the sampler and
/// parameterization against the closed-form LKJ(1) pair marginals.
pub fn sample_lkj_prior_mh(
    p: usize,
    opts: &MhOptions,
    rng: &mut impl Rng,
) -> Result<PosteriorDraws> {
    opts.validate()?;
    let (offdraws, acceptance) = run_mh(p, |_| 0.0, opts, rng);
    let (_, draws) = finalize_mh(p, offdraws, acceptance, opts)?;
    Ok(draws)
}

fn finalize_mh(
    p: usize,
    offdraws: Vec<Vec<f64>>,
    acceptance: f64,
    opts: &MhOptions,
) -> Result<(IntervalSummary, PosteriorDraws)> {
    if !(0.05..=0.95).contains(&acceptance) {
        return Err(Error::Diagnostic(format!(
            "post-adaptation acceptance rate {acceptance:.3} outside [0.05, 0.95]"
        )));
    }
    let draws: Vec<CorrelationMatrix> = offdraws
        .into_iter()
        .map(|off| CorrelationMatrix::from_pairs(p, &off))
        .collect::<Result<_>>()?;
    let (summary, ess_per_pair) = summarize_draws(p, &draws, opts.alpha);
    Ok((
        summary,
        PosteriorDraws {
            draws,
            burn_in: opts.burn_in,
            diagnostics: SamplerDiagnostics {
                sampler: "mh".into(),
                acceptance,
                ess: ess_per_pair,
            },
        },
    ))
}

/// Exact single-pair posterior on a uniform grid over (-1, 1) with a
/// uniform prior. Interval endpoints interpolate the discrete CDF; the
/// returned draws are grid resamples.
#[allow(clippy::too_many_arguments)]
pub fn bayes_grid_p2(
    t_noisy: i64,
    half_n: usize,
    epsilon_pair: f64,
    delta: f64,
    grid_size: usize,
    alpha: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(IntervalSummary, PosteriorDraws)> {
    if grid_size < 3 {
        return Err(Error::InvalidParam(format!(
            "grid_size must be at least 3, got {grid_size}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if samples < 1 {
        return Err(Error::InvalidParam("samples must be at least 1".into()));
    }
    let table = BinomTable::new(half_n);
    let likelihood = NoisyPairLikelihood::new(&table, t_noisy, epsilon_pair, delta)?;
    let grid: Vec<f64> = (0..grid_size)
        .map(|k| -1.0 + (2.0 * k as f64 + 1.0) / grid_size as f64)
        .collect();
    let log_weights: Vec<f64> = grid.iter().map(|r| likelihood.log_marginal(*r)).collect();
    let norm = log_sum_exp(log_weights.iter().cloned());
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - norm).exp()).collect();

    let mean: f64 = grid.iter().zip(&weights).map(|(r, w)| r * w).sum();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    // Each grid point's mass is spread over its midpoint cell, so the
    // interpolated CDF is continuous and exactly symmetric when the
    // posterior is.
    let cell = 2.0 / grid_size as f64;
    let quantile = |q: f64| -> f64 {
        let k = cumulative.partition_point(|c| *c < q).min(grid_size - 1);
        let c_prev = if k == 0 { 0.0 } else { cumulative[k - 1] };
        let mass = cumulative[k] - c_prev;
        let left = -1.0 + k as f64 * cell;
        if mass <= 0.0 {
            left + 0.5 * cell
        } else {
            left + (q - c_prev) / mass * cell
        }
    };
    let lo = quantile(alpha / 2.0);
    let hi = quantile(1.0 - alpha / 2.0);

    let draws: Vec<CorrelationMatrix> = (0..samples)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cumulative.partition_point(|c| *c < u).min(grid_size - 1);
            CorrelationMatrix::from_pairs(2, &[grid[k]])
        })
        .collect::<Result<_>>()?;

    let summary = IntervalSummary {
        alpha,
        pairs: vec![PairInterval {
            j: 0,
            jp: 1,
            mean,
            lo,
            hi,
        }],
    };
    Ok((
        summary,
        PosteriorDraws {
            draws,
            burn_in: 0,
            diagnostics: SamplerDiagnostics {
                sampler: "grid".into(),
                acceptance: 1.0,
                ess: vec![samples as f64],
            },
        },
    ))
}

/// Effective sample size by Geyer's initial positive sequence: sum paired
/// autocorrelations until a pair sum goes nonpositive.
pub fn ess(series: &[f64]) -> f64 {
    let s = series.len();
    if s < 4 {
        return s as f64;
    }
    let mean = series.iter().sum::<f64>() / s as f64;
    let c0: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / s as f64;
    if c0 < 1e-300 {
        return s as f64;
    }
    let rho = |k: usize| -> f64 {
        if k >= s {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..s - k {
            acc += (series[i] - mean) * (series[i + k] - mean);
        }
        acc / (s as f64 * c0)
    };
    let mut tau = -1.0;
    let mut m = 0usize;
    loop {
        let gamma = rho(2 * m) + rho(2 * m + 1);
        if gamma <= 0.0 || 2 * m >= s - 1 {
            break;
        }
        tau += 2.0 * gamma;
        m += 1;
    }
    let tau = tau.max(1.0);
    (s as f64 / tau).min(s as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn grid_posterior_normalizes_and_centers() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        // t_noisy at half_n/2 with a strong budget: posterior symmetric
        // about zero.
        let (summary, draws) =
            bayes_grid_p2(125, 250, 4.0, 1.0, 2001, 0.05, 500, &mut rng).unwrap();
        let pair = &summary.pairs[0];
        assert!(pair.mean.abs() < 1e-6, "mean {}", pair.mean);
        assert!((pair.lo + pair.hi).abs() < 1e-6);
        assert!(pair.lo < pair.mean && pair.mean < pair.hi);
        assert_eq!(draws.draws.len(), 500);
    }

    #[test]
    fn grid_posterior_flat_budget_returns_prior_width() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (summary, _) = bayes_grid_p2(10, 25, 0.01, 1.0, 2001, 0.05, 10, &mut rng).unwrap();
        let len = summary.pairs[0].hi - summary.pairs[0].lo;
        // Near the uniform prior's 95% width of 1.9.
        assert!((len - 1.9).abs() < 0.1, "length {len}");
    }

    #[test]
    fn grid_mean_stable_in_grid_size() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (a, _) = bayes_grid_p2(80, 100, 1.0, 1.0, 2001, 0.05, 1, &mut rng).unwrap();
        let (b, _) = bayes_grid_p2(80, 100, 1.0, 1.0, 4001, 0.05, 1, &mut rng).unwrap();
        assert!((a.pairs[0].mean - b.pairs[0].mean).abs() < 1e-4);
    }

    #[test]
    fn grid_rejects_tiny_grid() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        assert!(bayes_grid_p2(1, 10, 1.0, 1.0, 2, 0.05, 1, &mut rng).is_err());
    }

    #[test]
    fn ess_of_iid_and_correlated_chains() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let iid: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let e = ess(&iid);
        assert!(e > 1200.0, "iid ESS {e}");

        // AR(1) with phi = 0.9: true ESS factor (1-phi)/(1+phi) ~ 0.053.
        let mut x = 0.0;
        let ar: Vec<f64> = (0..4000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + z;
                x
            })
            .collect();
        let e = ess(&ar);
        assert!(e < 600.0, "AR ESS {e}");
        assert!(e > 50.0, "AR ESS {e}");
    }

    #[test]
    fn cpc_transform_round_trips_p2() {
        let t = CpcTransform::new(2);
        let (off, _) = t.offdiag_and_log_prior(&[0.5f64.atanh()]);
        assert_abs_diff_eq!(off[0], 0.5, epsilon = 1e-12);
        // beta for the single pair at p=2 is 1 (uniform CPC).
        assert_abs_diff_eq!(t.beta[0], 1.0);
    }

    #[test]
    fn cpc_transform_produces_valid_matrices() {
        let t = CpcTransform::new(4);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            let u: Vec<f64> = (0..6).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect();
            let (off, lp) = t.offdiag_and_log_prior(&u);
            assert!(lp.is_finite());
            let m = CorrelationMatrix::from_pairs(4, &off).unwrap();
            assert!(m.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn mh_matches_grid_on_one_instance() {
        let noisy = NoisyCountSet::new(
            vec![30.0],
            Mechanism::Geometric,
            1.0,
            1.0,
            1.0,
            None,
            100,
            2,
            50,
        )
        .unwrap();
        let opts = MhOptions {
            samples: 2000,
            burn_in: 500,
            thin: 5,
            ..MhOptions::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let (mh_summary, draws) = bayes_mh(&noisy, &opts, &mut rng).unwrap();
        let mut rng2 = ChaCha12Rng::seed_from_u64(78);
        let (grid_summary, _) =
            bayes_grid_p2(30, 50, 1.0, 1.0, 2001, 0.05, 1, &mut rng2).unwrap();

        let series: Vec<f64> = draws.draws.iter().map(|m| m.entry(0, 1)).collect();
        let sd = {
            let mean = series.iter().sum::<f64>() / series.len() as f64;
            (series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / series.len() as f64)
                .sqrt()
        };
        let se = sd / draws.diagnostics.min_ess().sqrt();
        let gap = (mh_summary.pairs[0].mean - grid_summary.pairs[0].mean).abs();
        assert!(
            gap < 3.0 * se + 1e-3,
            "gap {gap}, se {se}, ess {}",
            draws.diagnostics.min_ess()
        );
    }

    #[test]
    fn prior_only_chain_is_centered_with_lkj_spread() {
        // p=3 LKJ(1) pair marginal is the semicircle: mean 0, variance 1/4.
        let opts = MhOptions {
            samples: 4000,
            burn_in: 500,
            thin: 5,
            ..MhOptions::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let draws = sample_lkj_prior_mh(3, &opts, &mut rng).unwrap();
        for (j, jp) in pair_iter(3) {
            let series = draws.pair_series(j, jp);
            let mean = series.iter().sum::<f64>() / series.len() as f64;
            let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / series.len() as f64;
            assert!(mean.abs() < 0.06, "pair ({j},{jp}) mean {mean}");
            assert!((var - 0.25).abs() < 0.04, "pair ({j},{jp}) var {var}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let noisy = NoisyCountSet::new(
            vec![20.0, 28.0, 22.0],
            Mechanism::Geometric,
            1.5,
            0.5,
            1.0,
            None,
            100,
            3,
            50,
        )
        .unwrap();
        let opts = MhOptions {
            samples: 50,
            burn_in: 50,
            thin: 2,
            ..MhOptions::default()
        };
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (s, d) = bayes_mh(&noisy, &opts, &mut rng).unwrap();
            (s, d.draws.last().unwrap().offdiag())
        };
        let (s1, last1) = run(9);
        let (s2, last2) = run(9);
        assert_eq!(s1.pairs, s2.pairs);
        assert_eq!(last1, last2);
    }
}
