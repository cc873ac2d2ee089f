//! Baseline estimator: Laplace-noised Kendall's tau per pair, mapped to a
//! correlation through `r = sin(pi tau / 2)` and projected if needed.

use rand::Rng;

use crate::correlation::{matrix_from_pairs, CorrelationMatrix};
use crate::error::Result;
use crate::estimate::nearest::{nearest_correlation, ProjectionInfo};
use crate::mechanism::PrivacyBudget;
use crate::quadrant::{pair_iter, Dataset};

/// Kendall's tau without tie adjustment: tied pairs count as neither
/// concordant nor discordant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut net = 0i64;
    for i in 0..n {
        for k in i + 1..n {
            let s = (x[i] - x[k]) * (y[i] - y[k]);
            if s > 0.0 {
                net += 1;
            } else if s < 0.0 {
                net -= 1;
            }
        }
    }
    net as f64 / (n * (n - 1) / 2) as f64
}

fn sample_laplace(scale: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Privatize all pairwise Kendall's tau coefficients with Laplace noise and
/// map to a correlation matrix.
///
/// Substituting one record flips at most `n - 1` concordance pairs, each
/// moving tau by `4 / (n(n-1))`, so the per-pair sensitivity is `4/n`; the
/// noise scale is that sensitivity over the per-pair budget.
pub fn li_kendall_baseline(
    data: &Dataset,
    epsilon_total: f64,
    rng: &mut impl Rng,
) -> Result<(CorrelationMatrix, ProjectionInfo)> {
    let p = data.p();
    let n = data.n();
    let budget = PrivacyBudget::new(epsilon_total, p)?;
    let scale = (4.0 / n as f64) / budget.epsilon_pair();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| data.column(j)).collect();
    let estimates: Vec<f64> = pair_iter(p)
        .map(|(j, jp)| {
            let tau = kendall_tau(&columns[j], &columns[jp]);
            let tau_noisy = tau + sample_laplace(scale, rng);
            (std::f64::consts::FRAC_PI_2 * tau_noisy).sin().clamp(-1.0, 1.0)
        })
        .collect();
    let raw = matrix_from_pairs(p, &estimates)?;
    nearest_correlation(&raw)
}
