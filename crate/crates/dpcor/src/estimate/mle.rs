//! Noise-naive maximum likelihood: invert the estimating equation
//! `E[T | r] = t_noisy` per pair, then project the assembled matrix onto the
//! nearest valid correlation matrix.

use crate::correlation::{matrix_from_pairs, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::estimate::nearest::{nearest_correlation, ProjectionInfo};
use crate::likelihood::{BinomTable, PairModel};
use crate::mechanism::NoisyCountSet;

/// Solve `E[T | r] = t_noisy` for `r` by bisection. The expectation is
/// strictly increasing in `r`, so the interior solution is unique; the
/// boundary counts 0 and `half_n` map to -1 and +1 exactly.
pub fn mle_pair_with_table(table: &BinomTable, t_noisy: f64) -> Result<f64> {
    let h = table.half_n() as f64;
    if !(0.0..=h).contains(&t_noisy) {
        return Err(Error::Validation(format!(
            "noisy count {t_noisy} outside [0, {h}]; the estimating equation has no \
             solution (use a range-preserving mechanism)"
        )));
    }
    if t_noisy == 0.0 {
        return Ok(-1.0);
    }
    if t_noisy == h {
        return Ok(1.0);
    }
    let mut lo = -1.0f64;
    let mut hi = 1.0f64;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let expected = PairModel::new(table, mid).expected();
        if expected < t_noisy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Single-pair MLE for a noisy count in `[0, half_n]`.
pub fn mle_pair(t_noisy: f64, half_n: usize) -> Result<f64> {
    let table = BinomTable::new(half_n);
    mle_pair_with_table(&table, t_noisy)
}

/// Matrix MLE: pairwise inversions assembled and, when the result is not
/// PSD, projected to the Frobenius-nearest correlation matrix.
pub fn mle_matrix(noisy: &NoisyCountSet) -> Result<(CorrelationMatrix, ProjectionInfo)> {
    if !noisy.mechanism().is_range_preserving() {
        return Err(Error::Validation(format!(
            "MLE requires a range-preserving mechanism (tgm, btgm, rgm), got {}",
            noisy.mechanism()
        )));
    }
    let table = BinomTable::new(noisy.half_n());
    let estimates: Vec<f64> = noisy
        .values()
        .iter()
        .map(|t| mle_pair_with_table(&table, *t))
        .collect::<Result<_>>()?;
    let raw = matrix_from_pairs(noisy.p(), &estimates)?;
    nearest_correlation(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::Mechanism;
    use approx::assert_abs_diff_eq;

    #[test]
    fn boundary_cases() {
        assert_eq!(mle_pair(0.0, 25).unwrap(), -1.0);
        assert_eq!(mle_pair(25.0, 25).unwrap(), 1.0);
        assert!(mle_pair(-0.5, 25).is_err());
        assert!(mle_pair(25.5, 25).is_err());
    }

    #[test]
    fn midpoint_maps_to_zero() {
        let r = mle_pair(12.5, 25).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn inverts_expected_value_example() {
        // E[T | r=0.5] = 516/245 at half_n=3.
        let r = mle_pair(516.0 / 245.0, 3).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn round_trip_on_grid() {
        let table = BinomTable::new(25);
        for k in 0..41 {
            let r_true = -0.98 + 0.049 * k as f64;
            let t = PairModel::new(&table, r_true).expected();
            let r_hat = mle_pair_with_table(&table, t).unwrap();
            assert!(
                (r_hat - r_true).abs() < 1e-6,
                "r={r_true}: recovered {r_hat}"
            );
        }
    }

    #[test]
    fn matrix_mle_rejects_geometric() {
        let noisy = NoisyCountSet::new(
            vec![2.0],
            Mechanism::Geometric,
            1.0,
            1.0,
            1.0,
            None,
            10,
            2,
            5,
        )
        .unwrap();
        assert!(mle_matrix(&noisy).is_err());
    }

    #[test]
    fn matrix_mle_p2_is_unprojected() {
        let noisy = NoisyCountSet::new(
            vec![4.0],
            Mechanism::Tgm,
            1.0,
            1.0,
            1.0,
            Some((0, 5)),
            10,
            2,
            5,
        )
        .unwrap();
        let (m, info) = mle_matrix(&noisy).unwrap();
        assert!(info.was_psd);
        assert_eq!(m.p(), 2);
        assert!(m.entry(0, 1) > 0.0);
    }
}
