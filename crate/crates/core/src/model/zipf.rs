use crate::error::{Error, Result};

/// Zipf popularity over ranks `1..=n`: `rho_i = i^-alpha / sum_j j^-alpha`.
pub fn zipf_popularity(n: usize, alpha: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidCatalog(
            "catalog must hold at least one content".into(),
        ));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!(
            "zipf exponent must be >= 0, got {alpha}"
        )));
    }
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
    // Summing smallest-first keeps the normalizer accurate for long tails.
    let total: f64 = raw.iter().rev().sum();
    Ok(raw.into_iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_when_alpha_is_zero() {
        let rho = zipf_popularity(4, 0.0).unwrap();
        for r in rho {
            assert!((r - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn two_contents_alpha_one() {
        let rho = zipf_popularity(2, 1.0).unwrap();
        assert!((rho[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hundred_contents_matches_harmonic_sum() {
        // Brute-force generalized harmonic number, accumulated in the opposite
        // order from the implementation.
        let mut h = 0.0f64;
        for j in 1..=100 {
            h += 1.0 / (j as f64).powf(0.8);
        }
        let expected = 1.0 / h;
        let rho = zipf_popularity(100, 0.8).unwrap();
        assert!(
            (rho[0] - expected).abs() < 1e-12,
            "{} vs {}",
            rho[0],
            expected
        );
        // Frozen value of the oracle above.
        assert!(
            (rho[0] - 0.122_934_146_556_582_87).abs() < 1e-12,
            "{}",
            rho[0]
        );
    }

    #[test]
    fn empty_catalog_is_rejected() {
        assert!(matches!(
            zipf_popularity(0, 1.0),
            Err(Error::InvalidCatalog(_))
        ));
    }

    proptest! {
        #[test]
        fn sums_to_one_and_is_monotone(n in 1usize..500, alpha in 0.0f64..3.0) {
            let rho = zipf_popularity(n, alpha).unwrap();
            let s: f64 = rho.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            for w in rho.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
