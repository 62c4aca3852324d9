//! Chi-square survival function and standard normal quantile, with domain
//! checks, on top of `statrs`.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{domain, Result};

/// Survival function of the chi-square distribution with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return domain("chi-square degrees of freedom must be at least 1");
    }
    if !(x >= 0.0) {
        return domain(format!("chi-square argument {x} must be nonnegative"));
    }
    let dist = ChiSquared::new(k as f64).expect("positive degrees of freedom");
    Ok(dist.sf(x))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile needs p in (0, 1), got {p}"));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_examples() {
        for k in 1..6 {
            assert_eq!(chi_square_sf(0.0, k).unwrap(), 1.0);
        }
        assert!((chi_square_sf(3.841_458_820_694_124, 1).unwrap() - 0.05).abs() < 1e-12);
        assert!((chi_square_sf(5.991_464_547_107_979, 2).unwrap() - 0.05).abs() < 1e-12);
        assert!(chi_square_sf(-1.0, 1).is_err());
        assert!(chi_square_sf(f64::NAN, 1).is_err());
        assert!(chi_square_sf(1.0, 0).is_err());
    }

    #[test]
    fn two_degrees_of_freedom_is_exponential() {
        for i in 0..200 {
            let x = i as f64 * 0.37;
            let exact = (-0.5 * x).exp();
            assert!((chi_square_sf(x, 2).unwrap() - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn one_degree_of_freedom_far_tail() {
        // 30-digit values of erfc(sqrt(x / 2))
        let table = [
            (20.0, 7.744_216_431_044_083_6e-6),
            (112.469_302_585_357_27, 2.819_974_318_584_473_6e-26),
            (300.0, 3.294_362_383_314_041_2e-67),
            (700.0, 2.990_226_975_124_620_3e-154),
        ];
        for (x, p) in table {
            let ours = chi_square_sf(x, 1).unwrap();
            assert!((ours - p).abs() <= 1e-11 * p, "x={x}: {ours} vs {p}");
        }
    }

    #[test]
    fn normal_quantile_reference_values() {
        // 30-digit values of sqrt(2) erfinv(2p - 1)
        let table = [
            (1e-10, -6.361_340_902_404_056_2),
            (1e-6, -4.753_424_308_822_899),
            (0.001, -3.090_232_306_167_813_5),
            (0.025, -1.959_963_984_540_054_2),
            (0.238, -0.712_750_760_220_042_9),
            (0.5, 0.0),
            (0.9, 1.281_551_565_544_600_5),
            (0.975, 1.959_963_984_540_054_2),
        ];
        for (p, z) in table {
            let ours = normal_quantile(p).unwrap();
            assert!(
                (ours - z).abs() < 1e-12 * (1.0 + z.abs()),
                "p={p}: {ours} vs {z}"
            );
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
