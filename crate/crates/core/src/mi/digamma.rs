use crate::error::{invalid, Result};

pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

const DIRECT_LIMIT: u64 = 64;

/// Digamma at a positive integer: `psi(1) = -C`, `psi(n + 1) = psi(n) + 1/n`.
pub fn digamma(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(invalid("digamma is defined here for n >= 1"));
    }
    Ok(digamma_unchecked(n))
}

pub(crate) fn digamma_unchecked(n: u64) -> f64 {
    if n <= DIRECT_LIMIT {
        let mut acc = -EULER_MASCHERONI;
        for i in 1..n {
            acc += 1.0 / i as f64;
        }
        acc
    } else {
        // Asymptotic series; truncation error < 1e-16 for n > 64.
        let x = n as f64;
        let x2 = 1.0 / (x * x);
        x.ln() - 0.5 / x - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 / 252.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert!((digamma(1).unwrap() + 0.5772156).abs() < 1e-7);
        assert!((digamma(2).unwrap() - 0.4227843).abs() < 1e-7);
        // psi(1) + 1 + 1/2 + 1/3 + 1/4
        assert!((digamma(5).unwrap() - 1.5061176).abs() < 1e-7);
    }

    #[test]
    fn zero_rejected() {
        assert!(digamma(0).is_err());
    }

    #[test]
    fn recursion_holds_across_regimes() {
        for n in 1..500u64 {
            let lhs = digamma(n + 1).unwrap();
            let rhs = digamma(n).unwrap() + 1.0 / n as f64;
            assert!((lhs - rhs).abs() < 1e-13, "n = {n}: {lhs} vs {rhs}");
        }
    }
}
