//! Closed-form subleading eigenvalues and depth thresholds, evaluated in
//! exact rational arithmetic and converted to `f64` at the end.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

fn int(x: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn pow(q: usize, e: usize) -> BigRational {
    BigRational::from_integer(num_traits::pow(BigInt::from(q), e))
}

fn check(n: usize, q: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Param(format!("closed forms need N >= 3, got {n}")));
    }
    if q < 2 {
        return Err(Error::Param(format!("local dimension must be >= 2, got {q}")));
    }
    Ok(())
}

/// `((q^{2N} − q⁴) / ((q^{2N} − q²)(q² + 1)))²`, exactly.
pub fn lambda_c_exact(n: usize, q: usize) -> Result<BigRational> {
    check(n, q)?;
    let q2n = pow(q, 2 * n);
    let r = (&q2n - pow(q, 4)) / ((&q2n - pow(q, 2)) * (pow(q, 2) + BigRational::one()));
    Ok(&r * &r)
}

/// `((q² − 1) / (q^N − q^{2−N}))²`, exactly.
pub fn lambda_c_prime_exact(n: usize, q: usize) -> Result<BigRational> {
    check(n, q)?;
    // multiply through by q^N
    let r = (pow(q, 2) - BigRational::one()) * pow(q, n) / (pow(q, 2 * n) - pow(q, 2));
    Ok(&r * &r)
}

/// `(Q1² − 1) Q2² (Q3² − 1) / ((Q1² Q2² − 1)(Q2² Q3² − 1))`, exactly.
pub fn brickwork3_lambda_exact(q1: usize, q2: usize, q3: usize) -> Result<BigRational> {
    if q1.min(q2).min(q3) < 2 {
        return Err(Error::Param("local dimensions must be >= 2".into()));
    }
    let (a, b, c) = (pow(q1, 2), pow(q2, 2), pow(q3, 2));
    let one = BigRational::one();
    Ok((&a - &one) * &b * (&c - &one) / ((&a * &b - &one) * (&b * &c - &one)))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn lambda_c(n: usize, q: usize) -> Result<f64> {
    lambda_c_exact(n, q).map(|r| to_f64(&r))
}

pub fn lambda_c_prime(n: usize, q: usize) -> Result<f64> {
    lambda_c_prime_exact(n, q).map(|r| to_f64(&r))
}

pub fn brickwork3_lambda(q1: usize, q2: usize, q3: usize) -> Result<f64> {
    brickwork3_lambda_exact(q1, q2, q3).map(|r| to_f64(&r))
}

/// Depth at which `q^{2Nt} λ′^d` falls below `λ^d`, with the resulting
/// error bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthThreshold {
    pub d: usize,
    /// `q^{2Nt} λ′^d`.
    pub eps_a_bound: f64,
    /// Half the additive bound.
    pub eps_m_bound: f64,
    /// The `q = t = 2` display `1 + ⌊2 / (1 + log₂|(1 − 16·4^{−N})/15| / N)⌋`,
    /// when applicable.
    pub specialized_d: Option<usize>,
    /// The `q = t = 2` display `8^N (3 / (2^N − 4·2^{−N}))^{2d}`.
    pub specialized_eps_a: Option<f64>,
}

impl DepthThreshold {
    /// Ratio of the general additive bound to the specialized display.
    pub fn prefactor_ratio(&self) -> Option<f64> {
        self.specialized_eps_a.map(|s| self.eps_a_bound / s)
    }
}

/// `d = 1 + ⌊2Nt log q / log(λ/λ′)⌋` and the matching error bounds.
pub fn depth_threshold(n: usize, t: usize, q: usize, lam: f64, lam_prime: f64) -> Result<DepthThreshold> {
    if lam.partial_cmp(&lam_prime) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NoCrossover { lam, lam_prime });
    }
    if lam_prime.is_nan() || lam_prime <= 0.0 {
        return Err(Error::Param(format!("lambda' must be positive, got {lam_prime}")));
    }
    let x = 2.0 * (n * t) as f64 * (q as f64).ln() / (lam / lam_prime).ln();
    let d = 1 + x.floor() as usize;
    let log_bound = 2.0 * (n * t) as f64 * (q as f64).ln() + d as f64 * lam_prime.ln();
    let eps_a_bound = log_bound.exp();
    let (specialized_d, specialized_eps_a) = if q == 2 && t == 2 {
        let nf = n as f64;
        let denom = 1.0 + ((1.0 - 16.0 * 4f64.powf(-nf)) / 15.0).abs().log2() / nf;
        let sd = (denom > 0.0).then(|| 1 + (2.0 / denom).floor() as usize);
        let base = 3.0 / (2f64.powf(nf) - 4.0 * 2f64.powf(-nf));
        let se = (nf * 8f64.ln() + 2.0 * d as f64 * base.ln()).exp();
        (sd, Some(se))
    } else {
        (None, None)
    };
    Ok(DepthThreshold { d, eps_a_bound, eps_m_bound: eps_a_bound / 2.0, specialized_d, specialized_eps_a })
}

/// [`depth_threshold`] at `q = t = 2` using the closed-form `λ` and `λ′`.
pub fn qubit_depth_threshold(n: usize) -> Result<DepthThreshold> {
    depth_threshold(n, 2, 2, lambda_c(n, 2)?, lambda_c_prime(n, 2)?)
}

/// `(1 / (q² + 1))²`, the large-`N` limit of `lambda_c`.
pub fn lambda_c_limit(q: usize) -> f64 {
    let r = int(1) / (pow(q, 2) + int(1));
    to_f64(&(&r * &r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_qubit_values() {
        // nine printed digits, truncated
        assert!((lambda_c(5, 2).unwrap() - 0.039064358).abs() < 2e-9);
        assert!((lambda_c_prime(5, 2).unwrap() - 0.008858131).abs() < 2e-9);
        let r = BigRational::new(BigInt::from(1008), BigInt::from(5100));
        assert_eq!(lambda_c_exact(5, 2).unwrap(), &r * &r);
    }

    #[test]
    fn brickwork_values() {
        assert_eq!(brickwork3_lambda_exact(2, 2, 2).unwrap(), BigRational::new(36.into(), 225.into()));
        assert_eq!(brickwork3_lambda_exact(2, 2, 8).unwrap(), BigRational::new(756.into(), 3825.into()));
        assert_eq!(brickwork3_lambda_exact(3, 5, 7).unwrap(), brickwork3_lambda_exact(7, 5, 3).unwrap());
    }

    #[test]
    fn cross_identities() {
        for (n, q) in [(5, 2), (4, 3), (6, 2), (7, 3)] {
            let b = brickwork3_lambda_exact(q, q, q.pow(n as u32 - 2)).unwrap();
            assert_eq!(lambda_c_exact(n, q).unwrap(), &b * &b);
            assert_eq!(lambda_c_prime_exact(n, q).unwrap(), brickwork3_lambda_exact(q, q.pow(n as u32 - 2), q).unwrap());
        }
    }

    #[test]
    fn large_n_limits() {
        assert!((lambda_c(12, 2).unwrap() - 0.04).abs() < 2e-6);
        assert!(lambda_c_prime(40, 2).unwrap() < 1e-20);
        for q in [2, 3] {
            let lim = lambda_c_limit(q);
            let mut prev = 0.0;
            for n in 4..20 {
                let v = lambda_c(n, q).unwrap();
                assert!(v > prev && v < lim);
                assert!(lim - v <= 4.0 * (q as f64).powi(4) / (q as f64).powi(2 * n as i32));
                prev = v;
            }
        }
    }

    #[test]
    fn depth_at_five() {
        let t = qubit_depth_threshold(5).unwrap();
        assert_eq!(t.d, 10);
        assert_eq!(t.specialized_d, Some(10));
        let expected = 2f64.powi(20) * lambda_c_prime(5, 2).unwrap().powi(10);
        assert!((t.eps_a_bound / expected - 1.0).abs() < 1e-12);
        assert!((t.eps_a_bound - 3.1e-15).abs() < 0.05e-15);
        assert!((t.prefactor_ratio().unwrap() - 32.0).abs() < 1e-9);
    }

    #[test]
    fn formulas_agree_where_defined() {
        for n in 5..=20 {
            let t = qubit_depth_threshold(n).unwrap();
            assert_eq!(Some(t.d), t.specialized_d, "N = {n}");
        }
        for n in [3, 4] {
            assert!(matches!(qubit_depth_threshold(n), Err(Error::NoCrossover { .. })));
        }
    }

    #[test]
    fn equal_lambdas_rejected() {
        let e = depth_threshold(5, 2, 2, 0.1, 0.1).unwrap_err();
        assert!(e.to_string().starts_with("no crossover at this N"));
    }
}
