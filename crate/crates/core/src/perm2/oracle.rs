//! Dense reference implementation of the second-moment operator on the full
//! `D⁴`-dimensional space, via the Weingarten formula for each gate. Only
//! meant for tiny systems, as an independent check of the basis engine.
//!
//! Layout: vector index `row * D² + col` with `row = r1 * D + r2`; a one-copy
//! index has site 0 as its most significant digit.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sort_desc, Sigma, SigmaString};
use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::krylov::{dense_eigenvalues, C64};

#[derive(Clone, Debug)]
pub struct OracleLimits {
    /// Largest admissible `D⁴`.
    pub max_dim: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_dim: 4096 }
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Index tables splitting a one-copy index into support and complement parts.
struct Split {
    d_a: usize,
    d_b: usize,
    combine: Vec<usize>,
}

impl Split {
    fn new(support: &[usize], dims: &[usize]) -> Self {
        let d: usize = dims.iter().product();
        let st = strides(dims);
        let comp: Vec<usize> = (0..dims.len()).filter(|i| !support.contains(i)).collect();
        let d_a: usize = support.iter().map(|&i| dims[i]).product();
        let d_b: usize = comp.iter().map(|&i| dims[i]).product();
        let radix = |r: usize, sites: &[usize]| sites.iter().fold(0, |acc, &i| acc * dims[i] + (r / st[i]) % dims[i]);
        let mut combine = vec![0; d];
        for r in 0..d {
            combine[radix(r, support) * d_b + radix(r, &comp)] = r;
        }
        Split { d_a, d_b, combine }
    }

    fn at(&self, a: usize, b: usize) -> usize {
        self.combine[a * self.d_b + b]
    }
}

fn apply_gate(x: &[f64], sp: &Split, d: usize) -> Vec<f64> {
    let (da, db) = (sp.d_a, sp.d_b);
    let daf = da as f64;
    let wg_same = 1.0 / (daf * daf - 1.0);
    let wg_diff = -1.0 / (daf * (daf * daf - 1.0));
    let d2 = d * d;
    let idx = |r1: usize, r2: usize, c1: usize, c2: usize| (r1 * d + r2) * d2 + c1 * d + c2;
    let mut out = vec![0.0; x.len()];
    for b1 in 0..db {
        for b2 in 0..db {
            for b1p in 0..db {
                for b2p in 0..db {
                    let (mut ye, mut ys) = (0.0, 0.0);
                    for a1 in 0..da {
                        for a2 in 0..da {
                            ye += x[idx(sp.at(a1, b1), sp.at(a2, b2), sp.at(a1, b1p), sp.at(a2, b2p))];
                            ys += x[idx(sp.at(a2, b1), sp.at(a1, b2), sp.at(a1, b1p), sp.at(a2, b2p))];
                        }
                    }
                    let ce = wg_same * ye + wg_diff * ys;
                    let cs = wg_diff * ye + wg_same * ys;
                    if ce == 0.0 && cs == 0.0 {
                        continue;
                    }
                    for a1 in 0..da {
                        for a2 in 0..da {
                            out[idx(sp.at(a1, b1), sp.at(a2, b2), sp.at(a1, b1p), sp.at(a2, b2p))] += ce;
                            out[idx(sp.at(a1, b1), sp.at(a2, b2), sp.at(a2, b1p), sp.at(a1, b2p))] += cs;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Dense `D⁴ × D⁴` matrix of the full second-moment operator, for all
/// `repeat` periods of `arch`.
pub fn dense_moment_oracle(arch: &Architecture, limits: &OracleLimits) -> Result<DMatrix<f64>> {
    let dims = arch.site_dims();
    let d: usize = dims.iter().product();
    let n = d.checked_pow(4).filter(|&n| n <= limits.max_dim).ok_or_else(|| Error::TooLarge {
        what: format!("dense moment oracle needs D^4 <= {}, D = {d}", limits.max_dim),
    })?;
    let splits: Vec<Split> = arch.gates().iter().map(|g| Split::new(&g.support, dims)).collect();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for _ in 0..arch.repeat() {
            for sp in &splits {
                v = apply_gate(&v, sp, d);
            }
        }
        m.column_mut(j).copy_from_slice(&v);
    }
    Ok(m)
}

/// The operator `⊗ σ_i` in the standard layout.
pub fn sigma_operator_standard(sigma: &SigmaString, dims: &[usize]) -> Result<Vec<f64>> {
    if sigma.len() != dims.len() {
        return Err(Error::LengthMismatch { expected: dims.len(), found: sigma.len() });
    }
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let mut v = vec![0.0; d * d * d * d];
    for r1 in 0..d {
        for r2 in 0..d {
            let (mut c1, mut c2) = (0, 0);
            for (i, s) in sigma.letters().iter().enumerate() {
                let (x1, x2) = ((r1 / st[i]) % dims[i], (r2 / st[i]) % dims[i]);
                let (y1, y2) = match s {
                    Sigma::I => (x1, x2),
                    Sigma::S => (x2, x1),
                };
                c1 += y1 * st[i];
                c2 += y2 * st[i];
            }
            v[(r1 * d + r2) * d * d + c1 * d + c2] = 1.0;
        }
    }
    Ok(v)
}

/// Nonzero part of the spectrum of a matrix of rank at most `rank`, through
/// a randomized range finder with `rank + 8` probes.
pub fn low_rank_spectrum(m: &DMatrix<f64>, rank: usize, seed: u64) -> Vec<C64> {
    let n = m.nrows();
    let k = (rank + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
    let q = (m * omega).qr().q();
    let b = q.transpose() * m * &q;
    let mut ev = dense_eigenvalues(&b).expect("eigenvalues of the projected matrix");
    sort_desc(&mut ev);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Architecture, Gate};

    #[test]
    fn single_qubit_twirl_maps_onto_commutant() {
        let a = Architecture::uniform(1, 2, vec![Gate::new([0])]).unwrap();
        let m = dense_moment_oracle(&a, &OracleLimits::default()).unwrap();
        let sq = &m * &m;
        assert!((&sq - &m).amax() < 1e-12);
        assert_eq!(m.rank(1e-9), 2);
        for s in ["I", "S"] {
            let v = nalgebra::DVector::from_vec(sigma_operator_standard(&s.parse().unwrap(), &[2]).unwrap());
            assert!((&m * &v - &v).amax() < 1e-12);
        }
    }

    #[test]
    fn size_guard() {
        let a = Architecture::uniform(4, 2, vec![Gate::new([0, 1, 2, 3])]).unwrap();
        assert!(matches!(dense_moment_oracle(&a, &OracleLimits::default()), Err(Error::TooLarge { .. })));
    }
}
