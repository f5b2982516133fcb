//! Restarted Arnoldi iteration for the largest-modulus eigenvalue of a real,
//! matrix-free operator.
//!
//! The Krylov basis is fully reorthogonalized (two Gram-Schmidt passes). Ritz
//! values come from the Schur form of the projected Hessenberg matrix; the
//! Ritz vector of the leading value is recovered by inverse iteration on that
//! small matrix, which also gives the usual residual estimate
//! `|h[m+1,m]| * |y[m]|`.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// A real linear map applied without materializing its matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`. `y` arrives with unspecified contents.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    /// Relative residual tolerance on the leading Ritz pair.
    pub tol: f64,
    /// Absolute floor added to the tolerance (handles a zero leading value).
    pub abs_tol: f64,
    pub max_subspace: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-10, abs_tol: 1e-13, max_subspace: 80, max_restarts: 60, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    /// Leading Ritz value.
    pub value: C64,
    /// Ritz vector (real part for complex values), unit norm.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Eigenvalues of a dense real matrix.
///
/// Symmetric input goes to the symmetric solver. Otherwise the real Schur
/// iteration runs with an iteration cap and, if it stalls, is retried on a
/// few random orthogonal similarity transforms of the input.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    let n = m.nrows();
    let scale = m.amax();
    if n == 0 || scale == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); n]);
    }
    if (m - m.transpose()).amax() <= 1e-13 * scale {
        let sym = (m + m.transpose()) * 0.5;
        return Ok(sym.symmetric_eigenvalues().iter().map(|&x| C64::new(x, 0.0)).collect());
    }
    let max_niter = 200 * n.max(10);
    // A deflation threshold of exactly machine epsilon can stall on
    // defective spectra, so loosen it step by step before rotating.
    let schur = |a: &DMatrix<f64>| {
        [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12].iter().find_map(|&eps| {
            Schur::try_new(a.clone(), eps, max_niter).map(|s| s.complex_eigenvalues().iter().copied().collect())
        })
    };
    if let Some(ev) = schur(m) {
        return Ok(ev);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    for _ in 0..4 {
        let q = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).qr().q();
        if let Some(ev) = schur(&(q.transpose() * m * &q)) {
            return Ok(ev);
        }
    }
    Err(Error::NotConverged { iterations: 25 * max_niter, residual: f64::NAN })
}

/// Eigenvector of a small complex matrix for a known eigenvalue, by two steps
/// of shifted inverse iteration.
fn small_eigvec(h: &DMatrix<f64>, theta: C64) -> DVector<C64> {
    let k = h.nrows();
    let scale = h.norm().max(1e-300);
    let shift = theta + C64::new(scale * 1e-11, scale * 1e-12);
    let mut a: DMatrix<C64> = h.map(|x| C64::new(x, 0.0));
    for i in 0..k {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut y = DVector::from_fn(k, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.3));
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(z) => {
                let nz = z.norm();
                if !nz.is_finite() || nz == 0.0 {
                    break;
                }
                y = z.unscale(nz);
            }
            None => break,
        }
    }
    let ny = y.norm();
    y.unscale(ny)
}

/// Largest-modulus eigenpair of `op`.
pub fn largest_eigenpair(op: &dyn LinearOperator, opts: &KrylovOptions) -> Result<KrylovOutcome> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Param("empty operator".into()));
    }
    let m_max = opts.max_subspace.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut total = 0usize;
    let mut last_residual = f64::INFINITY;

    for _restart in 0..=opts.max_restarts {
        let s = norm(&start);
        if s == 0.0 {
            start = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            continue;
        }
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / s).collect()];
        let mut h = DMatrix::<f64>::zeros(m_max + 1, m_max);
        let mut w = vec![0.0; n];
        let mut best: Option<(C64, DVector<C64>, usize)> = None;

        for j in 0..m_max {
            op.apply(&basis[j], &mut w);
            total += 1;
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[(i, j)] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let beta = norm(&w);
            h[(j + 1, j)] = beta;
            let k = j + 1;
            let hk = h.view((0, 0), (k, k)).into_owned();
            let invariant = beta <= 1e-13 * hk.norm().max(1e-300) || beta == 0.0;
            if invariant || k == m_max || k % 4 == 0 || k == n {
                let eig = dense_eigenvalues(&hk)?;
                let theta = eig
                    .iter()
                    .copied()
                    .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                    .expect("non-empty");
                let y = small_eigvec(&hk, theta);
                let residual = if invariant { 0.0 } else { beta * y[k - 1].norm() };
                last_residual = residual;
                best = Some((theta, y, k));
                if residual <= opts.tol * theta.norm() + opts.abs_tol || invariant || k == n {
                    let (theta, y, k) = best.unwrap();
                    let vector = ritz_vector(&basis, &y, k, n);
                    return Ok(KrylovOutcome { value: theta, vector, residual, iterations: total });
                }
            }
            if invariant {
                break;
            }
            basis.push(w.iter().map(|x| x / beta).collect());
        }

        if let Some((_, y, k)) = best {
            let re = ritz_vector(&basis, &y, k, n);
            let im = ritz_vector_imag(&basis, &y, k, n);
            start = re.iter().zip(&im).map(|(a, b)| a + b).collect();
        }
    }
    Err(Error::NotConverged { iterations: total, residual: last_residual })
}

fn ritz_vector(basis: &[Vec<f64>], y: &DVector<C64>, k: usize, n: usize) -> Vec<f64> {
    // Rotate so the largest component is real before taking the real part.
    let pivot = y.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { C64::new(1.0, 0.0) };
    let mut out = vec![0.0; n];
    for i in 0..k {
        axpy((y[i] * phase).re, &basis[i], &mut out);
    }
    let s = norm(&out);
    if s > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    }
    out
}

fn ritz_vector_imag(basis: &[Vec<f64>], y: &DVector<C64>, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..k {
        axpy(y[i].im, &basis[i], &mut out);
    }
    out
}

/// Smallest eigenvalue of a symmetric operator whose spectrum lies below
/// `upper`, computed as `upper - λmax(upper·I - A)`.
pub fn smallest_symmetric(op: &dyn LinearOperator, upper: f64, opts: &KrylovOptions) -> Result<(f64, KrylovOutcome)> {
    let shifted = FnOperator::new(op.dim(), |x: &[f64], y: &mut [f64]| {
        op.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = upper * xi - *yi;
        }
    });
    let out = largest_eigenpair(&shifted, opts)?;
    Ok((upper - out.value.re, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_op(m: DMatrix<f64>) -> impl LinearOperator {
        let n = m.nrows();
        FnOperator::new(n, move |x: &[f64], y: &mut [f64]| {
            let v = &m * DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        })
    }

    #[test]
    fn diagonal_leading_value() {
        let d = DMatrix::from_diagonal(&DVector::from_fn(200, |i, _| 1.0 / (1.0 + i as f64)));
        let out = largest_eigenpair(&dense_op(d), &KrylovOptions::default()).unwrap();
        assert!((out.value.re - 1.0).abs() < 1e-10);
        assert!(out.vector[0].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn complex_pair_is_found() {
        // Rotation block with modulus 0.9 dominates a decaying diagonal.
        let n = 60;
        let mut m = DMatrix::<f64>::zeros(n, n);
        m[(0, 0)] = 0.0;
        m[(0, 1)] = -0.9;
        m[(1, 0)] = 0.9;
        for i in 2..n {
            m[(i, i)] = 0.5 * (i as f64 / n as f64);
        }
        let out = largest_eigenpair(&dense_op(m), &KrylovOptions::default()).unwrap();
        assert!((out.value.norm() - 0.9).abs() < 1e-9);
        assert!((out.value.im.abs() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn zero_operator_is_exact() {
        let op = FnOperator::new(10, |_: &[f64], y: &mut [f64]| y.fill(0.0));
        let out = largest_eigenpair(&op, &KrylovOptions::default()).unwrap();
        assert_eq!(out.value.norm(), 0.0);
    }

    #[test]
    fn dense_eigenvalues_symmetric_and_rotation() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut ev: Vec<f64> = dense_eigenvalues(&s).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(dense_eigenvalues(&r).unwrap().iter().all(|z| (z.norm() - 1.0).abs() < 1e-14 && z.im.abs() > 0.99));
    }

    #[test]
    fn smallest_of_symmetric() {
        let d = DMatrix::from_diagonal(&DVector::from_fn(50, |i, _| i as f64 - 3.5));
        let (lmin, _) = smallest_symmetric(&dense_op(d), 50.0, &KrylovOptions::default()).unwrap();
        assert!((lmin + 3.5).abs() < 1e-8);
    }
}
