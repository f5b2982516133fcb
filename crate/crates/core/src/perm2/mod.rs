//! Second-moment transfer engine in the {I, S} product basis.
//!
//! For `t = 2` the image of every Haar twirl is spanned by products of
//! per-site identity (`I`) and two-copy swap (`S`) operators. Restricted to
//! that 2^N-dimensional span, the twirl of a gate on support `A` is a
//! Gram-orthogonal projector with at most two nonzeros per column: a string
//! constant on `A` is fixed, and a mixed string maps to a combination of the
//! all-`I` and all-`S` strings on `A`.
//!
//! Basis index convention: bit `i` of an index is set when site `i` carries
//! `S`. The Gram metric is the Kronecker product of the per-site matrices
//! `[[q², q], [q, q²]]`.
//!
//! Every nonzero eigenvalue of the full 16^N-dimensional moment operator of a
//! covered architecture lives in this span, so spectra computed here are the
//! spectra of the circuit.

mod oracle;

pub use oracle::{dense_moment_oracle, low_rank_spectrum, sigma_operator_standard, OracleLimits};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::krylov::{dense_eigenvalues, largest_eigenpair, KrylovOptions, LinearOperator, C64};

/// One letter of a [`SigmaString`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sigma {
    I,
    S,
}

/// A word over {I, S}; position `i` is site `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SigmaString(Vec<Sigma>);

impl SigmaString {
    pub fn new(word: Vec<Sigma>) -> Self {
        SigmaString(word)
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        SigmaString((0..n).map(|i| if index >> i & 1 == 1 { Sigma::S } else { Sigma::I }).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().enumerate().map(|(i, &s)| usize::from(s == Sigma::S) << i).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Sigma] {
        &self.0
    }
}

impl FromStr for SigmaString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                'I' => Ok(Sigma::I),
                'S' => Ok(Sigma::S),
                other => Err(Error::Param(format!("invalid letter `{other}` in sigma string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SigmaString)
    }
}

impl fmt::Display for SigmaString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Sigma::I => "I",
                Sigma::S => "S",
            })?;
        }
        Ok(())
    }
}

/// Hilbert-Schmidt inner product of two basis strings.
pub fn gram_entry(sigma: &SigmaString, tau: &SigmaString, site_dims: &[usize]) -> Result<f64> {
    if sigma.len() != tau.len() {
        return Err(Error::LengthMismatch { expected: sigma.len(), found: tau.len() });
    }
    if sigma.len() != site_dims.len() {
        return Err(Error::LengthMismatch { expected: site_dims.len(), found: sigma.len() });
    }
    Ok(sigma
        .0
        .iter()
        .zip(&tau.0)
        .zip(site_dims)
        .map(|((a, b), &q)| if a == b { (q * q) as f64 } else { q as f64 })
        .product())
}

/// Applies a Kronecker product of per-site 2×2 matrices `[m00, m01, m10, m11]`
/// in place.
fn kron_apply(x: &mut [f64], mats: &[[f64; 4]]) {
    for (i, m) in mats.iter().enumerate() {
        let bit = 1usize << i;
        for lo in 0..x.len() {
            if lo & bit != 0 {
                continue;
            }
            let hi = lo | bit;
            let (a, b) = (x[lo], x[hi]);
            x[lo] = m[0] * a + m[1] * b;
            x[hi] = m[2] * a + m[3] * b;
        }
    }
}

/// The Gram metric of the basis, stored per site.
#[derive(Clone, Debug)]
pub struct Gram {
    site_dims: Vec<usize>,
}

impl Gram {
    pub fn new(site_dims: &[usize]) -> Self {
        Gram { site_dims: site_dims.to_vec() }
    }

    pub fn dim(&self) -> usize {
        1 << self.site_dims.len()
    }

    fn site_mats(&self, f: impl Fn(f64) -> [f64; 4]) -> Vec<[f64; 4]> {
        self.site_dims.iter().map(|&q| f(q as f64)).collect()
    }

    pub fn apply(&self, x: &mut [f64]) {
        kron_apply(x, &self.site_mats(|q| [q * q, q, q, q * q]));
    }

    pub fn apply_inverse(&self, x: &mut [f64]) {
        kron_apply(
            x,
            &self.site_mats(|q| {
                let s = 1.0 / (q * (q * q - 1.0));
                [q * s, -s, -s, q * s]
            }),
        );
    }

    fn sqrt_mats(&self, inverse: bool) -> Vec<[f64; 4]> {
        self.site_mats(|q| {
            // eigenvalues q² ± q on (1, ±1)/√2
            let (mut p, mut m) = ((q * q + q).sqrt(), (q * q - q).sqrt());
            if inverse {
                p = 1.0 / p;
                m = 1.0 / m;
            }
            let d = 0.5 * (p + m);
            let o = 0.5 * (p - m);
            [d, o, o, d]
        })
    }

    pub fn apply_sqrt(&self, x: &mut [f64]) {
        kron_apply(x, &self.sqrt_mats(false));
    }

    pub fn apply_inv_sqrt(&self, x: &mut [f64]) {
        kron_apply(x, &self.sqrt_mats(true));
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let len = self.site_dims.len();
        for i in 0..n {
            for j in 0..n {
                let a = SigmaString::from_index(i, len);
                let b = SigmaString::from_index(j, len);
                m[(i, j)] = gram_entry(&a, &b, &self.site_dims).unwrap();
            }
        }
        m
    }

    /// Similarity transform `G^{1/2} A G^{-1/2}` of a dense matrix, which
    /// turns Gram adjoints into ordinary transposes.
    pub fn orthonormalize(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = a.clone();
        // right-multiply by G^{-1/2} (symmetric): rows of A ↦ G^{-1/2} rowᵀ
        for r in 0..n {
            let mut row: Vec<f64> = (0..n).map(|c| out[(r, c)]).collect();
            self.apply_inv_sqrt(&mut row);
            for c in 0..n {
                out[(r, c)] = row[c];
            }
        }
        for c in 0..n {
            let mut col: Vec<f64> = out.column(c).iter().copied().collect();
            self.apply_sqrt(&mut col);
            out.set_column(c, &DVector::from_vec(col));
        }
        out
    }
}

/// Gram-orthogonal projector of one gate's twirl, stored column-wise with at
/// most two nonzeros per column.
#[derive(Clone, Debug)]
pub struct GateProjector {
    mask: usize,
    rows: Vec<[u32; 2]>,
    vals: Vec<[f64; 2]>,
}

impl GateProjector {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn mask(&self) -> usize {
        self.mask
    }

    /// Nonzero entries `(row, value)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[j]
            .iter()
            .zip(&self.vals[j])
            .filter(|(_, &v)| v != 0.0)
            .map(|(&r, &v)| (r as usize, v))
    }

    /// `y = P x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_add(x, y);
    }

    /// `y += P x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        for (j, (&[r0, r1], &[v0, v1])) in self.rows.iter().zip(&self.vals).enumerate() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            y[r0 as usize] += v0 * xj;
            y[r1 as usize] += v1 * xj;
        }
    }

    /// `y = Pᵀ x`.
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        for (j, (&[r0, r1], &[v0, v1])) in self.rows.iter().zip(&self.vals).enumerate() {
            y[j] = v0 * x[r0 as usize] + v1 * x[r1 as usize];
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for (r, v) in self.column(j) {
                m[(r, j)] += v;
            }
        }
        m
    }
}

/// Builds the basis-space projector for a Haar gate on `support`.
pub fn gate_transfer(support: &[usize], site_dims: &[usize]) -> Result<GateProjector> {
    if support.is_empty() {
        return Err(Error::Param("empty support".into()));
    }
    let n = site_dims.len();
    if n > 30 {
        return Err(Error::TooLarge { what: format!("{n} sites exceeds the 2^30 basis limit") });
    }
    let mut mask = 0usize;
    for &s in support {
        if s >= n {
            return Err(Error::Param(format!("site {s} out of range")));
        }
        mask |= 1 << s;
    }
    let d: f64 = support.iter().map(|&s| site_dims[s] as f64).product();
    let inv_q: Vec<f64> = site_dims.iter().map(|&q| 1.0 / q as f64).collect();
    let denom = 1.0 - 1.0 / (d * d);
    let dim = 1usize << n;
    let mut rows = Vec::with_capacity(dim);
    let mut vals = Vec::with_capacity(dim);
    for x in 0..dim {
        let on = x & mask;
        if on == 0 || on == mask {
            rows.push([x as u32, x as u32]);
            vals.push([1.0, 0.0]);
            continue;
        }
        // Support-restricted overlaps with I_A and S_A, divided by D².
        let (mut a, mut b) = (1.0, 1.0);
        for &s in support {
            if x >> s & 1 == 1 {
                a *= inv_q[s];
            } else {
                b *= inv_q[s];
            }
        }
        let c_i = (a - b / d) / denom;
        let c_s = (b - a / d) / denom;
        rows.push([(x & !mask) as u32, (x | mask) as u32]);
        vals.push([c_i, c_s]);
    }
    Ok(GateProjector { mask, rows, vals })
}

/// Ordered product of per-gate projectors for one period of an architecture.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    site_dims: Vec<usize>,
    gates: Vec<GateProjector>,
    fixed: GateProjector,
    gram: Gram,
}

impl TransferOperator {
    pub fn assemble(arch: &Architecture) -> Result<Self> {
        let dims = arch.site_dims();
        let gates = arch
            .gates()
            .iter()
            .map(|g| gate_transfer(&g.support, dims))
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<usize> = (0..dims.len()).collect();
        Ok(TransferOperator {
            site_dims: dims.to_vec(),
            gates,
            fixed: gate_transfer(&all, dims)?,
            gram: Gram::new(dims),
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.site_dims.len()
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn gates(&self) -> &[GateProjector] {
        &self.gates
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    /// Projector onto the span of the all-I and all-S strings.
    pub fn fixed_projector(&self) -> &GateProjector {
        &self.fixed
    }

    /// `y = M x` for one period (first gate applied first).
    pub fn apply_period(&self, x: &[f64], y: &mut [f64]) {
        apply_chain(self.gates.iter(), x, y);
    }

    /// `y = M† x`, the Gram adjoint, which is the reversed product.
    pub fn apply_period_adjoint(&self, x: &[f64], y: &mut [f64]) {
        apply_chain(self.gates.iter().rev(), x, y);
    }

    /// Dense matrix of one period.
    pub fn dense_period(&self) -> DMatrix<f64> {
        dense_from(self.dim(), |x, y| self.apply_period(x, y))
    }
}

fn apply_chain<'a>(gates: impl Iterator<Item = &'a GateProjector>, x: &[f64], y: &mut [f64]) {
    let mut cur = x.to_vec();
    let mut tmp = vec![0.0; x.len()];
    for g in gates {
        g.apply(&cur, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
    }
    y.copy_from_slice(&cur);
}

/// Dense matrix of a linear map given by its action.
pub fn dense_from(n: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        f(&e, &mut col);
        m.set_column(j, &DVector::from_column_slice(&col));
        e[j] = 0.0;
    }
    m
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    Krylov,
}

#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Number of periods; `None` uses the architecture's `repeat`.
    pub periods: Option<usize>,
    /// Also compute the largest singular value of the deflated operator.
    pub singular: bool,
    /// Also return the subleading eigenvector (coefficients in the basis).
    pub vector: bool,
    /// Largest basis dimension handled by dense factorization.
    pub dense_max_dim: usize,
    pub krylov: KrylovOptions,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            periods: None,
            singular: false,
            vector: false,
            dense_max_dim: 256,
            krylov: KrylovOptions::default(),
        }
    }
}

impl SpectrumOptions {
    pub fn singular() -> Self {
        SpectrumOptions { singular: true, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    /// Eigenvalues of the (undeflated) operator, descending modulus. The
    /// dense path returns the full spectrum; the Krylov path returns the
    /// unit eigenvalues and the converged subleading value only.
    pub eigenvalues: Vec<C64>,
    pub unit_multiplicity: usize,
    /// Largest-modulus eigenvalue after deflating the fixed space.
    pub subleading: C64,
    /// `1 - |subleading|`.
    pub gap: f64,
    pub singular_subleading: Option<f64>,
    pub subleading_vector: Option<Vec<f64>>,
    pub method: SolveMethod,
    pub periods: usize,
}

impl SpectrumResult {
    /// Modulus of the subleading eigenvalue.
    pub fn lambda(&self) -> f64 {
        self.subleading.norm()
    }
}

pub(crate) fn sort_desc(v: &mut [C64]) {
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

const UNIT_TOL: f64 = 1e-8;

/// Eigen- and singular spectrum of `period^periods` after deflating the
/// fixed space, for an operator that is a product (or average) of
/// Gram-orthogonal projectors each fixing the all-I and all-S strings.
pub(crate) fn deflated_spectrum(
    period: &dyn LinearOperator,
    adjoint: &dyn LinearOperator,
    fixed: &GateProjector,
    gram: &Gram,
    periods: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    let n = period.dim();
    let p = periods.max(1) as i32;
    if periods == 0 {
        return Err(Error::Param("periods must be >= 1".into()));
    }
    // Work in Gram-orthonormal coordinates, where Gram adjoints are
    // transposes and self-adjoint operators are symmetric.
    if n <= opts.dense_max_dim {
        let m = gram.orthonormalize(&dense_from(n, |x, y| period.apply(x, y)));
        let pi = gram.orthonormalize(&fixed.to_dense());
        let a = &m - &pi;
        let mut eig: Vec<C64> = dense_eigenvalues(&m)?.iter().map(|z| z.powi(p)).collect();
        sort_desc(&mut eig);
        let unit_multiplicity = eig.iter().filter(|z| (*z - C64::new(1.0, 0.0)).norm() < UNIT_TOL).count();
        let mut deflated = dense_eigenvalues(&a)?;
        sort_desc(&mut deflated);
        let lead = deflated[0];
        let subleading = lead.powi(p);
        let subleading_vector = if opts.vector && lead.im.abs() <= 1e-10 * lead.norm().max(1.0) {
            let mut v = real_eigvec(&a, lead.re);
            gram.apply_inv_sqrt(&mut v);
            Some(v)
        } else {
            None
        };
        let singular_subleading = if opts.singular {
            let mut ap = a.clone();
            for _ in 1..p {
                ap = &ap * &a;
            }
            Some(ap.singular_values().max())
        } else {
            None
        };
        return Ok(SpectrumResult {
            eigenvalues: eig,
            unit_multiplicity,
            subleading,
            gap: 1.0 - subleading.norm(),
            singular_subleading,
            subleading_vector,
            method: SolveMethod::Dense,
            periods,
        });
    }

    let deflated = DeflatedOp { inner: period, fixed };
    let out = largest_eigenpair(&Orthonormal { inner: &deflated, gram }, &opts.krylov)?;
    let subleading = out.value.powi(p);
    let singular_subleading = if opts.singular {
        let gram_op = GramOp { period, adjoint, fixed, periods };
        let s2 = largest_eigenpair(&Orthonormal { inner: &gram_op, gram }, &opts.krylov)?;
        Some(s2.value.re.max(0.0).sqrt())
    } else {
        None
    };
    let subleading_vector = opts.vector.then(|| {
        let mut v = out.vector.clone();
        gram.apply_inv_sqrt(&mut v);
        v
    });
    let mut eigenvalues = vec![C64::new(1.0, 0.0); 2];
    eigenvalues.push(subleading);
    sort_desc(&mut eigenvalues);
    let unit_multiplicity = 2 + usize::from((out.value - C64::new(1.0, 0.0)).norm() < UNIT_TOL);
    Ok(SpectrumResult {
        eigenvalues,
        unit_multiplicity,
        subleading,
        gap: 1.0 - subleading.norm(),
        singular_subleading,
        subleading_vector,
        method: SolveMethod::Krylov,
        periods,
    })
}

/// Real eigenvector of `a` for eigenvalue `lambda` by inverse iteration.
fn real_eigvec(a: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    let n = a.nrows();
    let shift = lambda + 1e-10 * lambda.abs().max(1e-3);
    let mut s = a.clone();
    for i in 0..n {
        s[(i, i)] -= shift;
    }
    let lu = s.lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    for _ in 0..4 {
        if let Some(z) = lu.solve(&v) {
            let nz = z.norm();
            if nz.is_finite() && nz > 0.0 {
                v = z / nz;
            }
        }
    }
    v.as_slice().to_vec()
}

/// `G^{1/2} A G^{-1/2}`.
struct Orthonormal<'a> {
    inner: &'a dyn LinearOperator,
    gram: &'a Gram,
}

impl LinearOperator for Orthonormal<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut t = x.to_vec();
        self.gram.apply_inv_sqrt(&mut t);
        self.inner.apply(&t, y);
        self.gram.apply_sqrt(y);
    }
}

struct DeflatedOp<'a> {
    inner: &'a dyn LinearOperator,
    fixed: &'a GateProjector,
}

impl LinearOperator for DeflatedOp<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        let mut f = vec![0.0; x.len()];
        self.fixed.apply(x, &mut f);
        y.iter_mut().zip(&f).for_each(|(a, b)| *a -= b);
    }
}

/// `(M†)^p M^p - Π`, the Gram-normal operator of the deflated power.
struct GramOp<'a> {
    period: &'a dyn LinearOperator,
    adjoint: &'a dyn LinearOperator,
    fixed: &'a GateProjector,
    periods: usize,
}

impl LinearOperator for GramOp<'_> {
    fn dim(&self) -> usize {
        self.period.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut cur = x.to_vec();
        let mut tmp = vec![0.0; x.len()];
        for _ in 0..self.periods {
            self.period.apply(&cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        for _ in 0..self.periods {
            self.adjoint.apply(&cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        self.fixed.apply(x, &mut tmp);
        for ((yi, c), f) in y.iter_mut().zip(&cur).zip(&tmp) {
            *yi = c - f;
        }
    }
}

struct PeriodOp<'a>(&'a TransferOperator, bool);

impl LinearOperator for PeriodOp<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.1 {
            self.0.apply_period_adjoint(x, y)
        } else {
            self.0.apply_period(x, y)
        }
    }
}

/// Spectrum of the circuit's second-moment operator with the two-dimensional
/// fixed space deflated.
pub fn circuit_spectrum(arch: &Architecture, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    if let Some(site) = arch.first_uncovered() {
        return Err(Error::Uncovered { site });
    }
    let op = TransferOperator::assemble(arch)?;
    transfer_spectrum(&op, opts.periods.unwrap_or(arch.repeat()), opts)
}

pub fn transfer_spectrum(op: &TransferOperator, periods: usize, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    deflated_spectrum(&PeriodOp(op, false), &PeriodOp(op, true), &op.fixed, &op.gram, periods, opts)
}

/// Eigenvalues with modulus above `cutoff`, descending.
pub fn nonzero_spectrum(values: &[C64], cutoff: f64) -> Vec<C64> {
    let mut v: Vec<C64> = values.iter().copied().filter(|z| z.norm() > cutoff).collect();
    sort_desc(&mut v);
    v
}

/// Largest distance in an optimal-ish greedy pairing of two multisets, or
/// `None` when their sizes differ.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    let mut order: Vec<&C64> = a.iter().collect();
    order.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    for z in order {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        used[k] = true;
        worst = worst.max(d);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{brickwork3, hide_seek_c, hide_seek_c_prime, Architecture, Gate};

    fn s(x: &str) -> SigmaString {
        x.parse().unwrap()
    }

    #[test]
    fn gram_entries() {
        assert_eq!(gram_entry(&s("III"), &s("III"), &[2, 2, 2]).unwrap(), 64.0);
        assert_eq!(gram_entry(&s("IIS"), &s("III"), &[2, 2, 2]).unwrap(), 32.0);
        assert_eq!(gram_entry(&s("IS"), &s("SI"), &[3, 3]).unwrap(), 9.0);
        assert!(matches!(gram_entry(&s("IS"), &s("I"), &[2, 2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn sigma_string_index_roundtrip() {
        let x = s("ISSI");
        assert_eq!(x.index(), 0b0110);
        assert_eq!(SigmaString::from_index(6, 4), x);
        assert_eq!(x.to_string(), "ISSI");
        assert!("IX".parse::<SigmaString>().is_err());
    }

    #[test]
    fn two_qubit_gate_on_mixed_string() {
        let p = gate_transfer(&[0, 1], &[2, 2]).unwrap();
        // IS: site 0 = I, site 1 = S -> index 0b10
        let col: Vec<(usize, f64)> = p.column(0b10).collect();
        assert_eq!(col.len(), 2);
        assert_eq!(col[0].0, 0b00);
        assert_eq!(col[1].0, 0b11);
        assert!((col[0].1 - 0.4).abs() < 1e-15);
        assert!((col[1].1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn constant_strings_are_fixed() {
        let p = gate_transfer(&[1, 2], &[2, 3, 2, 2]).unwrap();
        for x in 0..16usize {
            let on = x & 0b0110;
            if on == 0 || on == 0b0110 {
                let col: Vec<_> = p.column(x).collect();
                assert_eq!(col, vec![(x, 1.0)]);
            }
        }
    }

    #[test]
    fn projector_identities() {
        let dims = [2, 3, 2, 4];
        let g = Gram::new(&dims).to_dense();
        for support in [vec![0], vec![1, 2], vec![0, 3], vec![0, 1, 2, 3], vec![2, 1, 3]] {
            let p = gate_transfer(&support, &dims).unwrap().to_dense();
            let pp = &p * &p;
            assert!((&pp - &p).amax() < 1e-12, "idempotence {support:?}");
            let lhs = &g * &p;
            let rhs = p.transpose() * &g;
            assert!((&lhs - &rhs).amax() / g.amax() < 1e-12, "self-adjointness {support:?}");
            for j in 0..p.ncols() {
                assert!(p.column(j).iter().filter(|v| **v != 0.0).count() <= 2);
            }
        }
    }

    #[test]
    fn global_gate_is_rank_two() {
        let p = gate_transfer(&[0, 1, 2], &[2, 2, 2]).unwrap().to_dense();
        let o = Gram::new(&[2, 2, 2]).orthonormalize(&p);
        let mut ev: Vec<f64> = o.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!(ev[2..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gram_helpers_are_consistent() {
        let dims = [2, 3, 5];
        let gram = Gram::new(&dims);
        let g = gram.to_dense();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = x.clone();
        gram.apply(&mut y);
        let gx = &g * DVector::from_column_slice(&x);
        assert!((DVector::from_column_slice(&y) - &gx).amax() < 1e-10);
        gram.apply_inverse(&mut y);
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        let mut z = x.clone();
        gram.apply_sqrt(&mut z);
        gram.apply_sqrt(&mut z);
        assert!(z.iter().zip(gx.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        gram.apply_inv_sqrt(&mut z);
        gram.apply_inv_sqrt(&mut z);
        assert!(z.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn brickwork3_values() {
        let r = circuit_spectrum(&brickwork3(2, 2, 2).unwrap(), &SpectrumOptions::default()).unwrap();
        assert!((r.lambda() - 0.16).abs() < 1e-12);
        let r = circuit_spectrum(&brickwork3(2, 2, 8).unwrap(), &SpectrumOptions::default()).unwrap();
        assert!((r.lambda() - 756.0 / 3825.0).abs() < 1e-12);
    }

    #[test]
    fn hide_seek_five() {
        let r = circuit_spectrum(&hide_seek_c(5, 2).unwrap(), &SpectrumOptions::default()).unwrap();
        let expected = (1008.0f64 / 1020.0 / 5.0).powi(2);
        assert!((r.lambda() - expected).abs() < 1e-12);
        assert_eq!(r.unit_multiplicity, 2);
        let r = circuit_spectrum(&hide_seek_c_prime(5, 2).unwrap(), &SpectrumOptions::default()).unwrap();
        assert!((r.lambda() - (3.0f64 / 31.875).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn global_gate_has_zero_subleading() {
        let a = Architecture::uniform(3, 2, vec![Gate::new([0, 1, 2])]).unwrap();
        let r = circuit_spectrum(&a, &SpectrumOptions::singular()).unwrap();
        assert!(r.lambda() < 1e-12);
        assert!(r.singular_subleading.unwrap() < 1e-12);
        assert_eq!(r.unit_multiplicity, 2);
    }

    #[test]
    fn uncovered_is_an_error() {
        let a = Architecture::uniform(3, 2, vec![Gate::new([0, 1])]).unwrap();
        let err = circuit_spectrum(&a, &SpectrumOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "gap undefined: uncovered site 2");
    }

    #[test]
    fn krylov_matches_dense() {
        for arch in [hide_seek_c(6, 2).unwrap(), hide_seek_c_prime(7, 2).unwrap()] {
            let dense = circuit_spectrum(&arch, &SpectrumOptions { singular: true, ..Default::default() }).unwrap();
            let kry = circuit_spectrum(
                &arch,
                &SpectrumOptions { singular: true, dense_max_dim: 0, ..Default::default() },
            )
            .unwrap();
            assert_eq!(kry.method, SolveMethod::Krylov);
            assert!((dense.lambda() - kry.lambda()).abs() < 1e-9);
            assert!((dense.singular_subleading.unwrap() - kry.singular_subleading.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn periods_exponentiate() {
        let arch = hide_seek_c(5, 2).unwrap();
        let one = circuit_spectrum(&arch, &SpectrumOptions::default()).unwrap();
        let three = circuit_spectrum(&arch, &SpectrumOptions { periods: Some(3), singular: true, ..Default::default() })
            .unwrap();
        assert!((three.lambda() - one.lambda().powi(3)).abs() < 1e-14);
        // palindromic: singular value equals eigenvalue modulus
        assert!((three.singular_subleading.unwrap() - three.lambda()).abs() < 1e-12);
    }

    #[test]
    fn multiset_helpers() {
        let a = [C64::new(1.0, 0.0), C64::new(0.5, 0.1)];
        let b = [C64::new(0.5, 0.1), C64::new(1.0, 1e-12)];
        assert!(multiset_distance(&a, &b).unwrap() < 1e-11);
        assert!(multiset_distance(&a, &b[..1]).is_none());
        assert_eq!(nonzero_spectrum(&[C64::new(1e-12, 0.0), C64::new(0.3, 0.0)], 1e-9).len(), 1);
    }

    #[test]
    fn disconnected_defective_spectrum() {
        // three components: {0, 1}, {3, 5}, {2, 4, 6}
        let a = Architecture::parse(
            r#"{"site_dims":[2,2,2,2,2,2,2],"gates":[{"support":[3,5]},{"support":[3,5]},{"support":[0,1]},{"support":[2,6]},{"support":[4,6]},{"support":[2,4]}],"repeat":1}"#,
        )
        .unwrap();
        let r = circuit_spectrum(&a, &SpectrumOptions::singular()).unwrap();
        assert_eq!(r.unit_multiplicity, 8);
        assert!((r.lambda() - 1.0).abs() < 1e-9);
    }
}
