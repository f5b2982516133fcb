//! Second-moment channels on the full two-copy operator space, and their
//! multiplicative error relative to the global Haar twirl.
//!
//! Vectors of length `D⁴` use a per-site layout: each site contributes one
//! digit `((r1 * q + r2) * q + c1) * q + c2` for the operator entry
//! `X[(r1, r2), (c1, c2)]`, with site 0 the most significant digit. Choi
//! vectors use the same layout with digits `(in1, in2, out1, out2)`.
//!
//! For a covered architecture the channel can be written
//! `Φ(X) = Σ W[ρ, τ] tr(τ X) ρ` over basis strings, with `W = M^d G⁻¹`. Its
//! Choi operator `Σ W[ρ, τ] τ ⊗ ρ` lives in a commutative algebra whose
//! minimal idempotents are labelled by a sign pattern on inputs and on
//! outputs, so the exact multiplicative error follows from a two-sided
//! Walsh-Hadamard transform of `W`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::krylov::{dense_eigenvalues, largest_eigenpair, norm, smallest_symmetric, FnOperator, KrylovOptions};
use crate::perm2::{circuit_spectrum, Sigma, SigmaString, SpectrumOptions, TransferOperator};

pub const DEFAULT_BUDGET: u64 = 8 << 30;

/// Tolerance on the support leakage, relative to the largest Haar Choi
/// eigenvalue.
pub const LEAK_TOL: f64 = 1e-8;

fn quad_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1].pow(4);
    }
    s
}

fn quad(q: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * q + b) * q + c) * q + d
}

/// Offsets of one gate's blocks in the per-site layout.
#[derive(Clone, Debug)]
struct TwirlPlan {
    d: f64,
    bases: Vec<usize>,
    block: Vec<usize>,
    i_pattern: Vec<usize>,
    s_pattern: Vec<usize>,
}

/// All sums `Σ stride_i * digit_i` with `digit_i` drawn from `choices(i)`.
fn offsets(sites: &[usize], strides: &[usize], choices: impl Fn(usize) -> Vec<usize>) -> Vec<usize> {
    let mut out = vec![0usize];
    for &s in sites {
        let c = choices(s);
        out = out.iter().flat_map(|&o| c.iter().map(move |&x| o + x * strides[s])).collect();
    }
    out
}

impl TwirlPlan {
    fn new(support: &[usize], dims: &[usize]) -> Self {
        let strides = quad_strides(dims);
        let comp: Vec<usize> = (0..dims.len()).filter(|i| !support.contains(i)).collect();
        let all = |s: usize| (0..dims[s].pow(4)).collect();
        let pattern = |swap: bool| {
            move |s: usize| {
                let q = dims[s];
                let mut v = Vec::with_capacity(q * q);
                for r1 in 0..q {
                    for r2 in 0..q {
                        v.push(if swap { quad(q, r1, r2, r2, r1) } else { quad(q, r1, r2, r1, r2) });
                    }
                }
                v
            }
        };
        TwirlPlan {
            d: support.iter().map(|&s| dims[s] as f64).product(),
            bases: offsets(&comp, &strides, all),
            block: offsets(support, &strides, all),
            i_pattern: offsets(support, &strides, pattern(false)),
            s_pattern: offsets(support, &strides, pattern(true)),
        }
    }

    fn apply(&self, v: &mut [f64]) {
        let d = self.d;
        let norm = 1.0 / (d * (d * d - 1.0));
        for &b in &self.bases {
            let o_i: f64 = self.i_pattern.iter().map(|&o| v[b + o]).sum();
            let o_s: f64 = self.s_pattern.iter().map(|&o| v[b + o]).sum();
            for &o in &self.block {
                v[b + o] = 0.0;
            }
            let c_i = (d * o_i - o_s) * norm;
            let c_s = (d * o_s - o_i) * norm;
            for &o in &self.i_pattern {
                v[b + o] += c_i;
            }
            for &o in &self.s_pattern {
                v[b + o] += c_s;
            }
        }
    }
}

/// Bytes needed for three working vectors of length `D⁴`.
pub fn full_space_bytes(site_dims: &[usize]) -> u64 {
    site_dims.iter().fold(24u64, |acc, &q| acc.saturating_mul((q as u64).pow(4)))
}

fn check_budget(site_dims: &[usize], budget: u64) -> Result<usize> {
    let required = full_space_bytes(site_dims);
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    Ok(site_dims.iter().map(|&q| q.pow(4)).product())
}

/// Matrix-free moment channel of `periods` periods of an architecture.
#[derive(Clone, Debug)]
pub struct ChannelHandle {
    arch: Architecture,
    periods: usize,
    len: usize,
    plans: Vec<TwirlPlan>,
    global: TwirlPlan,
}

impl ChannelHandle {
    pub fn new(arch: &Architecture, periods: usize, budget: u64) -> Result<Self> {
        let dims = arch.site_dims();
        let len = check_budget(dims, budget)?;
        let all: Vec<usize> = (0..dims.len()).collect();
        Ok(ChannelHandle {
            arch: arch.clone(),
            periods,
            len,
            plans: arch.gates().iter().map(|g| TwirlPlan::new(&g.support, dims)).collect(),
            global: TwirlPlan::new(&all, dims),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Superoperator dimension `D⁴`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len {
            return Err(Error::LengthMismatch { expected: self.len, found: v.len() });
        }
        Ok(())
    }

    /// Applies every gate twirl in order, `periods` times, in place.
    pub fn apply_moment(&self, v: &mut [f64]) -> Result<()> {
        self.check_len(v)?;
        for _ in 0..self.periods {
            for p in &self.plans {
                p.apply(v);
            }
        }
        Ok(())
    }

    /// Global Haar twirl, in place.
    pub fn apply_haar_twirl(&self, v: &mut [f64]) -> Result<()> {
        self.check_len(v)?;
        self.global.apply(v);
        Ok(())
    }

    /// `⊗ σ_i` as a full-space vector.
    pub fn sigma_vector(&self, sigma: &SigmaString) -> Result<Vec<f64>> {
        sigma_vector(sigma, self.arch.site_dims())
    }

    /// Full-space vector of a coefficient vector over basis strings.
    pub fn basis_vector(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let n = self.arch.n_sites();
        if coeffs.len() != 1 << n {
            return Err(Error::LengthMismatch { expected: 1 << n, found: coeffs.len() });
        }
        let mut out = vec![0.0; self.len];
        for (idx, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let s = sigma_vector(&SigmaString::from_index(idx, n), self.arch.site_dims())?;
            out.iter_mut().zip(&s).for_each(|(o, x)| *o += c * x);
        }
        Ok(out)
    }

    /// Dense superoperator, column by column. Guarded at `D⁴ ≤ 4096`.
    pub fn dense_superoperator(&self) -> Result<DMatrix<f64>> {
        if self.len > 4096 {
            return Err(Error::TooLarge { what: format!("dense superoperator of dimension {}", self.len) });
        }
        let mut m = DMatrix::zeros(self.len, self.len);
        for j in 0..self.len {
            let mut v = vec![0.0; self.len];
            v[j] = 1.0;
            self.apply_moment(&mut v)?;
            m.column_mut(j).copy_from_slice(&v);
        }
        Ok(m)
    }

    /// Converts a per-site-layout vector to the standard layout
    /// `(r1 * D + r2) * D² + c1 * D + c2`.
    pub fn to_standard(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let map = standard_map(self.arch.site_dims());
        let mut out = vec![0.0; v.len()];
        for (i, &x) in v.iter().enumerate() {
            out[map[i]] = x;
        }
        Ok(out)
    }
}

/// Standard-layout index of every per-site-layout index.
fn standard_map(dims: &[usize]) -> Vec<usize> {
    let d: usize = dims.iter().product();
    let mut map = vec![0usize];
    for &q in dims {
        let mut next = Vec::with_capacity(map.len() * q.pow(4));
        for &m in &map {
            // decode partial standard index of the preceding sites
            let (r1, r2, c1, c2) = (m >> 48 & 0xffff, m >> 32 & 0xffff, m >> 16 & 0xffff, m & 0xffff);
            for a in 0..q {
                for b in 0..q {
                    for c in 0..q {
                        for e in 0..q {
                            let (r1, r2, c1, c2) = (r1 * q + a, r2 * q + b, c1 * q + c, c2 * q + e);
                            next.push(r1 << 48 | r2 << 32 | c1 << 16 | c2);
                        }
                    }
                }
            }
        }
        map = next;
    }
    map.into_iter()
        .map(|m| {
            let (r1, r2, c1, c2) = (m >> 48 & 0xffff, m >> 32 & 0xffff, m >> 16 & 0xffff, m & 0xffff);
            (r1 * d + r2) * d * d + c1 * d + c2
        })
        .collect()
}

/// `⊗ σ_i` in the per-site layout.
pub fn sigma_vector(sigma: &SigmaString, site_dims: &[usize]) -> Result<Vec<f64>> {
    if sigma.len() != site_dims.len() {
        return Err(Error::LengthMismatch { expected: site_dims.len(), found: sigma.len() });
    }
    let mut out = vec![1.0];
    for (s, &q) in sigma.letters().iter().zip(site_dims) {
        let mut site = vec![0.0; q.pow(4)];
        for r1 in 0..q {
            for r2 in 0..q {
                let k = match s {
                    Sigma::I => quad(q, r1, r2, r1, r2),
                    Sigma::S => quad(q, r1, r2, r2, r1),
                };
                site[k] = 1.0;
            }
        }
        out = out.iter().flat_map(|&a| site.iter().map(move |&b| a * b)).collect();
    }
    Ok(out)
}

/// Global twirl of a full-space vector.
pub fn apply_haar_twirl(site_dims: &[usize], v: &mut [f64]) -> Result<()> {
    let len: usize = site_dims.iter().map(|&q| q.pow(4)).product();
    if v.len() != len {
        return Err(Error::LengthMismatch { expected: len, found: v.len() });
    }
    let all: Vec<usize> = (0..site_dims.len()).collect();
    TwirlPlan::new(&all, site_dims).apply(v);
    Ok(())
}

/// Dense Choi matrix from the dense superoperator, by reshuffling
/// `J[(i, a), (j, b)] = Φ[(a, b), (i, j)]` site by site.
pub fn dense_choi(handle: &ChannelHandle) -> Result<DMatrix<f64>> {
    let phi = handle.dense_superoperator()?;
    let dims = handle.arch.site_dims();
    let strides = quad_strides(dims);
    let n = handle.len;
    let digits = |x: usize, s: usize| {
        let q = dims[s];
        let v = (x / strides[s]) % q.pow(4);
        (v / (q * q * q), (v / (q * q)) % q, (v / q) % q, v % q)
    };
    let mut j = DMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let (mut pr, mut pc) = (0, 0);
            for s in 0..dims.len() {
                let q = dims[s];
                let (i1, i2, a1, a2) = digits(row, s);
                let (j1, j2, b1, b2) = digits(col, s);
                pr += quad(q, a1, a2, b1, b2) * strides[s];
                pc += quad(q, i1, i2, j1, j2) * strides[s];
            }
            j[(row, col)] = phi[(pr, pc)];
        }
    }
    Ok(j)
}

/// Per-site swap of the two input (or output) copies, as an index map.
fn swap_map(dims: &[usize], mask: usize, output: bool) -> Vec<u32> {
    let strides = quad_strides(dims);
    let len: usize = dims.iter().map(|&q| q.pow(4)).product();
    (0..len)
        .map(|x| {
            let mut y = 0;
            for (s, &q) in dims.iter().enumerate() {
                let v = (x / strides[s]) % q.pow(4);
                let (a, b, c, d) = (v / (q * q * q), (v / (q * q)) % q, (v / q) % q, v % q);
                let w = match (mask >> s & 1 == 1, output) {
                    (false, _) => v,
                    (true, false) => quad(q, b, a, c, d),
                    (true, true) => quad(q, a, b, d, c),
                };
                y += w * strides[s];
            }
            y as u32
        })
        .collect()
}

fn permute(map: &[u32], x: &[f64], y: &mut [f64]) {
    for (i, &m) in map.iter().enumerate() {
        y[i] = x[m as usize];
    }
}

/// Matrix-free Choi operator `Σ W[ρ, τ] τ ⊗ ρ`.
pub struct ChoiOperator {
    w: DMatrix<f64>,
    in_maps: Vec<Vec<u32>>,
    out_maps: Vec<Vec<u32>>,
    len: usize,
}

impl ChoiOperator {
    pub fn new(w: DMatrix<f64>, site_dims: &[usize], budget: u64) -> Result<Self> {
        let len = check_budget(site_dims, budget)?;
        let k = 1usize << site_dims.len();
        if w.nrows() != k || w.ncols() != k {
            return Err(Error::LengthMismatch { expected: k, found: w.nrows() });
        }
        let maps = |output| (0..k).map(|m| swap_map(site_dims, m, output)).collect();
        Ok(ChoiOperator { w, in_maps: maps(false), out_maps: maps(true), len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.w.nrows();
        let xs: Vec<Vec<f64>> = self
            .out_maps
            .iter()
            .map(|m| {
                let mut t = vec![0.0; x.len()];
                permute(m, x, &mut t);
                t
            })
            .collect();
        y.fill(0.0);
        let mut z = vec![0.0; x.len()];
        let mut t = vec![0.0; x.len()];
        for tau in 0..k {
            z.fill(0.0);
            for (rho, xr) in xs.iter().enumerate() {
                let c = self.w[(rho, tau)];
                if c != 0.0 {
                    z.iter_mut().zip(xr).for_each(|(a, b)| *a += c * b);
                }
            }
            permute(&self.in_maps[tau], &z, &mut t);
            y.iter_mut().zip(&t).for_each(|(a, b)| *a += b);
        }
    }
}

/// Choi operator of the global Haar twirl,
/// `2/(D(D+1)) P₊⊗P₊ + 2/(D(D−1)) P₋⊗P₋`, applied through global swaps.
pub struct HaarChoi {
    d: f64,
    s_in: Vec<u32>,
    s_out: Vec<u32>,
}

impl HaarChoi {
    pub fn new(site_dims: &[usize]) -> Self {
        let all = (1usize << site_dims.len()) - 1;
        HaarChoi {
            d: site_dims.iter().map(|&q| q as f64).product(),
            s_in: swap_map(site_dims, all, false),
            s_out: swap_map(site_dims, all, true),
        }
    }

    /// Largest eigenvalue, `2/(D(D−1))`.
    pub fn norm(&self) -> f64 {
        2.0 / (self.d * (self.d - 1.0))
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (a, b) = (2.0 / (self.d * (self.d + 1.0)), 2.0 / (self.d * (self.d - 1.0)));
        let n = x.len();
        let (mut si, mut so, mut sio) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        permute(&self.s_in, x, &mut si);
        permute(&self.s_out, x, &mut so);
        permute(&self.s_out, &si, &mut sio);
        // P±⊗P± = (1 ± S_in ± S_out + S_in S_out) / 4
        for i in 0..n {
            let even = x[i] + sio[i];
            let odd = si[i] + so[i];
            y[i] = 0.25 * (a * (even + odd) + b * (even - odd));
        }
    }

    /// Projector onto the support, `(1 + S_in S_out) / 2`.
    pub fn project_support(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; x.len()];
        let mut u = vec![0.0; x.len()];
        permute(&self.s_in, x, &mut t);
        permute(&self.s_out, &t, &mut u);
        for i in 0..x.len() {
            y[i] = 0.5 * (x[i] + u[i]);
        }
    }
}

/// `W = B^d G⁻¹` for a basis operator `B` given by its action.
fn weight_matrix(op: &TransferOperator, periods: usize, deflate: bool) -> DMatrix<f64> {
    let k = op.dim();
    let mut w = DMatrix::zeros(k, k);
    let mut tmp = vec![0.0; k];
    let mut fixed = vec![0.0; k];
    for tau in 0..k {
        let mut col = vec![0.0; k];
        col[tau] = 1.0;
        op.gram().apply_inverse(&mut col);
        for _ in 0..periods {
            op.apply_period(&col, &mut tmp);
            if deflate {
                op.fixed_projector().apply(&col, &mut fixed);
                tmp.iter_mut().zip(&fixed).for_each(|(a, b)| *a -= b);
            }
            std::mem::swap(&mut col, &mut tmp);
        }
        w.column_mut(tau).copy_from_slice(&col);
    }
    w
}

/// `W = M^d G⁻¹` for an architecture.
pub fn choi_weights(arch: &Architecture, periods: usize) -> Result<DMatrix<f64>> {
    Ok(weight_matrix(&TransferOperator::assemble(arch)?, periods, false))
}

/// In-place unnormalized Walsh-Hadamard transform of each column.
fn fwht_columns(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for mut col in m.column_iter_mut() {
        let mut h = 1;
        while h < k {
            for i in (0..k).step_by(2 * h) {
                for j in i..i + h {
                    let (a, b) = (col[j], col[j + h]);
                    col[j] = a + b;
                    col[j + h] = a - b;
                }
            }
            h *= 2;
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MultErrorMethod {
    /// Exact diagonalization in the commutative Choi algebra.
    Sector,
    /// Closed form for the identity channel.
    Identity,
    /// Bisection with Krylov positivity tests on the full Choi space.
    Bisection,
}

#[derive(Clone, Debug)]
pub struct MultErrorResult {
    pub eps_m: f64,
    /// Smallest ε with `ε Φ_H + (Φ − Φ_H)` completely positive.
    pub branch_plus: f64,
    /// Smallest ε with `ε Φ_H − (Φ − Φ_H)` completely positive.
    pub branch_minus: f64,
    pub support_leakage: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: MultErrorMethod,
}

#[derive(Clone, Debug)]
pub struct MultErrorOptions {
    pub budget: u64,
    pub rel_tol: f64,
    pub krylov: KrylovOptions,
    pub seed: u64,
}

impl Default for MultErrorOptions {
    fn default() -> Self {
        MultErrorOptions { budget: DEFAULT_BUDGET, rel_tol: 1e-6, krylov: KrylovOptions::default(), seed: 17 }
    }
}

fn parity(x: usize) -> bool {
    x.count_ones() % 2 == 1
}

/// Exact multiplicative error of `periods` periods of a covered architecture.
pub fn mult_error(arch: &Architecture, periods: usize) -> Result<MultErrorResult> {
    mult_error_with(arch, periods, &MultErrorOptions::default())
}

pub fn mult_error_with(arch: &Architecture, periods: usize, opts: &MultErrorOptions) -> Result<MultErrorResult> {
    if let Some(site) = arch.first_uncovered() {
        return Err(Error::Uncovered { site });
    }
    let dims = arch.site_dims();
    let n = dims.len();
    if n > 14 {
        return Err(Error::TooLarge { what: format!("{n} sites for the Choi weight matrix") });
    }
    let required = 16u64 << (2 * n);
    if required > opts.budget {
        return Err(Error::Budget { required, budget: opts.budget });
    }
    let d: f64 = dims.iter().map(|&q| q as f64).product();
    let (mu_even, mu_odd) = (2.0 / (d * (d + 1.0)), 2.0 / (d * (d - 1.0)));
    if periods == 0 {
        let omega = (d * (d + 1.0) / 2.0).powi(2) + (d * (d - 1.0) / 2.0).powi(2);
        let minus = omega - 1.0;
        return Ok(MultErrorResult {
            eps_m: minus.max(1.0),
            branch_plus: 1.0,
            branch_minus: minus,
            support_leakage: 0.0,
            iterations: 0,
            residual: 0.0,
            method: MultErrorMethod::Identity,
        });
    }
    let op = TransferOperator::assemble(arch)?;
    let mut mu = weight_matrix(&op, periods, true);
    fwht_columns(&mut mu);
    mu.transpose_mut();
    fwht_columns(&mut mu);
    // mu[(a, b)] is now the eigenvalue for input label a, output label b

    let k = mu.nrows();
    let mult = |x: usize| -> f64 {
        (0..n)
            .map(|s| {
                let q = dims[s] as f64;
                if x >> s & 1 == 1 { q * (q - 1.0) / 2.0 } else { q * (q + 1.0) / 2.0 }
            })
            .product()
    };
    let mults: Vec<f64> = (0..k).map(mult).collect();
    let (mut plus, mut minus, mut leak, mut trace) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for a in 0..k {
        for b in 0..k {
            let v = mu[(a, b)];
            trace += mults[a] * mults[b] * v;
            if parity(a) != parity(b) {
                leak = leak.max(v.abs());
                continue;
            }
            let h = if parity(a) { mu_odd } else { mu_even };
            minus = minus.max(v / h);
            plus = plus.max(-v / h);
        }
    }
    let eps_m = if leak > LEAK_TOL * mu_odd {
        log::warn!("support leakage {leak:.3e} exceeds tolerance; multiplicative error is infinite");
        f64::INFINITY
    } else {
        plus.max(minus)
    };
    Ok(MultErrorResult {
        eps_m,
        branch_plus: plus,
        branch_minus: minus,
        support_leakage: leak,
        iterations: 0,
        residual: trace.abs(),
        method: MultErrorMethod::Sector,
    })
}

/// Multiplicative error by bisection on ε, testing positivity of
/// `ε J_H ± (J − J_H)` on the Haar support with a Krylov smallest-eigenvalue
/// solve. Slow; intended as an independent check at small `N`.
pub fn mult_error_bisection(arch: &Architecture, periods: usize, opts: &MultErrorOptions) -> Result<MultErrorResult> {
    if let Some(site) = arch.first_uncovered() {
        return Err(Error::Uncovered { site });
    }
    if periods == 0 {
        return Err(Error::Param("bisection requires at least one period".into()));
    }
    let dims = arch.site_dims();
    let op = TransferOperator::assemble(arch)?;
    let delta = ChoiOperator::new(weight_matrix(&op, periods, true), dims, opts.budget)?;
    let haar = HaarChoi::new(dims);
    let len = delta.len();

    let lam = circuit_spectrum(arch, &SpectrumOptions { periods: Some(periods), ..Default::default() })?.lambda();
    let d: f64 = dims.iter().map(|&q| q as f64).product();
    let hi0 = d.powi(4) * lam + 1.0;

    // Leakage: random vectors in the complement of the support.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut leak = 0.0f64;
    for _ in 0..4 {
        let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut p = vec![0.0; len];
        haar.project_support(&x, &mut p);
        let c: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        let mut y = vec![0.0; len];
        delta.apply(&c, &mut y);
        let nc = norm(&c);
        if nc > 0.0 {
            leak = leak.max(norm(&y) / nc);
        }
    }

    let mut iterations = 0usize;
    let mut residual = 0.0f64;
    let mut branch = |sign: f64| -> Result<f64> {
        let mut feasible = |eps: f64| -> Result<bool> {
            let a = FnOperator::new(len, |x: &[f64], y: &mut [f64]| {
                let mut px = vec![0.0; len];
                haar.project_support(x, &mut px);
                let mut h = vec![0.0; len];
                let mut j = vec![0.0; len];
                haar.apply(&px, &mut h);
                delta.apply(&px, &mut j);
                let t: Vec<f64> = h.iter().zip(&j).map(|(h, j)| eps * h + sign * j).collect();
                haar.project_support(&t, y);
            });
            let top = largest_eigenpair(&a, &opts.krylov)?;
            let upper = top.value.norm() * (1.0 + 1e-9) + 1e-300;
            let (lmin, out) = smallest_symmetric(&a, upper, &opts.krylov)?;
            iterations += top.iterations + out.iterations;
            residual = residual.max(out.residual);
            Ok(lmin >= -1e-9 * haar.norm().max(upper))
        };
        let (mut lo, mut hi) = (0.0, hi0);
        if !feasible(hi)? {
            return Err(Error::Bisection { lo, hi });
        }
        if feasible(0.0)? {
            return Ok(0.0);
        }
        while hi - lo > opts.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    };
    let branch_plus = branch(1.0)?;
    let branch_minus = branch(-1.0)?;
    let eps_m = if leak > LEAK_TOL * haar.norm() { f64::INFINITY } else { branch_plus.max(branch_minus) };
    Ok(MultErrorResult {
        eps_m,
        branch_plus,
        branch_minus,
        support_leakage: leak,
        iterations,
        residual,
        method: MultErrorMethod::Bisection,
    })
}

/// Complete positivity and trace preservation of a moment channel.
#[derive(Clone, Debug)]
pub struct ChannelCheck {
    /// Smallest Choi eigenvalue.
    pub min_choi_eigenvalue: f64,
    /// Largest `|tr Φ(X) − tr X|` over basis inputs.
    pub trace_defect: f64,
}

impl ChannelCheck {
    pub fn is_channel(&self, tol: f64) -> bool {
        self.min_choi_eigenvalue >= -tol && self.trace_defect <= tol
    }
}

/// Dense check, so limited to `D⁴ ≤ 4096`.
pub fn channel_check(handle: &ChannelHandle) -> Result<ChannelCheck> {
    let phi = handle.dense_superoperator()?;
    let dims = handle.arch.site_dims();
    let strides = quad_strides(dims);
    let traced: Vec<usize> = (0..handle.len)
        .filter(|&x| {
            dims.iter().enumerate().all(|(s, &q)| {
                let v = (x / strides[s]) % q.pow(4);
                let (a, b, c, d) = (v / (q * q * q), (v / (q * q)) % q, (v / q) % q, v % q);
                a == c && b == d
            })
        })
        .collect();
    let mut trace_defect = 0.0f64;
    for j in 0..handle.len {
        let out: f64 = traced.iter().map(|&i| phi[(i, j)]).sum();
        let inp = if traced.binary_search(&j).is_ok() { 1.0 } else { 0.0 };
        trace_defect = trace_defect.max((out - inp).abs());
    }
    let choi = dense_choi(handle)?;
    let min_choi_eigenvalue = dense_eigenvalues(&choi)?.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    Ok(ChannelCheck { min_choi_eigenvalue, trace_defect })
}

/// Outcome of the two sandwich inequalities `λ ≤ 2 ε_M` and
/// `ε_M ≤ D^{2t} λ` with `t = 2`.
#[derive(Clone, Debug)]
pub struct SandwichReport {
    pub lambda: f64,
    pub eps_m: f64,
    pub bound_factor: f64,
    /// `2 ε_M − λ`; nonnegative when the lower inequality holds.
    pub lower_margin: f64,
    /// `D^{2t} λ − ε_M`; nonnegative when the upper inequality holds.
    pub upper_margin: f64,
}

impl SandwichReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower_margin >= -tol && self.upper_margin >= -tol * self.bound_factor.max(1.0)
    }
}

/// Checks both sandwich inequalities for `arch.repeat()` periods.
pub fn sandwich_check(arch: &Architecture) -> Result<SandwichReport> {
    let periods = arch.repeat();
    let lambda = circuit_spectrum(arch, &SpectrumOptions::default())?.lambda();
    let eps_m = mult_error(arch, periods)?.eps_m;
    let d: f64 = arch.site_dims().iter().map(|&q| q as f64).product();
    let bound_factor = d.powi(4);
    Ok(SandwichReport {
        lambda,
        eps_m,
        bound_factor,
        lower_margin: 2.0 * eps_m - lambda,
        upper_margin: bound_factor * lambda - eps_m,
    })
}

/// Overlaps `tr(σ X)` of a full-space vector with every basis string.
pub fn sigma_overlaps(site_dims: &[usize], v: &[f64]) -> Result<Vec<f64>> {
    let n = site_dims.len();
    let mut out = Vec::with_capacity(1 << n);
    for idx in 0..1usize << n {
        let s = sigma_vector(&SigmaString::from_index(idx, n), site_dims)?;
        if s.len() != v.len() {
            return Err(Error::LengthMismatch { expected: s.len(), found: v.len() });
        }
        out.push(s.iter().zip(v).map(|(a, b)| a * b).sum());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{hide_seek_c, hide_seek_c_prime, Architecture, Gate};
    use crate::perm2::{dense_from, dense_moment_oracle, Gram, OracleLimits};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_and_swap_are_fixed() {
        let a = hide_seek_c(3, 2).unwrap();
        let h = ChannelHandle::new(&a, 2, DEFAULT_BUDGET).unwrap();
        for s in ["III", "SSS"] {
            let v = h.sigma_vector(&s.parse().unwrap()).unwrap();
            let mut w = v.clone();
            h.apply_moment(&mut w).unwrap();
            assert!(close(&v, &w, 1e-13));
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let archs = [
            Architecture::uniform(2, 2, vec![Gate::new([0, 1])]).unwrap(),
            Architecture::uniform(2, 2, vec![Gate::new([0]), Gate::new([1, 0]), Gate::new([1])]).unwrap(),
            Architecture::new(vec![2, 3], vec![Gate::new([1]), Gate::new([0, 1])], 2).unwrap(),
        ];
        for a in archs {
            let h = ChannelHandle::new(&a, a.repeat(), DEFAULT_BUDGET).unwrap();
            let oracle = dense_moment_oracle(&a, &OracleLimits::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let v: Vec<f64> = (0..h.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut w = v.clone();
            h.apply_moment(&mut w).unwrap();
            let expect = &oracle * nalgebra::DVector::from_vec(h.to_standard(&v).unwrap());
            assert!(close(&h.to_standard(&w).unwrap(), expect.as_slice(), 1e-12));
        }
    }

    #[test]
    fn global_gate_equals_twirl_and_is_idempotent() {
        let a = Architecture::uniform(2, 2, vec![Gate::new([0, 1])]).unwrap();
        let h = ChannelHandle::new(&a, 1, DEFAULT_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..h.len()).map(|_| rng.random::<f64>()).collect();
        let (mut x, mut y) = (v.clone(), v.clone());
        h.apply_moment(&mut x).unwrap();
        h.apply_haar_twirl(&mut y).unwrap();
        assert!(close(&x, &y, 1e-13));
        let mut z = y.clone();
        apply_haar_twirl(a.site_dims(), &mut z).unwrap();
        assert!(close(&y, &z, 1e-13));
    }

    #[test]
    fn budget_refusal() {
        let a = hide_seek_c(7, 2).unwrap();
        let err = ChannelHandle::new(&a, 1, 1 << 20).unwrap_err();
        assert!(matches!(err, Error::Budget { required, .. } if required == 24 << 28));
    }

    #[test]
    fn choi_apply_matches_dense_choi() {
        let archs = [
            Architecture::uniform(2, 2, vec![Gate::new([0]), Gate::new([0, 1]), Gate::new([1])]).unwrap(),
            Architecture::uniform(2, 2, vec![Gate::new([0, 1])]).unwrap(),
            Architecture::new(vec![2, 2], vec![Gate::new([0]), Gate::new([1])], 2).unwrap(),
        ];
        for a in archs {
            let h = ChannelHandle::new(&a, a.repeat(), DEFAULT_BUDGET).unwrap();
            let dense = dense_choi(&h).unwrap();
            let choi = ChoiOperator::new(choi_weights(&a, a.repeat()).unwrap(), a.site_dims(), DEFAULT_BUDGET).unwrap();
            let mut col = vec![0.0; h.len()];
            let mut e = vec![0.0; h.len()];
            for j in 0..h.len() {
                e[j] = 1.0;
                choi.apply(&e, &mut col);
                e[j] = 0.0;
                assert!(close(&col, dense.column(j).as_slice(), 1e-12), "column {j}");
            }
        }
    }

    #[test]
    fn haar_choi_matches_global_gate_weights() {
        let dims = [2, 2];
        let a = Architecture::uniform(2, 2, vec![Gate::new([0, 1])]).unwrap();
        let choi = ChoiOperator::new(choi_weights(&a, 1).unwrap(), &dims, DEFAULT_BUDGET).unwrap();
        let haar = HaarChoi::new(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..256).map(|_| rng.random::<f64>()).collect();
        let (mut y1, mut y2) = (vec![0.0; 256], vec![0.0; 256]);
        choi.apply(&x, &mut y1);
        haar.apply(&x, &mut y2);
        assert!(close(&y1, &y2, 1e-13));
    }

    #[test]
    fn global_gate_has_zero_error() {
        let a = Architecture::uniform(3, 2, vec![Gate::new([0, 1, 2])]).unwrap();
        let r = mult_error(&a, 1).unwrap();
        assert!(r.eps_m.abs() < 1e-12);
        assert!(r.support_leakage < 1e-14);
    }

    #[test]
    fn identity_channel_closed_form() {
        let a = Architecture::uniform(1, 2, vec![Gate::new([0])]).unwrap();
        let r = mult_error(&a, 0).unwrap();
        assert_eq!(r.method, MultErrorMethod::Identity);
        assert!((r.eps_m - 9.0).abs() < 1e-12);
        let c = mult_error(&hide_seek_c(5, 2).unwrap(), 0).unwrap();
        let cp = mult_error(&hide_seek_c_prime(5, 2).unwrap(), 0).unwrap();
        assert_eq!(c.eps_m, cp.eps_m);
    }

    #[test]
    fn sector_matches_dense_choi_eigenvalues() {
        // ε_M from the generalized eigenvalues of (J − J_H, J_H) on the support.
        let archs = [
            Architecture::uniform(2, 2, vec![Gate::new([0]), Gate::new([0, 1]), Gate::new([1])]).unwrap(),
            Architecture::uniform(2, 2, vec![Gate::new([0]), Gate::new([1])]).unwrap(),
        ];
        for a in archs {
            let h = ChannelHandle::new(&a, 1, DEFAULT_BUDGET).unwrap();
            let j = dense_choi(&h).unwrap();
            let haar = HaarChoi::new(a.site_dims());
            let n = h.len();
            let jh = dense_from(n, |x, y| haar.apply(x, y));
            let eig = jh.clone().symmetric_eigen();
            let mut inv_sqrt = DMatrix::zeros(n, n);
            for (k, &l) in eig.eigenvalues.iter().enumerate() {
                if l > 1e-12 {
                    let v = eig.eigenvectors.column(k);
                    inv_sqrt += (v * v.transpose()) / l.sqrt();
                }
            }
            let rel = &inv_sqrt * (&j - &jh) * &inv_sqrt;
            let vals = rel.symmetric_eigenvalues();
            let top = vals.iter().copied().fold(0.0f64, f64::max);
            let bottom = vals.iter().copied().fold(0.0f64, f64::min);
            let r = mult_error(&a, 1).unwrap();
            assert!((r.branch_minus - top).abs() < 1e-9, "{} vs {top}", r.branch_minus);
            assert!((r.branch_plus + bottom).abs() < 1e-9, "{} vs {bottom}", r.branch_plus);
            assert!(r.residual < 1e-10);
        }
    }

    #[test]
    fn bisection_agrees_with_sector() {
        let a = Architecture::uniform(2, 2, vec![Gate::new([0]), Gate::new([0, 1]), Gate::new([1])]).unwrap();
        let exact = mult_error(&a, 1).unwrap();
        let bis = mult_error_bisection(&a, 1, &MultErrorOptions::default()).unwrap();
        assert!((bis.eps_m - exact.eps_m).abs() <= 2e-6 * exact.eps_m.max(1e-3));
        assert!(bis.support_leakage < 1e-12);
    }

    #[test]
    fn twirl_kills_subleading_eigenvector() {
        let a = hide_seek_c(4, 2).unwrap();
        let res = circuit_spectrum(&a, &SpectrumOptions { vector: true, ..Default::default() }).unwrap();
        let h = ChannelHandle::new(&a, 1, DEFAULT_BUDGET).unwrap();
        let mut v = h.basis_vector(res.subleading_vector.as_ref().unwrap()).unwrap();
        let scale = norm(&v);
        h.apply_haar_twirl(&mut v).unwrap();
        assert!(norm(&v) <= 1e-10 * scale);
    }

    #[test]
    fn sigma_overlaps_are_gram_entries() {
        let dims = [2, 3];
        let v = sigma_vector(&"SI".parse().unwrap(), &dims).unwrap();
        let o = sigma_overlaps(&dims, &v).unwrap();
        let g = Gram::new(&dims).to_dense();
        for (i, x) in o.iter().enumerate() {
            assert!((x - g[(i, 1)]).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_twirl_is_a_channel() {
        let a = Architecture::new(vec![2, 3], vec![Gate::new([0, 1])], 1).unwrap();
        let c = channel_check(&ChannelHandle::new(&a, 1, DEFAULT_BUDGET).unwrap()).unwrap();
        assert!(c.is_channel(1e-10), "{c:?}");
    }
}
