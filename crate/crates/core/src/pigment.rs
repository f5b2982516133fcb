//! Classical mixing analogue: each gate replaces the amounts on its support
//! by their mean. Exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::arch::Architecture;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PigmentState {
    pub amounts: Vec<BigRational>,
}

impl PigmentState {
    /// All pigment on `site`.
    pub fn unit(n: usize, site: usize) -> Self {
        let amounts = (0..n)
            .map(|i| BigRational::from_integer(BigInt::from(u8::from(i == site))))
            .collect();
        PigmentState { amounts }
    }

    pub fn total(&self) -> BigRational {
        self.amounts.iter().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.amounts.iter().map(|a| a.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

pub fn mix(state: &PigmentState, support: &[usize]) -> Result<PigmentState> {
    if support.is_empty() {
        return Err(Error::Param("empty support".into()));
    }
    if let Some(&s) = support.iter().find(|&&s| s >= state.amounts.len()) {
        return Err(Error::Param(format!("site {s} out of range")));
    }
    let sum = support.iter().fold(BigRational::zero(), |a, &s| a + &state.amounts[s]);
    let mean = sum / BigRational::from_integer(BigInt::from(support.len()));
    let mut out = state.clone();
    for &s in support {
        out.amounts[s] = mean.clone();
    }
    Ok(out)
}

/// Final state after every gate of every period.
pub fn run(arch: &Architecture, initial: &PigmentState) -> Result<PigmentState> {
    Ok(trajectory(arch, initial)?.pop().map(|(_, s)| s).unwrap_or_else(|| initial.clone()))
}

/// State after each gate, starting with step 0 = `initial`.
pub fn trajectory(arch: &Architecture, initial: &PigmentState) -> Result<Vec<(usize, PigmentState)>> {
    if initial.amounts.len() != arch.n_sites() {
        return Err(Error::LengthMismatch { expected: arch.n_sites(), found: initial.amounts.len() });
    }
    let mut out = vec![(0, initial.clone())];
    let mut cur = initial.clone();
    let mut step = 0;
    for _ in 0..arch.repeat() {
        for g in arch.gates() {
            cur = mix(&cur, &g.support)?;
            step += 1;
            out.push((step, cur.clone()));
        }
    }
    Ok(out)
}
