//! Circuit architectures: ordered lists of Haar-random gates over sites with
//! per-site local dimensions.
//!
//! Sites are 0-indexed. Every gate is Haar-random on its support, so an
//! architecture is fully described by the supports, the local dimensions and
//! the number of periods.
//!
//! The on-disk format is a small JSON document:
//!
//! ```text
//! {"site_dims":[2,2,2,2,2],"gates":[{"support":[1,2,3,4]},{"support":[0,1]}],"repeat":1}
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Haar-random gate acting on a set of sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub support: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Gate {
    pub fn new(support: impl Into<Vec<usize>>) -> Self {
        Gate { support: support.into(), label: None }
    }

    pub fn labeled(support: impl Into<Vec<usize>>, label: impl Into<String>) -> Self {
        Gate { support: support.into(), label: Some(label.into()) }
    }

    /// Bitmask of the support (site `i` is bit `i`).
    pub fn mask(&self) -> u64 {
        self.support.iter().fold(0u64, |m, &s| m | (1u64 << s))
    }

    fn validate(&self, n: usize, path: &str) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::invalid(format!("{path}.support"), "empty support"));
        }
        let mut seen = BTreeSet::new();
        for &s in &self.support {
            if s >= n {
                return Err(Error::invalid(
                    format!("{path}.support"),
                    format!("site {s} out of range for {n} sites"),
                ));
            }
            if !seen.insert(s) {
                return Err(Error::invalid(format!("{path}.support"), "duplicate site in support"));
            }
        }
        Ok(())
    }
}

/// An ordered list of gates applied first-to-last, repeated `repeat` times.
///
/// Values are immutable after construction; all invariants are checked in
/// [`Architecture::new`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    site_dims: Vec<usize>,
    gates: Vec<Gate>,
    repeat: usize,
}

#[derive(Serialize, Deserialize)]
struct Document {
    site_dims: Vec<usize>,
    gates: Vec<Gate>,
    #[serde(default = "one")]
    repeat: usize,
}

fn one() -> usize {
    1
}

impl Architecture {
    pub fn new(site_dims: Vec<usize>, gates: Vec<Gate>, repeat: usize) -> Result<Self> {
        if site_dims.is_empty() {
            return Err(Error::invalid("site_dims", "at least one site required"));
        }
        // Bitmask supports cap the site count.
        if site_dims.len() > 64 {
            return Err(Error::invalid("site_dims", "at most 64 sites supported"));
        }
        for (i, &q) in site_dims.iter().enumerate() {
            if q < 2 {
                return Err(Error::invalid(format!("site_dims[{i}]"), "local dimension must be >= 2"));
            }
        }
        if repeat < 1 {
            return Err(Error::invalid("repeat", "repeat must be >= 1"));
        }
        let n = site_dims.len();
        for (i, g) in gates.iter().enumerate() {
            g.validate(n, &format!("gates[{i}]"))?;
        }
        Ok(Architecture { site_dims, gates, repeat })
    }

    /// Uniform local dimension `q` on `n` sites.
    pub fn uniform(n: usize, q: usize, gates: Vec<Gate>) -> Result<Self> {
        Architecture::new(vec![q; n], gates, 1)
    }

    pub fn n_sites(&self) -> usize {
        self.site_dims.len()
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn repeat(&self) -> usize {
        self.repeat
    }

    /// Total Hilbert-space dimension of one copy, as a float.
    pub fn total_dim(&self) -> f64 {
        self.site_dims.iter().map(|&q| q as f64).product()
    }

    /// The common local dimension, if every site has the same one.
    pub fn uniform_dim(&self) -> Option<usize> {
        let q = self.site_dims[0];
        self.site_dims.iter().all(|&d| d == q).then_some(q)
    }

    pub fn with_repeat(&self, repeat: usize) -> Result<Self> {
        Architecture::new(self.site_dims.clone(), self.gates.clone(), repeat)
    }

    /// First site touched by no gate, if any.
    pub fn first_uncovered(&self) -> Option<usize> {
        let covered = self.gates.iter().fold(0u64, |m, g| m | g.mask());
        (0..self.n_sites()).find(|&s| covered & (1 << s) == 0)
    }

    pub fn covered(&self) -> bool {
        self.first_uncovered().is_none()
    }

    /// Whether the hypergraph formed by the gate supports connects all sites.
    pub fn connected(&self) -> bool {
        let n = self.n_sites();
        let mut reached = 1u64;
        loop {
            let before = reached;
            for g in &self.gates {
                let m = g.mask();
                if m & reached != 0 {
                    reached |= m;
                }
            }
            if reached == before {
                break;
            }
        }
        reached.count_ones() as usize == n
    }

    /// Gates no earlier gate overlaps with.
    pub fn first_layer(&self) -> Vec<usize> {
        let mut seen = 0u64;
        let mut out = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            if g.mask() & seen == 0 {
                out.push(i);
            }
            seen |= g.mask();
        }
        out
    }

    /// Gates no later gate overlaps with.
    pub fn last_layer(&self) -> Vec<usize> {
        let mut seen = 0u64;
        let mut out = Vec::new();
        for (i, g) in self.gates.iter().enumerate().rev() {
            if g.mask() & seen == 0 {
                out.push(i);
            }
            seen |= g.mask();
        }
        out.reverse();
        out
    }

    /// Removes the gates at `indices` from every period, keeping the order of
    /// the survivors.
    pub fn censor(&self, indices: &BTreeSet<usize>) -> Result<Self> {
        let len = self.gates.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::GateIndex { index: bad, len });
        }
        let gates = self
            .gates
            .iter()
            .enumerate()
            .filter(|(i, _)| !indices.contains(i))
            .map(|(_, g)| g.clone())
            .collect();
        Ok(Architecture { site_dims: self.site_dims.clone(), gates, repeat: self.repeat })
    }

    /// Rotates one period's gate list left by `k`.
    pub fn cyclic_shift(&self, k: usize) -> Result<Self> {
        let len = self.gates.len();
        if k >= len && !(k == 0 && len == 0) {
            return Err(Error::GateIndex { index: k, len });
        }
        let mut gates = self.gates.clone();
        gates.rotate_left(k);
        Ok(Architecture { site_dims: self.site_dims.clone(), gates, repeat: self.repeat })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: Document = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            source: e.into_inner(),
        })?;
        Architecture::new(doc.site_dims, doc.gates, doc.repeat)
    }

    /// Compact single-line JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.document()).expect("architecture serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("architecture serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.document()).expect("architecture serializes")
    }

    fn document(&self) -> Document {
        Document { site_dims: self.site_dims.clone(), gates: self.gates.clone(), repeat: self.repeat }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::parse(s)
    }
}

/// Named architecture families.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Builder {
    /// The five-gate hide-and-seek period `C`.
    HideSeekC,
    /// `C` with both two-site gates removed.
    HideSeekCPrime,
    /// Three sites, gates on (0,1), (1,2), (0,1).
    Brickwork3,
    /// One period of a 1D brickwork: even bonds, then odd bonds.
    Brickwork1d,
    /// Nearest-neighbour gates swept left to right.
    PathSequence,
}

impl Builder {
    pub const ALL: [Builder; 5] = [
        Builder::HideSeekC,
        Builder::HideSeekCPrime,
        Builder::Brickwork3,
        Builder::Brickwork1d,
        Builder::PathSequence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builder::HideSeekC => "hide_seek_C",
            Builder::HideSeekCPrime => "hide_seek_Cprime",
            Builder::Brickwork3 => "brickwork3",
            Builder::Brickwork1d => "brickwork1d",
            Builder::PathSequence => "path_sequence",
        }
    }
}

impl fmt::Display for Builder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builder::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownBuilder(s.to_string()))
    }
}

/// Parameters accepted by [`build_named`]. Unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuilderParams {
    pub n: Option<usize>,
    pub q: usize,
    /// Local dimensions for `brickwork3`.
    pub dims3: Option<[usize; 3]>,
    pub repeat: usize,
}

impl Default for BuilderParams {
    fn default() -> Self {
        BuilderParams { n: None, q: 2, dims3: None, repeat: 1 }
    }
}

impl BuilderParams {
    pub fn sites(n: usize) -> Self {
        BuilderParams { n: Some(n), ..Default::default() }
    }
}

pub fn build_named(name: &str, params: &BuilderParams) -> Result<Architecture> {
    let builder: Builder = name.parse()?;
    build(builder, params)
}

pub fn build(builder: Builder, params: &BuilderParams) -> Result<Architecture> {
    let need_n = || params.n.ok_or_else(|| Error::Param(format!("{builder} requires N")));
    let arch = match builder {
        Builder::HideSeekC => hide_seek_c(need_n()?, params.q)?,
        Builder::HideSeekCPrime => hide_seek_c_prime(need_n()?, params.q)?,
        Builder::Brickwork3 => {
            let [a, b, c] = params.dims3.unwrap_or([params.q; 3]);
            brickwork3(a, b, c)?
        }
        Builder::Brickwork1d => brickwork1d(need_n()?, params.q)?,
        Builder::PathSequence => path_sequence(need_n()?, params.q)?,
    };
    arch.with_repeat(params.repeat)
}

fn check_hide_seek_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Param(format!("hide-and-seek builders need N >= 3, got {n}")));
    }
    Ok(())
}

/// Gates U1..U5 with supports {1..N-1}, {0,1}, {0,2..N-1}, {0,1}, {1..N-1}.
pub fn hide_seek_c(n: usize, q: usize) -> Result<Architecture> {
    check_hide_seek_n(n)?;
    let not_first: Vec<usize> = (1..n).collect();
    let not_second: Vec<usize> = std::iter::once(0).chain(2..n).collect();
    let gates = vec![
        Gate::labeled(not_first.clone(), "U1"),
        Gate::labeled([0, 1], "U2"),
        Gate::labeled(not_second, "U3"),
        Gate::labeled([0, 1], "U4"),
        Gate::labeled(not_first, "U5"),
    ];
    Architecture::uniform(n, q, gates)
}

/// [`hide_seek_c`] without U2 and U4.
pub fn hide_seek_c_prime(n: usize, q: usize) -> Result<Architecture> {
    hide_seek_c(n, q)?.censor(&BTreeSet::from([1, 3]))
}

pub fn brickwork3(q1: usize, q2: usize, q3: usize) -> Result<Architecture> {
    Architecture::new(
        vec![q1, q2, q3],
        vec![Gate::new([0, 1]), Gate::new([1, 2]), Gate::new([0, 1])],
        1,
    )
}

pub fn brickwork1d(n: usize, q: usize) -> Result<Architecture> {
    if n < 2 {
        return Err(Error::Param("brickwork1d needs N >= 2".into()));
    }
    let even = (0..n - 1).step_by(2);
    let odd = (1..n - 1).step_by(2);
    let gates = even.chain(odd).map(|i| Gate::new([i, i + 1])).collect();
    Architecture::uniform(n, q, gates)
}

pub fn path_sequence(n: usize, q: usize) -> Result<Architecture> {
    if n < 2 {
        return Err(Error::Param("path_sequence needs N >= 2".into()));
    }
    Architecture::uniform(n, q, (0..n - 1).map(|i| Gate::new([i, i + 1])).collect())
}
