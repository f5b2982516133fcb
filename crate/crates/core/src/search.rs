//! Random and exhaustive search for gate deletions that make an architecture
//! more scrambled.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{Architecture, Gate};
use crate::channel::mult_error;
use crate::error::{Error, Result};
use crate::perm2::{circuit_spectrum, SpectrumOptions};

/// Margins at or below this are treated as ties.
pub const TIE_TOL: f64 = 1e-10;

/// Scrambling measure; larger values mean further from Haar.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Modulus of the subleading eigenvalue.
    EigenGap,
    /// Largest singular value after deflation.
    SingularGap,
    /// Multiplicative error of one period.
    MultError,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::EigenGap => "eigen_gap",
            Metric::SingularGap => "singular_gap",
            Metric::MultError => "mult_error",
        }
    }

    pub fn evaluate(self, arch: &Architecture) -> Result<f64> {
        match self {
            Metric::EigenGap => Ok(circuit_spectrum(arch, &SpectrumOptions::default())?.lambda()),
            Metric::SingularGap => Ok(circuit_spectrum(arch, &SpectrumOptions::singular())?
                .singular_subleading
                .expect("requested")),
            Metric::MultError => Ok(mult_error(arch, arch.repeat())?.eps_m),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen_gap" => Ok(Metric::EigenGap),
            "singular_gap" => Ok(Metric::SingularGap),
            "mult_error" => Ok(Metric::MultError),
            other => Err(Error::Param(format!("unknown metric `{other}`"))),
        }
    }
}

/// Which single-gate deletions a scan tries.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionScope {
    AnyGate,
    /// Gates in neither the first nor the last layer.
    InteriorOnly,
    /// The final gate of the period.
    LastGate,
    /// Gates in the first or the last layer.
    Boundary,
}

impl DeletionScope {
    pub fn name(self) -> &'static str {
        match self {
            DeletionScope::AnyGate => "any_gate",
            DeletionScope::InteriorOnly => "interior_only",
            DeletionScope::LastGate => "last_gate",
            DeletionScope::Boundary => "boundary",
        }
    }

    pub fn candidates(self, arch: &Architecture) -> Vec<usize> {
        let len = arch.gates().len();
        let boundary: BTreeSet<usize> = arch.first_layer().into_iter().chain(arch.last_layer()).collect();
        match self {
            DeletionScope::AnyGate => (0..len).collect(),
            DeletionScope::InteriorOnly => (0..len).filter(|i| !boundary.contains(i)).collect(),
            DeletionScope::LastGate => len.checked_sub(1).into_iter().collect(),
            DeletionScope::Boundary => boundary.into_iter().collect(),
        }
    }
}

impl FromStr for DeletionScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any_gate" => Ok(DeletionScope::AnyGate),
            "interior_only" => Ok(DeletionScope::InteriorOnly),
            "last_gate" => Ok(DeletionScope::LastGate),
            "boundary" => Ok(DeletionScope::Boundary),
            other => Err(Error::Param(format!("unknown deletion scope `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub n: usize,
    pub q: usize,
    pub max_gates: usize,
    pub gate_arity: usize,
    pub metric: Metric,
    pub scope: DeletionScope,
    pub seed: u64,
    pub samples: usize,
    /// Enumerate every sequence of exactly `max_gates` gates instead of sampling.
    pub exhaustive: bool,
}

impl SearchConfig {
    pub fn new(n: usize, max_gates: usize, metric: Metric, scope: DeletionScope) -> Self {
        SearchConfig { n, q: 2, max_gates, gate_arity: 2, metric, scope, seed: 0, samples: 1000, exhaustive: false }
    }

    fn min_gates(&self) -> usize {
        self.n.div_ceil(self.gate_arity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.q < 2 {
            return Err(Error::Param("search needs N >= 2 and q >= 2".into()));
        }
        if self.gate_arity < 1 || self.gate_arity > self.n {
            return Err(Error::Param(format!("gate arity {} out of range", self.gate_arity)));
        }
        if self.max_gates < self.min_gates() {
            return Err(Error::Param(format!(
                "{} gates of arity {} cannot cover {} sites",
                self.max_gates, self.gate_arity, self.n
            )));
        }
        if self.metric == Metric::MultError && self.n > 10 {
            return Err(Error::Param("mult_error search is limited to N <= 10".into()));
        }
        Ok(())
    }
}

const REJECTION_BUDGET: usize = 10_000;

/// Uniform random covered architecture of `min..=max_gates` random gates.
pub fn sample_architecture(config: &SearchConfig, rng: &mut impl Rng) -> Result<Architecture> {
    config.validate()?;
    for _ in 0..REJECTION_BUDGET {
        let count = rng.random_range(config.min_gates()..=config.max_gates);
        let gates: Vec<Gate> = (0..count)
            .map(|_| {
                let mut support = rand::seq::index::sample(rng, config.n, config.gate_arity).into_vec();
                support.sort_unstable();
                Gate::new(support)
            })
            .collect();
        let arch = Architecture::uniform(config.n, config.q, gates)?;
        if arch.covered() {
            return Ok(arch);
        }
    }
    Err(Error::Param("rejection budget exhausted while sampling a covered architecture".into()))
}

/// Metric before and after deleting a set of gates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub before: f64,
    pub after: f64,
    /// `before − after`; positive means the deletion helped.
    pub margin: f64,
}

impl Comparison {
    pub fn is_violation(&self) -> bool {
        self.margin > TIE_TOL
    }
}

pub fn compare_deletion(arch: &Architecture, deleted: &BTreeSet<usize>, metric: Metric) -> Result<Comparison> {
    let before = metric.evaluate(arch)?;
    let after = metric.evaluate(&arch.censor(deleted)?)?;
    Ok(Comparison { before, after, margin: before - after })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub metric: Metric,
    pub candidate: usize,
    pub deleted: usize,
    pub before: f64,
    pub after: f64,
    pub margin: f64,
    #[serde(serialize_with = "arch_value")]
    pub architecture: Architecture,
}

fn arch_value<S: serde::Serializer>(a: &Architecture, s: S) -> std::result::Result<S::Ok, S::Error> {
    a.to_value().serialize(s)
}

impl Violation {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("violation serializes")
    }

    /// Recomputes the comparison from the embedded architecture.
    pub fn replay(&self) -> Result<Comparison> {
        compare_deletion(&self.architecture, &BTreeSet::from([self.deleted]), self.metric)
    }
}

/// Parses one JSON line back into its architecture, deleted index and metric.
pub fn parse_violation_line(line: &str) -> Result<(Architecture, usize, Metric)> {
    #[derive(Deserialize)]
    struct Line {
        metric: Metric,
        deleted: usize,
        architecture: serde_json::Value,
    }
    let l: Line = serde_json::from_str(line).map_err(|e| Error::Parse { path: ".".into(), source: e })?;
    Ok((Architecture::parse(&l.architecture.to_string())?, l.deleted, l.metric))
}

#[derive(Clone, Debug, Default)]
pub struct ScanReport {
    pub violations: Vec<Violation>,
    pub candidates: usize,
    /// Deletions actually compared.
    pub comparisons: usize,
    /// Deletions skipped because they uncover a site.
    pub skipped: usize,
    pub errors: usize,
}

struct CandidateOutcome {
    violations: Vec<Violation>,
    comparisons: usize,
    skipped: usize,
    errors: usize,
}

fn evaluate_candidate(config: &SearchConfig, index: usize, arch: Architecture) -> CandidateOutcome {
    let mut out = CandidateOutcome { violations: vec![], comparisons: 0, skipped: 0, errors: 0 };
    let before = match config.metric.evaluate(&arch) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("candidate {index}: {e}");
            out.errors += 1;
            return out;
        }
    };
    for k in config.scope.candidates(&arch) {
        let censored = match arch.censor(&BTreeSet::from([k])) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("candidate {index}, gate {k}: {e}");
                out.errors += 1;
                continue;
            }
        };
        if let Some(site) = censored.first_uncovered() {
            log::debug!("candidate {index}: deleting gate {k} uncovers site {site}, skipped");
            out.skipped += 1;
            continue;
        }
        match config.metric.evaluate(&censored) {
            Ok(after) => {
                out.comparisons += 1;
                let margin = before - after;
                if margin > TIE_TOL {
                    out.violations.push(Violation {
                        metric: config.metric,
                        candidate: index,
                        deleted: k,
                        before,
                        after,
                        margin,
                        architecture: arch.clone(),
                    });
                }
            }
            Err(e) => {
                log::warn!("candidate {index}, gate {k}: {e}");
                out.errors += 1;
            }
        }
    }
    out
}

/// Deterministic per-candidate generator.
pub fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn all_gates(n: usize, arity: usize) -> Vec<Vec<usize>> {
    let mut out = vec![];
    let mut cur = vec![];
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, arity, &mut cur, &mut out);
    out
}

/// Upper limit on the number of sequences an exhaustive scan will visit.
pub const EXHAUSTIVE_LIMIT: u64 = 5_000_000;

/// Runs the search and returns violations sorted by decreasing margin.
pub fn scan(config: &SearchConfig) -> Result<ScanReport> {
    config.validate()?;
    let candidates: Vec<(usize, Architecture)> = if config.exhaustive {
        let gates = all_gates(config.n, config.gate_arity);
        let total = (gates.len() as u64).checked_pow(config.max_gates as u32).unwrap_or(u64::MAX);
        if total > EXHAUSTIVE_LIMIT {
            return Err(Error::TooLarge { what: format!("{total} sequences for an exhaustive scan") });
        }
        (0..total as usize)
            .filter_map(|mut code| {
                let mut seq = Vec::with_capacity(config.max_gates);
                for _ in 0..config.max_gates {
                    seq.push(Gate::new(gates[code % gates.len()].clone()));
                    code /= gates.len();
                }
                Architecture::uniform(config.n, config.q, seq).ok().filter(|a| a.covered())
            })
            .enumerate()
            .collect()
    } else {
        (0..config.samples)
            .map(|i| sample_architecture(config, &mut candidate_rng(config.seed, i)).map(|a| (i, a)))
            .collect::<Result<Vec<_>>>()?
    };
    let outcomes: Vec<CandidateOutcome> =
        candidates.into_par_iter().map(|(i, a)| evaluate_candidate(config, i, a)).collect();
    let mut report = ScanReport { candidates: outcomes.len(), ..Default::default() };
    for o in outcomes {
        report.comparisons += o.comparisons;
        report.skipped += o.skipped;
        report.errors += o.errors;
        report.violations.extend(o.violations);
    }
    report.violations.sort_by(|a, b| {
        b.margin
            .total_cmp(&a.margin)
            .then(a.candidate.cmp(&b.candidate))
            .then(a.deleted.cmp(&b.deleted))
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::hide_seek_c;

    #[test]
    fn sampling_is_deterministic_and_covered() {
        let cfg = SearchConfig::new(5, 6, Metric::EigenGap, DeletionScope::LastGate);
        for i in 0..50 {
            let a = sample_architecture(&cfg, &mut candidate_rng(11, i)).unwrap();
            let b = sample_architecture(&cfg, &mut candidate_rng(11, i)).unwrap();
            assert_eq!(a, b);
            assert!(a.covered());
            assert!(a.gates().len() <= 6);
            assert!(a.gates().iter().all(|g| g.support.len() == 2));
        }
    }

    #[test]
    fn impossible_cover_is_rejected() {
        let cfg = SearchConfig::new(7, 3, Metric::EigenGap, DeletionScope::LastGate);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hide_seek_deletion_is_a_violation() {
        let c = compare_deletion(&hide_seek_c(5, 2).unwrap(), &BTreeSet::from([1, 3]), Metric::EigenGap).unwrap();
        assert!(c.is_violation());
        assert!((c.before - 0.0391).abs() < 1e-4 && (c.after - 0.0089).abs() < 1e-4);
    }

    #[test]
    fn scopes() {
        let a = hide_seek_c(5, 2).unwrap();
        assert_eq!(DeletionScope::LastGate.candidates(&a), vec![4]);
        assert_eq!(DeletionScope::Boundary.candidates(&a), vec![0, 4]);
        assert_eq!(DeletionScope::InteriorOnly.candidates(&a), vec![1, 2, 3]);
        assert_eq!(DeletionScope::AnyGate.candidates(&a).len(), 5);
    }

    #[test]
    fn names_roundtrip() {
        for m in [Metric::EigenGap, Metric::SingularGap, Metric::MultError] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        for s in [DeletionScope::AnyGate, DeletionScope::InteriorOnly, DeletionScope::LastGate, DeletionScope::Boundary] {
            assert_eq!(s.name().parse::<DeletionScope>().unwrap(), s);
        }
    }

    #[test]
    fn scan_is_deterministic_and_replayable() {
        let cfg = SearchConfig { samples: 60, seed: 3, ..SearchConfig::new(4, 5, Metric::EigenGap, DeletionScope::AnyGate) };
        let a = scan(&cfg).unwrap();
        let b = scan(&cfg).unwrap();
        assert_eq!(a.violations, b.violations);
        for v in &a.violations {
            let line = v.to_json_line();
            let (arch, k, m) = parse_violation_line(&line).unwrap();
            assert_eq!(arch, v.architecture);
            let r = compare_deletion(&arch, &BTreeSet::from([k]), m).unwrap();
            assert!((r.margin - v.margin).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_small() {
        let cfg = SearchConfig { exhaustive: true, ..SearchConfig::new(3, 3, Metric::SingularGap, DeletionScope::LastGate) };
        let r = scan(&cfg).unwrap();
        assert!(r.candidates > 0);
        assert!(r.violations.is_empty());
    }
}
