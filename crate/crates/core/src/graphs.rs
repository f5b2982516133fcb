//! Gate ensembles sampled from the edges of a graph: one step applies a Haar
//! gate on a uniformly random edge, so the moment operator is the edge
//! average of the gate projectors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::perm2::{deflated_spectrum, gate_transfer, GateProjector, Gram, SpectrumOptions, SpectrumResult};

/// Simple undirected graph on sites `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteGraph {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl SiteGraph {
    pub fn new(n: usize, edges: Vec<[usize; 2]>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "at least two vertices required"));
        }
        let mut seen = BTreeSet::new();
        for (i, &[a, b]) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edges[{i}]"), "vertex out of range"));
            }
            if a == b {
                return Err(Error::invalid(format!("edges[{i}]"), "self-loop"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("edges[{i}]"), "duplicate edge"));
            }
        }
        Ok(SiteGraph { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        (0..self.n).all(|v| find(&mut parent, v) == root)
    }

    pub fn with_edge(&self, a: usize, b: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.push([a, b]);
        SiteGraph::new(self.n, edges)
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n || perm.iter().collect::<BTreeSet<_>>().len() != self.n {
            return Err(Error::Param("relabeling must be a permutation".into()));
        }
        SiteGraph::new(self.n, self.edges.iter().map(|&[a, b]| [perm[a], perm[b]]).collect())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let g: SiteGraph = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { path: e.path().to_string(), source: e.into_inner() })?;
        SiteGraph::new(g.n, g.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

pub fn path(n: usize) -> Result<SiteGraph> {
    if n < 2 {
        return Err(Error::Param("path needs n >= 2".into()));
    }
    SiteGraph::new(n, (0..n - 1).map(|i| [i, i + 1]).collect())
}

/// Path on `n` vertices plus every missing edge among `0..k`.
pub fn lollipop(n: usize, k: usize) -> Result<SiteGraph> {
    if k < 2 || k > n {
        return Err(Error::Param(format!("lollipop needs 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut edges: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
    for a in 0..k {
        for b in a + 2..k {
            edges.push([a, b]);
        }
    }
    SiteGraph::new(n, edges)
}

/// Edge average of gate projectors in the {I, S} basis.
pub struct GraphOperator {
    projectors: Vec<GateProjector>,
    fixed: GateProjector,
    gram: Gram,
}

impl GraphOperator {
    pub fn dim(&self) -> usize {
        self.fixed.dim()
    }

    pub fn edge_count(&self) -> usize {
        self.projectors.len()
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn fixed_projector(&self) -> &GateProjector {
        &self.fixed
    }
}

impl LinearOperator for GraphOperator {
    fn dim(&self) -> usize {
        self.fixed.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for p in &self.projectors {
            p.apply_add(x, y);
        }
        let w = 1.0 / self.projectors.len() as f64;
        y.iter_mut().for_each(|v| *v *= w);
    }
}

pub fn graph_operator(graph: &SiteGraph, q: usize) -> Result<GraphOperator> {
    if !graph.connected() {
        return Err(Error::Disconnected);
    }
    let dims = vec![q; graph.n()];
    let projectors = graph
        .edges()
        .iter()
        .map(|e| gate_transfer(e, &dims))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..graph.n()).collect();
    Ok(GraphOperator { projectors, fixed: gate_transfer(&all, &dims)?, gram: Gram::new(&dims) })
}

/// Subleading eigenvalue of the edge-averaged operator after deflating the
/// fixed space. The operator is Gram self-adjoint, so the singular value is
/// computed too and must agree.
pub fn graph_gap(graph: &SiteGraph, q: usize) -> Result<SpectrumResult> {
    graph_gap_with(graph, q, &SpectrumOptions::singular())
}

pub fn graph_gap_with(graph: &SiteGraph, q: usize, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    let op = graph_operator(graph, q)?;
    let opts = SpectrumOptions { singular: true, ..opts.clone() };
    let r = deflated_spectrum(&op, &op, &op.fixed, &op.gram, 1, &opts)?;
    let s = r.singular_subleading.unwrap_or(f64::NAN);
    if (s - r.lambda()).abs() > 1e-8 {
        return Err(Error::Param(format!(
            "self-adjoint operator with eigenvalue {} but singular value {s}",
            r.lambda()
        )));
    }
    Ok(r)
}

/// One row of a lollipop sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphGapRow {
    pub graph: String,
    pub n: usize,
    pub k: usize,
    pub edges: usize,
    pub gap_raw: f64,
    /// `|E| · gap`, the gap per gate application.
    pub gap_normalized: f64,
}

impl GraphGapRow {
    pub fn new(graph: &str, g: &SiteGraph, k: usize, gap: f64) -> Self {
        GraphGapRow {
            graph: graph.to_string(),
            n: g.n(),
            k,
            edges: g.edges().len(),
            gap_raw: gap,
            gap_normalized: g.edges().len() as f64 * gap,
        }
    }
}

/// Path row followed by one lollipop row per clique size.
pub fn lollipop_sweep(n: usize, ks: &[usize], q: usize) -> Result<Vec<GraphGapRow>> {
    use rayon::prelude::*;
    let p = path(n)?;
    let mut rows = vec![GraphGapRow::new("path", &p, 0, graph_gap(&p, q)?.gap)];
    let lol: Vec<GraphGapRow> = ks
        .par_iter()
        .map(|&k| {
            let g = lollipop(n, k)?;
            Ok(GraphGapRow::new("lollipop", &g, k, graph_gap(&g, q)?.gap))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(lol);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm2::{multiset_distance, nonzero_spectrum};

    #[test]
    fn constructors() {
        assert_eq!(path(10).unwrap().edges().len(), 9);
        assert_eq!(lollipop(10, 5).unwrap().edges().len(), 15);
        assert_eq!(lollipop(6, 2).unwrap(), path(6).unwrap());
        assert!(lollipop(5, 6).is_err());
        assert!(SiteGraph::new(3, vec![[0, 1], [1, 0]]).is_err());
        assert!(SiteGraph::new(3, vec![[1, 1]]).is_err());
    }

    #[test]
    fn single_edge_spectrum() {
        let g = SiteGraph::new(2, vec![[0, 1]]).unwrap();
        let op = graph_operator(&g, 2).unwrap();
        let m = crate::perm2::dense_from(4, |x, y| op.apply(x, y));
        let p = gate_transfer(&[0, 1], &[2, 2]).unwrap().to_dense();
        assert!((&m - &p).amax() < 1e-15);
        let r = graph_gap(&g, 2).unwrap();
        assert!(r.lambda() < 1e-12);
        assert_eq!(r.unit_multiplicity, 2);
    }

    #[test]
    fn self_adjoint_in_gram_metric() {
        let g = lollipop(5, 3).unwrap();
        let op = graph_operator(&g, 2).unwrap();
        let m = crate::perm2::dense_from(op.dim(), |x, y| op.apply(x, y));
        let gram = op.gram().to_dense();
        assert!((&gram * &m - m.transpose() * &gram).amax() < 1e-10);
    }

    #[test]
    fn path_has_positive_gap() {
        let r = graph_gap(&path(3).unwrap(), 2).unwrap();
        assert!(r.gap > 0.0);
        assert_eq!(r.unit_multiplicity, 2);
    }

    #[test]
    fn disconnected_rejected() {
        let g = SiteGraph::new(4, vec![[0, 1], [2, 3]]).unwrap();
        assert!(matches!(graph_gap(&g, 2), Err(Error::Disconnected)));
    }

    #[test]
    fn relabeling_preserves_spectrum() {
        let g = lollipop(6, 4).unwrap();
        let h = g.relabel(&[3, 5, 0, 1, 4, 2]).unwrap();
        let a = graph_gap(&g, 2).unwrap();
        let b = graph_gap(&h, 2).unwrap();
        let d = multiset_distance(&nonzero_spectrum(&a.eigenvalues, 1e-9), &nonzero_spectrum(&b.eigenvalues, 1e-9));
        assert!(d.unwrap() < 1e-10);
    }

    #[test]
    fn json_roundtrip() {
        let g = lollipop(5, 3).unwrap();
        assert_eq!(SiteGraph::parse(&g.to_json()).unwrap(), g);
        let err = SiteGraph::parse(r#"{"n":3,"edges":[[0,1],[1,7]]}"#).unwrap_err();
        assert_eq!(err.to_string(), "edges[1]: vertex out of range");
    }
}
