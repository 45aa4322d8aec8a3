//! Network data model: vertices, edges, incidence, validation, and an exact
//! weighted shortest-path oracle on the vertex graph.
//!
//! Edges carry a length, a source density `f` and an inverse slope bound
//! `1/eta`, both given as expressions of the normalized parameter
//! `t = s / length` with `s` the arclength. All per-edge evaluation helpers
//! take arclength and rescale internally.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::expr::{EvalError, Expr};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    /// Sand exits here; the standing layer is pinned to zero.
    Boundary,
    /// Interior vertex exchanging mass among its incident edges.
    Transition,
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub position: [f64; 2],
    pub kind: VertexKind,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub start: VertexId,
    pub end: VertexId,
    /// Arclength of the edge, strictly positive.
    pub length: f64,
    /// Source density on the normalized parameter.
    pub source: Expr,
    /// Inverse inhomogeneity 1/eta on the normalized parameter.
    pub eta_inv: Expr,
    /// Requested number of interior grid nodes (M_j >= 1).
    pub n_nodes: usize,
}

/// Which endpoint of an edge touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndSide {
    Start,
    End,
}

impl Edge {
    pub fn source_at(&self, s: f64) -> Result<f64, EvalError> {
        self.source.eval(s / self.length)
    }

    pub fn eta_inv_at(&self, s: f64) -> Result<f64, EvalError> {
        self.eta_inv.eval(s / self.length)
    }

    pub fn endpoint(&self, side: EndSide) -> VertexId {
        match side {
            EndSide::Start => self.start,
            EndSide::End => self.end,
        }
    }

    pub fn param_of(&self, side: EndSide) -> f64 {
        match side {
            EndSide::Start => 0.0,
            EndSide::End => self.length,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<(EdgeId, EndSide)>>,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("edge {edge} references vertex {vertex} out of range (have {count})")]
    VertexOutOfRange {
        edge: usize,
        vertex: usize,
        count: usize,
    },
}

/// Evaluation failure of per-edge data, tagged with the arclength it
/// occurred at.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation failed on {edge} at s={t}: {source}")]
pub struct EdgeEvalError {
    pub edge: EdgeId,
    pub t: f64,
    pub source: EvalError,
}

impl Network {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Network, NetworkError> {
        let mut incidence = vec![Vec::new(); vertices.len()];
        for (j, e) in edges.iter().enumerate() {
            for (v, side) in [(e.start, EndSide::Start), (e.end, EndSide::End)] {
                if v.0 >= vertices.len() {
                    return Err(NetworkError::VertexOutOfRange {
                        edge: j,
                        vertex: v.0,
                        count: vertices.len(),
                    });
                }
                incidence[v.0].push((EdgeId(j), side));
            }
        }
        Ok(Network {
            vertices,
            edges,
            incidence,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    /// Incident edges of a vertex with the side it touches.
    pub fn incident(&self, v: VertexId) -> &[(EdgeId, EndSide)] {
        &self.incidence[v.0]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence[v.0].len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len()).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertex_ids()
            .filter(|v| self.vertex(*v).kind == VertexKind::Boundary)
    }

    pub fn transition_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertex_ids()
            .filter(|v| self.vertex(*v).kind == VertexKind::Transition)
    }

    /// Weighted length of an edge: the integral of 1/eta over its arclength,
    /// by composite trapezoid on the edge's own grid resolution
    /// (`n_nodes + 1` intervals).
    pub fn edge_weight(&self, e: EdgeId) -> Result<f64, EdgeEvalError> {
        let edge = self.edge(e);
        let n = edge.n_nodes + 1;
        let h = edge.length / n as f64;
        let at = |k: usize| -> Result<f64, EdgeEvalError> {
            let s = if k == n { edge.length } else { k as f64 * h };
            edge.eta_inv_at(s).map_err(|err| EdgeEvalError {
                edge: e,
                t: s,
                source: err,
            })
        };
        let mut acc = 0.5 * (at(0)? + at(n)?);
        for k in 1..n {
            acc += at(k)?;
        }
        Ok(acc * h)
    }

    /// All-pairs weighted shortest-path distances between vertices, using
    /// [`Network::edge_weight`] as arc cost. Symmetric with zero diagonal;
    /// unreachable pairs are `f64::INFINITY`.
    pub fn vertex_distance_matrix(&self) -> Result<Vec<Vec<f64>>, EdgeEvalError> {
        let n = self.vertices.len();
        let mut weights = Vec::with_capacity(self.edges.len());
        for e in self.edge_ids() {
            weights.push(self.edge_weight(e)?);
        }
        let mut matrix = Vec::with_capacity(n);
        for src in 0..n {
            matrix.push(self.dijkstra_vertices(VertexId(src), &weights));
        }
        Ok(matrix)
    }

    fn dijkstra_vertices(&self, start: VertexId, weights: &[f64]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        dist[start.0] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, start.0));
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(e, _) in &self.incidence[v] {
                let edge = self.edge(e);
                let other = if edge.start.0 == v { edge.end } else { edge.start };
                let cand = d + weights[e.0];
                if cand < dist[other.0] {
                    dist[other.0] = cand;
                    heap.push(Item(cand, other.0));
                }
            }
        }
        dist
    }

    /// Checks the structural and data hypotheses with the default sampling
    /// density (1000 points per edge).
    pub fn validate(&self) -> ValidationReport {
        self.validate_with(1000)
    }

    pub fn validate_with(&self, samples_per_edge: usize) -> ValidationReport {
        let mut violations = Vec::new();

        if self.boundary_vertices().next().is_none() {
            violations.push(Violation::NoBoundaryVertex);
        }
        for v in self.vertex_ids() {
            if self.degree(v) == 1 && self.vertex(v).kind != VertexKind::Boundary {
                violations.push(Violation::DegreeOneNotBoundary { vertex: v });
            }
        }
        if !self.vertices.is_empty() {
            let reached = self.reachable_from(VertexId(0));
            if reached < self.vertices.len() {
                violations.push(Violation::Disconnected {
                    reached,
                    total: self.vertices.len(),
                });
            }
        }

        let mut seen_pairs: Vec<(usize, usize)> = Vec::new();
        for j in self.edge_ids() {
            let edge = self.edge(j);
            if !(edge.length > 0.0) || !edge.length.is_finite() {
                violations.push(Violation::NonPositiveLength {
                    edge: j,
                    length: edge.length,
                });
            }
            if edge.start == edge.end {
                violations.push(Violation::SelfLoop { edge: j });
            }
            let pair = (
                edge.start.0.min(edge.end.0),
                edge.start.0.max(edge.end.0),
            );
            if seen_pairs.contains(&pair) {
                violations.push(Violation::DuplicateEdge { edge: j });
            }
            seen_pairs.push(pair);
            if edge.n_nodes == 0 {
                violations.push(Violation::NoInteriorNodes { edge: j });
            }
            self.sample_edge_data(j, samples_per_edge, &mut violations);
        }

        ValidationReport { violations }
    }

    fn sample_edge_data(&self, j: EdgeId, samples: usize, out: &mut Vec<Violation>) {
        let edge = self.edge(j);
        if !(edge.length > 0.0) || !edge.length.is_finite() {
            return;
        }
        let n = samples.max(2);
        let mut worst_eta: Option<(f64, f64)> = None;
        let mut worst_f: Option<(f64, f64)> = None;
        for k in 0..n {
            let s = edge.length * k as f64 / (n - 1) as f64;
            match edge.eta_inv_at(s) {
                Ok(v) if v > 0.0 => {}
                Ok(v) => {
                    if worst_eta.map_or(true, |(_, w)| v < w) {
                        worst_eta = Some((s, v));
                    }
                }
                Err(err) => {
                    out.push(Violation::EvalFailure {
                        edge: j,
                        field: EdgeField::EtaInv,
                        t: s,
                        error: err,
                    });
                    return;
                }
            }
            match edge.source_at(s) {
                Ok(v) if v >= 0.0 => {}
                Ok(v) => {
                    if worst_f.map_or(true, |(_, w)| v < w) {
                        worst_f = Some((s, v));
                    }
                }
                Err(err) => {
                    out.push(Violation::EvalFailure {
                        edge: j,
                        field: EdgeField::Source,
                        t: s,
                        error: err,
                    });
                    return;
                }
            }
        }
        if let Some((s, v)) = worst_eta {
            out.push(Violation::EtaInvNotPositive { edge: j, t: s, value: v });
        }
        if let Some((s, v)) = worst_f {
            out.push(Violation::SourceNegative { edge: j, t: s, value: v });
        }
    }

    fn reachable_from(&self, start: VertexId) -> usize {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![start.0];
        seen[start.0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(e, _) in &self.incidence[v] {
                let edge = self.edge(e);
                for w in [edge.start.0, edge.end.0] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeField {
    Source,
    EtaInv,
}

impl fmt::Display for EdgeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeField::Source => write!(f, "f"),
            EdgeField::EtaInv => write!(f, "eta_inv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBoundaryVertex,
    Disconnected { reached: usize, total: usize },
    DegreeOneNotBoundary { vertex: VertexId },
    NonPositiveLength { edge: EdgeId, length: f64 },
    SelfLoop { edge: EdgeId },
    DuplicateEdge { edge: EdgeId },
    NoInteriorNodes { edge: EdgeId },
    EtaInvNotPositive { edge: EdgeId, t: f64, value: f64 },
    SourceNegative { edge: EdgeId, t: f64, value: f64 },
    EvalFailure {
        edge: EdgeId,
        field: EdgeField,
        t: f64,
        error: EvalError,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBoundaryVertex => write!(f, "no boundary vertex"),
            Violation::Disconnected { reached, total } => {
                write!(f, "network is disconnected ({} of {} vertices reachable)", reached, total)
            }
            Violation::DegreeOneNotBoundary { vertex } => {
                write!(f, "vertex {} has degree 1 but is not boundary", vertex)
            }
            Violation::NonPositiveLength { edge, length } => {
                write!(f, "edge {} has non-positive length {}", edge, length)
            }
            Violation::SelfLoop { edge } => write!(f, "edge {} is a self-loop", edge),
            Violation::DuplicateEdge { edge } => {
                write!(f, "edge {} duplicates another edge between the same vertices", edge)
            }
            Violation::NoInteriorNodes { edge } => {
                write!(f, "edge {} requests no interior grid nodes", edge)
            }
            Violation::EtaInvNotPositive { edge, t, value } => {
                write!(f, "eta inverse not strictly positive on {} (value {} at s={})", edge, value, t)
            }
            Violation::SourceNegative { edge, t, value } => {
                write!(f, "source f negative on {} (value {} at s={})", edge, value, t)
            }
            Violation::EvalFailure { edge, field, t, error } => {
                write!(f, "cannot evaluate {} on {} at s={}: {}", field, edge, t, error)
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "network valid")
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {}", v)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netfile::{generate, Generator};

    fn expr(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn two_vertex_edge(kind_a: VertexKind, kind_b: VertexKind, eta_inv: &str) -> Network {
        Network::new(
            vec![
                Vertex { position: [0.0, 0.0], kind: kind_a },
                Vertex { position: [1.0, 0.0], kind: kind_b },
            ],
            vec![Edge {
                start: VertexId(0),
                end: VertexId(1),
                length: 1.0,
                source: expr("0"),
                eta_inv: expr(eta_inv),
                n_nodes: 9,
            }],
        )
        .unwrap()
    }

    #[test]
    fn test1_network_is_valid() {
        let net = generate(Generator::Test1).unwrap().network;
        assert!(net.validate().is_valid());
        assert_eq!(net.vertices().len(), 4);
        assert_eq!(net.edges().len(), 3);
    }

    #[test]
    fn no_boundary_vertex_is_flagged() {
        let net = two_vertex_edge(VertexKind::Transition, VertexKind::Transition, "1");
        let report = net.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NoBoundaryVertex)));
    }

    #[test]
    fn eta_zero_at_sample_is_flagged() {
        // eta_inv(t) = t vanishes at t = 0
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "t");
        let report = net.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EtaInvNotPositive { .. })));
    }

    #[test]
    fn edge_weight_unit_integrand() {
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "1");
        assert!((net.edge_weight(EdgeId(0)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_weight_constant_inhomogeneity() {
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "0.2");
        assert!((net.edge_weight(EdgeId(0)).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn edge_weight_linear_matches_antiderivative() {
        // exact integral of 1 + t over [0, 1] is t + t^2/2 -> 1.5; the
        // trapezoid rule is exact on linear integrands
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "1+t");
        assert!((net.edge_weight(EdgeId(0)).unwrap() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn edge_weight_reports_eval_failure() {
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "1/(t-0.5)");
        let err = net.edge_weight(EdgeId(0)).unwrap_err();
        assert_eq!(err.edge, EdgeId(0));
        assert!((err.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_matrix_on_test1() {
        let net = generate(Generator::Test1).unwrap().network;
        let m = net.vertex_distance_matrix().unwrap();
        // enumerating simple paths on the 3-arm star: x1 <-> x2 only via x0
        assert!((m[1][2] - 1.0).abs() < 1e-14);
        assert!((m[0][3] - 1.0).abs() < 1e-14);
        for i in 0..4 {
            assert_eq!(m[i][i], 0.0);
            for j in 0..4 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_edge_distance_is_weight() {
        let net = two_vertex_edge(VertexKind::Boundary, VertexKind::Boundary, "1+t");
        let m = net.vertex_distance_matrix().unwrap();
        let w = net.edge_weight(EdgeId(0)).unwrap();
        assert_eq!(m[0][1], w);
    }

    #[test]
    fn metric_axioms_on_generated_networks() {
        for gen in [Generator::Test1, Generator::Test2, Generator::Test3] {
            let net = generate(gen).unwrap().network;
            let m = net.vertex_distance_matrix().unwrap();
            let n = net.vertices().len();
            for i in 0..n {
                assert_eq!(m[i][i], 0.0);
                for j in 0..n {
                    assert!((m[i][j] - m[j][i]).abs() < 1e-12);
                    for k in 0..n {
                        assert!(m[i][j] <= m[i][k] + m[k][j] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn edge_weight_quadrature_second_order() {
        // smooth non-polynomial integrand: compare resolutions n and 2n
        let mk = |n_nodes| {
            Network::new(
                vec![
                    Vertex { position: [0.0, 0.0], kind: VertexKind::Boundary },
                    Vertex { position: [1.0, 0.0], kind: VertexKind::Boundary },
                ],
                vec![Edge {
                    start: VertexId(0),
                    end: VertexId(1),
                    length: 1.0,
                    source: expr("0"),
                    eta_inv: expr("exp(t)"),
                    n_nodes,
                }],
            )
            .unwrap()
        };
        let exact = std::f64::consts::E - 1.0;
        let e1 = (mk(9).edge_weight(EdgeId(0)).unwrap() - exact).abs();
        let e2 = (mk(19).edge_weight(EdgeId(0)).unwrap() - exact).abs();
        let rate = (e1 / e2).log2();
        assert!(rate > 1.8 && rate < 2.2, "rate {}", rate);
    }
}
