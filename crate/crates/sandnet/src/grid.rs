//! Discretization of a network: per-edge node parameters plus a global node
//! table in which each vertex appears once, shared by its incident edges.

use crate::net::{EdgeEvalError, EdgeId, EndSide, Network, VertexId};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(VertexId),
    /// Interior node of an edge, with its local index into the edge's
    /// parameter list.
    Interior(EdgeId, usize),
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub node: NodeId,
    pub edge: EdgeId,
    /// Local index of the originating node on `edge`.
    pub from_local: usize,
    /// Local index of the neighbor on `edge`.
    pub to_local: usize,
    /// Length of the connecting segment.
    pub len: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("edge {0} requests no interior nodes")]
    NoInteriorNodes(EdgeId),
    #[error("edge {0} has a non-positive length")]
    BadLength(EdgeId),
}

/// Grid on a network. Per edge the parameters run from 0 to the edge length
/// inclusive; `edge_nodes` maps them to global node ids, the first and last
/// entries being the shared vertex nodes.
#[derive(Debug, Clone)]
pub struct Grid {
    kinds: Vec<NodeKind>,
    vertex_nodes: Vec<NodeId>,
    edge_params: Vec<Vec<f64>>,
    edge_nodes: Vec<Vec<NodeId>>,
    max_step: f64,
}

impl Grid {
    /// Uniform per-edge partition with the edge's own `n_nodes` interior
    /// nodes (step `length / (n_nodes + 1)`).
    pub fn build(net: &Network) -> Result<Grid, GridError> {
        let params = net
            .edges()
            .iter()
            .enumerate()
            .map(|(j, e)| {
                if e.n_nodes == 0 {
                    return Err(GridError::NoInteriorNodes(EdgeId(j)));
                }
                if !(e.length > 0.0) {
                    return Err(GridError::BadLength(EdgeId(j)));
                }
                let n = e.n_nodes + 1;
                let h = e.length / n as f64;
                Ok((0..=n)
                    .map(|m| if m == n { e.length } else { m as f64 * h })
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>, GridError>>()?;
        Ok(Grid::from_params(net, params))
    }

    /// Like [`Grid::build`] but overriding every edge's node count so the
    /// step is as close as possible to `h`.
    pub fn with_target_step(net: &Network, h: f64) -> Result<Grid, GridError> {
        let params = net
            .edges()
            .iter()
            .enumerate()
            .map(|(j, e)| {
                if !(e.length > 0.0) {
                    return Err(GridError::BadLength(EdgeId(j)));
                }
                let n = ((e.length / h).round() as usize).max(2);
                let step = e.length / n as f64;
                Ok((0..=n)
                    .map(|m| if m == n { e.length } else { m as f64 * step })
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>, GridError>>()?;
        Ok(Grid::from_params(net, params))
    }

    /// Builds the node table from explicit per-edge parameter lists, each
    /// strictly increasing from 0 to the edge length with at least one
    /// interior entry.
    pub fn from_params(net: &Network, edge_params: Vec<Vec<f64>>) -> Grid {
        assert_eq!(edge_params.len(), net.edges().len());
        let mut kinds: Vec<NodeKind> = net
            .vertex_ids()
            .map(NodeKind::Vertex)
            .collect();
        let vertex_nodes: Vec<NodeId> = (0..kinds.len()).map(NodeId).collect();
        let mut edge_nodes = Vec::with_capacity(edge_params.len());
        let mut max_step = 0.0f64;
        for (j, params) in edge_params.iter().enumerate() {
            debug_assert!(params.len() >= 3, "edge {} needs an interior node", j);
            let edge = net.edge(EdgeId(j));
            let mut nodes = Vec::with_capacity(params.len());
            nodes.push(vertex_nodes[edge.start.0]);
            for i in 1..params.len() - 1 {
                nodes.push(NodeId(kinds.len()));
                kinds.push(NodeKind::Interior(EdgeId(j), i));
            }
            nodes.push(vertex_nodes[edge.end.0]);
            edge_nodes.push(nodes);
            for w in params.windows(2) {
                max_step = max_step.max(w[1] - w[0]);
            }
        }
        Grid {
            kinds,
            vertex_nodes,
            edge_params,
            edge_nodes,
            max_step,
        }
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.0]
    }

    pub fn vertex_node(&self, v: VertexId) -> NodeId {
        self.vertex_nodes[v.0]
    }

    pub fn edge_params(&self, e: EdgeId) -> &[f64] {
        &self.edge_params[e.0]
    }

    pub fn edge_nodes(&self, e: EdgeId) -> &[NodeId] {
        &self.edge_nodes[e.0]
    }

    /// Largest step over all edges.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn edge_count(&self) -> usize {
        self.edge_params.len()
    }

    /// Endpoint local index of a vertex on an incident edge.
    pub fn vertex_local(&self, e: EdgeId, side: EndSide) -> usize {
        match side {
            EndSide::Start => 0,
            EndSide::End => self.edge_params[e.0].len() - 1,
        }
    }

    pub fn neighbors(&self, net: &Network, n: NodeId) -> Vec<Neighbor> {
        let mut out = Vec::new();
        match self.kinds[n.0] {
            NodeKind::Interior(e, i) => {
                let params = &self.edge_params[e.0];
                let nodes = &self.edge_nodes[e.0];
                out.push(Neighbor {
                    node: nodes[i - 1],
                    edge: e,
                    from_local: i,
                    to_local: i - 1,
                    len: params[i] - params[i - 1],
                });
                out.push(Neighbor {
                    node: nodes[i + 1],
                    edge: e,
                    from_local: i,
                    to_local: i + 1,
                    len: params[i + 1] - params[i],
                });
            }
            NodeKind::Vertex(v) => {
                for &(e, side) in net.incident(v) {
                    let params = &self.edge_params[e.0];
                    let nodes = &self.edge_nodes[e.0];
                    let (from, to) = match side {
                        EndSide::Start => (0, 1),
                        EndSide::End => (params.len() - 1, params.len() - 2),
                    };
                    out.push(Neighbor {
                        node: nodes[to],
                        edge: e,
                        from_local: from,
                        to_local: to,
                        len: (params[from] - params[to]).abs(),
                    });
                }
            }
        }
        out
    }
}

/// Evaluates 1/eta at every grid parameter, edgewise.
pub fn eta_inv_table(net: &Network, grid: &Grid) -> Result<Vec<Vec<f64>>, EdgeEvalError> {
    table(net, grid, |edge: &crate::net::Edge, s| edge.eta_inv_at(s))
}

/// Evaluates the source f at every grid parameter, edgewise.
pub fn source_table(net: &Network, grid: &Grid) -> Result<Vec<Vec<f64>>, EdgeEvalError> {
    table(net, grid, |edge: &crate::net::Edge, s| edge.source_at(s))
}

fn table(
    net: &Network,
    grid: &Grid,
    eval: impl Fn(&crate::net::Edge, f64) -> Result<f64, crate::expr::EvalError>,
) -> Result<Vec<Vec<f64>>, EdgeEvalError> {
    let mut out = Vec::with_capacity(net.edges().len());
    for e in net.edge_ids() {
        let mut vals = Vec::with_capacity(grid.edge_params(e).len());
        for &s in grid.edge_params(e) {
            vals.push(eval(net.edge(e), s).map_err(|err| EdgeEvalError {
                edge: e,
                t: s,
                source: err,
            })?);
        }
        out.push(vals);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::VertexKind;
    use crate::netfile::{generate, Generator};

    #[test]
    fn uniform_step_and_counts() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        // short arms carry 51 nodes, the long one 101 at h = 0.01
        assert_eq!(grid.edge_params(EdgeId(0)).len(), 51);
        assert_eq!(grid.edge_params(EdgeId(1)).len(), 51);
        assert_eq!(grid.edge_params(EdgeId(2)).len(), 101);
        assert!((grid.max_step() - 0.01).abs() < 1e-15);
        // shared center node
        assert_eq!(grid.edge_nodes(EdgeId(0))[0], grid.edge_nodes(EdgeId(2))[0]);
    }

    #[test]
    fn single_edge_node_count() {
        use crate::expr::Expr;
        use crate::net::{Edge, Vertex};
        let net = crate::net::Network::new(
            vec![
                Vertex { position: [0.0, 0.0], kind: VertexKind::Boundary },
                Vertex { position: [1.0, 0.0], kind: VertexKind::Boundary },
            ],
            vec![Edge {
                start: VertexId(0),
                end: VertexId(1),
                length: 1.0,
                source: Expr::parse("0").unwrap(),
                eta_inv: Expr::parse("1").unwrap(),
                n_nodes: 99,
            }],
        )
        .unwrap();
        let grid = Grid::build(&net).unwrap();
        assert_eq!(grid.edge_params(EdgeId(0)).len(), 101);
        assert!((grid.edge_params(EdgeId(0))[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn neighbor_counts_match_degrees() {
        for gen in [Generator::Test1, Generator::Test2, Generator::Test3] {
            let net = generate(gen).unwrap().network;
            let grid = Grid::build(&net).unwrap();
            for n in 0..grid.node_count() {
                let nbrs = grid.neighbors(&net, NodeId(n));
                match grid.kind(NodeId(n)) {
                    NodeKind::Interior(..) => assert_eq!(nbrs.len(), 2),
                    NodeKind::Vertex(v) => assert_eq!(nbrs.len(), net.degree(v)),
                }
            }
        }
    }

    #[test]
    fn with_target_step_overrides_counts() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::with_target_step(&net, 0.1).unwrap();
        assert_eq!(grid.edge_params(EdgeId(0)).len(), 6);
        assert_eq!(grid.edge_params(EdgeId(2)).len(), 11);
    }
}
