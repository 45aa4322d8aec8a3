//! Discrete distance field on the grid: upwind solve in fast-marching
//! order, tie enlargement, slope signs, singular sets, projections and the
//! edge partition.
//!
//! The scheme enforces, at every non-boundary node x,
//! `max_{y ~ x} -(d(y)-d(x))/Dist(x,y) = 1/eta(x)`, with 1/eta evaluated at
//! x on the edge carrying the minimizing segment. Its unique solution is the
//! discrete geodesic distance to the boundary with segment costs
//! `Dist * (1/eta at the segment end farther from the boundary)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::{eta_inv_table, Grid, NodeId, NodeKind};
use crate::net::{EdgeEvalError, EdgeId, EndSide, Network, VertexId, VertexKind};
use thiserror::Error;

/// Distance values per global grid node.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn at(&self, n: NodeId) -> f64 {
        self.values[n.0]
    }

    /// Values along one edge, ordered by its parameters.
    pub fn edge_values(&self, grid: &Grid, e: EdgeId) -> Vec<f64> {
        grid.edge_nodes(e).iter().map(|n| self.values[n.0]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Eval(#[from] EdgeEvalError),
    #[error("{missing} grid nodes unreachable from the boundary")]
    Unreached { missing: usize },
}

/// Solves the discrete eikonal problem by a causal sweep: nodes are
/// accepted in increasing distance order and never revised.
pub fn solve(net: &Network, grid: &Grid) -> Result<DistanceField, SolveError> {
    let eta_inv = eta_inv_table(net, grid)?;
    solve_with_tables(net, grid, &eta_inv)
}

pub(crate) fn solve_with_tables(
    net: &Network,
    grid: &Grid,
    eta_inv: &[Vec<f64>],
) -> Result<DistanceField, SolveError> {
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

    let mut dist = vec![f64::INFINITY; grid.node_count()];
    let mut heap = BinaryHeap::new();
    for v in net.boundary_vertices() {
        let n = grid.vertex_node(v);
        dist[n.0] = 0.0;
        heap.push(Item(0.0, n.0));
    }

    let mut accepted = 0usize;
    let mut done = vec![false; grid.node_count()];
    while let Some(Item(d, n)) = heap.pop() {
        if done[n] {
            continue;
        }
        done[n] = true;
        accepted += 1;
        for nb in grid.neighbors(net, NodeId(n)) {
            // updating nb.node from n: 1/eta at the updated node, on the
            // segment's edge
            let cost = nb.len * eta_inv[nb.edge.0][nb.to_local];
            let cand = d + cost;
            if cand < dist[nb.node.0] {
                dist[nb.node.0] = cand;
                heap.push(Item(cand, nb.node.0));
            }
        }
    }

    if accepted < grid.node_count() {
        return Err(SolveError::Unreached {
            missing: grid.node_count() - accepted,
        });
    }
    Ok(DistanceField { values: dist })
}

/// Default relative tie tolerance.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Inserts a midpoint node wherever two adjacent nodes carry equal distance
/// (within `rel_tol * (1 + max |d|)`), valued `d + seg/(2 eta(mid))`, and
/// rebuilds the grid. After this no adjacent pair ties, so every forward
/// difference has a strict sign.
pub fn enlarge_ties(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
    rel_tol: f64,
) -> Result<(Grid, DistanceField), EdgeEvalError> {
    let tol = rel_tol * (1.0 + field.max_abs());
    let mut new_params: Vec<Vec<f64>> = Vec::with_capacity(grid.edge_count());
    let mut new_interior_values: Vec<Vec<f64>> = Vec::with_capacity(grid.edge_count());

    for e in net.edge_ids() {
        let params = grid.edge_params(e);
        let nodes = grid.edge_nodes(e);
        let mut ps = Vec::with_capacity(params.len());
        let mut vs = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            ps.push(params[i]);
            vs.push(field.at(nodes[i]));
            if i + 1 < params.len() {
                let (da, db) = (field.at(nodes[i]), field.at(nodes[i + 1]));
                if (da - db).abs() <= tol {
                    let mid = 0.5 * (params[i] + params[i + 1]);
                    let seg = params[i + 1] - params[i];
                    let eta_inv_mid =
                        net.edge(e).eta_inv_at(mid).map_err(|err| EdgeEvalError {
                            edge: e,
                            t: mid,
                            source: err,
                        })?;
                    ps.push(mid);
                    vs.push(da.min(db) + 0.5 * seg * eta_inv_mid);
                }
            }
        }
        new_params.push(ps);
        new_interior_values.push(vs);
    }

    let new_grid = Grid::from_params(net, new_params);
    let mut values = vec![0.0; new_grid.node_count()];
    for v in net.vertex_ids() {
        values[new_grid.vertex_node(v).0] = field.at(grid.vertex_node(v));
    }
    for e in net.edge_ids() {
        let nodes = new_grid.edge_nodes(e);
        for (i, n) in nodes.iter().enumerate() {
            values[n.0] = new_interior_values[e.0][i];
        }
    }
    Ok((new_grid, DistanceField { values }))
}

#[derive(Debug, Error, PartialEq)]
pub enum StructureError {
    #[error("flat segment on {edge} at cell {cell} (run enlarge_ties first)")]
    FlatSegment { edge: EdgeId, cell: usize },
    #[error("interior local minimum on {edge} at node {node}")]
    InteriorMinimum { edge: EdgeId, node: usize },
    #[error("more than one interior singular point on {edge}")]
    MultipleSingular { edge: EdgeId },
    #[error("distance descends from boundary vertex {vertex} into {edge}")]
    BoundaryDescent { vertex: VertexId, edge: EdgeId },
    #[error("transition vertex {0} is a local minimum of the distance")]
    VertexMinimum(VertexId),
    #[error("edge {0} not reached by the partition recursion")]
    UnpartitionedEdge(EdgeId),
}

/// Partition of the edges driving the rolling-layer recursion: first the
/// edges owning a singular point (interior or a max-vertex endpoint), then
/// layers of edges reached by hopping across transition vertices.
#[derive(Debug, Clone)]
pub struct EdgePartition {
    /// Edges with an interior singular point.
    pub interior_singular: Vec<EdgeId>,
    /// Edges with an endpoint where the distance attains a local maximum.
    pub vertex_max: Vec<EdgeId>,
    /// classes[0] is the union of the two groups above; classes[m] holds
    /// the edges first reached after m hops.
    pub classes: Vec<Vec<EdgeId>>,
}

impl EdgePartition {
    /// Class index of an edge.
    pub fn class_of(&self, e: EdgeId) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&e))
    }
}

/// Slope and singular-set data derived from an enlarged distance field.
#[derive(Debug, Clone)]
pub struct Classification {
    /// Per edge, per cell: sign of the forward difference (+1 or -1).
    pub forward_signs: Vec<Vec<i8>>,
    /// Per edge: local index of the interior singular node, if any.
    pub singular: Vec<Option<usize>>,
    /// Per edge: local endpoint index (0 or last) of the projection target,
    /// if the edge is monotone.
    pub target: Vec<Option<usize>>,
    /// Per vertex: slope signs into each incident edge, aligned with
    /// `Network::incident`.
    pub vertex_slopes: Vec<Vec<i8>>,
    /// Per vertex: incident edges along which the distance leaves uphill.
    pub inc_plus: Vec<Vec<EdgeId>>,
    /// Per vertex: incident edges along which the distance leaves downhill.
    pub inc_minus: Vec<Vec<EdgeId>>,
    /// Per vertex: true if the distance attains a local maximum there.
    pub is_max_vertex: Vec<bool>,
    pub partition: EdgePartition,
}

impl Classification {
    /// Count of singular points including max vertices.
    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|s| s.is_some()).count()
            + self.is_max_vertex.iter().filter(|m| **m).count()
    }

    /// Walk direction at a node: sign of the forward difference, extended
    /// to the last node by its backward difference.
    pub fn direction(&self, e: EdgeId, local: usize) -> i8 {
        let signs = &self.forward_signs[e.0];
        signs[local.min(signs.len() - 1)]
    }
}

pub fn classify(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
) -> Result<Classification, StructureError> {
    let m = net.edges().len();
    let mut forward_signs = Vec::with_capacity(m);
    let mut singular = Vec::with_capacity(m);

    for e in net.edge_ids() {
        let vals = field.edge_values(grid, e);
        let mut signs = Vec::with_capacity(vals.len() - 1);
        for (c, w) in vals.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d == 0.0 {
                return Err(StructureError::FlatSegment { edge: e, cell: c });
            }
            signs.push(if d > 0.0 { 1 } else { -1 });
        }
        // admissible patterns: +...+, -...-, or +...+-...-
        let mut sing = None;
        for i in 1..signs.len() {
            if signs[i] != signs[i - 1] {
                if signs[i - 1] == -1 {
                    return Err(StructureError::InteriorMinimum { edge: e, node: i });
                }
                if sing.is_some() {
                    return Err(StructureError::MultipleSingular { edge: e });
                }
                sing = Some(i);
            }
        }
        forward_signs.push(signs);
        singular.push(sing);
    }

    let mut vertex_slopes = Vec::with_capacity(net.vertices().len());
    let mut inc_plus = Vec::with_capacity(net.vertices().len());
    let mut inc_minus = Vec::with_capacity(net.vertices().len());
    let mut is_max_vertex = Vec::with_capacity(net.vertices().len());
    for v in net.vertex_ids() {
        let mut slopes = Vec::new();
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for &(e, side) in net.incident(v) {
            let signs = &forward_signs[e.0];
            // slope leaving the vertex into the edge
            let s = match side {
                EndSide::Start => signs[0],
                EndSide::End => -signs[signs.len() - 1],
            };
            slopes.push(s);
            if s > 0 {
                plus.push(e);
            } else {
                minus.push(e);
            }
        }
        let kind = net.vertex(v).kind;
        if kind == VertexKind::Boundary && !minus.is_empty() {
            return Err(StructureError::BoundaryDescent {
                vertex: v,
                edge: minus[0],
            });
        }
        if kind == VertexKind::Transition && minus.is_empty() {
            return Err(StructureError::VertexMinimum(v));
        }
        let max_here = kind == VertexKind::Transition && plus.is_empty();
        vertex_slopes.push(slopes);
        inc_plus.push(plus);
        inc_minus.push(minus);
        is_max_vertex.push(max_here);
    }

    // projection targets of monotone edges: the endpoint whose vertex sees
    // the edge downhill
    let mut target = vec![None; m];
    for e in net.edge_ids() {
        if singular[e.0].is_some() {
            continue;
        }
        let edge = net.edge(e);
        let signs = &forward_signs[e.0];
        if signs[0] > 0 {
            // ascending: downhill endpoint is the end vertex
            debug_assert!(inc_minus[edge.end.0].contains(&e));
            target[e.0] = Some(signs.len());
        } else {
            debug_assert!(inc_minus[edge.start.0].contains(&e));
            target[e.0] = Some(0);
        }
    }

    let partition = build_partition(net, &singular, &is_max_vertex)?;

    Ok(Classification {
        forward_signs,
        singular,
        target,
        vertex_slopes,
        inc_plus,
        inc_minus,
        is_max_vertex,
        partition,
    })
}

fn build_partition(
    net: &Network,
    singular: &[Option<usize>],
    is_max_vertex: &[bool],
) -> Result<EdgePartition, StructureError> {
    let m = net.edges().len();
    let interior_singular: Vec<EdgeId> = net
        .edge_ids()
        .filter(|e| singular[e.0].is_some())
        .collect();
    let vertex_max: Vec<EdgeId> = net
        .edge_ids()
        .filter(|e| {
            singular[e.0].is_none()
                && (is_max_vertex[net.edge(*e).start.0] || is_max_vertex[net.edge(*e).end.0])
        })
        .collect();

    let mut class = vec![usize::MAX; m];
    let mut frontier: Vec<EdgeId> = Vec::new();
    for &e in interior_singular.iter().chain(&vertex_max) {
        class[e.0] = 0;
        frontier.push(e);
    }
    let mut classes = vec![frontier.clone()];
    classes[0].sort();
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &e in &frontier {
            let edge = net.edge(e);
            for v in [edge.start, edge.end] {
                if net.vertex(v).kind != VertexKind::Transition {
                    continue;
                }
                for &(k, _) in net.incident(v) {
                    if class[k.0] == usize::MAX {
                        class[k.0] = level;
                        next.push(k);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort();
        next.dedup();
        classes.push(next.clone());
        frontier = next;
    }
    if let Some(e) = (0..m).find(|&e| class[e] == usize::MAX) {
        return Err(StructureError::UnpartitionedEdge(EdgeId(e)));
    }
    Ok(EdgePartition {
        interior_singular,
        vertex_max,
        classes,
    })
}

/// Result of ascending from a node to the edge's projection set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Number of grid steps walked.
    pub steps: usize,
    /// Local index of the reached projection-set node.
    pub target_local: usize,
    /// Its parameter.
    pub target_param: f64,
}

/// Walks from a node in the ascent direction until the projection set
/// (the singular node or the monotone target endpoint) is reached.
pub fn project(
    grid: &Grid,
    class: &Classification,
    e: EdgeId,
    local: usize,
) -> Projection {
    let params = grid.edge_params(e);
    let sigma = match class.singular[e.0] {
        Some(i) => i,
        None => class.target[e.0].expect("classified edge has a projection set"),
    };
    if local == sigma {
        return Projection {
            steps: 0,
            target_local: sigma,
            target_param: params[sigma],
        };
    }
    let dir = class.direction(e, local);
    debug_assert_eq!(
        dir,
        if sigma > local { 1 } else { -1 },
        "ascent direction must point at the projection set"
    );
    Projection {
        steps: local.abs_diff(sigma),
        target_local: sigma,
        target_param: params[sigma],
    }
}

/// Largest deviation of the solved field from the discrete eikonal
/// equation, normalized per arc: at every non-boundary node the maximum
/// over neighbors of `(d(x)-d(y)) / (Dist(x,y)/eta(x))` must equal 1.
pub fn eikonal_residual(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
) -> Result<f64, EdgeEvalError> {
    let eta_inv = eta_inv_table(net, grid)?;
    let mut worst = 0.0f64;
    for n in 0..grid.node_count() {
        if let NodeKind::Vertex(v) = grid.kind(NodeId(n)) {
            if net.vertex(v).kind == VertexKind::Boundary {
                continue;
            }
        }
        let mut best = f64::NEG_INFINITY;
        for nb in grid.neighbors(net, NodeId(n)) {
            let cost = nb.len * eta_inv[nb.edge.0][nb.from_local];
            best = best.max((field.values[n] - field.at(nb.node)) / cost);
        }
        worst = worst.max((best - 1.0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::net::{Edge, Vertex};
    use crate::netfile::{generate, Generator};

    fn tent_network(n_nodes: usize) -> Network {
        Network::new(
            vec![
                Vertex { position: [0.0, 0.0], kind: VertexKind::Boundary },
                Vertex { position: [1.0, 0.0], kind: VertexKind::Boundary },
            ],
            vec![Edge {
                start: VertexId(0),
                end: VertexId(1),
                length: 1.0,
                source: Expr::parse("1").unwrap(),
                eta_inv: Expr::parse("1").unwrap(),
                n_nodes,
            }],
        )
        .unwrap()
    }

    #[test]
    fn tent_distance_is_exact() {
        let net = tent_network(9); // h = 0.1, node at 0.5
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        for (i, &t) in grid.edge_params(EdgeId(0)).iter().enumerate() {
            let expected = t.min(1.0 - t);
            let got = field.at(grid.edge_nodes(EdgeId(0))[i]);
            assert!((got - expected).abs() < 1e-14, "t={} got {}", t, got);
        }
    }

    #[test]
    fn test1_center_and_peak() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let center = field.at(grid.vertex_node(VertexId(0)));
        assert!((center - 0.5).abs() < 1e-13);
        // peak at s = 1/4 on the long arm, value 3/4
        let params = grid.edge_params(EdgeId(2));
        let idx = params.iter().position(|&t| (t - 0.25).abs() < 1e-12).unwrap();
        let peak = field.at(grid.edge_nodes(EdgeId(2))[idx]);
        assert!((peak - 0.75).abs() < 1e-13);
        let max = field.values.iter().cloned().fold(0.0, f64::max);
        assert!((max - 0.75).abs() < 1e-13);
    }

    #[test]
    fn tie_insertion_at_tent_center() {
        // even interior count: no node at 0.5, the two middle nodes tie
        let net = tent_network(10); // h = 1/11
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let (grid2, field2) = enlarge_ties(&net, &grid, &field, TIE_REL_TOL).unwrap();
        assert_eq!(grid2.edge_params(EdgeId(0)).len(), grid.edge_params(EdgeId(0)).len() + 1);
        let params = grid2.edge_params(EdgeId(0));
        let idx = params.iter().position(|&t| (t - 0.5).abs() < 1e-13).unwrap();
        let val = field2.at(grid2.edge_nodes(EdgeId(0))[idx]);
        assert!((val - 0.5).abs() < 1e-13);

        // no adjacent pair ties afterwards
        for e in net.edge_ids() {
            let vals = field2.edge_values(&grid2, e);
            let tol = TIE_REL_TOL * (1.0 + field2.max_abs());
            for w in vals.windows(2) {
                assert!((w[0] - w[1]).abs() > tol);
            }
        }
    }

    #[test]
    fn test1_grid_with_singular_node_needs_no_enlargement() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let (grid2, _) = enlarge_ties(&net, &grid, &field, TIE_REL_TOL).unwrap();
        assert_eq!(grid2.node_count(), grid.node_count());
    }

    #[test]
    fn classify_test1() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let class = classify(&net, &grid, &field).unwrap();

        assert_eq!(class.inc_plus[0], vec![EdgeId(2)]);
        assert_eq!(class.inc_minus[0], vec![EdgeId(0), EdgeId(1)]);
        assert_eq!(class.singular[0], None);
        assert_eq!(class.singular[1], None);
        let s3 = class.singular[2].unwrap();
        assert!((grid.edge_params(EdgeId(2))[s3] - 0.25).abs() < 1e-12);
        assert_eq!(class.target[0], Some(0));
        assert_eq!(class.target[2], None);
        assert!(!class.is_max_vertex.iter().any(|&m| m));

        assert_eq!(class.partition.interior_singular, vec![EdgeId(2)]);
        assert!(class.partition.vertex_max.is_empty());
        assert_eq!(class.partition.classes.len(), 2);
        assert_eq!(class.partition.classes[0], vec![EdgeId(2)]);
        assert_eq!(class.partition.classes[1], vec![EdgeId(0), EdgeId(1)]);
    }

    #[test]
    fn tent_has_both_endpoint_slopes_positive() {
        let net = tent_network(9);
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let class = classify(&net, &grid, &field).unwrap();
        assert!(class.singular[0].is_some());
        assert_eq!(class.vertex_slopes[0], vec![1]);
        assert_eq!(class.vertex_slopes[1], vec![1]);
    }

    #[test]
    fn projection_on_test1() {
        let net = generate(Generator::Test1).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        let (grid, field) = enlarge_ties(&net, &grid, &field, TIE_REL_TOL).unwrap();
        let class = classify(&net, &grid, &field).unwrap();

        // from s = 0.1 on the long arm the ascent reaches the singular point
        let params = grid.edge_params(EdgeId(2));
        let i = params.iter().position(|&t| (t - 0.1).abs() < 1e-12).unwrap();
        let proj = project(&grid, &class, EdgeId(2), i);
        assert!((proj.target_param - 0.25).abs() < 1e-12);
        assert_eq!(proj.steps, 15);

        // a node already in the projection set projects to itself
        let s = class.singular[2].unwrap();
        let p = project(&grid, &class, EdgeId(2), s);
        assert_eq!(p.steps, 0);
        assert_eq!(p.target_local, s);

        // geodesic additivity along the walk, accumulated directly
        for e in net.edge_ids() {
            let params = grid.edge_params(e);
            let nodes = grid.edge_nodes(e);
            let einv = eta_inv_table(&net, &grid).unwrap();
            for m in 0..params.len() {
                let proj = project(&grid, &class, e, m);
                let (mut at, dir) = (m, class.direction(e, m));
                let mut acc = 0.0;
                for _ in 0..proj.steps {
                    let next = (at as isize + dir as isize) as usize;
                    let upper = at.max(next);
                    acc += (params[at.max(next)] - params[at.min(next)]) * einv[e.0][upper];
                    at = next;
                }
                assert_eq!(at, proj.target_local);
                let walked = field.at(nodes[proj.target_local]) - field.at(nodes[m]);
                assert!(
                    (walked - acc).abs() <= 1e-12 * (1.0 + field.max_abs()),
                    "edge {:?} node {}: walked {} acc {}",
                    e,
                    m,
                    walked,
                    acc
                );
            }
        }
    }

    #[test]
    fn residual_vanishes_on_solutions() {
        for gen in [Generator::Test1, Generator::Test2, Generator::Test3] {
            let net = generate(gen).unwrap().network;
            let grid = Grid::build(&net).unwrap();
            let field = solve(&net, &grid).unwrap();
            let r = eikonal_residual(&net, &grid, &field).unwrap();
            assert!(r <= 1e-12, "residual {}", r);
        }
    }

    #[test]
    fn test2_fast_edge_drives_distances() {
        let net = generate(Generator::Test2).unwrap().network;
        let grid = Grid::build(&net).unwrap();
        let field = solve(&net, &grid).unwrap();
        // the cheap edge makes the center nearer the boundary than its
        // euclidean position suggests
        assert!((field.at(grid.vertex_node(VertexId(0))) - 0.2).abs() < 1e-12);
        assert!((field.at(grid.vertex_node(VertexId(1))) - 0.7).abs() < 1e-12);
        assert!((field.at(grid.vertex_node(VertexId(2))) - 0.7).abs() < 1e-12);
        let class = classify(&net, &grid, &field).unwrap();
        assert!(class.singular[3].is_some());
        assert!(class.singular[4].is_some());
        assert_eq!(class.singular_count(), 2);
    }
}
