//! Uniqueness diagnostics, error norms against exact or reference
//! solutions, convergence-order studies and the weak-form residual.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eikonal::{Classification, DistanceField};
use crate::grid::{eta_inv_table, source_table, Grid, NodeId};
use crate::net::{EdgeEvalError, EdgeId, Network, VertexId, VertexKind};
use crate::netfile::TransmissionOverrides;
use crate::pipeline::{solve_with_step, PipelineError, Solution};
use crate::rolling::RollingField;
use thiserror::Error;

/// Shortest discrete-path distances from one grid node to every node, with
/// segment costs `Dist * (1/eta at the segment end nearer the source)`.
/// This orientation matches the way the distance field itself accumulates
/// costs along descending paths.
pub fn grid_distances_from(
    net: &Network,
    grid: &Grid,
    eta_inv: &[Vec<f64>],
    source: NodeId,
) -> Vec<f64> {
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
    dist[source.0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, source.0));
    while let Some(Item(d, n)) = heap.pop() {
        if d > dist[n] {
            continue;
        }
        for nb in grid.neighbors(net, NodeId(n)) {
            let cost = nb.len * eta_inv[nb.edge.0][nb.from_local];
            let cand = d + cost;
            if cand < dist[nb.node.0] {
                dist[nb.node.0] = cand;
                heap.push(Item(cand, nb.node.0));
            }
        }
    }
    dist
}

/// Minimal admissible standing profile: the largest function below the
/// distance field that matches it on the sampled support of the source.
#[derive(Debug, Clone)]
pub struct MinimalProfile {
    pub values: Vec<f64>,
    /// True when the source vanishes at every grid node.
    pub empty_source: bool,
}

/// Grid nodes at which the source is positive; a vertex node counts if any
/// incident edge sees a positive value there.
fn source_positive_nodes(net: &Network, grid: &Grid, f: &[Vec<f64>]) -> Vec<bool> {
    let mut positive = vec![false; grid.node_count()];
    for e in net.edge_ids() {
        for (i, node) in grid.edge_nodes(e).iter().enumerate() {
            if f[e.0][i] > 0.0 {
                positive[node.0] = true;
            }
        }
    }
    positive
}

pub fn minimal_profile(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
) -> Result<MinimalProfile, EdgeEvalError> {
    let f = source_table(net, grid)?;
    let eta_inv = eta_inv_table(net, grid)?;
    let positive = source_positive_nodes(net, grid, &f);
    let mut values = vec![0.0; grid.node_count()];
    let mut empty = true;
    for y in 0..grid.node_count() {
        if !positive[y] {
            continue;
        }
        empty = false;
        let dist = grid_distances_from(net, grid, &eta_inv, NodeId(y));
        let dy = field.values[y];
        for x in 0..grid.node_count() {
            let cand = dy - dist[x];
            if cand > values[x] {
                values[x] = cand;
            }
        }
    }
    Ok(MinimalProfile {
        values,
        empty_source: empty,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SingularSite {
    Interior {
        edge: EdgeId,
        local: usize,
        param: f64,
    },
    Vertex(VertexId),
}

#[derive(Debug, Clone)]
pub struct SingularPoint {
    pub site: SingularSite,
    pub distance: f64,
    /// Source positive within one grid cell of the point.
    pub source_covered: bool,
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub singular_points: Vec<SingularPoint>,
    /// True iff every singular point lies in the sampled source support.
    pub unique: bool,
    pub profile: MinimalProfile,
    /// Nodes where the minimal profile sits strictly below the distance:
    /// there the standing layer is not pinned.
    pub gap_nodes: Vec<NodeId>,
}

pub fn uniqueness_check(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
    class: &Classification,
) -> Result<UniquenessReport, EdgeEvalError> {
    let f = source_table(net, grid)?;
    let mut points = Vec::new();

    for e in net.edge_ids() {
        if let Some(i) = class.singular[e.0] {
            let vals = &f[e.0];
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(vals.len() - 1);
            let covered = vals[lo..=hi].iter().any(|&v| v > 0.0);
            points.push(SingularPoint {
                site: SingularSite::Interior {
                    edge: e,
                    local: i,
                    param: grid.edge_params(e)[i],
                },
                distance: field.at(grid.edge_nodes(e)[i]),
                source_covered: covered,
            });
        }
    }
    for v in net.vertex_ids() {
        if !class.is_max_vertex[v.0] {
            continue;
        }
        let mut covered = false;
        for &(e, side) in net.incident(v) {
            let vals = &f[e.0];
            let idx = grid.vertex_local(e, side);
            let inner = if idx == 0 { 1 } else { idx - 1 };
            if vals[idx] > 0.0 || vals[inner] > 0.0 {
                covered = true;
            }
        }
        points.push(SingularPoint {
            site: SingularSite::Vertex(v),
            distance: field.at(grid.vertex_node(v)),
            source_covered: covered,
        });
    }

    let unique = points.iter().all(|p| p.source_covered);
    let profile = minimal_profile(net, grid, field)?;
    let tol = 1e-12 * (1.0 + field.max_abs());
    let gap_nodes = (0..grid.node_count())
        .filter(|&n| profile.values[n] < field.values[n] - tol)
        .map(NodeId)
        .collect();

    Ok(UniquenessReport {
        singular_points: points,
        unique,
        profile,
        gap_nodes,
    })
}

/// Piecewise-linear interpolation through (params, values).
pub fn sample_linear(params: &[f64], values: &[f64], s: f64) -> f64 {
    debug_assert_eq!(params.len(), values.len());
    if s <= params[0] {
        return values[0];
    }
    let last = params.len() - 1;
    if s >= params[last] {
        return values[last];
    }
    let hi = params.partition_point(|&p| p <= s);
    let (a, b) = (hi - 1, hi);
    let w = (s - params[a]) / (params[b] - params[a]);
    values[a] * (1.0 - w) + values[b] * w
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorNorms {
    pub linf: f64,
    pub l1: f64,
}

/// Norms of the deviation between the interpolated discrete values and an
/// exact per-edge solution, sampled on a fine uniform grid.
pub fn errors_against_exact(
    net: &Network,
    grid: &Grid,
    values: &[Vec<f64>],
    exact: &dyn Fn(EdgeId, f64) -> f64,
    samples_per_edge: usize,
) -> ErrorNorms {
    errors_sampled(net, grid, values, samples_per_edge, |e, s| exact(e, s))
}

/// Same, with a finer-grid solution as the reference.
pub fn errors_against_reference(
    net: &Network,
    grid: &Grid,
    values: &[Vec<f64>],
    ref_grid: &Grid,
    ref_values: &[Vec<f64>],
    samples_per_edge: usize,
) -> ErrorNorms {
    errors_sampled(net, grid, values, samples_per_edge, |e, s| {
        sample_linear(ref_grid.edge_params(e), &ref_values[e.0], s)
    })
}

fn errors_sampled(
    net: &Network,
    grid: &Grid,
    values: &[Vec<f64>],
    samples_per_edge: usize,
    reference: impl Fn(EdgeId, f64) -> f64,
) -> ErrorNorms {
    let n = samples_per_edge.max(2);
    let mut linf = 0.0f64;
    let mut l1 = 0.0f64;
    for e in net.edge_ids() {
        let len = net.edge(e).length;
        let params = grid.edge_params(e);
        let step = len / (n - 1) as f64;
        let mut prev = 0.0;
        for k in 0..n {
            let s = if k == n - 1 { len } else { k as f64 * step };
            let dev = (sample_linear(params, &values[e.0], s) - reference(e, s)).abs();
            linf = linf.max(dev);
            if k > 0 {
                l1 += 0.5 * step * (prev + dev);
            }
            prev = dev;
        }
    }
    ErrorNorms { linf, l1 }
}

/// Norms of the deviation at the grid nodes only (L1 by trapezoid over the
/// grid parameters).
pub fn nodal_errors(
    net: &Network,
    grid: &Grid,
    values: &[Vec<f64>],
    exact: &dyn Fn(EdgeId, f64) -> f64,
) -> ErrorNorms {
    let mut linf = 0.0f64;
    let mut l1 = 0.0f64;
    for e in net.edge_ids() {
        let params = grid.edge_params(e);
        let devs: Vec<f64> = params
            .iter()
            .zip(&values[e.0])
            .map(|(&s, &v)| (v - exact(e, s)).abs())
            .collect();
        for d in &devs {
            linf = linf.max(*d);
        }
        for i in 1..params.len() {
            l1 += 0.5 * (params[i] - params[i - 1]) * (devs[i - 1] + devs[i]);
        }
    }
    ErrorNorms { linf, l1 }
}

/// Closed-form solution pair of the three-arm test network.
pub struct Test1Exact;

impl Test1Exact {
    pub fn distance(e: EdgeId, s: f64) -> f64 {
        match e.0 {
            0 | 1 => 0.5 - s,
            2 => {
                if s < 0.25 {
                    0.5 + s
                } else {
                    1.0 - s
                }
            }
            _ => panic!("test1 has three edges"),
        }
    }

    pub fn rolling(e: EdgeId, s: f64) -> f64 {
        match e.0 {
            0 | 1 => s - s * s + 7.0 / 64.0,
            2 => (0.5 * s * s - s + 7.0 / 32.0).abs(),
            _ => panic!("test1 has three edges"),
        }
    }
}

/// Structural check that a network is the three-arm test case (so the
/// closed forms above apply), comparing topology, lengths and sampled data.
pub fn matches_test1(net: &Network) -> bool {
    if net.vertices().len() != 4 || net.edges().len() != 3 {
        return false;
    }
    if net.vertex(VertexId(0)).kind != VertexKind::Transition {
        return false;
    }
    if (1..4).any(|i| net.vertex(VertexId(i)).kind != VertexKind::Boundary) {
        return false;
    }
    let lengths = [0.5, 0.5, 1.0];
    for (j, want) in lengths.iter().enumerate() {
        let e = net.edge(EdgeId(j));
        if e.start != VertexId(0) || e.end != VertexId(j + 1) {
            return false;
        }
        if (e.length - want).abs() > 1e-12 {
            return false;
        }
        for k in 0..=16 {
            let s = e.length * k as f64 / 16.0;
            // sources are 1 - 2s on the short arms and 1 - s on the long one
            let f_want = if j < 2 { 1.0 - 2.0 * s } else { 1.0 - s };
            match (e.source_at(s), e.eta_inv_at(s)) {
                (Ok(fv), Ok(ev)) => {
                    if (fv - f_want).abs() > 1e-12 || (ev - 1.0).abs() > 1e-12 {
                        return false;
                    }
                }
                _ => return false,
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorRow {
    pub h: f64,
    pub linf_d: f64,
    pub l1_d: f64,
    pub linf_v: f64,
    pub l1_v: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Slopes {
    pub linf_d: f64,
    pub l1_d: f64,
    pub linf_v: f64,
    pub l1_v: f64,
}

#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub slopes: Slopes,
}

/// Least-squares slope of log(err) against log(h), skipping rows at
/// rounding level. NaN when fewer than two usable points remain.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 1e-14)
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if usable.len() < 2 {
        return f64::NAN;
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub enum StudyReference {
    /// Compare against the registered closed forms of the three-arm test.
    Test1Exact,
    /// Compare against a solution on a grid `factor` times finer than the
    /// smallest step in the list.
    Refined { factor: f64 },
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("need at least 2 step sizes, got {0}")]
    NeedTwoSteps(usize),
    #[error("network does not match the registered exact solution")]
    NotTest1,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Solves once per step size and tabulates errors plus fitted orders.
pub fn convergence_study(
    net: &Network,
    h_list: &[f64],
    reference: StudyReference,
    samples_per_edge: usize,
    overrides: &TransmissionOverrides,
    tie_rel_tol: f64,
) -> Result<ErrorTable, StudyError> {
    if h_list.len() < 2 {
        return Err(StudyError::NeedTwoSteps(h_list.len()));
    }

    let reference_solution: Option<Solution> = match &reference {
        StudyReference::Test1Exact => {
            if !matches_test1(net) {
                return Err(StudyError::NotTest1);
            }
            None
        }
        StudyReference::Refined { factor } => {
            let h_min = h_list.iter().cloned().fold(f64::INFINITY, f64::min);
            Some(solve_with_step(net, h_min / factor, overrides, tie_rel_tol)?)
        }
    };

    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let sol = solve_with_step(net, h, overrides, tie_rel_tol)?;
        let d_vals: Vec<Vec<f64>> = net
            .edge_ids()
            .map(|e| sol.distance.edge_values(&sol.grid, e))
            .collect();
        let (ed, ev) = match &reference_solution {
            None => (
                errors_against_exact(
                    net,
                    &sol.grid,
                    &d_vals,
                    &Test1Exact::distance,
                    samples_per_edge,
                ),
                errors_against_exact(
                    net,
                    &sol.grid,
                    &sol.rolling.per_edge,
                    &Test1Exact::rolling,
                    samples_per_edge,
                ),
            ),
            Some(reference) => {
                let rd: Vec<Vec<f64>> = net
                    .edge_ids()
                    .map(|e| reference.distance.edge_values(&reference.grid, e))
                    .collect();
                (
                    errors_against_reference(
                        net,
                        &sol.grid,
                        &d_vals,
                        &reference.grid,
                        &rd,
                        samples_per_edge,
                    ),
                    errors_against_reference(
                        net,
                        &sol.grid,
                        &sol.rolling.per_edge,
                        &reference.grid,
                        &reference.rolling.per_edge,
                        samples_per_edge,
                    ),
                )
            }
        };
        rows.push(ErrorRow {
            h: sol.grid.max_step(),
            linf_d: ed.linf,
            l1_d: ed.l1,
            linf_v: ev.linf,
            l1_v: ev.l1,
        });
    }

    let slope_of = |pick: fn(&ErrorRow) -> f64| {
        fit_slope(&rows.iter().map(|r| (r.h, pick(r))).collect::<Vec<_>>())
    };
    let slopes = Slopes {
        linf_d: slope_of(|r| r.linf_d),
        l1_d: slope_of(|r| r.l1_d),
        linf_v: slope_of(|r| r.linf_v),
        l1_v: slope_of(|r| r.l1_v),
    };
    Ok(ErrorTable { rows, slopes })
}

/// Fine trapezoid integral of the source over the network, independent of
/// the solver grid.
pub fn source_mass_fine(net: &Network, samples_per_edge: usize) -> Result<f64, EdgeEvalError> {
    let n = samples_per_edge.max(2);
    let mut total = 0.0;
    for e in net.edge_ids() {
        let edge = net.edge(e);
        let step = edge.length / (n - 1) as f64;
        let mut prev = 0.0;
        for k in 0..n {
            let s = if k == n - 1 { edge.length } else { k as f64 * step };
            let v = edge.source_at(s).map_err(|err| EdgeEvalError {
                edge: e,
                t: s,
                source: err,
            })?;
            if k > 0 {
                total += 0.5 * step * (prev + v);
            }
            prev = v;
        }
    }
    Ok(total)
}

/// Continuous piecewise-linear function on the network, zero at the
/// boundary vertices; the admissible test functions of the weak form.
#[derive(Debug, Clone)]
pub struct TestFunction {
    /// Per edge: (param, value) breakpoints, endpoints included.
    pub per_edge: Vec<Vec<(f64, f64)>>,
}

impl TestFunction {
    pub fn value(&self, e: EdgeId, s: f64) -> f64 {
        let pts = &self.per_edge[e.0];
        if s <= pts[0].0 {
            return pts[0].1;
        }
        if s >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|p| p.0 <= s);
        let (a, b) = (pts[hi - 1], pts[hi]);
        a.1 + (s - a.0) / (b.0 - a.0) * (b.1 - a.1)
    }

    /// Seeded random test function: uniform values at the transition
    /// vertices and at a few interior breakpoints per edge.
    pub fn random(net: &Network, seed: u64, interior_breaks: usize) -> TestFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertex_vals: Vec<f64> = net
            .vertices()
            .iter()
            .map(|v| {
                if v.kind == VertexKind::Boundary {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let per_edge = net
            .edge_ids()
            .map(|e| {
                let edge = net.edge(e);
                let mut pts = vec![(0.0, vertex_vals[edge.start.0])];
                let mut params: Vec<f64> = (0..interior_breaks)
                    .map(|_| rng.gen_range(0.05..0.95) * edge.length)
                    .collect();
                params.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for p in params {
                    pts.push((p, rng.gen_range(-1.0..1.0)));
                }
                pts.push((edge.length, vertex_vals[edge.end.0]));
                pts
            })
            .collect();
        TestFunction { per_edge }
    }
}

/// Residual of the weak formulation for one test function: the mismatch
/// between the flux pairing of (d, v) against the test-function gradient
/// and the source pairing.
pub fn weak_form_residual(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
    rolling: &RollingField,
    psi: &TestFunction,
) -> Result<f64, EdgeEvalError> {
    let mut lhs = 0.0;
    for e in net.edge_ids() {
        let edge = net.edge(e);
        let params = grid.edge_params(e);
        let vals = &rolling.per_edge[e.0];
        let dvals = field.edge_values(grid, e);

        // merge grid params with the test-function breakpoints
        let mut cuts: Vec<f64> = params.to_vec();
        for &(p, _) in &psi.per_edge[e.0] {
            cuts.push(p);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-15 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let cell = params.partition_point(|&p| p <= mid) - 1;
            let slope = (dvals[cell + 1] - dvals[cell]) / (params[cell + 1] - params[cell]);
            let psi_slope = (psi.value(e, b) - psi.value(e, a)) / (b - a);
            let va = sample_linear(params, vals, a);
            let vb = sample_linear(params, vals, b);
            let eta = |s: f64| -> Result<f64, EdgeEvalError> {
                let inv = edge.eta_inv_at(s).map_err(|err| EdgeEvalError {
                    edge: e,
                    t: s,
                    source: err,
                })?;
                Ok(1.0 / inv)
            };
            let integrand = 0.5 * (va * eta(a)? + vb * eta(b)?);
            lhs += integrand * slope * psi_slope * (b - a);
        }
    }

    let mut rhs = 0.0;
    for e in net.edge_ids() {
        let edge = net.edge(e);
        let pts = &psi.per_edge[e.0];
        for w in pts.windows(2) {
            let (a, b) = (w[0].0, w[1].0);
            if b - a < 1e-15 {
                continue;
            }
            // Simpson on each linear piece of psi
            let m = 64;
            let h = (b - a) / m as f64;
            let mut acc = 0.0;
            for k in 0..m {
                let x0 = a + k as f64 * h;
                let x1 = x0 + 0.5 * h;
                let x2 = if k == m - 1 { b } else { x0 + h };
                let fv = |s: f64| -> Result<f64, EdgeEvalError> {
                    let v = edge.source_at(s).map_err(|err| EdgeEvalError {
                        edge: e,
                        t: s,
                        source: err,
                    })?;
                    Ok(v * psi.value(e, s))
                };
                acc += h / 6.0 * (fv(x0)? + 4.0 * fv(x1)? + fv(x2)?);
            }
            rhs += acc;
        }
    }

    Ok((lhs - rhs).abs())
}
