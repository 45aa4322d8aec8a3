//! Rolling layer: edgewise trapezoid accumulation of the source along
//! ascent walks, plus the vertex transmission that releases incoming mass
//! into the downhill edges.
//!
//! Values are stored per edge including both endpoints, so the field may be
//! multivalued at a vertex; per-vertex scalars always refer to the edgewise
//! tuple.

use crate::eikonal::{Classification, DistanceField};
use crate::grid::{source_table, Grid};
use crate::net::{EdgeEvalError, EdgeId, EndSide, Network, VertexId, VertexKind};
use crate::netfile::TransmissionOverrides;
use thiserror::Error;

/// Per-vertex transmission data over the downhill incident edges.
#[derive(Debug, Clone)]
pub struct VertexTransmission {
    /// C_ij over the downhill edges, positive, summing to 1.
    pub outgoing: Vec<(EdgeId, f64)>,
    /// Vertex source g(x_i) >= 0.
    pub vertex_source: f64,
    /// K_ij splitting the vertex source, positive, summing to 1.
    pub source_split: Vec<(EdgeId, f64)>,
}

#[derive(Debug, Clone)]
pub struct TransmissionSpec {
    entries: Vec<Option<VertexTransmission>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransmissionError {
    #[error("vertex {0} is not a transition vertex")]
    NotTransition(VertexId),
    #[error("coefficient on {edge} at vertex {vertex} does not target a downhill edge")]
    NotOutgoing { vertex: VertexId, edge: EdgeId },
    #[error("coefficients at vertex {vertex} do not cover downhill edge {missing}")]
    IncompleteCover { vertex: VertexId, missing: EdgeId },
    #[error("{what} coefficients at vertex {vertex} sum to {sum}, expected 1")]
    BadSum {
        vertex: VertexId,
        what: &'static str,
        sum: f64,
    },
    #[error("non-positive coefficient {value} on {edge} at vertex {vertex}")]
    NonPositive {
        vertex: VertexId,
        edge: EdgeId,
        value: f64,
    },
    #[error("negative vertex source {value} at vertex {vertex}")]
    NegativeSource { vertex: VertexId, value: f64 },
    #[error("no transmission data for transition vertex {0}")]
    MissingVertex(VertexId),
}

impl TransmissionSpec {
    /// Uniform repartition of incoming mass: C_ij = K_ij = 1/N_i^-, g = 0.
    pub fn uniform(net: &Network, class: &Classification) -> TransmissionSpec {
        let entries = net
            .vertex_ids()
            .map(|v| {
                if net.vertex(v).kind != VertexKind::Transition {
                    return None;
                }
                let minus = &class.inc_minus[v.0];
                let w = 1.0 / minus.len() as f64;
                let coeffs: Vec<(EdgeId, f64)> = minus.iter().map(|&e| (e, w)).collect();
                Some(VertexTransmission {
                    outgoing: coeffs.clone(),
                    vertex_source: 0.0,
                    source_split: coeffs,
                })
            })
            .collect();
        TransmissionSpec { entries }
    }

    /// Uniform defaults patched by the `.net` extension lines. Declared
    /// coefficient sets must cover exactly the downhill edges of their
    /// vertex.
    pub fn from_overrides(
        net: &Network,
        class: &Classification,
        overrides: &TransmissionOverrides,
    ) -> Result<TransmissionSpec, TransmissionError> {
        let mut spec = TransmissionSpec::uniform(net, class);
        let apply = |spec: &mut TransmissionSpec,
                     groups: &[(VertexId, EdgeId, f64)],
                     what: &'static str|
         -> Result<(), TransmissionError> {
            let mut done: Vec<VertexId> = Vec::new();
            for &(v, _, _) in groups {
                if done.contains(&v) {
                    continue;
                }
                done.push(v);
                let entry = spec.entries[v.0]
                    .as_mut()
                    .ok_or(TransmissionError::NotTransition(v))?;
                let set: Vec<(EdgeId, f64)> = groups
                    .iter()
                    .filter(|(w, _, _)| *w == v)
                    .map(|&(_, e, c)| (e, c))
                    .collect();
                for &(e, c) in &set {
                    if !class.inc_minus[v.0].contains(&e) {
                        return Err(TransmissionError::NotOutgoing { vertex: v, edge: e });
                    }
                    if !(c > 0.0) {
                        return Err(TransmissionError::NonPositive {
                            vertex: v,
                            edge: e,
                            value: c,
                        });
                    }
                }
                for &e in &class.inc_minus[v.0] {
                    if !set.iter().any(|&(k, _)| k == e) {
                        return Err(TransmissionError::IncompleteCover {
                            vertex: v,
                            missing: e,
                        });
                    }
                }
                let sum: f64 = set.iter().map(|(_, c)| c).sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(TransmissionError::BadSum {
                        vertex: v,
                        what,
                        sum,
                    });
                }
                if what == "C" {
                    entry.outgoing = set;
                } else {
                    entry.source_split = set;
                }
            }
            Ok(())
        };
        apply(&mut spec, &overrides.coefficients, "C")?;
        apply(&mut spec, &overrides.source_splits, "K")?;
        for &(v, g) in &overrides.vertex_sources {
            let entry = spec.entries[v.0]
                .as_mut()
                .ok_or(TransmissionError::NotTransition(v))?;
            if g < 0.0 {
                return Err(TransmissionError::NegativeSource { vertex: v, value: g });
            }
            entry.vertex_source = g;
        }
        Ok(spec)
    }

    pub fn at(&self, v: VertexId) -> Option<&VertexTransmission> {
        self.entries[v.0].as_ref()
    }

    pub fn vertex_source(&self, v: VertexId) -> f64 {
        self.entries[v.0]
            .as_ref()
            .map(|e| e.vertex_source)
            .unwrap_or(0.0)
    }

    fn coefficient(&self, v: VertexId, e: EdgeId) -> Result<(f64, f64), TransmissionError> {
        let entry = self.entries[v.0]
            .as_ref()
            .ok_or(TransmissionError::MissingVertex(v))?;
        let c = entry
            .outgoing
            .iter()
            .find(|(k, _)| *k == e)
            .map(|(_, c)| *c)
            .ok_or(TransmissionError::IncompleteCover { vertex: v, missing: e })?;
        let k = entry
            .source_split
            .iter()
            .find(|(j, _)| *j == e)
            .map(|(_, c)| *c)
            .ok_or(TransmissionError::IncompleteCover { vertex: v, missing: e })?;
        Ok((c, k))
    }
}

/// Rolling-layer values per edge node (endpoints included, hence possibly
/// multivalued at vertices) plus the incoming mass per transition vertex.
#[derive(Debug, Clone)]
pub struct RollingField {
    pub per_edge: Vec<Vec<f64>>,
    /// Sum of the uphill-edge values at each vertex.
    pub vertex_inflow: Vec<f64>,
}

impl RollingField {
    pub fn at(&self, e: EdgeId, local: usize) -> f64 {
        self.per_edge[e.0][local]
    }

    /// Rebuilds the field from externally supplied per-edge values (for
    /// auditing stored output), recomputing the vertex inflows.
    pub fn from_edge_values(
        net: &Network,
        grid: &Grid,
        class: &Classification,
        per_edge: Vec<Vec<f64>>,
    ) -> RollingField {
        let mut vertex_inflow = vec![0.0; net.vertices().len()];
        for v in net.vertex_ids() {
            for &k in &class.inc_plus[v.0] {
                let side = if net.edge(k).start == v {
                    EndSide::Start
                } else {
                    EndSide::End
                };
                vertex_inflow[v.0] += per_edge[k.0][grid.vertex_local(k, side)];
            }
        }
        RollingField {
            per_edge,
            vertex_inflow,
        }
    }

    /// Value of an edge at one of its endpoint vertices.
    pub fn end_value(&self, net: &Network, grid: &Grid, e: EdgeId, v: VertexId) -> f64 {
        let edge = net.edge(e);
        let side = if edge.start == v {
            EndSide::Start
        } else {
            debug_assert_eq!(edge.end, v);
            EndSide::End
        };
        self.per_edge[e.0][grid.vertex_local(e, side)]
    }

    pub fn max_abs(&self) -> f64 {
        self.per_edge
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Error)]
pub enum RollingError {
    #[error(transparent)]
    Eval(#[from] EdgeEvalError),
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error("processing order failed to supply {edge} before its dependents")]
    ProcessingOrder { edge: EdgeId },
}

/// Computes the rolling layer from a classified, enlarged distance field.
///
/// Edges owning an interior singular point need nothing else and are done
/// first; each monotone edge needs the values of the uphill edges at its
/// top vertex, so monotone edges are processed in descending order of the
/// top-vertex distance (suppliers always have strictly larger top values).
pub fn compute(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
    class: &Classification,
    spec: &TransmissionSpec,
) -> Result<RollingField, RollingError> {
    let f = source_table(net, grid)?;

    // prefix trapezoid sums of f along each edge
    let mut prefix: Vec<Vec<f64>> = Vec::with_capacity(net.edges().len());
    for e in net.edge_ids() {
        let params = grid.edge_params(e);
        let mut acc = Vec::with_capacity(params.len());
        acc.push(0.0);
        for i in 1..params.len() {
            let h = params[i] - params[i - 1];
            acc.push(acc[i - 1] + 0.5 * h * (f[e.0][i - 1] + f[e.0][i]));
        }
        prefix.push(acc);
    }

    let mut order: Vec<EdgeId> = class.partition.interior_singular.clone();
    let mut monotone: Vec<(f64, EdgeId)> = net
        .edge_ids()
        .filter(|e| class.singular[e.0].is_none())
        .map(|e| {
            let q = class.target[e.0].expect("monotone edge has a target endpoint");
            (field.at(grid.edge_nodes(e)[q]), e)
        })
        .collect();
    monotone.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    order.extend(monotone.into_iter().map(|(_, e)| e));

    let mut per_edge: Vec<Vec<f64>> = vec![Vec::new(); net.edges().len()];
    let mut processed = vec![false; net.edges().len()];

    for &e in &order {
        let params = grid.edge_params(e);
        let q = match class.singular[e.0] {
            Some(i) => i,
            None => class.target[e.0].unwrap(),
        };
        let mut vals: Vec<f64> = (0..params.len())
            .map(|i| (prefix[e.0][q] - prefix[e.0][i]).abs())
            .collect();

        if class.singular[e.0].is_none() {
            let edge = net.edge(e);
            let top = if q == 0 { edge.start } else { edge.end };
            let mut inflow = 0.0;
            for &k in &class.inc_plus[top.0] {
                if !processed[k.0] {
                    return Err(RollingError::ProcessingOrder { edge: k });
                }
                let side = if net.edge(k).start == top {
                    EndSide::Start
                } else {
                    EndSide::End
                };
                inflow += per_edge[k.0][grid.vertex_local(k, side)];
            }
            let (c, k) = spec.coefficient(top, e)?;
            let add = c * inflow + k * spec.vertex_source(top);
            for v in &mut vals {
                *v += add;
            }
        }

        per_edge[e.0] = vals;
        processed[e.0] = true;
    }

    let mut vertex_inflow = vec![0.0; net.vertices().len()];
    for v in net.vertex_ids() {
        for &k in &class.inc_plus[v.0] {
            let side = if net.edge(k).start == v {
                EndSide::Start
            } else {
                EndSide::End
            };
            vertex_inflow[v.0] += per_edge[k.0][grid.vertex_local(k, side)];
        }
    }

    Ok(RollingField {
        per_edge,
        vertex_inflow,
    })
}

/// Mass balance of one transition vertex.
#[derive(Debug, Clone)]
pub struct VertexFlux {
    pub vertex: VertexId,
    pub inflow: f64,
    pub outflow: f64,
    pub vertex_source: f64,
    /// inflow + g - outflow.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct FluxReport {
    pub vertices: Vec<VertexFlux>,
    /// Mass leaving at the boundary vertices (edgewise end values summed).
    pub boundary_outflow: f64,
    /// Trapezoid integral of f over the grid.
    pub grid_source_mass: f64,
    /// Total of the vertex sources g.
    pub vertex_source_total: f64,
}

impl FluxReport {
    pub fn max_residual(&self) -> f64 {
        self.vertices
            .iter()
            .fold(0.0f64, |a, r| a.max(r.residual.abs()))
    }
}

pub fn flux_report(
    net: &Network,
    grid: &Grid,
    class: &Classification,
    rolling: &RollingField,
    spec: &TransmissionSpec,
) -> Result<FluxReport, EdgeEvalError> {
    let f = source_table(net, grid)?;
    let mut vertices = Vec::new();
    for v in net.transition_vertices() {
        let inflow = rolling.vertex_inflow[v.0];
        let outflow: f64 = class.inc_minus[v.0]
            .iter()
            .map(|&e| rolling.end_value(net, grid, e, v))
            .sum();
        let g = spec.vertex_source(v);
        vertices.push(VertexFlux {
            vertex: v,
            inflow,
            outflow,
            vertex_source: g,
            residual: inflow + g - outflow,
        });
    }

    let boundary_outflow: f64 = net
        .boundary_vertices()
        .map(|v| {
            net.incident(v)
                .iter()
                .map(|&(e, side)| rolling.per_edge[e.0][grid.vertex_local(e, side)])
                .sum::<f64>()
        })
        .sum();

    let mut grid_source_mass = 0.0;
    for e in net.edge_ids() {
        let params = grid.edge_params(e);
        for i in 1..params.len() {
            grid_source_mass += 0.5 * (params[i] - params[i - 1]) * (f[e.0][i - 1] + f[e.0][i]);
        }
    }

    let vertex_source_total = net
        .transition_vertices()
        .map(|v| spec.vertex_source(v))
        .sum();

    Ok(FluxReport {
        vertices,
        boundary_outflow,
        grid_source_mass,
        vertex_source_total,
    })
}
