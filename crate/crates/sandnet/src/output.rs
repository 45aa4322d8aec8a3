//! File emission for the CLI: CSV tables, the text report, gnuplot
//! scripts with their data files, and a standalone SVG rendering. All
//! output is deterministic: fixed iteration order and 17-significant-digit
//! reals.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::analysis::{SingularSite, UniquenessReport};
use crate::eikonal::{Classification, DistanceField};
use crate::grid::Grid;
use crate::net::{EdgeId, Network, VertexKind};
use crate::rolling::{FluxReport, RollingField, TransmissionSpec};

fn real(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Writes through a temporary file in the same directory, renaming on
/// success, so failures never leave partial output behind.
pub fn write_atomic(path: impl AsRef<Path>, content: &str) -> io::Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

/// Distance table: one row per edge node, endpoints included.
pub fn d_csv(net: &Network, grid: &Grid, field: &DistanceField) -> String {
    let mut out = String::from("edge_id,t,s_arclength,d_value\n");
    for e in net.edge_ids() {
        let len = net.edge(e).length;
        for (i, &s) in grid.edge_params(e).iter().enumerate() {
            let node = grid.edge_nodes(e)[i];
            writeln!(
                out,
                "{},{},{},{}",
                e.0,
                real(s / len),
                real(s),
                real(field.at(node))
            )
            .unwrap();
        }
    }
    out
}

/// Rolling table; endpoint rows are duplicated per edge because the field
/// is multivalued at vertices.
pub fn v_csv(net: &Network, grid: &Grid, rolling: &RollingField) -> String {
    let mut out = String::from("edge_id,t,v_value\n");
    for e in net.edge_ids() {
        let len = net.edge(e).length;
        for (i, &s) in grid.edge_params(e).iter().enumerate() {
            writeln!(out, "{},{},{}", e.0, real(s / len), real(rolling.at(e, i))).unwrap();
        }
    }
    out
}

/// Parses a `v.csv` back into per-edge values on the given grid.
pub fn parse_v_csv(text: &str, net: &Network, grid: &Grid) -> Result<Vec<Vec<f64>>, String> {
    let mut per_edge: Vec<Vec<f64>> = net.edge_ids().map(|_| Vec::new()).collect();
    for (no, line) in text.lines().enumerate() {
        if no == 0 {
            if line != "edge_id,t,v_value" {
                return Err(format!("unexpected header `{}`", line));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(format!("line {}: expected 3 columns", no + 1));
        }
        let e: usize = cols[0]
            .parse()
            .map_err(|_| format!("line {}: bad edge id", no + 1))?;
        if e >= per_edge.len() {
            return Err(format!("line {}: edge {} out of range", no + 1, e));
        }
        let v: f64 = cols[2]
            .parse()
            .map_err(|_| format!("line {}: bad value", no + 1))?;
        per_edge[e].push(v);
    }
    for e in net.edge_ids() {
        let want = grid.edge_params(e).len();
        if per_edge[e.0].len() != want {
            return Err(format!(
                "edge {} has {} rows, grid expects {}",
                e.0,
                per_edge[e.0].len(),
                want
            ));
        }
    }
    Ok(per_edge)
}

/// Error table of a convergence study.
pub fn errors_csv(table: &crate::analysis::ErrorTable) -> String {
    let mut out = String::from("h,Linf_d,L1_d,Linf_v,L1_v\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            real(r.h),
            real(r.linf_d),
            real(r.l1_d),
            real(r.linf_v),
            real(r.l1_v)
        )
        .unwrap();
    }
    out
}

/// Human-readable solve summary: singular points, slope sets, flux
/// balances and the uniqueness verdict.
pub fn report_text(
    net: &Network,
    grid: &Grid,
    field: &DistanceField,
    class: &Classification,
    rolling: &RollingField,
    spec: &TransmissionSpec,
    uniq: &UniquenessReport,
    flux: &FluxReport,
    fine_source_mass: f64,
) -> String {
    let mut out = String::new();
    let n_boundary = net.boundary_vertices().count();
    writeln!(
        out,
        "network: {} vertices ({} boundary), {} edges; grid: {} nodes, max step {:.6e}",
        net.vertices().len(),
        n_boundary,
        net.edges().len(),
        grid.node_count(),
        grid.max_step()
    )
    .unwrap();

    let d_max = field.values.iter().cloned().fold(0.0, f64::max);
    writeln!(out, "\nstanding layer (distance to boundary): max {:.12e}", d_max).unwrap();
    writeln!(out, "singular points ({}):", uniq.singular_points.len()).unwrap();
    for p in &uniq.singular_points {
        match &p.site {
            SingularSite::Interior { edge, param, .. } => {
                let len = net.edge(*edge).length;
                writeln!(
                    out,
                    "  edge {} at t={:.6} (s={:.6}), d={:.12e}, source within one cell: {}",
                    edge.0,
                    param / len,
                    param,
                    p.distance,
                    if p.source_covered { "yes" } else { "no" }
                )
                .unwrap();
            }
            SingularSite::Vertex(v) => {
                writeln!(
                    out,
                    "  vertex {} (local max), d={:.12e}, source within one cell: {}",
                    v.0,
                    p.distance,
                    if p.source_covered { "yes" } else { "no" }
                )
                .unwrap();
            }
        }
    }

    writeln!(out, "\nvertex slope sets:").unwrap();
    for v in net.vertex_ids() {
        let kind = match net.vertex(v).kind {
            VertexKind::Boundary => "boundary",
            VertexKind::Transition => "transition",
        };
        let fmt_edges = |edges: &[EdgeId]| {
            let ids: Vec<String> = edges.iter().map(|e| format!("e{}", e.0)).collect();
            format!("{{{}}}", ids.join(", "))
        };
        writeln!(
            out,
            "  x{} ({}): uphill {}, downhill {}{}",
            v.0,
            kind,
            fmt_edges(&class.inc_plus[v.0]),
            fmt_edges(&class.inc_minus[v.0]),
            if class.is_max_vertex[v.0] { ", local max" } else { "" }
        )
        .unwrap();
    }

    let v_max = rolling.max_abs();
    writeln!(out, "\nrolling layer: max {:.12e}", v_max).unwrap();
    writeln!(out, "vertex values (edgewise, possibly multivalued):").unwrap();
    for v in net.transition_vertices() {
        let vals: Vec<String> = net
            .incident(v)
            .iter()
            .map(|&(e, side)| {
                format!("e{}: {:.12e}", e.0, rolling.per_edge[e.0][grid.vertex_local(e, side)])
            })
            .collect();
        writeln!(out, "  x{}: {}", v.0, vals.join(", ")).unwrap();
    }
    writeln!(out, "flux balance per transition vertex:").unwrap();
    for row in &flux.vertices {
        writeln!(
            out,
            "  x{}: inflow {:.12e}, outflow {:.12e}, g {:.12e}, residual {:.3e}",
            row.vertex.0, row.inflow, row.outflow, row.vertex_source, row.residual
        )
        .unwrap();
    }
    let _ = spec;
    writeln!(
        out,
        "boundary outflow {:.12e}; source mass: grid {:.12e}, fine {:.12e}; vertex sources {:.12e}",
        flux.boundary_outflow, flux.grid_source_mass, fine_source_mass, flux.vertex_source_total
    )
    .unwrap();

    writeln!(
        out,
        "\nuniqueness: {}",
        if uniq.unique {
            "UNIQUE (every singular point lies in the source support)"
        } else {
            "NOT UNIQUE (some singular point is outside the source support)"
        }
    )
    .unwrap();
    if !uniq.unique {
        writeln!(
            out,
            "profile gap: {} of {} nodes have the minimal profile strictly below d",
            uniq.gap_nodes.len(),
            grid.node_count()
        )
        .unwrap();
    }
    out
}

/// x y value triples per edge, separated by blank lines, for gnuplot's
/// `splot ... with lines`.
pub fn xyz_data(net: &Network, grid: &Grid, values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for e in net.edge_ids() {
        let edge = net.edge(e);
        let a = net.vertex(edge.start).position;
        let b = net.vertex(edge.end).position;
        let len = edge.length;
        for (i, &s) in grid.edge_params(e).iter().enumerate() {
            let w = s / len;
            let x = a[0] * (1.0 - w) + b[0] * w;
            let y = a[1] * (1.0 - w) + b[1] * w;
            writeln!(out, "{} {} {}", real(x), real(y), real(values[e.0][i])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Script plotting the standing and rolling layers as heights over the
/// plan view.
pub fn gnuplot_script() -> String {
    let mut out = String::new();
    out.push_str("# gnuplot script produced by sandnet solve\n");
    out.push_str("set view 60, 30\nset ticslevel 0\nset key off\n");
    out.push_str("set title 'standing layer d'\n");
    out.push_str("splot 'd_xyz.dat' using 1:2:3 with lines lw 2 lc rgb '#1f77b4'\n");
    out.push_str("pause -1 'press enter for the rolling layer'\n");
    out.push_str("set title 'rolling layer v'\n");
    out.push_str("splot 'v_xyz.dat' using 1:2:3 with lines lw 2 lc rgb '#d62728'\n");
    out.push_str("pause -1 'press enter to quit'\n");
    out
}

fn colormap(t: f64) -> (u8, u8, u8) {
    // compact viridis approximation
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.00, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.50, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.00, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut lo = STOPS[0];
    let mut hi = STOPS[4];
    for w in STOPS.windows(2) {
        if t >= w[0].0 && t <= w[1].0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let w = if hi.0 > lo.0 { (t - lo.0) / (hi.0 - lo.0) } else { 0.0 };
    let c = |k: usize| (lo.1[k] * (1.0 - w) + hi.1[k] * w).round() as u8;
    (c(0), c(1), c(2))
}

/// Two-panel plan view with per-edge color maps for d and v.
pub fn svg(net: &Network, grid: &Grid, field: &DistanceField, rolling: &RollingField) -> String {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in net.vertices() {
        min_x = min_x.min(v.position[0]);
        max_x = max_x.max(v.position[0]);
        min_y = min_y.min(v.position[1]);
        max_y = max_y.max(v.position[1]);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let panel = 360.0;
    let margin = 40.0;
    let scale = (panel - 2.0 * margin) / span_x.max(span_y);
    let width = 2.0 * panel;
    let height = panel + 20.0;

    let place = |panel_idx: usize, p: [f64; 2]| -> (f64, f64) {
        let x = panel_idx as f64 * panel + margin + (p[0] - min_x) * scale;
        let y = panel - margin - (p[1] - min_y) * scale;
        (x, y)
    };

    let d_vals: Vec<Vec<f64>> = net
        .edge_ids()
        .map(|e| field.edge_values(grid, e))
        .collect();
    let panels: [(&str, &Vec<Vec<f64>>); 2] = [("standing layer d", &d_vals), ("rolling layer v", &rolling.per_edge)];

    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{}' height='{}' viewBox='0 0 {} {}'>",
        width, height, width, height
    )
    .unwrap();
    writeln!(out, "<rect width='100%' height='100%' fill='white'/>").unwrap();

    for (idx, (title, values)) in panels.iter().enumerate() {
        let lo = values.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-300);
        for e in net.edge_ids() {
            let edge = net.edge(e);
            let a = net.vertex(edge.start).position;
            let b = net.vertex(edge.end).position;
            let params = grid.edge_params(e);
            let len = edge.length;
            for i in 1..params.len() {
                let w0 = params[i - 1] / len;
                let w1 = params[i] / len;
                let p0 = place(idx, [
                    a[0] * (1.0 - w0) + b[0] * w0,
                    a[1] * (1.0 - w0) + b[1] * w0,
                ]);
                let p1 = place(idx, [
                    a[0] * (1.0 - w1) + b[0] * w1,
                    a[1] * (1.0 - w1) + b[1] * w1,
                ]);
                let mid = 0.5 * (values[e.0][i - 1] + values[e.0][i]);
                let (r, g, bl) = colormap((mid - lo) / span);
                writeln!(
                    out,
                    "<line x1='{:.2}' y1='{:.2}' x2='{:.2}' y2='{:.2}' stroke='rgb({},{},{})' stroke-width='4' stroke-linecap='round'/>",
                    p0.0, p0.1, p1.0, p1.1, r, g, bl
                )
                .unwrap();
            }
        }
        for v in net.vertex_ids() {
            let p = place(idx, net.vertex(v).position);
            let fill = match net.vertex(v).kind {
                VertexKind::Boundary => "black",
                VertexKind::Transition => "white",
            };
            writeln!(
                out,
                "<circle cx='{:.2}' cy='{:.2}' r='4' fill='{}' stroke='black'/>",
                p.0, p.1, fill
            )
            .unwrap();
        }
        writeln!(
            out,
            "<text x='{:.2}' y='{:.2}' font-family='sans-serif' font-size='14'>{} (min {:.4e}, max {:.4e})</text>",
            idx as f64 * panel + margin,
            panel + 10.0,
            title,
            lo,
            hi
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
