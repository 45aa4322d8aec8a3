//! Reader, writer and generators for the SPNET `.net` text format.
//!
//! A `.net` file is line oriented and UTF-8:
//!
//! ```text
//! #SPNET
//! #v <id> <x> <y> <b|t>
//! #e <id> <start> <end> <n> <f(t)> <eta_inv(t)> [<length>]
//! #c <vertex> <edge> <value>      // transmission coefficient C_ij
//! #g <vertex> <value>             // vertex source g(x_i)
//! #k <vertex> <edge> <value>      // vertex-source split K_ij
//! ```
//!
//! `n` counts interior grid nodes. Expressions contain no whitespace and use
//! the normalized parameter `t` in [0,1]. Edge length defaults to the
//! Euclidean distance between endpoint positions; the optional trailing
//! length field overrides it. `//` starts a comment. With the strict flag
//! set, comments and the `#c/#g/#k` extension lines are ignored with a
//! warning, matching the plain format.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::expr::{Expr, ParseError};
use crate::net::{Edge, EdgeId, Network, ValidationReport, Vertex, VertexId, VertexKind};
use thiserror::Error;

/// Transmission data carried by a `.net` file on top of the network itself,
/// all in dense internal ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransmissionOverrides {
    /// C_ij entries: (vertex, outgoing edge, coefficient).
    pub coefficients: Vec<(VertexId, EdgeId, f64)>,
    /// g(x_i) entries.
    pub vertex_sources: Vec<(VertexId, f64)>,
    /// K_ij entries: (vertex, outgoing edge, coefficient).
    pub source_splits: Vec<(VertexId, EdgeId, f64)>,
}

impl TransmissionOverrides {
    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
            && self.vertex_sources.is_empty()
            && self.source_splits.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct NetFile {
    pub network: Network,
    pub overrides: TransmissionOverrides,
    /// Strict-mode notes about ignored lines.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Ignore (with a warning) everything beyond the plain format.
    pub strict: bool,
    /// Run `Network::validate` and fail on violations.
    pub validate: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            strict: false,
            validate: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing #SPNET header (first line is `{found}`)")]
    MissingHeader { found: String },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: bad {field} expression: {err}")]
    Expression {
        line: usize,
        field: &'static str,
        err: ParseError,
    },
    #[error("line {line}: reference to undeclared vertex {id}")]
    UndeclaredVertex { line: usize, id: i64 },
    #[error("line {line}: reference to undeclared edge {id}")]
    UndeclaredEdge { line: usize, id: i64 },
    #[error("line {line}: duplicate {what} id {id}")]
    DuplicateId {
        line: usize,
        what: &'static str,
        id: i64,
    },
    #[error("line {line}: {what} coefficients at vertex sum to {sum}, expected 1")]
    CoefficientSum {
        line: usize,
        what: &'static str,
        sum: f64,
    },
    #[error("network is invalid:\n{0}")]
    Invalid(ValidationReport),
}

impl ReadError {
    /// True for format-level failures (as opposed to validation failures).
    pub fn is_parse(&self) -> bool {
        !matches!(self, ReadError::Invalid(_) | ReadError::Io(_))
    }
}

pub fn read_path(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<NetFile, ReadError> {
    let text = std::fs::read_to_string(path)?;
    read_str(&text, opts)
}

pub fn read_str(text: &str, opts: &ReadOptions) -> Result<NetFile, ReadError> {
    let mut warnings = Vec::new();
    let mut lines = Vec::new(); // (line number, payload)
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let mut line = raw.trim_end_matches('\r');
        if let Some(pos) = line.find("//") {
            if opts.strict {
                warnings.push(format!("line {}: ignored comment", no));
            }
            line = &line[..pos];
        }
        let line = line.trim();
        if !line.is_empty() {
            lines.push((no, line.to_string()));
        }
    }

    match lines.first() {
        Some((_, l)) if l == "#SPNET" => {}
        Some((_, l)) => {
            return Err(ReadError::MissingHeader { found: l.clone() });
        }
        None => {
            return Err(ReadError::MissingHeader {
                found: String::new(),
            });
        }
    }

    struct RawEdge {
        line: usize,
        start: i64,
        end: i64,
        n: usize,
        source: Expr,
        eta_inv: Expr,
        length: Option<f64>,
    }

    let mut vertex_ids: Vec<i64> = Vec::new();
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut edge_ids: Vec<i64> = Vec::new();
    let mut raw_edges: Vec<RawEdge> = Vec::new();
    let mut ext_c: Vec<(usize, i64, i64, f64)> = Vec::new();
    let mut ext_g: Vec<(usize, i64, f64)> = Vec::new();
    let mut ext_k: Vec<(usize, i64, i64, f64)> = Vec::new();

    let malformed = |line: usize, msg: String| ReadError::Malformed { line, msg };
    let parse_int = |line: usize, tok: &str, what: &str| -> Result<i64, ReadError> {
        tok.parse::<i64>()
            .map_err(|_| malformed(line, format!("bad {} `{}`", what, tok)))
    };
    let parse_real = |line: usize, tok: &str, what: &str| -> Result<f64, ReadError> {
        tok.parse::<f64>()
            .map_err(|_| malformed(line, format!("bad {} `{}`", what, tok)))
    };

    for (no, line) in lines.iter().skip(1) {
        let no = *no;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "#v" => {
                if fields.len() != 5 {
                    return Err(malformed(
                        no,
                        format!("vertex line has {} fields, expected 5", fields.len()),
                    ));
                }
                let id = parse_int(no, fields[1], "vertex id")?;
                if vertex_ids.contains(&id) {
                    return Err(ReadError::DuplicateId {
                        line: no,
                        what: "vertex",
                        id,
                    });
                }
                let x = parse_real(no, fields[2], "x coordinate")?;
                let y = parse_real(no, fields[3], "y coordinate")?;
                let kind = match fields[4] {
                    "b" => VertexKind::Boundary,
                    "t" => VertexKind::Transition,
                    other => {
                        return Err(malformed(
                            no,
                            format!("bad vertex type `{}`, expected b or t", other),
                        ));
                    }
                };
                vertex_ids.push(id);
                vertices.push(Vertex {
                    position: [x, y],
                    kind,
                });
            }
            "#e" => {
                if fields.len() != 7 && fields.len() != 8 {
                    return Err(malformed(
                        no,
                        format!(
                            "edge line has {} fields, expected 7 (or 8 with explicit length)",
                            fields.len()
                        ),
                    ));
                }
                let id = parse_int(no, fields[1], "edge id")?;
                if edge_ids.contains(&id) {
                    return Err(ReadError::DuplicateId {
                        line: no,
                        what: "edge",
                        id,
                    });
                }
                let start = parse_int(no, fields[2], "start vertex")?;
                let end = parse_int(no, fields[3], "end vertex")?;
                let n = fields[4]
                    .parse::<usize>()
                    .map_err(|_| malformed(no, format!("bad node count `{}`", fields[4])))?;
                let source = Expr::parse(fields[5]).map_err(|err| ReadError::Expression {
                    line: no,
                    field: "f",
                    err,
                })?;
                let eta_inv = Expr::parse(fields[6]).map_err(|err| ReadError::Expression {
                    line: no,
                    field: "eta_inv",
                    err,
                })?;
                let length = if fields.len() == 8 {
                    if opts.strict {
                        warnings.push(format!("line {}: ignored explicit length field", no));
                        None
                    } else {
                        Some(parse_real(no, fields[7], "length")?)
                    }
                } else {
                    None
                };
                edge_ids.push(id);
                raw_edges.push(RawEdge {
                    line: no,
                    start,
                    end,
                    n,
                    source,
                    eta_inv,
                    length,
                });
            }
            "#c" | "#k" => {
                if opts.strict {
                    warnings.push(format!("line {}: ignored extension line {}", no, fields[0]));
                    continue;
                }
                if fields.len() != 4 {
                    return Err(malformed(
                        no,
                        format!("{} line has {} fields, expected 4", fields[0], fields.len()),
                    ));
                }
                let v = parse_int(no, fields[1], "vertex id")?;
                let e = parse_int(no, fields[2], "edge id")?;
                let val = parse_real(no, fields[3], "coefficient")?;
                if fields[0] == "#c" {
                    ext_c.push((no, v, e, val));
                } else {
                    ext_k.push((no, v, e, val));
                }
            }
            "#g" => {
                if opts.strict {
                    warnings.push(format!("line {}: ignored extension line #g", no));
                    continue;
                }
                if fields.len() != 3 {
                    return Err(malformed(
                        no,
                        format!("#g line has {} fields, expected 3", fields.len()),
                    ));
                }
                let v = parse_int(no, fields[1], "vertex id")?;
                let val = parse_real(no, fields[2], "value")?;
                ext_g.push((no, v, val));
            }
            other => {
                return Err(malformed(no, format!("unrecognized line tag `{}`", other)));
            }
        }
    }

    let vertex_index = |line: usize, id: i64| -> Result<VertexId, ReadError> {
        vertex_ids
            .iter()
            .position(|&v| v == id)
            .map(VertexId)
            .ok_or(ReadError::UndeclaredVertex { line, id })
    };
    let edge_index = |line: usize, id: i64| -> Result<EdgeId, ReadError> {
        edge_ids
            .iter()
            .position(|&e| e == id)
            .map(EdgeId)
            .ok_or(ReadError::UndeclaredEdge { line, id })
    };

    let mut edges = Vec::with_capacity(raw_edges.len());
    for raw in &raw_edges {
        let start = vertex_index(raw.line, raw.start)?;
        let end = vertex_index(raw.line, raw.end)?;
        let length = raw.length.unwrap_or_else(|| {
            let a = vertices[start.0].position;
            let b = vertices[end.0].position;
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        });
        edges.push(Edge {
            start,
            end,
            length,
            source: raw.source.clone(),
            eta_inv: raw.eta_inv.clone(),
            n_nodes: raw.n,
        });
    }

    let mut overrides = TransmissionOverrides::default();
    for (line, v, e, val) in &ext_c {
        overrides
            .coefficients
            .push((vertex_index(*line, *v)?, edge_index(*line, *e)?, *val));
    }
    for (line, v, val) in &ext_g {
        overrides
            .vertex_sources
            .push((vertex_index(*line, *v)?, *val));
    }
    for (line, v, e, val) in &ext_k {
        overrides
            .source_splits
            .push((vertex_index(*line, *v)?, edge_index(*line, *e)?, *val));
    }

    check_coefficient_sums(&ext_c, "C", &overrides.coefficients)?;
    check_coefficient_sums(&ext_k, "K", &overrides.source_splits)?;

    let network = Network::new(vertices, edges).map_err(|e| ReadError::Malformed {
        line: 0,
        msg: e.to_string(),
    })?;

    if opts.validate {
        let report = network.validate();
        if !report.is_valid() {
            return Err(ReadError::Invalid(report));
        }
    }

    Ok(NetFile {
        network,
        overrides,
        warnings,
    })
}

fn check_coefficient_sums(
    raw: &[(usize, i64, i64, f64)],
    what: &'static str,
    resolved: &[(VertexId, EdgeId, f64)],
) -> Result<(), ReadError> {
    let mut done: Vec<VertexId> = Vec::new();
    for (idx, (v, _, _)) in resolved.iter().enumerate() {
        if done.contains(v) {
            continue;
        }
        done.push(*v);
        let sum: f64 = resolved
            .iter()
            .filter(|(w, _, _)| w == v)
            .map(|(_, _, c)| c)
            .sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ReadError::CoefficientSum {
                line: raw[idx].0,
                what,
                sum,
            });
        }
    }
    Ok(())
}

fn fmt_real(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Serializes to the canonical form: dense ids, 17-significant-digit reals,
/// `\n` line endings, explicit length only when it differs from the
/// Euclidean endpoint distance.
pub fn write_string(file: &NetFile) -> String {
    let net = &file.network;
    let mut out = String::from("#SPNET\n");
    for (i, v) in net.vertices().iter().enumerate() {
        let kind = match v.kind {
            VertexKind::Boundary => "b",
            VertexKind::Transition => "t",
        };
        writeln!(
            out,
            "#v {} {} {} {}",
            i,
            fmt_real(v.position[0]),
            fmt_real(v.position[1]),
            kind
        )
        .unwrap();
    }
    for (j, e) in net.edges().iter().enumerate() {
        let a = net.vertex(e.start).position;
        let b = net.vertex(e.end).position;
        let euclid = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let mut line = format!(
            "#e {} {} {} {} {} {}",
            j, e.start.0, e.end.0, e.n_nodes, e.source, e.eta_inv
        );
        if (e.length - euclid).abs() > 1e-12 * (1.0 + e.length.abs()) {
            line.push(' ');
            line.push_str(&fmt_real(e.length));
        }
        out.push_str(&line);
        out.push('\n');
    }
    for (v, e, c) in &file.overrides.coefficients {
        writeln!(out, "#c {} {} {}", v.0, e.0, fmt_real(*c)).unwrap();
    }
    for (v, g) in &file.overrides.vertex_sources {
        writeln!(out, "#g {} {}", v.0, fmt_real(*g)).unwrap();
    }
    for (v, e, k) in &file.overrides.source_splits {
        writeln!(out, "#k {} {} {}", v.0, e.0, fmt_real(*k)).unwrap();
    }
    out
}

pub fn write_path(path: impl AsRef<Path>, file: &NetFile) -> io::Result<()> {
    std::fs::write(path, write_string(file))
}

/// Built-in network generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Three-arm star, one transition center, linear sources, eta = 1.
    Test1,
    /// Test1 extended by two edges, single boundary vertex, indicator
    /// source on e4 and a fast edge (eta = 5) on e3.
    Test2,
    /// Two-level Sierpinski pre-fractal with indicator sources on the two
    /// inner edges adjacent to the far midpoint.
    Test3,
    /// Star with a transition center and `arms` boundary tips.
    Star { arms: usize, lengths: Vec<f64> },
    /// Sierpinski pre-fractal of the given level (level 2 = Test3 geometry),
    /// zero source.
    Sierpinski { level: u32 },
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("star needs at least 3 arms, got {0}")]
    TooFewArms(usize),
    #[error("star arm lengths must be positive")]
    BadArmLength,
    #[error("lengths list has {got} entries for {arms} arms")]
    ArmCountMismatch { arms: usize, got: usize },
    #[error("sierpinski level must be >= 1, got {0}")]
    BadLevel(u32),
}

/// Interior node count giving a step of about `h` on an edge of length `len`.
fn nodes_for_step(len: f64, h: f64) -> usize {
    ((len / h).round() as usize).max(2) - 1
}

pub fn generate(kind: Generator) -> Result<NetFile, GenerateError> {
    let expr = |s: &str| Expr::parse(s).expect("generator expression");
    let net = match kind {
        Generator::Test1 => {
            // arm lengths 1/2, 1/2, 1; the positions realize them exactly
            let vertices = vec![
                Vertex { position: [0.0, 0.0], kind: VertexKind::Transition },
                Vertex { position: [-0.3, 0.4], kind: VertexKind::Boundary },
                Vertex { position: [0.3, 0.4], kind: VertexKind::Boundary },
                Vertex { position: [0.0, -1.0], kind: VertexKind::Boundary },
            ];
            // sources 1-2s on the short arms and 1-s on the long one,
            // written on the normalized parameter
            let mk = |end: usize, len: f64| Edge {
                start: VertexId(0),
                end: VertexId(end),
                length: len,
                source: expr("1-t"),
                eta_inv: expr("1"),
                n_nodes: nodes_for_step(len, 1e-2),
            };
            let edges = vec![mk(1, 0.5), mk(2, 0.5), mk(3, 1.0)];
            Network::new(vertices, edges).unwrap()
        }
        Generator::Test2 => {
            let vertices = vec![
                Vertex { position: [0.0, 0.0], kind: VertexKind::Transition },
                Vertex { position: [-0.5, 0.0], kind: VertexKind::Transition },
                Vertex { position: [0.5, 0.0], kind: VertexKind::Transition },
                Vertex { position: [0.0, -1.0], kind: VertexKind::Boundary },
            ];
            let len5 = 1.25f64.sqrt();
            let mk = |start: usize, end: usize, len: f64, f: &str, eta: &str| Edge {
                start: VertexId(start),
                end: VertexId(end),
                length: len,
                source: expr(f),
                eta_inv: expr(eta),
                n_nodes: nodes_for_step(len, 1e-2),
            };
            let edges = vec![
                mk(0, 1, 0.5, "0", "1"),
                mk(0, 2, 0.5, "0", "1"),
                mk(0, 3, 1.0, "0", "0.2"),
                mk(2, 1, 1.0, "2*chi(abs(t-0.25)<=0.125)", "1"),
                mk(1, 3, len5, "0", "1"),
            ];
            Network::new(vertices, edges).unwrap()
        }
        Generator::Test3 => {
            let s3 = 3f64.sqrt();
            let vertices = vec![
                Vertex { position: [0.0, 0.0], kind: VertexKind::Boundary },
                Vertex { position: [2.0, 0.0], kind: VertexKind::Boundary },
                Vertex { position: [1.0, s3], kind: VertexKind::Boundary },
                Vertex { position: [1.0, 0.0], kind: VertexKind::Transition },
                Vertex { position: [1.5, s3 / 2.0], kind: VertexKind::Transition },
                Vertex { position: [0.5, s3 / 2.0], kind: VertexKind::Transition },
            ];
            let dist = |a: usize, b: usize| -> f64 {
                let pa = vertices[a].position;
                let pb = vertices[b].position;
                ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
            };
            let bump = "2*chi(abs(t-0.5)<=0.125)";
            let mk = |start: usize, end: usize, f: &str| Edge {
                start: VertexId(start),
                end: VertexId(end),
                length: dist(start, end),
                source: expr(f),
                eta_inv: expr("1"),
                n_nodes: nodes_for_step(dist(start, end), 1e-2),
            };
            let edges = vec![
                mk(0, 3, "0"),
                mk(3, 1, "0"),
                mk(1, 4, "0"),
                mk(4, 2, "0"),
                mk(2, 5, "0"),
                mk(5, 0, "0"),
                mk(3, 4, bump),
                mk(4, 5, bump),
                mk(5, 3, "0"),
            ];
            Network::new(vertices, edges).unwrap()
        }
        Generator::Star { arms, lengths } => {
            if arms < 3 {
                return Err(GenerateError::TooFewArms(arms));
            }
            let lengths = if lengths.is_empty() {
                vec![1.0; arms]
            } else if lengths.len() == arms {
                lengths
            } else {
                return Err(GenerateError::ArmCountMismatch {
                    arms,
                    got: lengths.len(),
                });
            };
            if lengths.iter().any(|&l| !(l > 0.0)) {
                return Err(GenerateError::BadArmLength);
            }
            let mut vertices = vec![Vertex {
                position: [0.0, 0.0],
                kind: VertexKind::Transition,
            }];
            let mut edges = Vec::new();
            for (k, &len) in lengths.iter().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / arms as f64;
                vertices.push(Vertex {
                    position: [len * angle.cos(), len * angle.sin()],
                    kind: VertexKind::Boundary,
                });
                edges.push(Edge {
                    start: VertexId(0),
                    end: VertexId(k + 1),
                    length: len,
                    source: expr("0"),
                    eta_inv: expr("1"),
                    n_nodes: nodes_for_step(len, 1e-2),
                });
            }
            Network::new(vertices, edges).unwrap()
        }
        Generator::Sierpinski { level } => {
            if level < 1 {
                return Err(GenerateError::BadLevel(level));
            }
            sierpinski_network(level)
        }
    };
    Ok(NetFile {
        network: net,
        overrides: TransmissionOverrides::default(),
        warnings: Vec::new(),
    })
}

fn sierpinski_network(level: u32) -> Network {
    let side = 2f64.powi(level as i32 - 1);
    let s3 = 3f64.sqrt();
    let corners = [
        [0.0, 0.0],
        [side, 0.0],
        [side / 2.0, side * s3 / 2.0],
    ];

    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut intern = |points: &mut Vec<[f64; 2]>, p: [f64; 2]| -> usize {
        const Q: f64 = 1048576.0; // dyadic quantization, exact for these coords
        let key = [(p[0] * Q).round(), (p[1] * Q).round()];
        for (i, q) in points.iter().enumerate() {
            if (q[0] * Q).round() == key[0] && (q[1] * Q).round() == key[1] {
                return i;
            }
        }
        points.push(p);
        points.len() - 1
    };

    fn subdivide(
        tri: [[f64; 2]; 3],
        level: u32,
        points: &mut Vec<[f64; 2]>,
        segments: &mut Vec<(usize, usize)>,
        intern: &mut impl FnMut(&mut Vec<[f64; 2]>, [f64; 2]) -> usize,
    ) {
        if level == 1 {
            let ids = [
                intern(points, tri[0]),
                intern(points, tri[1]),
                intern(points, tri[2]),
            ];
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let seg = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                if !segments.contains(&seg) {
                    segments.push(seg);
                }
            }
            return;
        }
        let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let m01 = mid(tri[0], tri[1]);
        let m12 = mid(tri[1], tri[2]);
        let m20 = mid(tri[2], tri[0]);
        subdivide([tri[0], m01, m20], level - 1, points, segments, intern);
        subdivide([m01, tri[1], m12], level - 1, points, segments, intern);
        subdivide([m20, m12, tri[2]], level - 1, points, segments, intern);
    }

    subdivide(corners, level, &mut points, &mut segments, &mut intern);

    let corner_ids: Vec<usize> = corners
        .iter()
        .map(|&c| points.iter().position(|&p| p == c).unwrap())
        .collect();
    let vertices: Vec<Vertex> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| Vertex {
            position: p,
            kind: if corner_ids.contains(&i) {
                VertexKind::Boundary
            } else {
                VertexKind::Transition
            },
        })
        .collect();
    let zero = Expr::parse("0").unwrap();
    let one = Expr::parse("1").unwrap();
    let edges: Vec<Edge> = segments
        .iter()
        .map(|&(a, b)| {
            let pa = points[a];
            let pb = points[b];
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            Edge {
                start: VertexId(a),
                end: VertexId(b),
                length: len,
                source: zero.clone(),
                eta_inv: one.clone(),
                n_nodes: nodes_for_step(len, 1e-2),
            }
        })
        .collect();
    Network::new(vertices, edges).unwrap()
}
