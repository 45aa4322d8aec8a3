//! Seeded random-network corpus shared by the integration suites.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sandnet::expr::Expr;
use sandnet::net::{Edge, Network, Vertex, VertexId, VertexKind};

/// Connected random network with at most 8 vertices and 12 edges, positive
/// per-edge inhomogeneity and non-negative sources. Deterministic per seed.
pub fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(net) = attempt(&mut rng) {
            if net.validate().is_valid() {
                return net;
            }
        }
    }
}

fn attempt(rng: &mut ChaCha8Rng) -> Option<Network> {
    let n_v = rng.gen_range(2..=8usize);
    let mut positions: Vec<[f64; 2]> = Vec::new();
    for _ in 0..n_v {
        let p = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)];
        if positions
            .iter()
            .any(|q| ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt() < 0.2)
        {
            return None;
        }
        positions.push(p);
    }

    // spanning tree first, then extra edges up to the cap
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 1..n_v {
        let j = rng.gen_range(0..i);
        pairs.push((j, i));
    }
    let extra = rng.gen_range(0..=4usize);
    for _ in 0..extra {
        if pairs.len() >= 12 {
            break;
        }
        let a = rng.gen_range(0..n_v);
        let b = rng.gen_range(0..n_v);
        let key = (a.min(b), a.max(b));
        if a != b && !pairs.contains(&key) {
            pairs.push(key);
        }
    }

    let mut degree = vec![0usize; n_v];
    for &(a, b) in &pairs {
        degree[a] += 1;
        degree[b] += 1;
    }

    let mut kinds: Vec<VertexKind> = (0..n_v)
        .map(|i| {
            if degree[i] <= 1 || rng.gen_bool(0.35) {
                VertexKind::Boundary
            } else {
                VertexKind::Transition
            }
        })
        .collect();
    if !kinds.iter().any(|k| *k == VertexKind::Boundary) {
        kinds[0] = VertexKind::Boundary;
    }

    let vertices: Vec<Vertex> = positions
        .iter()
        .zip(&kinds)
        .map(|(&position, &kind)| Vertex { position, kind })
        .collect();

    let edges: Vec<Edge> = pairs
        .iter()
        .map(|&(a, b)| {
            let pa = positions[a];
            let pb = positions[b];
            let length = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            Edge {
                start: VertexId(a),
                end: VertexId(b),
                length,
                source: random_source(rng),
                eta_inv: random_eta_inv(rng),
                n_nodes: rng.gen_range(3..=25),
            }
        })
        .collect();

    Network::new(vertices, edges).ok()
}

fn random_eta_inv(rng: &mut ChaCha8Rng) -> Expr {
    let text = match rng.gen_range(0..3) {
        0 => format!("{:.3}", rng.gen_range(0.3..2.5)),
        1 => {
            // linear, positive at both ends hence everywhere
            let a = rng.gen_range(0.3..2.0);
            let b = rng.gen_range(0.3..2.0) - a;
            format!("{:.3}+{:.3}*t", a, b)
        }
        _ => format!("1/({:.3}+{:.3}*t)", rng.gen_range(0.4..2.0), rng.gen_range(0.0..1.0)),
    };
    Expr::parse(&text).unwrap()
}

fn random_source(rng: &mut ChaCha8Rng) -> Expr {
    let text = match rng.gen_range(0..4) {
        0 => "0".to_string(),
        1 => format!("{:.3}", rng.gen_range(0.0..2.0)),
        2 => {
            let a: f64 = rng.gen_range(0.0..1.5);
            // keep both endpoint values non-negative
            let b = (rng.gen_range(0.0..1.5) - a.min(1.0)).max(-a);
            format!("{:.3}+{:.3}*t", a, b)
        }
        _ => format!(
            "{:.3}*chi(abs(t-{:.3})<={:.3})",
            rng.gen_range(0.5..2.0),
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.05..0.2)
        ),
    };
    Expr::parse(&text).unwrap()
}
