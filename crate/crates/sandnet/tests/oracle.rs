//! Independent-oracle checks on a seeded random corpus: the solved
//! distance must equal the discrete geodesic distance recomputed by plain
//! relaxation, and the classified field must satisfy the structural
//! identities recounted from raw values.

mod common;

use common::random_network;
use sandnet::analysis::minimal_profile;
use sandnet::grid::{eta_inv_table, NodeId, NodeKind};
use sandnet::net::{Network, VertexKind};
use sandnet::netfile::TransmissionOverrides;
use sandnet::pipeline::{solve_network, Solution};
use sandnet::rolling::flux_report;

fn solve(net: &Network) -> Solution {
    solve_network(net, &TransmissionOverrides::default(), 1e-12).unwrap()
}

/// Relaxation-to-fixpoint recomputation of the discrete geodesic distance,
/// independent of the solver's causal sweep.
fn oracle_distance(net: &Network, sol: &Solution) -> Vec<f64> {
    let grid = &sol.grid;
    let eta_inv = eta_inv_table(net, grid).unwrap();
    let mut dist = vec![f64::INFINITY; grid.node_count()];
    for v in net.boundary_vertices() {
        dist[grid.vertex_node(v).0] = 0.0;
    }
    loop {
        let mut changed = false;
        for n in 0..grid.node_count() {
            if dist[n].is_infinite() {
                continue;
            }
            for nb in grid.neighbors(net, NodeId(n)) {
                let cand = dist[n] + nb.len * eta_inv[nb.edge.0][nb.to_local];
                if cand + 0.0 < dist[nb.node.0] {
                    dist[nb.node.0] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

#[test]
fn distance_matches_relaxation_oracle_on_random_corpus() {
    for seed in 0..10u64 {
        let net = random_network(seed);
        let sol = solve(&net);
        let oracle = oracle_distance(&net, &sol);
        for n in 0..sol.grid.node_count() {
            assert!(
                (sol.distance.values[n] - oracle[n]).abs() <= 1e-12,
                "seed {} node {}: {} vs {}",
                seed,
                n,
                sol.distance.values[n],
                oracle[n]
            );
        }
    }
}

#[test]
fn structural_identities_on_random_corpus() {
    for seed in 0..20u64 {
        let net = random_network(seed);
        let sol = solve(&net);
        let grid = &sol.grid;

        // recount everything from the raw distance values
        let mut interior_singular = 0usize;
        let mut n_plus = 0usize;
        let mut n_minus = 0usize;
        let mut per_vertex_plus = vec![0usize; net.vertices().len()];
        for e in net.edge_ids() {
            let vals = sol.distance.edge_values(grid, e);
            let signs: Vec<i8> = vals
                .windows(2)
                .map(|w| {
                    assert!(w[0] != w[1], "tie survived enlargement");
                    if w[1] > w[0] {
                        1
                    } else {
                        -1
                    }
                })
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(changes <= 1, "seed {}: more than one singular point", seed);
            assert!(
                !signs.windows(2).any(|w| w[0] == -1 && w[1] == 1),
                "seed {}: interior minimum",
                seed
            );
            interior_singular += changes;

            let s_start = signs[0];
            let s_end = -signs[signs.len() - 1];
            for (v, s) in [
                (net.edge(e).start, s_start),
                (net.edge(e).end, s_end),
            ] {
                if s > 0 {
                    n_plus += 1;
                    per_vertex_plus[v.0] += 1;
                } else {
                    n_minus += 1;
                }
            }
            // exactly one of the interior singular point and the target
            // endpoint
            match changes {
                0 => assert_eq!(s_start + s_end, 0, "seed {}: monotone edge slope sum", seed),
                _ => assert!(s_start == 1 && s_end == 1, "seed {}: singular edge slopes", seed),
            }
        }

        let m = net.edges().len();
        assert_eq!(n_plus - interior_singular, m, "seed {}", seed);
        assert_eq!(n_minus + interior_singular, m, "seed {}", seed);

        let max_vertices = net
            .vertex_ids()
            .filter(|v| {
                net.vertex(*v).kind == VertexKind::Transition && per_vertex_plus[v.0] == 0
            })
            .count();
        let singular_total = (interior_singular + max_vertices) as isize;
        let lower = net.vertices().len() as isize - m as isize;
        let upper = m as isize - net.transition_vertices().count() as isize;
        assert!(
            lower <= singular_total && singular_total <= upper,
            "seed {}: bound {} <= {} <= {}",
            seed,
            lower,
            singular_total,
            upper
        );

        // the classification must agree with the recount
        assert_eq!(
            sol.classes
                .singular
                .iter()
                .filter(|s| s.is_some())
                .count(),
            interior_singular
        );
        assert_eq!(
            sol.classes.is_max_vertex.iter().filter(|m| **m).count(),
            max_vertices
        );
    }
}

#[test]
fn flux_and_mass_balance_on_random_corpus() {
    for seed in 0..10u64 {
        let net = random_network(seed);
        let sol = solve(&net);
        let report = flux_report(&net, &sol.grid, &sol.classes, &sol.rolling, &sol.spec).unwrap();
        let scale = 1.0 + sol.rolling.max_abs();
        assert!(
            report.max_residual() <= 1e-12 * scale,
            "seed {}: flux residual {}",
            seed,
            report.max_residual()
        );
        // the discrete scheme conserves the grid quadrature of f exactly
        assert!(
            (report.boundary_outflow - report.grid_source_mass).abs() <= 1e-12 * scale,
            "seed {}: outflow {} vs grid mass {}",
            seed,
            report.boundary_outflow,
            report.grid_source_mass
        );
    }
}

#[test]
fn minimal_profile_invariants_on_random_corpus() {
    for seed in 0..10u64 {
        let net = random_network(seed);
        let sol = solve(&net);
        let grid = &sol.grid;
        let prof = minimal_profile(&net, grid, &sol.distance).unwrap();
        let tol = 1e-12 * (1.0 + sol.distance.max_abs());
        // the two-sided bound is exact on any grid
        for n in 0..grid.node_count() {
            assert!(prof.values[n] >= -tol);
            assert!(
                prof.values[n] <= sol.distance.values[n] + tol,
                "seed {} node {}",
                seed,
                n
            );
        }
        // pinning on the rolling support carries a one-sided update slack on
        // coarse grids; the audit checks it against its consistency bound
        let mut report = sandnet::verify::CheckReport::default();
        sandnet::verify::check_profile(
            &mut report,
            &net,
            grid,
            &sol.distance,
            &sol.rolling,
            &sol.spec,
            1e-12,
        )
        .unwrap();
        assert!(report.all_passed(), "seed {}: {:?}", seed, report.entries);
    }
}

#[test]
fn vertex_distance_matrix_metric_axioms_on_random_corpus() {
    for seed in 0..10u64 {
        let net = random_network(seed);
        let m = net.vertex_distance_matrix().unwrap();
        let n = net.vertices().len();
        for i in 0..n {
            assert_eq!(m[i][i], 0.0);
            for j in 0..n {
                assert!((m[i][j] - m[j][i]).abs() < 1e-12);
                for k in 0..n {
                    assert!(m[i][j] <= m[i][k] + m[k][j] + 1e-12, "seed {}", seed);
                }
            }
        }
    }
}

#[test]
fn grid_neighbor_counts_on_random_corpus() {
    for seed in 0..10u64 {
        let net = random_network(seed);
        let sol = solve(&net);
        for n in 0..sol.grid.node_count() {
            let nbrs = sol.grid.neighbors(&net, NodeId(n));
            match sol.grid.kind(NodeId(n)) {
                NodeKind::Interior(..) => assert_eq!(nbrs.len(), 2),
                NodeKind::Vertex(v) => assert_eq!(nbrs.len(), net.degree(v)),
            }
        }
    }
}
