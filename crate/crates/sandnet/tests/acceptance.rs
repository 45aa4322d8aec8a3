//! Acceptance suite: every criterion prints one PASS/FAIL line
//! (`cargo test --test acceptance -- --nocapture` to see them all).

mod common;

use std::time::Instant;

use common::random_network;
use sandnet::analysis::{
    convergence_study, fit_slope, minimal_profile, nodal_errors, source_mass_fine,
    uniqueness_check, SingularSite, StudyReference, Test1Exact,
};
use sandnet::expr::Expr;
use sandnet::grid::{eta_inv_table, source_table, NodeId};
use sandnet::net::{Edge, EdgeId, Network, Vertex, VertexId, VertexKind};
use sandnet::netfile::{self, Generator, ReadOptions, TransmissionOverrides};
use sandnet::pipeline::{solve_network, Solution};
use sandnet::rolling::flux_report;
use sandnet::verify::{check_weak_form, CheckReport};

fn criterion(id: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {:2} {}: {} - {}",
        id,
        if pass { "PASS" } else { "FAIL" },
        name,
        detail
    );
    assert!(pass, "criterion {} ({}) failed: {}", id, name, detail);
}

fn solve(net: &Network) -> Solution {
    solve_network(net, &TransmissionOverrides::default(), 1e-12).unwrap()
}

fn test_network(gen: Generator) -> Network {
    netfile::generate(gen).unwrap().network
}

/// Tests 1-3 plus ten seeded random networks (<= 8 vertices, <= 12 edges,
/// random positive inhomogeneity).
fn corpus() -> Vec<(String, Network)> {
    let mut out = vec![
        ("test1".to_string(), test_network(Generator::Test1)),
        ("test2".to_string(), test_network(Generator::Test2)),
        ("test3".to_string(), test_network(Generator::Test3)),
    ];
    for seed in 100..110u64 {
        out.push((format!("random-{}", seed), random_network(seed)));
    }
    out
}

#[test]
fn criterion_01_test1_exact_reproduction() {
    let net = test_network(Generator::Test1);
    let start = Instant::now();
    let sol = solve(&net);
    let elapsed = start.elapsed();

    // the default grid has uniform step 1/100, so t = 1/4 is a node and the
    // scheme reproduces the closed forms exactly at the grid nodes
    assert!((sol.grid.max_step() - 0.01).abs() < 1e-15);
    let d_vals: Vec<Vec<f64>> = net
        .edge_ids()
        .map(|e| sol.distance.edge_values(&sol.grid, e))
        .collect();
    let nd = nodal_errors(&net, &sol.grid, &d_vals, &Test1Exact::distance);
    let nv = nodal_errors(&net, &sol.grid, &sol.rolling.per_edge, &Test1Exact::rolling);

    let pass = nd.linf <= 1e-10
        && nd.l1 <= 1e-10
        && nv.linf <= 1e-10
        && nv.l1 <= 1e-10
        && elapsed.as_secs_f64() < 1.0;
    criterion(
        1,
        "test1 exact reproduction at h=1/100",
        pass,
        &format!(
            "d errors (Linf {:.2e}, L1 {:.2e}), v errors (Linf {:.2e}, L1 {:.2e}), solve {:.0} ms",
            nd.linf,
            nd.l1,
            nv.linf,
            nv.l1,
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn criterion_02_test1_vertex_values() {
    let net = test_network(Generator::Test1);
    let sol = solve(&net);
    let center = VertexId(0);
    let v1 = sol.rolling.end_value(&net, &sol.grid, EdgeId(0), center);
    let v2 = sol.rolling.end_value(&net, &sol.grid, EdgeId(1), center);
    let v3 = sol.rolling.end_value(&net, &sol.grid, EdgeId(2), center);
    let pass = (v1 - 7.0 / 64.0).abs() <= 1e-10
        && (v2 - 7.0 / 64.0).abs() <= 1e-10
        && (v3 - 7.0 / 32.0).abs() <= 1e-10;
    criterion(
        2,
        "test1 center values 7/64, 7/64, 7/32",
        pass,
        &format!("got {:.12}, {:.12}, {:.12}", v1, v2, v3),
    );
}

#[test]
fn criterion_03_convergence_orders() {
    let net = test_network(Generator::Test1);
    let overrides = TransmissionOverrides::default();
    let start = Instant::now();

    // steps 1/n with n not divisible by 4: the kink at t = 1/4 falls a
    // quarter-cell off the grid and no tie triggers an insertion there
    let miss: Vec<f64> = [11, 21, 41, 81, 161, 321, 641]
        .iter()
        .map(|&n| 1.0 / n as f64)
        .collect();
    let table_miss = convergence_study(
        &net,
        &miss,
        StudyReference::Test1Exact,
        10_000,
        &overrides,
        1e-12,
    )
    .unwrap();

    // steps 1/n with 4 | n: the kink is a grid node
    let hit: Vec<f64> = [12, 24, 48, 96, 192, 384, 768]
        .iter()
        .map(|&n| 1.0 / n as f64)
        .collect();
    let table_hit = convergence_study(
        &net,
        &hit,
        StudyReference::Test1Exact,
        10_000,
        &overrides,
        1e-12,
    )
    .unwrap();
    let elapsed = start.elapsed();

    let s = table_miss.slopes;
    let hs = table_hit.slopes;
    let pass = (0.75..=1.25).contains(&s.linf_d)
        && (1.7..=2.3).contains(&s.l1_d)
        && s.linf_v >= 0.75
        && s.l1_v >= 0.75
        && (1.7..=2.3).contains(&hs.linf_v)
        && (1.7..=2.3).contains(&hs.l1_v)
        && elapsed.as_secs_f64() < 30.0;
    criterion(
        3,
        "convergence orders on test1",
        pass,
        &format!(
            "off-grid kink: d (Linf {:.2}, L1 {:.2}), v (Linf {:.2}, L1 {:.2}); on-grid kink: v (Linf {:.2}, L1 {:.2}); total {:.1} s",
            s.linf_d, s.l1_d, s.linf_v, s.l1_v, hs.linf_v, hs.l1_v,
            elapsed.as_secs_f64()
        ),
    );
}

/// Relaxation-to-fixpoint oracle for the discrete geodesic distance,
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
                if cand < dist[nb.node.0] {
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
fn criterion_04_oracle_equivalence() {
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for (name, net) in corpus() {
        let sol = solve(&net);
        let oracle = oracle_distance(&net, &sol);
        for n in 0..sol.grid.node_count() {
            let dev = (sol.distance.values[n] - oracle[n]).abs();
            if dev > worst {
                worst = dev;
                worst_name = name.clone();
            }
        }
    }
    criterion(
        4,
        "distance equals the discrete geodesic oracle",
        worst <= 1e-12,
        &format!("max deviation {:.3e} (worst case {})", worst, worst_name),
    );
}

#[test]
fn criterion_05_structural_invariants() {
    let mut failures = Vec::new();
    let mut cases = 0;
    for (name, net) in corpus() {
        cases += 1;
        let sol = solve(&net);
        let grid = &sol.grid;

        let mut interior = 0usize;
        let mut n_plus = 0usize;
        let mut n_minus = 0usize;
        let mut vertex_plus = vec![0usize; net.vertices().len()];
        let mut ok = true;
        for e in net.edge_ids() {
            let vals = sol.distance.edge_values(grid, e);
            let signs: Vec<i8> = vals
                .windows(2)
                .map(|w| if w[1] > w[0] { 1 } else { -1 })
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            // per-edge singular count in {0, 1}, no interior minimum
            if changes > 1 || signs.windows(2).any(|w| w[0] == -1 && w[1] == 1) {
                ok = false;
            }
            interior += changes;
            let s_start = signs[0];
            let s_end = -signs[signs.len() - 1];
            for (v, s) in [(net.edge(e).start, s_start), (net.edge(e).end, s_end)] {
                if s > 0 {
                    n_plus += 1;
                    vertex_plus[v.0] += 1;
                } else {
                    n_minus += 1;
                }
            }
            // exactly one of interior singular point and target endpoint
            let has_singular = changes == 1;
            let has_target = s_start + s_end == 0;
            if has_singular == has_target {
                ok = false;
            }
        }
        let m = net.edges().len();
        if n_plus - interior != m || n_minus + interior != m {
            ok = false;
        }
        let max_vertices = net
            .vertex_ids()
            .filter(|v| net.vertex(*v).kind == VertexKind::Transition && vertex_plus[v.0] == 0)
            .count();
        let total = (interior + max_vertices) as isize;
        let lower = net.vertices().len() as isize - m as isize;
        let upper = m as isize - net.transition_vertices().count() as isize;
        if !(lower <= total && total <= upper) {
            ok = false;
        }
        if !ok {
            failures.push(name);
        }
    }
    criterion(
        5,
        "structural invariants of the classified field",
        failures.is_empty(),
        &format!("{} of {} cases pass ({:?})", cases - failures.len(), cases, failures),
    );
}

#[test]
fn criterion_06_conservation() {
    // per-vertex flux residual on the whole corpus
    let mut worst_flux = 0.0f64;
    for (_, net) in corpus() {
        let sol = solve(&net);
        let report = flux_report(&net, &sol.grid, &sol.classes, &sol.rolling, &sol.spec).unwrap();
        let scale = 1.0 + sol.rolling.max_abs();
        worst_flux = worst_flux.max(report.max_residual() / scale);
    }

    // global mass balance: indicator sources at O(h), smooth sources at
    // O(h^2)
    let balance = |net: &Network| -> (f64, f64, f64) {
        let sol = solve(net);
        let report = flux_report(net, &sol.grid, &sol.classes, &sol.rolling, &sol.spec).unwrap();
        let fine = source_mass_fine(net, 10_000).unwrap();
        let f = source_table(net, &sol.grid).unwrap();
        let f_max = f.iter().flatten().cloned().fold(0.0f64, f64::max);
        (
            (report.boundary_outflow - fine).abs(),
            sol.grid.max_step(),
            f_max,
        )
    };

    let mut indicator_ok = true;
    let mut indicator_detail = String::new();
    for gen in [Generator::Test2, Generator::Test3] {
        let net = test_network(gen);
        let (dev, h, f_max) = balance(&net);
        let bound = 2.0 * h * f_max * net.edges().len() as f64;
        indicator_ok &= dev <= bound;
        indicator_detail = format!("{:.2e} <= {:.2e}", dev, bound);
    }

    let smooth_net = Network::new(
        vec![
            Vertex { position: [0.0, 0.0], kind: VertexKind::Boundary },
            Vertex { position: [1.0, 0.0], kind: VertexKind::Boundary },
        ],
        vec![Edge {
            start: VertexId(0),
            end: VertexId(1),
            length: 1.0,
            source: Expr::parse("exp(t)").unwrap(),
            eta_inv: Expr::parse("1").unwrap(),
            n_nodes: 99,
        }],
    )
    .unwrap();
    let mut smooth_ok = true;
    let mut smooth_detail = String::new();
    for net in [test_network(Generator::Test1), smooth_net] {
        let (dev, h, _) = balance(&net);
        let bound = 10.0 * h * h;
        smooth_ok &= dev <= bound;
        smooth_detail = format!("{:.2e} <= {:.2e}", dev, bound);
    }

    let pass = worst_flux <= 1e-12 && indicator_ok && smooth_ok;
    criterion(
        6,
        "flux conservation and global mass balance",
        pass,
        &format!(
            "flux residual {:.2e}; indicator balance {}; smooth balance {}",
            worst_flux, indicator_detail, smooth_detail
        ),
    );
}

#[test]
fn criterion_07_weak_form_refinement() {
    let net = test_network(Generator::Test1);
    let mut report = CheckReport::default();
    check_weak_form(
        &mut report,
        &net,
        &TransmissionOverrides::default(),
        1.0 / 20.0,
        20,
        1.8,
        1e-12,
    )
    .unwrap();
    let entry = &report.entries[0];
    criterion(
        7,
        "weak-form residual drops by >= 1.8 per halving",
        entry.passed,
        &entry.detail,
    );
}

#[test]
fn criterion_08_uniqueness_verdicts() {
    let verdict = |gen: Generator| {
        let net = test_network(gen);
        let sol = solve(&net);
        (
            uniqueness_check(&net, &sol.grid, &sol.distance, &sol.classes).unwrap(),
            net,
            sol,
        )
    };
    let (u1, _, _) = verdict(Generator::Test1);
    let (u2, _, _) = verdict(Generator::Test2);
    let (u3, _, s3) = verdict(Generator::Test3);

    // on test3 the failing singular point is the middle of e9 and the
    // rolling layer vanishes along that whole edge
    let e9_uncovered = u3.singular_points.iter().any(|p| {
        matches!(p.site, SingularSite::Interior { edge, .. } if edge == EdgeId(8))
            && !p.source_covered
    });
    let e9_zero = s3.rolling.per_edge[8].iter().all(|&v| v.abs() <= 1e-12);

    let pass = u1.unique && !u2.unique && !u3.unique && e9_uncovered && e9_zero;
    criterion(
        8,
        "uniqueness verdicts for the three tests",
        pass,
        &format!(
            "test1 {}, test2 {}, test3 {} (e9 uncovered: {}, v=0 on e9: {})",
            u1.unique, u2.unique, u3.unique, e9_uncovered, e9_zero
        ),
    );
}

#[test]
fn criterion_09_file_format() {
    // read/write round trip on every generator output
    let mut round_trip_ok = true;
    for gen in [
        Generator::Test1,
        Generator::Test2,
        Generator::Test3,
        Generator::Star { arms: 5, lengths: vec![] },
        Generator::Star { arms: 3, lengths: vec![0.5, 1.0, 2.0] },
        Generator::Sierpinski { level: 1 },
        Generator::Sierpinski { level: 2 },
        Generator::Sierpinski { level: 3 },
    ] {
        let file = netfile::generate(gen).unwrap();
        let text = netfile::write_string(&file);
        let read1 = netfile::read_str(&text, &ReadOptions::default()).unwrap();
        let read2 =
            netfile::read_str(&netfile::write_string(&read1), &ReadOptions::default()).unwrap();
        let a = &read1.network;
        let b = &read2.network;
        let eq = a.vertices().len() == b.vertices().len()
            && a.edges().len() == b.edges().len()
            && a.vertices().iter().zip(b.vertices()).all(|(x, y)| {
                x.position == y.position && x.kind == y.kind
            })
            && a.edges().iter().zip(b.edges()).all(|(x, y)| {
                x.start == y.start
                    && x.end == y.end
                    && x.length == y.length
                    && x.n_nodes == y.n_nodes
                    && x.source == y.source
                    && x.eta_inv == y.eta_inv
            });
        round_trip_ok &= eq;
    }

    // documented exit codes on malformed fixtures
    let dir = std::env::temp_dir().join(format!("sandnet-acc9-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("noheader.net"), "#v 0 0 0 b\n").unwrap();
    std::fs::write(
        dir.join("badline.net"),
        "#SPNET\n#v 0 0 0 b\n#v 1 1 0 b\n#e 0 0 1 5 1\n",
    )
    .unwrap();
    let code = |args: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_sandnet"))
            .current_dir(&dir)
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    let header_code = code(&["solve", "noheader.net"]);
    let line_code = code(&["solve", "badline.net"]);
    let io_code = code(&["solve", "missing.net"]);

    let pass = round_trip_ok
        && header_code == Some(1)
        && line_code == Some(1)
        && io_code == Some(3);
    criterion(
        9,
        "file format round trip and exit codes",
        pass,
        &format!(
            "round trip {}, exit codes header={:?} line={:?} io={:?}",
            round_trip_ok, header_code, line_code, io_code
        ),
    );
}

#[test]
fn criterion_10_minimal_profile_properties() {
    let mut pass = true;
    let mut worst_bound = 0.0f64;
    let mut worst_pin = 0.0f64;
    for gen in [Generator::Test1, Generator::Test2, Generator::Test3] {
        let net = test_network(gen);
        let sol = solve(&net);
        let grid = &sol.grid;
        let prof = minimal_profile(&net, grid, &sol.distance).unwrap();
        for n in 0..grid.node_count() {
            let below = (-prof.values[n]).max(0.0);
            let above = (prof.values[n] - sol.distance.values[n]).max(0.0);
            worst_bound = worst_bound.max(below.max(above));
        }
        for e in net.edge_ids() {
            for (i, node) in grid.edge_nodes(e).iter().enumerate() {
                if sol.rolling.at(e, i) > 0.0 {
                    worst_pin = worst_pin
                        .max((prof.values[node.0] - sol.distance.values[node.0]).abs());
                }
            }
        }
    }
    pass &= worst_bound <= 1e-12 && worst_pin <= 1e-12;
    criterion(
        10,
        "minimal profile bounds and pinning on the rolling support",
        pass,
        &format!(
            "max bound violation {:.3e}, max |profile - d| on {{v > 0}} {:.3e}",
            worst_bound, worst_pin
        ),
    );
}
