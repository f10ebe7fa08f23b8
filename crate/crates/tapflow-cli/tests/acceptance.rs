//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with the measured numbers (visible with `--nocapture`).
//!
//! Run with `cargo test -p tapflow-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use tapflow::amod::solve_amod;
use tapflow::cost::{CostFunction, CostTransform};
use tapflow::demand::Request;
use tapflow::error::Error;
use tapflow::fixtures::{
    congested_instance, construction_instance, grid_network, ring20_instance, ring_instance,
    star_instance, synthetic_requests, tap_suite, two_vertex_cycle,
};
use tapflow::loss::{execute_cost_bound, solve_amod_loss};
use tapflow::network::{Edge, EdgeClass, ExogenousLoad, RoadNetwork};
use tapflow::oracle::{oracle_rebalanced_amod, oracle_solve, PathFlowProblem};
use tapflow::pathfinding::{all_or_nothing, EdgeWeights};
use tapflow::solver::{
    frank_wolfe, frank_wolfe_with, AssignmentProblem, FlowVector, FwDriver, IterationRecord,
    Objective, SolverConfig, Termination,
};

fn config(max_iterations: usize, rel_gap: f64) -> SolverConfig {
    SolverConfig {
        max_iterations,
        rel_gap_tolerance: rel_gap,
        line_search_iterations: 64,
        trace_enabled: true,
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Criterion 1: on every bundled tiny instance, the Frank-Wolfe objective
/// matches the independent path-space oracle within 0.5%, under both
/// objective transforms, with each solve finishing inside a second.
#[test]
fn criterion_01_oracle_equivalence_tap() {
    let suite = tap_suite();
    assert_eq!(suite.len(), 10);
    let mut worst: f64 = 0.0;
    for instance in &suite {
        for objective in [Objective::SystemOptimum, Objective::UserEquilibrium] {
            let problem = AssignmentProblem::new(
                &instance.network,
                &instance.requests,
                &ExogenousLoad::none(),
                objective,
            )
            .unwrap();
            let started = Instant::now();
            let result = frank_wolfe(&problem, &config(1000, 1e-4)).unwrap();
            let elapsed = started.elapsed();
            assert!(
                elapsed < Duration::from_secs(1),
                "{}: solve took {elapsed:?}",
                instance.name
            );
            let fw_objective = result.trace.last().unwrap().objective;

            let paths = PathFlowProblem::build(
                &instance.network,
                &instance.requests,
                &ExogenousLoad::none(),
                instance.max_hops,
            )
            .unwrap();
            let reference = oracle_solve(&paths, objective.transform()).unwrap();
            let diff = rel_diff(fw_objective, reference.objective);
            assert!(
                diff <= 0.005,
                "{} ({objective:?}): fw {fw_objective} vs oracle {} (diff {diff:.2e})",
                instance.name,
                reference.objective
            );
            worst = worst.max(diff);
        }
    }
    println!("criterion 1: PASS - 10 instances x 2 transforms, worst objective diff {worst:.2e}");
}

/// Criterion 2: the constrained minimizer of the drain-edge cost sits at
/// the capacity vector, for 50 random configurations, within 1e-6 R.
#[test]
fn criterion_02_dummy_cost_minimizer_is_the_capacity_vector() {
    let started = Instant::now();
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };

    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let count = 2 + case % 5;
        let dummy_time = 3.0 + 189.0 * next();
        let capacities: Vec<f64> = (0..count).map(|_| 0.2 + 1.8 * next()).collect();
        let total: f64 = capacities.iter().sum();

        let edges = capacities
            .iter()
            .map(|&kappa| Edge {
                tail: 0,
                head: 1,
                cost: CostFunction::Bpr {
                    free_flow: dummy_time,
                    capacity: kappa,
                    alpha: 0.15,
                    beta: 4,
                    linearize_at: None,
                },
                class: EdgeClass::Dummy,
            })
            .collect();
        let net = RoadNetwork::new(2, edges).unwrap();
        let reqs = [Request::new(total, 0, 1)];
        let problem = PathFlowProblem::build(&net, &reqs, &ExogenousLoad::none(), 1).unwrap();
        let solution = oracle_solve(&problem, CostTransform::Marginal).unwrap();

        for (x, kappa) in solution.edge_flows.iter().zip(&capacities) {
            let err = (x - kappa).abs();
            assert!(
                err <= 1e-6 * total,
                "case {case}: flow {x} vs capacity {kappa} (L = {dummy_time})"
            );
            worst = worst.max(err / total);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("criterion 2: PASS - 50 configurations in {elapsed:?}, worst deviation {worst:.2e} R");
}

/// Criterion 3: on the 20-vertex unbalanced fixture the unfulfilled
/// fraction is nonincreasing along the dummy-time ladder and small at the
/// top.
#[test]
fn criterion_03_unfulfilled_fraction_shrinks_with_dummy_time() {
    let (net, requests) = ring20_instance();
    let solver = config(4000, 1e-5);
    let ladder = [3.0, 12.0, 48.0, 192.0];
    let mut deltas = Vec::new();
    for &l in &ladder {
        let sol = solve_amod(&net, &requests, &ExogenousLoad::none(), l, &solver).unwrap();
        deltas.push(sol.delta);
    }
    for pair in deltas.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-3,
            "delta ladder is not nonincreasing: {deltas:?}"
        );
    }
    assert!(
        deltas[3] <= 0.02,
        "delta at the top of the ladder: {deltas:?}"
    );
    println!(
        "criterion 3: PASS - deltas over L {ladder:?}: {:?}",
        deltas
            .iter()
            .map(|d| (d * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
}

/// Criterion 4: the converged reduced solution costs no more (plus 0.5%)
/// than the best fully-rebalanced routing found by brute force.
#[test]
fn criterion_04_routing_cost_beats_full_rebalancing() {
    let instances: Vec<(&str, RoadNetwork, Vec<Request>, usize)> = vec![
        (
            "two-vertex-cycle",
            two_vertex_cycle().0,
            two_vertex_cycle().1,
            3,
        ),
        ("star", star_instance().0, star_instance().1, 3),
        (
            "construction",
            construction_instance().0,
            construction_instance().1,
            5,
        ),
        ("ring", ring_instance().0, ring_instance().1, 10),
    ];
    let solver = config(6000, 1e-6);
    for (name, net, requests, max_hops) in &instances {
        let sol = solve_amod(net, requests, &ExogenousLoad::none(), 192.0, &solver).unwrap();
        let best_rebalanced =
            oracle_rebalanced_amod(net, requests, &ExogenousLoad::none(), *max_hops).unwrap();
        assert!(
            sol.real_cost <= best_rebalanced * 1.005,
            "{name}: reduced {} vs fully rebalanced {best_rebalanced}",
            sol.real_cost
        );
        println!(
            "criterion 4: {name}: reduced {:.6} <= oracle {:.6} + 0.5%",
            sol.real_cost, best_rebalanced
        );
    }
    println!("criterion 4: PASS - {} instances", instances.len());
}

struct InvariantChecker<'a> {
    network: &'a RoadNetwork,
    requests: &'a [Request],
    last_objective: Option<f64>,
    iterates_seen: usize,
}

impl InvariantChecker<'_> {
    fn check(&mut self, flows: &FlowVector, record: Option<&IterationRecord>) {
        let total_demand: f64 = self.requests.iter().map(|r| r.intensity).sum();
        assert!(flows.as_slice().iter().all(|x| *x >= 0.0), "negative flow");
        let mut divergence = vec![0.0; self.network.vertex_count()];
        for (e, edge) in self.network.edges().iter().enumerate() {
            divergence[edge.tail] += flows.as_slice()[e];
            divergence[edge.head] -= flows.as_slice()[e];
        }
        let mut expected = vec![0.0; self.network.vertex_count()];
        for r in self.requests {
            expected[r.origin] += r.intensity;
            expected[r.destination] -= r.intensity;
        }
        for v in 0..self.network.vertex_count() {
            assert!(
                (divergence[v] - expected[v]).abs() <= 1e-9 * total_demand.max(1.0),
                "conservation violated at vertex {v}"
            );
        }
        if let Some(record) = record {
            assert!(record.relative_gap >= 0.0);
            if let Some(prev) = self.last_objective {
                assert!(
                    record.objective <= prev + 1e-9 * prev.abs(),
                    "objective rose from {prev} to {}",
                    record.objective
                );
            }
            self.last_objective = Some(record.objective);
        }
        self.iterates_seen += 1;
    }
}

struct CheckedAon<'a> {
    checker: InvariantChecker<'a>,
}

impl FwDriver for CheckedAon<'_> {
    fn direction(&mut self, weights: &EdgeWeights) -> Result<FlowVector, Error> {
        all_or_nothing(self.checker.network, weights, self.checker.requests)
    }
    fn initialized(&mut self, flows: &FlowVector) {
        self.checker.check(flows, None);
    }
    fn iterated(&mut self, record: &IterationRecord, flows: &FlowVector) {
        self.checker.check(flows, Some(record));
    }
}

/// Criterion 5: every iterate of every fixture solve conserves flow to
/// 1e-9 of total demand, stays nonnegative, descends monotonically, and
/// terminates either under the gap tolerance or at the iteration cap.
#[test]
fn criterion_05_feasibility_and_descent_invariants() {
    let mut solves = 0;
    let mut iterates = 0;

    // Plain assignment over the whole tiny suite, both transforms.
    for instance in tap_suite() {
        for objective in [Objective::SystemOptimum, Objective::UserEquilibrium] {
            let problem = AssignmentProblem::new(
                &instance.network,
                &instance.requests,
                &ExogenousLoad::none(),
                objective,
            )
            .unwrap();
            let mut driver = CheckedAon {
                checker: InvariantChecker {
                    network: &instance.network,
                    requests: &instance.requests,
                    last_objective: None,
                    iterates_seen: 0,
                },
            };
            let result =
                frank_wolfe_with(&problem, &config(1000, 1e-4), None, &mut driver).unwrap();
            match result.termination {
                Termination::GapReached => {
                    assert!(result.trace.last().unwrap().relative_gap <= 1e-4)
                }
                Termination::MaxIterations => assert_eq!(result.iterations, 1000),
            }
            solves += 1;
            iterates += driver.checker.iterates_seen;
        }
    }

    // The rebalancing reduction, checked over the expanded instance.
    for (net, requests) in [construction_instance(), ring_instance()] {
        let reduced = tapflow::amod::build_reduction(&net, &requests, 96.0).unwrap();
        let problem = AssignmentProblem::new(
            &reduced.expanded,
            &reduced.extended_requests,
            &ExogenousLoad::none(),
            Objective::SystemOptimum,
        )
        .unwrap();
        let mut driver = CheckedAon {
            checker: InvariantChecker {
                network: &reduced.expanded,
                requests: &reduced.extended_requests,
                last_objective: None,
                iterates_seen: 0,
            },
        };
        let result = frank_wolfe_with(&problem, &config(2000, 1e-5), None, &mut driver).unwrap();
        match result.termination {
            Termination::GapReached => {
                assert!(result.trace.last().unwrap().relative_gap <= 1e-5)
            }
            Termination::MaxIterations => assert_eq!(result.iterations, 2000),
        }
        solves += 1;
        iterates += driver.checker.iterates_seen;
    }

    println!("criterion 5: PASS - {solves} solves, {iterates} iterates checked");
}

/// Criterion 6: the comparison protocol on the congested fixture at 0.8
/// background load: the exact model re-prices to 1.00 +- 0.01 and the
/// surrogates order as free-flow >= piecewise-affine >= exact >= 1.
#[test]
fn criterion_06_surrogate_comparison_protocol() {
    let (net, requests) = congested_instance();
    let exo = ExogenousLoad::Uniform(0.8);
    let solver = config(3000, 1e-6);
    let l = 96.0;

    // Route under each model over the same parsed instance.
    let route = |model: tapflow_cli::io::CostModel| -> FlowVector {
        let surrogate = rebuild_with_model(&net, model);
        solve_amod(&surrogate, &requests, &exo, l, &solver)
            .unwrap()
            .real_flows
    };
    let reprice =
        |flows: &FlowVector| -> f64 { tapflow::solver::exact_cost(&net, &exo, flows).unwrap() };

    let exact_cost_value = reprice(&route(tapflow_cli::io::CostModel::Bpr));
    let pwa_cost = reprice(&route(tapflow_cli::io::CostModel::PiecewiseAffine));
    let ff_cost = reprice(&route(tapflow_cli::io::CostModel::FreeFlow));

    let r_exact = exact_cost_value / exact_cost_value;
    let r_pwa = pwa_cost / exact_cost_value;
    let r_ff = ff_cost / exact_cost_value;

    assert!((r_exact - 1.0).abs() <= 0.01);
    assert!(r_ff >= 1.0 && r_pwa >= 1.0);
    assert!(r_ff >= r_pwa && r_pwa >= r_exact);
    println!(
        "criterion 6: PASS - ratios exact {r_exact:.4}, piecewise-affine {r_pwa:.4}, free-flow {r_ff:.4}"
    );
}

fn rebuild_with_model(net: &RoadNetwork, model: tapflow_cli::io::CostModel) -> RoadNetwork {
    let parsed: Vec<tapflow_cli::io::ParsedEdge> = net
        .edges()
        .iter()
        .map(|e| match e.cost {
            CostFunction::Bpr {
                free_flow,
                capacity,
                ..
            } => tapflow_cli::io::ParsedEdge {
                tail: e.tail,
                head: e.head,
                capacity,
                free_flow,
            },
            _ => panic!("fixture is BPR"),
        })
        .collect();
    tapflow_cli::io::build_network(net.vertex_count(), &parsed, model, 0.15, 4)
}

/// Criterion 7: with the penalty above the execute-cost bound the loss
/// solver reproduces the plain rebalancing solution and loses nothing;
/// with a zero penalty on a positive-cost fixture it drops everything.
#[test]
fn criterion_07_loss_degeneration() {
    let solver = config(2000, 1e-6);
    let l = 96.0;
    for (name, (net, requests)) in [("cycle", two_vertex_cycle()), ("star", star_instance())] {
        let plain = solve_amod(&net, &requests, &ExogenousLoad::none(), l, &solver).unwrap();
        let bound = execute_cost_bound(&net, l);
        let lossy = solve_amod_loss(
            &net,
            &requests,
            &ExogenousLoad::none(),
            bound,
            l,
            None,
            &solver,
        )
        .unwrap();
        let total: f64 = requests.iter().map(|r| r.intensity).sum();
        let total_loss: f64 = lossy.losses.iter().sum();
        assert!(total_loss <= 1e-6 * total, "{name}: lost {total_loss}");
        assert!(
            rel_diff(lossy.real_cost, plain.real_cost) <= 0.01,
            "{name}: loss {} vs plain {}",
            lossy.real_cost,
            plain.real_cost
        );
        println!(
            "criterion 7: {name}: penalty {bound:.1} -> cost diff {:.2e}, loss {total_loss:.2e}",
            rel_diff(lossy.real_cost, plain.real_cost)
        );
    }

    let (net, requests) = star_instance();
    let free = solve_amod_loss(
        &net,
        &requests,
        &ExogenousLoad::none(),
        0.0,
        l,
        None,
        &solver,
    )
    .unwrap();
    let total: f64 = requests.iter().map(|r| r.intensity).sum();
    let lost: f64 = free.losses.iter().sum();
    assert!(
        lost >= 0.99 * total,
        "zero penalty lost only {lost} of {total}"
    );
    println!("criterion 7: PASS - zero penalty drops {lost} of {total}");
}

/// Criterion 8: solution JSON is bit-identical across worker counts.
#[test]
fn criterion_08_thread_count_determinism() {
    let fixture_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out_dir = tempfile::tempdir().unwrap();

    let cases: Vec<(&str, tapflow_cli::Mode, &str, &str, Option<f64>)> = vec![
        (
            "tap",
            tapflow_cli::Mode::Tap,
            "construction_edges.txt",
            "construction_trips.txt",
            None,
        ),
        (
            "amod",
            tapflow_cli::Mode::Amod,
            "construction_edges.txt",
            "construction_trips.txt",
            None,
        ),
        (
            "amod-loss",
            tapflow_cli::Mode::AmodLoss,
            "construction_edges.txt",
            "construction_trips.txt",
            Some(10_000.0),
        ),
    ];
    for (label, mode, edges, trips, loss_cost) in cases {
        let run_with = |threads: usize| -> Vec<u8> {
            let out: PathBuf = out_dir.path().join(format!("{label}-{threads}.json"));
            let config = tapflow_cli::RunConfig {
                mode,
                edges_path: fixture_dir.join(edges),
                trips_path: fixture_dir.join(trips),
                cost_model: tapflow_cli::io::CostModel::Bpr,
                objective: Objective::SystemOptimum,
                alpha: 0.15,
                beta: 4,
                gamma_exo: vec![0.8],
                dummy_time: match mode {
                    tapflow_cli::Mode::Tap => None,
                    _ => Some(96.0),
                },
                target_delta: None,
                loss_cost,
                epsilon: None,
                max_iters: 300,
                rel_gap: 1e-5,
                threads: Some(threads),
                out_path: Some(out.clone()),
                trace_path: None,
                compare: false,
            };
            tapflow_cli::run(&config).unwrap();
            fs::read(&out).unwrap()
        };
        let one = run_with(1);
        let four = run_with(4);
        assert_eq!(one, four, "{label}: JSON differs between 1 and 4 threads");
        println!("criterion 8: {label}: {} bytes bit-identical", one.len());
    }
    println!("criterion 8: PASS");
}

/// Criterion 9: a 2500-vertex grid with 10k requests runs 100 iterations
/// inside a minute, and per-iteration time grows at most 2.5x when the
/// demand doubles.
#[test]
fn criterion_09_scalability_smoke() {
    let net = grid_network(50, 50, 30.0);
    let requests = synthetic_requests(net.vertex_count(), 10_000, 42);

    let started = Instant::now();
    let sol = solve_amod(
        &net,
        &requests,
        &ExogenousLoad::Uniform(0.8),
        96.0,
        &config(100, 0.0),
    )
    .unwrap();
    let full = started.elapsed();
    assert_eq!(sol.iterations, 100);
    assert!(
        full < Duration::from_secs(60),
        "100 iterations took {full:?}"
    );

    // Per-iteration scaling when the request count doubles.
    let short = config(12, 0.0);
    let t10 = {
        let s = Instant::now();
        solve_amod(&net, &requests, &ExogenousLoad::Uniform(0.8), 96.0, &short).unwrap();
        s.elapsed().as_secs_f64() / 12.0
    };
    let doubled = synthetic_requests(net.vertex_count(), 20_000, 43);
    let t20 = {
        let s = Instant::now();
        solve_amod(&net, &doubled, &ExogenousLoad::Uniform(0.8), 96.0, &short).unwrap();
        s.elapsed().as_secs_f64() / 12.0
    };
    let factor = t20 / t10;
    assert!(
        factor <= 2.5,
        "per-iteration time factor {factor:.2} (t10 {t10:.3}s, t20 {t20:.3}s)"
    );
    println!(
        "criterion 9: PASS - 100 iterations in {full:?}; per-iteration {t10:.3}s -> {t20:.3}s (factor {factor:.2})"
    );
}
