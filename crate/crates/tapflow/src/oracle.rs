//! Brute-force reference solver for tiny instances.
//!
//! Where the main solver works in edge space with Frank-Wolfe, this one
//! enumerates simple paths and minimizes the same convex objective over
//! path flows with projected gradient descent (plus a grid sweep when
//! only one or two degrees of freedom remain). The two parameterizations
//! share nothing but the cost functions, which is what makes agreement
//! between them meaningful. Strictly a validation tool: it must never
//! sit on a production solve path.

use crate::cost::CostTransform;
use crate::demand::{compute_imbalance, Request};
use crate::error::Error;
use crate::network::{ExogenousLoad, RoadNetwork};

/// Hard cap on the total number of enumerated paths per instance.
pub const PATH_CAP: usize = 10_000;

/// Cap on enumerated rebalancing transport plans.
pub const PLAN_CAP: usize = 50_000;

/// All simple paths from `origin` to `destination` with at most
/// `max_hops` edges, as edge-index lists in lexicographic edge order.
pub fn enumerate_simple_paths(
    network: &RoadNetwork,
    origin: usize,
    destination: usize,
    max_hops: usize,
) -> Result<Vec<Vec<usize>>, Error> {
    assert!(max_hops >= 1);
    let mut paths = Vec::new();
    let mut visited = vec![false; network.vertex_count()];
    let mut stack: Vec<usize> = Vec::new();
    visited[origin] = true;
    dfs(
        network,
        origin,
        destination,
        max_hops,
        &mut visited,
        &mut stack,
        &mut paths,
    )?;
    Ok(paths)
}

fn dfs(
    network: &RoadNetwork,
    vertex: usize,
    destination: usize,
    hops_left: usize,
    visited: &mut [bool],
    stack: &mut Vec<usize>,
    paths: &mut Vec<Vec<usize>>,
) -> Result<(), Error> {
    // Out-edges are stored in ascending edge order, so the DFS emits
    // paths lexicographically.
    for out in network.out_edges(vertex) {
        let head = out.head as usize;
        stack.push(out.edge as usize);
        if head == destination {
            if paths.len() >= PATH_CAP {
                return Err(Error::TooManyPaths {
                    count: paths.len() + 1,
                    cap: PATH_CAP,
                });
            }
            paths.push(stack.clone());
        } else if hops_left > 1 && !visited[head] {
            visited[head] = true;
            dfs(
                network,
                head,
                destination,
                hops_left - 1,
                visited,
                stack,
                paths,
            )?;
            visited[head] = false;
        }
        stack.pop();
    }
    Ok(())
}

/// A demand set together with every simple route each request may use.
pub struct PathFlowProblem<'a> {
    network: &'a RoadNetwork,
    shift: Vec<f64>,
    requests: Vec<Request>,
    paths: Vec<Vec<Vec<usize>>>,
}

impl<'a> PathFlowProblem<'a> {
    pub fn build(
        network: &'a RoadNetwork,
        requests: &[Request],
        exogenous: &ExogenousLoad,
        max_hops: usize,
    ) -> Result<Self, Error> {
        let shift = exogenous.expand(network)?;
        let mut paths = Vec::with_capacity(requests.len());
        let mut total = 0usize;
        for (m, req) in requests.iter().enumerate() {
            let found = enumerate_simple_paths(network, req.origin, req.destination, max_hops)?;
            if found.is_empty() {
                return Err(Error::Unreachable {
                    origin: req.origin,
                    destination: req.destination,
                    request: Some(m),
                });
            }
            total += found.len();
            if total > PATH_CAP {
                return Err(Error::TooManyPaths {
                    count: total,
                    cap: PATH_CAP,
                });
            }
            paths.push(found);
        }
        Ok(PathFlowProblem {
            network,
            shift,
            requests: requests.to_vec(),
            paths,
        })
    }

    pub fn path_count(&self) -> usize {
        self.paths.iter().map(Vec::len).sum()
    }

    fn edge_flows(&self, path_flows: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.network.edge_count()];
        for (m, flows) in path_flows.iter().enumerate() {
            for (p, f) in flows.iter().enumerate() {
                if *f != 0.0 {
                    for &e in &self.paths[m][p] {
                        x[e] += f;
                    }
                }
            }
        }
        x
    }

    fn objective_of_edges(&self, edges: &[f64], transform: CostTransform) -> f64 {
        self.network
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                edge.cost
                    .shifted(self.shift[e])
                    .beckmann(edges[e], transform)
            })
            .sum()
    }

    fn objective(&self, path_flows: &[Vec<f64>], transform: CostTransform) -> f64 {
        self.objective_of_edges(&self.edge_flows(path_flows), transform)
    }

    fn gradient(&self, path_flows: &[Vec<f64>], transform: CostTransform) -> Vec<Vec<f64>> {
        let x = self.edge_flows(path_flows);
        let weights: Vec<f64> = self
            .network
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let shifted = edge.cost.shifted(self.shift[e]);
                match transform {
                    CostTransform::Marginal => shifted.marginal(x[e]),
                    CostTransform::Raw => shifted.travel_time(x[e]),
                }
            })
            .collect();
        self.paths
            .iter()
            .map(|per_request| {
                per_request
                    .iter()
                    .map(|path| path.iter().map(|&e| weights[e]).sum())
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub path_flows: Vec<Vec<f64>>,
    pub edge_flows: Vec<f64>,
    pub objective: f64,
}

/// Minimize the assignment objective over per-request path flows.
///
/// Projected gradient descent runs until the gradient mapping at unit
/// reference step has norm at most 1e-8. Step sizes follow the
/// Barzilai-Borwein quotient (safeguarded by a sufficient-decrease
/// backtracking rule), which keeps the iteration count reasonable even
/// when path curvatures differ by orders of magnitude. When at most two
/// degrees of freedom remain, a zooming grid sweep down to resolution
/// `1e-4 * intensity` double-checks the result; the returned objective
/// never exceeds the projected-gradient point's.
pub fn oracle_solve(
    problem: &PathFlowProblem,
    transform: CostTransform,
) -> Result<OracleSolution, Error> {
    // Feasible start: split every request evenly over its paths.
    let mut flows: Vec<Vec<f64>> = problem
        .requests
        .iter()
        .zip(&problem.paths)
        .map(|(req, paths)| vec![req.intensity / paths.len() as f64; paths.len()])
        .collect();

    let flatten = |v: &[Vec<f64>]| -> Vec<f64> { v.iter().flatten().copied().collect() };
    let mut step = 1.0f64;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let max_iterations = 200_000;
    for _ in 0..max_iterations {
        let grad = problem.gradient(&flows, transform);

        // Stationarity via the gradient mapping at unit step.
        let mut mapped = flows.clone();
        step_and_project(&mut mapped, &grad, 1.0, &problem.requests);
        let gm_norm: f64 = flows
            .iter()
            .flatten()
            .zip(mapped.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if gm_norm <= 1e-8 {
            break;
        }

        let x_flat = flatten(&flows);
        let g_flat = flatten(&grad);
        if let Some((px, pg)) = &previous {
            let mut num = 0.0;
            let mut den = 0.0;
            for ((x, p), (g, q)) in x_flat.iter().zip(px).zip(g_flat.iter().zip(pg)) {
                let dx = x - p;
                num += dx * dx;
                den += dx * (g - q);
            }
            if den > 0.0 && num > 0.0 {
                step = (num / den).clamp(1e-14, 1e8);
            }
        }

        let current = problem.objective(&flows, transform);
        loop {
            let mut candidate = flows.clone();
            step_and_project(&mut candidate, &grad, step, &problem.requests);
            let moved: f64 = flows
                .iter()
                .flatten()
                .zip(candidate.iter().flatten())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let linear: f64 = grad
                .iter()
                .flatten()
                .zip(candidate.iter().flatten().zip(flows.iter().flatten()))
                .map(|(g, (c, f))| g * (c - f))
                .sum();
            if problem.objective(&candidate, transform) <= current + linear + moved / (2.0 * step)
                || step < 1e-16
            {
                flows = candidate;
                break;
            }
            step *= 0.5;
        }
        previous = Some((x_flat, g_flat));

        // Fully stalled in floating point; the mapping cannot improve.
        let stalled = flows
            .iter()
            .flatten()
            .zip(previous.as_ref().unwrap().0.iter())
            .all(|(a, b)| a == b);
        if stalled {
            break;
        }
    }

    if free_dimensions(problem) <= 2 {
        flows = grid_refine(problem, transform, flows);
    }

    let edge_flows = problem.edge_flows(&flows);
    let objective = problem.objective_of_edges(&edge_flows, transform);
    Ok(OracleSolution {
        path_flows: flows,
        edge_flows,
        objective,
    })
}

fn step_and_project(flows: &mut [Vec<f64>], grad: &[Vec<f64>], step: f64, requests: &[Request]) {
    for (m, per_request) in flows.iter_mut().enumerate() {
        for (f, g) in per_request.iter_mut().zip(&grad[m]) {
            *f -= step * g;
        }
        project_onto_scaled_simplex(per_request, requests[m].intensity);
    }
}

/// Euclidean projection onto `{ x >= 0, sum x = total }`.
pub fn project_onto_scaled_simplex(values: &mut [f64], total: f64) {
    debug_assert!(total >= 0.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut threshold = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - total) / (j + 1) as f64;
        if v - candidate > 0.0 {
            threshold = candidate;
        }
    }
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - threshold).max(0.0);
        sum += *v;
    }
    // Renormalize the residual rounding drift onto the largest entry.
    if sum > 0.0 && sum != total {
        let idx = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        values[idx] += total - sum;
        if values[idx] < 0.0 {
            values[idx] = 0.0;
        }
    } else if sum == 0.0 && !values.is_empty() {
        values[0] = total;
    }
}

fn free_dimensions(problem: &PathFlowProblem) -> usize {
    problem.paths.iter().map(|p| p.len() - 1).sum()
}

/// Zooming grid sweep over the one or two free path-flow coordinates.
/// Every stage shrinks the box around the incumbent until the lattice
/// step reaches `1e-4 * intensity` per coordinate.
fn grid_refine(
    problem: &PathFlowProblem,
    transform: CostTransform,
    incumbent: Vec<Vec<f64>>,
) -> Vec<Vec<f64>> {
    // Free coordinates: flows on paths 1.. of each multi-path request;
    // path 0 absorbs the remainder.
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (m, paths) in problem.paths.iter().enumerate() {
        for p in 1..paths.len() {
            coords.push((m, p));
        }
    }
    if coords.is_empty() {
        return incumbent;
    }

    let assemble = |free: &[f64]| -> Option<Vec<Vec<f64>>> {
        let mut flows: Vec<Vec<f64>> = problem
            .paths
            .iter()
            .enumerate()
            .map(|(m, p)| {
                let mut v = vec![0.0; p.len()];
                v[0] = problem.requests[m].intensity;
                v
            })
            .collect();
        for (&(m, p), &f) in coords.iter().zip(free) {
            flows[m][p] = f;
            flows[m][0] -= f;
        }
        if flows.iter().any(|per| per[0] < -1e-12) {
            return None;
        }
        for per in flows.iter_mut() {
            if per[0] < 0.0 {
                per[0] = 0.0;
            }
        }
        Some(flows)
    };

    let evaluate = |free: &[f64]| -> Option<f64> {
        assemble(free).map(|flows| problem.objective(&flows, transform))
    };

    let mut best_free: Vec<f64> = coords.iter().map(|&(m, p)| incumbent[m][p]).collect();
    let mut best_value = evaluate(&best_free).unwrap_or(f64::INFINITY);
    let full: Vec<(f64, f64)> = coords
        .iter()
        .map(|&(m, _)| (0.0, problem.requests[m].intensity))
        .collect();
    let final_steps: Vec<f64> = coords
        .iter()
        .map(|&(m, _)| 1e-4 * problem.requests[m].intensity)
        .collect();

    let mut boxes = full.clone();
    let points_per_dim = 64usize;
    loop {
        let steps: Vec<f64> = boxes
            .iter()
            .map(|(lo, hi)| (hi - lo) / points_per_dim as f64)
            .collect();
        let counts: Vec<usize> = vec![points_per_dim + 1; coords.len()];
        let mut index = vec![0usize; coords.len()];
        'sweep: loop {
            let candidate: Vec<f64> = index
                .iter()
                .zip(boxes.iter().zip(&steps))
                .map(|(&i, ((lo, _), s))| lo + i as f64 * s)
                .collect();
            if let Some(v) = evaluate(&candidate) {
                if v < best_value {
                    best_value = v;
                    best_free = candidate;
                }
            }
            for d in 0..coords.len() {
                index[d] += 1;
                if index[d] < counts[d] {
                    continue 'sweep;
                }
                index[d] = 0;
            }
            break;
        }
        if steps.iter().zip(&final_steps).all(|(s, f)| s <= f) {
            break;
        }
        // Zoom in around the incumbent by two lattice cells per side.
        boxes = boxes
            .iter()
            .zip(&steps)
            .zip(best_free.iter().zip(&full))
            .map(|(((_, _), s), (&b, &(flo, fhi)))| {
                ((b - 2.0 * s).max(flo), (b + 2.0 * s).min(fhi))
            })
            .collect();
    }

    match assemble(&best_free) {
        Some(flows) if best_value < f64::INFINITY => {
            let pg_value = problem.objective(&incumbent, transform);
            if best_value <= pg_value {
                flows
            } else {
                incumbent
            }
        }
        _ => incumbent,
    }
}

/// Best achievable total travel cost when every rebalancing request must
/// be fully served: enumerate how the excess supply can be matched to the
/// shortage demand on a coarse grid, solve each matching as a plain
/// assignment with the rebalancers as explicit extra requests, and keep
/// the cheapest.
pub fn oracle_rebalanced_amod(
    network: &RoadNetwork,
    requests: &[Request],
    exogenous: &ExogenousLoad,
    max_hops: usize,
) -> Result<f64, Error> {
    let profile = compute_imbalance(network.vertex_count(), requests)?;
    if profile.total_rebalancing == 0.0 {
        let problem = PathFlowProblem::build(network, requests, exogenous, max_hops)?;
        return Ok(oracle_solve(&problem, CostTransform::Marginal)?.objective);
    }

    let excess = &profile.excess_vertices;
    let shortage = &profile.shortage_vertices;
    if excess.len() > 4 || shortage.len() > 4 {
        return Err(Error::TooManyPaths {
            count: excess.len().max(shortage.len()),
            cap: 4,
        });
    }

    let grid = 0.25
        * requests
            .iter()
            .map(|r| r.intensity)
            .fold(f64::INFINITY, f64::min);
    let to_units = |v: f64| -> Result<u64, Error> {
        let units = v / grid;
        if (units - units.round()).abs() > 1e-9 * units.max(1.0) {
            return Err(Error::InvalidNetwork(format!(
                "imbalance {v} is not representable on the matching grid {grid}"
            )));
        }
        Ok(units.round() as u64)
    };
    let supply: Vec<u64> = excess
        .iter()
        .map(|&i| to_units(profile.r[i]))
        .collect::<Result<_, _>>()?;
    let demand: Vec<u64> = shortage
        .iter()
        .map(|&i| to_units(-profile.r[i]))
        .collect::<Result<_, _>>()?;

    let mut plans = Vec::new();
    let mut cells = vec![0u64; excess.len() * shortage.len()];
    enumerate_plans(&supply, &demand, 0, &mut cells, &mut plans)?;

    let mut best = f64::INFINITY;
    for plan in &plans {
        let mut extended = requests.to_vec();
        for (i, &from) in excess.iter().enumerate() {
            for (j, &to) in shortage.iter().enumerate() {
                let units = plan[i * shortage.len() + j];
                if units > 0 {
                    extended.push(Request::new(units as f64 * grid, from, to));
                }
            }
        }
        let problem = PathFlowProblem::build(network, &extended, exogenous, max_hops)?;
        let solution = oracle_solve(&problem, CostTransform::Marginal)?;
        if solution.objective < best {
            best = solution.objective;
        }
    }
    Ok(best)
}

/// Depth-first enumeration of nonnegative integer matrices with the given
/// row and column sums, row by row.
fn enumerate_plans(
    supply: &[u64],
    demand: &[u64],
    row: usize,
    cells: &mut Vec<u64>,
    plans: &mut Vec<Vec<u64>>,
) -> Result<(), Error> {
    let cols = demand.len();
    if row == supply.len() {
        // All supply distributed; column sums must be exhausted.
        let ok = (0..cols).all(|j| {
            let used: u64 = (0..supply.len()).map(|i| cells[i * cols + j]).sum();
            used == demand[j]
        });
        if ok {
            if plans.len() >= PLAN_CAP {
                return Err(Error::TooManyPaths {
                    count: plans.len() + 1,
                    cap: PLAN_CAP,
                });
            }
            plans.push(cells.clone());
        }
        return Ok(());
    }

    fn fill_row(
        supply: &[u64],
        demand: &[u64],
        row: usize,
        col: usize,
        remaining: u64,
        cells: &mut Vec<u64>,
        plans: &mut Vec<Vec<u64>>,
    ) -> Result<(), Error> {
        let cols = demand.len();
        if col == cols {
            if remaining == 0 {
                return enumerate_plans(supply, demand, row + 1, cells, plans);
            }
            return Ok(());
        }
        let col_used: u64 = (0..row).map(|i| cells[i * cols + col]).sum();
        let col_room = demand[col].saturating_sub(col_used);
        let max_here = remaining.min(col_room);
        for v in 0..=max_here {
            cells[row * cols + col] = v;
            fill_row(supply, demand, row, col + 1, remaining - v, cells, plans)?;
        }
        cells[row * cols + col] = 0;
        Ok(())
    }

    fill_row(supply, demand, row, 0, supply[row], cells, plans)
}
