//! Directed road networks with per-edge cost functions.

use crate::cost::CostFunction;
use crate::error::Error;

/// Where an edge came from. `Real` edges exist in the user-supplied
/// network; `Dummy` edges point at a rebalancing sink; `Auxiliary` edges
/// are bookkeeping introduced by graph expansions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeClass {
    Real,
    Dummy,
    Auxiliary,
}

#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub cost: CostFunction,
    pub class: EdgeClass,
}

impl Edge {
    pub fn real(tail: usize, head: usize, cost: CostFunction) -> Self {
        Edge {
            tail,
            head,
            cost,
            class: EdgeClass::Real,
        }
    }
}

/// One adjacency entry: the edge index and its head vertex, laid out
/// compactly so shortest-path scans stay in cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutEdge {
    pub edge: u32,
    pub head: u32,
}

/// An immutable directed multigraph. Edge order is fixed at construction
/// and every flow or weight vector in the crate indexes edges by it.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    vertex_count: usize,
    edges: Vec<Edge>,
    // Compressed adjacency: out-edges of vertex v are
    // adjacency[offsets[v]..offsets[v + 1]], ascending by edge index.
    offsets: Vec<u32>,
    adjacency: Vec<OutEdge>,
}

impl RoadNetwork {
    pub fn new(vertex_count: usize, edges: Vec<Edge>) -> Result<Self, Error> {
        for (idx, e) in edges.iter().enumerate() {
            if e.tail >= vertex_count || e.head >= vertex_count {
                return Err(Error::InvalidNetwork(format!(
                    "edge {idx} ({} -> {}) leaves the vertex range 0..{vertex_count}",
                    e.tail, e.head
                )));
            }
        }
        let mut degree = vec![0u32; vertex_count];
        for e in &edges {
            degree[e.tail] += 1;
        }
        let mut offsets = Vec::with_capacity(vertex_count + 1);
        let mut acc = 0u32;
        offsets.push(0);
        for d in &degree {
            acc += d;
            offsets.push(acc);
        }
        let mut cursor: Vec<u32> = offsets[..vertex_count].to_vec();
        let mut adjacency = vec![OutEdge { edge: 0, head: 0 }; edges.len()];
        for (idx, e) in edges.iter().enumerate() {
            adjacency[cursor[e.tail] as usize] = OutEdge {
                edge: idx as u32,
                head: e.head as u32,
            };
            cursor[e.tail] += 1;
        }
        Ok(RoadNetwork {
            vertex_count,
            edges,
            offsets,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    /// The edges leaving `vertex`, ascending by edge index.
    pub fn out_edges(&self, vertex: usize) -> &[OutEdge] {
        &self.adjacency[self.offsets[vertex] as usize..self.offsets[vertex + 1] as usize]
    }

    pub(crate) fn adjacency(&self) -> &[OutEdge] {
        &self.adjacency
    }

    pub(crate) fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    /// Which vertices can be reached from `origin` ignoring weights.
    /// Used by demand validation.
    pub fn reachable_from(&self, origin: usize) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![origin];
        seen[origin] = true;
        while let Some(v) = stack.pop() {
            for out in self.out_edges(v) {
                let head = out.head as usize;
                if !seen[head] {
                    seen[head] = true;
                    stack.push(head);
                }
            }
        }
        seen
    }
}

/// Background traffic occupying the network before any endogenous flow is
/// routed. Cost evaluation shifts by it; it is never part of the solution.
#[derive(Clone, Debug)]
pub enum ExogenousLoad {
    /// The same fraction of capacity on every real edge.
    Uniform(f64),
    /// Explicit per-edge flows, indexed in edge order.
    PerEdge(Vec<f64>),
}

impl ExogenousLoad {
    pub fn none() -> Self {
        ExogenousLoad::Uniform(0.0)
    }

    /// Expand to one shift per edge. Uniform load lands only on real
    /// edges with a capacity parameter; dummy and auxiliary edges model
    /// bookkeeping, not roads, and never carry background traffic.
    pub fn expand(&self, network: &RoadNetwork) -> Result<Vec<f64>, Error> {
        match self {
            ExogenousLoad::Uniform(gamma) => {
                if *gamma < 0.0 {
                    return Err(Error::InvalidNetwork(format!(
                        "exogenous fraction must be nonnegative, got {gamma}"
                    )));
                }
                Ok(network
                    .edges()
                    .iter()
                    .map(|e| match (e.class, e.cost.capacity()) {
                        (EdgeClass::Real, Some(kappa)) => gamma * kappa,
                        _ => 0.0,
                    })
                    .collect())
            }
            ExogenousLoad::PerEdge(values) => {
                if values.len() != network.edge_count() {
                    return Err(Error::InvalidNetwork(format!(
                        "per-edge exogenous load has {} entries for {} edges",
                        values.len(),
                        network.edge_count()
                    )));
                }
                if let Some(v) = values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidNetwork(format!(
                        "exogenous flow must be finite and nonnegative, got {v}"
                    )));
                }
                for (i, e) in network.edges().iter().enumerate() {
                    if e.class != EdgeClass::Real && values[i] != 0.0 {
                        return Err(Error::InvalidNetwork(format!(
                            "exogenous flow on non-real edge {i}"
                        )));
                    }
                }
                Ok(values.clone())
            }
        }
    }
}
