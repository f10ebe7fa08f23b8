//! The native text formats: edge lists and trip tables.
//!
//! Both are whitespace-separated columns, one record per line, with `#`
//! starting a comment and blank lines ignored. Edges: `tail head
//! capacity free_flow_time`. Trips: `origin destination demand`.

use std::fmt;

use tapflow::cost::{piecewise_affine_from_bpr, CostFunction, DEFAULT_LINEARIZE_AT};
use tapflow::demand::Request;
use tapflow::network::{Edge, RoadNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at line {}", self.message, self.line)
    }
}

impl std::error::Error for ParseError {}

/// One parsed edge record, before any cost model is attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParsedEdge {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
    pub free_flow: f64,
}

fn clean(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
    .trim()
}

/// Parse an edge list. The vertex count is one past the largest id seen.
pub fn parse_edges(text: &str) -> Result<(usize, Vec<ParsedEdge>), ParseError> {
    let mut edges = Vec::new();
    let mut vertex_count = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = clean(raw);
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ParseError {
                line,
                message: format!(
                    "expected 4 fields (tail head capacity free_flow), got {}",
                    fields.len()
                ),
            });
        }
        let tail: usize = fields[0].parse().map_err(|_| ParseError {
            line,
            message: format!("bad tail vertex id {:?}", fields[0]),
        })?;
        let head: usize = fields[1].parse().map_err(|_| ParseError {
            line,
            message: format!("bad head vertex id {:?}", fields[1]),
        })?;
        let capacity: f64 = fields[2].parse().map_err(|_| ParseError {
            line,
            message: format!("bad capacity {:?}", fields[2]),
        })?;
        let free_flow: f64 = fields[3].parse().map_err(|_| ParseError {
            line,
            message: format!("bad free-flow time {:?}", fields[3]),
        })?;
        if !capacity.is_finite() || capacity <= 0.0 {
            return Err(ParseError {
                line,
                message: "nonpositive capacity".into(),
            });
        }
        if !free_flow.is_finite() || free_flow <= 0.0 {
            return Err(ParseError {
                line,
                message: "nonpositive free-flow time".into(),
            });
        }
        vertex_count = vertex_count.max(tail + 1).max(head + 1);
        edges.push(ParsedEdge {
            tail,
            head,
            capacity,
            free_flow,
        });
    }
    Ok((vertex_count, edges))
}

/// Parse a trip table into requests.
pub fn parse_trips(text: &str) -> Result<Vec<Request>, ParseError> {
    let mut requests = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = clean(raw);
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError {
                line,
                message: format!(
                    "expected 3 fields (origin destination demand), got {}",
                    fields.len()
                ),
            });
        }
        let origin: usize = fields[0].parse().map_err(|_| ParseError {
            line,
            message: format!("bad origin vertex id {:?}", fields[0]),
        })?;
        let destination: usize = fields[1].parse().map_err(|_| ParseError {
            line,
            message: format!("bad destination vertex id {:?}", fields[1]),
        })?;
        let demand: f64 = fields[2].parse().map_err(|_| ParseError {
            line,
            message: format!("bad demand {:?}", fields[2]),
        })?;
        if !demand.is_finite() || demand <= 0.0 {
            return Err(ParseError {
                line,
                message: "nonpositive demand".into(),
            });
        }
        if origin == destination {
            return Err(ParseError {
                line,
                message: "origin equals destination".into(),
            });
        }
        requests.push(Request::new(demand, origin, destination));
    }
    Ok(requests)
}

/// Render an edge list back to text. Seventeen significant digits keep
/// the decimal rendering exact for 64-bit floats, so parse(emit(x))
/// reproduces x bit for bit.
pub fn emit_edges(edges: &[ParsedEdge]) -> String {
    let mut out = String::new();
    for e in edges {
        out.push_str(&format!(
            "{} {} {:.16e} {:.16e}\n",
            e.tail, e.head, e.capacity, e.free_flow
        ));
    }
    out
}

/// Which travel-time curve the routing step sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostModel {
    /// The exact BPR curve.
    Bpr,
    /// BPR continued linearly above five times capacity, the overflow
    /// guard used for objective evaluation on large instances.
    BprLinearized,
    /// The two-piece affine surrogate.
    PiecewiseAffine,
    /// Congestion-unaware constant free-flow times.
    FreeFlow,
}

impl CostModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CostModel::Bpr => "bpr",
            CostModel::BprLinearized => "bpr-linearized",
            CostModel::PiecewiseAffine => "piecewise-affine",
            CostModel::FreeFlow => "free-flow",
        }
    }
}

/// Attach a cost model to parsed edges.
pub fn build_network(
    vertex_count: usize,
    edges: &[ParsedEdge],
    model: CostModel,
    alpha: f64,
    beta: u32,
) -> RoadNetwork {
    let edges = edges
        .iter()
        .map(|e| {
            let cost = match model {
                CostModel::Bpr => CostFunction::Bpr {
                    free_flow: e.free_flow,
                    capacity: e.capacity,
                    alpha,
                    beta,
                    linearize_at: None,
                },
                CostModel::BprLinearized => CostFunction::Bpr {
                    free_flow: e.free_flow,
                    capacity: e.capacity,
                    alpha,
                    beta,
                    linearize_at: Some(DEFAULT_LINEARIZE_AT),
                },
                CostModel::PiecewiseAffine => {
                    piecewise_affine_from_bpr(e.free_flow, e.capacity, alpha, beta)
                }
                CostModel::FreeFlow => CostFunction::Constant { value: e.free_flow },
            };
            Edge::real(e.tail, e.head, cost)
        })
        .collect();
    RoadNetwork::new(vertex_count, edges).expect("parsed endpoints are in range by construction")
}
