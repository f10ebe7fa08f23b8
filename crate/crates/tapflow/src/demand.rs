//! Travel demand and the per-vertex rebalancing imbalance it induces.

use std::fmt;

use crate::error::Error;
use crate::network::RoadNetwork;

/// One origin-destination demand stream: `intensity` vehicles per unit
/// time wanting to travel from `origin` to `destination`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Request {
    pub intensity: f64,
    pub origin: usize,
    pub destination: usize,
}

impl Request {
    pub fn new(intensity: f64, origin: usize, destination: usize) -> Self {
        Request {
            intensity,
            origin,
            destination,
        }
    }
}

/// Net vehicle surplus per vertex induced by a demand set.
///
/// `r[i] > 0` means more trips end at `i` than start there (excess
/// vehicles accumulate); `r[i] < 0` means the vertex runs dry and must be
/// resupplied. `total_rebalancing` is the common value of the positive
/// and negative mass.
#[derive(Clone, Debug)]
pub struct ImbalanceProfile {
    pub r: Vec<f64>,
    pub total_rebalancing: f64,
    pub shortage_vertices: Vec<usize>,
    pub excess_vertices: Vec<usize>,
}

/// Compute the per-vertex imbalance `r_i = sum_m (1{d_m=i} - 1{o_m=i}) * intensity_m`
/// and the total rebalancing volume.
pub fn compute_imbalance(
    vertex_count: usize,
    requests: &[Request],
) -> Result<ImbalanceProfile, Error> {
    let mut r = vec![0.0; vertex_count];
    for (m, req) in requests.iter().enumerate() {
        if req.origin >= vertex_count || req.destination >= vertex_count {
            return Err(Error::InvalidRequest {
                request: m,
                reason: format!(
                    "endpoint out of range (origin {}, destination {}, {} vertices)",
                    req.origin, req.destination, vertex_count
                ),
            });
        }
        if !req.intensity.is_finite() || req.intensity <= 0.0 {
            return Err(Error::InvalidRequest {
                request: m,
                reason: format!("nonpositive intensity {}", req.intensity),
            });
        }
        r[req.destination] += req.intensity;
        r[req.origin] -= req.intensity;
    }
    let mut excess_vertices = Vec::new();
    let mut shortage_vertices = Vec::new();
    let mut total = 0.0;
    for (i, &ri) in r.iter().enumerate() {
        if ri > 0.0 {
            excess_vertices.push(i);
            total += ri;
        } else if ri < 0.0 {
            shortage_vertices.push(i);
        }
    }
    Ok(ImbalanceProfile {
        r,
        total_rebalancing: total,
        shortage_vertices,
        excess_vertices,
    })
}

/// A single defect found while validating demand against a network.
#[derive(Clone, Debug, PartialEq)]
pub enum DemandIssue {
    BadEndpoint {
        request: usize,
        vertex: usize,
    },
    NonpositiveIntensity {
        request: usize,
        intensity: f64,
    },
    OriginEqualsDestination {
        request: usize,
        vertex: usize,
    },
    Unreachable {
        request: usize,
        origin: usize,
        destination: usize,
    },
}

impl fmt::Display for DemandIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemandIssue::BadEndpoint { request, vertex } => {
                write!(
                    f,
                    "request {request}: vertex {vertex} is not in the network"
                )
            }
            DemandIssue::NonpositiveIntensity { request, intensity } => {
                write!(f, "request {request}: nonpositive intensity {intensity}")
            }
            DemandIssue::OriginEqualsDestination { request, vertex } => {
                write!(f, "request {request}: origin equals destination ({vertex})")
            }
            DemandIssue::Unreachable {
                request,
                origin,
                destination,
            } => write!(
                f,
                "request {request}: destination {destination} unreachable from {origin}"
            ),
        }
    }
}

/// Check every request and report all violations instead of failing on
/// the first one. An empty list means the demand is usable.
pub fn validate_demand(network: &RoadNetwork, requests: &[Request]) -> Vec<DemandIssue> {
    let mut issues = Vec::new();
    let n = network.vertex_count();
    // One reachability sweep per distinct origin that survives the basic
    // checks.
    let mut reachable_cache: Vec<Option<Vec<bool>>> = vec![None; n];
    for (m, req) in requests.iter().enumerate() {
        let mut endpoints_ok = true;
        for v in [req.origin, req.destination] {
            if v >= n {
                issues.push(DemandIssue::BadEndpoint {
                    request: m,
                    vertex: v,
                });
                endpoints_ok = false;
            }
        }
        if !req.intensity.is_finite() || req.intensity <= 0.0 {
            issues.push(DemandIssue::NonpositiveIntensity {
                request: m,
                intensity: req.intensity,
            });
        }
        if !endpoints_ok {
            continue;
        }
        if req.origin == req.destination {
            issues.push(DemandIssue::OriginEqualsDestination {
                request: m,
                vertex: req.origin,
            });
            continue;
        }
        let reach =
            reachable_cache[req.origin].get_or_insert_with(|| network.reachable_from(req.origin));
        if !reach[req.destination] {
            issues.push(DemandIssue::Unreachable {
                request: m,
                origin: req.origin,
                destination: req.destination,
            });
        }
    }
    issues
}

/// `validate_demand` folded into a hard error, for solve entry points.
pub fn require_valid_demand(network: &RoadNetwork, requests: &[Request]) -> Result<(), Error> {
    let issues = validate_demand(network, requests);
    match issues.first() {
        None => Ok(()),
        Some(first) => {
            let request = match first {
                DemandIssue::BadEndpoint { request, .. }
                | DemandIssue::NonpositiveIntensity { request, .. }
                | DemandIssue::OriginEqualsDestination { request, .. }
                | DemandIssue::Unreachable { request, .. } => *request,
            };
            Err(Error::InvalidRequest {
                request,
                reason: format!("{first} ({} issue(s) total)", issues.len()),
            })
        }
    }
}
