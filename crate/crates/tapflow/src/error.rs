use std::fmt;

/// Errors shared across the solver stack.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    InvalidNetwork(String),
    /// A request is malformed (bad endpoint, nonpositive intensity, ...).
    InvalidRequest {
        request: usize,
        reason: String,
    },
    /// No path exists under the current weights.
    Unreachable {
        origin: usize,
        destination: usize,
        request: Option<usize>,
    },
    /// The path enumeration cap was exceeded; the instance is too large
    /// for the brute-force oracle.
    TooManyPaths {
        count: usize,
        cap: usize,
    },
    /// Even the largest probed dummy free-flow time cannot push the
    /// unfulfilled fraction below the target.
    TargetUnreachable {
        target_delta: f64,
        achieved_delta: f64,
        l_hi: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidNetwork(msg) => write!(f, "invalid network: {msg}"),
            Error::InvalidRequest { request, reason } => {
                write!(f, "invalid request {request}: {reason}")
            }
            Error::Unreachable {
                origin,
                destination,
                request,
            } => match request {
                Some(m) => write!(
                    f,
                    "request {m}: no path from vertex {origin} to vertex {destination}"
                ),
                None => write!(f, "no path from vertex {origin} to vertex {destination}"),
            },
            Error::TooManyPaths { count, cap } => {
                write!(f, "path enumeration exceeded the cap ({count} > {cap})")
            }
            Error::TargetUnreachable {
                target_delta,
                achieved_delta,
                l_hi,
            } => write!(
                f,
                "unfulfilled fraction {achieved_delta:.6} at the upper bracket L = {l_hi} \
                 still exceeds the target {target_delta}"
            ),
        }
    }
}

impl std::error::Error for Error {}
