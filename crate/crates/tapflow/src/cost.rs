//! Edge cost functions: travel time as a function of flow.
//!
//! The workhorse is the BPR volume-delay curve
//! `c(x) = phi * (1 + alpha * (x / kappa)^beta)`, optionally continued
//! linearly above a threshold so that early, wildly infeasible iterates
//! cannot blow up the objective. A two-piece affine approximation and a
//! flow-independent constant cost round out the set; the latter two exist
//! so that routing quality under cruder congestion models can be compared
//! against the exact curve.

/// Default BPR polynomial coefficient.
pub const DEFAULT_ALPHA: f64 = 0.15;
/// Default BPR polynomial exponent.
pub const DEFAULT_BETA: u32 = 4;
/// Default linearization threshold, as a multiple of capacity.
pub const DEFAULT_LINEARIZE_AT: f64 = 5.0;

/// Which per-edge integrand the objective accumulates.
///
/// `Raw` integrates the travel time itself (the user-equilibrium
/// objective); `Marginal` integrates `c(x) + x c'(x)`, which by the
/// fundamental theorem collapses to `x * c(x)` and makes the equilibrium
/// coincide with the system optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostTransform {
    Raw,
    Marginal,
}

/// A nondecreasing, convex travel-time function of edge flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostFunction {
    /// BPR curve `phi * (1 + alpha * (x/kappa)^beta)`. When
    /// `linearize_at = Some(t)`, the curve continues with constant slope
    /// above `t * kappa` (value- and slope-continuous at the threshold).
    Bpr {
        free_flow: f64,
        capacity: f64,
        alpha: f64,
        beta: u32,
        linearize_at: Option<f64>,
    },
    /// Flow-independent travel time.
    Constant { value: f64 },
    /// Flat at `free_flow` up to `breakpoint`, then affine with `slope`.
    PiecewiseAffine {
        free_flow: f64,
        breakpoint: f64,
        slope: f64,
    },
}

impl CostFunction {
    /// BPR with the standard coefficients and no linearization.
    pub fn bpr(free_flow: f64, capacity: f64) -> Self {
        CostFunction::Bpr {
            free_flow,
            capacity,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            linearize_at: None,
        }
    }

    /// Travel time at the given flow.
    pub fn travel_time(&self, flow: f64) -> f64 {
        debug_assert!(flow >= 0.0, "flow must be nonnegative, got {flow}");
        match *self {
            CostFunction::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
                linearize_at,
            } => {
                let threshold = linearize_at.map(|t| t * capacity);
                match threshold {
                    Some(t) if flow > t => {
                        bpr_value(free_flow, capacity, alpha, beta, t)
                            + bpr_slope(free_flow, capacity, alpha, beta, t) * (flow - t)
                    }
                    _ => bpr_value(free_flow, capacity, alpha, beta, flow),
                }
            }
            CostFunction::Constant { value } => value,
            CostFunction::PiecewiseAffine {
                free_flow,
                breakpoint,
                slope,
            } => {
                if flow > breakpoint {
                    free_flow + slope * (flow - breakpoint)
                } else {
                    free_flow
                }
            }
        }
    }

    /// Derivative of the travel time; the right-derivative at breakpoints.
    pub fn derivative(&self, flow: f64) -> f64 {
        debug_assert!(flow >= 0.0);
        match *self {
            CostFunction::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
                linearize_at,
            } => {
                let clamped = match linearize_at {
                    Some(t) => flow.min(t * capacity),
                    None => flow,
                };
                bpr_slope(free_flow, capacity, alpha, beta, clamped)
            }
            CostFunction::Constant { .. } => 0.0,
            CostFunction::PiecewiseAffine {
                breakpoint, slope, ..
            } => {
                if flow >= breakpoint {
                    slope
                } else {
                    0.0
                }
            }
        }
    }

    /// Marginal cost `c(x) + x c'(x)`: the sensitivity of total edge cost
    /// to one more unit of flow.
    pub fn marginal(&self, flow: f64) -> f64 {
        self.travel_time(flow) + flow * self.derivative(flow)
    }

    /// `∫_0^flow c(s) ds` in closed form.
    pub fn integral(&self, flow: f64) -> f64 {
        debug_assert!(flow >= 0.0);
        match *self {
            CostFunction::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
                linearize_at,
            } => {
                let threshold = linearize_at.map(|t| t * capacity);
                match threshold {
                    Some(t) if flow > t => {
                        let value_at_t = bpr_value(free_flow, capacity, alpha, beta, t);
                        let slope_at_t = bpr_slope(free_flow, capacity, alpha, beta, t);
                        let over = flow - t;
                        bpr_integral(free_flow, capacity, alpha, beta, t)
                            + value_at_t * over
                            + 0.5 * slope_at_t * over * over
                    }
                    _ => bpr_integral(free_flow, capacity, alpha, beta, flow),
                }
            }
            CostFunction::Constant { value } => value * flow,
            CostFunction::PiecewiseAffine {
                free_flow,
                breakpoint,
                slope,
            } => {
                if flow > breakpoint {
                    let over = flow - breakpoint;
                    free_flow * flow + 0.5 * slope * over * over
                } else {
                    free_flow * flow
                }
            }
        }
    }

    /// Per-edge contribution to the assignment objective:
    /// `Raw` gives `∫_0^x c`, `Marginal` gives `∫_0^x (c + s c') = x c(x)`.
    pub fn beckmann(&self, flow: f64, transform: CostTransform) -> f64 {
        match transform {
            CostTransform::Raw => self.integral(flow),
            CostTransform::Marginal => flow * self.travel_time(flow),
        }
    }

    /// A view of this function with a constant background flow added:
    /// evaluations see `c(x + shift)`, integrals run over `x` from zero.
    pub fn shifted(&self, shift: f64) -> ShiftedCost<'_> {
        debug_assert!(shift >= 0.0, "exogenous flow must be nonnegative");
        ShiftedCost { inner: self, shift }
    }

    /// The same curve without the linear continuation; used when
    /// reporting costs so that numbers stay comparable across runs that
    /// did or did not guard the objective.
    pub fn exact(&self) -> Self {
        match *self {
            CostFunction::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
                ..
            } => CostFunction::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
                linearize_at: None,
            },
            other => other,
        }
    }

    /// The capacity-like parameter, if the variant has one.
    pub fn capacity(&self) -> Option<f64> {
        match *self {
            CostFunction::Bpr { capacity, .. } => Some(capacity),
            CostFunction::PiecewiseAffine { breakpoint, .. } => Some(breakpoint),
            CostFunction::Constant { .. } => None,
        }
    }

    /// Free-flow travel time (value at zero flow).
    pub fn free_flow(&self) -> f64 {
        self.travel_time(0.0)
    }
}

/// Two-piece affine stand-in for a BPR curve: flat at the free-flow time
/// up to capacity, then the secant of the exact curve between `kappa` and
/// `3 kappa`.
pub fn piecewise_affine_from_bpr(
    free_flow: f64,
    capacity: f64,
    alpha: f64,
    beta: u32,
) -> CostFunction {
    assert!(free_flow > 0.0 && capacity > 0.0);
    let at_three = bpr_value(free_flow, capacity, alpha, beta, 3.0 * capacity);
    CostFunction::PiecewiseAffine {
        free_flow,
        breakpoint: capacity,
        slope: (at_three - free_flow) / (2.0 * capacity),
    }
}

/// Cost function with a fixed exogenous background flow.
///
/// Values and derivatives are those of the underlying function at
/// `x + shift`; the integral is taken over the endogenous flow only,
/// starting at zero.
#[derive(Clone, Copy, Debug)]
pub struct ShiftedCost<'a> {
    inner: &'a CostFunction,
    shift: f64,
}

impl ShiftedCost<'_> {
    pub fn travel_time(&self, flow: f64) -> f64 {
        self.inner.travel_time(flow + self.shift)
    }

    pub fn derivative(&self, flow: f64) -> f64 {
        self.inner.derivative(flow + self.shift)
    }

    pub fn marginal(&self, flow: f64) -> f64 {
        self.travel_time(flow) + flow * self.derivative(flow)
    }

    /// `∫_0^flow c(s + shift) ds`.
    pub fn integral(&self, flow: f64) -> f64 {
        self.inner.integral(flow + self.shift) - self.inner.integral(self.shift)
    }

    pub fn beckmann(&self, flow: f64, transform: CostTransform) -> f64 {
        match transform {
            CostTransform::Raw => self.integral(flow),
            CostTransform::Marginal => flow * self.travel_time(flow),
        }
    }
}

fn bpr_value(free_flow: f64, capacity: f64, alpha: f64, beta: u32, flow: f64) -> f64 {
    free_flow * (1.0 + alpha * (flow / capacity).powi(beta as i32))
}

fn bpr_slope(free_flow: f64, capacity: f64, alpha: f64, beta: u32, flow: f64) -> f64 {
    free_flow * alpha * beta as f64 * (flow / capacity).powi(beta as i32 - 1) / capacity
}

fn bpr_integral(free_flow: f64, capacity: f64, alpha: f64, beta: u32, flow: f64) -> f64 {
    free_flow * flow * (1.0 + alpha * (flow / capacity).powi(beta as i32) / (beta + 1) as f64)
}
