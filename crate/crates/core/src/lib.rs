//! Minimization of convex quadratics f(x) = xᵀPx + 2qᵀx + offset over the
//! integer lattice ℤⁿ, with P symmetric positive semidefinite.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`model`] holds the problem data, its continuous relaxation, and the
//!    coordinate normalization that shifts the continuous minimizer into the
//!    unit box [0,1)ⁿ.
//! 2. [`bounds`] produces certified lower bounds: the continuous value, a
//!    scalar Lagrangian dual solved by bisection, a trust-region bound, and
//!    the validator through which every dual candidate must pass.
//! 3. [`sdp`] solves the semidefinite relaxation with an ADMM operator
//!    splitting and recovers a certified dual bound from the scaled dual
//!    variable; it also hands out the (mean, covariance factor) pair that
//!    drives randomized rounding.
//! 4. [`heuristics`] turns relaxation solutions into good integer points:
//!    randomized rounding plus a greedy one-coordinate descent.
//! 5. [`exact`] certifies optimality at small n by sphere decoding.
//! 6. [`bench`] generates reproducible instance families and aggregates the
//!    whole pipeline into CSV tables.
//!
//! All numerics are f64. Every randomized component consumes a counter-based
//! generator ([`numkernel::RandomStream`]) keyed by (seed, substream index),
//! so results are bit-reproducible regardless of thread count or sampling
//! order.

pub mod bench;
pub mod bounds;
pub mod error;
pub mod exact;
pub mod heuristics;
pub mod jsonfmt;
pub mod model;
pub mod numkernel;
pub mod sdp;

pub use error::{Error, Result};
pub use model::{ContinuousInfo, NormalizedProblem, Problem};

use serde::Serialize;

/// Which lower bounds [`bound_report`] should compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    /// Continuous relaxation value only.
    Cts,
    /// Continuous + scalar dual + trust region (no SDP solve).
    Cheap,
    /// Everything, including the ADMM-solved semidefinite dual.
    Full,
}

/// All lower bounds for one instance, offset-inclusive and mutually ordered.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: usize,
    /// Continuous relaxation value; `None` when q ∉ range(P) (unbounded below).
    pub f_cts: f64,
    /// Scalar dual bound (always ≥ f_cts up to roundoff).
    pub f_scalar: Option<f64>,
    pub scalar_case: Option<bounds::ScalarDualCase>,
    pub alpha_star: Option<f64>,
    /// Trust-region bound f_cts + ω_min·‖x_cts − x_rnd‖².
    pub f_tr: Option<f64>,
    /// Certified semidefinite dual bound; `None` unless the SDP was run.
    pub f_sdp: Option<f64>,
    pub sdp_converged: Option<bool>,
    pub sdp_iterations: Option<usize>,
    /// Published closed-form prediction of f_scalar − f_cts (known to overstate).
    pub gap_rhs_published: Option<f64>,
    /// Corrected prediction; the one that is actually a valid lower bound on the gap.
    pub gap_rhs_corrected: Option<f64>,
    /// Value of the best rounded point f(round(x_cts)).
    pub f_rnd: f64,
    /// A-priori rounding bound: f_rnd − f_cts ≤ (n/4)·ω_max.
    pub round_gap_bound: f64,
}

/// Runs the bound pipeline on one problem.
///
/// Errors with [`Error::Unbounded`] when q ∉ range(P); every finite instance
/// gets at least `f_cts`, and the scalar/trust-region/SDP bounds according to
/// `method`. All reported values include the instance offset, so they lower
/// bound f over ℤⁿ directly.
pub fn bound_report(
    problem: &Problem,
    method: BoundMethod,
    sdp_cfg: &sdp::SdpConfig,
) -> Result<BoundReport> {
    let info = problem.continuous_info()?;
    if !info.in_range {
        return Err(Error::Unbounded);
    }
    let mut report = BoundReport {
        n: problem.n(),
        f_cts: info.f_cts,
        f_scalar: None,
        scalar_case: None,
        alpha_star: None,
        f_tr: None,
        f_sdp: None,
        sdp_converged: None,
        sdp_iterations: None,
        gap_rhs_published: None,
        gap_rhs_corrected: None,
        f_rnd: info.f_rnd,
        round_gap_bound: info.round_gap_bound,
    };
    if method == BoundMethod::Cts {
        return Ok(report);
    }
    let np = problem.normalize()?;
    let scalar = bounds::scalar_dual_bound(&np)?;
    report.f_scalar = Some(scalar.bound);
    report.scalar_case = Some(scalar.case);
    report.alpha_star = Some(scalar.alpha_star);
    report.f_tr = Some(bounds::trust_region_bound(problem)?);
    let gap = bounds::scalar_gap_guarantee(&np)?;
    report.gap_rhs_published = Some(gap.published);
    report.gap_rhs_corrected = Some(gap.corrected);
    if method == BoundMethod::Full {
        let (sol, cert) = sdp::solve_relaxation(&np, sdp_cfg)?;
        // The scalar certificate is itself a valid dual point; never report a
        // weaker SDP bound than the warm start it was given.
        report.f_sdp = Some(cert.certified_bound.max(scalar.bound));
        report.sdp_converged = Some(sol.converged);
        report.sdp_iterations = Some(sol.iterations);
    }
    Ok(report)
}
