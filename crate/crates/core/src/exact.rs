//! Exact global minimization at small n: depth-first enumeration of lattice
//! points inside the ellipsoid {x : f(x) ≤ ub} (sphere decoding), plus a
//! naive box scan used as a test oracle.
//!
//! With P = RᵀR (Cholesky, R upper triangular) the objective splits as
//! f(x) = ‖R(x − x_cts)‖² + f_cts, so fixing the trailing coordinates
//! x_{i+1..n} turns level i into a 1-D interval test. Children are visited
//! in zig-zag order around the per-level real center, so the first radius
//! failure at a level exhausts it. The squared radius is current_ub − f_cts
//! and shrinks on every strict incumbent improvement; ties never shrink it.
//!
//! A node is one per-level assignment that passes the radius test. Node
//! counts are deterministic, machine-independent, and monotone in the
//! initial upper bound, which is what the initial-bound experiment measures.

use nalgebra::Cholesky;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Problem;

/// P counts as numerically singular when ω_min ≤ factor · ω_max; the
/// enumeration ellipsoid would be unbounded along the near-null direction.
pub const SINGULAR_EIG_FACTOR: f64 = 1e-8;

/// Largest number of lattice points the brute-force oracle will scan.
pub const BRUTE_FORCE_POINT_LIMIT: u64 = 10_000_000;

/// Largest dimension the brute-force oracle accepts.
pub const BRUTE_FORCE_MAX_N: usize = 8;

/// Search effort and outcome counters.
#[derive(Debug, Clone, Serialize)]
pub struct EnumStats {
    /// Per-level assignments that passed the radius test.
    pub nodes_visited: u64,
    /// Strict incumbent improvements.
    pub incumbent_updates: u64,
    /// True when the tree was exhausted within budget, so the returned value
    /// is the global minimum of f over the lattice, capped at the initial
    /// upper bound.
    pub proved_optimal: bool,
    /// True when the node budget stopped the search early.
    pub wall_budget_hit: bool,
}

/// Enumeration outcome. `x` is the best point strictly below the initial
/// upper bound, or the caller's witness when nothing strictly better exists.
#[derive(Debug, Clone)]
pub struct ExactResult {
    pub x: Option<Vec<i64>>,
    /// min(initial_ub, best value found); equals f★ when proved_optimal.
    pub value: f64,
    pub stats: EnumStats,
}

fn positive_definite_factor(problem: &Problem) -> Result<nalgebra::DMatrix<f64>> {
    let spectral = problem.spectral();
    let min_eig = spectral.omega_min();
    if min_eig <= SINGULAR_EIG_FACTOR * spectral.omega_max() {
        return Err(Error::SingularP { min_eig });
    }
    let chol = Cholesky::new(problem.p().clone()).ok_or(Error::SingularP { min_eig })?;
    // P = L·Lᵀ; the recursion wants the upper factor R = Lᵀ.
    Ok(chol.l().transpose())
}

/// Depth-first ellipsoid enumeration. `initial_ub` must be a valid upper
/// bound on f★ (0 = f(0) works for offset-free instances); `initial_point`,
/// when given, is the point attaining it and is echoed back if no strictly
/// better point exists. With a witness the search radius is the witness's own
/// squared factor distance, accumulated by the same arithmetic the level
/// tests use, so the witness always passes them and two bounds whose witness
/// agrees enumerate identically even when the bounds differ only at roundoff.
/// `node_budget` caps nodes_visited; exhaustion returns the best incumbent
/// with `proved_optimal = false`.
pub fn solve_exact(
    problem: &Problem,
    initial_ub: f64,
    initial_point: Option<&[i64]>,
    node_budget: Option<u64>,
) -> Result<ExactResult> {
    let n = problem.n();
    if let Some(p0) = initial_point {
        if p0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p0.len() });
        }
    }
    if !initial_ub.is_finite() {
        return Err(Error::NonFinite);
    }
    let r = positive_definite_factor(problem)?;
    let info = problem.continuous_info()?;
    let x_cts = &info.x_cts;
    let f_cts = info.f_cts;

    let mut radius2 = initial_ub - f_cts;
    let mut best: Option<Vec<i64>> = None;
    let mut nodes: u64 = 0;
    let mut updates: u64 = 0;
    let mut budget_hit = false;

    // Per-level enumeration state; level n−1 is the root.
    let mut x = vec![0i64; n];
    let mut center = vec![0.0f64; n];
    let mut delta = vec![0i64; n];
    let mut dist_above = vec![0.0f64; n];

    // Center of level i given the fixed coordinates above it.
    let enter = |lev: usize, x: &[i64], center: &mut [f64]| {
        let mut s = 0.0;
        for k in lev + 1..n {
            s += r[(lev, k)] * (x[k] as f64 - x_cts[k]);
        }
        let c = x_cts[lev] - s / r[(lev, lev)];
        center[lev] = c;
        c
    };
    let first = |lev: usize, c: f64, x: &mut [i64], delta: &mut [i64]| {
        let x0 = c.round();
        x[lev] = x0 as i64;
        delta[lev] = if c - x0 >= 0.0 { 1 } else { -1 };
    };
    let advance = |lev: usize, x: &mut [i64], delta: &mut [i64]| {
        x[lev] += delta[lev];
        delta[lev] = -delta[lev] - delta[lev].signum();
    };

    // Replay the witness through the level recursion and take its accumulated
    // squared distance as the radius. Replaying with the identical operations
    // makes the witness leaf's admission exact rather than a roundoff coin
    // flip between `initial_ub − f_cts` and the recursion's partial sums.
    if let Some(p0) = initial_point {
        let mut above = 0.0f64;
        for lev in (0..n).rev() {
            let c = enter(lev, p0, &mut center);
            let resid = r[(lev, lev)] * (p0[lev] as f64 - c);
            above += resid * resid;
        }
        if above.is_finite() {
            radius2 = above;
        }
    }

    if radius2 >= 0.0 {
        let mut lev = n - 1;
        let c = enter(lev, &x, &mut center);
        first(lev, c, &mut x, &mut delta);
        loop {
            let resid = r[(lev, lev)] * (x[lev] as f64 - center[lev]);
            let total = dist_above[lev] + resid * resid;
            if total <= radius2 {
                nodes += 1;
                let over_budget = node_budget.is_some_and(|b| nodes >= b);
                if lev == 0 {
                    if total < radius2 {
                        radius2 = total;
                        best = Some(x.clone());
                        updates += 1;
                    }
                    advance(lev, &mut x, &mut delta);
                } else {
                    lev -= 1;
                    dist_above[lev] = total;
                    let c = enter(lev, &x, &mut center);
                    first(lev, c, &mut x, &mut delta);
                }
                if over_budget {
                    budget_hit = true;
                    break;
                }
            } else if lev == n - 1 {
                break;
            } else {
                // Zig-zag distances grow monotonically, so the whole level
                // is exhausted at the first failure.
                lev += 1;
                advance(lev, &mut x, &mut delta);
            }
        }
    }

    let (x_out, value) = match best {
        Some(point) => {
            let value = problem.evaluate_point(&point)?;
            (Some(point), value)
        }
        None => (initial_point.map(<[i64]>::to_vec), initial_ub),
    };
    Ok(ExactResult {
        x: x_out,
        value,
        stats: EnumStats {
            nodes_visited: nodes,
            incumbent_updates: updates,
            proved_optimal: !budget_hit,
            wall_budget_hit: budget_hit,
        },
    })
}

/// Exhaustive scan of the integer box |xᵢ − x_cts,ᵢ| ≤ √((ub − f_cts)/ω_min),
/// which contains every point with f(x) ≤ ub because
/// (x − x_cts)ᵀP(x − x_cts) ≥ ω_min‖x − x_cts‖². Lexicographic tie-break.
pub fn brute_force(problem: &Problem, ub: f64) -> Result<(Vec<i64>, f64)> {
    let n = problem.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::InvalidConfig(format!(
            "brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    let spectral = problem.spectral();
    let omega_min = spectral.omega_min();
    if omega_min <= SINGULAR_EIG_FACTOR * spectral.omega_max() {
        return Err(Error::SingularP { min_eig: omega_min });
    }
    let info = problem.continuous_info()?;
    if ub < info.f_cts {
        return Err(Error::Invariant(
            "brute-force bound below the continuous minimum".into(),
        ));
    }
    let radius = ((ub - info.f_cts) / omega_min).sqrt();
    let mut lo = vec![0i64; n];
    let mut hi = vec![0i64; n];
    let mut points = 1.0f64;
    for i in 0..n {
        lo[i] = (info.x_cts[i] - radius).ceil() as i64;
        hi[i] = (info.x_cts[i] + radius).floor() as i64;
        if hi[i] < lo[i] {
            return Err(Error::Invariant(
                "bound excludes every lattice point on some axis".into(),
            ));
        }
        points *= (hi[i] - lo[i] + 1) as f64;
    }
    if points > BRUTE_FORCE_POINT_LIMIT as f64 {
        return Err(Error::BoxTooLarge { points, limit: BRUTE_FORCE_POINT_LIMIT });
    }

    let mut x = lo.clone();
    let mut best_x = x.clone();
    let mut best_value = problem.evaluate_point(&x)?;
    // Odometer walk in lexicographic order; strict improvement keeps the
    // lexicographically smallest argmin.
    loop {
        let mut i = n;
        loop {
            if i == 0 {
                return Ok((best_x, best_value));
            }
            i -= 1;
            if x[i] < hi[i] {
                x[i] += 1;
                for j in i + 1..n {
                    x[j] = lo[j];
                }
                break;
            }
        }
        let value = problem.evaluate_point(&x)?;
        if value < best_value {
            best_value = value;
            best_x = x.clone();
        }
    }
}

/// Brute force with the always-valid default bound min(f(0), f_rnd); both
/// are values of integer points, so the box always contains the argmin.
pub fn brute_force_default(problem: &Problem) -> Result<(Vec<i64>, f64)> {
    let info = problem.continuous_info()?;
    let ub = problem.offset().min(info.f_rnd);
    brute_force(problem, ub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::RandomStream;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn problem(p: &[f64], q: &[f64]) -> Problem {
        let n = q.len();
        Problem::new(DMatrix::from_row_slice(n, n, p), DVector::from_row_slice(q), 0.0).unwrap()
    }

    fn random_instance(n: usize, seed: u64) -> Problem {
        let mut stream = RandomStream::new(seed, 0);
        let a = stream.gaussian_matrix(2 * n, n);
        let p = a.transpose() * &a;
        let x_cts = stream.uniform_vector(n);
        let q = -(&p * x_cts);
        Problem::new(p, q, 0.0).unwrap()
    }

    #[test]
    fn coupled_hand_instance() {
        let p = problem(&[2.0, 1.0, 1.0, 2.0], &[-1.4, -1.9]);
        let out = solve_exact(&p, 0.0, None, None).unwrap();
        assert_eq!(out.x, Some(vec![0, 1]));
        assert_abs_diff_eq!(out.value, -1.8, epsilon = 1e-12);
        assert!(out.stats.proved_optimal);
        assert!(out.stats.nodes_visited >= 1);
    }

    #[test]
    fn diagonal_hand_instance() {
        let p = problem(&[1.0, 0.0, 0.0, 1.0], &[-0.6, 0.4]);
        let out = solve_exact(&p, 0.0, None, None).unwrap();
        assert_eq!(out.x, Some(vec![1, 0]));
        assert_abs_diff_eq!(out.value, -0.2, epsilon = 1e-12);
        assert!(out.stats.proved_optimal);
    }

    #[test]
    fn tight_bound_prunes_no_worse_than_loose() {
        let p = problem(&[1.0, 0.0, 0.0, 1.0], &[-0.6, 0.4]);
        let loose = solve_exact(&p, 0.0, None, None).unwrap();
        let tight = solve_exact(&p, -0.2 + 1e-9, None, None).unwrap();
        assert_eq!(tight.x, Some(vec![1, 0]));
        assert!(tight.stats.nodes_visited <= loose.stats.nodes_visited);
    }

    #[test]
    fn exact_ub_returns_witness_without_improvement() {
        let p = problem(&[1.0, 0.0, 0.0, 1.0], &[-0.6, 0.4]);
        let witness = [1i64, 0];
        let out = solve_exact(&p, -0.2, Some(&witness), None).unwrap();
        assert_eq!(out.x, Some(vec![1, 0]));
        assert_abs_diff_eq!(out.value, -0.2, epsilon = 1e-15);
        assert!(out.stats.proved_optimal);
        assert_eq!(out.stats.incumbent_updates, 0);
    }

    #[test]
    fn bound_below_minimum_finds_nothing() {
        let p = problem(&[1.0, 0.0, 0.0, 1.0], &[-0.6, 0.4]);
        let out = solve_exact(&p, -5.0, None, None).unwrap();
        assert_eq!(out.x, None);
        assert_eq!(out.value, -5.0);
        assert_eq!(out.stats.nodes_visited, 0);
    }

    #[test]
    fn budget_stops_search() {
        let p = random_instance(6, 9);
        let full = solve_exact(&p, 0.0, None, None).unwrap();
        assert!(full.stats.proved_optimal);
        assert!(full.stats.nodes_visited > 1);
        let capped = solve_exact(&p, 0.0, None, Some(1)).unwrap();
        assert!(capped.stats.wall_budget_hit);
        assert!(!capped.stats.proved_optimal);
        assert_eq!(capped.stats.nodes_visited, 1);
    }

    #[test]
    fn singular_p_is_rejected() {
        let p = problem(&[1.0, 0.0, 0.0, 0.0], &[-0.5, 0.0]);
        assert!(matches!(
            solve_exact(&p, 0.0, None, None),
            Err(Error::SingularP { .. })
        ));
        assert!(matches!(brute_force(&p, 0.0), Err(Error::SingularP { .. })));
    }

    #[test]
    fn brute_force_hand_instances() {
        let p = problem(&[1.0, 0.0, 0.0, 1.0], &[-0.6, 0.4]);
        let (x, v) = brute_force_default(&p).unwrap();
        assert_eq!(x, vec![1, 0]);
        assert_abs_diff_eq!(v, -0.2, epsilon = 1e-12);

        let p = problem(&[2.0, 1.0, 1.0, 2.0], &[-1.4, -1.9]);
        let (x, v) = brute_force(&p, 0.0).unwrap();
        assert_eq!(x, vec![0, 1]);
        assert_abs_diff_eq!(v, -1.8, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_zero_q_returns_origin() {
        let p = problem(&[2.0, 1.0, 1.0, 2.0], &[0.0, 0.0]);
        let (x, v) = brute_force(&p, 0.0).unwrap();
        assert_eq!(x, vec![0, 0]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn brute_force_rejects_oversized_box() {
        let p = Problem::new(
            DMatrix::identity(8, 8),
            DVector::zeros(8),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            brute_force(&p, 1e6),
            Err(Error::BoxTooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_rejects_large_n() {
        let p = Problem::new(DMatrix::identity(9, 9), DVector::zeros(9), 0.0).unwrap();
        assert!(matches!(brute_force(&p, 0.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn oracle_equivalence_on_random_instances() {
        for seed in 0..12u64 {
            let n = 2 + (seed % 5) as usize;
            let p = random_instance(n, 100 + seed);
            let enumerated = solve_exact(&p, 0.0, Some(&vec![0; n]), None).unwrap();
            let (bx, bv) = brute_force(&p, 0.0).unwrap();
            assert!(enumerated.stats.proved_optimal);
            assert_eq!(
                enumerated.value, bv,
                "value mismatch at seed {seed}: {} vs {bv}",
                enumerated.value
            );
            assert_eq!(enumerated.x.unwrap(), bx, "argmin mismatch at seed {seed}");
        }
    }

    #[test]
    fn node_counts_monotone_in_initial_bound() {
        for seed in 0..8u64 {
            let p = random_instance(5, 200 + seed);
            let f_star = solve_exact(&p, 0.0, None, None).unwrap().value;
            let info = p.continuous_info().unwrap();
            let mut bounds = vec![0.0, info.f_rnd, f_star + 1e-9];
            bounds.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut prev = u64::MAX;
            for ub in bounds {
                let run = solve_exact(&p, ub, None, None).unwrap();
                assert!(
                    run.stats.nodes_visited <= prev,
                    "nodes increased at seed {seed}, ub {ub}"
                );
                prev = run.stats.nodes_visited;
            }
        }
    }

    #[test]
    fn one_dimensional_instance() {
        let p = problem(&[4.0], &[-3.0]);
        // f(x) = 4x² − 6x, minimized at x = 0.75, integer optimum x = 1.
        let out = solve_exact(&p, 0.0, None, None).unwrap();
        assert_eq!(out.x, Some(vec![1]));
        assert_abs_diff_eq!(out.value, -2.0, epsilon = 1e-12);
    }
}
