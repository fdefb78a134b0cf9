//! Problem data and its continuous relaxation.
//!
//! A [`Problem`] is f(x) = xᵀPx + 2qᵀx + offset with P symmetric positive
//! semidefinite; the integer program minimizes f over ℤⁿ. Construction
//! validates and symmetrizes P once, and the eigendecomposition is computed
//! lazily and cached, so every downstream module works from one factorization.
//!
//! [`Problem::normalize`] shifts coordinates by ⌊x_cts⌋ so the continuous
//! minimizer of the inner problem lies in [0,1)ⁿ and the inner offset is
//! zero. All bounding and sampling machinery operates on the inner problem;
//! reported values are translated back through `value_offset`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{SpectralData, RANK_TOL};

/// Relative symmetry tolerance: max|P−Pᵀ| ≤ SYM_TOL · max|P|.
pub const SYM_TOL: f64 = 1e-12;

/// Scale-relative PSD tolerance: min eig ≥ −PSD_TOL_FACTOR · trace(P)/n.
pub const PSD_TOL_FACTOR: f64 = 1e-9;

/// Distance from the nearest integer below which a continuous minimizer
/// coordinate counts as integral during normalization.
pub const INTEGER_SNAP_TOL: f64 = 1e-9;

/// Convex quadratic f(x) = xᵀPx + 2qᵀx + offset over ℤⁿ.
#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    offset: f64,
    spectral: OnceLock<SpectralData>,
}

/// Continuous relaxation summary: minimizer, value, the rounded point, and
/// the a-priori bound on what rounding can cost.
#[derive(Debug, Clone)]
pub struct ContinuousInfo {
    /// Minimum-norm continuous minimizer x_cts = −P†q.
    pub x_cts: DVector<f64>,
    /// f(x_cts); −∞ when q ∉ range(P) (the problem is unbounded below).
    pub f_cts: f64,
    /// Whether q ∈ range(P). Everything downstream refuses instances where
    /// this is false.
    pub in_range: bool,
    /// Componentwise round of x_cts, half away from zero.
    pub x_rnd: Vec<i64>,
    /// f(x_rnd).
    pub f_rnd: f64,
    /// (n/4)·ω_max: rounding never costs more than this over f_cts.
    pub round_gap_bound: f64,
}

/// Coordinate-shifted problem with x_cts ∈ [0,1)ⁿ and zero offset.
#[derive(Debug, Clone)]
pub struct NormalizedProblem {
    inner: Problem,
    shift: Vec<i64>,
    value_offset: f64,
    x_cts: DVector<f64>,
    f_cts_inner: f64,
    is_integer_cts: bool,
}

fn round_half_away(v: f64) -> f64 {
    // f64::round rounds half-way cases away from zero, the convention fixed
    // for every rounding step in this crate.
    v.round()
}

impl Problem {
    /// Validates and takes ownership of (P, q, offset). P must be square,
    /// finite, nonzero, symmetric within [`SYM_TOL`] (then symmetrized), and
    /// PSD within [`PSD_TOL_FACTOR`]·trace/n.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, offset: f64) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::NotSquare { rows: n, cols: p.ncols() });
        }
        if n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.len() });
        }
        if !p.iter().all(|v| v.is_finite()) || !q.iter().all(|v| v.is_finite()) || !offset.is_finite()
        {
            return Err(Error::NonFinite);
        }
        let max_abs = p.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if max_abs == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((p[(i, j)] - p[(j, i)]).abs());
            }
        }
        if asym > SYM_TOL * max_abs {
            return Err(Error::NotSymmetric { asymmetry: asym / max_abs });
        }
        let p = (&p + p.transpose()) * 0.5;
        let problem = Self { n, p, q, offset, spectral: OnceLock::new() };
        let spectral = problem.spectral();
        let min_eig = spectral.omega_min();
        let tol = PSD_TOL_FACTOR * (problem.p.trace() / n as f64);
        if min_eig < -tol {
            return Err(Error::NotPsd { min_eig, tol });
        }
        Ok(problem)
    }

    /// Integer least squares reduction: min ‖Ax − b‖² = xᵀ(AᵀA)x − 2(Aᵀb)ᵀx + bᵀb.
    pub fn from_ils(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        let p = a.tr_mul(a);
        let q = -a.tr_mul(b);
        Self::new(p, q, b.dot(b))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Cached eigendecomposition of P.
    pub fn spectral(&self) -> &SpectralData {
        self.spectral.get_or_init(|| {
            SpectralData::new(self.p.clone()).expect("P was validated at construction")
        })
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok((x.tr_mul(&(&self.p * x)))[0] + 2.0 * self.q.dot(x) + self.offset)
    }

    pub fn evaluate_point(&self, x: &[i64]) -> Result<f64> {
        self.evaluate(&DVector::from_iterator(x.len(), x.iter().map(|&v| v as f64)))
    }

    /// ∇f(x) = 2(Px + q).
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok((&self.p * x + &self.q) * 2.0)
    }

    /// Continuous relaxation. Never fails: unboundedness is reported through
    /// `in_range` / the −∞ sentinel rather than an error, so callers can
    /// still inspect the least-squares minimizer.
    pub fn continuous_info(&self) -> Result<ContinuousInfo> {
        let spectral = self.spectral();
        let (neg_x, in_range) = spectral.pinv_solve(&self.q, RANK_TOL);
        let x_cts = -neg_x;
        let f_cts =
            if in_range { self.q.dot(&x_cts) + self.offset } else { f64::NEG_INFINITY };
        let x_rnd: Vec<i64> = x_cts.iter().map(|&v| round_half_away(v) as i64).collect();
        let f_rnd = self.evaluate_point(&x_rnd)?;
        let round_gap_bound = 0.25 * self.n as f64 * spectral.omega_max();
        Ok(ContinuousInfo { x_cts, f_cts, in_range, x_rnd, f_rnd, round_gap_bound })
    }

    /// Shifts coordinates by ⌊x_cts⌋ so the inner minimizer lies in [0,1)ⁿ
    /// and the inner offset is zero. Errors with [`Error::Unbounded`] when
    /// q ∉ range(P).
    pub fn normalize(&self) -> Result<NormalizedProblem> {
        let info = self.continuous_info()?;
        if !info.in_range {
            return Err(Error::Unbounded);
        }
        let n = self.n;
        let mut shift = vec![0i64; n];
        let mut frac = DVector::zeros(n);
        let mut is_integer = true;
        for i in 0..n {
            let floor = info.x_cts[i].floor();
            let mut f = info.x_cts[i] - floor;
            let mut s = floor as i64;
            // A coordinate an epsilon below an integer wraps up, keeping the
            // fractional part inside [0,1).
            if f >= 1.0 - INTEGER_SNAP_TOL {
                s += 1;
                f = 0.0;
            }
            shift[i] = s;
            frac[i] = f;
            if f > INTEGER_SNAP_TOL {
                is_integer = false;
            }
        }
        let shift_vec = DVector::from_iterator(n, shift.iter().map(|&v| v as f64));
        let q_inner = &self.p * &shift_vec + &self.q;
        let value_offset = self.evaluate(&shift_vec)?;
        // P is unchanged, so the cached eigendecomposition carries over.
        let inner = Problem {
            n,
            p: self.p.clone(),
            q: q_inner,
            offset: 0.0,
            spectral: self.spectral.clone(),
        };
        Ok(NormalizedProblem {
            inner,
            shift,
            value_offset,
            x_cts: frac,
            f_cts_inner: info.f_cts - value_offset,
            is_integer_cts: is_integer,
        })
    }

    /// Serializable instance form (version-1 schema).
    pub fn to_instance(&self, meta: serde_json::Map<String, serde_json::Value>) -> Instance {
        let p = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.p[(i, j)]).collect())
            .collect();
        Instance {
            version: 1,
            n: self.n,
            p,
            q: self.q.iter().copied().collect(),
            offset: self.offset,
            meta,
        }
    }
}

impl NormalizedProblem {
    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// The shifted problem: identical P, q ← P·shift + q, offset 0.
    pub fn inner(&self) -> &Problem {
        &self.inner
    }

    pub fn shift(&self) -> &[i64] {
        &self.shift
    }

    /// f(shift) on the original problem; add to inner values to report in
    /// original terms.
    pub fn value_offset(&self) -> f64 {
        self.value_offset
    }

    /// Inner-frame continuous minimizer, componentwise in [0,1).
    pub fn x_cts(&self) -> &DVector<f64> {
        &self.x_cts
    }

    /// Inner-frame continuous value (original f_cts − value_offset).
    pub fn f_cts_inner(&self) -> f64 {
        self.f_cts_inner
    }

    /// Original-frame continuous value.
    pub fn f_cts(&self) -> f64 {
        self.f_cts_inner + self.value_offset
    }

    /// Whether x_cts was already integral; bounds then collapse to f_cts and
    /// the shift itself is the optimum.
    pub fn is_integer_cts(&self) -> bool {
        self.is_integer_cts
    }

    /// Maps an inner-frame integer point back to original coordinates.
    pub fn to_original(&self, x_inner: &[i64]) -> Vec<i64> {
        x_inner.iter().zip(&self.shift).map(|(&x, &s)| x + s).collect()
    }

    /// Original-frame value of an inner-frame value.
    pub fn original_value(&self, inner_value: f64) -> f64 {
        inner_value + self.value_offset
    }
}

/// Wire format for one instance (JSON, version 1). P is nested row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub version: u32,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub offset: f64,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        crate::jsonfmt::to_json_string(self)
    }

    /// Validates the payload into a [`Problem`].
    pub fn into_problem(self) -> Result<Problem> {
        if self.version != 1 {
            return Err(Error::Malformed(format!("unsupported version {}", self.version)));
        }
        if self.p.len() != self.n || self.p.iter().any(|row| row.len() != self.n) {
            return Err(Error::Malformed(format!("P must be {0}x{0} to match n", self.n)));
        }
        if self.q.len() != self.n {
            return Err(Error::Malformed(format!("q must have length {}", self.n)));
        }
        let flat: Vec<f64> = self.p.into_iter().flatten().collect();
        let p = DMatrix::from_row_slice(self.n, self.n, &flat);
        Problem::new(p, DVector::from_vec(self.q), self.offset)
    }
}
