//! Upper bounds: randomized rounding driven by the relaxation's Gaussian
//! sampler, and greedy one-coordinate descent to local optimality.
//!
//! A point is 1-opt when no single-coordinate integer change improves f,
//! which holds exactly when diag(P) ≥ |∇f(x)| componentwise. The descent
//! [`one_opt`] picks, per round, the coordinate move with the largest exact
//! decrease (ties to the lowest index) and maintains the gradient in O(n)
//! per move via one column of P.
//!
//! [`randomized_search`] draws K candidates round(mean + L·w), optionally
//! descends each to 1-opt, and keeps the best point seen, starting from the
//! trivial candidate x = 0. Sample k consumes its own substream, so results
//! are identical under any parallel schedule; ties in value break
//! lexicographically so the reduction is schedule-free too.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NormalizedProblem, Problem};
use crate::numkernel::{RandomStream, RANGE_TOL};

/// Substream indices below this are reserved for instance generation; sample
/// k of a search uses index `SAMPLE_STREAM_BASE + k` of the same seed.
pub const SAMPLE_STREAM_BASE: u64 = 64;

/// Where the best point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentSource {
    /// The trivial candidate x = 0.
    Zero,
    /// Rounded continuous minimizer.
    Rnd,
    /// Rounded continuous minimizer after 1-opt.
    RndOneOpt,
    /// A raw Gaussian rounding sample.
    Sample,
    /// A sample after 1-opt.
    SampleOneOpt,
}

/// Best integer point found, in original coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct Incumbent {
    pub x: Vec<i64>,
    pub value: f64,
    pub source: IncumbentSource,
}

impl Incumbent {
    /// Strict total order: smaller value wins, then lexicographically
    /// smaller point. Makes the best-of reduction order-independent.
    pub fn beats(&self, other: &Incumbent) -> bool {
        if self.value != other.value {
            return self.value < other.value;
        }
        self.x < other.x
    }
}

/// Search parameters. `samples = None` means the 3n default; `one_opt_cap =
/// None` means 1000·n moves per start.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub samples: Option<usize>,
    pub seed: u64,
    pub one_opt: bool,
    pub one_opt_cap: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { samples: None, seed: 1, one_opt: true, one_opt_cap: None }
    }
}

/// Result of one greedy descent.
#[derive(Debug, Clone)]
pub struct OneOptOutcome {
    pub x: Vec<i64>,
    pub value: f64,
    pub moves: usize,
    pub capped: bool,
}

/// One row per sample: the raw value, the descended value when 1-opt ran,
/// and the best value after processing this sample.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub sample_value: f64,
    pub oneopt_value: Option<f64>,
    pub oneopt_moves: Option<usize>,
    pub running_best: f64,
}

/// Everything a search produced: the overall best, the best over raw samples
/// only (no descent), and the per-sample trace.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Incumbent,
    /// Best over {0} ∪ raw samples, ignoring descended points.
    pub best_raw: Incumbent,
    pub trace: Vec<TraceRow>,
    /// Mean 1-opt move count per sample; None when descent was off or K = 0.
    pub mean_oneopt_moves: Option<f64>,
    pub any_capped: bool,
}

/// Greedy descent to a 1-opt point. Each round evaluates, for every
/// coordinate with Pᵢᵢ > 0, the best integer step c = round(−gᵢ/(2Pᵢᵢ)) and
/// its exact objective change Δ = c²Pᵢᵢ + c·gᵢ, then applies the most
/// negative (lowest index on ties). Stops when no move has Δ < 0, which is
/// exactly the 1-opt condition diag(P) ≥ |g|.
///
/// Coordinates with Pᵢᵢ = 0 have an identically zero row for PSD P, so their
/// gradient component is the constant 2qᵢ: qᵢ ≠ 0 means f is unbounded along
/// that axis and the instance is rejected.
pub fn one_opt(problem: &Problem, x0: &[i64], cap: usize) -> Result<OneOptOutcome> {
    let n = problem.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let p = problem.p();
    let q_scale = problem.q().norm().max(1.0);
    for i in 0..n {
        if p[(i, i)] == 0.0 && problem.q()[i].abs() > RANGE_TOL * q_scale {
            return Err(Error::Unbounded);
        }
    }
    let mut x = x0.to_vec();
    let mut g =
        problem.gradient(&DVector::from_iterator(n, x.iter().map(|&v| v as f64)))?;
    let mut moves = 0usize;
    let mut capped = false;
    loop {
        if moves >= cap {
            capped = true;
            break;
        }
        let mut best_delta = 0.0f64;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let pii = p[(i, i)];
            if pii <= 0.0 {
                continue;
            }
            let c = (-g[i] / (2.0 * pii)).round();
            if c == 0.0 {
                continue;
            }
            let delta = c * c * pii + c * g[i];
            if delta < best_delta {
                best_delta = delta;
                best = Some((i, c));
            }
        }
        let Some((i, c)) = best else { break };
        x[i] += c as i64;
        // Rank-one gradient refresh: only column i of P enters.
        g += p.column(i) * (2.0 * c);
        moves += 1;
    }
    let value = problem.evaluate_point(&x)?;
    Ok(OneOptOutcome { x, value, moves, capped })
}

/// Draws one candidate round(mean + L·w) with w standard normal from the
/// given stream. Rounding is half away from zero, as everywhere.
pub fn sample_candidate(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    stream: &mut RandomStream,
) -> Vec<i64> {
    let w = stream.gaussian_vector(mean.len());
    let z = mean + factor * w;
    z.iter().map(|&v| v.round() as i64).collect()
}

/// Randomized rounding search on the normalized problem. The sampler (mean,
/// factor) lives in the inner frame; reported incumbents are mapped back to
/// original coordinates and original values.
pub fn randomized_search(
    np: &NormalizedProblem,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    let n = np.n();
    if mean.len() != n || factor.nrows() != n || factor.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mean.len() });
    }
    let total = cfg.samples.unwrap_or(3 * n);
    let cap = cfg.one_opt_cap.unwrap_or(1000 * n);
    let inner = np.inner();

    // Trivial start: the origin in original coordinates.
    let zero_inner: Vec<i64> = np.shift().iter().map(|&s| -s).collect();
    let zero_value = np.original_value(inner.evaluate_point(&zero_inner)?);
    let zero = Incumbent { x: vec![0; n], value: zero_value, source: IncumbentSource::Zero };

    struct SampleResult {
        k: usize,
        raw: Incumbent,
        descended: Option<(Incumbent, usize, bool)>,
    }

    let results: Vec<SampleResult> = (0..total)
        .into_par_iter()
        .map(|k| -> Result<SampleResult> {
            let mut stream = RandomStream::new(cfg.seed, SAMPLE_STREAM_BASE + k as u64);
            let x_inner = sample_candidate(mean, factor, &mut stream);
            let raw_value = np.original_value(inner.evaluate_point(&x_inner)?);
            let raw = Incumbent {
                x: np.to_original(&x_inner),
                value: raw_value,
                source: IncumbentSource::Sample,
            };
            let descended = if cfg.one_opt {
                let oo = one_opt(inner, &x_inner, cap)?;
                let inc = Incumbent {
                    x: np.to_original(&oo.x),
                    value: np.original_value(oo.value),
                    source: IncumbentSource::SampleOneOpt,
                };
                Some((inc, oo.moves, oo.capped))
            } else {
                None
            };
            Ok(SampleResult { k, raw, descended })
        })
        .collect::<Result<Vec<_>>>()?;

    // Ordered reduction: identical result under any parallel schedule.
    let mut best = zero.clone();
    let mut best_raw = zero;
    let mut trace = Vec::with_capacity(total);
    let mut move_sum = 0usize;
    let mut any_capped = false;
    for r in &results {
        if r.raw.beats(&best) {
            best = r.raw.clone();
        }
        if r.raw.beats(&best_raw) {
            best_raw = r.raw.clone();
        }
        let mut oneopt_value = None;
        let mut oneopt_moves = None;
        if let Some((inc, moves, capped)) = &r.descended {
            if inc.beats(&best) {
                best = inc.clone();
            }
            oneopt_value = Some(inc.value);
            oneopt_moves = Some(*moves);
            move_sum += moves;
            any_capped |= capped;
        }
        trace.push(TraceRow {
            k: r.k,
            sample_value: r.raw.value,
            oneopt_value,
            oneopt_moves,
            running_best: best.value,
        });
    }
    let mean_oneopt_moves =
        if cfg.one_opt && total > 0 { Some(move_sum as f64 / total as f64) } else { None };
    Ok(SearchOutcome { best, best_raw, trace, mean_oneopt_moves, any_capped })
}
