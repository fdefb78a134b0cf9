//! Random instance generation and the experiment harness: runs the full
//! pipeline (bounds, relaxation, rounding search, optional exact solve) over
//! seeded instance batches and aggregates the results as CSV.
//!
//! Reproducibility contract: every random draw comes from a counter-based
//! substream addressed by (seed, index), instances of a batch use seeds
//! `seed + i`, and aggregation is an ordered reduction by instance index, so
//! two runs with the same seed produce byte-identical CSV no matter how the
//! work is scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::bounds;
use crate::error::{Error, Result};
use crate::exact::solve_exact;
use crate::heuristics::{one_opt, randomized_search, Incumbent, IncumbentSource, SearchConfig};
use crate::jsonfmt::fmt17;
use crate::model::Problem;
use crate::numkernel::RandomStream;
use crate::sdp::{self, SdpConfig};

/// Exact solving is auto-enabled for n at or below this size.
pub const DEFAULT_EXACT_CUTOFF: usize = 50;

/// A draw with |f_cts| below this is degenerate and redrawn.
const DEGENERATE_F_CTS: f64 = 1e-12;

/// Redraw attempts before giving up on a spec (each attempt burns two
/// generator substreams, which must stay below the search substream range).
const MAX_REDRAWS: u64 = 31;

/// Heuristic value within this of f★ counts as optimal.
const OPT_MATCH_TOL: f64 = 1e-9;

/// Margin added to f★ for the loosest-informative initial bound in the node
/// study.
const STAR_EPS: f64 = 1e-9;

/// How P and q are drawn.
#[derive(Debug, Clone)]
pub enum InstanceMode {
    /// P = AᵀA with A an m×n standard Gaussian matrix; m defaults to 2n.
    GaussianIls { m: Option<usize> },
    /// P = Q·diag(ω)·Qᵀ with Q the orthogonal factor of an n×n Gaussian.
    FixedSpectrum { omega: Vec<f64> },
}

/// One instance draw: q = −P·x_cts with x_cts uniform on [0,1)ⁿ, so the
/// continuous minimizer always lands in the unit box. With `scale_to_unit`
/// the pair (P, q) is divided by |f_cts| so that f_cts = −1.
#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub n: usize,
    pub mode: InstanceMode,
    pub seed: u64,
    pub scale_to_unit: bool,
}

impl InstanceSpec {
    pub fn gaussian(n: usize, seed: u64) -> Self {
        Self { n, mode: InstanceMode::GaussianIls { m: None }, seed, scale_to_unit: true }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("instance size must be at least 1".into()));
        }
        match &self.mode {
            InstanceMode::GaussianIls { m } => {
                if let Some(m) = m {
                    if *m < self.n {
                        return Err(Error::InvalidConfig(format!(
                            "gaussian mode needs m >= n, got m={m}, n={}",
                            self.n
                        )));
                    }
                }
            }
            InstanceMode::FixedSpectrum { omega } => {
                if omega.len() != self.n {
                    return Err(Error::InvalidConfig(format!(
                        "spectrum length {} does not match n={}",
                        omega.len(),
                        self.n
                    )));
                }
                if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidConfig(
                        "spectrum entries must be finite and nonnegative".into(),
                    ));
                }
                if omega.iter().all(|w| *w == 0.0) {
                    return Err(Error::InvalidConfig("spectrum must not be all zero".into()));
                }
            }
        }
        Ok(())
    }
}

fn draw(spec: &InstanceSpec, attempt: u64) -> Result<Problem> {
    let n = spec.n;
    // Substreams 2t and 2t+1 for attempt t; search substreams start at 64.
    let mut matrix_stream = RandomStream::new(spec.seed, 2 * attempt);
    let mut box_stream = RandomStream::new(spec.seed, 2 * attempt + 1);
    let p = match &spec.mode {
        InstanceMode::GaussianIls { m } => {
            let m = m.unwrap_or(2 * n);
            let a = matrix_stream.gaussian_matrix(m, n);
            // Inner products computed once per (i, j) pair are exactly
            // symmetric, so this passes the symmetry gate verbatim.
            a.transpose() * &a
        }
        InstanceMode::FixedSpectrum { omega } => {
            let g = matrix_stream.gaussian_matrix(n, n);
            let basis = g.qr().q();
            let raw = &basis
                * DMatrix::from_diagonal(&DVector::from_row_slice(omega))
                * basis.transpose();
            (&raw + raw.transpose()) * 0.5
        }
    };
    let x_cts = box_stream.uniform_vector(n);
    let q = -(&p * &x_cts);
    Problem::new(p, q, 0.0)
}

/// Draws one instance. A degenerate draw (f_cts = 0, probability zero in
/// exact arithmetic) is redrawn from the next substream pair.
pub fn generate(spec: &InstanceSpec) -> Result<Problem> {
    spec.validate()?;
    for attempt in 0..MAX_REDRAWS {
        let problem = draw(spec, attempt)?;
        let info = problem.continuous_info()?;
        if info.f_cts.abs() < DEGENERATE_F_CTS {
            continue;
        }
        if !spec.scale_to_unit {
            return Ok(problem);
        }
        let s = info.f_cts.abs();
        return Problem::new(problem.p() / s, problem.q() / s, 0.0);
    }
    Err(Error::Invariant("every redraw came out degenerate".into()))
}

/// Node counts by initial-bound source, loosest to tightest.
#[derive(Debug, Clone, Copy)]
pub struct NodeCounts {
    pub ub_zero: u64,
    pub ub_rnd: u64,
    pub ub_rnd_1opt: u64,
    pub ub_best_1opt: u64,
    pub ub_star_eps: u64,
}

/// Full pipeline output for one instance.
#[derive(Debug, Clone)]
pub struct InstanceReport {
    pub n: usize,
    pub seed: u64,
    pub f_cts: f64,
    pub f_scalar: f64,
    pub f_tr: f64,
    pub f_sdp: f64,
    pub f_rnd: f64,
    pub f_rnd_1opt: f64,
    /// Best over the trivial point and the raw rounding samples.
    pub f_best: f64,
    /// Best over everything, descents included.
    pub f_best_1opt: f64,
    pub f_star: Option<f64>,
    /// Whether the heuristic value matched f★; None when exact was skipped.
    pub optimal: Option<bool>,
    /// Mean descent moves per rounding sample.
    pub oneopt_iters: f64,
    pub nodes: Option<NodeCounts>,
    pub sdp_converged: bool,
}

/// Pipeline knobs shared by all instances of a run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sdp: SdpConfig,
    /// Rounding samples per instance; None means 3n.
    pub samples: Option<usize>,
    pub one_opt_cap: Option<usize>,
    /// Exact solving runs only for n at or below this.
    pub exact_cutoff: usize,
    /// Also measure enumeration nodes under the full initial-bound chain.
    pub node_study: bool,
    pub node_budget: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sdp: SdpConfig::default(),
            samples: None,
            one_opt_cap: None,
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            node_study: false,
            node_budget: None,
        }
    }
}

/// Runs bounds, relaxation, rounding search, and (for small n) exact solving
/// on one generated instance.
pub fn run_instance(spec: &InstanceSpec, cfg: &PipelineConfig) -> Result<InstanceReport> {
    let problem = generate(spec)?;
    let info = problem.continuous_info()?;
    let np = problem.normalize()?;
    let scalar = bounds::scalar_dual_bound(&np)?;
    let f_tr = bounds::trust_region_bound(&problem)?;
    let (sol, cert) = sdp::solve_relaxation(&np, &cfg.sdp)?;
    let f_sdp = cert.certified_bound.max(scalar.bound);

    let (mean, factor) = sdp::extract_sampler(&sol)?;
    let search_cfg = SearchConfig {
        samples: cfg.samples,
        seed: spec.seed,
        one_opt: true,
        one_opt_cap: cfg.one_opt_cap,
    };
    let search = randomized_search(&np, &mean, &factor, &search_cfg)?;
    let cap = cfg.one_opt_cap.unwrap_or(1000 * spec.n);
    let rnd_descent = one_opt(&problem, &info.x_rnd, cap)?;
    let rnd_incumbent = Incumbent {
        x: rnd_descent.x,
        value: rnd_descent.value,
        source: IncumbentSource::RndOneOpt,
    };
    let best_1opt =
        if rnd_incumbent.beats(&search.best) { rnd_incumbent.clone() } else { search.best.clone() };

    let mut f_star = None;
    let mut optimal = None;
    let mut nodes = None;
    if spec.n <= cfg.exact_cutoff {
        let run =
            solve_exact(&problem, best_1opt.value, Some(&best_1opt.x), cfg.node_budget)?;
        if run.stats.proved_optimal {
            f_star = Some(run.value);
            optimal = Some(best_1opt.value <= run.value + OPT_MATCH_TOL);
            if cfg.node_study {
                let x_star = run.x.clone().unwrap_or_else(|| best_1opt.x.clone());
                let count = |ub: f64, witness: &[i64]| -> Result<u64> {
                    Ok(solve_exact(&problem, ub, Some(witness), cfg.node_budget)?
                        .stats
                        .nodes_visited)
                };
                let zero = vec![0i64; spec.n];
                nodes = Some(NodeCounts {
                    ub_zero: count(problem.offset(), &zero)?,
                    ub_rnd: count(info.f_rnd, &info.x_rnd)?,
                    ub_rnd_1opt: count(rnd_incumbent.value, &rnd_incumbent.x)?,
                    ub_best_1opt: count(best_1opt.value, &best_1opt.x)?,
                    ub_star_eps: count(run.value + STAR_EPS, &x_star)?,
                });
            }
        }
    }

    Ok(InstanceReport {
        n: spec.n,
        seed: spec.seed,
        f_cts: info.f_cts,
        f_scalar: scalar.bound,
        f_tr,
        f_sdp,
        f_rnd: info.f_rnd,
        f_rnd_1opt: rnd_incumbent.value,
        f_best: search.best_raw.value,
        f_best_1opt: best_1opt.value,
        f_star,
        optimal,
        oneopt_iters: search.mean_oneopt_moves.unwrap_or(0.0),
        nodes,
        sdp_converged: sol.converged,
    })
}

/// Mean node counts per initial-bound source.
#[derive(Debug, Clone, Copy)]
pub struct NodeMeans {
    pub ub_zero: f64,
    pub ub_rnd: f64,
    pub ub_rnd_1opt: f64,
    pub ub_best_1opt: f64,
    pub ub_star_eps: f64,
}

/// One aggregated row. The same shape holds means or medians; the f★ fields
/// are None when exact solving was skipped for the size.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub n: usize,
    pub count: usize,
    pub f_cts: f64,
    pub f_scalar: f64,
    pub f_tr: f64,
    pub f_sdp: f64,
    pub f_rnd: f64,
    pub f_rnd_1opt: f64,
    pub f_best: f64,
    pub f_best_1opt: f64,
    pub f_star: Option<f64>,
    pub frac_optimal: Option<f64>,
    pub oneopt_iters: f64,
    pub nodes: Option<NodeMeans>,
}

/// A failed instance, kept for the caller's warning channel.
#[derive(Debug, Clone)]
pub struct InstanceFailure {
    pub n: usize,
    pub seed: u64,
    pub message: String,
}

/// Everything a table run produces: mean rows, median rows, the per-instance
/// reports behind them, and any failures (excluded from aggregation).
#[derive(Debug, Clone)]
pub struct TableOutput {
    pub rows: Vec<TableRow>,
    pub median_rows: Vec<TableRow>,
    pub instances: Vec<InstanceReport>,
    pub failures: Vec<InstanceFailure>,
}

#[derive(Clone, Copy)]
enum Stat {
    Mean,
    Median,
}

fn reduce(values: &[f64], stat: Stat) -> f64 {
    match stat {
        Stat::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Stat::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite stats"));
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            }
        }
    }
}

fn aggregate(n: usize, reports: &[InstanceReport], stat: Stat) -> Result<TableRow> {
    if reports.is_empty() {
        return Err(Error::Invariant(format!("no usable instances at n={n}")));
    }
    let col = |f: fn(&InstanceReport) -> f64| -> f64 {
        reduce(&reports.iter().map(f).collect::<Vec<_>>(), stat)
    };
    let stars: Vec<f64> = reports.iter().filter_map(|r| r.f_star).collect();
    let flags: Vec<bool> = reports.iter().filter_map(|r| r.optimal).collect();
    let node_sets: Vec<NodeCounts> = reports.iter().filter_map(|r| r.nodes).collect();
    let nodes = if node_sets.len() == reports.len() {
        let ncol = |f: fn(&NodeCounts) -> u64| -> f64 {
            reduce(&node_sets.iter().map(|c| f(c) as f64).collect::<Vec<_>>(), stat)
        };
        Some(NodeMeans {
            ub_zero: ncol(|c| c.ub_zero),
            ub_rnd: ncol(|c| c.ub_rnd),
            ub_rnd_1opt: ncol(|c| c.ub_rnd_1opt),
            ub_best_1opt: ncol(|c| c.ub_best_1opt),
            ub_star_eps: ncol(|c| c.ub_star_eps),
        })
    } else {
        None
    };
    Ok(TableRow {
        n,
        count: reports.len(),
        f_cts: col(|r| r.f_cts),
        f_scalar: col(|r| r.f_scalar),
        f_tr: col(|r| r.f_tr),
        f_sdp: col(|r| r.f_sdp),
        f_rnd: col(|r| r.f_rnd),
        f_rnd_1opt: col(|r| r.f_rnd_1opt),
        f_best: col(|r| r.f_best),
        f_best_1opt: col(|r| r.f_best_1opt),
        f_star: (stars.len() == reports.len()).then(|| reduce(&stars, stat)),
        frac_optimal: (flags.len() == reports.len())
            .then(|| flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64),
        oneopt_iters: col(|r| r.oneopt_iters),
        nodes,
    })
}

/// Runs `count` Gaussian instances per size with substream seeds `seed + i`,
/// in parallel, and aggregates. Individual failures are excluded from the
/// aggregates and reported in `failures`; a size where every instance fails
/// is an error.
pub fn run_table(
    sizes: &[usize],
    count: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<TableOutput> {
    if sizes.is_empty() || count == 0 {
        return Err(Error::InvalidConfig("need at least one size and one instance".into()));
    }
    let mut out = TableOutput {
        rows: Vec::new(),
        median_rows: Vec::new(),
        instances: Vec::new(),
        failures: Vec::new(),
    };
    for &n in sizes {
        let results: Vec<(u64, Result<InstanceReport>)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let inst_seed = seed + i as u64;
                let spec = InstanceSpec::gaussian(n, inst_seed);
                (inst_seed, run_instance(&spec, cfg))
            })
            .collect();
        let mut good = Vec::with_capacity(count);
        for (inst_seed, result) in results {
            match result {
                Ok(report) => good.push(report),
                Err(err) => out.failures.push(InstanceFailure {
                    n,
                    seed: inst_seed,
                    message: err.to_string(),
                }),
            }
        }
        out.rows.push(aggregate(n, &good, Stat::Mean)?);
        out.median_rows.push(aggregate(n, &good, Stat::Median)?);
        out.instances.extend(good);
    }
    Ok(out)
}

/// Aggregate CSV header. The column set is a stable interface; downstream
/// table consumers key on these exact names.
pub const TABLE_HEADER: &str = "n,count,mean_f_cts,mean_f_scalar,mean_f_tr,mean_f_sdp,mean_f_rnd,mean_f_rnd_1opt,mean_f_best,mean_f_best_1opt,mean_f_star,frac_optimal,mean_oneopt_iters";

/// Header for the medians sibling of the aggregate table.
pub const MEDIAN_HEADER: &str = "n,count,median_f_cts,median_f_scalar,median_f_tr,median_f_sdp,median_f_rnd,median_f_rnd_1opt,median_f_best,median_f_best_1opt,median_f_star,frac_optimal,median_oneopt_iters";

/// Per-instance CSV header: the table quantities plus the seed and the node
/// counts per initial-bound source.
pub const INSTANCE_HEADER: &str = "n,seed,f_cts,f_scalar,f_tr,f_sdp,f_rnd,f_rnd_1opt,f_best,f_best_1opt,f_star,optimal,oneopt_iters,nodes_ub_zero,nodes_ub_rnd,nodes_ub_rnd_1opt,nodes_ub_best_1opt,nodes_ub_star_eps";

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

fn row_line(row: &TableRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.n,
        row.count,
        fmt17(row.f_cts),
        fmt17(row.f_scalar),
        fmt17(row.f_tr),
        fmt17(row.f_sdp),
        fmt17(row.f_rnd),
        fmt17(row.f_rnd_1opt),
        fmt17(row.f_best),
        fmt17(row.f_best_1opt),
        opt_cell(row.f_star),
        opt_cell(row.frac_optimal),
        fmt17(row.oneopt_iters),
    )
}

/// Means table as CSV.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row_line(row));
        out.push('\n');
    }
    out
}

/// Medians table as CSV (identical layout, median_ columns).
pub fn median_table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(MEDIAN_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row_line(row));
        out.push('\n');
    }
    out
}

/// Per-instance CSV, one row per instance in run order.
pub fn instances_csv(reports: &[InstanceReport]) -> String {
    let mut out = String::from(INSTANCE_HEADER);
    out.push('\n');
    for r in reports {
        let nodes = r.nodes.map_or_else(
            || ",,,,".to_string(),
            |c| {
                format!(
                    "{},{},{},{},{}",
                    c.ub_zero, c.ub_rnd, c.ub_rnd_1opt, c.ub_best_1opt, c.ub_star_eps
                )
            },
        );
        let optimal = r.optimal.map_or_else(String::new, |b| String::from(if b { "1" } else { "0" }));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.seed,
            fmt17(r.f_cts),
            fmt17(r.f_scalar),
            fmt17(r.f_tr),
            fmt17(r.f_sdp),
            fmt17(r.f_rnd),
            fmt17(r.f_rnd_1opt),
            fmt17(r.f_best),
            fmt17(r.f_best_1opt),
            opt_cell(r.f_star),
            optimal,
            fmt17(r.oneopt_iters),
            nodes,
        );
    }
    out
}

/// Equal-width histogram over [min, max]; all-equal input collapses to one
/// degenerate bin. Returns (edges, counts) with counts summing to len.
pub fn histogram(values: &[f64], bin_count: usize) -> Result<(Vec<f64>, Vec<u64>)> {
    if values.is_empty() || bin_count == 0 {
        return Err(Error::InvalidConfig("histogram needs values and at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok((vec![lo, hi], vec![values.len() as u64]));
    }
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| lo + (hi - lo) * i as f64 / bin_count as f64)
        .collect();
    let mut counts = vec![0u64; bin_count];
    for &v in values {
        let idx = (((v - lo) / (hi - lo)) * bin_count as f64) as usize;
        counts[idx.min(bin_count - 1)] += 1;
    }
    Ok((edges, counts))
}
