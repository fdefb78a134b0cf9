//! Pipeline front end: generate instances, compute certified lower bounds,
//! run the rounding heuristic, enumerate exactly, and build benchmark CSVs.
//!
//! All numeric output uses 17 significant digits, so byte-level diffs of two
//! runs are meaningful. Exit codes: 0 success, 1 invalid input or usage,
//! 2 internal invariant violation. The only environment override honored is
//! the thread-pool size (RAYON_NUM_THREADS), which never changes results.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use intquad::bench::{self, InstanceMode, InstanceSpec, PipelineConfig};
use intquad::exact::solve_exact;
use intquad::heuristics::{one_opt, randomized_search, Incumbent, IncumbentSource, SearchConfig};
use intquad::jsonfmt::{fmt17, to_json_string};
use intquad::model::Instance;
use intquad::sdp::{extract_sampler, solve_relaxation, SdpConfig};
use intquad::{bound_report, BoundMethod, Problem};

/// Fixed default seed; deliberately not time-based so every command is
/// reproducible without flags.
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "intquad",
    version,
    about = "Certified bounds, randomized rounding, and exact enumeration \
             for integer convex quadratics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Continuous relaxation only.
    Cts,
    /// Continuous + scalar dual + trust region.
    Scalar,
    /// Same set as scalar (the trust-region bound is part of the cheap pass).
    Tr,
    /// Everything, including the certified semidefinite dual.
    Sdp,
    /// Alias for sdp: the complete report.
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate seeded random instance files (JSON).
    Gen {
        /// Problem dimension.
        #[arg(long)]
        n: usize,
        /// Gaussian factor rows (default 2n); ignored with --omega.
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated eigenvalues: switches to the fixed-spectrum model.
        #[arg(long)]
        omega: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// How many instances (seeds seed, seed+1, and so on).
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Keep the raw draw instead of scaling to f_cts = -1.
        #[arg(long)]
        no_scale: bool,
        /// Output file (count = 1) or stem for <stem>_<i>.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Lower bounds for one instance file (JSON report on stdout).
    Bound {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
    },
    /// Randomized rounding search (incumbent JSON on stdout).
    Solve {
        file: PathBuf,
        /// Rounding samples (default 3n).
        #[arg(long)]
        samples: Option<usize>,
        /// Skip the 1-opt descent on each sample.
        #[arg(long)]
        no_one_opt: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the per-sample trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exact enumeration (stats JSON on stdout).
    Exact {
        file: PathBuf,
        /// Initial upper bound: zero | rnd | rnd1opt | best1opt | value:<v>.
        #[arg(long, default_value = "best1opt")]
        ub: String,
        #[arg(long)]
        node_budget: Option<u64>,
        /// Samples for the in-process best1opt bound (default 3n).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Benchmark tables over seeded instance batches (CSV).
    Bench {
        /// Comma-separated sizes, e.g. 10,20,40.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Rounding samples per instance (default 3n).
        #[arg(long)]
        samples: Option<usize>,
        /// Exact solving runs for n at or below this.
        #[arg(long, default_value_t = bench::DEFAULT_EXACT_CUTOFF)]
        exact_cutoff: usize,
        /// Also measure enumeration nodes under the initial-bound chain.
        #[arg(long)]
        node_study: bool,
        #[arg(long)]
        node_budget: Option<u64>,
        /// Table CSV path; also writes <stem>_medians.csv and
        /// <stem>_instances.csv. Stdout when omitted (table only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl From<intquad::Error> for Failure {
    fn from(err: intquad::Error) -> Self {
        let code = match err {
            intquad::Error::Invariant(_) => 2,
            _ => 1,
        };
        Failure { code, message: err.to_string() }
    }
}

fn io_failure(context: &str, path: &Path, err: std::io::Error) -> Failure {
    Failure { code: 1, message: format!("{context} {}: {err}", path.display()) }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests arrive here too; they are not
            // usage errors and must keep exit code 0.
            let code = i32::from(err.use_stderr());
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(failure) = run(cli) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| io_failure("cannot read", path, e))?;
    Ok(Instance::from_json(&text)?.into_problem()?)
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| Failure {
                code: 1,
                message: format!("invalid size {part:?} in --sizes"),
            })
        })
        .collect()
}

fn parse_omega(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|part| {
            part.trim().parse::<f64>().map_err(|_| Failure {
                code: 1,
                message: format!("invalid eigenvalue {part:?} in --omega"),
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Gen { n, m, omega, seed, count, no_scale, out } => {
            gen_cmd(n, m, omega, seed, count, no_scale, &out)
        }
        Cmd::Bound { file, method } => bound_cmd(&file, method),
        Cmd::Solve { file, samples, no_one_opt, seed, trace } => {
            solve_cmd(&file, samples, no_one_opt, seed, trace.as_deref())
        }
        Cmd::Exact { file, ub, node_budget, samples, seed } => {
            exact_cmd(&file, &ub, node_budget, samples, seed)
        }
        Cmd::Bench { sizes, count, seed, samples, exact_cutoff, node_study, node_budget, out } => {
            bench_cmd(&sizes, count, seed, samples, exact_cutoff, node_study, node_budget, out.as_deref())
        }
    }
}

fn gen_cmd(
    n: usize,
    m: Option<usize>,
    omega: Option<String>,
    seed: u64,
    count: usize,
    no_scale: bool,
    out: &Path,
) -> Result<(), Failure> {
    if count == 0 {
        return Err(Failure { code: 1, message: "--count must be at least 1".into() });
    }
    for i in 0..count {
        let inst_seed = seed + i as u64;
        let mode = match &omega {
            Some(list) => InstanceMode::FixedSpectrum { omega: parse_omega(list)? },
            None => InstanceMode::GaussianIls { m },
        };
        let spec = InstanceSpec { n, mode, seed: inst_seed, scale_to_unit: !no_scale };
        let problem = bench::generate(&spec)?;
        let mut meta = serde_json::Map::new();
        meta.insert("seed".into(), inst_seed.into());
        meta.insert(
            "mode".into(),
            match &spec.mode {
                InstanceMode::GaussianIls { .. } => "gaussian_ils".into(),
                InstanceMode::FixedSpectrum { .. } => "fixed_spectrum".into(),
            },
        );
        meta.insert("scaled".into(), (!no_scale).into());
        let json = problem.to_instance(meta).to_json()?;
        let path = if count == 1 {
            out.to_path_buf()
        } else {
            let stem = out.with_extension("");
            PathBuf::from(format!("{}_{}.json", stem.display(), i))
        };
        fs::write(&path, json).map_err(|e| io_failure("cannot write", &path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn bound_cmd(file: &Path, method: MethodArg) -> Result<(), Failure> {
    let problem = load_problem(file)?;
    let method = match method {
        MethodArg::Cts => BoundMethod::Cts,
        MethodArg::Scalar | MethodArg::Tr => BoundMethod::Cheap,
        MethodArg::Sdp | MethodArg::All => BoundMethod::Full,
    };
    let report = bound_report(&problem, method, &SdpConfig::default())?;
    print!("{}", to_json_string(&report)?);
    Ok(())
}

/// Shared heuristic pipeline: relaxation, sampler, search, plus the rounded
/// point's descent folded in, matching the benchmark's best-incumbent rule.
fn best_incumbent(
    problem: &Problem,
    samples: Option<usize>,
    one_opt_enabled: bool,
    seed: u64,
) -> Result<(Incumbent, Vec<intquad::heuristics::TraceRow>), Failure> {
    let np = problem.normalize()?;
    let (sol, _cert) = solve_relaxation(&np, &SdpConfig::default())?;
    let (mean, factor) = extract_sampler(&sol)?;
    let cfg = SearchConfig { samples, seed, one_opt: one_opt_enabled, one_opt_cap: None };
    let search = randomized_search(&np, &mean, &factor, &cfg)?;
    Ok((search.best, search.trace))
}

fn trace_csv(rows: &[intquad::heuristics::TraceRow]) -> String {
    let mut out = String::from("k,sample_value,oneopt_value,running_best\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.k,
            fmt17(row.sample_value),
            row.oneopt_value.map(fmt17).unwrap_or_default(),
            fmt17(row.running_best),
        ));
    }
    out
}

fn solve_cmd(
    file: &Path,
    samples: Option<usize>,
    no_one_opt: bool,
    seed: u64,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let problem = load_problem(file)?;
    let (best, rows) = best_incumbent(&problem, samples, !no_one_opt, seed)?;
    if let Some(path) = trace {
        fs::write(path, trace_csv(&rows)).map_err(|e| io_failure("cannot write", path, e))?;
    }
    print!("{}", to_json_string(&best)?);
    Ok(())
}

#[derive(Serialize)]
struct ExactOutput {
    value: f64,
    proved_optimal: bool,
    nodes_visited: u64,
    initial_ub_source: String,
    initial_ub: f64,
    incumbent_updates: u64,
    wall_budget_hit: bool,
    x: Option<Vec<i64>>,
}

fn exact_cmd(
    file: &Path,
    ub: &str,
    node_budget: Option<u64>,
    samples: Option<usize>,
    seed: u64,
) -> Result<(), Failure> {
    let problem = load_problem(file)?;
    let n = problem.n();
    let (ub_value, witness): (f64, Option<Vec<i64>>) = match ub {
        "zero" => (problem.offset(), Some(vec![0; n])),
        "rnd" => {
            let info = problem.continuous_info()?;
            (info.f_rnd, Some(info.x_rnd))
        }
        "rnd1opt" => {
            let info = problem.continuous_info()?;
            let descent = one_opt(&problem, &info.x_rnd, 1000 * n)?;
            (descent.value, Some(descent.x))
        }
        "best1opt" => {
            let (best, _) = best_incumbent(&problem, samples, true, seed)?;
            let info = problem.continuous_info()?;
            let descent = one_opt(&problem, &info.x_rnd, 1000 * n)?;
            let rnd_inc = Incumbent {
                x: descent.x,
                value: descent.value,
                source: IncumbentSource::RndOneOpt,
            };
            let chosen = if rnd_inc.beats(&best) { rnd_inc } else { best };
            (chosen.value, Some(chosen.x))
        }
        other => match other.strip_prefix("value:") {
            Some(raw) => {
                let v = raw.parse::<f64>().map_err(|_| Failure {
                    code: 1,
                    message: format!("invalid --ub value {raw:?}"),
                })?;
                (v, None)
            }
            None => {
                return Err(Failure {
                    code: 1,
                    message: format!(
                        "unknown --ub source {other:?}; expected zero | rnd | rnd1opt | best1opt | value:<v>"
                    ),
                })
            }
        },
    };
    let result = solve_exact(&problem, ub_value, witness.as_deref(), node_budget)?;
    let output = ExactOutput {
        value: result.value,
        proved_optimal: result.stats.proved_optimal,
        nodes_visited: result.stats.nodes_visited,
        initial_ub_source: ub.to_string(),
        initial_ub: ub_value,
        incumbent_updates: result.stats.incumbent_updates,
        wall_budget_hit: result.stats.wall_budget_hit,
        x: result.x,
    };
    print!("{}", to_json_string(&output)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    sizes: &str,
    count: usize,
    seed: u64,
    samples: Option<usize>,
    exact_cutoff: usize,
    node_study: bool,
    node_budget: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let sizes = parse_sizes(sizes)?;
    let cfg = PipelineConfig {
        sdp: SdpConfig::default(),
        samples,
        one_opt_cap: None,
        exact_cutoff,
        node_study,
        node_budget,
    };
    let output = bench::run_table(&sizes, count, seed, &cfg)?;
    for failure in &output.failures {
        eprintln!(
            "warning: instance n={} seed={} excluded: {}",
            failure.n, failure.seed, failure.message
        );
    }
    let table = bench::table_csv(&output.rows);
    match out {
        None => print!("{table}"),
        Some(path) => {
            fs::write(path, table).map_err(|e| io_failure("cannot write", path, e))?;
            let stem = path.with_extension("");
            let medians = PathBuf::from(format!("{}_medians.csv", stem.display()));
            fs::write(&medians, bench::median_table_csv(&output.median_rows))
                .map_err(|e| io_failure("cannot write", &medians, e))?;
            let instances = PathBuf::from(format!("{}_instances.csv", stem.display()));
            fs::write(&instances, bench::instances_csv(&output.instances))
                .map_err(|e| io_failure("cannot write", &instances, e))?;
        }
    }
    Ok(())
}
