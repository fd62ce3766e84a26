//! Front end for the bosp solver: argument definitions, report output and
//! verification suites.

pub mod bench;
pub mod report;
pub mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use bosp_core::bosp::{default_batch_size, solve, BospConfig};
use bosp_core::problems::{build_problem, make_mm_problem, BenchmarkProblem, ProblemParams, PROBLEM_NAMES};
use bosp_core::Error;
use clap::{Args, Parser, Subcommand};

use crate::report::{ProblemDescriptor, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_INGESTION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bosp", version, about = "Smallest positive eigenpairs of K x = λ y, M y = λ x")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a named benchmark problem or one read from Matrix Market files.
    Solve(SolveArgs),
    /// CGS vs MGS biorthogonalization on Hilbert (X) and Lauchli (Y) blocks.
    ///
    /// For each n, X and Y are the first m = n/2 columns of the n×n Hilbert
    /// matrix and of the n×(n−1) Lauchli matrix [1ᵀ; μI].
    BiorthBench(BenchArgs),
    /// Run a verification suite and exit nonzero if any check fails.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// One of t0, tm1, fd-laplace, random-spd, mm-files.
    #[arg(long)]
    pub problem: Option<String>,
    /// Matrix order (for fd-laplace a perfect cube m³).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Condition number target for random-spd.
    #[arg(long, default_value_t = 1e4)]
    pub cond: f64,
    #[arg(long)]
    pub k_file: Option<PathBuf>,
    #[arg(long)]
    pub m_file: Option<PathBuf>,
    #[arg(long)]
    pub b_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub nev: usize,
    /// Batch size; defaults to min(⌈nev/5⌉, 150).
    #[arg(long)]
    pub nb: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub ngs: usize,
    #[arg(long, default_value_t = 3)]
    pub s: usize,
    #[arg(long, overrides_with = "no_moving")]
    pub moving: bool,
    #[arg(long, overrides_with = "moving")]
    pub no_moving: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Expected nullspace dimension; a mismatch is an error.
    #[arg(long)]
    pub rank_hint: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Residual history CSV path.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = bench::LAUCHLI_MU)]
    pub mu: f64,
    /// Print CSV instead of a markdown table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// accuracy-spd, accuracy-spsd, oracle, moving-equivalence, regression,
    /// biorth, small-solver or generalized.
    pub suite: String,
}

/// `9.849886676638E-06`: 13 significant digits, two-digit signed exponent.
pub fn sci13(v: f64) -> String {
    sci(v, 12)
}

/// Scientific notation with `decimals` mantissa digits and a two-digit
/// signed exponent.
pub fn sci(v: f64, decimals: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.decimals$E}");
    match s.split_once('E') {
        Some((m, e)) => {
            let e: i32 = e.parse().expect("exponent");
            format!("{m}E{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        None => s,
    }
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Ingestion { .. } | Error::Io { .. } => EXIT_INGESTION,
        Error::InvalidArgument(_) => EXIT_PARSE,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

pub fn config_from(args: &SolveArgs) -> BospConfig {
    let mut cfg = BospConfig::new(args.nev);
    cfg.s = args.s;
    cfg = cfg.with_nb(args.nb.unwrap_or_else(|| default_batch_size(args.nev)));
    if args.moving {
        cfg.moving = true;
    } else if args.no_moving {
        cfg.moving = false;
    }
    cfg.tol = args.tol;
    cfg.ngs = args.ngs;
    cfg.max_outer_iter = args.max_iter;
    cfg.rng_seed = args.seed;
    cfg.rank_hint = args.rank_hint;
    cfg
}

fn load_problem(args: &SolveArgs) -> Result<BenchmarkProblem, (i32, String)> {
    let files = args.k_file.is_some() || args.m_file.is_some();
    match (&args.problem, files) {
        (Some(name), false) if name != "mm-files" => {
            let params = ProblemParams { n: args.n, cond: args.cond, seed: args.seed, ..Default::default() };
            build_problem(name, &params).map_err(|e| (exit_for(&e), e.to_string()))
        }
        (None, true) | (Some(_), true) => {
            if args.problem.as_deref().is_some_and(|p| p != "mm-files") {
                return Err((EXIT_PARSE, "give either --problem or Matrix Market files, not both".into()));
            }
            let (Some(k), Some(m)) = (&args.k_file, &args.m_file) else {
                return Err((EXIT_PARSE, "--k-file and --m-file are both required".into()));
            };
            make_mm_problem(k, m, args.b_file.as_deref()).map_err(|e| match e {
                Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => (EXIT_INGESTION, e.to_string()),
                e => (exit_for(&e), e.to_string()),
            })
        }
        _ => Err((EXIT_PARSE, format!("a problem source is required: --problem ({}) or --k-file/--m-file", PROBLEM_NAMES.join(", ")))),
    }
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    let p = match load_problem(args) {
        Ok(p) => p,
        Err((code, msg)) => return fail(code, msg),
    };
    let cfg = config_from(args);
    if let Err(e) = cfg.validate() {
        return fail(EXIT_PARSE, e);
    }
    let ns = p.analytic.nullspace.as_ref().filter(|ns| args.rank_hint.is_none_or(|h| h == ns.r));
    let r = match solve(p.k.as_ref(), p.m.as_ref(), &p.inner_product(), &cfg, ns) {
        Ok(r) => r,
        Err(e) => return fail(exit_for(&e), e),
    };
    let desc = ProblemDescriptor {
        name: p.name.clone(),
        n: p.dim(),
        weighted: p.b.is_some(),
        nullspace_rank: r.nullspace_rank,
    };
    let report = RunReport::new(&cfg, desc, &r);

    println!("{:>5}  {:>19}  {:>9}", "l", "lambda", "residual");
    for (l, (lam, res)) in r.lambdas.iter().zip(&r.residuals).enumerate() {
        println!("{:>5}  {:>19}  {:>9.2e}", l + 1, sci13(*lam), res);
    }
    println!(
        "{} after {} iterations ({} of {} converged), {:.2} s, max width {}",
        if r.converged { "converged" } else { "NOT converged" },
        r.iterations,
        r.nev_conv,
        cfg.nev,
        r.seconds,
        r.max_width
    );

    if let Some(path) = &args.out {
        let json = match report.to_json() {
            Ok(j) => j,
            Err(e) => return fail(EXIT_NUMERICAL, e),
        };
        if let Err(e) = std::fs::write(path, json + "\n") {
            return fail(EXIT_INGESTION, format!("{}: {e}", path.display()));
        }
    }
    if let Some(path) = &args.history {
        let written = File::create(path)
            .map_err(|e| e.to_string())
            .and_then(|f| report.write_history_csv(BufWriter::new(f)).map_err(|e| e.to_string()));
        if let Err(e) = written {
            return fail(EXIT_INGESTION, format!("{}: {e}", path.display()));
        }
    }
    if r.converged {
        EXIT_OK
    } else {
        eprintln!("error: not converged: {} of {} pairs after {} iterations", r.nev_conv, cfg.nev, r.iterations);
        EXIT_NOT_CONVERGED
    }
}

pub fn cmd_biorth_bench(args: &BenchArgs) -> i32 {
    if args.sizes.iter().any(|&n| n < 2) {
        return fail(EXIT_PARSE, "sizes must be at least 2");
    }
    match bench::run_bench(&args.sizes, args.mu) {
        Ok(rows) => {
            print!("{}", if args.csv { bench::csv_table(&rows) } else { bench::markdown_table(&rows) });
            EXIT_OK
        }
        Err(e) => fail(EXIT_NUMERICAL, e),
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> i32 {
    let rep = match verify::run_suite(&args.suite) {
        Ok(r) => r,
        Err(e) => return fail(exit_for(&e), e),
    };
    let mut checks = rep.checks.clone();
    if rep.invariants.runs > 0 {
        checks.extend(rep.invariants.checks());
    }
    println!("suite {}", rep.suite);
    for c in &checks {
        println!("  {c}");
    }
    match checks.iter().find(|c| !c.passed) {
        None => EXIT_OK,
        Some(c) => {
            eprintln!("error: check failed: {}", c.name);
            1
        }
    }
}

/// Caps the kernel thread pool from `BOSP_THREADS` (0 or unset: automatic).
pub fn configure_threads() {
    if let Some(n) = std::env::var("BOSP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    configure_threads();
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::BiorthBench(a) => cmd_biorth_bench(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci13_format() {
        assert_eq!(sci13(9.84988667663834e-6), "9.849886676638E-06");
        assert_eq!(sci13(1.085870497646713e-3), "1.085870497647E-03");
        assert_eq!(sci13(12.5), "1.250000000000E+01");
    }

    #[test]
    fn moving_flags() {
        let cli = Cli::try_parse_from(["bosp", "solve", "--problem", "t0", "--nev", "40", "--nb", "4"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        assert!(config_from(&a).moving);
        let cli = Cli::try_parse_from(["bosp", "solve", "--problem", "t0", "--nev", "40", "--nb", "4", "--no-moving"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        assert!(!config_from(&a).moving);
        let cli = Cli::try_parse_from(["bosp", "solve", "--problem", "t0", "--nev", "4", "--moving"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        assert!(config_from(&a).moving);
    }
}
