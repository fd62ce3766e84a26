//! Verification suites against closed forms, reference values and dense
//! oracles. Each returns named pass/fail checks plus the worst sampled
//! solver invariants seen across its runs.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use bosp_core::bosp::{pairing_residuals, regression_coefficients, solve, BospConfig, EigenResult};
use bosp_core::linalg::operator::to_dense;
use bosp_core::linalg::{DiagonalOperator, IdentityOperator, InnerProduct};
use bosp_core::problems::{
    make_fd_laplacian_problem, make_generalized_problem, make_random_spd_problem, make_t_problem, BenchmarkProblem,
};
use bosp_core::projected::{dense_lrep_oracle, lrep_oracle_eigenvalues, solve_small_lrep, ProjectedLrep};
use bosp_core::Result;

use crate::bench::{run_bench, DEFAULT_SIZES, LAUCHLI_MU};

/// Zero filter for the dense oracle. The zero eigenvalue of `H` is defective
/// when `K` is singular, so a dense eigensolver returns it split into
/// values of size `O(√ε)`.
const ORACLE_ZERO_TOL: f64 = 1e-6;

pub const SUITES: [&str; 8] = [
    "accuracy-spd",
    "accuracy-spsd",
    "oracle",
    "moving-equivalence",
    "regression",
    "biorth",
    "small-solver",
    "generalized",
];

/// Smallest ten positive eigenvalues of `T(−1)/T(0)` at `n = 1000`,
/// computed in quadruple precision.
pub const TM1_REFERENCE: [f64; 10] = [
    3.943890108210e-05,
    6.154958719056e-05,
    1.577542931907e-04,
    1.994584196853e-04,
    3.549418750556e-04,
    4.161478616511e-04,
    6.309942290978e-04,
    7.116221744879e-04,
    9.859008227908e-04,
    1.085870497647e-03,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Worst sampled invariants over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantTally {
    pub runs: usize,
    pub samples: usize,
    pub biorth: f64,
    pub cross_nullspace: f64,
    pub cross_locked: f64,
    pub monotone: bool,
}

impl InvariantTally {
    pub fn new() -> Self {
        Self { monotone: true, ..Default::default() }
    }

    pub fn absorb(&mut self, r: &EigenResult) {
        self.runs += 1;
        for rec in &r.records {
            if let Some(b) = rec.biorth_dev {
                self.samples += 1;
                self.biorth = self.biorth.max(b);
            }
            self.cross_nullspace = self.cross_nullspace.max(rec.cross_nullspace.unwrap_or(0.0));
            self.cross_locked = self.cross_locked.max(rec.cross_locked.unwrap_or(0.0));
        }
        self.monotone &= r.records.windows(2).all(|w| w[0].nev_conv <= w[1].nev_conv);
    }

    pub fn merge(&mut self, o: &InvariantTally) {
        self.runs += o.runs;
        self.samples += o.samples;
        self.biorth = self.biorth.max(o.biorth);
        self.cross_nullspace = self.cross_nullspace.max(o.cross_nullspace);
        self.cross_locked = self.cross_locked.max(o.cross_locked);
        self.monotone &= o.monotone;
    }

    /// Invariant checks at the `1e-10` level.
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("UᵀBV − I", self.biorth <= 1e-10, format!("{:.2e} over {} samples", self.biorth, self.samples)),
            Check::new("cross-Gram vs nullspace", self.cross_nullspace <= 1e-10, format!("{:.2e}", self.cross_nullspace)),
            Check::new("cross-Gram vs locked", self.cross_locked <= 1e-10, format!("{:.2e}", self.cross_locked)),
            Check::new("nevConv nondecreasing", self.monotone, format!("{} runs", self.runs)),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub invariants: InvariantTally,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut s = format!("suite {}\n", self.suite);
        for c in &self.checks {
            s.push_str(&format!("  {c}\n"));
        }
        s
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "accuracy-spd" => accuracy_spd(),
        "accuracy-spsd" => accuracy_spsd(),
        "oracle" => oracle(),
        "moving-equivalence" => moving_equivalence(),
        "regression" => regression(),
        "biorth" => biorth(),
        "small-solver" => small_solver(),
        "generalized" => generalized(),
        other => Err(bosp_core::Error::InvalidArgument(format!(
            "unknown suite '{other}' (expected one of {})",
            SUITES.join(", ")
        ))),
    }
}

fn solve_problem(p: &BenchmarkProblem, cfg: &BospConfig) -> Result<EigenResult> {
    solve(p.k.as_ref(), p.m.as_ref(), &p.inner_product(), cfg, None)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn pairing_check(p: &BenchmarkProblem, r: &EigenResult, tol: f64) -> Result<Check> {
    let pr = pairing_residuals(p.k.as_ref(), p.m.as_ref(), &p.inner_product(), &r.lambdas, &r.x, &r.y)?;
    let worst = max_of(pr);
    Ok(Check::new("reflected pair (−y, x) at −λ", worst <= tol, format!("max residual {worst:.2e} (tol {tol:e})")))
}

/// `T(0)/T(0)`, `n = 1000`: eigenvalues against `4sin²(πℓ/2002)` and
/// vectors against the sine vectors.
pub fn accuracy_spd() -> Result<SuiteReport> {
    let n = 1000;
    let p = make_t_problem(n, 0.0)?;
    let cfg = BospConfig::new(10).with_nb(10).with_tol(1e-10);
    let t = Instant::now();
    let r = solve_problem(&p, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let lam = p.analytic.eigenvalue.as_ref().expect("closed form");
    let vec = p.analytic.eigenvector.as_ref().expect("closed form");
    let val_err = max_of(r.lambdas.iter().enumerate().map(|(l, &v)| rel(v, lam(l + 1))));
    let vec_err = max_of((0..r.lambdas.len()).map(|l| {
        let exact = vec(l + 1);
        let x = r.x.col(l);
        let ne = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = x.iter().zip(&exact).map(|(a, b)| a * b).sum::<f64>().signum();
        x.iter().zip(&exact).map(|(a, b)| (a / nx - sign * b / ne).powi(2)).sum::<f64>().sqrt()
    }));
    let mut inv = InvariantTally::new();
    inv.absorb(&r);
    let checks = vec![
        Check::new("converged", r.converged && r.lambdas.len() == 10, format!("{} iterations", r.iterations)),
        Check::new("eigenvalue relative error", val_err <= 1e-10, format!("max {val_err:.2e}")),
        Check::new("eigenvector error", vec_err <= 1e-8, format!("max {vec_err:.2e}")),
        Check::new("runtime", secs <= 30.0, format!("{secs:.2} s")),
        pairing_check(&p, &r, cfg.tol)?,
    ];
    Ok(SuiteReport { suite: "accuracy-spd".into(), checks, invariants: inv })
}

/// `T(−1)/T(0)`, `n = 1000` with the nullspace found by the solver.
pub fn accuracy_spsd() -> Result<SuiteReport> {
    let p = make_t_problem(1000, -1.0)?;
    let cfg = BospConfig::new(10).with_nb(10).with_tol(1e-10);
    let t = Instant::now();
    let r = solve_problem(&p, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let err = max_of(r.lambdas.iter().zip(&TM1_REFERENCE).map(|(a, b)| rel(*a, *b)));
    let mut inv = InvariantTally::new();
    inv.absorb(&r);
    let checks = vec![
        Check::new("converged", r.converged && r.lambdas.len() == 10, format!("{} iterations", r.iterations)),
        Check::new("nullspace rank", r.nullspace_rank == 1, format!("r = {}", r.nullspace_rank)),
        Check::new("reference eigenvalues", err <= 1e-9, format!("max relative error {err:.2e}")),
        Check::new("no zero eigenvalue", r.lambdas[0] > 1e-8, format!("λ₁ = {:.12e}", r.lambdas[0])),
        Check::new("runtime", secs <= 60.0, format!("{secs:.2} s")),
        pairing_check(&p, &r, cfg.tol)?,
    ];
    Ok(SuiteReport { suite: "accuracy-spsd".into(), checks, invariants: inv })
}

/// Solver vs the dense eigenvalues of the full `2n×2n` matrix.
pub fn oracle() -> Result<SuiteReport> {
    let t = Instant::now();
    let mut cases: Vec<(BenchmarkProblem, usize)> = Vec::new();
    for seed in 0..20u64 {
        let n = 10 + seed as usize;
        cases.push((make_random_spd_problem(n, 1e3, seed)?, n / 2));
    }
    for n in [8, 20] {
        cases.push((make_t_problem(n, 0.0)?, n / 2));
        cases.push((make_t_problem(n, 0.0)?, n));
        cases.push((make_t_problem(n, -1.0)?, n / 2));
        cases.push((make_t_problem(n, -1.0)?, n - 1));
    }
    let mut inv = InvariantTally::new();
    let (mut val_err, mut res, mut bi) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for (p, nev) in &cases {
        let cfg = BospConfig::new(*nev).with_tol(1e-10);
        let r = match solve_problem(p, &cfg) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{} nev={nev}: {e}", p.name));
                continue;
            }
        };
        inv.absorb(&r);
        let oracle = lrep_oracle_eigenvalues(&to_dense(p.k.as_ref()), &to_dense(p.m.as_ref()), ORACLE_ZERO_TOL)?;
        if !r.converged || r.lambdas.len() != *nev {
            failures.push(format!("{} nev={nev}: not converged", p.name));
        }
        val_err = val_err.max(max_of(r.lambdas.iter().zip(&oracle).map(|(a, b)| rel(*a, *b))));
        res = res.max(max_of(r.residuals.iter().copied()));
        bi = bi.max(r.biorth_error);
    }
    let secs = t.elapsed().as_secs_f64();
    let checks = vec![
        Check::new(
            "all runs converged",
            failures.is_empty(),
            if failures.is_empty() { format!("{} problems", cases.len()) } else { failures.join("; ") },
        ),
        Check::new("eigenvalues vs dense oracle", val_err <= 1e-8, format!("max relative error {val_err:.2e}")),
        Check::new("K x = λ y, M y = λ x", res <= 1e-8, format!("max normalized residual {res:.2e}")),
        Check::new("XᵀY = I", bi <= 1e-8, format!("max {bi:.2e}")),
        Check::new("runtime", secs <= 60.0, format!("{secs:.2} s")),
    ];
    Ok(SuiteReport { suite: "oracle".into(), checks, invariants: inv })
}

/// `T(0)/T(0)`, `n = 1000`, 300 pairs in batches of 60, moving on and off.
pub fn moving_equivalence() -> Result<SuiteReport> {
    let p = make_t_problem(1000, 0.0)?;
    let base = BospConfig::new(300).with_nb(60).with_tol(1e-8);
    let mut inv = InvariantTally::new();
    let t = Instant::now();
    let on = solve_problem(&p, &base.clone().with_moving(true))?;
    let t_on = t.elapsed().as_secs_f64();
    inv.absorb(&on);
    let t = Instant::now();
    let off = solve_problem(&p, &base.clone().with_moving(false))?;
    let t_off = t.elapsed().as_secs_f64();
    inv.absorb(&off);
    let agree = if on.lambdas.len() == off.lambdas.len() {
        max_of(on.lambdas.iter().zip(&off.lambdas).map(|(a, b)| rel(*a, *b)))
    } else {
        f64::INFINITY
    };
    let bound = (base.s + 2) * base.nb;
    let checks = vec![
        Check::new("both converged", on.converged && off.converged, format!("{} / {} iterations", on.iterations, off.iterations)),
        Check::new("moving vs non-moving eigenvalues", agree <= 1e-8, format!("max relative difference {agree:.2e}")),
        Check::new("max width with moving", on.max_width == bound, format!("{} (expected {bound}); without moving {}", on.max_width, off.max_width)),
        Check::new("moving not slower", t_on <= t_off, format!("{t_on:.1} s vs {t_off:.1} s")),
    ];
    Ok(SuiteReport { suite: "moving-equivalence".into(), checks, invariants: inv })
}

/// Fitted convergence order of the residual histories on `T(0)`, `n = 500`.
pub fn regression() -> Result<SuiteReport> {
    let p = make_t_problem(500, 0.0)?;
    let cfg = BospConfig::new(10).with_nb(10).with_tol(1e-10);
    let r = solve_problem(&p, &cfg)?;
    let mut inv = InvariantTally::new();
    inv.absorb(&r);
    let betas: Vec<f64> = (0..10).map(|i| regression_coefficients(&r.history, i).map_or(f64::NAN, |f| f.beta)).collect();
    let above = betas.iter().filter(|&&b| b > 1.0).count();
    let list = betas.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(" ");
    let checks = vec![
        Check::new("converged", r.converged, format!("{} iterations", r.iterations)),
        Check::new("β > 1 for at least 8 of 10 pairs", above >= 8, format!("{above}/10 above 1: {list}")),
    ];
    Ok(SuiteReport { suite: "regression".into(), checks, invariants: inv })
}

/// CGS vs MGS on the Hilbert/Lauchli blocks.
pub fn biorth() -> Result<SuiteReport> {
    let rows = run_bench(&DEFAULT_SIZES, LAUCHLI_MU)?;
    let ordered = rows.iter().all(|r| r.mgs <= r.cgs);
    let r4 = rows.iter().find(|r| r.n == 4).expect("n = 4 row");
    let r8 = rows.iter().find(|r| r.n == 8).expect("n = 8 row");
    let r20 = rows.iter().find(|r| r.n == 20).expect("n = 20 row");
    let ratio = r20.cgs / r20.mgs;
    let detail = rows.iter().map(|r| format!("n={} cgs {:.2e} mgs {:.2e}", r.n, r.cgs, r.mgs)).collect::<Vec<_>>().join(", ");
    let checks = vec![
        Check::new("MGS <= CGS on every row", ordered, detail),
        Check::new("n = 4 both below 1e-10", r4.cgs <= 1e-10 && r4.mgs <= 1e-10, format!("{:.2e} / {:.2e}", r4.cgs, r4.mgs)),
        Check::new("n = 8 MGS below 1e-6", r8.mgs <= 1e-6, format!("{:.2e}", r8.mgs)),
        Check::new("n = 20 CGS/MGS >= 1e3", ratio >= 1e3, format!("{ratio:.2e}")),
    ];
    Ok(SuiteReport { suite: "biorth".into(), checks, invariants: InvariantTally::new() })
}

/// 200 random SPD projected pairs, `d = 2 .. 50`.
pub fn small_solver() -> Result<SuiteReport> {
    let (mut bi, mut kr, mut mr, mut ev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..200u64 {
        let d = 2 + (i as usize % 49);
        let prob = make_random_spd_problem(d, 10f64.powi(1 + (i % 5) as i32), 1000 + i)?;
        let p = ProjectedLrep::new(&to_dense(prob.k.as_ref()), &to_dense(prob.m.as_ref()))?;
        let sol = solve_small_lrep(&p, d)?;
        let rep = sol.identities(&p);
        bi = bi.max(rep.biorth);
        kr = kr.max(rep.k_residual);
        mr = mr.max(rep.m_residual);
        let oracle = dense_lrep_oracle(&p)?;
        ev = ev.max(max_of(sol.lambdas.iter().zip(&oracle.lambdas).map(|(a, b)| rel(*a, *b))));
    }
    let checks = vec![
        Check::new("X̂ᵀŶ = I", bi <= 1e-10, format!("max {bi:.2e}")),
        Check::new("K̂X̂ = ŶΛ", kr <= 1e-9, format!("max {kr:.2e} relative to ‖K̂‖")),
        Check::new("M̂Ŷ = X̂Λ", mr <= 1e-9, format!("max {mr:.2e} relative to ‖M̂‖")),
        Check::new("eigenvalues vs dense oracle", ev <= 1e-10, format!("max relative error {ev:.2e}")),
    ];
    Ok(SuiteReport { suite: "small-solver".into(), checks, invariants: InvariantTally::new() })
}

/// Weighted problems at `n = 27` against the dense oracle of
/// `(B⁻¹K, B⁻¹M)`, and `B = I` against the unweighted path.
pub fn generalized() -> Result<SuiteReport> {
    let n = 27;
    let bases = [make_fd_laplacian_problem(3)?, make_t_problem(n, 0.0)?, make_random_spd_problem(n, 1e2, 5)?];
    let w: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7) % 11) as f64 / 5.0).collect();
    let cfg = BospConfig::new(8).with_nb(4).with_tol(1e-10);
    let mut inv = InvariantTally::new();
    let (mut oracle_err, mut same_err) = (0.0f64, 0.0f64);
    for base in &bases {
        let p = make_generalized_problem(base, Arc::new(DiagonalOperator::new(w.clone())))?;
        let r = solve_problem(&p, &cfg)?;
        inv.absorb(&r);
        let mut kd = to_dense(p.k.as_ref());
        let mut md = to_dense(p.m.as_ref());
        for j in 0..n {
            for i in 0..n {
                kd[(i, j)] /= w[i];
                md[(i, j)] /= w[i];
            }
        }
        let oracle = lrep_oracle_eigenvalues(&kd, &md, ORACLE_ZERO_TOL)?;
        oracle_err = oracle_err.max(if r.converged {
            max_of(r.lambdas.iter().zip(&oracle).map(|(a, b)| rel(*a, *b)))
        } else {
            f64::INFINITY
        });

        let plain = solve_problem(base, &cfg)?;
        let unit = solve(base.k.as_ref(), base.m.as_ref(), &InnerProduct::weighted(Arc::new(IdentityOperator::new(n))), &cfg, None)?;
        inv.absorb(&plain);
        inv.absorb(&unit);
        same_err = same_err.max(max_of(plain.lambdas.iter().zip(&unit.lambdas).map(|(a, b)| rel(*a, *b))));
    }
    let checks = vec![
        Check::new("B = diag vs B⁻¹-transformed oracle", oracle_err <= 1e-9, format!("max relative error {oracle_err:.2e}")),
        Check::new("B = I vs unweighted path", same_err <= 1e-12, format!("max relative difference {same_err:.2e}")),
    ];
    Ok(SuiteReport { suite: "generalized".into(), checks, invariants: inv })
}
