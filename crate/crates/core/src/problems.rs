//! Benchmark problem generators and the name registry used by the CLI.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::operator::to_dense;
use crate::linalg::{
    laplacian_3d, read_matrix_market, CsrMatrix, DenseMatrix, IdentityOperator, InnerProduct, SharedOperator,
};
use crate::nullspace::{analytic_nullspace_t, GeneralizedNullspace};

/// `ℓ ↦ value` with `ℓ` 1-based.
pub type EigenvalueFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
/// `ℓ ↦ unnormalized eigenvector x_ℓ`, `ℓ` 1-based.
pub type EigenvectorFn = Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>;

/// Closed-form knowledge about a problem, whichever parts exist.
#[derive(Clone, Default)]
pub struct Analytic {
    pub eigenvalue: Option<EigenvalueFn>,
    pub eigenvector: Option<EigenvectorFn>,
    pub nullspace: Option<GeneralizedNullspace>,
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub k: SharedOperator,
    pub m: SharedOperator,
    /// `None` means `B = I`.
    pub b: Option<SharedOperator>,
    pub analytic: Analytic,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("n", &self.dim())
            .field("weighted", &self.b.is_some())
            .field("analytic_eigenvalues", &self.analytic.eigenvalue.is_some())
            .field("analytic_nullspace", &self.analytic.nullspace.as_ref().map(|ns| ns.r))
            .finish()
    }
}

impl BenchmarkProblem {
    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    pub fn inner_product(&self) -> InnerProduct {
        match &self.b {
            Some(b) => InnerProduct::weighted(b.clone()),
            None => InnerProduct::identity(),
        }
    }

    /// Dimension checks always; for `n <= max_dense` also checks symmetry,
    /// `K ⪰ 0` and `M, B ≻ 0` on dense copies.
    pub fn validate(&self, max_dense: usize) -> Result<()> {
        let n = self.dim();
        if self.m.dim() != n {
            return Err(Error::DimensionMismatch { op: "problem M", expected: n, got: self.m.dim() });
        }
        if let Some(b) = &self.b {
            if b.dim() != n {
                return Err(Error::DimensionMismatch { op: "problem B", expected: n, got: b.dim() });
            }
        }
        if n > max_dense {
            return Ok(());
        }
        check_symmetric_min_eig("K", &to_dense(self.k.as_ref()), false)?;
        check_symmetric_min_eig("M", &to_dense(self.m.as_ref()), true)?;
        if let Some(b) = &self.b {
            check_symmetric_min_eig("B", &to_dense(b.as_ref()), true)?;
        }
        Ok(())
    }
}

fn check_symmetric_min_eig(name: &str, a: &DenseMatrix, definite: bool) -> Result<()> {
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    if a.max_asymmetry() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let ev = SymmetricEigen::new(DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice())).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = -1e-12 * scale * a.rows() as f64;
    if lo < floor || (definite && lo <= 0.0) {
        let kind = if definite { "positive definite" } else { "positive semi-definite" };
        return Err(Error::InvalidArgument(format!("{name} is not {kind} (min eigenvalue {lo:e})")));
    }
    Ok(())
}

/// `K = T(s)`, `M = T(0)` with `T(s) = tridiag(−1, 2, −1)` except
/// `T₁₁ = T_nn = 2 + s`. For `s = 0` the eigenpairs are known in closed
/// form; for `s = −1` the two-dimensional nullspace is.
pub fn make_t_problem(n: usize, s: f64) -> Result<BenchmarkProblem> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("T problem needs n >= 3, got {n}")));
    }
    let analytic = if s == 0.0 {
        let h = PI / (n + 1) as f64;
        Analytic {
            eigenvalue: Some(Arc::new(move |l| {
                let t = (l as f64 * h / 2.0).sin();
                4.0 * t * t
            })),
            eigenvector: Some(Arc::new(move |l| (1..=n).map(|k| (l as f64 * k as f64 * h).sin()).collect())),
            nullspace: Some(GeneralizedNullspace::empty(n)),
        }
    } else if s == -1.0 {
        Analytic { eigenvalue: None, eigenvector: None, nullspace: Some(analytic_nullspace_t(n)) }
    } else {
        return Err(Error::InvalidArgument(format!("T problem supports s in {{0, -1}}, got {s}")));
    };
    let name = if s == 0.0 { "t0" } else { "tm1" };
    Ok(BenchmarkProblem {
        name: format!("{name}-n{n}"),
        k: Arc::new(CsrMatrix::tridiag_t(n, s)),
        m: Arc::new(CsrMatrix::tridiag_t(n, 0.0)),
        b: None,
        analytic,
    })
}

/// Sorted eigenvalues of `h⁻²·L₃` on an `m³` grid, `h = 1/(m+1)`.
pub fn fd_laplacian_eigenvalues(m: usize) -> Vec<f64> {
    let h = 1.0 / (m + 1) as f64;
    let one: Vec<f64> = (1..=m).map(|i| 4.0 * (PI * i as f64 * h / 2.0).sin().powi(2) / (h * h)).collect();
    let mut all = Vec::with_capacity(m * m * m);
    for a in &one {
        for b in &one {
            for c in &one {
                all.push(a + b + c);
            }
        }
    }
    all.sort_by(f64::total_cmp);
    all
}

/// `K = h⁻²·L₃` (7-point Dirichlet Laplacian, `n = m³`), `M = I`. The
/// LREP eigenvalues are the square roots of those of `K`.
pub fn make_fd_laplacian_problem(m: usize) -> Result<BenchmarkProblem> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("FD Laplacian needs m >= 2, got {m}")));
    }
    let h = 1.0 / (m + 1) as f64;
    let n = m * m * m;
    let eig = Arc::new(fd_laplacian_eigenvalues(m));
    Ok(BenchmarkProblem {
        name: format!("fd-laplace-m{m}"),
        k: Arc::new(laplacian_3d(m).scaled(1.0 / (h * h))),
        m: Arc::new(IdentityOperator::new(n)),
        b: None,
        analytic: Analytic {
            eigenvalue: Some(Arc::new(move |l| eig[l - 1].sqrt())),
            eigenvector: None,
            nullspace: Some(GeneralizedNullspace::empty(n)),
        },
    })
}

/// `QᵀDQ` with `Q` orthogonal from the QR factor of a Gaussian matrix and
/// `D` log-uniform on `[1, cond]` (both endpoints attained).
fn random_spd(n: usize, cond: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let lc = cond.ln();
    let mut d: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            i if i + 1 == n => cond,
            _ => (lc * rand::Rng::random::<f64>(rng)).exp(),
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let qd = DMatrix::from_fn(n, n, |i, j| q[(j, i)] * d[j]);
    let a = qd * q;
    DenseMatrix::symmetric_from_lower(n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Dense `K` and `M`, each `QᵀDQ` with `κ = cond_target`. Deterministic in
/// `seed`; `cond_target = 1` gives `K = M = I` exactly.
pub fn make_random_spd_problem(n: usize, cond_target: f64, seed: u64) -> Result<BenchmarkProblem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("random SPD problem needs n >= 2, got {n}")));
    }
    if !(cond_target >= 1.0) || !cond_target.is_finite() {
        return Err(Error::InvalidArgument(format!("cond_target must be finite and >= 1, got {cond_target}")));
    }
    let (k, m) = if cond_target == 1.0 {
        (DenseMatrix::identity(n), DenseMatrix::identity(n))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_spd(n, cond_target, &mut rng);
        let m = random_spd(n, cond_target, &mut rng);
        (k, m)
    };
    Ok(BenchmarkProblem {
        name: format!("random-spd-n{n}-c{cond_target:e}-s{seed}"),
        k: Arc::new(k),
        m: Arc::new(m),
        b: None,
        analytic: Analytic { nullspace: Some(GeneralizedNullspace::empty(n)), ..Default::default() },
    })
}

/// The base `(K, M)` with the inner-product weight `B`. Closed forms of the
/// base no longer apply and are dropped.
pub fn make_generalized_problem(base: &BenchmarkProblem, b: SharedOperator) -> Result<BenchmarkProblem> {
    if b.dim() != base.dim() {
        return Err(Error::DimensionMismatch { op: "generalized B", expected: base.dim(), got: b.dim() });
    }
    Ok(BenchmarkProblem {
        name: format!("{}-weighted", base.name),
        k: base.k.clone(),
        m: base.m.clone(),
        b: Some(b),
        analytic: Analytic::default(),
    })
}

/// `K`, `M` and optionally `B` from Matrix Market files.
pub fn make_mm_problem(k: &std::path::Path, m: &std::path::Path, b: Option<&std::path::Path>) -> Result<BenchmarkProblem> {
    let kk = read_matrix_market(k)?;
    let mm = read_matrix_market(m)?;
    let bb = b.map(read_matrix_market).transpose()?;
    for (name, a) in [("K", Some(&kk)), ("M", Some(&mm)), ("B", bb.as_ref())] {
        if let Some(a) = a {
            if a.rows() != a.cols() {
                return Err(Error::InvalidArgument(format!("{name} is {}x{}, not square", a.rows(), a.cols())));
            }
            if a.rows() != kk.rows() {
                return Err(Error::DimensionMismatch { op: "Matrix Market input", expected: kk.rows(), got: a.rows() });
            }
            if !a.is_symmetric() {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(BenchmarkProblem {
        name: format!("mm-{}", k.file_stem().and_then(|s| s.to_str()).unwrap_or("k")),
        k: Arc::new(kk),
        m: Arc::new(mm),
        b: bb.map(|b| Arc::new(b) as SharedOperator),
        analytic: Analytic::default(),
    })
}

pub const PROBLEM_NAMES: [&str; 5] = ["t0", "tm1", "fd-laplace", "random-spd", "mm-files"];

/// Parameters understood by [`build_problem`]. `n` is the matrix order; for
/// `fd-laplace` it must be a perfect cube `m³`.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub n: usize,
    pub cond: f64,
    pub seed: u64,
    pub k_file: Option<PathBuf>,
    pub m_file: Option<PathBuf>,
    pub b_file: Option<PathBuf>,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self { n: 1000, cond: 1e4, seed: 0, k_file: None, m_file: None, b_file: None }
    }
}

fn cube_root(n: usize) -> Option<usize> {
    let m = (n as f64).cbrt().round() as usize;
    (m * m * m == n).then_some(m)
}

pub fn build_problem(name: &str, p: &ProblemParams) -> Result<BenchmarkProblem> {
    match name {
        "t0" => make_t_problem(p.n, 0.0),
        "tm1" => make_t_problem(p.n, -1.0),
        "fd-laplace" => {
            let m = cube_root(p.n)
                .ok_or_else(|| Error::InvalidArgument(format!("fd-laplace needs n = m^3, got {}", p.n)))?;
            make_fd_laplacian_problem(m)
        }
        "random-spd" => make_random_spd_problem(p.n, p.cond, p.seed),
        "mm-files" => {
            let (Some(k), Some(m)) = (&p.k_file, &p.m_file) else {
                return Err(Error::InvalidArgument("mm-files needs both a K and an M file".into()));
            };
            make_mm_problem(k, m, p.b_file.as_deref())
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown problem '{other}' (expected one of {})",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}
