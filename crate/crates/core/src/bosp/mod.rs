//! The outer subspace iteration: Rayleigh–Ritz on the structure-preserving
//! projection, previous-direction and Newton-type search blocks, deflation
//! against the nullspace and locked pairs, batching and moving.

mod history;
mod state;

pub use history::{regression_coefficients, RegressionFit, ResidualHistory};
pub use state::{initialize, iterate_once, IterationRecord, SolverState, StepOutcome};

use std::time::Instant;

use crate::biorth::{biorth_residual, DEFAULT_DROP_TOL};
use crate::error::{Error, Result};
use crate::linalg::block::{block_apply, BlockVectors};
use crate::linalg::{CountingOperator, InnerProduct, LinearOperator};
use crate::nullspace::{compute_nullspace_with, GeneralizedNullspace, NullspaceOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct BospConfig {
    pub nev: usize,
    pub nb: usize,
    pub tol: f64,
    pub ngs: usize,
    pub s: usize,
    pub moving: bool,
    pub max_outer_iter: usize,
    pub rng_seed: u64,
    pub inner_cg_tol: f64,
    pub inner_cg_max_iter: usize,
    pub drop_tol: f64,
    /// Measure the biorthogonality invariants every this many iterations;
    /// 0 disables the checks.
    pub check_every: usize,
    pub rank_hint: Option<usize>,
}

/// `min(⌈nev/5⌉, 150)`, or `nev` itself when `nev < 5`.
pub fn default_batch_size(nev: usize) -> usize {
    if nev < 5 {
        nev.max(1)
    } else {
        nev.div_ceil(5).min(150)
    }
}

impl BospConfig {
    pub fn new(nev: usize) -> Self {
        let nb = default_batch_size(nev);
        Self {
            nev,
            nb,
            tol: 1e-8,
            ngs: 1,
            s: 3,
            moving: nev > 3 * nb,
            max_outer_iter: 500,
            rng_seed: 1,
            inner_cg_tol: 1e-2,
            inner_cg_max_iter: 20,
            drop_tol: DEFAULT_DROP_TOL,
            check_every: 1,
            rank_hint: None,
        }
    }

    /// Sets the batch size and recomputes the default for `moving`.
    pub fn with_nb(mut self, nb: usize) -> Self {
        self.nb = nb;
        self.moving = self.nev > self.s * nb;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_moving(mut self, moving: bool) -> Self {
        self.moving = moving;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.nev == 0 {
            return bad("nev must be positive".into());
        }
        if self.nb == 0 || self.nb > self.nev {
            return bad(format!("nb = {} must lie in 1..=nev ({})", self.nb, self.nev));
        }
        if self.s < 2 {
            return bad(format!("s = {} must be at least 2", self.s));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if self.ngs == 0 {
            return bad("ngs must be positive".into());
        }
        Ok(())
    }
}

/// `K`, `M` wrapped with application counters, plus the inner product.
pub struct LrepOperators<'a> {
    pub k: CountingOperator<'a>,
    pub m: CountingOperator<'a>,
    pub ip: InnerProduct,
}

impl<'a> LrepOperators<'a> {
    pub fn new(k: &'a dyn LinearOperator, m: &'a dyn LinearOperator, ip: InnerProduct) -> Result<Self> {
        if k.dim() != m.dim() {
            return Err(Error::DimensionMismatch { op: "K vs M", expected: k.dim(), got: m.dim() });
        }
        if let Some(b) = ip.weight() {
            if b.dim() != k.dim() {
                return Err(Error::DimensionMismatch { op: "K vs B", expected: k.dim(), got: b.dim() });
            }
        }
        Ok(Self { k: CountingOperator::new(k), m: CountingOperator::new(m), ip })
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Ascending.
    pub lambdas: Vec<f64>,
    pub x: BlockVectors,
    pub y: BlockVectors,
    pub iterations: usize,
    /// Normalized residuals recomputed from the returned vectors.
    pub residuals: Vec<f64>,
    pub history: ResidualHistory,
    pub converged: bool,
    /// Length of the converged prefix.
    pub nev_conv: usize,
    /// `‖XᵀBY − I‖₂` of the returned vectors.
    pub biorth_error: f64,
    pub records: Vec<IterationRecord>,
    pub max_width: usize,
    pub k_applications: usize,
    pub m_applications: usize,
    pub nullspace_rank: usize,
    pub seconds: f64,
}

/// Normalized residuals `‖[Kx − λBy; My − λBx]‖ / ((1+λ)‖[y; x]‖)`.
pub fn normalized_residuals(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    ip: &InnerProduct,
    lambdas: &[f64],
    x: &BlockVectors,
    y: &BlockVectors,
) -> Result<Vec<f64>> {
    let kx = block_apply(k, x)?;
    let my = block_apply(m, y)?;
    let bx = ip.apply_weight(x)?;
    let by = ip.apply_weight(y)?;
    Ok(state::residual_columns(lambdas, &kx, &my, &bx, &by, x, y))
}

/// Normalized residual of the reflected pair `(−y, x)` against `−λ`.
pub fn pairing_residuals(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    ip: &InnerProduct,
    lambdas: &[f64],
    x: &BlockVectors,
    y: &BlockVectors,
) -> Result<Vec<f64>> {
    let neg_y = y.lin_comb(-1.0, y, 0.0)?;
    // H[ξ₁; ξ₂] = [K ξ₂; M ξ₁] with ξ₁ = −y, ξ₂ = x
    let top = block_apply(k, x)?;
    let bot = block_apply(m, &neg_y)?;
    let b1 = ip.apply_weight(&neg_y)?;
    let b2 = ip.apply_weight(x)?;
    Ok((0..lambdas.len())
        .map(|j| {
            let mu = -lambdas[j];
            let r1: f64 = top.col(j).iter().zip(b1.col(j)).map(|(a, b)| (a - mu * b).powi(2)).sum();
            let r2: f64 = bot.col(j).iter().zip(b2.col(j)).map(|(a, b)| (a - mu * b).powi(2)).sum();
            let nrm: f64 = neg_y.col(j).iter().chain(x.col(j)).map(|v| v * v).sum();
            (r1 + r2).sqrt() / ((1.0 + mu.abs()) * nrm.sqrt())
        })
        .collect())
}

/// Computes the `nev` smallest positive eigenpairs. The nullspace is
/// computed when `ns` is `None`.
pub fn solve(
    k: &dyn LinearOperator,
    m: &dyn LinearOperator,
    ip: &InnerProduct,
    cfg: &BospConfig,
    ns: Option<&GeneralizedNullspace>,
) -> Result<EigenResult> {
    let start = Instant::now();
    cfg.validate()?;
    let ops = LrepOperators::new(k, m, ip.clone())?;
    let owned;
    let ns = match ns {
        Some(ns) => ns,
        None => {
            let opts = NullspaceOptions { r_hint: cfg.rank_hint, ..Default::default() };
            owned = compute_nullspace_with(k, m, ip, &opts)?;
            &owned
        }
    };
    let n = ops.dim();
    if cfg.nev + ns.r > n {
        return Err(Error::InvalidArgument(format!(
            "nev = {} exceeds the {} positive eigenvalues available",
            cfg.nev,
            n - ns.r
        )));
    }

    let mut st = initialize(&ops, ns, cfg)?;
    while !st.done && st.iter < cfg.max_outer_iter {
        iterate_once(&mut st, &ops, ns, cfg)?;
    }
    finish(st, &ops, ns, cfg, start)
}

fn finish(
    st: SolverState,
    ops: &LrepOperators,
    ns: &GeneralizedNullspace,
    cfg: &BospConfig,
    start: Instant,
) -> Result<EigenResult> {
    let (lambdas, x, y) = st.current_pairs(cfg.nev)?;
    let residuals = normalized_residuals(ops.k.inner(), ops.m.inner(), &ops.ip, &lambdas, &x, &y)?;
    let biorth_error = biorth_residual(&x, &y, &ops.ip)?;
    Ok(EigenResult {
        converged: st.done,
        nev_conv: st.nev_conv().min(cfg.nev),
        iterations: st.iter,
        history: st.history,
        records: st.records,
        max_width: st.max_width,
        k_applications: ops.k.count(),
        m_applications: ops.m.count(),
        nullspace_rank: ns.r,
        seconds: start.elapsed().as_secs_f64(),
        lambdas,
        x,
        y,
        residuals,
        biorth_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_size_rule() {
        assert_eq!(default_batch_size(3), 3);
        assert_eq!(default_batch_size(5), 1);
        assert_eq!(default_batch_size(10), 2);
        assert_eq!(default_batch_size(11), 3);
        assert_eq!(default_batch_size(5000), 150);
        let c = BospConfig::new(10);
        assert!(c.moving);
        let c = BospConfig::new(10).with_nb(10);
        assert!(!c.moving);
    }

    #[test]
    fn config_validation() {
        assert!(BospConfig::new(4).validate().is_ok());
        let mut c = BospConfig::new(4);
        c.s = 1;
        assert!(c.validate().is_err());
        assert!(BospConfig::new(4).with_nb(5).validate().is_err());
        assert!(BospConfig::new(4).with_tol(0.0).validate().is_err());
    }
}
