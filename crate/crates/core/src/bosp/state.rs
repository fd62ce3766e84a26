use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BospConfig, LrepOperators, ResidualHistory};
use crate::biorth::{biorth_against, biorth_with, BiorthBasis, BiorthOptions, Scheme};
use crate::error::{Error, Result};
use crate::linalg::block::{block_apply, block_axpy, block_inner, block_product, plain_gram, BlockVectors};
use crate::linalg::dense::{norm2, DenseMatrix};
use crate::linalg::{cg_solve, InnerProduct};
use crate::nullspace::GeneralizedNullspace;
use crate::projected::{assemble_from_images, solve_small_lrep, ProjectedLrep, SmallEigenSolution};

/// Relative norm left after projection below which a new search column is
/// treated as lying in the existing space.
const CANCEL_TOL: f64 = 1e-13;

/// Small-space directions shorter than this are dropped before
/// biorthogonalization.
const SMALL_DIR_TOL: f64 = 1e-14;

/// Sampled invariants above this are measured exactly.
const EXACT_NORM_ABOVE: f64 = 1e-11;
/// Gram entries of new directions off by more than this trigger another pass.
const CROSS_TOL: f64 = 1e-13;
/// New directions still off by more than this after the extra passes are
/// dropped.
const SETTLE_DROP: f64 = 1e-11;

/// Search space `U = [X, P, W]`, `V = [Y, Q, Z]` with `UᵀBV = I`, plus the
/// pairs already locked out of it.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: BlockVectors,
    pub v: BlockVectors,
    pub wx: usize,
    pub wp: usize,
    pub ww: usize,
    /// Ritz values of the window `X` from the last projection.
    pub lambdas: Vec<f64>,
    /// Normalized residuals of the window, `NaN` where not evaluated.
    pub window_residuals: Vec<f64>,
    /// Leading converged columns of the window. Never decreases except by
    /// locking, which moves the columns to `locked`.
    pub prefix: usize,
    pub locked: BiorthBasis,
    pub locked_lambdas: Vec<f64>,
    pub locked_residuals: Vec<f64>,
    pub history: ResidualHistory,
    pub records: Vec<IterationRecord>,
    pub iter: usize,
    pub done: bool,
    pub max_width: usize,
    /// Set once the window holds Ritz vectors.
    pub has_ritz: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Width of `U` at the projection.
    pub d: usize,
    pub nev_conv: usize,
    pub locked: usize,
    /// Upper bound on `‖UᵀBV − I‖₂` at the top of the iteration.
    pub biorth_dev: Option<f64>,
    /// Upper bound on the 2-norm of the cross-Grams of `(U, V)` against the
    /// nullspace.
    pub cross_nullspace: Option<f64>,
    /// Same against the locked pairs.
    pub cross_locked: Option<f64>,
    pub k_applications: usize,
    pub m_applications: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Converged,
    Continue,
}

impl SolverState {
    pub fn nev_conv(&self) -> usize {
        self.locked.len() + self.prefix
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    /// Locked pairs followed by the leading window pairs, `nev` in total,
    /// sorted ascending.
    pub fn current_pairs(&self, nev: usize) -> Result<(Vec<f64>, BlockVectors, BlockVectors)> {
        let take = nev.saturating_sub(self.locked.len()).min(self.wx);
        let mut lam = self.locked_lambdas.clone();
        let mut x = self.locked.p.clone();
        let mut y = self.locked.q.clone();
        if self.has_ritz {
            lam.extend_from_slice(&self.lambdas[..take]);
            x.push_columns(&self.u.column_range(0..take))?;
            y.push_columns(&self.v.column_range(0..take))?;
        }
        let mut order: Vec<usize> = (0..lam.len()).collect();
        order.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
        Ok((order.iter().map(|&i| lam[i]).collect(), x.select_columns(&order), y.select_columns(&order)))
    }
}

fn uniform_block(n: usize, m: usize, rng: &mut ChaCha8Rng) -> BlockVectors {
    let mut b = BlockVectors::zeros(n, m);
    b.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
    b
}

fn strong_biorth(drop_tol: f64) -> BiorthOptions {
    BiorthOptions { scheme: Scheme::Modified, drop_tol, cancel_tol: CANCEL_TOL, second_pass: true }
}

/// Random blocks projected against the nullspace and biorthogonalized.
pub fn initialize(ops: &LrepOperators, ns: &GeneralizedNullspace, cfg: &BospConfig) -> Result<SolverState> {
    cfg.validate()?;
    let n = ops.dim();
    let avail = n.saturating_sub(ns.r);
    let wx_target = if cfg.moving { cfg.s * cfg.nb } else { cfg.nev };
    let d = (wx_target + 2 * cfg.nb).min(avail);
    let wx = wx_target.min(d);
    let wp = cfg.nb.min(d - wx);
    let ww = d - wx - wp;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // V starts equal to U: UᵀBU is then SPD and the biorthogonal basis is
    // as well conditioned as an orthonormal one
    let u = uniform_block(n, d, &mut rng);
    let v = u.clone();
    let nsb = ns.basis();
    let (u, v) = biorth_against(&[&nsb], &u, &v, &ops.ip)?;
    let (u, v) = biorth_against(&[&nsb], &u, &v, &ops.ip)?;
    let out = biorth_with(&u, &v, &ops.ip, &strong_biorth(cfg.drop_tol))?;
    if out.basis.len() < d {
        return Err(Error::InitializationFailure { kept: out.basis.len(), required: d });
    }
    let out = biorth_with(
        &out.basis.p,
        &out.basis.q,
        &ops.ip,
        &BiorthOptions { cancel_tol: 0.0, ..strong_biorth(cfg.drop_tol) },
    )?;
    if out.basis.len() < d {
        return Err(Error::InitializationFailure { kept: out.basis.len(), required: d });
    }
    Ok(SolverState {
        u: out.basis.p,
        v: out.basis.q,
        wx,
        wp,
        ww,
        lambdas: Vec::new(),
        window_residuals: Vec::new(),
        prefix: 0,
        locked: BiorthBasis::empty(n),
        locked_lambdas: Vec::new(),
        locked_residuals: Vec::new(),
        history: ResidualHistory::new(cfg.tol),
        records: Vec::new(),
        iter: 0,
        done: false,
        max_width: d,
        has_ritz: false,
    })
}

pub(crate) fn residual_columns(
    lambdas: &[f64],
    kx: &BlockVectors,
    my: &BlockVectors,
    bx: &BlockVectors,
    by: &BlockVectors,
    x: &BlockVectors,
    y: &BlockVectors,
) -> Vec<f64> {
    (0..lambdas.len())
        .map(|j| {
            let l = lambdas[j];
            let r1: f64 = kx.col(j).iter().zip(by.col(j)).map(|(a, b)| (a - l * b).powi(2)).sum();
            let r2: f64 = my.col(j).iter().zip(bx.col(j)).map(|(a, b)| (a - l * b).powi(2)).sum();
            let xi = (norm2(x.col(j)).powi(2) + norm2(y.col(j)).powi(2)).sqrt();
            (r1 + r2).sqrt() / ((1.0 + l) * xi)
        })
        .collect()
}

/// `‖E‖₂`, or an upper bound on it when that bound is already tiny. The
/// bound is the smaller of `‖E‖_F` and `√(‖E‖₁‖E‖_∞)`.
fn two_norm_bound(e: &DenseMatrix) -> f64 {
    let col_max = (0..e.cols()).map(|j| e.col(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let row_max = (0..e.rows()).map(|i| (0..e.cols()).map(|j| e[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let bound = e.frobenius_norm().min((col_max * row_max).sqrt());
    if bound <= EXACT_NORM_ABOVE {
        return bound;
    }
    let m = nalgebra::DMatrix::from_column_slice(e.rows(), e.cols(), e.as_slice());
    m.singular_values().max()
}

fn dev_from_identity(g: &DenseMatrix) -> f64 {
    let mut e = g.clone();
    for i in 0..g.rows().min(g.cols()) {
        e[(i, i)] -= 1.0;
    }
    two_norm_bound(&e)
}

fn cross_norm(basis: &BiorthBasis, u: &BlockVectors, v: &BlockVectors, ip: &InnerProduct) -> Result<f64> {
    if basis.is_empty() || u.ncols() == 0 {
        return Ok(0.0);
    }
    let a = two_norm_bound(&block_inner(ip, &basis.q, u)?);
    let b = two_norm_bound(&block_inner(ip, &basis.p, v)?);
    Ok(a.max(b))
}

/// Rebuilds `(U, V)` after a loss of definiteness: projects against every
/// deflated pair and biorthogonalizes again. The partition into `X`, `P`,
/// `W` is kept where columns survive.
fn recover(st: &mut SolverState, ops: &LrepOperators, ns: &GeneralizedNullspace, cfg: &BospConfig) -> Result<()> {
    let nsb = ns.basis();
    let (u, v) = biorth_against(&[&nsb, &st.locked], &st.u, &st.v, &ops.ip)?;
    let (u, v) = biorth_against(&[&nsb, &st.locked], &u, &v, &ops.ip)?;
    let out = biorth_with(&u, &v, &ops.ip, &strong_biorth(cfg.drop_tol))?;
    let in_range = |lo: usize, hi: usize| out.kept_columns.iter().filter(|&&c| c >= lo && c < hi).count();
    let wx = in_range(0, st.wx);
    let wp = in_range(st.wx, st.wx + st.wp);
    let ww = out.kept_columns.len() - wx - wp;
    if wx < st.wx {
        // window columns no longer line up with their previous Ritz vectors
        st.has_ritz = false;
    }
    st.u = out.basis.p;
    st.v = out.basis.q;
    st.wx = wx;
    st.wp = wp;
    st.ww = ww;
    Ok(())
}

struct Projection {
    ku: BlockVectors,
    mv: BlockVectors,
    sol: SmallEigenSolution,
}

fn project(st: &SolverState, ops: &LrepOperators) -> Result<Projection> {
    let ku = block_apply(&ops.k, &st.u)?;
    let mv = block_apply(&ops.m, &st.v)?;
    let p: ProjectedLrep = assemble_from_images(&st.u, &ku, &st.v, &mv)?;
    let sol = solve_small_lrep(&p, p.d())?;
    Ok(Projection { ku, mv, sol })
}

fn is_recoverable(e: &Error) -> bool {
    matches!(e, Error::NullspaceLeak { .. } | Error::DegenerateSpectrum { .. })
}

/// Columns `range` of a dense matrix.
fn dense_cols(a: &DenseMatrix, range: std::ops::Range<usize>) -> DenseMatrix {
    a.select_columns(&range.collect::<Vec<_>>())
}

/// The small problem assumes `UᵀBV = I`, so any deviation already present
/// in the Ritz block is carried along forever. Corrects the first `cols`
/// columns of `y` to first order, `Y ← Y(2I − XᵀBY)`.
fn restore_biorth(x: &BlockVectors, y: &mut BlockVectors, by: &BlockVectors, cols: usize) -> Result<()> {
    let xs = x.column_range(0..cols);
    let mut e = plain_gram(&xs, &by.column_range(0..cols));
    for i in 0..cols {
        e[(i, i)] -= 1.0;
    }
    if e.max_abs() == 0.0 {
        return Ok(());
    }
    let ys = y.column_range(0..cols);
    let ye = block_product(&ys, &e)?;
    for j in 0..cols {
        for (a, b) in y.col_mut(j).iter_mut().zip(ye.col(j)) {
            *a -= b;
        }
    }
    Ok(())
}

/// One outer iteration. Sets `st.done` when the requested pairs have
/// converged; the window then holds the Ritz vectors.
pub fn iterate_once(
    st: &mut SolverState,
    ops: &LrepOperators,
    ns: &GeneralizedNullspace,
    cfg: &BospConfig,
) -> Result<StepOutcome> {
    if st.done {
        return Ok(StepOutcome::Converged);
    }
    let ip = &ops.ip;
    let nsb = ns.basis();
    st.iter += 1;
    st.max_width = st.max_width.max(st.width());

    // invariants at the top of the iteration
    let sample = cfg.check_every > 0 && (st.iter - 1).is_multiple_of(cfg.check_every);
    let (biorth_dev, cross_nullspace, cross_locked) = if sample {
        (
            Some(dev_from_identity(&block_inner(ip, &st.u, &st.v)?)),
            Some(cross_norm(&nsb, &st.u, &st.v, ip)?),
            Some(cross_norm(&st.locked, &st.u, &st.v, ip)?),
        )
    } else {
        (None, None, None)
    };
    let d_at_projection = st.width();

    // Step 3: projection and small solve, with one recovery attempt
    let proj = match project(st, ops) {
        Ok(p) => p,
        Err(e) if is_recoverable(&e) => {
            recover(st, ops, ns, cfg)?;
            project(st, ops).map_err(|e2| {
                Error::NumericalAbort(format!(
                    "projection failed after recovery at iteration {}: {e2} (first failure: {e}; width {}, locked {}, biorth dev {:?})",
                    st.iter,
                    st.width(),
                    st.locked.len(),
                    biorth_dev
                ))
            })?
        }
        Err(e) => return Err(e),
    };
    let d = st.width();
    let sol = &proj.sol;
    let needed = cfg.nev - st.locked.len();
    let old_wx = st.wx;

    // Step 4: pull back the window and measure residuals
    let pull = |range: std::ops::Range<usize>| -> Result<[BlockVectors; 6]> {
        let xh = dense_cols(&sol.xhat, range.clone());
        let yh = dense_cols(&sol.yhat, range);
        let x = block_product(&st.u, &xh)?;
        let y = block_product(&st.v, &yh)?;
        let kx = block_product(&proj.ku, &xh)?;
        let my = block_product(&proj.mv, &yh)?;
        let bx = ip.apply_weight(&x)?;
        let by = ip.apply_weight(&y)?;
        Ok([x, y, kx, my, bx, by])
    };
    let wx_eval = old_wx.min(d);
    let [mut xt, mut yt, mut kxt, mut myt, mut bxt, mut byt] = pull(0..wx_eval)?;
    let lam_eval = &sol.lambdas[..wx_eval];
    let mut res = residual_columns(lam_eval, &kxt, &myt, &bxt, &byt, &xt, &yt);

    let honest = res.iter().take(needed).take_while(|&&r| r < cfg.tol).count();
    st.prefix = if st.has_ritz { st.prefix.max(honest) } else { honest }.min(needed);
    st.has_ritz = true;

    let mut row: Vec<Option<f64>> = vec![None; cfg.nev];
    for (j, r) in st.locked_residuals.iter().enumerate() {
        row[j] = Some(*r);
    }
    for (j, r) in res.iter().enumerate().take(needed) {
        row[st.locked.len() + j] = Some(*r);
    }
    st.history.rows.push(row);
    st.records.push(IterationRecord {
        iter: st.iter,
        d: d_at_projection,
        nev_conv: st.nev_conv().min(cfg.nev),
        locked: st.locked.len(),
        biorth_dev,
        cross_nullspace,
        cross_locked,
        k_applications: ops.k.count(),
        m_applications: ops.m.count(),
    });

    if st.prefix >= needed {
        restore_biorth(&xt, &mut yt, &byt, wx_eval)?;
        st.u = xt;
        st.v = yt;
        st.wx = wx_eval;
        st.wp = 0;
        st.ww = 0;
        st.lambdas = lam_eval.to_vec();
        st.window_residuals = res;
        st.done = true;
        return Ok(StepOutcome::Converged);
    }

    // locking
    let k = if cfg.moving {
        if st.prefix >= 2 * cfg.nb {
            2 * cfg.nb
        } else {
            0
        }
    } else {
        cfg.nb * (st.prefix / cfg.nb)
    };
    let wx_new = if cfg.moving { (cfg.s * cfg.nb).min(d - k) } else { (old_wx - k).min(d - k) };
    let e = (k + wx_new).max(wx_eval);
    if e > wx_eval {
        let [x2, y2, kx2, my2, bx2, by2] = pull(wx_eval..e)?;
        let l2 = &sol.lambdas[wx_eval..e];
        res.extend(residual_columns(l2, &kx2, &my2, &bx2, &by2, &x2, &y2));
        xt.push_columns(&x2)?;
        yt.push_columns(&y2)?;
        kxt.push_columns(&kx2)?;
        myt.push_columns(&my2)?;
        bxt.push_columns(&bx2)?;
        byt.push_columns(&by2)?;
    }
    restore_biorth(&xt, &mut yt, &byt, k + wx_new)?;
    if k > 0 {
        st.locked.p.push_columns(&xt.column_range(0..k))?;
        st.locked.q.push_columns(&yt.column_range(0..k))?;
        st.locked_lambdas.extend_from_slice(&sol.lambdas[..k]);
        st.locked_residuals.extend_from_slice(&res[..k]);
        st.prefix -= k;
    }
    let needed_new = needed - k;
    let win = k..k + wx_new;
    let x_w = xt.column_range(win.clone());
    let y_w = yt.column_range(win.clone());

    // active columns: the batch holding the first unconverged pair; pairs
    // that converged inside it keep being refined until the batch is done
    let act_start = cfg.nb * (st.prefix / cfg.nb);
    let act_end = (act_start + cfg.nb).min(needed_new).min(wx_new);
    let active: Vec<usize> = (act_start..act_end).collect();

    // Step 5: previous-direction block from the small space
    let kept = k + wx_new;
    let (p_t, q_t) = if kept < d {
        let xa = dense_cols(&sol.xhat, 0..kept);
        let ya = dense_cols(&sol.yhat, 0..kept);
        let gs: Vec<usize> = active.iter().map(|&a| a + k).filter(|&g| g < old_wx).collect();
        let mut ph = DenseMatrix::zeros(d, gs.len());
        let mut qh = DenseMatrix::zeros(d, gs.len());
        for (c, &g) in gs.iter().enumerate() {
            for j in 0..kept {
                let (yg, xg) = (ya[(g, j)], xa[(g, j)]);
                for i in 0..d {
                    ph[(i, c)] += xa[(i, j)] * yg;
                    qh[(i, c)] += ya[(i, j)] * xg;
                }
            }
            ph[(g, c)] -= 1.0;
            qh[(g, c)] -= 1.0;
        }
        let xa_b = BlockVectors::from_dense(&xa);
        let ya_b = BlockVectors::from_dense(&ya);
        let mut ph_b = BlockVectors::from_dense(&ph);
        let mut qh_b = BlockVectors::from_dense(&qh);
        let small = InnerProduct::identity();
        for _ in 0..2 {
            let c = plain_gram(&ya_b, &ph_b);
            block_axpy(&xa_b, &c, &mut ph_b)?;
            let c = plain_gram(&xa_b, &qh_b);
            block_axpy(&ya_b, &c, &mut qh_b)?;
        }
        let keep: Vec<usize> = (0..ph_b.ncols())
            .filter(|&c| norm2(ph_b.col(c)) > SMALL_DIR_TOL && norm2(qh_b.col(c)) > SMALL_DIR_TOL)
            .collect();
        let ph_b = ph_b.select_columns(&keep);
        let qh_b = qh_b.select_columns(&keep);
        let out = biorth_with(
            &ph_b,
            &qh_b,
            &small,
            &BiorthOptions { cancel_tol: 0.0, ..strong_biorth(cfg.drop_tol) },
        )?;
        let p_full = block_product(&st.u, &out.basis.p.to_dense())?;
        let q_full = block_product(&st.v, &out.basis.q.to_dense())?;
        // The small-space biorthogonality inherits any deviation of UᵀBV
        // from I, amplified by the normalization; clean up in full space.
        let cur = BiorthBasis { p: x_w.clone(), q: y_w.clone() };
        let (p2, q2) = biorth_against(&[&nsb, &st.locked, &cur], &p_full, &q_full, ip)?;
        let out = biorth_with(&p2, &q2, ip, &BiorthOptions { cancel_tol: 0.0, ..strong_biorth(cfg.drop_tol) })?;
        settle(&[&nsb, &st.locked, &cur], out.basis.p, out.basis.q, ip, cfg)?
    } else {
        (BlockVectors::zeros(ops.dim(), 0), BlockVectors::zeros(ops.dim(), 0))
    };

    // Step 6: Newton-type directions by block Gauss–Seidel with inexact CG
    let n = ops.dim();
    let (w_t, z_t) = if active.is_empty() {
        (BlockVectors::zeros(n, 0), BlockVectors::zeros(n, 0))
    } else {
        let ga: Vec<usize> = active.iter().map(|&a| a + k).collect();
        let lam_a: Vec<f64> = ga.iter().map(|&g| sol.lambdas[g]).collect();
        let sel = |b: &BlockVectors| b.select_columns(&ga);
        let (kx_a, my_a, bx_a, by_a) = (sel(&kxt), sel(&myt), sel(&bxt), sel(&byt));
        let mut r1 = kx_a.clone();
        let mut r2 = my_a.clone();
        for (c, &l) in lam_a.iter().enumerate() {
            for (a, b) in r1.col_mut(c).iter_mut().zip(by_a.col(c)) {
                *a -= l * b;
            }
            for (a, b) in r2.col_mut(c).iter_mut().zip(bx_a.col(c)) {
                *a -= l * b;
            }
        }
        let zero = BlockVectors::zeros(n, ga.len());
        let mut w = zero.clone();
        let mut z = zero.clone();
        for _ in 0..cfg.ngs {
            let mut rhs = ip.apply_weight(&w)?;
            rhs.scale_columns(&lam_a);
            let rhs = rhs.sub(&r2)?;
            z = cg_solve(&ops.m, &rhs, &zero, cfg.inner_cg_tol, cfg.inner_cg_max_iter)?.x;
            let mut rhs = ip.apply_weight(&z)?;
            rhs.scale_columns(&lam_a);
            let rhs = rhs.sub(&r1)?;
            w = cg_solve(&ops.k, &rhs, &zero, cfg.inner_cg_tol, cfg.inner_cg_max_iter)?.x;
        }
        let cur = BiorthBasis { p: x_w.clone(), q: y_w.clone() };
        let prev = BiorthBasis { p: p_t.clone(), q: q_t.clone() };
        new_directions(&[&nsb, &st.locked, &cur, &prev], &w, &z, ip, cfg)?
    };

    // Step 7
    let avail = n - ns.r - st.locked.len();
    let mut wp = p_t.ncols();
    let mut ww = w_t.ncols();
    if wx_new + wp + ww > avail {
        ww = ww.min(avail.saturating_sub(wx_new + wp));
        wp = wp.min(avail.saturating_sub(wx_new));
    }
    st.u = BlockVectors::hcat(&[&x_w, &p_t.column_range(0..wp), &w_t.column_range(0..ww)])?;
    st.v = BlockVectors::hcat(&[&y_w, &q_t.column_range(0..wp), &z_t.column_range(0..ww)])?;
    st.wx = wx_new;
    st.wp = wp;
    st.ww = ww;
    st.lambdas = sol.lambdas[win.clone()].to_vec();
    st.window_residuals = res[win].to_vec();
    st.max_width = st.max_width.max(st.width());
    Ok(StepOutcome::Continue)
}

/// Projects `(W, Z)` against every basis twice, discards columns that were
/// (numerically) inside the existing space, biorthogonalizes the rest and
/// repeats the projection once if a cross-Gram is still above tolerance.
fn new_directions(
    bases: &[&BiorthBasis],
    w: &BlockVectors,
    z: &BlockVectors,
    ip: &InnerProduct,
    cfg: &BospConfig,
) -> Result<(BlockVectors, BlockVectors)> {
    let nw0 = w.column_norms();
    let nz0 = z.column_norms();
    let (w1, z1) = biorth_against(bases, w, z, ip)?;
    let (w1, z1) = biorth_against(bases, &w1, &z1, ip)?;
    let nw1 = w1.column_norms();
    let nz1 = z1.column_norms();
    let keep: Vec<usize> = (0..w.ncols())
        .filter(|&c| nw1[c] > CANCEL_TOL * nw0[c] && nz1[c] > CANCEL_TOL * nz0[c])
        .collect();
    let w1 = w1.select_columns(&keep);
    let z1 = z1.select_columns(&keep);
    let out = biorth_with(&w1, &z1, ip, &strong_biorth(cfg.drop_tol))?;
    settle(bases, out.basis.p, out.basis.q, ip, cfg)
}

/// Repeats projection plus biorthogonalization, at most twice, while any
/// entry of the cross-Grams against `bases` or of `PᵀBQ − I` exceeds
/// [`CROSS_TOL`]. Columns with large norms carry proportionally larger
/// round-off, so a single pass is not always enough. Columns still off by
/// more than [`SETTLE_DROP`] afterwards lie numerically inside the existing
/// space (this happens when the search space nearly fills `R^n`) and are
/// dropped one at a time, worst first.
fn settle(
    bases: &[&BiorthBasis],
    mut p: BlockVectors,
    mut q: BlockVectors,
    ip: &InnerProduct,
    cfg: &BospConfig,
) -> Result<(BlockVectors, BlockVectors)> {
    let repass = |p: &BlockVectors, q: &BlockVectors| -> Result<(BlockVectors, BlockVectors)> {
        let (p2, q2) = biorth_against(bases, p, q, ip)?;
        let out = biorth_with(&p2, &q2, ip, &BiorthOptions { cancel_tol: 0.0, ..strong_biorth(cfg.drop_tol) })?;
        Ok((out.basis.p, out.basis.q))
    };
    for pass in 0.. {
        if p.ncols() == 0 {
            break;
        }
        let bad = column_violations(bases, &p, &q, ip)?;
        let (worst_col, worst) =
            bad.iter().copied().enumerate().fold((0, 0.0_f64), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
        if worst <= CROSS_TOL || (pass >= 2 && worst <= SETTLE_DROP) {
            break;
        }
        if pass >= 2 {
            let keep: Vec<usize> = (0..p.ncols()).filter(|&c| c != worst_col).collect();
            p = p.select_columns(&keep);
            q = q.select_columns(&keep);
        }
        (p, q) = repass(&p, &q)?;
    }
    Ok((p, q))
}

/// Per column `c` of `(P, Q)`: the largest entry in column `c` of the
/// cross-Grams against `bases` and in row or column `c` of `PᵀBQ − I`.
fn column_violations(bases: &[&BiorthBasis], p: &BlockVectors, q: &BlockVectors, ip: &InnerProduct) -> Result<Vec<f64>> {
    let m = p.ncols();
    let mut v = vec![0.0_f64; m];
    for b in bases.iter().filter(|b| !b.is_empty()) {
        for g in [block_inner(ip, &b.q, p)?, block_inner(ip, &b.p, q)?] {
            for (c, vc) in v.iter_mut().enumerate() {
                *vc = vc.max(g.col(c).iter().fold(0.0, |a, x| a.max(x.abs())));
            }
        }
    }
    let own = block_inner(ip, p, q)?;
    for i in 0..m {
        for j in 0..m {
            let e = (own[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs();
            v[i] = v[i].max(e);
            v[j] = v[j].max(e);
        }
    }
    Ok(v)
}

