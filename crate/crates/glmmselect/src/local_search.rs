//! Swap-based local search around coordinate descent fixed points.
//!
//! Coordinate descent under an L0 penalty can stall on a support where no
//! single-block move helps, while exchanging one active block for an
//! inactive one would. A swap move removes active block j entirely,
//! inserts inactive block k, and optimizes the inserted pair
//! `(beta_k, gamma_k)` on the smooth objective. `fit_cd_ls` alternates
//! full coordinate descent with the best improving swap until no swap
//! improves the penalized objective, so its result is never worse than
//! plain coordinate descent from the same start.
//!
//! Evaluating a swap never touches the covariance state: removing j is a
//! rank-one downdate and inserting k a rank-one update, so both reduce to
//! per-cluster scalars. One call to `best_swap` prices all
//! `|active| x |inactive|` exchanges from three shared ingredients: the
//! per-cluster scalar tables `a_ik = x_ik' V_i^-1 r_i` and
//! `b_ik = x_ik' V_i^-1 x_ik` (computed once per call), and per removed j
//! the vectors `V_i^-1 x_ij` with their derived correction terms.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::Result;
use crate::likelihood::ModelFit;
use crate::solver::{run_cd, validate_init, CdRun, SolverConfig, Workspace};

/// Settings for the swap search.
#[derive(Debug, Clone)]
pub struct LocalSearchConfig {
    /// Cap on accepted swaps per fit.
    pub max_swaps: usize,
    /// A swap must beat the current objective by more than this.
    pub improvement_tol: f64,
    /// Step tolerance for the two-variable insertion optimization.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            max_swaps: 100,
            improvement_tol: 1e-10,
            inner_tol: 1e-6,
            inner_max_iter: 50,
        }
    }
}

/// One accepted exchange.
#[derive(Debug, Clone)]
pub struct SwapMove {
    pub removed: usize,
    pub inserted: usize,
    pub beta: f64,
    pub gamma: f64,
    /// Drop in the penalized objective (negative).
    pub improvement: f64,
}

/// What the search did: accepted swaps in order, and how many candidate
/// exchanges were priced in total.
#[derive(Debug, Clone, Default)]
pub struct LocalSearchReport {
    pub swaps: Vec<SwapMove>,
    pub candidates_evaluated: usize,
}

/// Near-singular guard for rank-one scale factors.
const SCALE_FLOOR: f64 = 1e-12;
/// Candidates driving the quadratic form this low would interpolate the
/// responses; they are skipped rather than selected.
const CANDIDATE_QUAD_FLOOR: f64 = 1e-250;

struct Candidate {
    improvement: f64,
    removed: usize,
    inserted: usize,
    beta: f64,
    gamma: f64,
}

/// Smooth objective of the j-removed model with block k inserted at
/// `(b, g)`, from per-cluster scalars; `None` when the candidate grazes
/// singularity or interpolation.
fn candidate_nll(
    qt: &[f64],
    at: &[f64],
    bt: &[f64],
    ld_base: f64,
    n: f64,
    b: f64,
    g: f64,
) -> Option<(f64, f64)> {
    let mut s = 0.0;
    let mut ld = ld_base;
    for i in 0..qt.len() {
        let mut qi = qt[i] - 2.0 * b * at[i] + b * b * bt[i];
        if g != 0.0 {
            let scale = 1.0 + g * bt[i];
            if scale <= SCALE_FLOOR {
                return None;
            }
            let ar = at[i] - b * bt[i];
            qi -= g * ar * ar / scale;
            ld += scale.ln();
        }
        s += qi;
    }
    if s <= CANDIDATE_QUAD_FLOOR {
        return None;
    }
    Some((s, ld + n * s.ln()))
}

/// Minimizes the smooth insertion objective over `(b, g >= 0)` by
/// projected gradient steps with a backtracking line search. Starts from
/// the closed-form best b at g = 0, so the result is never worse than the
/// fixed-effect-only insertion.
fn optimize_insertion(
    qt: &[f64],
    at: &[f64],
    bt: &[f64],
    ld_base: f64,
    n: f64,
    ls: &LocalSearchConfig,
) -> Option<(f64, f64, f64)> {
    let sa: f64 = at.iter().sum();
    let sb: f64 = bt.iter().sum();
    if sb <= 1e-300 {
        return None;
    }
    let b0 = sa / sb;
    let (mut s_cur, mut l_cur) = candidate_nll(qt, at, bt, ld_base, n, b0, 0.0)?;
    let mut b_cur = b0;
    let mut g_cur = 0.0;
    let mut lbar = 1.0f64;
    for _ in 0..ls.inner_max_iter {
        let mut a_sum = 0.0;
        let mut a_sq = 0.0;
        let mut b_sum = 0.0;
        for i in 0..qt.len() {
            let scale = 1.0 + g_cur * bt[i];
            let ah = (at[i] - b_cur * bt[i]) / scale;
            a_sum += ah;
            a_sq += ah * ah;
            b_sum += bt[i] / scale;
        }
        let gb = -2.0 * n * a_sum / s_cur;
        let gg = b_sum - n * a_sq / s_cur;
        let mut moved = false;
        let mut small_step = false;
        let mut l_try = lbar;
        for _ in 0..=60 {
            let bn = b_cur - gb / l_try;
            let gn = (g_cur - gg / l_try).max(0.0);
            let db = bn - b_cur;
            let dg = gn - g_cur;
            if db == 0.0 && dg == 0.0 {
                break;
            }
            if let Some((s_new, l_new)) = candidate_nll(qt, at, bt, ld_base, n, bn, gn) {
                if l_new <= l_cur + gb * db + gg * dg + 0.5 * l_try * (db * db + dg * dg) {
                    small_step = db.abs().max(dg.abs())
                        < ls.inner_tol * b_cur.abs().max(g_cur).max(1.0);
                    b_cur = bn;
                    g_cur = gn;
                    s_cur = s_new;
                    l_cur = l_new;
                    lbar = (0.5 * l_try).max(1e-8);
                    moved = true;
                    break;
                }
            }
            l_try *= 2.0;
        }
        if !moved || small_step {
            break;
        }
    }
    Some((b_cur, g_cur, l_cur))
}

/// Prices every swap of one active block for one inactive block and
/// returns the best strict improvement, together with the number of
/// candidates evaluated. Ties go to the lowest (removed, inserted) pair.
pub(crate) fn best_swap(
    ws: &mut Workspace,
    ls: &LocalSearchConfig,
) -> Result<(Option<SwapMove>, usize)> {
    ws.refresh_caches()?;
    let data = ws.data;
    let p = data.p;
    let actives: Vec<usize> = (0..p).filter(|&k| ws.beta[k] != 0.0).collect();
    let inactives: Vec<usize> = (0..p).filter(|&k| ws.beta[k] == 0.0).collect();
    if actives.is_empty() || inactives.is_empty() {
        return Ok((None, 0));
    }
    let m = data.m();
    let n = data.n_total() as f64;
    let lambda = ws.lambda;
    let alpha = ws.alpha;
    let nll_cur = ws.nll;
    let logdet_cur = ws.state.logdet_sum();
    let quads = ws.cluster_quads().to_vec();

    // Per-cluster inner products with the current inverse: a[i][k] and
    // b[i][k]; shared by every candidate pair.
    let mut a_tab = Array2::<f64>::zeros((m, p));
    let mut b_tab = Array2::<f64>::zeros((m, p));
    for (i, c) in data.clusters.iter().enumerate() {
        let inv = ws.state.inv(i);
        let t = inv.dot(&ws.resid[i]);
        a_tab.row_mut(i).assign(&c.x.t().dot(&t));
        let w = inv.dot(&c.x);
        b_tab.row_mut(i).assign(&(&c.x * &w).sum_axis(Axis(0)));
    }

    let beta = &ws.beta;
    let gamma = &ws.gamma;
    let state = &ws.state;
    let resid = &ws.resid;

    let per_j: Vec<(Option<Candidate>, usize)> = actives
        .par_iter()
        .map(|&j| {
            let bj = beta[j];
            let gj = gamma[j];
            let mut qt = vec![0.0; m];
            let mut ld_base = logdet_cur;
            // Correction per cluster for a_ik after removing j:
            // a~ = a + c * shift, b~ = b + kappa * c^2.
            let mut shift = vec![0.0; m];
            let mut kappas = vec![0.0; m];
            let mut crows: Vec<Array1<f64>> = Vec::with_capacity(m);
            for (i, c) in data.clusters.iter().enumerate() {
                let inv = state.inv(i);
                let u = inv.dot(&c.x.column(j));
                let bjj = c.x.column(j).dot(&u);
                let aj = u.dot(&resid[i]);
                let scale = 1.0 - gj * bjj;
                if scale <= SCALE_FLOOR {
                    return (None, 0);
                }
                let kappa = gj / scale;
                let s = aj + bj * bjj;
                qt[i] = quads[i] + 2.0 * bj * aj + bj * bj * bjj + kappa * s * s;
                if gj != 0.0 {
                    ld_base += scale.ln();
                }
                kappas[i] = kappa;
                shift[i] = bj + kappa * s;
                crows.push(c.x.t().dot(&u));
            }
            let gj_on = if gj != 0.0 { 1.0 } else { 0.0 };
            let mut evaluated = 0usize;
            let mut best: Option<Candidate> = None;
            let mut at = vec![0.0; m];
            let mut bt = vec![0.0; m];
            for &k in &inactives {
                evaluated += 1;
                for i in 0..m {
                    let ck = crows[i][k];
                    at[i] = a_tab[[i, k]] + ck * shift[i];
                    bt[i] = b_tab[[i, k]] + kappas[i] * ck * ck;
                }
                let Some((bc, gc, lc)) = optimize_insertion(&qt, &at, &bt, ld_base, n, ls)
                else {
                    continue;
                };
                // Candidate objectives: with the random effect as
                // optimized, and with it switched off (closed form).
                let mut options: Vec<(f64, f64, f64)> = Vec::with_capacity(2);
                if bc != 0.0 {
                    let g_on = if gc > 0.0 { 1.0 } else { 0.0 };
                    options.push((
                        lc - nll_cur + lambda * (1.0 - alpha) * (g_on - gj_on),
                        bc,
                        gc,
                    ));
                }
                if gc > 0.0 {
                    let sa: f64 = at.iter().sum();
                    let sb: f64 = bt.iter().sum();
                    if sb > 1e-300 {
                        let b1 = sa / sb;
                        if b1 != 0.0 {
                            if let Some((_, l1)) =
                                candidate_nll(&qt, &at, &bt, ld_base, n, b1, 0.0)
                            {
                                options.push((
                                    l1 - nll_cur - lambda * (1.0 - alpha) * gj_on,
                                    b1,
                                    0.0,
                                ));
                            }
                        }
                    }
                }
                for (imp, b, g) in options {
                    let better = match &best {
                        None => true,
                        Some(cur) => imp < cur.improvement,
                    };
                    if better {
                        best = Some(Candidate {
                            improvement: imp,
                            removed: j,
                            inserted: k,
                            beta: b,
                            gamma: g,
                        });
                    }
                }
            }
            (best, evaluated)
        })
        .collect();

    let mut evaluated = 0usize;
    let mut best: Option<Candidate> = None;
    for (cand, count) in per_j {
        evaluated += count;
        if let Some(c) = cand {
            let take = match &best {
                None => true,
                Some(cur) => {
                    c.improvement < cur.improvement
                        || (c.improvement == cur.improvement
                            && (c.removed, c.inserted) < (cur.removed, cur.inserted))
                }
            };
            if take {
                best = Some(c);
            }
        }
    }
    let swap = best
        .filter(|c| c.improvement < -ls.improvement_tol)
        .map(|c| SwapMove {
            removed: c.removed,
            inserted: c.inserted,
            beta: c.beta,
            gamma: c.gamma,
            improvement: c.improvement,
        });
    Ok((swap, evaluated))
}

/// Coordinate descent on an existing workspace, optionally refined by
/// swap moves: descend, take the best improving swap, descend again,
/// until no swap improves the objective or the swap budget runs out.
pub(crate) fn solve_refined(
    ws: &mut Workspace,
    cfg: &SolverConfig,
    ls: Option<&LocalSearchConfig>,
) -> Result<(CdRun, LocalSearchReport)> {
    let mut run = run_cd(ws, cfg)?;
    let mut report = LocalSearchReport::default();
    if let Some(lscfg) = ls {
        for _ in 0..lscfg.max_swaps {
            let (swap, count) = best_swap(ws, lscfg)?;
            report.candidates_evaluated += count;
            let Some(sw) = swap else { break };
            ws.apply_swap(sw.removed, sw.inserted, sw.beta, sw.gamma)?;
            run.trace.push(ws.penalized());
            report.swaps.push(sw);
            let rerun = run_cd(ws, cfg)?;
            run.trace.extend(rerun.trace.into_iter().skip(1));
            run.cycles += rerun.cycles;
            run.converged = rerun.converged;
        }
    }
    Ok((run, report))
}

/// Coordinate descent refined by swap moves; the report lists the
/// accepted swaps in order.
pub fn fit_cd_ls(
    data: &Dataset,
    init: Option<(Array1<f64>, Array1<f64>)>,
    cfg: &SolverConfig,
    ls: &LocalSearchConfig,
) -> Result<(ModelFit, LocalSearchReport)> {
    cfg.validate()?;
    let (beta, gamma) =
        init.unwrap_or_else(|| (Array1::zeros(data.p), Array1::zeros(data.p)));
    validate_init(data, &beta, &gamma)?;
    let mut ws = Workspace::new(data, beta, gamma, cfg.lambda, cfg.alpha)?;
    let (run, report) = solve_refined(&mut ws, cfg, Some(ls))?;
    let fit = ws.into_fit(run)?;
    Ok((fit, report))
}
