//! Regularization paths over a descending penalty ladder.
//!
//! For each alpha in the grid, the runner starts at a penalty level
//! `lambda_1` at which the all-zero model is a fixed point, then walks
//! down a ladder of levels, warm-starting every fit from the previous
//! solution. The next level comes from the activation bound: the largest
//! penalty at which some inactive block would turn on, estimated from the
//! current gradients and the per-block step constants the line search has
//! accepted so far. Stepping to `step` times that bound (capped by `step`
//! times the previous level) targets one activation per step; a fit whose
//! active set does not change is not recorded, and the level keeps
//! shrinking until the set changes or the ladder ends.
//!
//! A Bernoulli response runs the same ladder with every fit replaced by
//! a penalized quasi-likelihood solve; activation bounds are read off the
//! working dataset of the previous fit, and `lambda_1` comes from the
//! working model linearized at the null.
//!
//! Alphas are fitted independently (in parallel) and each slice restarts
//! from the null model, so entries are deterministic regardless of thread
//! scheduling. A fit that fails mid-ladder ends its own slice with the
//! failure recorded as the stop reason; the other slices are unaffected.

use ndarray::Array1;
use rayon::prelude::*;
use std::io::Write;

use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::likelihood::ModelFit;
use crate::local_search::{solve_refined, LocalSearchConfig};
use crate::pql::{fit_glmm, working_dataset, PqlConfig, PqlFit};
use crate::solver::{ActiveSet, SolverConfig, StepSizes, Workspace};

/// Path settings. `solver.lambda` and `solver.alpha` act as a template
/// and are overwritten for every fit on the path.
#[derive(Debug, Clone)]
pub struct PathConfig {
    /// Cap on recorded ladder entries per alpha.
    pub n_lambda: usize,
    /// Multiplicative ladder factor in (0, 1).
    pub step: f64,
    pub alphas: Vec<f64>,
    pub use_local_search: bool,
    /// The slice ends once lambda falls below this fraction of lambda_1.
    pub lambda_floor_ratio: f64,
    /// Stop once the active set outgrows this; defaults to min(p, n).
    pub max_active: Option<usize>,
    pub solver: SolverConfig,
    pub local_search: LocalSearchConfig,
    /// Outer-loop settings for non-Gaussian responses.
    pub pql: PqlConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_lambda: 100,
            step: 0.95,
            alphas: default_alpha_grid(),
            use_local_search: false,
            lambda_floor_ratio: 1e-4,
            max_active: None,
            solver: SolverConfig::new(0.0, 1.0),
            local_search: LocalSearchConfig::default(),
            pql: PqlConfig::default(),
        }
    }
}

/// Ten equispaced penalty splits from 0.1 to 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..10).map(|i| 0.1 + 0.9 * i as f64 / 9.0).collect()
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::InvalidConfig("n_lambda must be positive".into()));
        }
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ladder step must lie in (0, 1), got {}",
                self.step
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("alpha grid is empty".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha grid value {a} outside (0, 1]"
                )));
            }
        }
        if !(self.lambda_floor_ratio > 0.0 && self.lambda_floor_ratio < 1.0) {
            return Err(Error::InvalidConfig(
                "lambda_floor_ratio must lie in (0, 1)".into(),
            ));
        }
        if self.max_active == Some(0) {
            return Err(Error::InvalidConfig("max_active must be positive".into()));
        }
        self.pql.validate()?;
        self.solver.validate()
    }
}

/// Why a slice stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceEnd {
    /// Recorded the configured number of entries.
    Complete,
    /// Lambda fell below the floor.
    Floor,
    /// The active set outgrew the cap.
    Saturated,
    /// Every block became active; no bound is left to step to.
    Exhausted,
    /// A fit on the ladder failed; entries recorded before the failure
    /// are kept and the message says what went wrong.
    Failed(String),
}

impl std::fmt::Display for SliceEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SliceEnd::Complete => "complete",
            SliceEnd::Floor => "lambda_floor",
            SliceEnd::Saturated => "max_active",
            SliceEnd::Exhausted => "all_active",
            SliceEnd::Failed(msg) => return write!(f, "failed: {msg}"),
        };
        f.write_str(s)
    }
}

/// One recorded model on the ladder, with sparse coefficients.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub alpha: f64,
    pub lambda: f64,
    pub beta: Vec<(usize, f64)>,
    pub gamma: Vec<(usize, f64)>,
    /// Predicted random effects per training cluster, on the active
    /// random coordinates.
    pub blups: Vec<Vec<(usize, f64)>>,
    pub sigma2_hat: f64,
    pub objective: f64,
    pub objective_nll: f64,
    pub converged: bool,
}

impl PathEntry {
    pub fn from_fit(fit: &ModelFit) -> Self {
        let beta: Vec<(usize, f64)> = fit
            .beta
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, &v)| (k, v))
            .collect();
        let gamma: Vec<(usize, f64)> = fit
            .gamma
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, &v)| (k, v))
            .collect();
        let blups = fit
            .blups
            .iter()
            .map(|u| gamma.iter().map(|&(k, _)| (k, u[k])).collect())
            .collect();
        PathEntry {
            alpha: fit.alpha,
            lambda: fit.lambda,
            beta,
            gamma,
            blups,
            sigma2_hat: fit.sigma2_hat,
            objective: fit.objective,
            objective_nll: fit.objective_nll,
            converged: fit.converged,
        }
    }

    pub fn nnz_fixed(&self) -> usize {
        self.beta.len()
    }

    pub fn nnz_random(&self) -> usize {
        self.gamma.len()
    }

    pub fn beta_dense(&self, p: usize) -> Array1<f64> {
        let mut v = Array1::zeros(p);
        for &(k, b) in &self.beta {
            v[k] = b;
        }
        v
    }

    pub fn gamma_dense(&self, p: usize) -> Array1<f64> {
        let mut v = Array1::zeros(p);
        for &(k, g) in &self.gamma {
            v[k] = g;
        }
        v
    }
}

/// All slices concatenated, ordered by the alpha grid; within a slice,
/// entries run from the largest lambda down.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub entries: Vec<PathEntry>,
    pub p: usize,
    pub family: Family,
    /// Training cluster ids, aligned with each entry's blups.
    pub cluster_ids: Vec<String>,
    /// Stop reason per alpha, in grid order.
    pub termination: Vec<(f64, SliceEnd)>,
}

impl PathResult {
    pub fn slice(&self, alpha: f64) -> impl Iterator<Item = &PathEntry> {
        self.entries.iter().filter(move |e| e.alpha == alpha)
    }
}

/// Keeps the null model a fixed point at lambda_1 despite rounding in the
/// score computation.
const LAMBDA_ONE_PAD: f64 = 1e-10;

/// The next ladder level after `fit`: `step` times the activation bound
/// at the fitted point, never more than `step` times the fitted lambda.
/// Fails with `PathComplete` when every block is active.
pub fn next_lambda(
    data: &Dataset,
    fit: &ModelFit,
    steps: &StepSizes,
    step: f64,
) -> Result<f64> {
    let mut ws = Workspace::new(
        data,
        fit.beta.clone(),
        fit.gamma.clone(),
        fit.lambda,
        fit.alpha,
    )?;
    match ws.lambda_bound(steps)? {
        Some(bound) => Ok((step * bound).min(step * fit.lambda)),
        None => Err(Error::PathComplete),
    }
}

/// One warm-started solve at the given level, optionally refined by swap
/// moves.
fn solve_at(
    ws: &mut Workspace,
    base: &SolverConfig,
    lambda: f64,
    ls: Option<&LocalSearchConfig>,
) -> Result<(usize, bool)> {
    let mut cfg = base.clone();
    cfg.lambda = lambda;
    let (run, _) = solve_refined(ws, &cfg, ls)?;
    Ok((run.cycles, run.converged))
}

fn fit_slice(data: &Dataset, cfg: &PathConfig, alpha: f64) -> Result<(Vec<PathEntry>, SliceEnd)> {
    let mut entries = Vec::new();
    let ladder = match data.family {
        Family::Gaussian => fit_slice_gaussian(data, cfg, alpha, &mut entries),
        Family::Bernoulli => fit_slice_bernoulli(data, cfg, alpha, &mut entries),
    };
    // A fit failure ends the slice with diagnostics instead of aborting
    // the whole path; configuration problems still propagate.
    let end = match ladder {
        Ok(end) => end,
        Err(e @ Error::InvalidConfig(_)) => return Err(e),
        Err(e) => SliceEnd::Failed(e.to_string()),
    };
    Ok((entries, end))
}

/// Per-slice solver template: the grid alpha, and in-fit activation
/// capped below the interpolation threshold so the profiled likelihood
/// stays bounded when p >= n.
fn slice_solver(data: &Dataset, cfg: &PathConfig, alpha: f64) -> SolverConfig {
    let mut base = cfg.solver.clone();
    base.alpha = alpha;
    let cap = data.n_total().saturating_sub(1);
    base.max_active = Some(base.max_active.map_or(cap, |c| c.min(cap)));
    base
}

fn fit_slice_gaussian(
    data: &Dataset,
    cfg: &PathConfig,
    alpha: f64,
    entries: &mut Vec<PathEntry>,
) -> Result<SliceEnd> {
    let base = slice_solver(data, cfg, alpha);
    let ls = cfg.use_local_search.then_some(&cfg.local_search);
    let max_active = cfg
        .max_active
        .unwrap_or_else(|| data.p.min(data.n_total()));
    let init = base.line_search.init;

    let mut ws = Workspace::new(
        data,
        Array1::zeros(data.p),
        Array1::zeros(data.p),
        0.0,
        alpha,
    )?;
    let mut steps = ws.step_sizes(init);
    let bound = ws
        .lambda_bound(&steps)?
        .ok_or_else(|| Error::InvalidConfig("dataset has no predictors".into()))?;
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let lambda1 = bound * (1.0 + LAMBDA_ONE_PAD);
    let floor = lambda1 * cfg.lambda_floor_ratio;

    let (cycles, converged) = solve_at(&mut ws, &base, lambda1, ls)?;
    let fit = ws.snapshot_fit(Vec::new(), cycles, converged)?;
    entries.push(PathEntry::from_fit(&fit));
    let mut prev_active = ActiveSet::from_coefficients(&ws.beta, &ws.gamma);
    let mut lambda_prev = lambda1;
    steps = ws.step_sizes(init);

    loop {
        if entries.len() >= cfg.n_lambda {
            break Ok(SliceEnd::Complete);
        }
        if prev_active.len() > max_active {
            break Ok(SliceEnd::Saturated);
        }
        let Some(bound) = ws.lambda_bound(&steps)? else {
            break Ok(SliceEnd::Exhausted);
        };
        let mut lambda = (cfg.step * bound).min(cfg.step * lambda_prev);
        if !lambda.is_finite() || lambda <= 0.0 {
            break Ok(SliceEnd::Exhausted);
        }
        // Shrink until the active set actually changes; unchanged fits
        // are not recorded.
        let recorded = loop {
            if lambda < floor {
                break None;
            }
            let (cycles, converged) = solve_at(&mut ws, &base, lambda, ls)?;
            let active = ActiveSet::from_coefficients(&ws.beta, &ws.gamma);
            if active != prev_active {
                break Some((active, cycles, converged));
            }
            lambda *= cfg.step;
        };
        match recorded {
            None => break Ok(SliceEnd::Floor),
            Some((active, cycles, converged)) => {
                let fit = ws.snapshot_fit(Vec::new(), cycles, converged)?;
                entries.push(PathEntry::from_fit(&fit));
                prev_active = active;
                lambda_prev = lambda;
                steps = ws.step_sizes(init);
            }
        }
    }
}

fn fit_slice_bernoulli(
    data: &Dataset,
    cfg: &PathConfig,
    alpha: f64,
    entries: &mut Vec<PathEntry>,
) -> Result<SliceEnd> {
    let base = slice_solver(data, cfg, alpha);
    let ls = cfg.use_local_search.then_some(&cfg.local_search);
    let max_active = cfg
        .max_active
        .unwrap_or_else(|| data.p.min(data.n_total()));
    let init = base.line_search.init;

    // Activation bound of the working model linearized at the null.
    let eta0: Vec<Array1<f64>> = data
        .clusters
        .iter()
        .map(|c| Array1::zeros(c.n()))
        .collect();
    let wd0 = working_dataset(data, &eta0);
    let bound = {
        let mut ws = Workspace::new(
            &wd0,
            Array1::zeros(data.p),
            Array1::zeros(data.p),
            0.0,
            alpha,
        )?;
        ws.lambda_bound(&StepSizes::cold(data.p, init))?
            .ok_or_else(|| Error::InvalidConfig("dataset has no predictors".into()))?
    };
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let lambda1 = bound * (1.0 + LAMBDA_ONE_PAD);
    let floor = lambda1 * cfg.lambda_floor_ratio;

    let solve = |lambda: f64, warm: (Array1<f64>, Array1<f64>)| -> Result<PqlFit> {
        let mut solver = base.clone();
        solver.lambda = lambda;
        fit_glmm(data, Some(warm), &solver, &cfg.pql, ls)
    };

    let mut pf = solve(lambda1, (Array1::zeros(data.p), Array1::zeros(data.p)))?;
    entries.push(PathEntry::from_fit(&pf.fit));
    let mut prev_active = ActiveSet::from_coefficients(&pf.fit.beta, &pf.fit.gamma);
    let mut lambda_prev = lambda1;

    loop {
        if entries.len() >= cfg.n_lambda {
            break Ok(SliceEnd::Complete);
        }
        if prev_active.len() > max_active {
            break Ok(SliceEnd::Saturated);
        }
        // The bound lives on the working dataset the current fit was
        // solved on.
        let bound = {
            let mut ws = Workspace::new(
                &pf.working,
                pf.fit.beta.clone(),
                pf.fit.gamma.clone(),
                pf.fit.lambda,
                alpha,
            )?;
            ws.lambda_bound(&pf.steps)?
        };
        let Some(bound) = bound else {
            break Ok(SliceEnd::Exhausted);
        };
        let mut lambda = (cfg.step * bound).min(cfg.step * lambda_prev);
        if !lambda.is_finite() || lambda <= 0.0 {
            break Ok(SliceEnd::Exhausted);
        }
        let recorded = loop {
            if lambda < floor {
                break None;
            }
            let cand = solve(lambda, (pf.fit.beta.clone(), pf.fit.gamma.clone()))?;
            let active = ActiveSet::from_coefficients(&cand.fit.beta, &cand.fit.gamma);
            if active != prev_active {
                break Some((cand, active));
            }
            lambda *= cfg.step;
        };
        match recorded {
            None => break Ok(SliceEnd::Floor),
            Some((cand, active)) => {
                pf = cand;
                entries.push(PathEntry::from_fit(&pf.fit));
                prev_active = active;
                lambda_prev = pf.fit.lambda;
            }
        }
    }
}

/// Fits the full path over the alpha grid. The dataset is used as given;
/// standardize first when columns are on different scales.
pub fn fit_path(data: &Dataset, cfg: &PathConfig) -> Result<PathResult> {
    cfg.validate()?;
    let slices: Vec<(Vec<PathEntry>, SliceEnd)> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| fit_slice(data, cfg, alpha))
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    let mut termination = Vec::new();
    for (alpha, (slice, end)) in cfg.alphas.iter().zip(slices) {
        entries.extend(slice);
        termination.push((*alpha, end));
    }
    Ok(PathResult {
        entries,
        p: data.p,
        family: data.family,
        cluster_ids: data.clusters.iter().map(|c| c.id.clone()).collect(),
        termination,
    })
}

/// One row per entry: alpha, lambda, support sizes, objective, variance.
pub fn write_path_csv<W: Write>(result: &PathResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha",
        "lambda",
        "nnz_fixed",
        "nnz_random",
        "objective",
        "sigma2_hat",
    ])?;
    for e in &result.entries {
        w.write_record([
            e.alpha.to_string(),
            e.lambda.to_string(),
            e.nnz_fixed().to_string(),
            e.nnz_random().to_string(),
            e.objective.to_string(),
            e.sigma2_hat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Nonzero coefficients per entry, keyed by (alpha, lambda). With
/// `scales` from standardization, coefficients return to the original
/// scale: beta / s and gamma / s^2.
pub fn write_coefficients_csv<W: Write>(
    result: &PathResult,
    out: W,
    scales: Option<&Array1<f64>>,
) -> Result<()> {
    if let Some(s) = scales {
        if s.len() != result.p {
            return Err(Error::InvalidConfig(format!(
                "scales has length {}, expected {}",
                s.len(),
                result.p
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "lambda", "predictor", "beta", "gamma"])?;
    for e in &result.entries {
        let gamma = e.gamma_dense(result.p);
        for &(k, b) in &e.beta {
            let (bs, gs) = match scales {
                Some(s) => (b / s[k], gamma[k] / (s[k] * s[k])),
                None => (b, gamma[k]),
            };
            w.write_record([
                e.alpha.to_string(),
                e.lambda.to_string(),
                format!("x{}", k + 1),
                bs.to_string(),
                gs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
