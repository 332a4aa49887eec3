//! Selection and prediction metrics, validation-set tuning, and the
//! synthetic experiment driver.
//!
//! Tuning scores every path entry on a held-out dataset that must be on
//! the same predictor scale as the training data (apply the training
//! scales before calling). Predictions use BLUP-adjusted linear
//! predictors for clusters seen in training and fixed effects alone for
//! unseen clusters.

use ndarray::Array1;
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use crate::data::{Dataset, Family, GroundTruth};
use crate::error::{Error, Result};
use crate::path::{fit_path, PathConfig, PathEntry, PathResult};
use crate::sim::{generate_study, true_linear_predictor, SimConfig};

/// Relative squared error of the fitted linear predictor: the null model
/// scores 1, the truth scores 0. Inputs are per-cluster vectors
/// `X_i (beta + u_i)` under the truth and the fit.
pub fn prediction_error(
    truth_linpred: &[Array1<f64>],
    fitted_linpred: &[Array1<f64>],
) -> Result<f64> {
    if truth_linpred.len() != fitted_linpred.len() {
        return Err(Error::InvalidConfig(format!(
            "linear predictor cluster counts differ: {} vs {}",
            truth_linpred.len(),
            fitted_linpred.len()
        )));
    }
    let mut num = 0.0;
    let mut denom = 0.0;
    for (t, f) in truth_linpred.iter().zip(fitted_linpred) {
        if t.len() != f.len() {
            return Err(Error::InvalidConfig(format!(
                "linear predictor lengths differ within a cluster: {} vs {}",
                t.len(),
                f.len()
            )));
        }
        for (a, b) in t.iter().zip(f.iter()) {
            num += (a - b) * (a - b);
            denom += a * a;
        }
    }
    if denom < 1e-300 {
        return Err(Error::NullTruth);
    }
    Ok(num / denom)
}

/// Support-recovery scores against a ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionScores {
    /// Predictors selected with any effect.
    pub sparsity: usize,
    /// F1 where a predictor counts as recovered only with the correct
    /// role (fixed-only vs fixed-plus-random).
    pub f1_effect_type: f64,
    /// F1 where any selection of a truly active predictor counts.
    pub f1_nonzero: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Scores an estimated coefficient pair against the truth. A predictor's
/// role is the pair (fixed nonzero, random nonzero); selecting an active
/// predictor with the wrong role counts as both a false positive and a
/// false negative for the effect-type score.
pub fn selection_scores(
    truth: &GroundTruth,
    beta: &Array1<f64>,
    gamma: &Array1<f64>,
) -> SelectionScores {
    let p = truth.beta.len();
    assert_eq!(beta.len(), p, "coefficient length mismatch");
    assert_eq!(gamma.len(), p, "coefficient length mismatch");
    let mut sparsity = 0;
    let (mut tp_role, mut fp_role, mut fn_role) = (0, 0, 0);
    let (mut tp_any, mut fp_any, mut fn_any) = (0, 0, 0);
    for k in 0..p {
        let truth_role = (truth.beta[k] != 0.0, truth.gamma[k] != 0.0);
        let est_role = (beta[k] != 0.0, gamma[k] != 0.0);
        let truth_on = truth_role.0 || truth_role.1;
        let est_on = est_role.0 || est_role.1;
        if est_on {
            sparsity += 1;
        }
        match (truth_on, est_on) {
            (true, true) => {
                tp_any += 1;
                if truth_role == est_role {
                    tp_role += 1;
                } else {
                    fp_role += 1;
                    fn_role += 1;
                }
            }
            (true, false) => {
                fn_any += 1;
                fn_role += 1;
            }
            (false, true) => {
                fp_any += 1;
                fp_role += 1;
            }
            (false, false) => {}
        }
    }
    SelectionScores {
        sparsity,
        f1_effect_type: f1(tp_role, fp_role, fn_role),
        f1_nonzero: f1(tp_any, fp_any, fn_any),
    }
}

/// Per-cluster linear predictors of a path entry on new data: fixed
/// effects everywhere, plus the training BLUP when the cluster id was
/// seen in training.
pub fn entry_linear_predictors(
    entry: &PathEntry,
    p: usize,
    training_ids: &[String],
    data: &Dataset,
) -> Vec<Array1<f64>> {
    let index: HashMap<&str, usize> = training_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let beta = entry.beta_dense(p);
    data.clusters
        .iter()
        .map(|c| {
            let mut eta = c.x.dot(&beta);
            if let Some(&i) = index.get(c.id.as_str()) {
                for &(k, u) in &entry.blups[i] {
                    eta.scaled_add(u, &c.x.column(k));
                }
            }
            eta
        })
        .collect()
}

/// Validation loss of one entry: weighted squared error for Gaussian
/// responses, cross entropy of the predicted probabilities for Bernoulli.
fn entry_loss(
    entry: &PathEntry,
    p: usize,
    training_ids: &[String],
    family: Family,
    validation: &Dataset,
) -> f64 {
    let preds = entry_linear_predictors(entry, p, training_ids, validation);
    let mut loss = 0.0;
    for (c, eta) in validation.clusters.iter().zip(&preds) {
        for j in 0..c.n() {
            match family {
                Family::Gaussian => {
                    let r = c.y[j] - eta[j];
                    loss += c.w[j] * r * r;
                }
                Family::Bernoulli => {
                    let mu = Family::Bernoulli.mean(eta[j]);
                    loss -= c.y[j] * mu.ln() + (1.0 - c.y[j]) * (1.0 - mu).ln();
                }
            }
        }
    }
    loss
}

/// Validation loss of every entry, in path order.
pub fn validation_losses(path: &PathResult, validation: &Dataset) -> Result<Vec<f64>> {
    if validation.p != path.p {
        return Err(Error::InvalidConfig(format!(
            "validation has {} predictors, path was fit on {}",
            validation.p, path.p
        )));
    }
    Ok(path
        .entries
        .iter()
        .map(|e| entry_loss(e, path.p, &path.cluster_ids, path.family, validation))
        .collect())
}

/// The tuned model: the path entry minimizing validation loss.
#[derive(Debug, Clone)]
pub struct TunedModel {
    pub entry: PathEntry,
    /// Index into `path.entries`.
    pub index: usize,
    pub loss: f64,
}

/// Picks the entry with minimal validation loss. Exact ties go to the
/// smaller total support (fixed plus random counts), then to the larger
/// penalty.
pub fn tune(path: &PathResult, validation: &Dataset) -> Result<TunedModel> {
    if path.entries.is_empty() {
        return Err(Error::EmptyPath);
    }
    let losses = validation_losses(path, validation)?;
    let mut best = 0usize;
    for i in 1..losses.len() {
        let cand = &path.entries[i];
        let cur = &path.entries[best];
        let key = |e: &PathEntry| e.nnz_fixed() + e.nnz_random();
        if losses[i] < losses[best]
            || (losses[i] == losses[best]
                && (key(cand) < key(cur)
                    || (key(cand) == key(cur) && cand.lambda > cur.lambda)))
        {
            best = i;
        }
    }
    Ok(TunedModel {
        entry: path.entries[best].clone(),
        index: best,
        loss: losses[best],
    })
}

/// Whether a fit uses plain coordinate descent or adds the swap search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cd,
    CdLs,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cd => "cd",
            Method::CdLs => "cd_ls",
        })
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentCell {
    pub n_total: usize,
    pub p: usize,
    pub rho: f64,
    pub family: Family,
    pub method: Method,
}

/// Grid, replicate count, and the shared truth/fitting settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub cells: Vec<ExperimentCell>,
    pub replicates: usize,
    pub seed: u64,
    pub s_fixed: usize,
    pub s_random: usize,
    /// Template path settings; `use_local_search` is overridden per cell
    /// by the method.
    pub path: PathConfig,
}

/// Metrics of one successful replicate.
#[derive(Debug, Clone)]
pub struct ReplicateMetrics {
    pub f1_effect_type: f64,
    pub f1_nonzero: f64,
    pub prediction_error: f64,
    pub sparsity: usize,
    pub chosen_lambda: f64,
    pub chosen_alpha: f64,
    pub seconds: f64,
}

/// One (cell, replicate) outcome.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: std::result::Result<ReplicateMetrics, String>,
}

/// Aggregated metrics for one cell: (name, mean, standard error) with
/// the standard error defined as sample-sd / sqrt(replicates), zero when
/// fewer than two replicates succeeded.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub cell: ExperimentCell,
    pub n_replicates: usize,
    pub failures: usize,
    pub seconds_mean: f64,
    pub metrics: Vec<(&'static str, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<ReplicateRecord>,
    pub cells: Vec<CellSummary>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs one replicate of one cell: generate a study, fit the path on the
/// standardized training set, tune on validation, score selection against
/// the truth and prediction on the test set.
fn run_replicate(
    cell: &ExperimentCell,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ReplicateMetrics> {
    let sim = SimConfig {
        n_total: cell.n_total,
        p: cell.p,
        s_fixed: cfg.s_fixed,
        s_random: cfg.s_random,
        rho: cell.rho,
        family: cell.family,
        seed,
    };
    let study = generate_study(&sim)?;
    let start = Instant::now();
    let train = study.train.clone().standardize()?;
    let scales = train.scales.clone();
    let mut validation = study.validation.clone();
    validation.apply_scales(&scales)?;
    let mut path_cfg = cfg.path.clone();
    path_cfg.use_local_search = cell.method == Method::CdLs;
    let path = fit_path(&train, &path_cfg)?;
    let tuned = tune(&path, &validation)?;
    let seconds = start.elapsed().as_secs_f64();

    let scores = selection_scores(
        &study.truth,
        &tuned.entry.beta_dense(path.p),
        &tuned.entry.gamma_dense(path.p),
    );
    let mut test = study.test.clone();
    test.apply_scales(&scales)?;
    let truth_lp = true_linear_predictor(&study.test, &study.truth);
    let fitted_lp =
        entry_linear_predictors(&tuned.entry, path.p, &path.cluster_ids, &test);
    let pe = prediction_error(&truth_lp, &fitted_lp)?;
    Ok(ReplicateMetrics {
        f1_effect_type: scores.f1_effect_type,
        f1_nonzero: scores.f1_nonzero,
        prediction_error: pe,
        sparsity: scores.sparsity,
        chosen_lambda: tuned.entry.lambda,
        chosen_alpha: tuned.entry.alpha,
        seconds,
    })
}

/// Runs the whole grid. Replicates are independent and run in parallel;
/// per-replicate seeds derive from the master seed alone, so the result
/// is identical across runs and thread counts. Replicate failures are
/// recorded and skipped in the cell means.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.cells.is_empty() {
        return Err(Error::InvalidConfig("experiment grid is empty".into()));
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be positive".into()));
    }
    cfg.path.validate()?;
    use rand::prelude::*;
    let mut master = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut jobs = Vec::new();
    for ci in 0..cfg.cells.len() {
        for r in 0..cfg.replicates {
            jobs.push((ci, r, master.random::<u64>()));
        }
    }
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(ci, r, seed)| ReplicateRecord {
            cell: ci,
            replicate: r,
            seed,
            outcome: run_replicate(&cfg.cells[ci], cfg, seed).map_err(|e| e.to_string()),
        })
        .collect();

    let mut cells = Vec::with_capacity(cfg.cells.len());
    for (ci, cell) in cfg.cells.iter().enumerate() {
        let ok: Vec<&ReplicateMetrics> = records
            .iter()
            .filter(|r| r.cell == ci)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let failures = cfg.replicates - ok.len();
        let col = |f: fn(&ReplicateMetrics) -> f64| -> Vec<f64> {
            ok.iter().map(|m| f(m)).collect()
        };
        let (fe, fe_se) = mean_se(&col(|m| m.f1_effect_type));
        let (fz, fz_se) = mean_se(&col(|m| m.f1_nonzero));
        let (pe, pe_se) = mean_se(&col(|m| m.prediction_error));
        let (sp, sp_se) = mean_se(&col(|m| m.sparsity as f64));
        let (sec, _) = mean_se(&col(|m| m.seconds));
        cells.push(CellSummary {
            cell: cell.clone(),
            n_replicates: ok.len(),
            failures,
            seconds_mean: sec,
            metrics: vec![
                ("f1_effect_type", fe, fe_se),
                ("f1_nonzero", fz, fz_se),
                ("prediction_error", pe, pe_se),
                ("sparsity", sp, sp_se),
            ],
        });
    }
    Ok(ExperimentResult { records, cells })
}

/// Long-format results table: one row per (cell, metric).
pub fn write_experiment_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_total",
        "p",
        "rho",
        "family",
        "method",
        "metric",
        "mean",
        "se",
        "n_replicates",
        "seconds_mean",
    ])?;
    for c in &result.cells {
        for (name, mean, se) in &c.metrics {
            w.write_record([
                c.cell.n_total.to_string(),
                c.cell.p.to_string(),
                c.cell.rho.to_string(),
                c.cell.family.to_string(),
                c.cell.method.to_string(),
                (*name).to_string(),
                mean.to_string(),
                se.to_string(),
                c.n_replicates.to_string(),
                c.seconds_mean.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
