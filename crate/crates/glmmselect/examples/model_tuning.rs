//! Pick a model off the path with a validation set, then score it.
//!
//! Fits the path on training data, selects the entry with the smallest
//! validation loss (ties go to the sparser model), and evaluates the
//! chosen fit on held-out test data against the generating truth.

use glmmselect::evaluate::{prediction_error, selection_scores, tune, validation_losses};
use glmmselect::path::{fit_path, PathConfig};
use glmmselect::sim::{generate_study, true_linear_predictor, SimConfig};
use glmmselect::Result;

fn main() -> Result<()> {
    let sim = SimConfig {
        n_total: 600,
        p: 50,
        s_fixed: 5,
        s_random: 3,
        rho: 0.5,
        family: glmmselect::Family::Gaussian,
        seed: 7,
    };
    let study = generate_study(&sim)?;

    // Standardize the training data and put validation and test on the
    // same scale so coefficients transfer unchanged.
    let train = study.train.clone().standardize()?;
    let scales = train.scales.clone();
    let mut validation = study.validation.clone();
    validation.apply_scales(&scales)?;
    let mut test = study.test.clone();
    test.apply_scales(&scales)?;

    let cfg = PathConfig {
        n_lambda: 50,
        alphas: vec![0.25, 0.5, 0.75, 1.0],
        ..PathConfig::default()
    };
    let path = fit_path(&train, &cfg)?;
    let losses = validation_losses(&path, &validation)?;
    let tuned = tune(&path, &validation)?;

    println!(
        "path has {} entries; entry {} wins with validation loss {:.3}",
        path.entries.len(),
        tuned.index,
        tuned.loss
    );
    println!(
        "losses around the winner: {:?}",
        losses[tuned.index.saturating_sub(2)..(tuned.index + 3).min(losses.len())]
            .iter()
            .map(|l| (l * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    println!(
        "chosen lambda {:.4}, alpha {:.2}: {} fixed, {} random",
        tuned.entry.lambda,
        tuned.entry.alpha,
        tuned.entry.nnz_fixed(),
        tuned.entry.nnz_random()
    );

    let scores = selection_scores(
        &study.truth,
        &tuned.entry.beta_dense(train.p),
        &tuned.entry.gamma_dense(train.p),
    );
    println!(
        "selection: effect-type F1 {:.3}, nonzero F1 {:.3}",
        scores.f1_effect_type, scores.f1_nonzero
    );

    // Test clusters are new, so prediction uses fixed effects only; the
    // error is relative to the squared size of the true linear predictor.
    let truth_lp = true_linear_predictor(&study.test, &study.truth);
    let fitted_lp = glmmselect::evaluate::entry_linear_predictors(
        &tuned.entry,
        train.p,
        &path.cluster_ids,
        &test,
    );
    println!(
        "relative test prediction error: {:.4}",
        prediction_error(&truth_lp, &fitted_lp)?
    );
    Ok(())
}
