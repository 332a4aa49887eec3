//! Trace a full regularization path over an `(alpha, lambda)` grid.
//!
//! The path starts at a lambda large enough that everything is zero and
//! steps down geometrically, warm-starting each fit from the previous one
//! and recording a model whenever the active set changes.

use glmmselect::path::{fit_path, PathConfig};
use glmmselect::sim::{generate_synthetic, SimConfig};
use glmmselect::Result;

fn main() -> Result<()> {
    let sim = SimConfig {
        n_total: 500,
        p: 40,
        s_fixed: 5,
        s_random: 3,
        rho: 0.4,
        family: glmmselect::Family::Gaussian,
        seed: 23,
    };
    let (data, _) = generate_synthetic(&sim)?;
    let data = data.standardize()?;

    let cfg = PathConfig {
        n_lambda: 30,
        alphas: vec![0.5, 1.0],
        ..PathConfig::default()
    };
    let path = fit_path(&data, &cfg)?;

    println!(
        "{:>6} {:>12} {:>6} {:>6} {:>12}",
        "alpha", "lambda", "nnz_b", "nnz_g", "objective"
    );
    for alpha in &cfg.alphas {
        for e in path.slice(*alpha) {
            println!(
                "{:>6.2} {:>12.4} {:>6} {:>6} {:>12.3}",
                e.alpha,
                e.lambda,
                e.nnz_fixed(),
                e.nnz_random(),
                e.objective,
            );
        }
    }
    for (alpha, end) in &path.termination {
        println!("alpha {alpha:.2} stopped: {end}");
    }
    Ok(())
}
