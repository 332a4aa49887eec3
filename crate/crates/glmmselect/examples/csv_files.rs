//! Round-trip a study through CSV files, the way the CLI does.
//!
//! Writes simulated clustered data to disk in long format, loads it back
//! with an explicit column schema, fits a short path, and exports the
//! path summary and per-entry coefficients as CSV.

use glmmselect::data::{load_csv, write_csv, CsvSchema, Family};
use glmmselect::path::{fit_path, write_coefficients_csv, write_path_csv, PathConfig};
use glmmselect::sim::{generate_synthetic, SimConfig};
use glmmselect::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("glmmselect_csv_example");
    std::fs::create_dir_all(&dir)?;

    let sim = SimConfig {
        n_total: 300,
        p: 10,
        s_fixed: 3,
        s_random: 1,
        rho: 0.0,
        family: Family::Gaussian,
        seed: 99,
    };
    let (data, _) = generate_synthetic(&sim)?;
    let train_file = dir.join("train.csv");
    write_csv(&data, &train_file)?;
    println!("wrote {}", train_file.display());

    // The schema names the id and response columns; every remaining
    // numeric column becomes a predictor unless listed explicitly.
    let schema = CsvSchema {
        cluster: "cluster".into(),
        response: "y".into(),
        predictors: None,
    };
    let loaded = load_csv(&train_file, &schema, Family::Gaussian)?.standardize()?;
    println!(
        "loaded {} clusters, {} predictors",
        loaded.clusters.len(),
        loaded.p
    );

    let cfg = PathConfig {
        n_lambda: 15,
        alphas: vec![0.5],
        ..PathConfig::default()
    };
    let path = fit_path(&loaded, &cfg)?;

    let path_file = dir.join("path.csv");
    write_path_csv(&path, std::fs::File::create(&path_file)?)?;
    // Passing the scales maps coefficients back to the original units.
    let coef_file = dir.join("coefficients.csv");
    write_coefficients_csv(
        &path,
        std::fs::File::create(&coef_file)?,
        Some(&loaded.scales),
    )?;
    println!("wrote {} and {}", path_file.display(), coef_file.display());
    println!(
        "{}",
        std::fs::read_to_string(&path_file)?
            .lines()
            .take(5)
            .collect::<Vec<_>>()
            .join("\n")
    );
    Ok(())
}
