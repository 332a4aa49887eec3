//! Synthetic clustered datasets with sparse fixed and random effects.
//!
//! The generator draws a truth (supports, random effects, noise level) and
//! one or more datasets from it. Everything is a pure function of the seed:
//! the truth and each dataset consume separate, deterministically derived
//! ChaCha streams, so `generate_synthetic` and the training part of
//! `generate_study` agree bit for bit for the same config.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::data::{ClusterData, Dataset, Family, GroundTruth};
use crate::error::{Error, Result};

/// Parameters of the generating model.
///
/// `s_fixed` predictors get a unit fixed effect; a subset of `s_random` of
/// them also get a unit-variance random effect. Predictors are correlated
/// within an observation with autoregressive decay `rho`. Observations are
/// spread over `ceil(n_total / 10)` clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_total: usize,
    pub p: usize,
    pub s_fixed: usize,
    pub s_random: usize,
    pub rho: f64,
    #[serde(default = "default_family")]
    pub family: Family,
    pub seed: u64,
}

fn default_family() -> Family {
    Family::Gaussian
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 || self.p == 0 {
            return Err(Error::InvalidConfig(
                "n_total and p must be positive".into(),
            ));
        }
        if self.s_fixed > self.p {
            return Err(Error::InvalidConfig(format!(
                "s_fixed ({}) exceeds p ({})",
                self.s_fixed, self.p
            )));
        }
        if self.s_random > self.s_fixed {
            return Err(Error::InvalidConfig(format!(
                "s_random ({}) exceeds s_fixed ({}); random effects require a fixed effect",
                self.s_random, self.s_fixed
            )));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn n_clusters(&self) -> usize {
        self.n_total.div_ceil(10)
    }
}

/// A training set plus validation and test sets drawn from the same truth.
///
/// The three datasets share the cluster ids, realized random effects, and
/// noise variance, so effects predicted from the training set carry over.
/// Predictors, cluster assignments, and noise are fresh in each.
#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub truth: GroundTruth,
}

pub fn generate_synthetic(cfg: &SimConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut truth = draw_truth(cfg, &mut stream_rng(cfg.seed, 0));
    let (data, sigma2) = draw_dataset(cfg, &truth, None, &mut stream_rng(cfg.seed, 1))?;
    truth.sigma2 = sigma2;
    Ok((data, truth))
}

pub fn generate_study(cfg: &SimConfig) -> Result<SyntheticStudy> {
    cfg.validate()?;
    let mut truth = draw_truth(cfg, &mut stream_rng(cfg.seed, 0));
    let (train, sigma2) = draw_dataset(cfg, &truth, None, &mut stream_rng(cfg.seed, 1))?;
    truth.sigma2 = sigma2;
    let (validation, _) = draw_dataset(cfg, &truth, sigma2, &mut stream_rng(cfg.seed, 2))?;
    let (test, _) = draw_dataset(cfg, &truth, sigma2, &mut stream_rng(cfg.seed, 3))?;
    Ok(SyntheticStudy {
        train,
        validation,
        test,
        truth,
    })
}

/// Per-cluster true linear predictors `X_i (beta + u_i)`.
///
/// The dataset must be on the scale the truth was generated on (i.e. not
/// standardized), with clusters in generator order.
pub fn true_linear_predictor(dataset: &Dataset, truth: &GroundTruth) -> Vec<Array1<f64>> {
    dataset
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let coef = &truth.beta + &truth.u[i];
            c.x.dot(&coef)
        })
        .collect()
}

/// Writes the nonzero rows of the true coefficient vectors.
pub fn write_truth_csv<P: AsRef<Path>>(truth: &GroundTruth, path: P) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "predictor,beta,gamma")?;
    for k in 0..truth.beta.len() {
        if truth.beta[k] != 0.0 || truth.gamma[k] != 0.0 {
            writeln!(out, "x{},{},{}", k + 1, truth.beta[k], truth.gamma[k])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    // splitmix64 expansion of (seed, stream) into a 32-byte key.
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(stream);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

fn draw_truth(cfg: &SimConfig, rng: &mut ChaCha20Rng) -> GroundTruth {
    let mut fixed: Vec<usize> = rand::seq::index::sample(rng, cfg.p, cfg.s_fixed).into_vec();
    fixed.sort_unstable();
    let mut random: Vec<usize> = rand::seq::index::sample(rng, cfg.s_fixed, cfg.s_random)
        .into_vec()
        .iter()
        .map(|&i| fixed[i])
        .collect();
    random.sort_unstable();

    let mut beta = Array1::zeros(cfg.p);
    let mut gamma = Array1::zeros(cfg.p);
    for &k in &fixed {
        beta[k] = 1.0;
    }
    for &k in &random {
        gamma[k] = 1.0;
    }

    let m = cfg.n_clusters();
    let mut u = Vec::with_capacity(m);
    for _ in 0..m {
        let mut ui = Array1::zeros(cfg.p);
        for &k in &random {
            ui[k] = rng.sample::<f64, _>(StandardNormal);
        }
        u.push(ui);
    }
    GroundTruth {
        beta,
        gamma,
        u,
        sigma2: None,
    }
}

/// Draws one dataset. For Gaussian data with `sigma2 = None`, the noise
/// variance is set to the realized variance of the linear predictor so the
/// signal-to-noise ratio is exactly 1; the value used is returned.
fn draw_dataset(
    cfg: &SimConfig,
    truth: &GroundTruth,
    sigma2: Option<f64>,
    rng: &mut ChaCha20Rng,
) -> Result<(Dataset, Option<f64>)> {
    let n = cfg.n_total;
    let m = cfg.n_clusters();

    let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    repair_empty_clusters(&mut assignment, m);

    let mut x_rows = Vec::with_capacity(n);
    for _ in 0..n {
        x_rows.push(ar1_row(cfg.p, cfg.rho, rng));
    }

    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let coef = &truth.beta + &truth.u[assignment[i]];
            x_rows[i].dot(&coef)
        })
        .collect();

    let sigma2_used = match (cfg.family, sigma2) {
        (Family::Gaussian, Some(s)) => Some(s),
        (Family::Gaussian, None) => {
            let mean = eta.iter().sum::<f64>() / n as f64;
            let var = eta.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
            Some(if var > 1e-300 { var } else { 1.0 })
        }
        (Family::Bernoulli, _) => None,
    };

    let y: Vec<f64> = match cfg.family {
        Family::Gaussian => {
            let sd = sigma2_used.unwrap().sqrt();
            eta.iter()
                .map(|e| e + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        Family::Bernoulli => eta
            .iter()
            .map(|e| {
                let prob = 1.0 / (1.0 + (-e).exp());
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    let mut clusters = Vec::with_capacity(m);
    for (c, obs) in members.iter().enumerate() {
        let ni = obs.len();
        let mut yc = Array1::zeros(ni);
        let mut xc = Array2::zeros((ni, cfg.p));
        for (row, &i) in obs.iter().enumerate() {
            yc[row] = y[i];
            xc.row_mut(row).assign(&x_rows[i]);
        }
        clusters.push(ClusterData {
            id: (c + 1).to_string(),
            y: yc,
            x: xc,
            w: Array1::ones(ni),
        });
    }
    Ok((Dataset::new(clusters, cfg.family)?, sigma2_used))
}

/// Multinomial assignment can leave clusters empty; each empty cluster is
/// reseeded with one observation taken from the currently largest cluster
/// (lowest index on ties), so every cluster ends up non-empty.
fn repair_empty_clusters(assignment: &mut [usize], m: usize) {
    let mut counts = vec![0usize; m];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..m {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..m)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("m > 0");
        debug_assert!(counts[donor] >= 2, "need n_total >= n_clusters");
        let moved = assignment
            .iter()
            .rposition(|&c| c == donor)
            .expect("donor has members");
        assignment[moved] = empty;
        counts[donor] -= 1;
        counts[empty] += 1;
    }
}

/// One observation's predictors: standard normal marginals with
/// correlation `rho^|j-k|` between columns j and k.
fn ar1_row(p: usize, rho: f64, rng: &mut ChaCha20Rng) -> Array1<f64> {
    let mut x = Array1::zeros(p);
    let innov = (1.0 - rho * rho).sqrt();
    let mut prev: f64 = rng.sample(StandardNormal);
    x[0] = prev;
    for k in 1..p {
        let z: f64 = rng.sample(StandardNormal);
        prev = rho * prev + innov * z;
        x[k] = prev;
    }
    x
}
