//! Clustered data containers, standardization, and CSV ingestion.
//!
//! Observations are grouped by cluster; every cluster carries the same `p`
//! predictor columns. Predictors enter the solver standardized to unit
//! Euclidean norm over the stacked sample, and `scales` remembers the
//! divisors so coefficients can be reported on the original scale.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Conditional distribution of the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Bernoulli,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Bernoulli => write!(f, "bernoulli"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(Error::InvalidConfig(format!(
                "unknown family '{other}' (expected gaussian or bernoulli)"
            ))),
        }
    }
}

/// One cluster's responses, predictors, and observation weights.
///
/// Weights are all 1 for raw Gaussian data; the quasi-likelihood loop
/// installs working weights here.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterData {
    pub id: String,
    pub y: Array1<f64>,
    pub x: Array2<f64>,
    pub w: Array1<f64>,
}

impl ClusterData {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// A clustered dataset with consistent predictor dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clusters: Vec<ClusterData>,
    pub p: usize,
    pub family: Family,
    /// Cumulative per-column divisors relative to the data as loaded.
    /// All 1 until `standardize` or `apply_scales` runs.
    pub scales: Array1<f64>,
}

/// Column norms below this cannot be standardized.
pub const STANDARDIZE_FLOOR: f64 = 1e-12;

impl Dataset {
    /// Validates cluster shapes, weight positivity, and (for Bernoulli
    /// data) that responses are exactly 0 or 1.
    pub fn new(clusters: Vec<ClusterData>, family: Family) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = clusters[0].x.ncols();
        let mut seen = HashMap::new();
        for (ci, c) in clusters.iter().enumerate() {
            if c.n() == 0 {
                return Err(Error::EmptyCluster(c.id.clone()));
            }
            if c.x.ncols() != p {
                return Err(Error::InvalidConfig(format!(
                    "cluster '{}' has {} predictor columns, expected {}",
                    c.id,
                    c.x.ncols(),
                    p
                )));
            }
            if c.x.nrows() != c.n() || c.w.len() != c.n() {
                return Err(Error::InvalidConfig(format!(
                    "cluster '{}' has inconsistent row counts",
                    c.id
                )));
            }
            if let Some(prev) = seen.insert(c.id.clone(), ci) {
                return Err(Error::InvalidConfig(format!(
                    "cluster id '{}' appears in positions {} and {}",
                    c.id, prev, ci
                )));
            }
            if c.w.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "cluster '{}' has a non-positive or non-finite weight",
                    c.id
                )));
            }
            if family == Family::Bernoulli {
                for (j, &v) in c.y.iter().enumerate() {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::NonBinaryResponse {
                            cluster: ci,
                            index: j,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Dataset {
            clusters,
            p,
            family,
            scales: Array1::ones(p),
        })
    }

    pub fn n_total(&self) -> usize {
        self.clusters.iter().map(|c| c.n()).sum()
    }

    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    /// Rescales every predictor column to unit Euclidean norm over the
    /// stacked sample and records the divisors in `scales`.
    pub fn standardize(mut self) -> Result<Self> {
        let mut norms = vec![0.0_f64; self.p];
        for c in &self.clusters {
            for k in 0..self.p {
                for i in 0..c.n() {
                    let v = c.x[[i, k]];
                    norms[k] += v * v;
                }
            }
        }
        let mut divisors = Array1::ones(self.p);
        for (k, sq) in norms.iter().enumerate() {
            let norm = sq.sqrt();
            if norm < STANDARDIZE_FLOOR {
                return Err(Error::ZeroVarianceColumn(k));
            }
            divisors[k] = norm;
        }
        self.apply_scales(&divisors)?;
        Ok(self)
    }

    /// Divides predictor columns by the given factors. Used to put a
    /// validation set on the same footing as the training set it will be
    /// scored against.
    pub fn apply_scales(&mut self, divisors: &Array1<f64>) -> Result<()> {
        if divisors.len() != self.p {
            return Err(Error::InvalidConfig(format!(
                "scale vector has length {}, expected {}",
                divisors.len(),
                self.p
            )));
        }
        if divisors.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "scale factors must be positive and finite".into(),
            ));
        }
        for c in &mut self.clusters {
            for k in 0..self.p {
                let inv = 1.0 / divisors[k];
                for i in 0..c.n() {
                    c.x[[i, k]] *= inv;
                }
            }
        }
        self.scales *= divisors;
        Ok(())
    }
}

/// Maps coefficients fitted on standardized columns back to the data's
/// original scale: `beta / s` and `gamma / s^2`.
pub fn to_original_scale(
    scales: &Array1<f64>,
    beta: &Array1<f64>,
    gamma: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let beta_orig = beta / scales;
    let gamma_orig = gamma / &(scales * scales);
    (beta_orig, gamma_orig)
}

/// The generating model behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta: Array1<f64>,
    pub gamma: Array1<f64>,
    /// Realized random effects, one vector per cluster.
    pub u: Vec<Array1<f64>>,
    /// Noise variance; `None` for Bernoulli data.
    pub sigma2: Option<f64>,
}

impl GroundTruth {
    pub fn fixed_support(&self) -> Vec<usize> {
        support(&self.beta)
    }

    pub fn random_support(&self) -> Vec<usize> {
        support(&self.gamma)
    }
}

pub(crate) fn support(v: &Array1<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(k, _)| k)
        .collect()
}

/// Column roles for `load_csv`. When `predictors` is `None`, every column
/// other than the cluster and response columns is a predictor, in header
/// order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub cluster: String,
    pub response: String,
    pub predictors: Option<Vec<String>>,
}

/// Reads a long-format CSV (one row per observation) and groups rows into
/// clusters ordered by first appearance. Weights start at 1.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema, family: Family) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cluster_col = col(&schema.cluster)?;
    let response_col = col(&schema.response)?;

    let predictor_cols: Vec<(usize, String)> = match &schema.predictors {
        Some(names) => {
            let mut cols = Vec::with_capacity(names.len());
            for name in names {
                cols.push((col(name)?, name.clone()));
            }
            cols
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != cluster_col && *i != response_col)
            .map(|(i, h)| (i, h.clone()))
            .collect(),
    };
    if predictor_cols.is_empty() {
        return Err(Error::InvalidConfig(
            "no predictor columns remain after removing cluster and response".into(),
        ));
    }

    // Rows accumulate per cluster id, keyed by first appearance.
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, Vec<f64>)>> = HashMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|pos| pos.line() as usize)
            .unwrap_or(0);
        let parse = |idx: usize, column: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| Error::ParseError {
                row: line,
                column: column.to_string(),
                message: format!("cannot parse '{raw}' as a number"),
            })
        };
        let id = record.get(cluster_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::ParseError {
                row: line,
                column: schema.cluster.clone(),
                message: "empty cluster id".into(),
            });
        }
        let y = parse(response_col, &schema.response)?;
        let mut x = Vec::with_capacity(predictor_cols.len());
        for (idx, name) in &predictor_cols {
            x.push(parse(*idx, name)?);
        }
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((y, x));
    }

    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let p = predictor_cols.len();
    let mut clusters = Vec::with_capacity(order.len());
    for id in order {
        let obs = rows.remove(&id).expect("id recorded on first appearance");
        let n = obs.len();
        let mut y = Array1::zeros(n);
        let mut x = Array2::zeros((n, p));
        for (i, (yi, xi)) in obs.into_iter().enumerate() {
            y[i] = yi;
            for k in 0..p {
                x[[i, k]] = xi[k];
            }
        }
        clusters.push(ClusterData {
            id,
            y,
            x,
            w: Array1::ones(n),
        });
    }
    Dataset::new(clusters, family)
}

/// Writes a dataset in the long format `load_csv` reads back.
pub fn write_csv<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write!(out, "cluster,y")?;
    for k in 0..dataset.p {
        write!(out, ",x{}", k + 1)?;
    }
    writeln!(out)?;
    for c in &dataset.clusters {
        for i in 0..c.n() {
            write!(out, "{},{}", c.id, c.y[i])?;
            for k in 0..dataset.p {
                write!(out, ",{}", c.x[[i, k]])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
