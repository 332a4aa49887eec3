//! Per-cluster covariance maintenance.
//!
//! For cluster i the marginal covariance (up to the profiled-out noise
//! variance) is
//!
//! ```text
//! V_i = diag(1/w_i) + X_i diag(gamma) X_i'
//! ```
//!
//! The solver edits one entry of `gamma` at a time, which perturbs every
//! V_i by a rank-one term. This module keeps `inv(V_i)` and `logdet(V_i)`
//! current under such edits in O(n_i^2) per cluster via the
//! Sherman-Morrison identity and the matching determinant update, instead
//! of the O(n_i^3) refactorization a dense rebuild would need.

use ndarray::{Array1, Array2};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Rank-one denominators smaller than this are treated as singular.
const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Accumulated updates drift; a dense rebuild clears the error. The bound
/// is generous because each update loses only a few ulps.
const REBUILD_INTERVAL: usize = 10_000;

#[derive(Debug, Clone)]
pub(crate) struct ClusterCov {
    pub inv: Array2<f64>,
    pub logdet: f64,
    edits: usize,
}

/// Inverses and log-determinants of every cluster's covariance, tied to
/// the `gamma` vector they were built from.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    pub(crate) clusters: Vec<ClusterCov>,
    gamma: Array1<f64>,
}

impl CovarianceState {
    /// Builds the state densely from scratch. `gamma` entries must be
    /// non-negative; weights come from the dataset.
    pub fn build(data: &Dataset, gamma: &Array1<f64>) -> Result<Self> {
        debug_assert_eq!(gamma.len(), data.p);
        let active: Vec<usize> = gamma
            .iter()
            .enumerate()
            .filter(|(_, &g)| g > 0.0)
            .map(|(k, _)| k)
            .collect();
        let mut clusters = Vec::with_capacity(data.m());
        for (ci, c) in data.clusters.iter().enumerate() {
            let n = c.n();
            let mut v = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                v[[i, i]] = 1.0 / c.w[i];
            }
            for &k in &active {
                let g = gamma[k];
                for i in 0..n {
                    let xi = c.x[[i, k]];
                    for j in 0..=i {
                        v[[i, j]] += g * xi * c.x[[j, k]];
                    }
                }
            }
            for i in 0..n {
                for j in 0..i {
                    v[[j, i]] = v[[i, j]];
                }
            }
            let (inv, logdet) = linalg::spd_inverse_logdet(&v)
                .ok_or(Error::NonPositiveDefinite { cluster: ci })?;
            clusters.push(ClusterCov {
                inv,
                logdet,
                edits: 0,
            });
        }
        Ok(CovarianceState {
            clusters,
            gamma: gamma.clone(),
        })
    }

    /// Applies `gamma[k] += delta` to every cluster.
    ///
    /// With u = inv x_ik and b = x_ik' u:
    ///
    /// ```text
    /// inv    <- inv - (delta / (1 + delta b)) u u'
    /// logdet <- logdet + ln(1 + delta b)
    /// ```
    ///
    /// The caller must keep the new gamma entry non-negative; a valid edit
    /// can only hit `SingularUpdate` through accumulated round-off.
    pub fn rank_one_update(&mut self, data: &Dataset, k: usize, delta: f64) -> Result<()> {
        if delta == 0.0 {
            return Ok(());
        }
        let inv_delta = 1.0 / delta;
        for (ci, (c, s)) in data.clusters.iter().zip(self.clusters.iter_mut()).enumerate() {
            let n = c.n();
            let mut u = vec![0.0; n];
            let mut b = 0.0;
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += s.inv[[i, j]] * c.x[[j, k]];
                }
                u[i] = acc;
                b += c.x[[i, k]] * acc;
            }
            let denom = inv_delta + b;
            let scale = 1.0 + delta * b;
            if denom.abs() < SINGULAR_DENOMINATOR || scale <= 0.0 {
                return Err(Error::SingularUpdate {
                    cluster: ci,
                    predictor: k,
                });
            }
            let factor = delta / scale;
            for i in 0..n {
                let fui = factor * u[i];
                for j in 0..n {
                    s.inv[[i, j]] -= fui * u[j];
                }
            }
            linalg::symmetrize(&mut s.inv);
            s.logdet += scale.ln();
            s.edits += 1;
        }
        self.gamma[k] += delta;
        debug_assert!(self.gamma[k] >= -1e-9, "gamma went negative");

        // Rebuild clusters whose update count crossed the drift bound.
        if self.clusters.iter().any(|s| s.edits >= REBUILD_INTERVAL) {
            self.rebuild(data)?;
        }
        Ok(())
    }

    /// Dense refresh of every cluster from the current gamma snapshot.
    pub fn rebuild(&mut self, data: &Dataset) -> Result<()> {
        *self = CovarianceState::build(data, &self.gamma)?;
        Ok(())
    }

    pub fn inv(&self, cluster: usize) -> &Array2<f64> {
        &self.clusters[cluster].inv
    }

    pub fn logdet(&self, cluster: usize) -> f64 {
        self.clusters[cluster].logdet
    }

    pub fn logdet_sum(&self) -> f64 {
        self.clusters.iter().map(|s| s.logdet).sum()
    }

    /// The gamma vector this state currently reflects.
    pub fn gamma_snapshot(&self) -> &Array1<f64> {
        &self.gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClusterData, Family};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn dataset_from(x_list: Vec<Array2<f64>>) -> Dataset {
        let clusters = x_list
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let n = x.nrows();
                ClusterData {
                    id: format!("{}", i + 1),
                    y: Array1::zeros(n),
                    x,
                    w: Array1::ones(n),
                }
            })
            .collect();
        Dataset::new(clusters, Family::Gaussian).unwrap()
    }

    fn random_dataset(m: usize, n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let xs = (0..m)
            .map(|_| Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        dataset_from(xs)
    }

    #[test]
    fn zero_gamma_unit_weights_is_identity() {
        let ds = random_dataset(2, 4, 3, 1);
        let state = CovarianceState::build(&ds, &Array1::zeros(3)).unwrap();
        for i in 0..2 {
            assert_eq!(state.logdet(i), 0.0);
            for a in 0..4 {
                for b in 0..4 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert_eq!(state.inv(i)[[a, b]], want);
                }
            }
        }
    }

    #[test]
    fn single_predictor_two_obs_closed_form() {
        // x = (1, 0)', gamma = 1: V = diag(2, 1).
        let ds = dataset_from(vec![array![[1.0], [0.0]]]);
        let state = CovarianceState::build(&ds, &array![1.0]).unwrap();
        let inv = state.inv(0);
        assert!((inv[[0, 0]] - 0.5).abs() < 1e-14);
        assert!((inv[[1, 1]] - 1.0).abs() < 1e-14);
        assert!(inv[[0, 1]].abs() < 1e-14);
        assert!((state.logdet(0) - 2.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn update_matches_dense_rebuild() {
        let ds = random_dataset(3, 5, 4, 2);
        let mut gamma = Array1::zeros(4);
        let mut state = CovarianceState::build(&ds, &gamma).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for step in 0..10 {
            let k = rng.random_range(0..4);
            let delta = if gamma[k] > 0.0 && step % 3 == 0 {
                -gamma[k] * rng.random::<f64>()
            } else {
                rng.random::<f64>() * 2.0
            };
            state.rank_one_update(&ds, k, delta).unwrap();
            gamma[k] += delta;
            let fresh = CovarianceState::build(&ds, &gamma).unwrap();
            for i in 0..3 {
                assert!((state.logdet(i) - fresh.logdet(i)).abs() < 1e-8);
                let diff = state.inv(i) - fresh.inv(i);
                let max = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                assert!(max < 1e-8, "step {step}: drift {max}");
            }
        }
    }

    #[test]
    fn update_then_inverse_update_restores() {
        let ds = random_dataset(2, 6, 3, 5);
        let gamma = array![0.5, 0.0, 1.5];
        let mut state = CovarianceState::build(&ds, &gamma).unwrap();
        let before = state.clone();
        state.rank_one_update(&ds, 1, 0.7).unwrap();
        state.rank_one_update(&ds, 1, -0.7).unwrap();
        for i in 0..2 {
            assert!((state.logdet(i) - before.logdet(i)).abs() < 1e-9);
            let diff = state.inv(i) - before.inv(i);
            let max = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(max < 1e-9);
        }
    }

    #[test]
    fn zero_delta_is_identity() {
        let ds = random_dataset(1, 4, 2, 8);
        let mut state = CovarianceState::build(&ds, &array![0.3, 0.0]).unwrap();
        let before = state.clone();
        state.rank_one_update(&ds, 0, 0.0).unwrap();
        assert_eq!(state.inv(0), before.inv(0));
        assert_eq!(state.logdet(0), before.logdet(0));
    }

    #[test]
    fn downdate_to_singularity_is_an_error() {
        // V = diag(2, 1) from gamma = 1, x = (1, 0)'. With b = 0.5, the
        // denominator 1/delta + b vanishes at delta = -2.
        let ds = dataset_from(vec![array![[1.0], [0.0]]]);
        let mut state = CovarianceState::build(&ds, &array![1.0]).unwrap();
        match state.rank_one_update(&ds, 0, -2.0) {
            Err(Error::SingularUpdate {
                cluster: 0,
                predictor: 0,
            }) => {}
            other => panic!("expected SingularUpdate, got {other:?}"),
        }
    }

    #[test]
    fn weights_enter_the_diagonal() {
        let mut ds = dataset_from(vec![array![[1.0], [0.0]]]);
        ds.clusters[0].w = array![2.0, 4.0];
        let state = CovarianceState::build(&ds, &array![0.0]).unwrap();
        // V = diag(0.5, 0.25).
        assert!((state.inv(0)[[0, 0]] - 2.0).abs() < 1e-14);
        assert!((state.inv(0)[[1, 1]] - 4.0).abs() < 1e-14);
        assert!((state.logdet(0) - (0.5_f64.ln() + 0.25_f64.ln())).abs() < 1e-12);
    }
}
