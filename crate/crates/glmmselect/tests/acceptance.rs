//! End-to-end checks of the solver stack against independent oracles and
//! the selection benchmarks it is meant to reproduce, each with an explicit
//! tolerance and time budget. Every criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion failed. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

use glmmselect::covariance::CovarianceState;
use glmmselect::data::{ClusterData, Dataset, Family};
use glmmselect::evaluate::{
    run_experiment, selection_scores, tune, ExperimentCell, ExperimentConfig, Method,
};
use glmmselect::likelihood::{grad_block, neg_log_likelihood};
use glmmselect::local_search::{fit_cd_ls, LocalSearchConfig};
use glmmselect::path::{default_alpha_grid, fit_path, PathConfig};
use glmmselect::sim::{generate_study, generate_synthetic, SimConfig};
use glmmselect::solver::{fit_cd, threshold, SolverConfig};

struct Outcome {
    label: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<fn() -> Outcome> = vec![
        c1_threshold_oracle,
        c2_gradient_finite_differences,
        c3_rank_one_vs_dense,
        c4_monotone_descent,
        c5_small_instance_global_optimality,
        c6_path_contract,
        c7_gaussian_selection_benchmark,
        c8_bernoulli_selection_benchmark,
        c9_local_search_under_correlation,
        c10_path_scaling,
    ];
    let mut all_pass = true;
    for (i, run) in criteria.iter().enumerate() {
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {:<42} {} ({:.2} s; {})",
            i + 1,
            o.label,
            verdict,
            o.secs,
            o.detail
        );
        all_pass &= o.pass;
    }
    assert!(all_pass, "one or more acceptance criteria failed");
}

// ---------------------------------------------------------------------
// Criterion 1: the closed-form threshold matches a literal three-candidate
// argmin of the proximal objective on 10,000 random tuples, exactly.
// ---------------------------------------------------------------------

/// Independent minimizer of
///   lbar/2 [(b - bh)^2 + (g - gh)^2] + la*1{b!=0} + l(1-a)*1{g!=0},
///   g >= 0, b = 0 => g = 0,
/// by pricing each feasible candidate. Candidates are ordered sparsest
/// first and replaced only on strict improvement, so ties stay sparse.
fn threshold_candidates(bh: f64, gh: f64, lambda: f64, alpha: f64, lbar: f64) -> (f64, f64) {
    let gplus = gh.max(0.0);
    let half = 0.5 * lbar;
    let mut cands: Vec<((f64, f64), f64)> = vec![((0.0, 0.0), half * (bh * bh + gh * gh))];
    if bh != 0.0 {
        cands.push(((bh, 0.0), half * gh * gh + lambda * alpha));
        if gplus != 0.0 {
            let dg = gplus - gh;
            cands.push((
                (bh, gplus),
                half * dg * dg + lambda * alpha + lambda * (1.0 - alpha),
            ));
        }
    }
    let mut best = cands[0];
    for c in &cands[1..] {
        if c.1 < best.1 {
            best = *c;
        }
    }
    best.0
}

fn c1_threshold_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let start = Instant::now();
    let total = 10_000;
    let mut mismatches = 0;
    for i in 0..total {
        let bh = if i % 7 == 0 {
            0.0
        } else {
            3.0 * rng.sample::<f64, _>(StandardNormal)
        };
        let gh = if i % 9 == 0 {
            0.0
        } else {
            2.0 * rng.sample::<f64, _>(StandardNormal)
        };
        let lambda = if i % 11 == 0 {
            0.0
        } else {
            10.0 * rng.random::<f64>()
        };
        let alpha = if i % 5 == 0 {
            1.0
        } else {
            rng.random::<f64>().max(1e-3)
        };
        let lbar = 10f64.powf(3.0 * rng.random::<f64>() - 1.5);
        if threshold(bh, gh, lambda, alpha, lbar)
            != threshold_candidates(bh, gh, lambda, alpha, lbar)
        {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "threshold matches candidate argmin",
        pass: mismatches == 0 && secs < 1.0,
        detail: format!("{}/{} exact", total - mismatches, total),
        secs,
    }
}

// ---------------------------------------------------------------------
// Shared small random instances.
// ---------------------------------------------------------------------

fn random_dataset(rng: &mut ChaCha20Rng, m: usize, ni: usize, p: usize) -> Dataset {
    let clusters = (0..m)
        .map(|i| {
            let x = Array2::from_shape_fn((ni, p), |_| rng.sample::<f64, _>(StandardNormal));
            let y = Array1::from_shape_fn(ni, |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let w = Array1::from_shape_fn(ni, |_| 0.5 + 1.5 * rng.random::<f64>());
            ClusterData {
                id: format!("c{i}"),
                y,
                x,
                w,
            }
        })
        .collect();
    Dataset {
        clusters,
        p,
        family: Family::Gaussian,
        scales: Array1::ones(p),
    }
}

// ---------------------------------------------------------------------
// Criterion 2: analytic block gradients against central finite
// differences of the profiled objective.
// ---------------------------------------------------------------------

fn c2_gradient_finite_differences() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let start = Instant::now();
    let tol = 1e-5;
    let mut max_rel = 0.0_f64;
    let mut checked = 0usize;
    let mut instances = 0usize;
    for _ in 0..100 {
        let m = rng.random_range(1..=3);
        let ni = rng.random_range(2..=6);
        let p = rng.random_range(1..=8);
        let data = random_dataset(&mut rng, m, ni, p);
        let beta = Array1::from_shape_fn(p, |_| {
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let gamma = Array1::from_shape_fn(p, |_| 0.05 + 1.45 * rng.random::<f64>());
        let state = match CovarianceState::build(&data, &gamma) {
            Ok(s) => s,
            Err(_) => continue,
        };
        instances += 1;
        for k in 0..p {
            let (gb, gg) = grad_block(&data, &state, &beta, k).unwrap();

            let hb = 1e-5 * (1.0 + beta[k].abs());
            let mut bp = beta.clone();
            bp[k] += hb;
            let mut bm = beta.clone();
            bm[k] -= hb;
            let fp = neg_log_likelihood(&data, &state, &bp).unwrap();
            let fm = neg_log_likelihood(&data, &state, &bm).unwrap();
            let fd_b = (fp - fm) / (2.0 * hb);

            let hg = 1e-5 * (1.0 + gamma[k]);
            let mut gp = gamma.clone();
            gp[k] += hg;
            let mut gm = gamma.clone();
            gm[k] -= hg;
            let sp = CovarianceState::build(&data, &gp).unwrap();
            let sm = CovarianceState::build(&data, &gm).unwrap();
            let fd_g = (neg_log_likelihood(&data, &sp, &beta).unwrap()
                - neg_log_likelihood(&data, &sm, &beta).unwrap())
                / (2.0 * hg);

            let rel_b = (gb - fd_b).abs() / fd_b.abs().max(1e-6);
            let rel_g = (gg - fd_g).abs() / fd_g.abs().max(1e-6);
            max_rel = max_rel.max(rel_b).max(rel_g);
            checked += 2;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "block gradients match finite differences",
        pass: max_rel < tol && secs < 5.0,
        detail: format!(
            "{} partials on {} instances, max rel err {:.2e}",
            checked, instances, max_rel
        ),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 3: rank-one maintained inverses and log-determinants against
// dense Gauss-Jordan recomputation.
// ---------------------------------------------------------------------

/// Gauss-Jordan inverse with partial pivoting, plus the log-determinant
/// accumulated from the pivots. The matrices here are SPD, so the
/// determinant is positive.
fn dense_inverse_logdet(a: &Array2<f64>) -> (Array2<f64>, f64) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    let mut logdet = 0.0;
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[[r, col]].abs() > m[[piv, col]].abs() {
                piv = r;
            }
        }
        if piv != col {
            for j in 0..n {
                m.swap([col, j], [piv, j]);
                inv.swap([col, j], [piv, j]);
            }
        }
        let d = m[[col, col]];
        logdet += d.abs().ln();
        for j in 0..n {
            m[[col, j]] /= d;
            inv[[col, j]] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[[r, col]];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[[r, j]] -= f * m[[col, j]];
                inv[[r, j]] -= f * inv[[col, j]];
            }
        }
    }
    (inv, logdet)
}

fn dense_v(c: &ClusterData, gamma: &Array1<f64>) -> Array2<f64> {
    let n = c.n();
    let mut v = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        v[[i, i]] = 1.0 / c.w[i];
    }
    for (k, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let xk = c.x.column(k);
        for i in 0..n {
            for j in 0..n {
                v[[i, j]] += g * xk[i] * xk[j];
            }
        }
    }
    v
}

fn c3_rank_one_vs_dense() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let start = Instant::now();
    let tol = 1e-8;
    let mut max_diff = 0.0_f64;
    let mut edits_done = 0usize;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let ni = rng.random_range(2..=8);
        let p = rng.random_range(2..=6);
        let data = random_dataset(&mut rng, m, ni, p);
        let mut gamma = Array1::from_shape_fn(p, |_| {
            if rng.random::<f64>() < 0.5 {
                0.0
            } else {
                2.0 * rng.random::<f64>()
            }
        });
        let mut state = CovarianceState::build(&data, &gamma).unwrap();
        for _ in 0..100 {
            let k = rng.random_range(0..p);
            let target = if rng.random::<f64>() < 0.25 {
                0.0
            } else {
                2.0 * rng.random::<f64>()
            };
            let delta = target - gamma[k];
            if state.rank_one_update(&data, k, delta).is_err() {
                // A singular denominator forces a rebuild in the solver;
                // mirror that here and keep going.
                state.rebuild(&data).unwrap();
                continue;
            }
            gamma[k] = target;
            edits_done += 1;
            for (i, c) in data.clusters.iter().enumerate() {
                let (inv, logdet) = dense_inverse_logdet(&dense_v(c, &gamma));
                let dv = (&inv - state.inv(i))
                    .iter()
                    .fold(0.0_f64, |acc, d| acc.max(d.abs()));
                let dl = (logdet - state.logdet(i)).abs();
                max_diff = max_diff.max(dv).max(dl);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "rank-one updates track dense recomputation",
        pass: max_diff < tol && secs < 5.0,
        detail: format!("{} edits, max abs diff {:.2e}", edits_done, max_diff),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 4: the recorded objective trace never increases, for plain
// coordinate descent and for the swap-refined variant.
// ---------------------------------------------------------------------

fn trace_is_monotone(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn c4_monotone_descent() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let start = Instant::now();
    let slack = 1e-10;
    let mut fits = 0usize;
    let mut violations = 0usize;
    for i in 0..50 {
        let sim = SimConfig {
            n_total: 120 + 20 * (i % 5),
            p: 10 + 5 * (i % 4),
            s_fixed: 3,
            s_random: 2,
            rho: [0.0, 0.4, 0.8][i % 3],
            family: Family::Gaussian,
            seed: rng.random(),
        };
        let (data, _) = generate_synthetic(&sim).unwrap();
        let data = data.standardize().unwrap();
        let lambda = 10f64.powf(1.7 * rng.random::<f64>() - 0.3);
        let alpha = [0.3, 0.7, 1.0][i % 3];
        let cfg = SolverConfig::new(lambda, alpha);

        let cd = fit_cd(&data, None, &cfg).unwrap();
        fits += 1;
        if !trace_is_monotone(&cd.trace, slack) {
            violations += 1;
        }
        let (ls, _) = fit_cd_ls(&data, None, &cfg, &LocalSearchConfig::default()).unwrap();
        fits += 1;
        if !trace_is_monotone(&ls.trace, slack) {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "objective descends monotonically",
        pass: violations == 0 && secs < 30.0,
        detail: format!("{} traces, {} violations", fits, violations),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 5: on p = 2 instances, the refined solver reaches the global
// optimum found by enumerating every feasible support and optimizing the
// restricted likelihood with projected gradient descent.
// ---------------------------------------------------------------------

fn restricted_nll(
    data: &Dataset,
    fixed: &[usize],
    random: &[usize],
    beta0: &Array1<f64>,
    gamma0: &Array1<f64>,
) -> Option<f64> {
    let mut beta = beta0.clone();
    let mut gamma = gamma0.clone();
    let mut state = CovarianceState::build(data, &gamma).ok()?;
    let mut nll = neg_log_likelihood(data, &state, &beta).ok()?;
    let mut step = 0.5;
    for _ in 0..600 {
        let mut gb = Array1::<f64>::zeros(data.p);
        let mut gg = Array1::<f64>::zeros(data.p);
        for &k in fixed {
            let (b, g) = grad_block(data, &state, &beta, k).ok()?;
            gb[k] = b;
            if random.contains(&k) {
                gg[k] = g;
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let bt = &beta - &(step * &gb);
            let gt = (&gamma - &(step * &gg)).mapv(|g| g.max(0.0));
            if let Ok(st) = CovarianceState::build(data, &gt) {
                if let Ok(f) = neg_log_likelihood(data, &st, &bt) {
                    if f < nll - 1e-14 {
                        let moved = (&bt - &beta)
                            .iter()
                            .chain((&gt - &gamma).iter())
                            .fold(0.0_f64, |a, d| a.max(d.abs()));
                        beta = bt;
                        gamma = gt;
                        state = st;
                        nll = f;
                        step *= 1.5;
                        accepted = true;
                        if moved < 1e-11 {
                            return Some(nll);
                        }
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(nll)
}

fn support_patterns() -> Vec<(Vec<usize>, Vec<usize>)> {
    // Every (fixed set, random set) pair with random ⊆ fixed on p = 2.
    let mut pats = Vec::new();
    for f_bits in 0..4u8 {
        let fixed: Vec<usize> = (0..2).filter(|k| f_bits >> k & 1 == 1).collect();
        for r_bits in 0..4u8 {
            if r_bits & !f_bits != 0 {
                continue;
            }
            let random: Vec<usize> = (0..2).filter(|k| r_bits >> k & 1 == 1).collect();
            pats.push((fixed.clone(), random));
        }
    }
    pats
}

fn exhaustive_oracle(
    data: &Dataset,
    lambda: f64,
    alpha: f64,
    fit_beta: &Array1<f64>,
    fit_gamma: &Array1<f64>,
    rng: &mut ChaCha20Rng,
) -> f64 {
    let mut best = f64::INFINITY;
    for (fixed, random) in support_patterns() {
        let penalty =
            lambda * (alpha * fixed.len() as f64 + (1.0 - alpha) * random.len() as f64);
        let mut starts: Vec<(Array1<f64>, Array1<f64>)> = Vec::new();
        let mut b0 = Array1::zeros(data.p);
        let mut g0 = Array1::zeros(data.p);
        for &k in &fixed {
            b0[k] = 0.1;
        }
        for &k in &random {
            g0[k] = 0.2;
        }
        starts.push((b0, g0));
        let mut b1 = Array1::zeros(data.p);
        let mut g1 = Array1::zeros(data.p);
        for &k in &fixed {
            b1[k] = rng.sample::<f64, _>(StandardNormal);
        }
        for &k in &random {
            g1[k] = rng.random::<f64>();
        }
        starts.push((b1, g1));
        let fit_fixed: Vec<usize> = (0..data.p).filter(|&k| fit_beta[k] != 0.0).collect();
        let fit_random: Vec<usize> = (0..data.p).filter(|&k| fit_gamma[k] != 0.0).collect();
        if fit_fixed == fixed && fit_random == random {
            starts.push((fit_beta.clone(), fit_gamma.clone()));
        }
        for (b, g) in starts {
            if let Some(nll) = restricted_nll(data, &fixed, &random, &b, &g) {
                best = best.min(nll + penalty);
            }
        }
    }
    best
}

fn c5_small_instance_global_optimality() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let start = Instant::now();
    let tol = 1e-6;
    let total = 100;
    let mut hits = 0usize;
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..total {
        let m = rng.random_range(8..=15);
        let ni = rng.random_range(4..=8);
        let mut data = random_dataset(&mut rng, m, ni, 2);
        // Plant a signal so the supports are not vacuous.
        let bstar = [1.2, 0.0];
        for c in &mut data.clusters {
            let u0: f64 = 0.8 * rng.sample::<f64, _>(StandardNormal);
            let eta = c.x.column(0).mapv(|v| v * (bstar[0] + u0));
            c.y = &eta + &c.y;
        }
        let lambda = 0.2 + 3.8 * rng.random::<f64>();
        let alpha = [0.4, 0.7, 1.0][i % 3];
        let mut cfg = SolverConfig::new(lambda, alpha);
        cfg.tol = 1e-12;
        cfg.max_cycles = 5_000;
        let (fit, _) = fit_cd_ls(&data, None, &cfg, &LocalSearchConfig::default()).unwrap();
        let oracle = exhaustive_oracle(&data, lambda, alpha, &fit.beta, &fit.gamma, &mut rng);
        let gap = fit.objective - oracle;
        worst_gap = worst_gap.max(gap);
        if gap <= tol {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "p=2 fits reach the enumerated optimum",
        pass: hits >= 95 && secs < 60.0,
        detail: format!("{}/{} within 1e-6, worst gap {:.2e}", hits, total, worst_gap),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 6: every recorded path starts null and only records entries
// whose active set changed.
// ---------------------------------------------------------------------

fn c6_path_contract() -> Outcome {
    let start = Instant::now();
    let mut paths = 0usize;
    let mut bad = 0usize;
    let mut entries_total = 0usize;
    for seed in 0..20u64 {
        let family = if seed >= 18 {
            Family::Bernoulli
        } else {
            Family::Gaussian
        };
        let sim = SimConfig {
            n_total: if family == Family::Bernoulli { 200 } else { 250 + 50 * (seed as usize % 3) },
            p: if family == Family::Bernoulli { 8 } else { 15 + 10 * (seed as usize % 2) },
            s_fixed: 4,
            s_random: 2,
            rho: [0.0, 0.5, 0.8][seed as usize % 3],
            family,
            seed: 1000 + seed,
        };
        let (data, _) = generate_synthetic(&sim).unwrap();
        let data = data.standardize().unwrap();
        let cfg = PathConfig {
            n_lambda: if family == Family::Bernoulli { 10 } else { 15 },
            alphas: vec![0.5, 1.0],
            ..PathConfig::default()
        };
        let path = fit_path(&data, &cfg).unwrap();
        paths += 1;
        entries_total += path.entries.len();
        let mut ok = !path.entries.is_empty();
        for &alpha in &cfg.alphas {
            let slice: Vec<_> = path.slice(alpha).collect();
            if slice.is_empty() {
                ok = false;
                continue;
            }
            ok &= slice[0].nnz_fixed() == 0 && slice[0].nnz_random() == 0;
            for pair in slice.windows(2) {
                let a = (
                    pair[0].beta.iter().map(|&(k, _)| k).collect::<Vec<_>>(),
                    pair[0].gamma.iter().map(|&(k, _)| k).collect::<Vec<_>>(),
                );
                let b = (
                    pair[1].beta.iter().map(|&(k, _)| k).collect::<Vec<_>>(),
                    pair[1].gamma.iter().map(|&(k, _)| k).collect::<Vec<_>>(),
                );
                ok &= a != b;
                ok &= pair[1].lambda < pair[0].lambda;
            }
        }
        if !ok {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "paths start null and record set changes",
        pass: bad == 0 && secs < 60.0,
        detail: format!("{} paths, {} entries, {} contract breaks", paths, entries_total, bad),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 7: Gaussian selection benchmark at p=100, n=1000, rho=0.5.
// ---------------------------------------------------------------------

fn c7_gaussian_selection_benchmark() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        cells: vec![ExperimentCell {
            n_total: 1000,
            p: 100,
            rho: 0.5,
            family: Family::Gaussian,
            method: Method::Cd,
        }],
        replicates: 20,
        seed: 20_260_807,
        s_fixed: 5,
        s_random: 3,
        path: PathConfig {
            n_lambda: 100,
            alphas: default_alpha_grid(),
            ..PathConfig::default()
        },
    };
    let result = run_experiment(&cfg).unwrap();
    let cell = &result.cells[0];
    let metric = |name: &str| {
        cell.metrics
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|(_, mean, _)| *mean)
            .unwrap_or(f64::NAN)
    };
    let f1_type = metric("f1_effect_type");
    let f1_nz = metric("f1_nonzero");
    let pred = metric("prediction_error");
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "Gaussian benchmark p=100 n=1000",
        pass: cell.failures == 0
            && f1_type >= 0.75
            && f1_nz >= 0.85
            && pred <= 0.25
            && secs < 600.0,
        detail: format!(
            "f1_type {:.3} (>=0.75), f1_nonzero {:.3} (>=0.85), pred {:.3} (<=0.25), {} failures",
            f1_type, f1_nz, pred, cell.failures
        ),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 8: Bernoulli selection benchmark at p=50, n=1000.
// ---------------------------------------------------------------------

fn c8_bernoulli_selection_benchmark() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        cells: vec![ExperimentCell {
            n_total: 1000,
            p: 50,
            rho: 0.5,
            family: Family::Bernoulli,
            method: Method::Cd,
        }],
        replicates: 20,
        seed: 20_260_808,
        s_fixed: 5,
        s_random: 3,
        path: PathConfig {
            n_lambda: 50,
            alphas: vec![0.5, 1.0],
            ..PathConfig::default()
        },
    };
    let result = run_experiment(&cfg).unwrap();
    let cell = &result.cells[0];
    let metric = |name: &str| {
        cell.metrics
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|(_, mean, _)| *mean)
            .unwrap_or(f64::NAN)
    };
    let f1_nz = metric("f1_nonzero");
    let pred = metric("prediction_error");
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "Bernoulli benchmark p=50 n=1000",
        pass: cell.failures == 0 && f1_nz >= 0.6 && pred < 1.0 && secs < 900.0,
        detail: format!(
            "f1_nonzero {:.3} (>=0.6), pred {:.3} (<1), {} failures",
            f1_nz, pred, cell.failures
        ),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 9: under rho=0.9 the swap search never does worse than plain
// coordinate descent on the same fit, and its tuned selection holds up.
// ---------------------------------------------------------------------

fn c9_local_search_under_correlation() -> Outcome {
    let start = Instant::now();
    let mut master = ChaCha20Rng::seed_from_u64(20_260_809);
    let seeds: Vec<u64> = (0..20).map(|_| master.random()).collect();
    let mut objective_ok = true;
    let mut f1_cd_sum = 0.0;
    let mut f1_ls_sum = 0.0;
    let mut failures = 0usize;
    for &seed in &seeds {
        let sim = SimConfig {
            n_total: 500,
            p: 100,
            s_fixed: 5,
            s_random: 3,
            rho: 0.9,
            family: Family::Gaussian,
            seed,
        };
        let study = generate_study(&sim).unwrap();
        let train = study.train.clone().standardize().unwrap();
        let scales = train.scales.clone();
        let mut validation = study.validation.clone();
        validation.apply_scales(&scales).unwrap();

        // Paired objective guarantee at a fixed penalty.
        let cfg = SolverConfig::new(8.0, 0.7);
        let plain = fit_cd(&train, None, &cfg).unwrap();
        let (searched, _) =
            fit_cd_ls(&train, None, &cfg, &LocalSearchConfig::default()).unwrap();
        objective_ok &= searched.objective <= plain.objective + 1e-10;

        // Tuned selection quality for both methods on the same data.
        let base = PathConfig {
            n_lambda: 50,
            alphas: vec![0.5, 1.0],
            ..PathConfig::default()
        };
        let mut scores = [0.0f64; 2];
        let mut ok = true;
        for (slot, use_ls) in [(0usize, false), (1usize, true)] {
            let cfg = PathConfig {
                use_local_search: use_ls,
                ..base.clone()
            };
            match fit_path(&train, &cfg).and_then(|path| {
                let tuned = tune(&path, &validation)?;
                Ok(selection_scores(
                    &study.truth,
                    &tuned.entry.beta_dense(train.p),
                    &tuned.entry.gamma_dense(train.p),
                ))
            }) {
                Ok(sc) => scores[slot] = sc.f1_effect_type,
                Err(_) => ok = false,
            }
        }
        if ok {
            f1_cd_sum += scores[0];
            f1_ls_sum += scores[1];
        } else {
            failures += 1;
        }
    }
    let n_ok = (seeds.len() - failures) as f64;
    let f1_cd = f1_cd_sum / n_ok;
    let f1_ls = f1_ls_sum / n_ok;
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "swap search dominates under rho=0.9",
        pass: objective_ok && failures == 0 && f1_ls >= f1_cd - 0.02 && secs < 900.0,
        detail: format!(
            "objective guarantee {}, f1_type cd {:.3} vs cd_ls {:.3} (allowed drop 0.02)",
            if objective_ok { "held on all 20" } else { "VIOLATED" },
            f1_cd,
            f1_ls
        ),
        secs,
    }
}

// ---------------------------------------------------------------------
// Criterion 10: path cost scales subquadratically in p and stays fast.
// ---------------------------------------------------------------------

fn c10_path_scaling() -> Outcome {
    let start = Instant::now();
    // At n=100 the entry count per path is dominated by where the support
    // saturates, which varies a lot between datasets, so each p is timed
    // as a mean over replicate datasets (the benchmark quantity is the
    // average path cost, not one draw).
    let reps = 6u64;
    let mut times = Vec::new();
    let mut failed_slices = 0usize;
    for &p in &[500usize, 1000, 2000] {
        let mut total = 0.0;
        for rep in 0..reps {
            let sim = SimConfig {
                n_total: 100,
                p,
                s_fixed: 5,
                s_random: 3,
                rho: 0.5,
                family: Family::Gaussian,
                seed: 600 + rep * 3 + p as u64,
            };
            let (data, _) = generate_synthetic(&sim).unwrap();
            let data = data.standardize().unwrap();
            let cfg = PathConfig {
                n_lambda: 100,
                ..PathConfig::default()
            };
            let t = Instant::now();
            let path = fit_path(&data, &cfg).unwrap();
            total += t.elapsed().as_secs_f64();
            failed_slices += path
                .termination
                .iter()
                .filter(|(_, end)| matches!(end, glmmselect::SliceEnd::Failed(_)))
                .count();
        }
        times.push(total / reps as f64);
    }
    let r1 = times[1] / times[0];
    let r2 = times[2] / times[1];
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "path scaling p=500/1000/2000",
        pass: r1 <= 2.6 && r2 <= 2.6 && times[2] < 60.0 && failed_slices == 0,
        detail: format!(
            "mean {:.2}s / {:.2}s / {:.2}s over {} datasets, ratios {:.2} and {:.2} (<=2.6), \
             p=2000 {:.2}s (<60), {} failed slices",
            times[0], times[1], times[2], reps, r1, r2, times[2], failed_slices
        ),
        secs,
    }
}

