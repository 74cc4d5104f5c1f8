//! Measurements against independent oracles. Each returns the observed error
//! so that both the unit-level tests and the acceptance run can judge it.

use std::collections::BTreeSet;

use cfacar::inference::{bfdr, centroid_select, threshold_for_bfdr};
use cfacar::model::{density, FactorCov, Hyperparameters};
use cfacar::sampler::steps::sample_variances;
use cfacar::sampler::theta::{flip_proposal, probability, sample_theta_collapsed, MarginalCov, ThetaCache};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub fn dense_v(phi: &DMatrix<f64>, sigma2: f64, theta: &[bool], tau2: f64, v0: f64) -> DMatrix<f64> {
    let q = phi.nrows();
    let d = DMatrix::from_fn(q, q, |i, j| match (i == j, theta[i]) {
        (false, _) => 0.0,
        (true, true) => tau2,
        (true, false) => v0 * tau2,
    });
    phi * sigma2 + phi * d * phi.transpose()
}

/// `P(θⱼ = 1 | rest)` from the two full densities of the replicate columns.
#[allow(clippy::too_many_arguments)]
pub fn oracle_probability(
    phi: &DMatrix<f64>,
    omegas: &DMatrix<f64>,
    theta: &[bool],
    j: usize,
    sigma2: f64,
    tau2: f64,
    v0: f64,
    alpha: f64,
) -> f64 {
    let mut on = theta.to_vec();
    on[j] = true;
    let mut off = theta.to_vec();
    off[j] = false;
    let l1 = gaussian_logpdf_cols(omegas, &dense_v(phi, sigma2, &on, tau2, v0)) + alpha.ln();
    let l0 = gaussian_logpdf_cols(omegas, &dense_v(phi, sigma2, &off, tau2, v0)) + (1.0 - alpha).ln();
    1.0 / (1.0 + (l0 - l1).exp())
}

pub struct ThetaCheck {
    /// Largest absolute gap between a library flip probability and the oracle.
    pub worst: f64,
    /// Instances where the library scan and the hand replay ended in different θ.
    pub diverged: Vec<usize>,
}

/// Replays collapsed θ scans on `instances` random small models, comparing
/// every conditional with the dense oracle.
pub fn theta_scan_check(instances: usize, seed: u64) -> ThetaCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ThetaCheck {
        worst: 0.0,
        diverged: Vec::new(),
    };
    for instance in 0..instances {
        let q = rng.random_range(1..=4);
        let p = rng.random_range(q..=6);
        let reps = rng.random_range(1..=3);
        let n_exp = rng.random_range(1..=3);
        let net = random_net(q, 0.7, &mut rng);
        let hyper = Hyperparameters {
            alpha: rng.random_range(0.05..0.5),
            v0: rng.random_range(0.005..0.2),
            ..Default::default()
        };
        let model = random_model(p, net, n_exp, reps, hyper.clone(), &mut rng);
        let mut state = random_state(&model, &mut rng);

        let scan_seed = rng.random::<u64>();
        let mut lib_state = state.clone();
        let mut lib_rng = ChaCha8Rng::seed_from_u64(scan_seed);
        let mut cache = ThetaCache::build(&model, &lib_state).unwrap();
        sample_theta_collapsed(&model, &mut lib_state, &mut cache, &mut lib_rng);

        let mut scan_rng = ChaCha8Rng::seed_from_u64(scan_seed);
        let phi = state.factor.phi.clone();
        for (e, ex) in model.data.experiments().iter().enumerate() {
            if ex.is_control {
                continue;
            }
            let omegas = state.omega.select_columns(&ex.columns);
            let mut theta = state.theta_column(e);
            let mut cov = MarginalCov::dense(&phi, state.sigma2, &theta, state.tau2, hyper.v0).unwrap();
            for j in 0..q {
                let prop = flip_proposal(
                    &cov,
                    &phi,
                    j,
                    theta[j],
                    &omegas,
                    state.tau2,
                    hyper.v0,
                    hyper.logit_alpha(),
                );
                let got = probability(prop.logit);
                let want = oracle_probability(
                    &phi,
                    &omegas,
                    &theta,
                    j,
                    state.sigma2,
                    state.tau2,
                    hyper.v0,
                    hyper.alpha,
                );
                out.worst = out.worst.max((got - want).abs());
                let new_on = scan_rng.random::<f64>() < got;
                if new_on != theta[j] {
                    cov.apply_flip(&prop, theta[j]);
                    theta[j] = new_on;
                }
            }
            for j in 0..q {
                state.theta[(j, e)] = theta[j];
            }
        }
        if state.theta != lib_state.theta {
            out.diverged.push(instance);
        }
    }
    out
}

/// Worst relative error of the rank-one updated inverse and log-determinant
/// over `flips` random flips on a ten-pathway network, checked every `every`.
pub fn rank_one_check(flips: usize, every: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = 10;
    let net = random_net(q, 0.4, &mut rng);
    let sup = cfacar::network::gamma_support(&net, 0.005);
    let gamma = rng.random_range(sup.lo..sup.hi);
    let phi = FactorCov::new(&net, gamma, 1.0).unwrap().phi;
    let (sigma2, tau2, v0) = (0.7, 4.0, 0.01);
    let omegas = DMatrix::from_fn(q, 2, |_, _| standard_normal(&mut rng));
    let mut theta: Vec<bool> = (0..q).map(|_| rng.random::<bool>()).collect();
    let mut cov = MarginalCov::dense(&phi, sigma2, &theta, tau2, v0).unwrap();

    let (mut worst_inv, mut worst_det) = (0.0f64, 0.0f64);
    for step in 1..=flips {
        let j = rng.random_range(0..q);
        let prop = flip_proposal(&cov, &phi, j, theta[j], &omegas, tau2, v0, 0.0);
        cov.apply_flip(&prop, theta[j]);
        theta[j] = !theta[j];
        if step % every == 0 || step == flips {
            let v = dense_v(&phi, sigma2, &theta, tau2, v0);
            let inv = v.clone().try_inverse().unwrap();
            let log_det = v.determinant().ln();
            worst_inv = worst_inv.max((&cov.v_inv - &inv).amax() / inv.amax());
            worst_det = worst_det.max((cov.log_det - log_det).abs() / log_det.abs().max(1.0));
        }
    }
    (worst_inv, worst_det)
}

/// Mean, variance and fourth central moment of IG(a, b); the last needs a > 4.
pub fn ig_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let mean = b / (a - 1.0);
    let var = mean * mean / (a - 2.0);
    let m4 = 3.0 * b.powi(4) * (a + 5.0) / ((a - 1.0).powi(4) * (a - 2.0) * (a - 3.0) * (a - 4.0));
    (mean, var, m4)
}

/// Sample mean and variance of `draws` as z-scores against IG(shape, rate).
pub fn ig_zscores(draws: &[f64], shape: f64, rate: f64) -> (f64, f64) {
    let (want_mean, want_var, want_m4) = ig_moments(shape, rate);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_se = (want_var / n).sqrt();
    let var_se = ((want_m4 - want_var * want_var) / n).sqrt();
    ((mean - want_mean) / mean_se, (var - want_var) / var_se)
}

/// Draws ψ₀, σ² and τ² `draws` times from their conditionals with everything
/// else frozen, and scores the moments against the IG parameters assembled
/// by hand. Returns `(name, mean z, variance z)` per parameter.
pub fn conjugacy_zscores(draws: usize, seed: u64) -> Vec<(&'static str, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyper = Hyperparameters::default();
    let model = random_model(6, random_net(3, 0.8, &mut rng), 10, 2, hyper.clone(), &mut rng);
    let frozen = random_state(&model, &mut rng);
    let (q, n) = frozen.omega.shape();

    let zeta = hyper.kappa * n as f64 / 2.0;
    let resid = &model.data.y - &frozen.lambda * &frozen.omega;
    let psi0 = (
        zeta + n as f64 / 2.0,
        (zeta - 1.0).max(1e-3) + resid.row(0).norm_squared() / 2.0,
    );
    let dev = &frozen.omega - &frozen.factor.phi * &frozen.rho;
    let phi_inv = frozen.factor.phi.clone().try_inverse().unwrap();
    let quad: f64 = (0..n)
        .map(|c| (dev.column(c).transpose() * &phi_inv * dev.column(c))[(0, 0)])
        .sum();
    let sigma2 = (
        hyper.sigma2_shape + (q * n) as f64 / 2.0,
        hyper.sigma2_rate + quad / 2.0,
    );
    let mut rho_ss = 0.0;
    for c in 0..n {
        let e = model.data.column_experiment(c);
        for j in 0..q {
            let v = if frozen.theta[(j, e)] { 1.0 } else { hyper.v0 };
            rho_ss += frozen.rho[(j, c)].powi(2) / v;
        }
    }
    let tau2 = (hyper.tau2_shape + (q * n) as f64 / 2.0, hyper.tau2_rate + rho_ss / 2.0);

    let (mut d_psi, mut d_sigma, mut d_tau) = (Vec::new(), Vec::new(), Vec::new());
    let mut s = frozen.clone();
    for _ in 0..draws {
        sample_variances(&model, &mut s, 1.0, &mut rng);
        d_psi.push(s.psi[0]);
        d_sigma.push(s.sigma2);
        d_tau.push(s.tau2);
    }
    let score = |name, d: &[f64], (a, b): (f64, f64)| {
        let (zm, zv) = ig_zscores(d, a, b);
        (name, zm, zv)
    };
    vec![
        score("psi_0", &d_psi, psi0),
        score("sigma2", &d_sigma, sigma2),
        score("tau2", &d_tau, tau2),
    ]
}

/// Largest change of the marginal log-likelihood of Y over `trials` random
/// states, each flipped on a random nonempty union of network components.
pub fn sign_flip_max_change(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Components {0,1}, {2,3,4} and the isolated pathway 5.
    let net = net_from_edges(6, &[(0, 1, 0.8), (2, 3, 0.5), (3, 4, 0.9), (2, 4, 0.2)]);
    let components = net.components();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let model = random_model(9, net.clone(), 2, 2, Hyperparameters::default(), &mut rng);
        let s = random_state(&model, &mut rng);
        let base = density::marginal_loglik_y(&model.data.y, &s).unwrap();
        let pick = rng.random_range(1..(1u32 << components.len()));
        let block: BTreeSet<usize> = components
            .iter()
            .enumerate()
            .filter(|(i, _)| pick >> i & 1 == 1)
            .flat_map(|(_, c)| c.iter().copied())
            .collect();
        let flipped = density::sign_flip(&model.net, &s, &block).unwrap();
        let after = density::marginal_loglik_y(&model.data.y, &flipped).unwrap();
        worst = worst.max((base - after).abs());
    }
    worst
}

/// Direct sum over the cells strictly above `t`.
pub fn bfdr_by_hand(post: &[f64], t: f64) -> f64 {
    let sel: Vec<f64> = post.iter().copied().filter(|&p| p > t).collect();
    if sel.is_empty() {
        0.0
    } else {
        sel.iter().map(|p| 1.0 - p).sum::<f64>() / sel.len() as f64
    }
}

/// Hand-computed BFDR values; returns the cases that disagree.
pub fn bfdr_enumerated_failures() -> Vec<String> {
    let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    let all = |m: &DMatrix<f64>| m.map(|_| true);
    let mut bad = Vec::new();
    for (cells, want) in [
        (vec![0.9, 0.8], 0.15),
        (vec![0.95], 0.05),
        (vec![0.9, 0.8, 0.1], 0.4),
        (vec![1.0, 1.0, 0.5, 0.0], 0.375),
    ] {
        let p = col(&cells);
        let got = bfdr(&p, &all(&p));
        if (got - want).abs() > 1e-15 {
            bad.push(format!("{cells:?}: {got} vs {want}"));
        }
    }
    let p = col(&[0.9, 0.8, 0.1]);
    if bfdr(&p, &p.map(|_| false)) != 0.0 {
        bad.push("empty selection".into());
    }
    let choice = threshold_for_bfdr(&col(&[0.99, 0.97, 0.5, 0.2]), 0.05).unwrap();
    if (choice.threshold, choice.n_selected) != (0.5, 2) || (choice.bfdr - 0.02).abs() > 1e-12 {
        bad.push(format!("threshold {choice:?}"));
    }
    if threshold_for_bfdr(&col(&[0.3, 0.2]), 0.05).unwrap().feasible {
        bad.push("infeasible level reported feasible".into());
    }
    bad
}

/// Random posteriors checked for nested selections and non-increasing BFDR
/// along a grid of thresholds. Returns the number of violations.
pub fn bfdr_monotonicity_violations(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..cases {
        let (r, c) = (rng.random_range(1..6), rng.random_range(1..6));
        let post = DMatrix::from_fn(r, c, |_, _| match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        });
        let mut prev: Option<(DMatrix<bool>, f64)> = None;
        for k in 0..=40 {
            let t = k as f64 / 40.0;
            let sel = centroid_select(&post, t);
            let f = bfdr(&post, &sel);
            if (f - bfdr_by_hand(post.as_slice(), t)).abs() > 1e-12 {
                violations += 1;
            }
            if let Some((ps, pf)) = &prev {
                if sel.iter().zip(ps.iter()).any(|(&now, &before)| now && !before) || f > pf + 1e-12 {
                    violations += 1;
                }
            }
            prev = Some((sel, f));
        }
    }
    violations
}
