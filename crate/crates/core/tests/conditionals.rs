mod common;

use std::collections::BTreeSet;

use cfacar::model::{density, Hyperparameters};
use cfacar::Error;
use common::oracles::{conjugacy_zscores, sign_flip_max_change};
use common::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn frozen_variance_draws_match_inverse_gamma_moments() {
    for (name, z_mean, z_var) in conjugacy_zscores(50_000, 31) {
        assert!(z_mean.abs() < 3.0, "{name}: mean is {z_mean:.2} standard errors off");
        assert!(z_var.abs() < 3.0, "{name}: variance is {z_var:.2} standard errors off");
    }
}

#[test]
fn tempered_psi_conditional_flattens_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let model = random_model(
        4,
        random_net(2, 1.0, &mut rng),
        2,
        2,
        Hyperparameters::default(),
        &mut rng,
    );
    let s = random_state(&model, &mut rng);
    let cold = cfacar::sampler::steps::psi_posterior(&model, &s, 1.0);
    let hot = cfacar::sampler::steps::psi_posterior(&model, &s, 4.0);
    let n = model.n_columns() as f64;
    for ((a1, b1), (a4, b4)) in cold.iter().zip(&hot) {
        assert!((a1 - a4 - (n / 2.0 - n / 8.0)).abs() < 1e-12);
        assert!(b4 < b1);
    }
}

#[test]
fn closed_block_sign_flips_leave_marginal_likelihood_unchanged() {
    let worst = sign_flip_max_change(20, 44);
    assert!(worst < 1e-8, "largest change {worst:e}");
}

#[test]
fn open_block_is_refused_and_would_change_the_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let net = net_from_edges(3, &[(0, 1, 0.9)]);
    let model = random_model(5, net.clone(), 2, 2, Hyperparameters::default(), &mut rng);
    let mut s = random_state(&model, &mut rng);
    s.gamma = 0.8 * model.support.hi;
    s.factor = cfacar::model::FactorCov::new(&net, s.gamma, 1.0).unwrap();
    let block: BTreeSet<usize> = [0].into();
    assert!(matches!(
        density::sign_flip(&net, &s, &block),
        Err(Error::BlockNotClosed)
    ));

    let base = density::marginal_loglik_y(&model.data.y, &s).unwrap();
    let mut manual = s.clone();
    manual.lambda.column_mut(0).neg_mut();
    manual.omega.row_mut(0).neg_mut();
    manual.rho.row_mut(0).neg_mut();
    let after = density::marginal_loglik_y(&model.data.y, &manual).unwrap();
    assert!((base - after).abs() > 1e-6);
}

#[test]
fn marginal_likelihood_matches_dense_gaussian() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let model = random_model(
        5,
        random_net(3, 1.0, &mut rng),
        2,
        2,
        Hyperparameters::default(),
        &mut rng,
    );
    let s = random_state(&model, &mut rng);
    let cov = DMatrix::from_diagonal(&s.psi) + &s.lambda * &s.factor.phi * s.lambda.transpose() * s.sigma2;
    let mean = &s.lambda * &s.factor.phi * &s.rho;
    let want = gaussian_logpdf_cols(&(&model.data.y - mean), &cov);
    let got = density::marginal_loglik_y(&model.data.y, &s).unwrap();
    assert!((got - want).abs() < 1e-8 * want.abs().max(1.0));
}
