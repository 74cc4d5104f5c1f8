#![allow(dead_code)]

pub mod oracles;

use cfacar::model::{ExpressionDataset, FactorCov, Hyperparameters, LoadingMask, Model, ModelState, SampleInfo};
use cfacar::network::PathwayNetwork;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random symmetric network on `q` nodes with nonnegative weights, each edge
/// present with probability `density`.
pub fn random_net(q: usize, density: f64, rng: &mut ChaCha8Rng) -> PathwayNetwork {
    let mut w = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in (i + 1)..q {
            if rng.random::<f64>() < density {
                let v = rng.random_range(0.1..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    PathwayNetwork::new((0..q).map(|i| format!("P{i}")).collect(), w).unwrap()
}

/// Networks given as explicit edge lists `(i, j, weight)`.
pub fn net_from_edges(q: usize, edges: &[(usize, usize, f64)]) -> PathwayNetwork {
    let mut w = DMatrix::zeros(q, q);
    for &(i, j, v) in edges {
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    PathwayNetwork::new((0..q).map(|i| format!("P{i}")).collect(), w).unwrap()
}

/// One control column followed by `n_exp` experiments of `reps` replicates.
pub fn samples(n_exp: usize, reps: usize) -> Vec<SampleInfo> {
    let mut out = vec![SampleInfo {
        sample_id: "ctl0".into(),
        experiment_id: "control".into(),
        replicate_index: 0,
        is_control: true,
    }];
    for e in 0..n_exp {
        for r in 0..reps {
            out.push(SampleInfo {
                sample_id: format!("e{e}r{r}"),
                experiment_id: format!("e{e}"),
                replicate_index: r,
                is_control: false,
            });
        }
    }
    out
}

/// Every gene loads on one or two pathways; every pathway gets at least one gene.
pub fn random_mask(p: usize, q: usize, rng: &mut ChaCha8Rng) -> LoadingMask {
    let rows = (0..p)
        .map(|k| {
            let first = k % q;
            if rng.random::<f64>() < 0.4 && q > 1 {
                let other = (first + rng.random_range(1..q)) % q;
                let mut r = vec![first, other];
                r.sort_unstable();
                r
            } else {
                vec![first]
            }
        })
        .collect();
    LoadingMask::new(rows, q).unwrap()
}

pub fn random_model(
    p: usize,
    net: PathwayNetwork,
    n_exp: usize,
    reps: usize,
    hyper: Hyperparameters,
    rng: &mut ChaCha8Rng,
) -> Model {
    let q = net.len();
    let smp = samples(n_exp, reps);
    let y = DMatrix::from_fn(p, smp.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = ExpressionDataset::from_centered((0..p).map(|k| format!("g{k}")).collect(), y, smp).unwrap();
    let mask = random_mask(p, q, rng);
    Model::new(data, mask, net, hyper).unwrap()
}

/// A valid state with every block drawn at random.
pub fn random_state(model: &Model, rng: &mut ChaCha8Rng) -> ModelState {
    let (p, q, n, e) = (
        model.n_genes(),
        model.n_pathways(),
        model.n_columns(),
        model.n_experiments(),
    );
    let mut s = model.initial_state(rng).unwrap();
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    for k in 0..p {
        for j in 0..q {
            if model.mask.contains(k, j) {
                s.lambda[(k, j)] = normal(rng);
            }
        }
    }
    s.omega = DMatrix::from_fn(q, n, |_, _| normal(rng));
    s.rho = DMatrix::from_fn(q, n, |_, _| normal(rng));
    for (ei, ex) in model.data.experiments().iter().enumerate() {
        for j in 0..q {
            s.theta[(j, ei)] = !ex.is_control && rng.random::<f64>() < 0.5;
        }
    }
    assert_eq!(s.theta.ncols(), e);
    s.psi = DVector::from_fn(p, |_, _| rng.random_range(0.3..2.0));
    s.sigma2 = rng.random_range(0.3..2.0);
    s.tau2 = rng.random_range(0.5..5.0);
    let g = if model.support.is_degenerate() {
        0.0
    } else {
        rng.random_range(model.support.lo..model.support.hi)
    };
    s.gamma = g;
    s.factor = FactorCov::new(&model.net, g, model.hyper.s2).unwrap();
    model.check_state(&s).unwrap();
    s
}

/// Log density of `N(0, cov)` at every column of `x`, summed, via a fresh
/// Cholesky factorization.
pub fn gaussian_logpdf_cols(x: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = cov.nrows() as f64;
    let chol = cov.clone().cholesky().expect("covariance must be SPD");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut total = 0.0;
    for c in 0..x.ncols() {
        let col = x.column(c).into_owned();
        let sol = chol.solve(&col);
        total += -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + col.dot(&sol));
    }
    total
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
