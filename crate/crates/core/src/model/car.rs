//! CAR-induced factor correlation.
//!
//! `G(γ) = (I − γW)⁻¹` rescaled to unit diagonal gives `R(γ)`; the factor
//! covariance is `Φ = s² R(γ)`. With `γ = 0` or `W = 0`, `R = I` and the model
//! collapses to independent factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};
use crate::network::PathwayNetwork;

/// `R(γ)` via a Cholesky solve of `I − γW`. Fails with `GammaOutOfSupport`
/// when `I − γW` is not positive definite.
pub fn correlation_from_gamma(net: &PathwayNetwork, gamma: f64) -> Result<DMatrix<f64>> {
    let q = net.len();
    if gamma == 0.0 {
        return Ok(DMatrix::identity(q, q));
    }
    let m = DMatrix::identity(q, q) - &net.w * gamma;
    let chol = m.cholesky().ok_or(Error::GammaOutOfSupport {
        gamma,
        lo: 1.0 / net.eig_min,
        hi: 1.0 / net.eig_max,
    })?;
    let g = chol.solve(&DMatrix::identity(q, q));
    let scale: Vec<f64> = (0..q).map(|i| 1.0 / g[(i, i)].sqrt()).collect();
    let mut r = DMatrix::from_fn(q, q, |i, j| g[(i, j)] * scale[i] * scale[j]);
    linalg::symmetrize(&mut r);
    for i in 0..q {
        r[(i, i)] = 1.0;
    }
    Ok(r)
}

/// `Φ = s² R(γ)` together with its factor, inverse and log-determinant.
#[derive(Clone, Debug)]
pub struct FactorCov {
    pub gamma: f64,
    pub phi: DMatrix<f64>,
    pub chol: Chol,
    pub inv: DMatrix<f64>,
    pub log_det: f64,
}

impl FactorCov {
    pub fn new(net: &PathwayNetwork, gamma: f64, s2: f64) -> Result<Self> {
        let phi = correlation_from_gamma(net, gamma)? * s2;
        Self::from_phi(gamma, phi)
    }

    pub fn from_phi(gamma: f64, phi: DMatrix<f64>) -> Result<Self> {
        let chol = linalg::cholesky_jitter(phi.clone(), "factor covariance")?;
        let inv = linalg::spd_inverse(&chol);
        let log_det = linalg::log_det(&chol);
        Ok(Self {
            gamma,
            phi,
            chol,
            inv,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }
}
