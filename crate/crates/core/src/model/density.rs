//! Deterministic covariance assembly and log-densities used by the sampler
//! and by the diagnostics.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::car::FactorCov;
use crate::model::state::ModelState;
use crate::network::PathwayNetwork;

/// Diagonal of `Σ(θ)`: `τ²` for perturbed pathways, `v₀τ²` otherwise.
pub fn spike_slab_diag(theta: &[bool], tau2: f64, v0: f64) -> DVector<f64> {
    DVector::from_iterator(theta.len(), theta.iter().map(|&t| if t { tau2 } else { v0 * tau2 }))
}

/// `Σ` with indicator probabilities plugged in: `τ²[π + v₀(1 − π)]`.
pub fn spike_slab_diag_prob(prob: &[f64], tau2: f64, v0: f64) -> DVector<f64> {
    DVector::from_iterator(prob.len(), prob.iter().map(|&p| tau2 * (p + v0 * (1.0 - p))))
}

/// Marginal covariance of one factor column after integrating out ρ:
/// `V = σ²Φ + Φ Σ Φᵀ`.
pub fn omega_marginal_cov(phi: &DMatrix<f64>, sigma2: f64, sigma_diag: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, j| phi[(i, j)] * sigma_diag[j]);
    let mut v = &scaled * phi.transpose() + phi * sigma2;
    linalg::symmetrize(&mut v);
    v
}

/// `Λ (σ²Φ + ΦΣΦᵀ) Λᵀ + Ψ`, assembled through the q×q inner matrix.
pub fn marginal_cov_y_with(
    lambda: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    sigma2: f64,
    sigma_diag: &DVector<f64>,
    psi: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let v = omega_marginal_cov(phi, sigma2, sigma_diag);
    let lv = lambda * v;
    let mut c = lv * lambda.transpose();
    for k in 0..c.nrows() {
        c[(k, k)] += psi[k];
    }
    linalg::symmetrize(&mut c);
    if c.clone().cholesky().is_some() {
        return Ok(c);
    }
    let n = c.nrows();
    let eps = linalg::JITTER * c.diagonal().mean().abs();
    for k in 0..n {
        c[(k, k)] += eps;
    }
    if c.clone().cholesky().is_some() {
        Ok(c)
    } else {
        Err(Error::NotPositiveDefinite("marginal covariance of Y".into()))
    }
}

/// Marginal covariance of `Y_i` given Λ, Φ, θ_i, σ², Ψ.
pub fn marginal_cov_y(state: &ModelState, theta: &[bool], v0: f64) -> Result<DMatrix<f64>> {
    let sigma = spike_slab_diag(theta, state.tau2, v0);
    marginal_cov_y_with(&state.lambda, &state.factor.phi, state.sigma2, &sigma, &state.psi)
}

/// `l(Φ) = −(N/2) log|Φ| − ½ Σᵢ (ωᵢ − Φρᵢ)ᵀ (σ²Φ)⁻¹ (ωᵢ − Φρᵢ)`.
pub fn log_likelihood_omega_with(
    factor: &FactorCov,
    omega: &DMatrix<f64>,
    rho: &DMatrix<f64>,
    sigma2: f64,
) -> Result<f64> {
    let n = omega.ncols() as f64;
    let resid = omega - &factor.phi * rho;
    let solved = factor.chol.solve(&resid);
    let quad = resid.component_mul(&solved).sum();
    let l = -0.5 * n * factor.log_det - 0.5 * quad / sigma2;
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::InvalidState("non-finite factor log-likelihood".into()))
    }
}

pub fn log_likelihood_omega(state: &ModelState) -> Result<f64> {
    log_likelihood_omega_with(&state.factor, &state.omega, &state.rho, state.sigma2)
}

/// Log-likelihood of `Y` with the factors integrated out:
/// `Yᵢ ~ N(ΛΦρᵢ, Ψ + σ²ΛΦΛᵀ)`. Evaluated through the q×q Woodbury form.
pub fn marginal_loglik_y(y: &DMatrix<f64>, state: &ModelState) -> Result<f64> {
    let (p, n) = (y.nrows(), y.ncols());
    let s = &state.factor.phi * state.sigma2;
    let s_chol = linalg::cholesky_jitter(s.clone(), "σ²Φ")?;
    let s_inv = linalg::spd_inverse(&s_chol);
    let psi_inv = state.psi.map(|v| 1.0 / v);
    let lt_psi = DMatrix::from_fn(state.lambda.ncols(), p, |j, k| state.lambda[(k, j)] * psi_inv[k]);
    let k_mat = &s_inv + &lt_psi * &state.lambda;
    let k_chol = linalg::cholesky_jitter(k_mat, "Woodbury core")?;
    let log_det = state.psi.iter().map(|v| v.ln()).sum::<f64>() + linalg::log_det(&s_chol) + linalg::log_det(&k_chol);
    let mean = &state.lambda * (&state.factor.phi * &state.rho);
    let resid = y - mean;
    let u = &lt_psi * &resid;
    let ku = k_chol.solve(&u);
    let mut quad = 0.0;
    for c in 0..n {
        let mut a = 0.0;
        for k in 0..p {
            a += resid[(k, c)] * resid[(k, c)] * psi_inv[k];
        }
        quad += a - u.column(c).dot(&ku.column(c));
    }
    let ll = -0.5 * (n as f64 * (p as f64 * (2.0 * PI).ln() + log_det) + quad);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::InvalidState("non-finite marginal log-likelihood".into()))
    }
}

/// Flips the signs of Λ columns and ω, ρ rows on a block of pathways. The
/// block must be closed under the network's connectivity, otherwise the
/// likelihood would change.
pub fn sign_flip(net: &PathwayNetwork, state: &ModelState, block: &BTreeSet<usize>) -> Result<ModelState> {
    let q = net.len();
    if block.iter().any(|&j| j >= q) {
        return Err(Error::invalid("block index out of range"));
    }
    for &i in block {
        for j in 0..q {
            if !block.contains(&j) && net.w[(i, j)] != 0.0 {
                return Err(Error::BlockNotClosed);
            }
        }
    }
    Ok(sign_flip_unchecked(state, block))
}

pub(crate) fn sign_flip_unchecked(state: &ModelState, block: &BTreeSet<usize>) -> ModelState {
    let mut out = state.clone();
    for &j in block {
        out.lambda.column_mut(j).neg_mut();
        out.omega.row_mut(j).neg_mut();
        out.rho.row_mut(j).neg_mut();
    }
    out
}
