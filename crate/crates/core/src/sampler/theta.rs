//! Collapsed update of the perturbation indicators.
//!
//! With ρ integrated out, each factor column satisfies `ωᵢ | θ ~ N(0, V(θ))`,
//! `V(θ) = σ²Φ + ΦΣ(θ)Φᵀ`. Switching one indicator changes `V` by the rank-one
//! term `(τ² − v₀τ²) φⱼφⱼᵀ`, so the inverse is updated with Sherman–Morrison
//! and the log-determinant with the matrix determinant lemma. Replicates of
//! an experiment share θ and are conditionally independent, so their
//! log-likelihood ratios add up.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::model::density::{omega_marginal_cov, spike_slab_diag};
use crate::model::{Model, ModelState};

/// `V(θₑ)⁻¹` and `log|V(θₑ)|` for one experiment.
#[derive(Clone, Debug)]
pub struct MarginalCov {
    pub v_inv: DMatrix<f64>,
    pub log_det: f64,
}

impl MarginalCov {
    pub fn dense(phi: &DMatrix<f64>, sigma2: f64, theta: &[bool], tau2: f64, v0: f64) -> Result<Self> {
        let v = omega_marginal_cov(phi, sigma2, &spike_slab_diag(theta, tau2, v0));
        let chol = linalg::cholesky_jitter(v, "marginal factor covariance V(θ)")?;
        Ok(Self {
            v_inv: linalg::spd_inverse(&chol),
            log_det: linalg::log_det(&chol),
        })
    }

    /// Largest relative discrepancy against another copy (inverse and log-det).
    pub fn relative_error(&self, other: &MarginalCov) -> f64 {
        let scale = other.v_inv.amax().max(f64::MIN_POSITIVE);
        let inv_err = (&self.v_inv - &other.v_inv).amax() / scale;
        let det_err = (self.log_det - other.log_det).abs() / other.log_det.abs().max(1.0);
        inv_err.max(det_err)
    }
}

/// Quantities needed to evaluate, and if accepted apply, one indicator switch.
#[derive(Clone, Debug)]
pub struct FlipProposal {
    /// `logit P(θⱼ = 1 | θ₋ⱼ, ω, Φ)`.
    pub logit: f64,
    /// `δⱼ₀` (currently off) or `δⱼ₁` (currently on).
    pub delta: f64,
    /// `V⁻¹ φⱼ` under the current indicators.
    pub u: DVector<f64>,
    /// `τ² − v₀τ²`.
    pub c: f64,
}

/// Log-odds of θⱼ = 1 for the replicate factor columns `omegas`, given the
/// current inverse `V⁻¹` (which includes θⱼ's present value).
pub fn flip_proposal(
    cov: &MarginalCov,
    phi: &DMatrix<f64>,
    j: usize,
    currently_on: bool,
    omegas: &DMatrix<f64>,
    tau2: f64,
    v0: f64,
    logit_alpha: f64,
) -> FlipProposal {
    let c = tau2 - v0 * tau2;
    let phi_j = phi.column(j);
    let u = &cov.v_inv * phi_j;
    let s = phi_j.dot(&u);
    let m = omegas.ncols() as f64;
    let proj = omegas.transpose() * &u;
    let quad = proj.norm_squared();
    let (delta, logit) = if currently_on {
        let d = 1.0 - c * s;
        (d, 0.5 * m * d.ln() + 0.5 * (c / d) * quad + logit_alpha)
    } else {
        let d = 1.0 + c * s;
        (d, -0.5 * m * d.ln() + 0.5 * (c / d) * quad + logit_alpha)
    };
    FlipProposal { logit, delta, u, c }
}

impl MarginalCov {
    /// Applies an accepted switch of θⱼ described by `prop`.
    pub fn apply_flip(&mut self, prop: &FlipProposal, was_on: bool) {
        let scale = prop.c / prop.delta;
        let sign = if was_on { 1.0 } else { -1.0 };
        let n = self.v_inv.nrows();
        for a in 0..n {
            for b in 0..n {
                self.v_inv[(a, b)] += sign * scale * prop.u[a] * prop.u[b];
            }
        }
        self.log_det += prop.delta.ln();
    }
}

/// Per-experiment caches for the θ step.
#[derive(Clone, Debug)]
pub struct ThetaCache {
    pub entries: Vec<Option<MarginalCov>>,
}

impl ThetaCache {
    /// Dense build for every case experiment (controls carry no cache).
    pub fn build(model: &Model, state: &ModelState) -> Result<Self> {
        let entries = model
            .data
            .experiments()
            .iter()
            .enumerate()
            .map(|(e, ex)| {
                if ex.is_control {
                    Ok(None)
                } else {
                    MarginalCov::dense(
                        &state.factor.phi,
                        state.sigma2,
                        &state.theta_column(e),
                        state.tau2,
                        model.hyper.v0,
                    )
                    .map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    /// Largest relative error against a dense rebuild.
    pub fn audit(&self, model: &Model, state: &ModelState) -> Result<f64> {
        let dense = Self::build(model, state)?;
        Ok(self
            .entries
            .iter()
            .zip(&dense.entries)
            .filter_map(|(a, b)| Some(a.as_ref()?.relative_error(b.as_ref()?)))
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaStepStats {
    pub flips: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Systematic scan over pathways for every case experiment.
pub fn sample_theta_collapsed<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ModelState,
    cache: &mut ThetaCache,
    rng: &mut R,
) -> ThetaStepStats {
    let hyper = &model.hyper;
    let logit_alpha = hyper.logit_alpha();
    let q = model.n_pathways();
    let mut stats = ThetaStepStats::default();
    for (e, ex) in model.data.experiments().iter().enumerate() {
        let Some(cov) = cache.entries[e].as_mut() else {
            continue;
        };
        let omegas = state.omega.select_columns(&ex.columns);
        for j in 0..q {
            let on = state.theta[(j, e)];
            let prop = flip_proposal(
                cov,
                &state.factor.phi,
                j,
                on,
                &omegas,
                state.tau2,
                hyper.v0,
                logit_alpha,
            );
            let new_on = rng.random::<f64>() < sigmoid(prop.logit);
            if new_on != on {
                cov.apply_flip(&prop, on);
                state.theta[(j, e)] = new_on;
                stats.flips += 1;
            }
        }
    }
    stats
}

pub fn probability(logit: f64) -> f64 {
    sigmoid(logit)
}
