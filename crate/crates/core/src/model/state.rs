use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::car::FactorCov;
use crate::model::data::ExpressionDataset;
use crate::model::hyper::Hyperparameters;
use crate::model::mask::LoadingMask;
use crate::network::{gamma_support, GammaSupport, PathwayNetwork};

/// Read-only inputs shared by every chain.
#[derive(Clone, Debug)]
pub struct Model {
    pub data: ExpressionDataset,
    pub mask: LoadingMask,
    pub net: PathwayNetwork,
    pub support: GammaSupport,
    pub hyper: Hyperparameters,
}

impl Model {
    pub fn new(
        data: ExpressionDataset,
        mask: LoadingMask,
        net: PathwayNetwork,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        hyper.validate()?;
        if mask.n_genes() != data.n_genes() {
            return Err(Error::invalid(format!(
                "mask has {} genes, data has {}",
                mask.n_genes(),
                data.n_genes()
            )));
        }
        if mask.n_pathways() != net.len() {
            return Err(Error::invalid(format!(
                "mask has {} pathways, network has {}",
                mask.n_pathways(),
                net.len()
            )));
        }
        let support = gamma_support(&net, hyper.delta_gamma);
        Ok(Self {
            data,
            mask,
            net,
            support,
            hyper,
        })
    }

    /// Same data and mask with the network removed: independent factors, γ ≡ 0.
    pub fn into_efa(self) -> Self {
        let net = PathwayNetwork::empty(self.net.pathway_ids.clone());
        Self {
            support: gamma_support(&net, self.hyper.delta_gamma),
            net,
            ..self
        }
    }

    pub fn n_genes(&self) -> usize {
        self.data.n_genes()
    }

    pub fn n_pathways(&self) -> usize {
        self.net.len()
    }

    pub fn n_columns(&self) -> usize {
        self.data.n_columns()
    }

    pub fn n_experiments(&self) -> usize {
        self.data.n_experiments()
    }

    /// Default starting point: Λ from its prior, Ω = ρ = 0, Θ = 0, γ = 0,
    /// Ψ = 1, σ² = τ² = 1.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelState> {
        let (p, q, n) = (self.n_genes(), self.n_pathways(), self.n_columns());
        let normal = Normal::new(0.0, self.hyper.lambda_prior_var.sqrt()).expect("positive variance");
        let mut lambda = DMatrix::zeros(p, q);
        for k in 0..p {
            for &j in self.mask.row(k) {
                lambda[(k, j)] = normal.sample(rng);
            }
        }
        Ok(ModelState {
            lambda,
            omega: DMatrix::zeros(q, n),
            rho: DMatrix::zeros(q, n),
            theta: DMatrix::from_element(q, self.n_experiments(), false),
            gamma: 0.0,
            psi: DVector::from_element(p, 1.0),
            sigma2: 1.0,
            tau2: 1.0,
            factor: FactorCov::new(&self.net, 0.0, self.hyper.s2)?,
        })
    }

    pub fn check_state(&self, s: &ModelState) -> Result<()> {
        let (p, q, n, e) = (
            self.n_genes(),
            self.n_pathways(),
            self.n_columns(),
            self.n_experiments(),
        );
        if s.lambda.shape() != (p, q) || s.omega.shape() != (q, n) || s.rho.shape() != (q, n) {
            return Err(Error::InvalidState("parameter shapes do not match the model".into()));
        }
        if s.theta.shape() != (q, e) || s.psi.len() != p {
            return Err(Error::InvalidState("indicator or variance shapes do not match".into()));
        }
        for k in 0..p {
            for j in 0..q {
                if !self.mask.contains(k, j) && s.lambda[(k, j)] != 0.0 {
                    return Err(Error::InvalidState(format!("structural zero Λ[{k},{j}] is nonzero")));
                }
            }
        }
        if !self.support.contains(s.gamma) {
            return Err(Error::GammaOutOfSupport {
                gamma: s.gamma,
                lo: self.support.lo,
                hi: self.support.hi,
            });
        }
        if !(s.sigma2 > 0.0 && s.tau2 > 0.0 && s.psi.iter().all(|&v| v > 0.0)) {
            return Err(Error::InvalidState("variances must be positive".into()));
        }
        for (ei, ex) in self.data.experiments().iter().enumerate() {
            if ex.is_control && (0..q).any(|j| s.theta[(j, ei)]) {
                return Err(Error::InvalidState(format!("control experiment '{}' has θ = 1", ex.id)));
            }
        }
        if !s.is_finite() {
            return Err(Error::InvalidState("non-finite parameter values".into()));
        }
        Ok(())
    }
}

/// One snapshot of a chain.
#[derive(Clone, Debug)]
pub struct ModelState {
    /// `p × q` loadings; structural zeros held at exactly 0.
    pub lambda: DMatrix<f64>,
    /// `q × N` latent pathway factors, one column per data column.
    pub omega: DMatrix<f64>,
    /// `q × N` perturbation effects.
    pub rho: DMatrix<f64>,
    /// `q × E` perturbation indicators, shared by an experiment's replicates.
    pub theta: DMatrix<bool>,
    pub gamma: f64,
    pub psi: DVector<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    /// Cached `Φ = s² R(γ)`.
    pub factor: FactorCov,
}

impl ModelState {
    pub fn is_finite(&self) -> bool {
        self.lambda.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
            && self.rho.iter().all(|v| v.is_finite())
            && self.psi.iter().all(|v| v.is_finite())
            && self.gamma.is_finite()
            && self.sigma2.is_finite()
            && self.tau2.is_finite()
    }

    /// Sets γ and refreshes the cached factor covariance.
    pub fn set_gamma(&mut self, net: &PathwayNetwork, gamma: f64, s2: f64) -> Result<()> {
        self.factor = FactorCov::new(net, gamma, s2)?;
        self.gamma = gamma;
        Ok(())
    }

    pub fn theta_column(&self, e: usize) -> Vec<bool> {
        self.theta.column(e).iter().copied().collect()
    }
}
