use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior settings. The loading variance and `s2` double as identifiability
/// constraints; change them only deliberately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Prior probability that a pathway is perturbed in an experiment.
    pub alpha: f64,
    /// Spike variance as a fraction of the slab variance.
    pub v0: f64,
    /// Gene-variance prior strength: `ζ = κ N / 2` pseudo-observations.
    pub kappa: f64,
    pub lambda_prior_var: f64,
    /// Common factor variance; `Φ = s2 · R(γ)`.
    pub s2: f64,
    /// Trim applied to both ends of the admissible γ interval.
    pub delta_gamma: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
    pub tau2_shape: f64,
    pub tau2_rate: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            v0: 0.01,
            kappa: 0.5,
            lambda_prior_var: 0.1,
            s2: 1.0,
            delta_gamma: 0.005,
            sigma2_shape: 0.001,
            sigma2_rate: 0.001,
            tau2_shape: 0.001,
            tau2_rate: 0.001,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let open01 = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open01("alpha", self.alpha)?;
        open01("v0", self.v0)?;
        open01("kappa", self.kappa)?;
        for (name, v) in [
            ("lambda_prior_var", self.lambda_prior_var),
            ("s2", self.s2),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("tau2_shape", self.tau2_shape),
            ("tau2_rate", self.tau2_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta_gamma >= 0.0) {
            return Err(Error::invalid("delta_gamma must be non-negative"));
        }
        if self.s2 != 1.0 || self.lambda_prior_var != 0.1 {
            log::warn!(
                "overriding identifiability defaults (s2 = {}, lambda_prior_var = {})",
                self.s2,
                self.lambda_prior_var
            );
        }
        Ok(())
    }

    pub fn logit_alpha(&self) -> f64 {
        (self.alpha / (1.0 - self.alpha)).ln()
    }

    /// `ζ` for the gene-variance prior `IG(ζ, ζ − 1)` with `n` data columns.
    pub fn psi_zeta(&self, n: usize) -> f64 {
        self.kappa * n as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let h = Hyperparameters::default();
        h.validate().unwrap();
        assert_eq!(h.psi_zeta(100), 25.0);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let h: Hyperparameters = serde_json::from_str(r#"{"alpha": 0.2}"#).unwrap();
        assert_eq!(h.alpha, 0.2);
        assert_eq!(h.v0, 0.01);
        assert!(serde_json::from_str::<Hyperparameters>(r#"{"alpah": 0.2}"#).is_err());
    }

    #[test]
    fn rejects_bad_probabilities() {
        let h = Hyperparameters {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
    }
}
