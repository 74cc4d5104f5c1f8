use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total sweeps per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Initial random-walk standard deviation for γ.
    pub metropolis_sd: f64,
    pub adapt_target_accept: f64,
    /// Sweeps per adaptation batch.
    pub adapt_window: usize,
    /// Likelihood temperatures for the start of burn-in, ending at exactly 1.
    pub temper_schedule: Vec<f64>,
    /// Fraction of burn-in spent on the hot rungs (T > 1).
    pub temper_fraction: f64,
    /// Sweeps between dense audits of the θ-step cache (0 disables).
    pub audit_every: usize,
    pub audit_tolerance: f64,
    /// Keep every retained draw of ρ and Θ (needed for SNR and trace files).
    pub store_draws: bool,
    /// Add the single-pathway sign-switch move to every sweep.
    pub sign_switch: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 2000,
            thin: 1,
            chains: 2,
            seed: 1,
            metropolis_sd: 0.05,
            adapt_target_accept: 0.44,
            adapt_window: 50,
            temper_schedule: vec![32.0, 16.0, 8.0, 4.0, 2.0, 1.0],
            temper_fraction: 0.25,
            audit_every: 500,
            audit_tolerance: 1e-6,
            store_draws: true,
            sign_switch: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::invalid("thin and chains must be at least 1"));
        }
        if !(self.metropolis_sd > 0.0) {
            return Err(Error::invalid("metropolis_sd must be positive"));
        }
        if !(self.adapt_target_accept > 0.0 && self.adapt_target_accept < 1.0) || self.adapt_window == 0 {
            return Err(Error::invalid("bad adaptation settings"));
        }
        let t = &self.temper_schedule;
        if t.last() != Some(&1.0) {
            return Err(Error::invalid("temper_schedule must end at exactly 1.0"));
        }
        if t.windows(2).any(|w| !(w[0] > w[1])) || t.iter().any(|&v| v < 1.0) {
            return Err(Error::invalid("temperatures must decrease strictly to 1.0"));
        }
        if !(0.0..=1.0).contains(&self.temper_fraction) {
            return Err(Error::invalid("temper_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    /// Temperature for each sweep index; the hot rungs split
    /// `temper_fraction · burn_in` sweeps evenly, everything after runs at 1.
    pub fn temperature_plan(&self) -> Vec<f64> {
        let hot: Vec<f64> = self.temper_schedule.iter().copied().filter(|&t| t > 1.0).collect();
        let mut plan = Vec::with_capacity(self.iterations);
        if !hot.is_empty() {
            let total = (self.temper_fraction * self.burn_in as f64).round() as usize;
            let per = total / hot.len();
            let extra = total % hot.len();
            for (r, &t) in hot.iter().enumerate() {
                let len = per + usize::from(r < extra);
                plan.extend(std::iter::repeat_n(t, len));
            }
        }
        plan.resize(self.iterations, 1.0);
        plan
    }
}
