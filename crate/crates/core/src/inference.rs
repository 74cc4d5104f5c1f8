//! Posterior summaries: centroid selection under a Bayesian FDR bound, SNR,
//! Gelman–Rubin diagnostics, model-fit standardization and leave-one-out
//! validation of the controls.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::car::FactorCov;
use crate::model::density::{marginal_cov_y_with, spike_slab_diag_prob};
use crate::model::{ExpressionDataset, Model, SampleInfo};
use crate::sampler::{run_chains, ChainTrace, SamplerConfig};

/// θ̂(t) = 1 where the posterior probability exceeds `t`.
pub fn centroid_select(theta_post: &DMatrix<f64>, t: f64) -> DMatrix<bool> {
    theta_post.map(|p| p > t)
}

/// `Σ θ̂ (1 − P) / Σ θ̂`; an empty selection has BFDR 0.
pub fn bfdr(theta_post: &DMatrix<f64>, selection: &DMatrix<bool>) -> f64 {
    let (mut num, mut den) = (0.0, 0usize);
    for (&p, &s) in theta_post.iter().zip(selection.iter()) {
        if s {
            num += 1.0 - p;
            den += 1;
        }
    }
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub bfdr: f64,
    pub n_selected: usize,
    /// False when no non-empty selection meets the level; the threshold is then 1.
    pub feasible: bool,
}

/// Smallest threshold, among 0 and the observed posterior values, whose
/// non-empty selection has BFDR at most `level`. Thresholds between two
/// observed values select the same cells, so the observed (larger) value is
/// the one reported.
pub fn threshold_for_bfdr(theta_post: &DMatrix<f64>, level: f64) -> Result<ThresholdChoice> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::invalid(format!("BFDR level {level} must lie in (0, 1]")));
    }
    let mut desc: Vec<f64> = theta_post.iter().copied().collect();
    desc.sort_by(|a, b| b.total_cmp(a));
    let mut candidates: Vec<f64> = desc.clone();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // prefix sums over the descending values give BFDR of {P > t} in O(1)
    let mut prefix = Vec::with_capacity(desc.len() + 1);
    prefix.push(0.0);
    for &p in &desc {
        prefix.push(prefix.last().unwrap() + (1.0 - p));
    }
    for &t in &candidates {
        let n = desc.partition_point(|&p| p > t);
        if n == 0 {
            continue;
        }
        let b = prefix[n] / n as f64;
        if b <= level {
            return Ok(ThresholdChoice {
                threshold: t,
                bfdr: b,
                n_selected: n,
                feasible: true,
            });
        }
    }
    Ok(ThresholdChoice {
        threshold: 1.0,
        bfdr: 0.0,
        n_selected: 0,
        feasible: false,
    })
}

/// BFDR of the pooled selection restricted to each experiment's column.
pub fn bfdr_per_experiment(theta_post: &DMatrix<f64>, selection: &DMatrix<bool>) -> Vec<f64> {
    (0..theta_post.ncols())
        .map(|e| {
            let p = theta_post.column(e).into_owned();
            let s = selection.column(e).into_owned();
            bfdr(
                &DMatrix::from_column_slice(p.len(), 1, p.as_slice()),
                &DMatrix::from_column_slice(s.len(), 1, s.as_slice()),
            )
        })
        .collect()
}

/// θ posterior means averaged over chains (weighted by retained draws).
pub fn pooled_theta_post(traces: &[ChainTrace]) -> Result<DMatrix<f64>> {
    let first = traces.first().ok_or_else(|| Error::invalid("no chains to summarize"))?;
    let mut counts = DMatrix::<f64>::zeros(first.theta_counts.nrows(), first.theta_counts.ncols());
    let mut n = 0usize;
    for t in traces {
        if t.theta_counts.shape() != counts.shape() {
            return Err(Error::invalid("chains disagree on the θ shape"));
        }
        counts += t.theta_counts.map(|c| c as f64);
        n += t.n_retained;
    }
    if n == 0 {
        return Err(Error::invalid("chains retained no draws"));
    }
    Ok(counts / n as f64)
}

/// Posterior mean of `(1/m) Σᵣ |ρⱼᵣ| / (σ √vⱼ)` with `vⱼ = 1` under the slab
/// and `v₀` under the spike, per pathway and experiment.
pub fn snr_summary(model: &Model, traces: &[ChainTrace]) -> Result<DMatrix<f64>> {
    let q = model.n_pathways();
    let exps = model.data.experiments();
    let spike = 1.0 / model.hyper.v0.sqrt();
    let mut out = DMatrix::zeros(q, exps.len());
    let mut draws = 0usize;
    for tr in traces {
        if tr.rho_draws.len() != tr.n_retained || tr.theta_draws.len() != tr.n_retained {
            return Err(Error::invalid(
                "SNR needs stored ρ and θ draws for every retained sweep",
            ));
        }
        for d in 0..tr.n_retained {
            let sigma = tr.sigma2[d].sqrt();
            let rho = &tr.rho_draws[d];
            let theta = &tr.theta_draws[d];
            for (e, ex) in exps.iter().enumerate() {
                let m = ex.columns.len() as f64;
                for j in 0..q {
                    let scale = if theta[(j, e)] { 1.0 } else { spike };
                    let s: f64 = ex.columns.iter().map(|&c| rho[(j, c)].abs()).sum();
                    out[(j, e)] += scale * s / (sigma * m);
                }
            }
            draws += 1;
        }
    }
    if draws == 0 {
        return Err(Error::invalid("no stored draws"));
    }
    Ok(out / draws as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub parameter: String,
    pub rhat: f64,
    /// Zero within-chain variance; `rhat` is reported as 1.
    pub degenerate: bool,
}

/// `√(V̂/W)` from per-chain means and variances of series of length `n`.
pub fn gelman_rubin_from_moments(n: usize, means: &[f64], vars: &[f64]) -> Result<(f64, bool)> {
    let m = means.len();
    if m < 2 || vars.len() != m {
        return Err(Error::invalid("R̂ needs at least two chains"));
    }
    if n < 2 {
        return Err(Error::invalid("R̂ needs at least two draws per chain"));
    }
    let nf = n as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = vars.iter().sum::<f64>() / m as f64;
    if w <= 0.0 {
        return Ok((1.0, true));
    }
    let v = (nf - 1.0) / nf * w + b / nf;
    Ok(((v / w).sqrt(), false))
}

/// R̂ of one parameter from its per-chain series (absolute values are taken here).
pub fn gelman_rubin(series: &[&[f64]]) -> Result<(f64, bool)> {
    let n = series.first().map_or(0, |s| s.len());
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("chains have different retained lengths"));
    }
    let mut means = Vec::with_capacity(series.len());
    let mut vars = Vec::with_capacity(series.len());
    for s in series {
        let mean = s.iter().map(|x| x.abs()).sum::<f64>() / n.max(1) as f64;
        let var = s.iter().map(|x| (x.abs() - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        means.push(mean);
        vars.push(var);
    }
    gelman_rubin_from_moments(n, &means, &vars)
}

/// R̂ for every continuous parameter, computed on absolute values.
pub fn rhat_table(traces: &[ChainTrace]) -> Result<Vec<Rhat>> {
    if traces.len() < 2 {
        return Err(Error::invalid("R̂ is unavailable with a single chain"));
    }
    let mut out = Vec::new();
    let scalars: [(&str, fn(&ChainTrace) -> &[f64]); 3] = [
        ("gamma", |t| &t.gamma),
        ("sigma2", |t| &t.sigma2),
        ("tau2", |t| &t.tau2),
    ];
    for (name, get) in scalars {
        let series: Vec<&[f64]> = traces.iter().map(get).collect();
        let (rhat, degenerate) = gelman_rubin(&series)?;
        out.push(Rhat {
            parameter: name.into(),
            rhat,
            degenerate,
        });
    }
    let n = traces[0].n_retained;
    let blocks: [fn(&ChainTrace) -> &crate::sampler::trace::BlockMoments; 4] =
        [|t| &t.lambda, |t| &t.omega, |t| &t.rho, |t| &t.psi];
    for get in blocks {
        let b0 = get(&traces[0]);
        let vars: Vec<Vec<f64>> = traces.iter().map(|t| get(t).abs.variance()).collect();
        for i in 0..b0.entries.len() {
            let means: Vec<f64> = traces.iter().map(|t| get(t).abs.mean[i]).collect();
            let v: Vec<f64> = vars.iter().map(|v| v[i]).collect();
            let (rhat, degenerate) = gelman_rubin_from_moments(n, &means, &v)?;
            out.push(Rhat {
                parameter: b0.label(i),
                rhat,
                degenerate,
            });
        }
    }
    Ok(out)
}

/// Mean, standard deviation and central 95% interval of a pooled series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn scalar_summary(name: &str, values: &[f64]) -> ScalarSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    ScalarSummary {
        parameter: name.into(),
        mean,
        sd,
        q025: quantile_sorted(&s, 0.025),
        q500: quantile_sorted(&s, 0.5),
        q975: quantile_sorted(&s, 0.975),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub theta_post: DMatrix<f64>,
    pub scalars: Vec<ScalarSummary>,
    pub rhat: Option<Vec<Rhat>>,
    pub snr: Option<DMatrix<f64>>,
    pub max_rhat: Option<f64>,
    pub converged: bool,
}

pub const RHAT_LIMIT: f64 = 1.1;

impl PosteriorSummary {
    pub fn new(model: &Model, traces: &[ChainTrace]) -> Result<Self> {
        let theta_post = pooled_theta_post(traces)?;
        let pooled =
            |f: fn(&ChainTrace) -> &Vec<f64>| traces.iter().flat_map(|t| f(t).iter().copied()).collect::<Vec<_>>();
        let scalars = vec![
            scalar_summary("gamma", &pooled(|t| &t.gamma)),
            scalar_summary("sigma2", &pooled(|t| &t.sigma2)),
            scalar_summary("tau2", &pooled(|t| &t.tau2)),
        ];
        let rhat = if traces.len() >= 2 {
            Some(rhat_table(traces)?)
        } else {
            None
        };
        let max_rhat = rhat
            .as_ref()
            .map(|r| r.iter().map(|x| x.rhat).fold(f64::NEG_INFINITY, f64::max));
        let snr = if traces.iter().all(|t| t.rho_draws.len() == t.n_retained) {
            Some(snr_summary(model, traces)?)
        } else {
            None
        };
        Ok(Self {
            theta_post,
            scalars,
            converged: max_rhat.is_some_and(|m| m <= RHAT_LIMIT),
            rhat,
            snr,
            max_rhat,
        })
    }
}

/// Pooled standardized residuals and their normality diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFit {
    /// `Ĉᵢ⁻¹Yᵢ`, genes × columns.
    pub standardized: DMatrix<f64>,
    pub pooled_mean: f64,
    pub pooled_var: f64,
    /// Mean of each gene's standardized values across columns.
    pub gene_means: Vec<f64>,
    /// `(theoretical, empirical)` quantiles of the pooled values.
    pub qq_pooled: Vec<(f64, f64)>,
    /// QQ data of the gene means scaled by √N.
    pub qq_gene_means: Vec<(f64, f64)>,
}

/// Plug-in quantities for [`standardize`].
pub struct PlugIn {
    pub lambda: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    /// Per experiment, posterior probabilities of θ = 1.
    pub theta_prob: DMatrix<f64>,
}

impl PlugIn {
    /// Posterior means from one chain. Loadings and factors are only
    /// identified up to sign, so means are not pooled across chains.
    pub fn from_trace(model: &Model, trace: &ChainTrace) -> Result<Self> {
        let (p, q) = (model.n_genes(), model.n_pathways());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let gamma = mean(&trace.gamma);
        let gamma = if model.support.contains(gamma) { gamma } else { 0.0 };
        let factor = FactorCov::new(&model.net, gamma, model.hyper.s2)?;
        Ok(Self {
            lambda: trace.lambda.mean_matrix(p, q),
            psi: DVector::from_vec(trace.psi.value.mean.clone()),
            phi: factor.phi,
            sigma2: mean(&trace.sigma2),
            tau2: mean(&trace.tau2),
            theta_prob: trace.theta_post(),
        })
    }
}

/// Standardizes each column with the Cholesky factor of its plug-in
/// marginal covariance `ΛΦΣΦΛᵀ + σ²ΛΦΛᵀ + Ψ`, where Σ uses the posterior
/// inclusion probabilities of the column's experiment.
pub fn standardize(data: &ExpressionDataset, plug: &PlugIn, v0: f64) -> Result<ModelFit> {
    let (p, n) = data.y.shape();
    let mut z = DMatrix::zeros(p, n);
    for (e, ex) in data.experiments().iter().enumerate() {
        let prob: Vec<f64> = plug.theta_prob.column(e).iter().copied().collect();
        let diag = spike_slab_diag_prob(&prob, plug.tau2, v0);
        let cov = marginal_cov_y_with(&plug.lambda, &plug.phi, plug.sigma2, &diag, &plug.psi)?;
        let chol = linalg::cholesky_jitter(cov, "plug-in marginal covariance")?;
        let l = chol.l();
        for &c in &ex.columns {
            let col = l
                .solve_lower_triangular(&data.y.column(c).into_owned())
                .ok_or_else(|| Error::NotPositiveDefinite("plug-in covariance factor".into()))?;
            z.set_column(c, &col);
        }
    }
    Ok(fit_report(z))
}

/// Summary statistics and QQ data of a standardized matrix.
pub fn fit_report(z: DMatrix<f64>) -> ModelFit {
    let (p, n) = z.shape();
    let total = (p * n) as f64;
    let pooled_mean = z.sum() / total;
    let pooled_var = z.iter().map(|v| (v - pooled_mean).powi(2)).sum::<f64>() / (total - 1.0).max(1.0);
    let gene_means: Vec<f64> = (0..p).map(|k| z.row(k).sum() / n as f64).collect();
    let scaled: Vec<f64> = gene_means.iter().map(|m| m * (n as f64).sqrt()).collect();
    ModelFit {
        qq_pooled: qq_points(z.as_slice()),
        qq_gene_means: qq_points(&scaled),
        standardized: z,
        pooled_mean,
        pooled_var,
        gene_means,
    }
}

/// Normal QQ pairs at plotting positions `(i − ½)/n`.
pub fn qq_points(values: &[f64]) -> Vec<(f64, f64)> {
    let normal = Normal::standard();
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(i, v)| (normal.inverse_cdf((i as f64 + 0.5) / n), v))
        .collect()
}

/// One leave-one-out fold: a control column refitted as its own case experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LooFold {
    pub sample_id: String,
    /// Posterior inclusion probabilities for the held-out column.
    pub theta_post: Vec<f64>,
    pub threshold: ThresholdChoice,
    pub n_selected: usize,
}

/// Experiment id given to a held-out control.
pub fn loo_experiment_id(sample_id: &str) -> String {
    format!("loo:{sample_id}")
}

/// Data for the fold holding out control column `col`: the column becomes
/// its own case experiment and the rest are recentered on the remaining controls.
pub fn loo_dataset(data: &ExpressionDataset, col: usize) -> Result<ExpressionDataset> {
    let held = &data.samples[col];
    if !held.is_control {
        return Err(Error::invalid(format!("sample '{}' is not a control", held.sample_id)));
    }
    let samples: Vec<SampleInfo> = data
        .samples
        .iter()
        .enumerate()
        .map(|(c, s)| {
            if c == col {
                SampleInfo {
                    sample_id: s.sample_id.clone(),
                    experiment_id: loo_experiment_id(&s.sample_id),
                    replicate_index: 0,
                    is_control: false,
                }
            } else {
                s.clone()
            }
        })
        .collect();
    ExpressionDataset::new(data.gene_ids.clone(), data.y.clone(), samples)
}

/// Refits once per control column; the threshold for each fold is chosen on
/// that fold's pooled θ posterior at `level`.
pub fn loo_control_validation(model: &Model, config: &SamplerConfig, level: f64, jobs: usize) -> Result<Vec<LooFold>> {
    let controls: Vec<usize> = (0..model.n_columns())
        .filter(|&c| model.data.samples[c].is_control)
        .collect();
    if controls.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two control samples"));
    }
    let mut folds = Vec::with_capacity(controls.len());
    for &col in &controls {
        let data = loo_dataset(&model.data, col)?;
        let fold_model = Model::new(data, model.mask.clone(), model.net.clone(), model.hyper.clone())?;
        let traces = run_chains(&fold_model, config, jobs)?;
        let post = pooled_theta_post(&traces)?;
        let sid = &model.data.samples[col].sample_id;
        let e = fold_model
            .data
            .experiments()
            .iter()
            .position(|x| x.id == loo_experiment_id(sid))
            .expect("held-out experiment exists");
        let threshold = threshold_for_bfdr(&post, level)?;
        let theta_post: Vec<f64> = post.column(e).iter().copied().collect();
        let n_selected = theta_post
            .iter()
            .filter(|&&p| threshold.feasible && p > threshold.threshold)
            .count();
        folds.push(LooFold {
            sample_id: sid.clone(),
            theta_post,
            threshold,
            n_selected,
        });
    }
    Ok(folds)
}
