use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use cfacar::geneset::GeneSetCollection;
use cfacar::inference::{
    bfdr_per_experiment, centroid_select, threshold_for_bfdr, PosteriorSummary, ScalarSummary, ThresholdChoice,
    RHAT_LIMIT,
};
use cfacar::model::{align, AlignmentReport, ExpressionDataset, Model};
use cfacar::sampler::{run_chains, ChainTrace};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_jobs, FitConfig, FitOverrides};
use crate::manifest::Run;
use crate::tables::{bool_matrix, LabelledMatrix};
use crate::FitArgs;

pub const REPORT_FILE: &str = "report.json";
pub const THETA_FILE: &str = "theta_post.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    #[serde(rename = "CONVERGED")]
    Converged,
    #[serde(rename = "NON-CONVERGED")]
    NonConverged,
    /// Fewer than two chains, so R̂ cannot be computed.
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub gamma_accept_rate: Option<f64>,
    pub final_xi: f64,
    pub sign_switches: usize,
    pub theta_flips: usize,
    pub max_cache_error: f64,
    pub cache_rebuilds: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub convergence: Convergence,
    pub max_rhat: Option<f64>,
    pub rhat_limit: f64,
    pub bfdr_level: f64,
    pub threshold: ThresholdChoice,
    pub bfdr_per_experiment: BTreeMap<String, f64>,
    pub efa: bool,
    pub n_genes: usize,
    pub n_pathways: usize,
    pub n_samples: usize,
    pub n_case_experiments: usize,
    pub alignment: AlignmentReport,
    pub scalars: Vec<ScalarSummary>,
    pub chains: Vec<ChainReport>,
}

/// Reads the inputs and builds the model a fit (or its diagnostics) runs on.
pub fn build_model(
    expr: &Path,
    meta: &Path,
    network: &Path,
    pathways: &Path,
    cfg: &FitConfig,
) -> Result<(Model, AlignmentReport)> {
    let data = ExpressionDataset::read(expr, meta)?;
    if data.n_case_experiments() == 0 {
        bail!("the metadata lists no case samples: nothing to infer");
    }
    let catalog = GeneSetCollection::read_gmt(pathways)?;
    let (net, _, _) = super::network::load(network)?;
    let (data, mask, report) = align(&data, &catalog, &net)?;
    let mut model = Model::new(data, mask, net, cfg.hyper.clone())?;
    if cfg.efa {
        model = model.into_efa();
    }
    Ok((model, report))
}

pub fn experiment_ids(model: &Model) -> Vec<String> {
    model.data.experiments().iter().map(|e| e.id.clone()).collect()
}

fn chain_report(t: &ChainTrace) -> ChainReport {
    ChainReport {
        chain: t.chain,
        gamma_accept_rate: t.gamma_sampling.rate(),
        final_xi: t.final_xi,
        sign_switches: t.sign_switches,
        theta_flips: t.theta_flips,
        max_cache_error: t.audits.iter().map(|a| a.max_relative_error).fold(0.0, f64::max),
        cache_rebuilds: t.audits.iter().filter(|a| a.rebuilt).count(),
    }
}

pub fn run(a: &FitArgs) -> Result<FitReport> {
    let overrides = FitOverrides {
        seed: a.seed,
        chains: a.chains,
        iterations: a.iterations,
        burn_in: a.burn_in,
        bfdr: a.bfdr,
        efa: a.efa,
    };
    let cfg = FitConfig::resolve(a.config.as_deref(), &overrides)?;
    let (model, alignment) = build_model(&a.expr, &a.meta, &a.network, &a.pathways, &cfg)?;
    let traces = run_chains(&model, &cfg.sampler, resolve_jobs(a.jobs))?;
    let summary = PosteriorSummary::new(&model, &traces)?;
    let choice = threshold_for_bfdr(&summary.theta_post, cfg.bfdr)?;
    let selection = if choice.feasible {
        centroid_select(&summary.theta_post, choice.threshold)
    } else {
        summary.theta_post.map(|_| false)
    };

    let pathways = model.net.pathway_ids.clone();
    let exps = experiment_ids(&model);
    let convergence = match summary.max_rhat {
        None => Convergence::Unknown,
        Some(_) if summary.converged => Convergence::Converged,
        Some(_) => Convergence::NonConverged,
    };
    if convergence == Convergence::NonConverged {
        log::warn!(
            "NON-CONVERGED: max R̂ = {:.3} exceeds {RHAT_LIMIT}",
            summary.max_rhat.unwrap_or(f64::NAN)
        );
    }
    let report = FitReport {
        convergence,
        max_rhat: summary.max_rhat,
        rhat_limit: RHAT_LIMIT,
        bfdr_level: cfg.bfdr,
        threshold: choice,
        bfdr_per_experiment: exps
            .iter()
            .cloned()
            .zip(bfdr_per_experiment(&summary.theta_post, &selection))
            .collect(),
        efa: cfg.efa,
        n_genes: model.n_genes(),
        n_pathways: model.n_pathways(),
        n_samples: model.n_columns(),
        n_case_experiments: model.data.n_case_experiments(),
        alignment,
        scalars: summary.scalars.clone(),
        chains: traces.iter().map(chain_report).collect(),
    };

    let mut run = Run::start(&a.out, "fit", Some(cfg.sampler.seed), &cfg)?;
    run.input("expr", &a.expr)?;
    run.input("meta", &a.meta)?;
    let (_, net_tsv, net_json) = super::network::load(&a.network)?;
    run.input("network_edges", &net_tsv)?;
    run.input("network_sidecar", &net_json)?;
    run.input("pathways", &a.pathways)?;

    let labelled = |values| LabelledMatrix {
        rows: pathways.clone(),
        cols: exps.clone(),
        values,
    };
    run.write_json(CONFIG_FILE, &cfg)?;
    run.write(THETA_FILE, labelled(summary.theta_post.clone()).to_csv("pathway"))?;
    run.write("selection.csv", labelled(bool_matrix(&selection)).to_csv("pathway"))?;
    if let Some(snr) = &summary.snr {
        run.write("snr.csv", labelled(snr.clone()).to_csv("pathway"))?;
    }
    if let Some(rhat) = &summary.rhat {
        run.write("rhat.csv", rhat_csv(rhat))?;
    }
    run.write("scalars.csv", scalars_csv(&summary.scalars))?;
    for t in &traces {
        let name = format!("chain_{}", t.chain);
        t.write_dir(&run.dir().join(&name), &model)?;
        run.record_dir(&name)?;
    }
    run.write_json(REPORT_FILE, &report)?;
    run.finish()?;
    Ok(report)
}

pub fn rhat_csv(rows: &[cfacar::inference::Rhat]) -> String {
    let mut s = String::from("parameter,rhat,degenerate\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.parameter, r.rhat, r.degenerate));
    }
    s
}

fn scalars_csv(rows: &[ScalarSummary]) -> String {
    let mut s = String::from("parameter,mean,sd,q025,q500,q975\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.parameter, r.mean, r.sd, r.q025, r.q500, r.q975
        ));
    }
    s
}
