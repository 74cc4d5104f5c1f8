use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cfacar::inference::{loo_control_validation, rhat_table, standardize, LooFold, PlugIn, RHAT_LIMIT};
use cfacar::sampler::ChainTrace;
use serde::Serialize;

use super::fit::{build_model, rhat_csv, Convergence};
use crate::config::{resolve_jobs, FitConfig};
use crate::manifest::{Run, RunManifest, MANIFEST_FILE};
use crate::tables::pairs_csv;
use crate::DiagnoseArgs;

#[derive(Serialize)]
struct Settings {
    inputs: Vec<PathBuf>,
    loo: bool,
    bfdr: Option<f64>,
    seed: Option<u64>,
    chains: Option<usize>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
}

#[derive(Serialize)]
struct FitSummary {
    pooled_mean: f64,
    pooled_var: f64,
    n_values: usize,
}

#[derive(Serialize)]
struct LooSummary {
    bfdr_level: f64,
    n_folds: usize,
    folds_with_selection: usize,
    folds: Vec<LooFold>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    n_chains: usize,
    convergence: Convergence,
    rhat_available: bool,
    max_rhat: Option<f64>,
    n_degenerate: usize,
    model_fit: Option<FitSummary>,
    loo: Option<LooSummary>,
}

/// Chain directories named by `inputs`, and the first fit directory among them.
fn collect(inputs: &[PathBuf]) -> Result<(Vec<PathBuf>, Option<PathBuf>)> {
    let mut chains = Vec::new();
    let mut fit = None;
    for input in inputs {
        if input.join("trace.json").is_file() {
            chains.push(input.clone());
        } else if input.join(MANIFEST_FILE).is_file() && RunManifest::read(input)?.command == "fit" {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("trace.json").is_file())
                .collect();
            found.sort();
            chains.extend(found);
            fit.get_or_insert_with(|| input.clone());
        } else {
            bail!("{} holds neither a chain trace nor a fit", input.display());
        }
    }
    if chains.is_empty() {
        bail!("no chain traces found");
    }
    Ok((chains, fit))
}

fn fit_inputs(dir: &Path) -> Result<(RunManifest, FitConfig)> {
    let manifest = RunManifest::read(dir)?;
    manifest.verify_inputs()?;
    let cfg: FitConfig =
        serde_json::from_value(manifest.config.clone()).context("fit manifest has no usable config")?;
    Ok((manifest, cfg))
}

pub fn run(a: &DiagnoseArgs) -> Result<()> {
    let (chain_dirs, fit_dir) = collect(&a.inputs)?;
    let mut traces = chain_dirs
        .iter()
        .map(|d| ChainTrace::read_dir(d).with_context(|| format!("cannot read trace {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    traces.sort_by_key(|t| t.chain);

    let settings = Settings {
        inputs: a.inputs.clone(),
        loo: a.loo,
        bfdr: a.bfdr,
        seed: a.seed,
        chains: a.chains,
        iterations: a.iterations,
        burn_in: a.burn_in,
    };
    let mut run = Run::start(&a.out, "diagnose", a.seed, &settings)?;
    for d in &chain_dirs {
        run.input("trace", &d.join("trace.json"))?;
    }

    let rhat = if traces.len() >= 2 {
        let table = rhat_table(&traces)?;
        run.write("rhat.csv", rhat_csv(&table))?;
        Some(table)
    } else {
        log::warn!("R̂ needs at least two chains; only one was given");
        None
    };
    let max_rhat = rhat
        .as_ref()
        .map(|t| t.iter().map(|r| r.rhat).fold(f64::NEG_INFINITY, f64::max));
    let convergence = match max_rhat {
        None => Convergence::Unknown,
        Some(m) if m <= RHAT_LIMIT => Convergence::Converged,
        Some(_) => Convergence::NonConverged,
    };

    let mut model_fit = None;
    let mut loo = None;
    if let Some(dir) = &fit_dir {
        let (manifest, mut cfg) = fit_inputs(dir)?;
        let path = |role: &str| -> Result<PathBuf> {
            Ok(manifest
                .input(role)
                .with_context(|| format!("fit manifest lacks the '{role}' input"))?
                .path
                .clone())
        };
        let network = path("network_sidecar")?;
        let (model, _) = build_model(&path("expr")?, &path("meta")?, &network, &path("pathways")?, &cfg)?;

        let plug = PlugIn::from_trace(&model, &traces[0])?;
        let fit = standardize(&model.data, &plug, model.hyper.v0)?;
        let genes: Vec<(f64, f64)> = fit.gene_means.iter().enumerate().map(|(k, &m)| (k as f64, m)).collect();
        run.write("qq_pooled.csv", pairs_csv("theoretical,empirical", &fit.qq_pooled))?;
        run.write(
            "qq_gene_means.csv",
            pairs_csv("theoretical,empirical", &fit.qq_gene_means),
        )?;
        run.write("gene_means.csv", pairs_csv("gene_index,mean", &genes))?;
        model_fit = Some(FitSummary {
            pooled_mean: fit.pooled_mean,
            pooled_var: fit.pooled_var,
            n_values: fit.standardized.len(),
        });

        if a.loo {
            if let Some(v) = a.seed {
                cfg.sampler.seed = v;
            }
            if let Some(v) = a.chains {
                cfg.sampler.chains = v;
            }
            if let Some(v) = a.iterations {
                cfg.sampler.iterations = v;
            }
            if let Some(v) = a.burn_in {
                cfg.sampler.burn_in = v;
            }
            let level = a.bfdr.unwrap_or(cfg.bfdr);
            crate::config::check_level(level)?;
            let folds = loo_control_validation(&model, &cfg.sampler, level, resolve_jobs(a.jobs))?;
            let mut csv = String::from("sample_id,threshold,feasible,n_selected,max_theta_post\n");
            for f in &folds {
                let top = f.theta_post.iter().copied().fold(0.0, f64::max);
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    f.sample_id, f.threshold.threshold, f.threshold.feasible, f.n_selected, top
                ));
            }
            run.write("loo.csv", csv)?;
            loo = Some(LooSummary {
                bfdr_level: level,
                n_folds: folds.len(),
                folds_with_selection: folds.iter().filter(|f| f.n_selected > 0).count(),
                folds,
            });
        }
    } else if a.loo {
        bail!("leave-one-out needs a fit directory among the inputs");
    }

    let report = DiagnoseReport {
        n_chains: traces.len(),
        convergence,
        rhat_available: rhat.is_some(),
        max_rhat,
        n_degenerate: rhat.as_ref().map_or(0, |t| t.iter().filter(|r| r.degenerate).count()),
        model_fit,
        loo,
    };
    run.write_json("diagnostics.json", &report)?;
    run.finish()?;
    Ok(())
}
