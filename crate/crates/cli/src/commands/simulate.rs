use anyhow::Result;
use cfacar::model::data::{write_expression, write_metadata};
use cfacar::simulation::{generate_dataset, synthetic_catalog};
use serde::Serialize;

use crate::config::{read_json_or_default, SimulateConfig};
use crate::manifest::Run;
use crate::tables::{bool_matrix, LabelledMatrix};
use crate::SimulateArgs;

#[derive(Serialize)]
struct Truth {
    gamma_true: f64,
    n_genes: usize,
    n_pathways: usize,
}

pub fn run(a: &SimulateArgs) -> Result<()> {
    let mut cfg: SimulateConfig = read_json_or_default(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    let cat = synthetic_catalog(&cfg.catalog)?;
    let sim = generate_dataset(&cat, &cfg.scenario)?;

    let mut run = Run::start(&a.out, "simulate", Some(cfg.scenario.seed), &cfg)?;
    if let Some(path) = &a.config {
        run.input("config", path)?;
    }
    let mut buf = Vec::new();
    write_expression(&sim.data, &mut buf)?;
    run.write("expr.tsv", buf)?;
    let mut buf = Vec::new();
    write_metadata(&sim.data.samples, &mut buf)?;
    run.write("meta.tsv", buf)?;
    let mut buf = Vec::new();
    cat.pathways.write_gmt(&mut buf)?;
    run.write("pathways.gmt", buf)?;
    let mut buf = Vec::new();
    cat.functions.write_gmt(&mut buf)?;
    run.write("functions.gmt", buf)?;
    let truth = LabelledMatrix {
        rows: sim.pathway_ids.clone(),
        cols: sim.data.experiments().iter().map(|e| e.id.clone()).collect(),
        values: bool_matrix(&sim.truth),
    };
    run.write("truth.csv", truth.to_csv("pathway"))?;
    run.write_json(
        "truth.json",
        &Truth {
            gamma_true: sim.gamma_true,
            n_genes: sim.data.n_genes(),
            n_pathways: sim.pathway_ids.len(),
        },
    )?;
    run.finish()?;
    Ok(())
}
