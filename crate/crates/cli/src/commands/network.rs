use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cfacar::geneset::GeneSetCollection;
use cfacar::network::{build_network, PathwayNetwork};
use serde::Serialize;

use crate::manifest::Run;
use crate::BuildNetworkArgs;

pub const NETWORK_STEM: &str = "network";

#[derive(Serialize)]
struct Settings {
    jaccard_min: f64,
    delta: f64,
}

pub fn run(a: &BuildNetworkArgs) -> Result<()> {
    let pathways = GeneSetCollection::read_gmt(&a.pathways)?;
    let functions = GeneSetCollection::read_gmt(&a.functions)?;
    let net = build_network(&pathways, &functions, a.jaccard_min)?;

    let mut run = Run::start(
        &a.out,
        "build-network",
        None,
        &Settings {
            jaccard_min: a.jaccard_min,
            delta: a.delta,
        },
    )?;
    run.input("pathways", &a.pathways)?;
    run.input("functions", &a.functions)?;
    let mut edges = Vec::new();
    net.write_edge_list(&mut edges)?;
    run.write(&format!("{NETWORK_STEM}.tsv"), edges)?;
    run.write_json(&format!("{NETWORK_STEM}.json"), &net.sidecar(a.delta))?;
    run.finish()?;
    log::info!("network with {} pathways ({} dropped)", net.len(), net.dropped.len());
    Ok(())
}

/// Accepts the network as a stem, a `.json` sidecar or a `.tsv` edge list.
pub fn stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("tsv") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

pub fn load(path: &Path) -> Result<(PathwayNetwork, PathBuf, PathBuf)> {
    let s = stem(path);
    let (tsv, json) = (s.with_extension("tsv"), s.with_extension("json"));
    let net = PathwayNetwork::load(&s).with_context(|| format!("cannot load network {}", s.display()))?;
    Ok((net, tsv, json))
}
