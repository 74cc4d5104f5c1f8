use anyhow::Result;
use cfacar::simulation::{comparison_csv, run_comparison, BenchConfig};

use crate::config::{read_json, resolve_jobs};
use crate::manifest::Run;
use crate::BenchArgs;

pub fn run(a: &BenchArgs) -> Result<()> {
    let mut bench: BenchConfig = read_json(&a.scenario)?;
    if let Some(seed) = a.seed {
        bench.scenario.seed = seed;
    }
    let rows = run_comparison(&bench, resolve_jobs(a.jobs))?;

    let mut run = Run::start(&a.out, "bench", Some(bench.scenario.seed), &bench)?;
    run.input("scenario", &a.scenario)?;
    run.write("auc.csv", comparison_csv(&rows))?;
    run.write_json("auc.json", &rows)?;
    run.finish()?;
    Ok(())
}
