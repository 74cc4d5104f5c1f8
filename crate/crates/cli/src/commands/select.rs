use std::collections::BTreeMap;

use anyhow::Result;
use cfacar::inference::{bfdr_per_experiment, centroid_select, threshold_for_bfdr, ThresholdChoice};
use serde::Serialize;

use crate::config::check_level;
use crate::manifest::Run;
use crate::tables::{bool_matrix, LabelledMatrix};
use crate::SelectArgs;

#[derive(Serialize)]
struct Settings {
    bfdr: f64,
}

#[derive(Serialize)]
struct SelectReport {
    bfdr_level: f64,
    threshold: ThresholdChoice,
    bfdr_per_experiment: BTreeMap<String, f64>,
}

pub fn run(a: &SelectArgs) -> Result<()> {
    check_level(a.bfdr)?;
    let theta_path = a.summary.join(super::fit::THETA_FILE);
    let post = LabelledMatrix::read(&theta_path)?;
    let choice = threshold_for_bfdr(&post.values, a.bfdr)?;
    let selection = if choice.feasible {
        centroid_select(&post.values, choice.threshold)
    } else {
        post.values.map(|_| false)
    };
    let report = SelectReport {
        bfdr_level: a.bfdr,
        bfdr_per_experiment: post
            .cols
            .iter()
            .cloned()
            .zip(bfdr_per_experiment(&post.values, &selection))
            .collect(),
        threshold: choice,
    };

    let mut run = Run::start(&a.out, "select", None, &Settings { bfdr: a.bfdr })?;
    run.input("theta_post", &theta_path)?;
    let table = LabelledMatrix {
        rows: post.rows.clone(),
        cols: post.cols.clone(),
        values: bool_matrix(&selection),
    };
    run.write("selection.csv", table.to_csv("pathway"))?;
    run.write_json("selection.json", &report)?;
    run.finish()?;
    Ok(())
}
