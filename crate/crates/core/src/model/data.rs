//! Expression matrix with sample metadata, plus TSV readers.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub sample_id: String,
    pub experiment_id: String,
    pub replicate_index: usize,
    pub is_control: bool,
}

/// Columns sharing one perturbation indicator vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Experiment {
    pub id: String,
    pub columns: Vec<usize>,
    pub is_control: bool,
}

/// Centered `p × N` expression matrix. Experiments are listed in order of first
/// appearance among the columns.
#[derive(Clone, Debug)]
pub struct ExpressionDataset {
    pub gene_ids: Vec<String>,
    pub y: DMatrix<f64>,
    pub samples: Vec<SampleInfo>,
    experiments: Vec<Experiment>,
    column_experiment: Vec<usize>,
}

impl ExpressionDataset {
    /// Centers every gene on the mean of the control columns.
    pub fn new(gene_ids: Vec<String>, mut y: DMatrix<f64>, samples: Vec<SampleInfo>) -> Result<Self> {
        let controls: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_control)
            .map(|(i, _)| i)
            .collect();
        if controls.is_empty() {
            return Err(Error::invalid("no control samples to center on"));
        }
        if y.ncols() != samples.len() {
            return Err(Error::invalid(format!(
                "matrix has {} columns but metadata lists {} samples",
                y.ncols(),
                samples.len()
            )));
        }
        for k in 0..y.nrows() {
            let mean = controls.iter().map(|&c| y[(k, c)]).sum::<f64>() / controls.len() as f64;
            for c in 0..y.ncols() {
                y[(k, c)] -= mean;
            }
        }
        Self::from_centered(gene_ids, y, samples)
    }

    /// Wraps a matrix that is already on the model's scale (no centering).
    pub fn from_centered(gene_ids: Vec<String>, y: DMatrix<f64>, samples: Vec<SampleInfo>) -> Result<Self> {
        if y.nrows() != gene_ids.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows but {} gene ids",
                y.nrows(),
                gene_ids.len()
            )));
        }
        if y.ncols() != samples.len() {
            return Err(Error::invalid(format!(
                "matrix has {} columns but metadata lists {} samples",
                y.ncols(),
                samples.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("expression matrix contains non-finite values"));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut experiments: Vec<Experiment> = Vec::new();
        let mut column_experiment = Vec::with_capacity(samples.len());
        for (c, s) in samples.iter().enumerate() {
            let e = *index.entry(s.experiment_id.as_str()).or_insert_with(|| {
                experiments.push(Experiment {
                    id: s.experiment_id.clone(),
                    columns: Vec::new(),
                    is_control: s.is_control,
                });
                experiments.len() - 1
            });
            if experiments[e].is_control != s.is_control {
                return Err(Error::invalid(format!(
                    "experiment '{}' mixes case and control samples",
                    s.experiment_id
                )));
            }
            experiments[e].columns.push(c);
            column_experiment.push(e);
        }
        for e in &experiments {
            let mut reps: Vec<usize> = e.columns.iter().map(|&c| samples[c].replicate_index).collect();
            reps.sort_unstable();
            if reps.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!(
                    "experiment '{}' repeats a replicate index",
                    e.id
                )));
            }
        }
        Ok(Self {
            gene_ids,
            y,
            samples,
            experiments,
            column_experiment,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.y.ncols()
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn n_experiments(&self) -> usize {
        self.experiments.len()
    }

    pub fn n_case_experiments(&self) -> usize {
        self.experiments.iter().filter(|e| !e.is_control).count()
    }

    pub fn column_experiment(&self, col: usize) -> usize {
        self.column_experiment[col]
    }

    /// Keeps the given gene rows, in that order.
    pub fn select_genes(&self, rows: &[usize]) -> Self {
        let y = DMatrix::from_fn(rows.len(), self.y.ncols(), |r, c| self.y[(rows[r], c)]);
        Self {
            gene_ids: rows.iter().map(|&r| self.gene_ids[r].clone()).collect(),
            y,
            samples: self.samples.clone(),
            experiments: self.experiments.clone(),
            column_experiment: self.column_experiment.clone(),
        }
    }

    /// Same columns, relabelled with new metadata (used when a control column is
    /// turned into a case for cross-validation).
    pub fn with_samples(&self, samples: Vec<SampleInfo>) -> Result<Self> {
        Self::from_centered(self.gene_ids.clone(), self.y.clone(), samples)
    }

    /// Reads the expression TSV and metadata TSV and centers on the controls.
    pub fn read(expr: &Path, meta: &Path) -> Result<Self> {
        let (genes, sample_ids, y) = read_expression(
            std::io::BufReader::new(std::fs::File::open(expr)?),
            &expr.display().to_string(),
        )?;
        let meta_rows = read_metadata(
            std::io::BufReader::new(std::fs::File::open(meta)?),
            &meta.display().to_string(),
        )?;
        let mut by_id: BTreeMap<String, SampleInfo> = meta_rows.into_iter().map(|s| (s.sample_id.clone(), s)).collect();
        let samples = sample_ids
            .iter()
            .map(|id| {
                by_id
                    .remove(id)
                    .ok_or_else(|| Error::invalid(format!("sample '{id}' missing from metadata")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(genes, y, samples)
    }
}

/// `gene_id <TAB> s1 <TAB> s2 ...` header, then one row per gene.
pub fn read_expression<R: BufRead>(reader: R, source: &str) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{source}: empty expression file")))?;
    let header = header?;
    let sample_ids: Vec<String> = header.trim_end().split('\t').skip(1).map(String::from).collect();
    if sample_ids.is_empty() {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            msg: "header lists no samples".into(),
        });
    }
    let mut genes = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: source.into(),
            line: i + 1,
            msg,
        };
        let mut f = line.trim_end().split('\t');
        let gene = f.next().unwrap_or_default().to_string();
        let row: Vec<f64> = f
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad value '{v}': {e}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != sample_ids.len() {
            return Err(err(format!(
                "expected {} values, found {}",
                sample_ids.len(),
                row.len()
            )));
        }
        genes.push(gene);
        values.extend(row);
    }
    let y = DMatrix::from_row_slice(genes.len(), sample_ids.len(), &values);
    Ok((genes, sample_ids, y))
}

/// Metadata TSV with header `sample_id experiment_id replicate_index is_control`.
pub fn read_metadata<R: BufRead>(reader: R, source: &str) -> Result<Vec<SampleInfo>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: source.into(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.trim_end().split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let replicate_index = f[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("bad replicate index: {e}")))?;
        let is_control = match f[3].trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "control" => true,
            "0" | "false" | "no" | "case" => false,
            other => return Err(err(format!("bad is_control value '{other}'"))),
        };
        out.push(SampleInfo {
            sample_id: f[0].to_string(),
            experiment_id: f[1].to_string(),
            replicate_index,
            is_control,
        });
    }
    Ok(out)
}

pub fn write_expression<W: std::io::Write>(ds: &ExpressionDataset, mut w: W) -> Result<()> {
    write!(w, "gene_id")?;
    for s in &ds.samples {
        write!(w, "\t{}", s.sample_id)?;
    }
    writeln!(w)?;
    for (k, g) in ds.gene_ids.iter().enumerate() {
        write!(w, "{g}")?;
        for c in 0..ds.n_columns() {
            write!(w, "\t{}", ds.y[(k, c)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_metadata<W: std::io::Write>(samples: &[SampleInfo], mut w: W) -> Result<()> {
    writeln!(w, "sample_id\texperiment_id\treplicate_index\tis_control")?;
    for s in samples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            s.sample_id,
            s.experiment_id,
            s.replicate_index,
            u8::from(s.is_control)
        )?;
    }
    Ok(())
}
