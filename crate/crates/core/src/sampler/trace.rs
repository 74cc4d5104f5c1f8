//! Retained output of one chain and its on-disk layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Model;

/// Welford running mean and sum of squared deviations, one slot per entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, values: impl IntoIterator<Item = f64>) {
        self.n += 1;
        let n = self.n as f64;
        let mut it = values.into_iter();
        for (mean, m2) in self.mean.iter_mut().zip(self.m2.iter_mut()) {
            let x = it.next().expect("moment vector length mismatch");
            let d = x - *mean;
            *mean += d / n;
            *m2 += d * (x - *mean);
        }
    }

    /// Unbiased sample variance (0 with fewer than two draws).
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.m2.len()];
        }
        self.m2.iter().map(|v| v / (self.n - 1) as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Running moments of a parameter block and of its absolute values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub name: String,
    /// `(row, col)` of each tracked entry in the parameter matrix.
    pub entries: Vec<(usize, usize)>,
    pub value: Moments,
    pub abs: Moments,
}

impl BlockMoments {
    pub fn new(name: &str, entries: Vec<(usize, usize)>) -> Self {
        let n = entries.len();
        Self {
            name: name.to_string(),
            entries,
            value: Moments::new(n),
            abs: Moments::new(n),
        }
    }

    pub fn dense(name: &str, rows: usize, cols: usize) -> Self {
        let entries = (0..cols).flat_map(|c| (0..rows).map(move |r| (r, c))).collect();
        Self::new(name, entries)
    }

    pub fn push(&mut self, m: &DMatrix<f64>) {
        self.value.push(self.entries.iter().map(|&(r, c)| m[(r, c)]));
        self.abs.push(self.entries.iter().map(|&(r, c)| m[(r, c)].abs()));
    }

    /// Posterior mean laid out as a `rows × cols` matrix (untracked cells 0).
    pub fn mean_matrix(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows, cols);
        for (&(r, c), &v) in self.entries.iter().zip(&self.value.mean) {
            out[(r, c)] = v;
        }
        out
    }

    pub fn label(&self, i: usize) -> String {
        let (r, c) = self.entries[i];
        format!("{}[{},{}]", self.name, r, c)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: usize,
    pub accepted: usize,
    pub out_of_support: usize,
}

impl MoveStats {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sweep: usize,
    pub max_relative_error: f64,
    pub rebuilt: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub n_retained: usize,
    pub gamma: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub tau2: Vec<f64>,
    /// Number of retained sweeps with θ = 1, `q × E`.
    pub theta_counts: DMatrix<u64>,
    pub lambda: BlockMoments,
    pub omega: BlockMoments,
    pub rho: BlockMoments,
    pub psi: BlockMoments,
    pub gamma_burn_in: MoveStats,
    pub gamma_sampling: MoveStats,
    /// ξ after each adaptation batch.
    pub xi_history: Vec<f64>,
    pub final_xi: f64,
    pub audits: Vec<AuditRecord>,
    pub theta_flips: usize,
    pub sign_switches: usize,
    #[serde(skip)]
    pub rho_draws: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub theta_draws: Vec<DMatrix<bool>>,
}

impl ChainTrace {
    pub fn new(model: &Model, chain: usize, xi: f64) -> Self {
        let (p, q, n) = (model.n_genes(), model.n_pathways(), model.n_columns());
        let free = (0..q)
            .flat_map(|j| (0..p).filter(move |&k| model.mask.contains(k, j)).map(move |k| (k, j)))
            .collect();
        Self {
            chain,
            n_retained: 0,
            gamma: Vec::new(),
            sigma2: Vec::new(),
            tau2: Vec::new(),
            theta_counts: DMatrix::zeros(q, model.n_experiments()),
            lambda: BlockMoments::new("lambda", free),
            omega: BlockMoments::dense("omega", q, n),
            rho: BlockMoments::dense("rho", q, n),
            psi: BlockMoments::dense("psi", p, 1),
            gamma_burn_in: MoveStats::default(),
            gamma_sampling: MoveStats::default(),
            xi_history: Vec::new(),
            final_xi: xi,
            audits: Vec::new(),
            theta_flips: 0,
            sign_switches: 0,
            rho_draws: Vec::new(),
            theta_draws: Vec::new(),
        }
    }

    /// `P(θⱼₑ = 1 | Y)` estimated by the retained fraction.
    pub fn theta_post(&self) -> DMatrix<f64> {
        let n = self.n_retained.max(1) as f64;
        self.theta_counts.map(|c| c as f64 / n)
    }

    /// Serializes the chain into `dir`: `trace.json` holds everything except
    /// the stored draws, which go to long-format CSV files.
    pub fn write_dir(&self, dir: &Path, model: &Model) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trace.json"), serde_json::to_string_pretty(self)?)?;

        let mut s = String::from("draw,gamma,sigma2,tau2\n");
        for i in 0..self.n_retained {
            writeln!(s, "{},{},{},{}", i, self.gamma[i], self.sigma2[i], self.tau2[i]).unwrap();
        }
        fs::write(dir.join("scalars.csv"), s)?;

        let pathways = &model.net.pathway_ids;
        let exps: Vec<&str> = model.data.experiments().iter().map(|e| e.id.as_str()).collect();
        fs::write(
            dir.join("theta_post.csv"),
            matrix_csv(&self.theta_post(), "pathway", pathways, &exps),
        )?;

        if !self.rho_draws.is_empty() {
            let mut s = String::from("draw,pathway,sample,value\n");
            for (i, d) in self.rho_draws.iter().enumerate() {
                for c in 0..d.ncols() {
                    for j in 0..d.nrows() {
                        let sid = &model.data.samples[c].sample_id;
                        writeln!(s, "{},{},{},{}", i, pathways[j], sid, d[(j, c)]).unwrap();
                    }
                }
            }
            fs::write(dir.join("rho_draws.csv"), s)?;
        }
        if !self.theta_draws.is_empty() {
            let mut s = String::from("draw,pathway,experiment\n");
            for (i, d) in self.theta_draws.iter().enumerate() {
                for e in 0..d.ncols() {
                    for j in 0..d.nrows() {
                        if d[(j, e)] {
                            writeln!(s, "{},{},{}", i, pathways[j], exps[e]).unwrap();
                        }
                    }
                }
            }
            fs::write(dir.join("theta_draws.csv"), s)?;
        }
        Ok(())
    }

    /// Reads `trace.json`; stored draws are not reloaded.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("trace.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// CSV with a header row and one labelled row per matrix row.
pub fn matrix_csv<S: AsRef<str>, T: AsRef<str>>(m: &DMatrix<f64>, corner: &str, rows: &[S], cols: &[T]) -> String {
    let mut s = String::from(corner);
    for c in cols {
        s.push(',');
        s.push_str(c.as_ref());
    }
    s.push('\n');
    for (r, name) in rows.iter().enumerate() {
        s.push_str(name.as_ref());
        for c in 0..m.ncols() {
            write!(s, ",{}", m[(r, c)]).unwrap();
        }
        s.push('\n');
    }
    s
}
