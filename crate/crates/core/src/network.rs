//! Pathway–pathway interaction network.
//!
//! Pathways and functional gene sets form a bipartite graph weighted by the
//! Jaccard index of their gene memberships. Projecting that graph onto the
//! pathway nodes (the Gram matrix `A = M Mᵀ` over pathway rows) and
//! normalizing by `sqrt(A_ii A_jj)` gives a symmetric, zero-diagonal `W` with
//! entries in `[0, 1]`. Two pathways are linked iff they share at least one
//! function that survives the Jaccard threshold.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneset::GeneSetCollection;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.03;
pub const DEFAULT_GAMMA_DELTA: f64 = 0.005;

/// Pathway × function Jaccard weights; entries under the threshold are exactly 0.
#[derive(Clone, Debug)]
pub struct BipartiteIncidence {
    pub pathway_ids: Vec<String>,
    pub function_ids: Vec<String>,
    pub weights: DMatrix<f64>,
}

pub fn jaccard<T: Ord>(a: &std::collections::BTreeSet<T>, b: &std::collections::BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn build_incidence(
    pathways: &GeneSetCollection,
    functions: &GeneSetCollection,
    jaccard_threshold: f64,
) -> Result<BipartiteIncidence> {
    if !(0.0..1.0).contains(&jaccard_threshold) {
        return Err(Error::invalid(format!(
            "Jaccard threshold must lie in [0, 1), got {jaccard_threshold}"
        )));
    }
    if pathways.is_empty() || functions.is_empty() {
        return Err(Error::invalid("both gene-set collections must be non-empty"));
    }
    for s in pathways.sets().iter().chain(functions.sets()) {
        if s.genes.is_empty() {
            return Err(Error::invalid(format!("gene set '{}' is empty", s.id)));
        }
    }
    let weights = DMatrix::from_fn(pathways.len(), functions.len(), |i, j| {
        let w = jaccard(&pathways.sets()[i].genes, &functions.sets()[j].genes);
        if w >= jaccard_threshold {
            w
        } else {
            0.0
        }
    });
    Ok(BipartiteIncidence {
        pathway_ids: pathways.ids(),
        function_ids: functions.ids(),
        weights,
    })
}

/// Symmetric zero-diagonal weight matrix with its extreme eigenvalues.
#[derive(Clone, Debug)]
pub struct PathwayNetwork {
    pub pathway_ids: Vec<String>,
    pub w: DMatrix<f64>,
    pub eig_min: f64,
    pub eig_max: f64,
    /// Pathways removed during projection because they linked to no function.
    pub dropped: Vec<String>,
}

impl PathwayNetwork {
    /// Validates `w` and computes its eigen bounds.
    pub fn new(pathway_ids: Vec<String>, w: DMatrix<f64>) -> Result<Self> {
        let q = pathway_ids.len();
        if w.nrows() != q || w.ncols() != q {
            return Err(Error::invalid(format!(
                "network matrix is {}x{} but {} pathways were named",
                w.nrows(),
                w.ncols(),
                q
            )));
        }
        for i in 0..q {
            if w[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("W has nonzero diagonal at {i}")));
            }
            for j in 0..q {
                let v = w[(i, j)];
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::invalid(format!("W[{i},{j}] = {v} is out of range")));
                }
                if (v - w[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid("W is not symmetric"));
                }
            }
        }
        let (eig_min, eig_max) = extreme_eigenvalues(&w);
        Ok(Self {
            pathway_ids,
            w,
            eig_min,
            eig_max,
            dropped: Vec::new(),
        })
    }

    /// The empty network, which turns the model into plain exploratory factor analysis.
    pub fn empty(pathway_ids: Vec<String>) -> Self {
        let q = pathway_ids.len();
        Self {
            pathway_ids,
            w: DMatrix::zeros(q, q),
            eig_min: 0.0,
            eig_max: 0.0,
            dropped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pathway_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pathway_ids.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }

    /// Connected components of the nonzero pattern of `W`, each sorted, ordered
    /// by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let q = self.len();
        let mut label = vec![usize::MAX; q];
        let mut comps = Vec::new();
        for start in 0..q {
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            label[start] = id;
            while let Some(i) = stack.pop() {
                members.push(i);
                for j in 0..q {
                    if self.w[(i, j)] != 0.0 && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    /// Induced subnetwork on the given pathway indices (in that order).
    pub fn subnetwork(&self, idx: &[usize]) -> Result<Self> {
        let ids = idx.iter().map(|&i| self.pathway_ids[i].clone()).collect();
        let w = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.w[(idx[a], idx[b])]);
        Self::new(ids, w)
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pathway_i\tpathway_j\tweight")?;
        let q = self.len();
        for i in 0..q {
            for j in (i + 1)..q {
                let v = self.w[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{}\t{}\t{}", self.pathway_ids[i], self.pathway_ids[j], v)?;
                }
            }
        }
        Ok(())
    }

    pub fn sidecar(&self, delta: f64) -> NetworkSidecar {
        let support = gamma_support(self, delta);
        NetworkSidecar {
            pathway_ids: self.pathway_ids.clone(),
            eig_min: self.eig_min,
            eig_max: self.eig_max,
            gamma_delta: delta,
            gamma_lo: support.lo,
            gamma_hi: support.hi,
            dropped: self.dropped.clone(),
        }
    }

    /// Writes `<stem>.tsv` and `<stem>.json`.
    pub fn save(&self, stem: &Path, delta: f64) -> Result<()> {
        let tsv = stem.with_extension("tsv");
        let json = stem.with_extension("json");
        let f = std::fs::File::create(tsv)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_edge_list(&mut w)?;
        w.flush()?;
        let side = serde_json::to_string_pretty(&self.sidecar(delta))?;
        std::fs::write(json, side + "\n")?;
        Ok(())
    }

    /// Loads a network from its sidecar (pathway order) and edge list.
    pub fn load(stem: &Path) -> Result<Self> {
        let side: NetworkSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let tsv = stem.with_extension("tsv");
        let f = std::io::BufReader::new(std::fs::File::open(&tsv)?);
        let mut net = Self::from_edge_list(f, &tsv.display().to_string(), side.pathway_ids)?;
        net.dropped = side.dropped;
        Ok(net)
    }

    pub fn from_edge_list<R: BufRead>(reader: R, source: &str, pathway_ids: Vec<String>) -> Result<Self> {
        let index: BTreeMap<&str, usize> = pathway_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let q = pathway_ids.len();
        let mut w = DMatrix::zeros(q, q);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: source.to_string(),
                line: n + 1,
                msg,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", f.len())));
            }
            let i = *index
                .get(f[0])
                .ok_or_else(|| err(format!("unknown pathway '{}'", f[0])))?;
            let j = *index
                .get(f[1])
                .ok_or_else(|| err(format!("unknown pathway '{}'", f[1])))?;
            let v: f64 = f[2].trim().parse().map_err(|e| err(format!("bad weight: {e}")))?;
            if i == j {
                return Err(err("self loop".into()));
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        Self::new(pathway_ids, w)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetworkSidecar {
    pub pathway_ids: Vec<String>,
    pub eig_min: f64,
    pub eig_max: f64,
    pub gamma_delta: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub dropped: Vec<String>,
}

pub fn extreme_eigenvalues(w: &DMatrix<f64>) -> (f64, f64) {
    if w.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Projects the incidence onto pathways and standardizes. Pathways without any
/// surviving function link (`A_ii = 0`) are dropped and listed in `dropped`.
pub fn project_and_standardize(m: &BipartiteIncidence) -> Result<PathwayNetwork> {
    let a = &m.weights * m.weights.transpose();
    let keep: Vec<usize> = (0..a.nrows()).filter(|&i| a[(i, i)] > 0.0).collect();
    let dropped: Vec<String> = (0..a.nrows())
        .filter(|&i| a[(i, i)] <= 0.0)
        .map(|i| m.pathway_ids[i].clone())
        .collect();
    for d in &dropped {
        log::warn!("pathway '{d}' shares no function above the Jaccard threshold; dropped");
    }
    let q = keep.len();
    let w = DMatrix::from_fn(q, q, |x, y| {
        if x == y {
            0.0
        } else {
            let (i, j) = (keep[x], keep[y]);
            (a[(i, j)] / (a[(i, i)] * a[(j, j)]).sqrt()).min(1.0)
        }
    });
    let ids = keep.iter().map(|&i| m.pathway_ids[i].clone()).collect();
    let mut net = PathwayNetwork::new(ids, w)?;
    net.dropped = dropped;
    Ok(net)
}

/// Builds the network straight from the two collections.
pub fn build_network(
    pathways: &GeneSetCollection,
    functions: &GeneSetCollection,
    jaccard_threshold: f64,
) -> Result<PathwayNetwork> {
    project_and_standardize(&build_incidence(pathways, functions, jaccard_threshold)?)
}

/// Admissible interval for the spatial scaling parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSupport {
    pub lo: f64,
    pub hi: f64,
}

impl GammaSupport {
    /// The single point γ = 0 used for the empty network.
    pub fn is_degenerate(&self) -> bool {
        self.lo == 0.0 && self.hi == 0.0
    }

    pub fn contains(&self, gamma: f64) -> bool {
        if self.is_degenerate() {
            gamma == 0.0
        } else {
            self.lo < gamma && gamma < self.hi
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `(1/ι₁ + δ, 1/ι_q − δ)`, or the point `{0}` when `W = 0`.
pub fn gamma_support(net: &PathwayNetwork, delta: f64) -> GammaSupport {
    if net.is_zero() || !(net.eig_min < 0.0 && net.eig_max > 0.0) {
        return GammaSupport { lo: 0.0, hi: 0.0 };
    }
    let lo = 1.0 / net.eig_min + delta;
    let hi = 1.0 / net.eig_max - delta;
    if lo >= hi {
        return GammaSupport { lo: 0.0, hi: 0.0 };
    }
    GammaSupport { lo, hi }
}
