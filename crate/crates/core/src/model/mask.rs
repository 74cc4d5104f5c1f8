//! Structural-zero pattern of the loading matrix.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneset::GeneSetCollection;
use crate::model::data::ExpressionDataset;
use crate::network::PathwayNetwork;

/// For every gene, the sorted pathway indices it loads on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadingMask {
    rows: Vec<Vec<usize>>,
    n_pathways: usize,
}

impl LoadingMask {
    pub fn new(rows: Vec<Vec<usize>>, n_pathways: usize) -> Result<Self> {
        let mut rows = rows;
        for (k, r) in rows.iter_mut().enumerate() {
            r.sort_unstable();
            r.dedup();
            if r.is_empty() {
                return Err(Error::invalid(format!("gene row {k} belongs to no pathway")));
            }
            if r.iter().any(|&j| j >= n_pathways) {
                return Err(Error::invalid(format!(
                    "gene row {k} references a pathway out of range"
                )));
            }
        }
        Ok(Self { rows, n_pathways })
    }

    pub fn from_dense(mask: &DMatrix<bool>) -> Result<Self> {
        let rows = (0..mask.nrows())
            .map(|k| (0..mask.ncols()).filter(|&j| mask[(k, j)]).collect())
            .collect();
        Self::new(rows, mask.ncols())
    }

    pub fn n_genes(&self) -> usize {
        self.rows.len()
    }

    pub fn n_pathways(&self) -> usize {
        self.n_pathways
    }

    pub fn row(&self, k: usize) -> &[usize] {
        &self.rows[k]
    }

    pub fn row_count(&self, k: usize) -> usize {
        self.rows[k].len()
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.rows[k].binary_search(&j).is_ok()
    }

    pub fn n_free(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn dense(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows.len(), self.n_pathways, |k, j| self.contains(k, j))
    }

    /// Genes per pathway.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_pathways];
        for r in &self.rows {
            for &j in r {
                c[j] += 1;
            }
        }
        c
    }
}

/// What alignment removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Genes in the data that belong to no retained pathway.
    pub genes_without_pathway: Vec<String>,
    /// Catalog pathways that are not nodes of the network.
    pub pathways_not_in_network: Vec<String>,
    /// Network pathways with no gene present in the data.
    pub pathways_without_genes: Vec<String>,
}

/// Restricts the data to genes covered by the network's pathways and builds
/// the mask with columns in network order.
pub fn align(
    data: &ExpressionDataset,
    catalog: &GeneSetCollection,
    net: &PathwayNetwork,
) -> Result<(ExpressionDataset, LoadingMask, AlignmentReport)> {
    let mut report = AlignmentReport::default();
    let in_net: BTreeMap<&str, usize> = net
        .pathway_ids
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();
    for id in &net.pathway_ids {
        if catalog.get(id).is_none() {
            return Err(Error::invalid(format!(
                "network pathway '{id}' is missing from the catalog"
            )));
        }
    }
    report.pathways_not_in_network = catalog
        .ids()
        .into_iter()
        .filter(|id| !in_net.contains_key(id.as_str()))
        .collect();

    let mut gene_paths: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, id) in net.pathway_ids.iter().enumerate() {
        for g in &catalog.get(id).expect("checked above").genes {
            gene_paths.entry(g.as_str()).or_default().push(j);
        }
    }
    let mut keep = Vec::new();
    let mut rows = Vec::new();
    for (k, g) in data.gene_ids.iter().enumerate() {
        match gene_paths.get(g.as_str()) {
            Some(p) => {
                keep.push(k);
                rows.push(p.clone());
            }
            None => report.genes_without_pathway.push(g.clone()),
        }
    }
    if keep.is_empty() {
        return Err(Error::invalid("no gene in the data belongs to any network pathway"));
    }
    if !report.genes_without_pathway.is_empty() {
        log::warn!(
            "{} genes belong to no retained pathway and are excluded",
            report.genes_without_pathway.len()
        );
    }
    let mask = LoadingMask::new(rows, net.len())?;
    for (j, c) in mask.column_counts().iter().enumerate() {
        if *c == 0 {
            report.pathways_without_genes.push(net.pathway_ids[j].clone());
            log::warn!("pathway '{}' has no genes in the data", net.pathway_ids[j]);
        }
    }
    Ok((data.select_genes(&keep), mask, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::data::SampleInfo;

    #[test]
    fn mask_rows_and_counts() {
        let m = LoadingMask::new(vec![vec![1, 0], vec![1]], 2).unwrap();
        assert_eq!(m.row(0), &[0, 1]);
        assert!(m.contains(1, 1) && !m.contains(1, 0));
        assert_eq!(m.column_counts(), vec![1, 2]);
        assert_eq!(LoadingMask::from_dense(&m.dense()).unwrap(), m);
        assert!(LoadingMask::new(vec![vec![]], 2).is_err());
    }

    #[test]
    fn align_drops_orphans() {
        let cat = GeneSetCollection::from_pairs([("A", vec!["g1", "g2"]), ("B", vec!["g2", "g3"]), ("C", vec!["g9"])])
            .unwrap();
        let net = PathwayNetwork::empty(vec!["B".into(), "A".into()]);
        let samples = vec![SampleInfo {
            sample_id: "s".into(),
            experiment_id: "e".into(),
            replicate_index: 0,
            is_control: true,
        }];
        let genes: Vec<String> = ["g1", "g2", "g3", "g4"].iter().map(|s| s.to_string()).collect();
        let ds = ExpressionDataset::from_centered(genes, DMatrix::zeros(4, 1), samples).unwrap();
        let (ds2, mask, rep) = align(&ds, &cat, &net).unwrap();
        assert_eq!(ds2.gene_ids, vec!["g1", "g2", "g3"]);
        assert_eq!(mask.row(0), &[1]);
        assert_eq!(mask.row(1), &[0, 1]);
        assert_eq!(mask.row(2), &[0]);
        assert_eq!(rep.genes_without_pathway, vec!["g4"]);
        assert_eq!(rep.pathways_not_in_network, vec!["C"]);
    }
}
