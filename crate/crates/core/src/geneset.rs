//! Gene-set collections and the GMT reader/writer.
//!
//! A GMT line is `set_id <TAB> description <TAB> gene_1 <TAB> gene_2 ...`.
//! Gene identifiers are matched as exact, case-sensitive strings; alias
//! resolution is left to whoever prepares the files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneSet {
    pub id: String,
    pub description: String,
    pub genes: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GeneSetCollection {
    sets: Vec<GeneSet>,
}

impl GeneSetCollection {
    /// Builds a collection, rejecting duplicate ids, empty sets and empty gene ids.
    pub fn new(sets: Vec<GeneSet>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &sets {
            if s.id.is_empty() {
                return Err(Error::invalid("gene set with empty id"));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate gene set id '{}'", s.id)));
            }
            if s.genes.is_empty() {
                return Err(Error::invalid(format!("gene set '{}' is empty", s.id)));
            }
            if s.genes.iter().any(|g| g.is_empty()) {
                return Err(Error::invalid(format!("gene set '{}' has an empty gene id", s.id)));
            }
        }
        Ok(Self { sets })
    }

    /// Convenience constructor from `(id, genes)` pairs.
    pub fn from_pairs<I, S, G>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, G)>,
        S: Into<String>,
        G: IntoIterator,
        G::Item: Into<String>,
    {
        let sets = pairs
            .into_iter()
            .map(|(id, genes)| GeneSet {
                id: id.into(),
                description: String::new(),
                genes: genes.into_iter().map(Into::into).collect(),
            })
            .collect();
        Self::new(sets)
    }

    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sets.iter().map(|s| s.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&GeneSet> {
        self.sets.iter().find(|s| s.id == id)
    }

    /// Union of all member genes, sorted.
    pub fn all_genes(&self) -> BTreeSet<String> {
        self.sets.iter().flat_map(|s| s.genes.iter().cloned()).collect()
    }

    /// gene -> indices of the sets containing it.
    pub fn memberships(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, s) in self.sets.iter().enumerate() {
            for g in &s.genes {
                out.entry(g.clone()).or_default().push(j);
            }
        }
        out
    }

    /// Keeps only the sets whose ids appear in `ids`, in the order of `ids`.
    pub fn restrict_to(&self, ids: &[String]) -> Result<Self> {
        let sets = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown gene set '{id}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sets)
    }

    pub fn read_gmt(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_gmt(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_gmt<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut sets = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: source.to_string(),
                line: lineno,
                msg,
            };
            let mut fields = trimmed.split('\t');
            let id = fields.next().unwrap_or("").trim();
            if id.is_empty() {
                return Err(err("missing gene set id".into()));
            }
            let description = fields
                .next()
                .ok_or_else(|| err(format!("gene set '{id}' has no description field")))?
                .to_string();
            let genes: BTreeSet<String> = fields
                .map(str::trim)
                .filter(|g| !g.is_empty())
                .map(String::from)
                .collect();
            if genes.is_empty() {
                return Err(err(format!("gene set '{id}' has no genes")));
            }
            if !seen.insert(id.to_string()) {
                return Err(err(format!("duplicate gene set id '{id}'")));
            }
            sets.push(GeneSet {
                id: id.to_string(),
                description,
                genes,
            });
        }
        Self::new(sets)
    }

    pub fn write_gmt<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sets {
            write!(w, "{}\t{}", s.id, s.description)?;
            for g in &s.genes {
                write!(w, "\t{g}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
