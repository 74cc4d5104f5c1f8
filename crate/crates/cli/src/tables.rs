//! Labelled matrices in CSV form.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

/// A matrix with row and column labels, as stored in `theta_post.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: DMatrix<f64>,
}

impl LabelledMatrix {
    pub fn to_csv(&self, corner: &str) -> String {
        cfacar::sampler::trace::matrix_csv(&self.values, corner, &self.rows, &self.cols)
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().with_context(|| format!("{source}: empty table"))?;
        let cols: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut f = line.split(',');
            rows.push(f.next().unwrap_or_default().to_string());
            let vals: Vec<f64> = f
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("{source}:{}: bad number", i + 2))?;
            if vals.len() != cols.len() {
                bail!(
                    "{source}:{}: expected {} values, found {}",
                    i + 2,
                    cols.len(),
                    vals.len()
                );
            }
            values.extend(vals);
        }
        if rows.is_empty() || cols.is_empty() {
            bail!("{source}: table has no entries");
        }
        let values = DMatrix::from_row_slice(rows.len(), cols.len(), &values);
        Ok(Self { rows, cols, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

pub fn bool_matrix(m: &DMatrix<bool>) -> DMatrix<f64> {
    m.map(|b| if b { 1.0 } else { 0.0 })
}

/// `x,y` pairs under a two-column header.
pub fn pairs_csv(header: &str, pairs: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in pairs {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = LabelledMatrix {
            rows: vec!["p1".into(), "p2".into()],
            cols: vec!["e1".into(), "e2".into(), "e3".into()],
            values: DMatrix::from_row_slice(2, 3, &[0.5, 0.25, 1.0, 0.0, 0.125, 0.75]),
        };
        let back = LabelledMatrix::parse_csv(&m.to_csv("pathway"), "t").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_row_reported() {
        let err = LabelledMatrix::parse_csv("pathway,e1,e2\np1,0.5\n", "t.csv").unwrap_err();
        assert!(err.to_string().contains("t.csv:2"));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(LabelledMatrix::parse_csv("pathway,e1\n", "t").is_err());
    }
}
