//! Design-matrix construction with dummy coding.
//!
//! Numeric and binary terms contribute one column each. A categorical term
//! with L levels contributes L-1 indicator columns against the first level
//! as reference. Fitting code records the levels it actually saw in a
//! [`LevelCatalog`]; prediction builds against that catalog so a level never
//! seen at fit time is a hard `UnseenLevel` error rather than a silent zero.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{ColumnData, DataFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Matrix,
    pub column_labels: Vec<String>,
    pub intercept: bool,
}

/// Ordered `(term, levels)` pairs for the categorical terms of a fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelCatalog {
    entries: Vec<(String, Vec<String>)>,
}

impl LevelCatalog {
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Self {
        LevelCatalog { entries }
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }

    pub fn levels(&self, term: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(t, _)| t == term)
            .map(|(_, l)| l.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Collect the levels of each categorical term actually present in `df`,
/// in schema order restricted to observed values.
pub fn observed_levels(df: &DataFrame, terms: &[String]) -> Result<LevelCatalog> {
    let mut entries = Vec::new();
    for term in terms {
        let col = df.column(term)?;
        if let ColumnData::Categorical { levels, codes } = &col.data {
            let mut seen = vec![false; levels.len()];
            for &c in codes {
                seen[c as usize] = true;
            }
            let observed: Vec<String> = levels
                .iter()
                .zip(&seen)
                .filter(|(_, &s)| s)
                .map(|(l, _)| l.clone())
                .collect();
            entries.push((term.clone(), observed));
        }
    }
    Ok(LevelCatalog::new(entries))
}

/// Design matrix against the frame's own schema levels.
pub fn design_matrix(df: &DataFrame, terms: &[String], intercept: bool) -> Result<DesignMatrix> {
    let mut entries = Vec::new();
    for term in terms {
        let col = df.column(term)?;
        if let ColumnData::Categorical { levels, .. } = &col.data {
            entries.push((term.clone(), levels.clone()));
        }
    }
    build(df, terms, intercept, &LevelCatalog::new(entries))
}

/// Design matrix whose categorical encoding follows a fit-time catalog.
pub fn design_matrix_with_catalog(
    df: &DataFrame,
    terms: &[String],
    intercept: bool,
    catalog: &LevelCatalog,
) -> Result<DesignMatrix> {
    build(df, terms, intercept, catalog)
}

fn build(
    df: &DataFrame,
    terms: &[String],
    intercept: bool,
    catalog: &LevelCatalog,
) -> Result<DesignMatrix> {
    let n = df.n_rows();

    enum Encoded<'a> {
        Single(Vec<f64>),
        Dummies {
            levels: &'a [String],
            codes: Vec<u32>,
        },
    }

    let mut encoded = Vec::new();
    let mut labels = Vec::new();
    if intercept {
        labels.push("(Intercept)".to_string());
    }

    for term in terms {
        let col = df.column(term)?;
        match (&col.data, catalog.levels(term)) {
            (ColumnData::Categorical { levels, codes }, Some(cat_levels)) => {
                // Re-map this frame's codes onto the catalog's level order.
                let mut remap = Vec::with_capacity(levels.len());
                for l in levels {
                    remap.push(cat_levels.iter().position(|cl| cl == l));
                }
                let mut mapped = Vec::with_capacity(n);
                for &c in codes {
                    match remap[c as usize] {
                        Some(idx) => mapped.push(idx as u32),
                        None => {
                            return Err(Error::UnseenLevel {
                                term: term.clone(),
                                value: levels[c as usize].clone(),
                            })
                        }
                    }
                }
                for level in &cat_levels[1..] {
                    labels.push(format!("{term}={level}"));
                }
                encoded.push(Encoded::Dummies {
                    levels: cat_levels,
                    codes: mapped,
                });
            }
            (ColumnData::Categorical { .. }, None) => {
                return Err(Error::TypeMismatch {
                    column: term.clone(),
                    row: 0,
                    detail: "column is categorical but was not at fit time".to_string(),
                });
            }
            (ColumnData::Numeric(v), None) => {
                labels.push(term.clone());
                encoded.push(Encoded::Single(v.clone()));
            }
            (ColumnData::Binary(v), None) => {
                labels.push(term.clone());
                encoded.push(Encoded::Single(v.iter().map(|&b| b as f64).collect()));
            }
            (_, Some(_)) => {
                return Err(Error::TypeMismatch {
                    column: term.clone(),
                    row: 0,
                    detail: "column was categorical at fit time but is not now".to_string(),
                });
            }
        }
    }

    let p = labels.len();
    let mut m = Matrix::zeros(n, p);
    for i in 0..n {
        let mut j = 0;
        if intercept {
            m.set(i, 0, 1.0);
            j = 1;
        }
        for enc in &encoded {
            match enc {
                Encoded::Single(v) => {
                    m.set(i, j, v[i]);
                    j += 1;
                }
                Encoded::Dummies { levels, codes } => {
                    let idx = codes[i] as usize;
                    if idx > 0 {
                        m.set(i, j + idx - 1, 1.0);
                    }
                    j += levels.len() - 1;
                }
            }
        }
    }

    Ok(DesignMatrix {
        values: m,
        column_labels: labels,
        intercept,
    })
}
