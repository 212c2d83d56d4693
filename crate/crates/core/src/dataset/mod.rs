//! Typed tabular data shared by every stage of the pipeline.
//!
//! A [`DataFrame`] is an immutable, column-oriented table whose columns are
//! numeric, binary, or categorical. Each row carries a stable `row_id`
//! assigned at construction; subsetting preserves the ids, so pilot and
//! analysis splits always reference the rows of the original frame.

mod csv_io;
mod design;
mod formula;

pub use csv_io::{load_csv, load_csv_reader, write_csv, write_csv_writer};
pub use design::{design_matrix, design_matrix_with_catalog, observed_levels, DesignMatrix, LevelCatalog};
pub use formula::Formula;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

impl std::fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnKind::Numeric => write!(f, "numeric"),
            ColumnKind::Binary => write!(f, "binary"),
            ColumnKind::Categorical => write!(f, "categorical"),
        }
    }
}

/// Name and kind of one column, as used for CSV schemas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSchema {
            name: name.into(),
            kind,
        }
    }
}

/// Column storage. Categorical columns carry their ordered level list;
/// codes index into it.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Binary(Vec<u8>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Binary(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Binary(_) => ColumnKind::Binary,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn binary(name: impl Into<String>, values: Vec<u8>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Binary(values),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, codes: Vec<u32>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Categorical { levels, codes },
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    /// Render the value at `row` as text (CSV form).
    pub fn value_text(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Numeric(v) => crate::numfmt::fmt_float(v[row]),
            ColumnData::Binary(v) => v[row].to_string(),
            ColumnData::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataFrame {
    columns: Vec<Column>,
    row_ids: Vec<usize>,
}

impl DataFrame {
    /// Build a frame from columns, assigning fresh row ids `0..n`.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.data.len());
        let row_ids = (0..n).collect();
        Self::with_row_ids(columns, row_ids)
    }

    /// Build a frame whose rows keep externally supplied ids (used by subsetting).
    pub fn with_row_ids(columns: Vec<Column>, row_ids: Vec<usize>) -> Result<Self> {
        let n = row_ids.len();
        for c in &columns {
            if c.data.len() != n {
                return Err(Error::RaggedRow {
                    row: 0,
                    expected: n,
                    found: c.data.len(),
                });
            }
            if let ColumnData::Binary(v) = &c.data {
                if let Some(bad) = v.iter().find(|&&b| b > 1) {
                    return Err(Error::TypeMismatch {
                        column: c.name.clone(),
                        row: 0,
                        detail: format!("binary column holds {bad}"),
                    });
                }
            }
            if let ColumnData::Categorical { levels, codes } = &c.data {
                let mut seen = std::collections::HashSet::new();
                if !levels.iter().all(|l| seen.insert(l)) {
                    return Err(Error::TypeMismatch {
                        column: c.name.clone(),
                        row: 0,
                        detail: "duplicate categorical levels".to_string(),
                    });
                }
                if codes.iter().any(|&c| c as usize >= levels.len()) {
                    return Err(Error::TypeMismatch {
                        column: c.name.clone(),
                        row: 0,
                        detail: "categorical code out of range".to_string(),
                    });
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::DuplicateTerm(c.name.clone()));
            }
        }
        Ok(DataFrame { columns, row_ids })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns
            .iter()
            .map(|c| ColumnSchema::new(c.name.clone(), c.kind()))
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    /// Numeric view of a numeric or binary column.
    pub fn numeric_values(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok(v.clone()),
            ColumnData::Binary(v) => Ok(v.iter().map(|&b| b as f64).collect()),
            ColumnData::Categorical { .. } => Err(Error::TypeMismatch {
                column: name.to_string(),
                row: 0,
                detail: "expected a numeric or binary column".to_string(),
            }),
        }
    }

    /// Strictly binary column, for treatment and binary outcomes.
    pub fn binary_values(&self, name: &str) -> Result<&[u8]> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Binary(v) => Ok(v),
            _ => Err(Error::NonBinaryTreatment(name.to_string())),
        }
    }

    /// Select rows by position (0-based within this frame), keeping row ids.
    pub fn subset(&self, positions: &[usize]) -> DataFrame {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let data = match &c.data {
                    ColumnData::Numeric(v) => {
                        ColumnData::Numeric(positions.iter().map(|&i| v[i]).collect())
                    }
                    ColumnData::Binary(v) => {
                        ColumnData::Binary(positions.iter().map(|&i| v[i]).collect())
                    }
                    ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: positions.iter().map(|&i| codes[i]).collect(),
                    },
                };
                Column {
                    name: c.name.clone(),
                    data,
                }
            })
            .collect();
        let row_ids = positions.iter().map(|&i| self.row_ids[i]).collect();
        DataFrame { columns, row_ids }
    }

    /// Return a copy with an extra column appended.
    pub fn with_column(&self, column: Column) -> Result<DataFrame> {
        if column.data.len() != self.n_rows() {
            return Err(Error::RaggedRow {
                row: 0,
                expected: self.n_rows(),
                found: column.data.len(),
            });
        }
        let mut columns = self.columns.clone();
        columns.push(column);
        DataFrame::with_row_ids(columns, self.row_ids.clone())
    }
}
