//! Typed ingestion of hybrid tabular data and the rank-based transforms
//! used by the dependence machinery.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MspnError, Result};

/// Statistical type of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StatType {
    Continuous,
    #[serde(rename = "discrete")]
    DiscreteNumeric,
    Categorical { arity: usize },
}

impl StatType {
    pub fn is_categorical(self) -> bool {
        matches!(self, StatType::Categorical { .. })
    }

    /// True for types whose leaves report probability masses rather than
    /// densities.
    pub fn is_discrete(self) -> bool {
        !matches!(self, StatType::Continuous)
    }
}

/// Column type tag as it appears in schema files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Continuous,
    Discrete,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub column_type: ColumnType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// Ordered column declarations. Categorical vocabularies may be left
/// undeclared, in which case [`load_dataset`] freezes them in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Schema { columns };
        schema.check()?;
        Ok(schema)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| MspnError::Schema(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(MspnError::Schema("schema declares no columns".into()));
        }
        let mut seen = HashMap::new();
        for (i, col) in self.columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(MspnError::Schema(format!("column {i} has an empty name")));
            }
            if seen.insert(col.name.as_str(), i).is_some() {
                return Err(MspnError::Schema(format!("duplicate column name `{}`", col.name)));
            }
            match (&col.column_type, &col.categories) {
                (ColumnType::Categorical, Some(cats)) => {
                    if cats.len() < 2 {
                        return Err(MspnError::Schema(format!(
                            "categorical column `{}` needs at least 2 categories",
                            col.name
                        )));
                    }
                    let mut names = std::collections::HashSet::new();
                    for c in cats {
                        if !names.insert(c.as_str()) {
                            return Err(MspnError::Schema(format!(
                                "duplicate category `{c}` in column `{}`",
                                col.name
                            )));
                        }
                    }
                }
                (ColumnType::Categorical, None) => {}
                (_, Some(_)) => {
                    return Err(MspnError::Schema(format!(
                        "column `{}` declares categories but is not categorical",
                        col.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn name(&self, var: usize) -> &str {
        &self.columns[var].name
    }

    /// Whether every categorical column has a frozen vocabulary.
    pub fn is_resolved(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.column_type != ColumnType::Categorical || c.categories.is_some())
    }

    /// The statistical type of a column. Panics if a categorical vocabulary
    /// is still unresolved.
    pub fn stat_type(&self, var: usize) -> StatType {
        let col = &self.columns[var];
        match col.column_type {
            ColumnType::Continuous => StatType::Continuous,
            ColumnType::Discrete => StatType::DiscreteNumeric,
            ColumnType::Categorical => StatType::Categorical {
                arity: col
                    .categories
                    .as_ref()
                    .expect("categorical vocabulary not resolved")
                    .len(),
            },
        }
    }

    pub fn stat_types(&self) -> Vec<StatType> {
        (0..self.len()).map(|i| self.stat_type(i)).collect()
    }

    /// Parses one textual cell. Unknown categories are rejected unless
    /// `allow_unseen`, in which case they map to the out-of-vocabulary index
    /// `arity`.
    pub fn parse_cell(&self, var: usize, text: &str, allow_unseen: bool) -> std::result::Result<f64, String> {
        let text = text.trim();
        if text.is_empty() {
            return Err("missing value".into());
        }
        let col = &self.columns[var];
        match col.column_type {
            ColumnType::Continuous => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| format!("`{text}` is not a number"))?;
                if !v.is_finite() {
                    return Err(format!("`{text}` is not finite"));
                }
                Ok(v)
            }
            ColumnType::Discrete => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| format!("`{text}` is not a number"))?;
                if !v.is_finite() || v.fract() != 0.0 {
                    return Err(format!("`{text}` is not an integer"));
                }
                Ok(v)
            }
            ColumnType::Categorical => {
                let cats = col
                    .categories
                    .as_ref()
                    .ok_or_else(|| "categorical vocabulary not resolved".to_string())?;
                match cats.iter().position(|c| c == text) {
                    Some(idx) => Ok(idx as f64),
                    None if allow_unseen => Ok(cats.len() as f64),
                    None => Err(format!("unknown category `{text}`")),
                }
            }
        }
    }

    /// Renders a value of a column back to text.
    pub fn format_value(&self, var: usize, value: f64) -> String {
        let col = &self.columns[var];
        match col.column_type {
            ColumnType::Continuous => format!("{value}"),
            ColumnType::Discrete => format!("{}", value as i64),
            ColumnType::Categorical => col
                .categories
                .as_ref()
                .and_then(|c| c.get(value as usize))
                .cloned()
                .unwrap_or_else(|| "<unseen>".to_string()),
        }
    }
}

/// An immutable, fully typed M x N sample matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from resolved schema and column vectors, checking
    /// every cell against its column type.
    pub fn from_columns(schema: Schema, columns: Vec<Vec<f64>>) -> Result<Self> {
        schema.check()?;
        if !schema.is_resolved() {
            return Err(MspnError::Schema(
                "categorical vocabularies must be resolved before building a dataset".into(),
            ));
        }
        if columns.len() != schema.len() {
            return Err(MspnError::Dim {
                expected: schema.len(),
                found: columns.len(),
            });
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(MspnError::EmptyInput("dataset has no rows"));
        }
        for (var, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(MspnError::Dim {
                    expected: rows,
                    found: col.len(),
                });
            }
            let ty = schema.stat_type(var);
            for (row, &v) in col.iter().enumerate() {
                let ok = match ty {
                    StatType::Continuous => v.is_finite(),
                    StatType::DiscreteNumeric => v.is_finite() && v.fract() == 0.0,
                    StatType::Categorical { arity } => {
                        v >= 0.0 && v.fract() == 0.0 && (v as usize) < arity
                    }
                };
                if !ok {
                    return Err(MspnError::Ingest {
                        row: row + 1,
                        column: schema.name(var).to_string(),
                        message: format!("value {v} outside the domain of {ty:?}"),
                    });
                }
            }
        }
        Ok(Dataset { schema, columns })
    }

    pub fn from_rows(schema: Schema, rows: &[Vec<f64>]) -> Result<Self> {
        let n = schema.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for row in rows {
            if row.len() != n {
                return Err(MspnError::Dim {
                    expected: n,
                    found: row.len(),
                });
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::from_columns(schema, columns)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, var: usize) -> &[f64] {
        &self.columns[var]
    }

    pub fn value(&self, row: usize, var: usize) -> f64 {
        self.columns[var][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn stat_type(&self, var: usize) -> StatType {
        self.schema.stat_type(var)
    }

    /// Copy of a subset of rows (all variables kept).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Dataset {
            schema: self.schema.clone(),
            columns,
        }
    }
}

/// Reads a CSV file into a dataset, freezing undeclared categorical
/// vocabularies in first-seen order.
pub fn load_dataset(csv_path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(csv_path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.check()?;
    let (mut resolved, records) = read_cells(reader, schema)?;

    for (var, col) in resolved.columns.iter_mut().enumerate() {
        if col.column_type == ColumnType::Categorical && col.categories.is_none() {
            let mut vocab: Vec<String> = Vec::new();
            for rec in &records {
                let cell = rec[var].trim();
                if !cell.is_empty() && !vocab.iter().any(|c| c == cell) {
                    vocab.push(cell.to_string());
                }
            }
            if vocab.len() < 2 {
                return Err(MspnError::Schema(format!(
                    "categorical column `{}` has fewer than 2 distinct values; declare its categories",
                    col.name
                )));
            }
            col.categories = Some(vocab);
        }
    }

    let rows = parse_records(&resolved, &records, false)?;
    Dataset::from_rows(resolved, &rows)
}

/// Reads CSV rows against an already resolved schema. Unknown categories
/// map to the out-of-vocabulary index when `allow_unseen` is set.
pub fn read_records(csv_path: impl AsRef<Path>, schema: &Schema, allow_unseen: bool) -> Result<Vec<Vec<f64>>> {
    if !schema.is_resolved() {
        return Err(MspnError::Schema("schema has unresolved categorical vocabularies".into()));
    }
    let file = std::fs::File::open(csv_path)?;
    let (_, records) = read_cells(file, schema)?;
    parse_records(schema, &records, allow_unseen)
}

fn read_cells<R: std::io::Read>(reader: R, schema: &Schema) -> Result<(Schema, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MspnError::Schema(format!("cannot read CSV header: {e}")))?
        .clone();

    let header_names: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut positions = Vec::with_capacity(schema.len());
    for col in &schema.columns {
        let pos = header_names
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| MspnError::Schema(format!("column `{}` missing from CSV header", col.name)))?;
        positions.push(pos);
    }
    if header_names.len() != schema.len() {
        let extra: Vec<&str> = header_names
            .iter()
            .filter(|h| schema.index_of(h).is_none())
            .copied()
            .collect();
        return Err(MspnError::Schema(format!(
            "CSV header has columns not in the schema: {extra:?}"
        )));
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MspnError::Ingest {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        let mut cells = Vec::with_capacity(schema.len());
        for (var, &pos) in positions.iter().enumerate() {
            match rec.get(pos) {
                Some(cell) if !cell.trim().is_empty() => cells.push(cell.to_string()),
                _ => {
                    return Err(MspnError::Ingest {
                        row: i + 1,
                        column: schema.name(var).to_string(),
                        message: "missing value".into(),
                    })
                }
            }
        }
        records.push(cells);
    }
    if records.is_empty() {
        return Err(MspnError::EmptyInput("CSV has no data rows"));
    }
    Ok((schema.clone(), records))
}

fn parse_records(schema: &Schema, records: &[Vec<String>], allow_unseen: bool) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.iter()
                .enumerate()
                .map(|(var, cell)| {
                    schema
                        .parse_cell(var, cell, allow_unseen)
                        .map_err(|message| MspnError::Ingest {
                            row: i + 1,
                            column: schema.name(var).to_string(),
                            message,
                        })
                })
                .collect()
        })
        .collect()
}

/// Writes the dataset as CSV with a header row; categories by name.
pub fn write_csv<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let to_io = |e: csv::Error| MspnError::Io(std::io::Error::other(e));
    let schema = dataset.schema();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.columns.iter().map(|c| c.name.as_str())).map_err(to_io)?;
    for r in 0..dataset.n_rows() {
        w.write_record((0..dataset.n_vars()).map(|v| schema.format_value(v, dataset.value(r, v))))
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical copula of a column: entry m is the fraction of samples that
/// are `<=` sample m. Tied values share the maximal rank.
pub fn copula_transform(column: &[f64]) -> Result<Vec<f64>> {
    let m = column.len();
    if m == 0 {
        return Err(MspnError::EmptyInput("copula of an empty column"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));

    let mut out = vec![0.0; m];
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && column[order[end]] == column[order[start]] {
            end += 1;
        }
        let value = end as f64 / m as f64;
        for &idx in &order[start..end] {
            out[idx] = value;
        }
        start = end;
    }
    Ok(out)
}

/// One-hot encoding of category indices, returned row-major (M rows of
/// `arity` entries).
pub fn one_hot(column: &[f64], arity: usize) -> Result<Vec<Vec<f64>>> {
    column
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 || v as usize >= arity {
                return Err(MspnError::Domain(format!(
                    "category index {v} outside 0..{arity}"
                )));
            }
            let mut row = vec![0.0; arity];
            row[v as usize] = 1.0;
            Ok(row)
        })
        .collect()
}
