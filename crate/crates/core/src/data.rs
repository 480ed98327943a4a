//! Column-oriented tables of experimental runs.
//!
//! A [`Dataset`] holds named numeric or categorical columns of equal length.
//! Categorical columns keep their levels in sorted order; each row stores an
//! index into that list.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SvemError};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ColumnData::Numeric(_) => "numeric",
            ColumnData::Categorical { .. } => "categorical",
        }
    }

    /// Cell rendered as text, numbers in shortest round-trip form.
    pub fn cell(&self, row: usize) -> String {
        match self {
            ColumnData::Numeric(v) => format_f64(v[row]),
            ColumnData::Categorical { levels, codes } => levels[codes[row]].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x}")
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn check_len(&self, name: &str, len: usize) -> Result<()> {
        if self.column(name).is_some() {
            return Err(SvemError::Data(format!("duplicate column `{name}`")));
        }
        if !self.columns.is_empty() && len != self.n_rows {
            return Err(SvemError::Data(format!(
                "column `{name}` has {len} rows, table has {}",
                self.n_rows
            )));
        }
        Ok(())
    }

    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        self.check_len(&name, values.len())?;
        self.n_rows = values.len();
        self.columns.push(Column {
            name,
            data: ColumnData::Numeric(values),
        });
        Ok(())
    }

    /// Adds a categorical column; levels are the sorted distinct values.
    pub fn push_categorical<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        values: &[S],
    ) -> Result<()> {
        let levels: Vec<String> = values
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        self.push_categorical_with_levels(name, values, levels)
    }

    /// Adds a categorical column with an explicit level list (which may
    /// contain levels that do not occur in `values`).
    pub fn push_categorical_with_levels<S: AsRef<str>>(
        &mut self,
        name: impl Into<String>,
        values: &[S],
        levels: Vec<String>,
    ) -> Result<()> {
        let name = name.into();
        self.check_len(&name, values.len())?;
        let codes = values
            .iter()
            .map(|v| {
                levels
                    .iter()
                    .position(|l| l == v.as_ref())
                    .ok_or_else(|| SvemError::UnseenLevel {
                        factor: name.clone(),
                        level: v.as_ref().to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        self.n_rows = values.len();
        self.columns.push(Column {
            name,
            data: ColumnData::Categorical { levels, codes },
        });
        Ok(())
    }

    pub fn push_column(&mut self, column: Column) -> Result<()> {
        self.check_len(&column.name, column.data.len())?;
        self.n_rows = column.data.len();
        self.columns.push(column);
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            None => Err(SvemError::MissingColumn(name.to_string())),
            Some(Column {
                data: ColumnData::Numeric(v),
                ..
            }) => Ok(v),
            Some(c) => Err(SvemError::KindMismatch {
                factor: name.to_string(),
                expected: "numeric",
                found: c.data.kind_name(),
            }),
        }
    }

    /// Replaces the values of an existing numeric column.
    pub fn set_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_rows {
            return Err(SvemError::Data(format!(
                "replacement for `{name}` has {} rows, table has {}",
                values.len(),
                self.n_rows
            )));
        }
        match self.columns.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.data = ColumnData::Numeric(values);
                Ok(())
            }
            None => Err(SvemError::MissingColumn(name.to_string())),
        }
    }

    /// New table holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
                    ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: rows.iter().map(|&r| codes[r]).collect(),
                    },
                },
            })
            .collect();
        Dataset {
            columns,
            n_rows: rows.len(),
        }
    }

    /// Reads a CSV table: header row required, a column is numeric unless
    /// any of its tokens fails to parse as a number. Lines starting with `#`
    /// are treated as comments.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                if field.is_empty() {
                    return Err(SvemError::Data(format!(
                        "missing value in column `{}` at data row {}",
                        headers[j],
                        raw[j].len() + 1
                    )));
                }
                raw[j].push(field.to_string());
            }
        }
        let mut ds = Dataset::new();
        for (name, tokens) in headers.into_iter().zip(raw) {
            let parsed: Option<Vec<f64>> = tokens.iter().map(|t| t.parse::<f64>().ok()).collect();
            match parsed {
                Some(values) => ds.push_numeric(name, values)?,
                None => ds.push_categorical(name, &tokens)?,
            }
        }
        Ok(ds)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows {
            wtr.write_record(self.columns.iter().map(|c| c.data.cell(row)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_typing_and_levels() {
        let text = "a,b,c\n1.5,x,3\n2,y,4\n-1e-3,x,5\n";
        let ds = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.numeric("a").unwrap(), &[1.5, 2.0, -0.001]);
        match &ds.column("b").unwrap().data {
            ColumnData::Categorical { levels, codes } => {
                assert_eq!(levels, &["x", "y"]);
                assert_eq!(codes, &[0, 1, 0]);
            }
            _ => panic!("expected categorical"),
        }
    }

    #[test]
    fn one_bad_token_makes_column_categorical() {
        let text = "a\n1\n2\nthree\n";
        let ds = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert!(matches!(ds.column("a").unwrap().data, ColumnData::Categorical { .. }));
    }

    #[test]
    fn missing_value_rejected() {
        let text = "a,b\n1,\n2,3\n";
        assert!(Dataset::from_csv_reader(text.as_bytes()).is_err());
    }

    #[test]
    fn csv_write_read_is_lossless() {
        let mut ds = Dataset::new();
        ds.push_numeric("x", vec![0.1, 1.0 / 3.0, -2.5e-17]).unwrap();
        ds.push_categorical("g", &["b", "a", "b"]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn unequal_lengths_rejected() {
        let mut ds = Dataset::new();
        ds.push_numeric("x", vec![1.0, 2.0]).unwrap();
        assert!(ds.push_numeric("y", vec![1.0]).is_err());
        assert!(ds.push_numeric("x", vec![1.0, 2.0]).is_err());
    }
}
