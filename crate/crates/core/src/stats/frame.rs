//! A small columnar table with nullable numeric and categorical columns.

use std::collections::BTreeMap;

use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_null(&self, i: usize) -> bool {
        match self {
            Column::Numeric(v) => v[i].is_none_or(|x| !x.is_finite()),
            Column::Categorical(v) => v[i].is_none(),
        }
    }

    /// Row `i` as a category label; numbers are rendered with `Display`.
    pub fn label(&self, i: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[i].map(|x| x.to_string()),
            Column::Categorical(v) => v[i].clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    n_rows: usize,
    columns: BTreeMap<String, Column>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn insert(&mut self, name: &str, column: Column) -> Result<(), StatsError> {
        if self.columns.is_empty() {
            self.n_rows = column.len();
        } else if column.len() != self.n_rows {
            return Err(StatsError::ColumnLength {
                column: name.into(),
                expected: self.n_rows,
                got: column.len(),
            });
        }
        self.columns.insert(name.to_string(), column);
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self, StatsError> {
        self.insert(name, Column::Numeric(values))?;
        Ok(self)
    }

    /// Numeric column with no nulls.
    pub fn with_values(self, name: &str, values: &[f64]) -> Result<Self, StatsError> {
        self.with_numeric(name, values.iter().map(|&v| Some(v)).collect())
    }

    pub fn with_categorical(mut self, name: &str, values: Vec<Option<String>>) -> Result<Self, StatsError> {
        self.insert(name, Column::Categorical(values))?;
        Ok(self)
    }

    pub fn with_labels<S: ToString>(self, name: &str, values: &[S]) -> Result<Self, StatsError> {
        self.with_categorical(name, values.iter().map(|v| Some(v.to_string())).collect())
    }

    pub fn column(&self, name: &str) -> Result<&Column, StatsError> {
        self.columns
            .get(name)
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>], StatsError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(StatsError::ColumnType {
                column: name.into(),
                expected: "numeric",
            }),
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Rows where every listed column is non-null.
    pub fn complete_rows(&self, names: &[&str]) -> Result<Vec<usize>, StatsError> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((0..self.n_rows)
            .filter(|&i| cols.iter().all(|c| !c.is_null(i)))
            .collect())
    }

    /// Keeps only `rows`, in the given order.
    pub fn take(&self, rows: &[usize]) -> Frame {
        let columns = self
            .columns
            .iter()
            .map(|(k, c)| {
                let c = match c {
                    Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
                };
                (k.clone(), c)
            })
            .collect();
        Frame {
            n_rows: rows.len(),
            columns,
        }
    }
}
