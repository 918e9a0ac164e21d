//! Column-oriented datasets with explicit column roles, and seeded fold splits.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Outcome,
    Treatment,
    Instrument,
    Covariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    pub role: ColumnRole,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>, role: ColumnRole) -> Self {
        Column {
            name: name.into(),
            values,
            role,
        }
    }
}

/// An immutable numeric table. Exactly one outcome and one treatment column,
/// at most one instrument, any number of covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map(|c| c.values.len()).unwrap_or(0);
        for c in &columns {
            if c.values.len() != n_rows {
                return Err(DmlError::Shape {
                    context: "dataset column length",
                    expected: n_rows,
                    found: c.values.len(),
                });
            }
            if let Some((row, &value)) = c.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(DmlError::NonFinite {
                    column: c.name.clone(),
                    row,
                    value,
                });
            }
        }
        let count = |role| columns.iter().filter(|c| c.role == role).count();
        if count(ColumnRole::Outcome) != 1 {
            return Err(DmlError::Role(format!(
                "expected exactly one outcome column, found {}",
                count(ColumnRole::Outcome)
            )));
        }
        if count(ColumnRole::Treatment) != 1 {
            return Err(DmlError::Role(format!(
                "expected exactly one treatment column, found {}",
                count(ColumnRole::Treatment)
            )));
        }
        if count(ColumnRole::Instrument) > 1 {
            return Err(DmlError::Role("at most one instrument column is supported".into()));
        }
        let mut names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(DmlError::Role(format!("duplicate column name `{}`", w[0])));
        }
        Ok(Dataset { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn single(&self, role: ColumnRole) -> Option<&Column> {
        self.columns.iter().find(|c| c.role == role)
    }

    pub fn outcome(&self) -> &[f64] {
        &self.single(ColumnRole::Outcome).expect("validated").values
    }

    pub fn treatment(&self) -> &[f64] {
        &self.single(ColumnRole::Treatment).expect("validated").values
    }

    pub fn instrument(&self) -> Option<&[f64]> {
        self.single(ColumnRole::Instrument).map(|c| c.values.as_slice())
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.iter().filter(|c| c.role == ColumnRole::Covariate).count()
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::Covariate)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Row subset in the given order; out-of-range indices are rejected.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&index) = rows.iter().find(|&&i| i >= self.n_rows) {
            return Err(DmlError::RowOutOfRange {
                index,
                n_rows: self.n_rows,
            });
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                values: rows.iter().map(|&i| c.values[i]).collect(),
                role: c.role,
            })
            .collect();
        Ok(Dataset {
            columns,
            n_rows: rows.len(),
        })
    }

    /// Column-stacked matrix of every column whose role is in `roles`, in
    /// declaration order.
    pub fn design_matrix(&self, roles: &[ColumnRole]) -> Result<Array2<f64>> {
        let cols: Vec<&Column> = self.columns.iter().filter(|c| roles.contains(&c.role)).collect();
        if cols.is_empty() {
            return Err(DmlError::Role(format!("no columns match roles {roles:?}")));
        }
        Ok(Array2::from_shape_fn((self.n_rows, cols.len()), |(i, j)| {
            cols[j].values[i]
        }))
    }

    pub fn covariates(&self) -> Result<Array2<f64>> {
        self.design_matrix(&[ColumnRole::Covariate])
    }

    /// Drops every column for which `drop` returns true. Role invariants are
    /// re-checked.
    pub fn without_columns(&self, drop: impl Fn(&Column) -> bool) -> Result<Dataset> {
        Dataset::new(self.columns.iter().filter(|c| !drop(c)).cloned().collect())
    }

    /// Replaces (or appends) a column, re-validating the dataset.
    pub fn with_column(&self, column: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        match columns.iter_mut().find(|c| c.name == column.name) {
            Some(slot) => *slot = column,
            None => columns.push(column),
        }
        Dataset::new(columns)
    }

    /// Reassigns the role of a named column.
    pub fn with_role(&self, name: &str, role: ColumnRole) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        let col = columns
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| DmlError::Role(format!("no column named `{name}`")))?;
        col.role = role;
        Dataset::new(columns)
    }
}

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
}

impl SplitPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn n_rows(&self) -> usize {
        self.assignments.len()
    }

    /// Rows of fold `fold`, ascending.
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Rows outside fold `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Seeded shuffle of `0..n_rows` cut into `k` contiguous chunks; the first
/// `n_rows % k` folds receive one extra row.
pub fn make_split(n_rows: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 || k > n_rows {
        return Err(DmlError::config(format!(
            "fold count K={k} must satisfy 2 <= K <= n_rows={n_rows}"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n_rows / k;
    let extra = n_rows % k;
    let mut assignments = vec![0; n_rows];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            assignments[row] = fold;
        }
        pos += size;
    }
    Ok(SplitPlan {
        k,
        assignments,
        seed,
    })
}
