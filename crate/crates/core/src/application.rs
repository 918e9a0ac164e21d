//! Housing data ingestion and the covariate specifications used for the
//! air-pollution application.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnRole, Dataset};
use crate::error::{DmlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    /// Header name in the CSV file.
    pub source: String,
    /// Canonical name in the dataset.
    pub name: String,
    /// Multiplier applied to every value on ingestion.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub expected_rows: Option<usize>,
    pub outcome: String,
    pub treatment: String,
    pub columns: Vec<ColumnSchema>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Reads a comma-separated file with a header row into a dataset whose
/// roles come from the schema; undeclared columns are ignored.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let mut index = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let pos = header.iter().position(|h| h.trim() == c.source).ok_or_else(|| DmlError::Ingestion {
            line: 1,
            message: format!("missing column '{}'", c.source),
        })?;
        index.push(pos);
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); schema.columns.len()];
    let mut last_line = 1;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 2, |p| p.line() as usize);
        last_line = line;
        if record.len() != header.len() {
            return Err(DmlError::Ingestion {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for ((c, &pos), out) in schema.columns.iter().zip(&index).zip(values.iter_mut()) {
            let raw = record[pos].trim();
            let v: f64 = raw.parse().map_err(|_| DmlError::Ingestion {
                line,
                message: format!("column '{}': cannot parse '{raw}' as a number", c.source),
            })?;
            out.push(c.scale.map_or(v, |s| v * s));
        }
    }
    let rows = values.first().map_or(0, Vec::len);
    if let Some(expected) = schema.expected_rows {
        if rows != expected {
            return Err(DmlError::Ingestion {
                line: last_line,
                message: format!("expected {expected} data rows, found {rows}"),
            });
        }
    }
    let columns = schema
        .columns
        .iter()
        .zip(values)
        .map(|(c, v)| {
            let role = if c.name == schema.outcome {
                ColumnRole::Outcome
            } else if c.name == schema.treatment {
                ColumnRole::Treatment
            } else {
                ColumnRole::Covariate
            };
            Column::new(c.name.clone(), v, role)
        })
        .collect();
    Dataset::new(columns)
}

/// Ingests the housing file with the schema stored next to it.
pub fn load_housing(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Dataset> {
    ingest_csv(csv_path, &Schema::from_json_file(schema_path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeName {
    Hr,
    Raw,
    Flex,
}

impl RecipeName {
    pub fn parse(s: &str) -> Result<RecipeName> {
        match s.to_ascii_lowercase().as_str() {
            "hr" | "h&r" => Ok(RecipeName::Hr),
            "raw" => Ok(RecipeName::Raw),
            "flex" => Ok(RecipeName::Flex),
            other => Err(DmlError::config(format!(
                "unknown recipe '{other}'; expected hr, raw or flex"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecipeName::Hr => "hr",
            RecipeName::Raw => "raw",
            RecipeName::Flex => "flex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformFn {
    Identity,
    Log,
    Square,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub sources: Vec<String>,
    pub function: TransformFn,
    pub output: String,
    pub role: ColumnRole,
}

impl Transform {
    fn new(source: &str, function: TransformFn, output: impl Into<String>, role: ColumnRole) -> Self {
        Transform {
            sources: vec![source.to_string()],
            function,
            output: output.into(),
            role,
        }
    }

    fn covariate(source: &str, function: TransformFn) -> Self {
        let output = match function {
            TransformFn::Identity => source.to_string(),
            TransformFn::Log => format!("log_{source}"),
            TransformFn::Square => format!("{source}_sq"),
            TransformFn::Interaction => unreachable!(),
        };
        Transform::new(source, function, output, ColumnRole::Covariate)
    }

    fn interaction(a: &str, b: &str) -> Self {
        Transform {
            sources: vec![a.to_string(), b.to_string()],
            function: TransformFn::Interaction,
            output: format!("{a}_x_{b}"),
            role: ColumnRole::Covariate,
        }
    }
}

/// Untransformed covariates, in the order of the hedonic specification.
pub const RAW_COVARIATES: [&str; 12] = [
    "rm", "age", "dis", "rad", "tax", "ptratio", "b_trans", "lstat", "crim", "zn", "indus", "chas",
];

/// Binary covariates, never squared.
const BINARY: [&str; 1] = ["chas"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRecipe {
    pub name: RecipeName,
    pub transforms: Vec<Transform>,
}

impl SpecRecipe {
    pub fn new(name: RecipeName) -> SpecRecipe {
        use TransformFn::*;
        let mut transforms = vec![
            Transform::new("medv", Log, "log_medv", ColumnRole::Outcome),
            Transform::new("nox", Square, "nox_sq", ColumnRole::Treatment),
        ];
        match name {
            RecipeName::Hr => {
                let forms = [Square, Identity, Log, Log, Identity, Identity, Identity, Log, Identity, Identity, Identity, Identity];
                for (src, f) in RAW_COVARIATES.iter().zip(forms) {
                    transforms.push(Transform::covariate(src, f));
                }
            }
            RecipeName::Raw | RecipeName::Flex => {
                for src in RAW_COVARIATES {
                    transforms.push(Transform::covariate(src, Identity));
                }
                if name == RecipeName::Flex {
                    for src in RAW_COVARIATES.iter().filter(|s| !BINARY.contains(s)) {
                        transforms.push(Transform::covariate(src, Square));
                    }
                    for (i, a) in RAW_COVARIATES.iter().enumerate() {
                        for b in &RAW_COVARIATES[i + 1..] {
                            transforms.push(Transform::interaction(a, b));
                        }
                    }
                }
            }
        }
        SpecRecipe { name, transforms }
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.transforms.iter().map(|t| t.output.as_str()).collect()
    }
}

fn source<'a>(d: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    d.column(name)
        .map(|c| c.values.as_slice())
        .ok_or_else(|| DmlError::Role(format!("recipe source column '{name}' is missing")))
}

/// Builds the outcome, treatment and covariate columns of a recipe. A
/// dataset that already is the recipe's output is returned unchanged.
pub fn apply_recipe(d: &Dataset, recipe: &SpecRecipe) -> Result<Dataset> {
    let current: Vec<&str> = d.columns().iter().map(|c| c.name.as_str()).collect();
    if current == recipe.output_names() {
        return Ok(d.clone());
    }
    let mut columns = Vec::with_capacity(recipe.transforms.len());
    for t in &recipe.transforms {
        let a = source(d, &t.sources[0])?;
        let values: Vec<f64> = match t.function {
            TransformFn::Identity => a.to_vec(),
            TransformFn::Square => a.iter().map(|v| v * v).collect(),
            TransformFn::Log => a
                .iter()
                .enumerate()
                .map(|(row, &v)| {
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(DmlError::Domain {
                            column: t.sources[0].clone(),
                            row,
                            value: v,
                        })
                    }
                })
                .collect::<Result<_>>()?,
            TransformFn::Interaction => {
                let b = source(d, &t.sources[1])?;
                a.iter().zip(b).map(|(x, y)| x * y).collect()
            }
        };
        columns.push(Column::new(t.output.clone(), values, t.role));
    }
    Dataset::new(columns)
}

/// Mean of a named column.
pub fn column_mean(d: &Dataset, name: &str) -> Result<f64> {
    let v = source(d, name)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> Schema {
        Schema {
            expected_rows: None,
            outcome: "medv".into(),
            treatment: "nox".into(),
            columns: ["MEDV", "NOX", "RM"]
                .iter()
                .map(|s| ColumnSchema {
                    source: s.to_string(),
                    name: s.to_lowercase(),
                    scale: (*s == "MEDV").then_some(1000.0),
                })
                .collect(),
        }
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingests_with_scaling_and_roles() {
        let f = write("NOX,RM,MEDV,EXTRA\n0.5,6,24,x\n0.6,7,21.5,y\n");
        let d = ingest_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.outcome(), &[24000.0, 21500.0]);
        assert_eq!(d.treatment(), &[0.5, 0.6]);
        assert_eq!(d.covariate_names(), vec!["rm"]);
    }

    #[test]
    fn reports_line_of_bad_cell_and_short_row() {
        let f = write("MEDV,NOX,RM\n1,2,3\n1,abc,3\n");
        match ingest_csv(f.path(), &schema()).unwrap_err() {
            DmlError::Ingestion { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            e => panic!("{e}"),
        }
        let f = write("MEDV,NOX,RM\n1,2,3\n1,2\n");
        assert!(matches!(ingest_csv(f.path(), &schema()), Err(DmlError::Ingestion { line: 3, .. })));
        let f = write("MEDV,RM\n1,2\n");
        assert!(matches!(ingest_csv(f.path(), &schema()), Err(DmlError::Ingestion { line: 1, .. })));
    }

    #[test]
    fn row_count_is_checked() {
        let f = write("MEDV,NOX,RM\n1,2,3\n");
        let mut s = schema();
        s.expected_rows = Some(506);
        assert!(matches!(ingest_csv(f.path(), &s), Err(DmlError::Ingestion { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let err = ingest_csv("/nonexistent/housing.csv", &schema()).unwrap_err();
        assert!(err.is_io(), "{err}");
    }

    #[test]
    fn recipe_sizes() {
        let count = |r| {
            SpecRecipe::new(r)
                .transforms
                .iter()
                .filter(|t| t.role == ColumnRole::Covariate)
                .count()
        };
        assert_eq!(count(RecipeName::Hr), 12);
        assert_eq!(count(RecipeName::Raw), 12);
        assert_eq!(count(RecipeName::Flex), 12 + 11 + 66);
        let flex = SpecRecipe::new(RecipeName::Flex);
        let mut names = flex.output_names();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), flex.transforms.len());
    }

    #[test]
    fn log_of_non_positive_names_the_row() {
        let d = Dataset::new(vec![
            Column::new("medv", vec![1.0, 0.0], ColumnRole::Outcome),
            Column::new("nox", vec![1.0, 2.0], ColumnRole::Treatment),
        ])
        .unwrap();
        let r = SpecRecipe {
            name: RecipeName::Raw,
            transforms: SpecRecipe::new(RecipeName::Raw).transforms[..2].to_vec(),
        };
        match apply_recipe(&d, &r).unwrap_err() {
            DmlError::Domain { column, row, .. } => assert_eq!((column.as_str(), row), ("medv", 1)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn recipe_names_parse() {
        assert_eq!(RecipeName::parse("HR").unwrap(), RecipeName::Hr);
        assert_eq!(RecipeName::parse("flex").unwrap().as_str(), "flex");
        assert!(RecipeName::parse("cubic").is_err());
    }
}
