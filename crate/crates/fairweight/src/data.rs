//! Tabular binary-classification datasets: CSV ingestion, validation, and
//! deterministic train/validation/test splitting.
//!
//! Example indices `0..N-1` assigned here are the canonical identifiers used
//! by every other module (grouping, weighting, evaluation).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    UnparsableNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("examples disagree on feature arity")]
    RaggedFeatures,
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("dataset of {n} rows is too small to split three ways")]
    DatasetTooSmall { n: usize },
    #[error("split fractions must lie in (0,1) and sum to 1, got {train}/{validation}/{test}")]
    BadSplitSpec {
        train: f64,
        validation: f64,
        test: f64,
    },
    #[error("split index sets must partition 0..{n}")]
    BadSplitIndices { n: usize },
}

/// One labelled example. `raw_attributes` keeps the source columns as strings
/// so grouping functions can reference attributes that are not features.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: u8,
    pub raw_attributes: BTreeMap<String, String>,
}

/// Immutable table of examples. Indices `0..len()` identify examples
/// everywhere else in the crate.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_names: Vec<String>,
    label_name: String,
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        feature_names: Vec<String>,
        label_name: String,
    ) -> Result<Self, DataError> {
        if examples.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let arity = feature_names.len();
        for ex in &examples {
            if ex.features.len() != arity {
                return Err(DataError::RaggedFeatures);
            }
            if ex.label > 1 {
                return Err(DataError::BadLabel(ex.label));
            }
        }
        Ok(Self {
            examples,
            feature_names,
            label_name,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn features(&self, index: usize) -> &[f64] {
        &self.examples[index].features
    }

    pub fn label(&self, index: usize) -> u8 {
        self.examples[index].label
    }

    pub fn raw_attribute(&self, index: usize, name: &str) -> Option<&str> {
        self.examples[index]
            .raw_attributes
            .get(name)
            .map(String::as_str)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Serializes back to CSV. Columns are the retained raw attributes (in
    /// key order), then any feature columns absent from the raw attributes,
    /// then the label as 0/1.
    pub fn to_csv_string(&self) -> String {
        let raw_names: Vec<String> = self.examples[0].raw_attributes.keys().cloned().collect();
        let extra_features: Vec<&String> = self
            .feature_names
            .iter()
            .filter(|f| !self.examples[0].raw_attributes.contains_key(*f))
            .collect();

        let mut out = String::new();
        let mut header: Vec<&str> = raw_names.iter().map(String::as_str).collect();
        header.extend(extra_features.iter().map(|f| f.as_str()));
        header.push(&self.label_name);
        out.push_str(&header.join(","));
        out.push('\n');

        for ex in &self.examples {
            let mut cells: Vec<String> = raw_names
                .iter()
                .map(|n| ex.raw_attributes[n].clone())
                .collect();
            for f in &extra_features {
                let j = self.feature_names.iter().position(|n| n == *f).unwrap();
                cells.push(format!("{}", ex.features[j]));
            }
            cells.push(ex.label.to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut file = File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|source| DataError::Io {
                path: path.display().to_string(),
                source,
            })
    }
}

/// Loads a UTF-8 comma-separated file with a header row.
///
/// When `feature_columns` is given, exactly those columns are parsed as
/// numeric features (`UnparsableNumeric` on failure). When it is `None`,
/// every non-label column whose cells all parse as numbers becomes a
/// feature. All non-label columns are retained as raw attributes either way.
/// Label cells equal to `positive_label` map to 1, all others to 0.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    positive_label: &str,
    feature_columns: Option<&[String]>,
) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let feature_names: Vec<String> = match feature_columns {
        Some(cols) => {
            for col in cols {
                if !headers.iter().any(|h| h == col) {
                    return Err(DataError::MissingColumn(col.clone()));
                }
            }
            cols.to_vec()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != label_pos)
            .filter(|(j, _)| rows.iter().all(|r| r[*j].trim().parse::<f64>().is_ok()))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_pos: Vec<usize> = feature_names
        .iter()
        .map(|f| headers.iter().position(|h| h == f).unwrap())
        .collect();

    let mut examples = Vec::with_capacity(rows.len());
    for (row_idx, row) in rows.iter().enumerate() {
        let mut features = Vec::with_capacity(feature_pos.len());
        for (&j, name) in feature_pos.iter().zip(&feature_names) {
            let cell = row[j].trim();
            let value = cell
                .parse::<f64>()
                .map_err(|_| DataError::UnparsableNumeric {
                    row: row_idx,
                    column: name.clone(),
                    value: row[j].clone(),
                })?;
            features.push(value);
        }
        let mut raw_attributes = BTreeMap::new();
        for (j, h) in headers.iter().enumerate() {
            if j != label_pos {
                raw_attributes.insert(h.clone(), row[j].clone());
            }
        }
        let label = u8::from(row[label_pos] == positive_label);
        examples.push(Example {
            features,
            label,
            raw_attributes,
        });
    }

    Dataset::new(examples, feature_names, label_column.to_string())
}

/// Split fractions plus the seed that fixes the shuffle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(
        train_fraction: f64,
        validation_fraction: f64,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        let sum = train_fraction + validation_fraction + test_fraction;
        if !ok(train_fraction) || !ok(validation_fraction) || !ok(test_fraction)
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(DataError::BadSplitSpec {
                train: train_fraction,
                validation: validation_fraction,
                test: test_fraction,
            });
        }
        Ok(Self {
            train_fraction,
            validation_fraction,
            test_fraction,
            seed,
        })
    }
}

/// Disjoint index sets covering the parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    /// Builds a split from explicit index sets, checking that they are
    /// disjoint and cover `0..n` exactly.
    pub fn from_parts(
        mut train: Vec<usize>,
        mut validation: Vec<usize>,
        mut test: Vec<usize>,
        n: usize,
    ) -> Result<Self, DataError> {
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&validation).chain(&test) {
            if i >= n || seen[i] {
                return Err(DataError::BadSplitIndices { n });
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(DataError::BadSplitIndices { n });
        }
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            train,
            validation,
            test,
        })
    }
}

/// Deterministic seeded split. Validation and test receive
/// `floor(fraction * N)` examples each; the remainder goes to train.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<DataSplit, DataError> {
    let n = dataset.len();
    if n < 3 {
        return Err(DataError::DatasetTooSmall { n });
    }
    let n_validation = (spec.validation_fraction * n as f64).floor() as usize;
    let n_test = (spec.test_fraction * n as f64).floor() as usize;
    let n_train = n - n_validation - n_test;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);

    let mut train: Vec<usize> = indices[..n_train].to_vec();
    let mut validation: Vec<usize> = indices[n_train..n_train + n_validation].to_vec();
    let mut test: Vec<usize> = indices[n_train + n_validation..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();

    Ok(DataSplit {
        train,
        validation,
        test,
    })
}
