//! Run-record ingestion, validation, splitting, scaling, and grouping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV header for labeled run records, in canonical column order.
pub const CSV_HEADER: &str = "O,V,nodes,tile_size,runtime_s";
/// CSV header for unlabeled candidate configurations.
pub const CANDIDATE_CSV_HEADER: &str = "O,V,nodes,tile_size";

/// A runtime parameter configuration without a measured runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub o: u32,
    pub v: u32,
    pub nodes: u32,
    pub tile_size: u32,
}

impl ConfigPoint {
    pub fn features(&self) -> [f64; 4] {
        [
            self.o as f64,
            self.v as f64,
            self.nodes as f64,
            self.tile_size as f64,
        ]
    }
}

/// One experiment: problem size, runtime parameters, and the measured wall
/// time of a single iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub o: u32,
    pub v: u32,
    pub nodes: u32,
    pub tile_size: u32,
    pub runtime_s: f64,
}

impl RunRecord {
    pub fn new(o: u32, v: u32, nodes: u32, tile_size: u32, runtime_s: f64) -> Result<Self> {
        let rec = RunRecord {
            o,
            v,
            nodes,
            tile_size,
            runtime_s,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("O", self.o),
            ("V", self.v),
            ("nodes", self.nodes),
            ("tile_size", self.tile_size),
        ] {
            if value < 1 {
                return Err(Error::invalid(format!("{name} must be ≥ 1")));
            }
        }
        if !self.runtime_s.is_finite() || self.runtime_s <= 0.0 {
            return Err(Error::invalid("runtime_s must be positive and finite"));
        }
        Ok(())
    }

    pub fn config(&self) -> ConfigPoint {
        ConfigPoint {
            o: self.o,
            v: self.v,
            nodes: self.nodes,
            tile_size: self.tile_size,
        }
    }

    pub fn features(&self) -> [f64; 4] {
        self.config().features()
    }
}

/// An ordered, index-addressable collection of run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<RunRecord>,
    pub source_tag: String,
}

impl Dataset {
    pub fn new(records: Vec<RunRecord>, source_tag: impl Into<String>) -> Self {
        Dataset {
            records,
            source_tag: source_tag.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature matrix in raw column order (O, V, nodes, tile_size).
    pub fn features(&self) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.len() * 4);
        for r in &self.records {
            data.extend_from_slice(&r.features());
        }
        FeatureMatrix { n_cols: 4, data }
    }

    pub fn runtimes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.runtime_s).collect()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i]).collect(),
            source_tag: self.source_tag.clone(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.o,
                r.v,
                r.nodes,
                r.tile_size,
                format_seconds(r.runtime_s)
            );
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Decimal seconds with up to 6 fractional digits, trailing zeros trimmed.
pub fn format_seconds(x: f64) -> String {
    let mut s = format!("{x:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::invalid("flat feature buffer not divisible by n_cols"));
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    /// Subset of rows in the given index order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_cols: self.n_cols,
            data,
        }
    }
}

/// Disjoint train/test index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Per-feature standardization parameters fit on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

/// Load a labeled dataset from a strict five-column CSV file. The source
/// tag is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, tag)
}

/// Parse labeled CSV text; exposed for in-memory use.
pub fn parse_csv(text: &str, source_tag: impl Into<String>) -> Result<Dataset> {
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    let mut lines = text.lines();
    check_header(lines.next(), &expected)?;

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2; // 1-based, counting the header line
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::Csv {
                line: line_no,
                column: String::new(),
                message: format!("expected {} columns, found {}", expected.len(), fields.len()),
            });
        }
        let o = parse_count(fields[0], line_no, "O")?;
        let v = parse_count(fields[1], line_no, "V")?;
        let nodes = parse_count(fields[2], line_no, "nodes")?;
        let tile_size = parse_count(fields[3], line_no, "tile_size")?;
        let runtime_s = parse_runtime(fields[4], line_no)?;
        records.push(RunRecord {
            o,
            v,
            nodes,
            tile_size,
            runtime_s,
        });
    }
    Ok(Dataset::new(records, source_tag))
}

/// Load unlabeled candidate configurations from a strict four-column CSV.
pub fn load_candidates_csv(path: impl AsRef<Path>) -> Result<Vec<ConfigPoint>> {
    let text = std::fs::read_to_string(path)?;
    parse_candidates_csv(&text)
}

pub fn parse_candidates_csv(text: &str) -> Result<Vec<ConfigPoint>> {
    let expected: Vec<&str> = CANDIDATE_CSV_HEADER.split(',').collect();
    let mut lines = text.lines();
    check_header(lines.next(), &expected)?;

    let mut points = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::Csv {
                line: line_no,
                column: String::new(),
                message: format!("expected {} columns, found {}", expected.len(), fields.len()),
            });
        }
        points.push(ConfigPoint {
            o: parse_count(fields[0], line_no, "O")?,
            v: parse_count(fields[1], line_no, "V")?,
            nodes: parse_count(fields[2], line_no, "nodes")?,
            tile_size: parse_count(fields[3], line_no, "tile_size")?,
        });
    }
    Ok(points)
}

fn check_header(line: Option<&str>, expected: &[&str]) -> Result<()> {
    let header = line.ok_or_else(|| Error::Csv {
        line: 1,
        column: String::new(),
        message: "empty file, missing header".into(),
    })?;
    let fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if fields != expected {
        return Err(Error::Csv {
            line: 1,
            column: String::new(),
            message: format!(
                "bad header `{header}`, expected `{}`",
                expected.join(",")
            ),
        });
    }
    Ok(())
}

fn parse_count(field: &str, line: usize, column: &str) -> Result<u32> {
    let value: u32 = field.trim().parse().map_err(|_| Error::Csv {
        line,
        column: column.into(),
        message: format!("`{field}` is not a non-negative integer"),
    })?;
    if value < 1 {
        return Err(Error::Csv {
            line,
            column: column.into(),
            message: format!("{column} must be ≥ 1"),
        });
    }
    Ok(value)
}

fn parse_runtime(field: &str, line: usize) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::Csv {
        line,
        column: "runtime_s".into(),
        message: format!("`{field}` is not a number"),
    })?;
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Csv {
            line,
            column: "runtime_s".into(),
            message: "runtime_s must be positive and finite".into(),
        });
    }
    Ok(value)
}

/// Seeded uniform-shuffle split. Test size is ceiling(n × test_fraction);
/// both index lists are returned sorted.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "dataset must have at least 2 records to split, has {n}"
        )));
    }
    let n_test = ((n as f64) * test_fraction).ceil() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut test_indices: Vec<usize> = indices[..n_test].to_vec();
    let mut train_indices: Vec<usize> = indices[n_test..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(Split {
        train_indices,
        test_indices,
    })
}

/// Fit per-column standardization (population std). Constant columns are
/// flagged and later mapped to 0.
pub fn fit_scaler(x: &FeatureMatrix) -> Result<Scaler> {
    if x.is_empty() {
        return Err(Error::invalid("cannot fit a scaler on an empty matrix"));
    }
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    let mut constant = vec![false; d];
    for j in 0..d {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            means[j] = first;
            stds[j] = 1.0; // unused for constant columns
            constant[j] = true;
            continue;
        }
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n;
        means[j] = mean;
        stds[j] = var.sqrt();
    }
    Ok(Scaler {
        means,
        stds,
        constant,
    })
}

pub fn apply_scaler(scaler: &Scaler, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.n_cols() != scaler.means.len() {
        return Err(Error::DimensionMismatch {
            expected: scaler.means.len(),
            got: x.n_cols(),
        });
    }
    let d = x.n_cols();
    let mut data = Vec::with_capacity(x.n_rows() * d);
    for row in x.rows() {
        for j in 0..d {
            if scaler.constant[j] {
                data.push(0.0);
            } else {
                data.push((row[j] - scaler.means[j]) / scaler.stds[j]);
            }
        }
    }
    FeatureMatrix::from_flat(d, data)
}

/// Inverse of [`apply_scaler`]; constant columns recover their stored mean.
pub fn invert_scaler(scaler: &Scaler, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.n_cols() != scaler.means.len() {
        return Err(Error::DimensionMismatch {
            expected: scaler.means.len(),
            got: x.n_cols(),
        });
    }
    let d = x.n_cols();
    let mut data = Vec::with_capacity(x.n_rows() * d);
    for row in x.rows() {
        for j in 0..d {
            if scaler.constant[j] {
                data.push(scaler.means[j]);
            } else {
                data.push(row[j] * scaler.stds[j] + scaler.means[j]);
            }
        }
    }
    FeatureMatrix::from_flat(d, data)
}

/// Group record indices by exact (O, V) problem size. Every index appears
/// exactly once; map iteration order is sorted by key.
pub fn group_by_problem(dataset: &Dataset) -> BTreeMap<(u32, u32), Vec<usize>> {
    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        groups.entry((r.o, r.v)).or_default().push(i);
    }
    groups
}
