//! Datasets: delimited-text and edge-list loaders plus the embedded karate club network.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Continuous,
    Binary,
    Network,
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Binary => "binary",
            Self::Network => "network",
        })
    }
}

/// A data matrix tagged with how it should be modeled.
///
/// Network datasets hold a symmetric 0/1 adjacency matrix with an empty diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DataKind,
    pub values: DMatrix<f64>,
    pub row_ids: Option<Vec<String>>,
    pub column_ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(kind: DataKind, values: DMatrix<f64>) -> Result<Self, DataError> {
        let ds = Self { kind, values, row_ids: None, column_ids: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_column_ids(mut self, ids: Vec<String>) -> Self {
        self.column_ids = Some(ids);
        self
    }

    pub fn with_row_ids(mut self, ids: Vec<String>) -> Self {
        self.row_ids = Some(ids);
        self
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let v = &self.values;
        if v.nrows() == 0 || v.ncols() == 0 {
            return Err(DataError::Empty);
        }
        let invalid =
            |row: usize, column: usize, reason: String| DataError::Invalid { row: row + 1, column: column + 1, reason };
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                let x = v[(i, j)];
                match self.kind {
                    DataKind::Continuous if !x.is_finite() => {
                        return Err(invalid(i, j, format!("non-finite value {x}")))
                    }
                    DataKind::Binary | DataKind::Network if x != 0.0 && x != 1.0 => {
                        return Err(invalid(i, j, format!("value {x} is not 0 or 1")))
                    }
                    _ => {}
                }
            }
        }
        if self.kind == DataKind::Network {
            if v.nrows() != v.ncols() {
                return Err(invalid(0, 0, format!("adjacency matrix is {}x{}", v.nrows(), v.ncols())));
            }
            for i in 0..v.nrows() {
                if v[(i, i)] != 0.0 {
                    return Err(invalid(i, i, "self-loop".into()));
                }
                for j in (i + 1)..v.ncols() {
                    if v[(i, j)] != v[(j, i)] {
                        return Err(invalid(
                            i,
                            j,
                            "adjacency matrix is not symmetric (directed networks are not supported)".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let ds: Self = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Field delimiter; detected among comma, tab and semicolon when `None`.
    pub delimiter: Option<u8>,
    /// Whether the first line is a header; detected from non-numeric cells when `None`.
    pub header: Option<bool>,
}

fn detect_delimiter(line: &str) -> u8 {
    [b',', b'\t', b';'].into_iter().max_by_key(|&d| (line.bytes().filter(|&b| b == d).count(), d == b',')).unwrap()
}

/// Parses delimited text into a dataset of the given kind.
pub fn parse_matrix(text: &str, kind: DataKind, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let first = text.lines().find(|l| !l.trim().is_empty()).ok_or(DataError::Empty)?;
    let delimiter = opts.delimiter.unwrap_or_else(|| detect_delimiter(first));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let header = opts.header.unwrap_or_else(|| records[0].iter().any(|c| c.parse::<f64>().is_err()));
    let (header_row, body) = if header { (Some(&records[0]), &records[1..]) } else { (None, &records[..]) };
    if body.is_empty() {
        return Err(DataError::Empty);
    }
    // an empty first header cell marks a leading column of row names
    let row_names = header_row.is_some_and(|h| h.get(0) == Some(""));
    let skip = usize::from(row_names);
    let width = body[0].len();
    let line_offset = usize::from(header);

    let mut values = Vec::with_capacity(body.len() * width);
    let mut row_ids = Vec::new();
    for (r, rec) in body.iter().enumerate() {
        if rec.len() != width {
            return Err(DataError::Ragged { row: r + 1 + line_offset, expected: width, found: rec.len() });
        }
        if row_names {
            row_ids.push(rec[0].to_string());
        }
        for (c, cell) in rec.iter().enumerate().skip(skip) {
            let v = cell.parse::<f64>().map_err(|_| DataError::NotNumeric {
                row: r + 1 + line_offset,
                column: c + 1,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
    }
    let cols = width - skip;
    let matrix = DMatrix::from_row_slice(body.len(), cols, &values);
    let mut ds = Dataset { kind, values: matrix, row_ids: None, column_ids: None };
    if let Some(h) = header_row {
        ds.column_ids = Some(h.iter().skip(skip).map(str::to_string).collect());
    }
    if row_names {
        ds.row_ids = Some(row_ids);
    }
    ds.validate().map_err(|e| match e {
        DataError::Invalid { row, column, reason } => {
            DataError::Invalid { row: row + line_offset, column: column + skip, reason }
        }
        other => other,
    })?;
    Ok(ds)
}

pub fn load_matrix(path: impl AsRef<Path>, kind: DataKind, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_matrix(&text, kind, opts)
}

/// Parses whitespace-separated 1-based node pairs into a symmetric adjacency matrix.
///
/// Blank lines and lines starting with `#` are skipped. Without `n`, the
/// largest index seen sets the node count.
pub fn parse_edgelist(text: &str, n: Option<usize>) -> Result<Dataset, DataError> {
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(DataError::EdgeList {
                line: line_no,
                reason: format!("expected two node indices, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| DataError::EdgeList { line: line_no, reason: format!("{s:?} is not a node index") })
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        if a == 0 || b == 0 {
            return Err(DataError::EdgeList { line: line_no, reason: "node indices are 1-based".into() });
        }
        if a == b {
            return Err(DataError::EdgeList { line: line_no, reason: format!("self-loop on node {a}") });
        }
        edges.push((line_no, a, b));
    }
    let size = match n {
        Some(n) => n,
        None => edges.iter().map(|&(_, a, b)| a.max(b)).max().ok_or(DataError::Empty)?,
    };
    let mut adj = DMatrix::zeros(size, size);
    for (line, a, b) in edges {
        if a > size || b > size {
            return Err(DataError::EdgeList { line, reason: format!("node index out of range 1..={size}") });
        }
        adj[(a - 1, b - 1)] = 1.0;
        adj[(b - 1, a - 1)] = 1.0;
    }
    Dataset::new(DataKind::Network, adj)
}

pub fn load_edgelist(path: impl AsRef<Path>, n: Option<usize>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_edgelist(&text, n)
}

/// Zachary's karate club friendship network, 1-based endpoints.
const KARATE_EDGES: [(u8, u8); 78] = [
    (1, 2),
    (1, 3),
    (1, 4),
    (1, 5),
    (1, 6),
    (1, 7),
    (1, 8),
    (1, 9),
    (1, 11),
    (1, 12),
    (1, 13),
    (1, 14),
    (1, 18),
    (1, 20),
    (1, 22),
    (1, 32),
    (2, 3),
    (2, 4),
    (2, 8),
    (2, 14),
    (2, 18),
    (2, 20),
    (2, 22),
    (2, 31),
    (3, 4),
    (3, 8),
    (3, 9),
    (3, 10),
    (3, 14),
    (3, 28),
    (3, 29),
    (3, 33),
    (4, 8),
    (4, 13),
    (4, 14),
    (5, 7),
    (5, 11),
    (6, 7),
    (6, 11),
    (6, 17),
    (7, 17),
    (9, 31),
    (9, 33),
    (9, 34),
    (10, 34),
    (14, 34),
    (15, 33),
    (15, 34),
    (16, 33),
    (16, 34),
    (19, 33),
    (19, 34),
    (20, 34),
    (21, 33),
    (21, 34),
    (23, 33),
    (23, 34),
    (24, 26),
    (24, 28),
    (24, 30),
    (24, 33),
    (24, 34),
    (25, 26),
    (25, 28),
    (25, 32),
    (26, 32),
    (27, 30),
    (27, 34),
    (28, 34),
    (29, 32),
    (29, 34),
    (30, 33),
    (30, 34),
    (31, 33),
    (31, 34),
    (32, 33),
    (32, 34),
    (33, 34),
];

/// The 34-node, 78-edge karate club network.
pub fn builtin_karate() -> Dataset {
    let mut adj = DMatrix::zeros(34, 34);
    for &(a, b) in &KARATE_EDGES {
        let (a, b) = (usize::from(a) - 1, usize::from(b) - 1);
        adj[(a, b)] = 1.0;
        adj[(b, a)] = 1.0;
    }
    Dataset::new(DataKind::Network, adj).expect("embedded network is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: DataKind,
    pub n: usize,
    pub m: usize,
    /// Per-column means (detection rates for binary data, degree/(n-1) for networks).
    pub column_means: Vec<f64>,
    pub column_ids: Option<Vec<String>>,
    pub edges: Option<usize>,
    pub density: Option<f64>,
}

pub fn summarize(dataset: &Dataset) -> Summary {
    let v = &dataset.values;
    let (n, m) = v.shape();
    let (column_means, edges, density) = match dataset.kind {
        DataKind::Network => {
            let degree_frac = (0..m).map(|j| v.column(j).sum() / (n.max(2) - 1) as f64).collect();
            let edges = (v.sum() / 2.0).round() as usize;
            let dyads = n * (n - 1) / 2;
            let density = if dyads > 0 { edges as f64 / dyads as f64 } else { 0.0 };
            (degree_frac, Some(edges), Some(density))
        }
        _ => ((0..m).map(|j| v.column(j).sum() / n as f64).collect(), None, None),
    };
    Summary { kind: dataset.kind, n, m, column_means, column_ids: dataset.column_ids.clone(), edges, density }
}
