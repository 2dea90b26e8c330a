//! JSON file formats for datasets and shared helpers for reading and writing
//! JSON documents.
//!
//! Matrices are stored as arrays of rows. Numbers are written in the
//! shortest decimal form that parses back to the same double, so a save
//! followed by a load reproduces every entry bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use msicert_core::{DataSet, Matrix, NoiseBound};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema error at `{field}`: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },
    #[error("{0}: cannot encode as JSON: {1}")]
    Encode(String, serde_json::Error),
}

fn schema(file: &str, field: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Schema {
        file: file.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

/// Row-major nested arrays.
pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses `rows` as an `nrows × ncols` matrix; `field` names the location
/// in error messages. A matrix with zero rows is written as `[]`, so its
/// column count is taken from `ncols`.
pub fn from_rows(
    file: &str,
    field: &str,
    rows: &Rows,
    nrows: usize,
    ncols: usize,
) -> Result<Matrix, IoError> {
    if rows.len() != nrows {
        return Err(schema(file, field, format!("expected {nrows} rows, found {}", rows.len())));
    }
    let mut m = Matrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(schema(
                file,
                format!("{field}[{i}]"),
                format!("expected {ncols} columns, found {}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Reads and decodes a JSON document, reporting the failing field path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&path.display().to_string(), &text)
}

pub fn parse_json<T: DeserializeOwned>(file: &str, text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        schema(file, field, e.into_inner().to_string())
    })
}

pub fn to_json<T: Serialize>(file: &str, value: &T) -> Result<String, IoError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| IoError::Encode(file.to_string(), e))?;
    text.push('\n');
    Ok(text)
}

/// Writes `value` as pretty JSON, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = to_json(&path.display().to_string(), value)?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let io = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    #[serde(rename = "Qd")]
    pub qd: Rows,
    #[serde(rename = "Sd")]
    pub sd: Rows,
    #[serde(rename = "Rd")]
    pub rd: Rows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub generator: String,
}

/// On-disk dataset layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub n: usize,
    pub m: usize,
    pub m_d: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub tau: Vec<f64>,
    #[serde(rename = "X")]
    pub x: Rows,
    #[serde(rename = "U")]
    pub u: Rows,
    #[serde(rename = "Xdot")]
    pub xdot: Rows,
    #[serde(rename = "Bd")]
    pub bd: Rows,
    pub noise: NoiseFile,
    pub meta: DatasetMeta,
}

impl DatasetFile {
    pub fn new(data: &DataSet, noise: &NoiseBound, meta: DatasetMeta) -> Self {
        Self {
            n: data.n(),
            m: data.m(),
            m_d: data.md(),
            samples: data.len(),
            tau: data.tau().to_vec(),
            x: to_rows(data.x()),
            u: to_rows(data.u()),
            xdot: to_rows(data.xdot()),
            bd: to_rows(data.bd()),
            noise: NoiseFile {
                qd: to_rows(noise.qd()),
                sd: to_rows(noise.sd()),
                rd: to_rows(noise.rd()),
            },
            meta,
        }
    }

    /// Validates shapes against the header and builds the core types.
    pub fn decode(&self, file: &str) -> Result<(DataSet, NoiseBound), IoError> {
        let (n, m, md, len) = (self.n, self.m, self.m_d, self.samples);
        if n == 0 || m == 0 || md == 0 {
            return Err(schema(file, "n", "dimensions n, m, m_d must be positive"));
        }
        if self.tau.len() != len {
            return Err(schema(
                file,
                "tau",
                format!("N = {len} but tau has {} entries", self.tau.len()),
            ));
        }
        let cols = |field: &str, rows: &Rows| -> Result<(), IoError> {
            match rows.iter().position(|r| r.len() != len) {
                Some(i) => Err(schema(
                    file,
                    format!("{field}[{i}]"),
                    format!("N = {len} but row has {} columns", rows[i].len()),
                )),
                None => Ok(()),
            }
        };
        cols("X", &self.x)?;
        cols("U", &self.u)?;
        cols("Xdot", &self.xdot)?;
        let x = from_rows(file, "X", &self.x, n, len)?;
        let u = from_rows(file, "U", &self.u, m, len)?;
        let xdot = from_rows(file, "Xdot", &self.xdot, n, len)?;
        let bd = from_rows(file, "Bd", &self.bd, n, md)?;
        let qd = from_rows(file, "noise.Qd", &self.noise.qd, len, len)?;
        let sd = from_rows(file, "noise.Sd", &self.noise.sd, len, md)?;
        let rd = from_rows(file, "noise.Rd", &self.noise.rd, md, md)?;
        let data = DataSet::new(self.tau.clone(), x, u, xdot, bd)
            .map_err(|e| schema(file, "", e.to_string()))?;
        let noise = NoiseBound::new(qd, sd, rd).map_err(|e| schema(file, "noise", e.to_string()))?;
        Ok((data, noise))
    }
}

pub fn save_dataset(
    path: &Path,
    data: &DataSet,
    noise: &NoiseBound,
    meta: DatasetMeta,
) -> Result<(), IoError> {
    write_json(path, &DatasetFile::new(data, noise, meta))
}

pub fn load_dataset(path: &Path) -> Result<(DataSet, NoiseBound, DatasetMeta), IoError> {
    let file: DatasetFile = read_json(path)?;
    let (data, noise) = file.decode(&path.display().to_string())?;
    Ok((data, noise, file.meta))
}

/// Parses a dataset document held in memory.
pub fn parse_dataset(name: &str, text: &str) -> Result<(DataSet, NoiseBound, DatasetMeta), IoError> {
    let file: DatasetFile = parse_json(name, text)?;
    let (data, noise) = file.decode(name)?;
    Ok((data, noise, file.meta))
}
