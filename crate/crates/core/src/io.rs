//! MatrixMarket files and JSON system manifests.
//!
//! A manifest names each matrix either by a path (relative to the manifest)
//! or as an inline row-major array:
//!
//! ```json
//! {
//!   "metadata": {"name": "scalar", "n": 1, "m": 1, "p": 1, "nu": 1},
//!   "A": [[-1.0]],
//!   "Nx": ["N1.mtx"],
//!   "B": [[1.0]],
//!   "C": [[1.0]],
//!   "D": [[0.0]]
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::operators::StochasticSystem;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(origin: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        message: message.into(),
    }
}

/// Parses MatrixMarket `array` or `coordinate` data with `real` or
/// `integer` entries and `general` or `symmetric` layout.
pub fn parse_matrix_market(text: &str, origin: &str) -> Result<Matrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(origin, "empty file"))?
        .to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(origin, format!("bad header line: {header}")));
    }
    let coordinate = match fields[2] {
        "array" => false,
        "coordinate" => true,
        f => return Err(parse_err(origin, format!("unsupported format {f}"))),
    };
    if !matches!(fields[3], "real" | "integer" | "double") {
        return Err(parse_err(origin, format!("unsupported field {}", fields[3])));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        s => return Err(parse_err(origin, format!("unsupported symmetry {s}"))),
    };

    let mut data = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size_line = data
        .next()
        .ok_or_else(|| parse_err(origin, "missing size line"))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(origin, format!("bad size line: {size_line}"))))
        .collect::<Result<_>>()?;
    let num = |tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| parse_err(origin, format!("bad number: {tok}")))
    };

    if coordinate {
        if sizes.len() != 3 {
            return Err(parse_err(origin, "coordinate size line needs rows cols nnz"));
        }
        let (rows, cols, nnz) = (sizes[0], sizes[1], sizes[2]);
        let mut m = Matrix::zeros(rows, cols);
        let mut count = 0;
        for line in data {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(origin, format!("bad entry line: {line}")));
            }
            let i: usize = toks[0]
                .parse()
                .map_err(|_| parse_err(origin, format!("bad index: {line}")))?;
            let j: usize = toks[1]
                .parse()
                .map_err(|_| parse_err(origin, format!("bad index: {line}")))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(parse_err(origin, format!("index out of range: {line}")));
            }
            let v = num(toks[2])?;
            m[(i - 1, j - 1)] += v;
            if symmetric && i != j {
                m[(j - 1, i - 1)] += v;
            }
            count += 1;
        }
        if count != nnz {
            return Err(parse_err(origin, format!("expected {nnz} entries, found {count}")));
        }
        Ok(m)
    } else {
        if sizes.len() != 2 {
            return Err(parse_err(origin, "array size line needs rows cols"));
        }
        let (rows, cols) = (sizes[0], sizes[1]);
        let values: Vec<f64> = data
            .flat_map(str::split_whitespace)
            .map(num)
            .collect::<Result<_>>()?;
        let mut m = Matrix::zeros(rows, cols);
        if symmetric {
            if rows != cols {
                return Err(parse_err(origin, "symmetric array must be square"));
            }
            let expected = rows * (rows + 1) / 2;
            if values.len() != expected {
                return Err(parse_err(
                    origin,
                    format!("expected {expected} values, found {}", values.len()),
                ));
            }
            let mut it = values.into_iter();
            for j in 0..cols {
                for i in j..rows {
                    let v = it.next().unwrap();
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        } else {
            if values.len() != rows * cols {
                return Err(parse_err(
                    origin,
                    format!("expected {} values, found {}", rows * cols, values.len()),
                ));
            }
            m = Matrix::from_column_slice(rows, cols, &values);
        }
        Ok(m)
    }
}

/// Dense `array general` MatrixMarket text, column-major, 17 significant
/// digits so values round-trip exactly.
pub fn format_matrix_market(m: &Matrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for v in m.iter() {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

pub fn read_matrix_market(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matrix_market(&text, &path.display().to_string())
}

pub fn write_matrix_market(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, format_matrix_market(m)).map_err(|e| io_err(path, e))
}

/// A matrix given by file path or inline rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(String),
    Inline(Vec<Vec<f64>>),
}

impl MatrixSource {
    pub fn inline(m: &Matrix) -> Self {
        MatrixSource::Inline(
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
        )
    }

    fn load(&self, base: &Path, what: &str) -> Result<Matrix> {
        match self {
            MatrixSource::Path(p) => read_matrix_market(&base.join(p)),
            MatrixSource::Inline(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(parse_err(what, "ragged inline matrix"));
                }
                Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemManifest {
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(rename = "A")]
    pub a: MatrixSource,
    #[serde(rename = "Nx", default)]
    pub nx: Vec<MatrixSource>,
    #[serde(rename = "Nu", default, skip_serializing_if = "Vec::is_empty")]
    pub nu: Vec<MatrixSource>,
    #[serde(rename = "B")]
    pub b: MatrixSource,
    #[serde(rename = "C")]
    pub c: MatrixSource,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<MatrixSource>,
}

impl SystemManifest {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_err(origin, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Inline manifest for `sys`.
    pub fn inline(sys: &StochasticSystem, name: &str) -> Self {
        SystemManifest {
            metadata: Metadata::for_system(sys, name, ""),
            a: MatrixSource::inline(&sys.a),
            nx: sys.nx.iter().map(MatrixSource::inline).collect(),
            nu: if sys.has_input_noise() {
                sys.nu.iter().map(MatrixSource::inline).collect()
            } else {
                vec![]
            },
            b: MatrixSource::inline(&sys.b),
            c: MatrixSource::inline(&sys.c),
            d: Some(MatrixSource::inline(&sys.d)),
        }
    }

    /// Builds the system; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<StochasticSystem> {
        let a = self.a.load(base, "A")?;
        let nx = self
            .nx
            .iter()
            .map(|s| s.load(base, "Nx"))
            .collect::<Result<Vec<_>>>()?;
        let nu = self
            .nu
            .iter()
            .map(|s| s.load(base, "Nu"))
            .collect::<Result<Vec<_>>>()?;
        let b = self.b.load(base, "B")?;
        let c = self.c.load(base, "C")?;
        let d = match &self.d {
            Some(s) => s.load(base, "D")?,
            None => Matrix::zeros(c.nrows(), b.ncols()),
        };
        let sys = StochasticSystem::new(a, nx, nu, b, c, d)?;
        let meta = &self.metadata;
        let checks = [
            ("n", meta.n, sys.n()),
            ("m", meta.m, sys.m()),
            ("p", meta.p, sys.p()),
            ("nu", meta.nu, sys.noise_terms()),
        ];
        for (what, declared, actual) in checks {
            if let Some(v) = declared {
                if v != actual {
                    return Err(Error::DimensionMismatch {
                        context: "manifest metadata",
                        expected: format!("{what} = {v}"),
                        got: format!("{what} = {actual}"),
                    });
                }
            }
        }
        Ok(sys)
    }
}

impl Metadata {
    pub fn for_system(sys: &StochasticSystem, name: &str, provenance: &str) -> Self {
        Metadata {
            name: name.to_string(),
            n: Some(sys.n()),
            m: Some(sys.m()),
            p: Some(sys.p()),
            nu: Some(sys.noise_terms()),
            provenance: provenance.to_string(),
        }
    }
}

/// Reads a manifest and builds its system.
pub fn load_system(manifest: &Path) -> Result<StochasticSystem> {
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    SystemManifest::read(manifest)?.load(&base)
}

/// Writes every matrix of `sys` as MatrixMarket into `dir` together with
/// `manifest.json`, and returns the manifest path.
pub fn write_system(dir: &Path, sys: &StochasticSystem, name: &str, provenance: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let put = |file: String, m: &Matrix| -> Result<MatrixSource> {
        write_matrix_market(&dir.join(&file), m)?;
        Ok(MatrixSource::Path(file))
    };
    let a = put("A.mtx".into(), &sys.a)?;
    let nx = sys
        .nx
        .iter()
        .enumerate()
        .map(|(j, m)| put(format!("Nx{}.mtx", j + 1), m))
        .collect::<Result<Vec<_>>>()?;
    let nu = if sys.has_input_noise() {
        sys.nu
            .iter()
            .enumerate()
            .map(|(j, m)| put(format!("Nu{}.mtx", j + 1), m))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![]
    };
    let b = put("B.mtx".into(), &sys.b)?;
    let c = put("C.mtx".into(), &sys.c)?;
    let d = put("D.mtx".into(), &sys.d)?;
    let manifest = SystemManifest {
        metadata: Metadata::for_system(sys, name, provenance),
        a,
        nx,
        nu,
        b,
        c,
        d: Some(d),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}
