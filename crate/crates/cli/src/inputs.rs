//! File loading and small parsers shared by the subcommands.

use std::fmt;
use std::path::Path;

use gromovlab::{validate, MmSpace, PairwiseCoefficients, SpaceInput};
use ndarray::{Array1, Array2};
use serde::Deserialize;

#[derive(Debug)]
pub enum CliError {
    Core(gromovlab::Error),
    Input(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) => write!(f, "InvalidInput: {m}"),
            CliError::Io(m) => write!(f, "IoError: {m}"),
        }
    }
}

impl From<gromovlab::Error> for CliError {
    fn from(e: gromovlab::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Input(_) => "InvalidInput",
            CliError::Io(_) => "IoError",
        }
    }

    /// 1 invalid input, 2 solver non-convergence, 3 internal error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                "NonConvergence" | "NumericalOverflow" => 2,
                _ => 1,
            },
            CliError::Input(_) => 1,
            CliError::Io(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn load_space(path: &Path, strict: bool) -> CliResult<MmSpace> {
    let text = read_file(path)?;
    let input: SpaceInput = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let raw = input.into_raw()?;
    Ok(validate(raw, strict)?)
}

pub fn load_coeffs(path: &Path) -> CliResult<PairwiseCoefficients> {
    let text = read_file(path)?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let n = rows.len();
    let mut c = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::Input(format!(
                "coefficient row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            c[[i, j]] = v;
        }
    }
    Ok(PairwiseCoefficients::new(c)?)
}

/// Barycenter supports carry only a distance matrix; weights in the file are
/// the quantity being optimized and are ignored (with a warning upstream).
#[derive(Debug, Deserialize)]
pub struct SupportInput {
    #[allow(dead_code)]
    #[serde(default)]
    pub label: Option<String>,
    pub distance_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

pub fn load_support(path: &Path) -> CliResult<(Array2<f64>, bool)> {
    let text = read_file(path)?;
    let input: SupportInput = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let n = input.distance_matrix.len();
    let mut dist = Array2::zeros((n, n));
    for (i, row) in input.distance_matrix.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::Input(format!(
                "support row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            dist[[i, j]] = v;
        }
    }
    Ok((dist, input.weights.is_some()))
}

pub fn parse_f64_list(text: &str, what: &str) -> CliResult<Array1<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{what}: cannot parse {part:?} as a number")))?;
        out.push(v);
    }
    Ok(Array1::from_vec(out))
}

pub fn parse_usize_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{what}: cannot parse {part:?} as an index")))?;
        out.push(v);
    }
    Ok(out)
}
