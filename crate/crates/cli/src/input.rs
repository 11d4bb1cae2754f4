use std::collections::HashMap;
use std::path::{Path, PathBuf};

use haarlab::filtration::MeasureValue;
use haarlab::marttools::{MultiplierSymbol, Weight};
use haarlab::twoweight::MeasurePair;
use haarlab::{Filtration, HaarError, LeafFunction, Scalar, TreeFunction};

#[derive(Debug)]
pub enum CliError {
    FileNotFound(PathBuf),
    MissingInput(&'static str),
    Usage(String),
    Io(std::io::Error),
    Core(HaarError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::FileNotFound(p) => write!(f, "file not found: {}", p.display()),
            CliError::MissingInput(flag) => write!(f, "this command needs {flag}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<HaarError> for CliError {
    fn from(e: HaarError) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::FileNotFound(path.to_path_buf()),
        _ => CliError::Io(e),
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(CliError::Io)
}

pub fn tree<S: Scalar>(path: Option<&Path>) -> Result<Filtration<S>, CliError> {
    let path = path.ok_or(CliError::MissingInput("--tree"))?;
    Ok(Filtration::from_json(&read(path)?)?)
}

pub fn weight<S: Scalar>(f: &Filtration<S>, path: Option<&Path>) -> Result<Weight<S>, CliError> {
    match path {
        Some(p) => Ok(Weight::from_json(f, &read(p)?)?),
        None => Ok(Weight::constant(f, S::one())?),
    }
}

pub fn sigma<S: Scalar>(f: &Filtration<S>, path: &Path) -> Result<MultiplierSymbol<S>, CliError> {
    Ok(MultiplierSymbol::from_json(f, &read(path)?)?)
}

fn named<S: Scalar>(path: &Path) -> Result<HashMap<String, S>, CliError> {
    let raw: HashMap<String, MeasureValue> = serde_json::from_str(&read(path)?).map_err(HaarError::from)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| Ok((k, v.to_scalar::<S>()?)))
        .collect::<Result<_, HaarError>>()?)
}

/// Leaf densities; unlisted leaves are zero.
pub fn density<S: Scalar>(f: &Filtration<S>, path: &Path) -> Result<LeafFunction<S>, CliError> {
    Ok(LeafFunction::from_named(f, &named(path)?, Some(S::zero()))?)
}

pub fn pair<S: Scalar>(f: &Filtration<S>, mu1: Option<&Path>, mu2: Option<&Path>) -> Result<MeasurePair<S>, CliError> {
    let mu1 = density(f, mu1.ok_or(CliError::MissingInput("--mu1"))?)?;
    let mu2 = density(f, mu2.ok_or(CliError::MissingInput("--mu2"))?)?;
    Ok(MeasurePair::new(f, mu1, mu2)?)
}

pub fn tree_function<S: Scalar>(f: &Filtration<S>, path: &Path) -> Result<TreeFunction<S>, CliError> {
    Ok(TreeFunction::from_named(f, &named(path)?)?)
}

/// Comma-separated list of scalars.
pub fn list<S: Scalar>(text: &str) -> Result<Vec<S>, CliError> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| Ok(S::parse(t)?))
        .collect()
}
