//! File formats and run configuration.

mod ply;
mod report;
mod table;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ply::{parse_ply, read_ply, write_ply, PlyCloud, PlyEncoding};
pub use report::{round_sig, to_canonical_json, PointRecord, Report, CSV_COLUMNS, SCHEMA_VERSION};
pub use table::{read_csv_cloud, write_csv_cloud};

use crate::methods::Method;
use crate::surfaces::AnalyticSurface;
use crate::types::{EstimatorConfig, PointCloud, Validate};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("unsupported format `{format}` at line {line}")]
    UnsupportedFormat { line: usize, format: String },
    #[error("unsupported property {name} of type {ty} at line {line}")]
    UnsupportedProperty { line: usize, name: String, ty: String },
    #[error("payload truncated at byte {offset}")]
    Truncated { offset: u64 },
    #[error("bad record at line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("unknown file extension for {0} (expected .ply or .csv)")]
    UnknownExtension(PathBuf),
    #[error("inconsistent data: {0}")]
    Inconsistent(&'static str),
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Reads `.ply` or `.csv`.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let ext = extension(path);
    if !matches!(ext.as_deref(), Some("ply" | "csv")) {
        return Err(IoError::UnknownExtension(path.to_path_buf()));
    }
    let file = BufReader::new(File::open(path).map_err(file_error(path))?);
    match ext.as_deref() {
        Some("ply") => Ok(read_ply(file)?.cloud),
        _ => read_csv_cloud(file),
    }
}

/// Writes binary PLY or CSV by extension, atomically.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud, flag: Option<(&str, &[bool])>) -> Result<(), IoError> {
    match extension(path).as_deref() {
        Some("ply") => write_atomic(path, |w| write_ply(w, cloud, PlyEncoding::BinaryLittleEndian, flag)),
        Some("csv") => write_atomic(path, |w| write_csv_cloud(w, cloud)),
        _ => Err(IoError::UnknownExtension(path.to_path_buf())),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), IoError>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<(), IoError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(file_error(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    /// CSV for a `.csv` path, JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        match extension(path).as_deref() {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub fn write_report(report: &Report, format: ReportFormat, path: &Path) -> Result<(), IoError> {
    match format {
        ReportFormat::Json => {
            let text = report.to_json()?;
            write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
        }
        ReportFormat::Csv => write_atomic(path, |w| report.write_csv(w)),
    }
}

/// Everything one command needs; estimator parameters sit under `estimator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Synthetic surface such as `sphere:1.0`, used when there is no input.
    pub surface: Option<String>,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub format: ReportFormat,
    pub estimator: EstimatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Manifold,
            input: None,
            output: None,
            surface: None,
            seed: 0,
            threads: None,
            format: ReportFormat::Json,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Config(m));
        for (name, p) in [("input", &self.input), ("output", &self.output)] {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty() || p.file_name().is_none()) {
                return bad(format!("{name} path is not a file path"));
            }
        }
        if let Some(p) = &self.input {
            if !matches!(extension(p).as_deref(), Some("ply" | "csv")) {
                return Err(IoError::UnknownExtension(p.clone()));
            }
        }
        if self.input.is_some() && self.surface.is_some() {
            return bad("give either an input file or a surface, not both".into());
        }
        if let Some(s) = &self.surface {
            if let Err(e) = s.parse::<AnalyticSurface>() {
                return bad(e.to_string());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(v) = self.estimator.violations().first() {
            return bad(format!("{v:?}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vector3;

    #[test]
    fn dispatch_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::from_positions(vec![Vector3::new(1.0, 2.0, 3.0)]);
        for name in ["a.ply", "b.csv", "C.PLY"] {
            let path = dir.path().join(name);
            write_point_cloud(&path, &cloud, None).unwrap();
            assert_eq!(read_point_cloud(&path).unwrap(), cloud);
        }
        let txt = dir.path().join("c.txt");
        assert!(matches!(write_point_cloud(&txt, &cloud, None), Err(IoError::UnknownExtension(_))));
        assert!(matches!(read_point_cloud(&txt), Err(IoError::UnknownExtension(_))));
        let missing = dir.path().join("missing.ply");
        assert!(matches!(read_point_cloud(&missing), Err(IoError::File { .. })));
    }

    #[test]
    fn unwritable_report_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no/such/dir/report.json");
        assert!(write_atomic(&path, |_| Ok(())).is_err());
    }

    #[test]
    fn run_config_checks() {
        assert!(RunConfig::default().validate().is_ok());
        let with = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(|c| c.surface = Some("sphere:1".into())).is_ok());
        assert!(with(|c| c.surface = Some("blob".into())).is_err());
        assert!(with(|c| c.threads = Some(0)).is_err());
        assert!(with(|c| c.input = Some("points.xyz".into())).is_err());
        assert!(with(|c| c.output = Some("".into())).is_err());
        assert!(with(|c| c.estimator.k_neighbors = 2).is_err());
        assert!(with(|c| {
            c.input = Some("a.ply".into());
            c.surface = Some("plane".into());
        })
        .is_err());
        let json = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), RunConfig::default());
        assert_eq!(ReportFormat::from_path(Path::new("r.CSV")), ReportFormat::Csv);
    }
}
