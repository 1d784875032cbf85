//! One entry point for the three frame/curvature methods.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EstimateError, Result};
use crate::manifold::{self, PointDiagnostics, PointFlag};
use crate::par::{self, Stopwatch};
use crate::spatial::SpatialIndex;
use crate::surfaces::pca_baseline_frame;
use crate::types::{CurvatureInfo, EstimatorConfig, LocalFrame, PointCloud};
use crate::varifold;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Manifold,
    Varifold,
    /// Local PCA frames only; no curvature.
    Pca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Manifold, Method::Varifold, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Manifold => "manifold",
            Method::Varifold => "varifold",
            Method::Pca => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EstimateError::invalid("method", format!("`{s}` is not manifold, varifold or pca")))
    }
}

/// Frames, optional curvatures and per-point flags of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub method: Method,
    /// Every automatic value resolved.
    pub config: EstimatorConfig,
    pub frames: Vec<LocalFrame>,
    pub curvatures: Option<Vec<CurvatureInfo>>,
    pub flags: Vec<Option<PointFlag>>,
    pub diagnostics: Option<Vec<PointDiagnostics>>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl MethodOutput {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|f| f.is_some()).count()
    }
}

/// Runs `method` on every point. Varifold curvatures use manifold frames.
pub fn run_method(cloud: &PointCloud, method: Method, config: &EstimatorConfig) -> Result<MethodOutput> {
    if cloud.is_empty() {
        return Err(EstimateError::EmptyCloud);
    }
    let clock = Stopwatch::start();
    let index = SpatialIndex::build(&cloud.positions)?;
    let mut timings = BTreeMap::from([("index_build".to_string(), clock.seconds())]);
    if method == Method::Pca {
        let resolved = manifold::resolve_config(&index, config)?;
        let k = config.k_neighbors;
        let clock = Stopwatch::start();
        let results = par::map_range(index.len(), |i| pca_baseline_frame(&index, i, k));
        timings.insert("frames".into(), clock.seconds());
        let (frames, flags) = results
            .into_iter()
            .map(|r| match r {
                Ok(f) => (f, None),
                Err(e) => (LocalFrame::identity(), Some(PointFlag::from_error(&e))),
            })
            .unzip();
        return Ok(MethodOutput {
            method,
            config: resolved,
            frames,
            curvatures: None,
            flags,
            diagnostics: None,
            timings,
        });
    }

    let estimate = manifold::estimate_with_index(&index, cloud, config)?;
    timings.insert("pass1".into(), estimate.timings.pass1);
    timings.insert("pass2".into(), estimate.timings.pass2);
    let frames = estimate.frames();
    let diagnostics: Vec<PointDiagnostics> = estimate.points.iter().map(|p| p.diagnostics).collect();
    let mut flags: Vec<Option<PointFlag>> = diagnostics.iter().map(|d| d.flag).collect();
    let curvatures = match method {
        Method::Manifold => estimate.curvatures(),
        _ => {
            let v = varifold::estimate_varifold_with_index(&index, &frames, &estimate.config)?;
            timings.insert("varifold".into(), v.seconds);
            for (f, g) in flags.iter_mut().zip(&v.flags) {
                *f = f.or(*g);
            }
            v.curvatures
        }
    };
    Ok(MethodOutput {
        method,
        config: estimate.config,
        frames,
        curvatures: Some(curvatures),
        flags,
        diagnostics: Some(diagnostics),
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::{AnalyticSurface, SampleOptions};

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("splat".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_covers_every_point() {
        let sample = AnalyticSurface::sphere(1.0).sample(&SampleOptions::new(600, 3));
        for m in Method::ALL {
            let out = run_method(&sample.cloud, m, &EstimatorConfig::default()).unwrap();
            assert_eq!(out.len(), 600);
            assert_eq!(out.curvatures.is_some(), m != Method::Pca);
            assert!(out.config.bandwidth_t.fixed().is_some());
            assert!(out.timings.contains_key("index_build"));
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let e = run_method(&PointCloud::default(), Method::Pca, &EstimatorConfig::default());
        assert_eq!(e.unwrap_err(), EstimateError::EmptyCloud);
    }
}
