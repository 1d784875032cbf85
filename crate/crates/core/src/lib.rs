//! Differential geometry for point clouds and Gaussian splats.
//!
//! The crate estimates tangent frames, normals and principal curvatures of
//! point sets with two noise-robust estimators:
//!
//! - [`manifold`]: a Markov-kernel Laplacian estimate turned into a 3×3
//!   tangential kernel matrix (frames, dimension) and a nested Leibniz-defect
//!   shape operator (curvatures);
//! - [`varifold`]: an approximate weak second fundamental form built from
//!   point/tangent-plane pairs.
//!
//! The [`splat`] module applies those estimates to Gaussian primitives:
//! covariance warm-up, flat-region upsampling, normal-truncated updates,
//! shape regularizers and curvature-aware split/clone placement.
//!
//! [`surfaces`] provides analytic ground truth and a local-PCA baseline,
//! [`methods`] one entry point for every estimator,
//! [`io`] the PLY/CSV/JSON formats and [`bench`] reproducible campaigns.
//!
//! ```
//! use curvsplat::surfaces::{AnalyticSurface, SampleOptions};
//! use curvsplat::manifold::estimate_all;
//! use curvsplat::types::EstimatorConfig;
//!
//! let surface = AnalyticSurface::sphere(1.0);
//! let sample = surface.sample(&SampleOptions::new(800, 7));
//! let estimate = estimate_all(&sample.cloud, &EstimatorConfig::default()).unwrap();
//! let mac = estimate.points[0].curvature.mac;
//! assert!((mac - 1.0).abs() < 0.5);
//! ```

pub mod bench;
pub mod error;
pub mod io;
pub mod laplacian;
pub mod linalg;
pub mod manifold;
pub mod methods;
mod par;
pub mod spatial;
pub mod splat;
pub mod surfaces;
pub mod types;
pub mod varifold;

pub use error::{EstimateError, Result};
pub use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
pub use spatial::{NeighborList, SpatialIndex};
pub use types::{
    CurvatureInfo, EstimatorConfig, GaussianPrimitive, LocalFrame, PointCloud, Validate,
    VarifoldNormalizer, Violation,
};
