//! Co-visitation networks of photo locations.
//!
//! The pipeline reads geotagged media metadata ([`ingest`]), snaps each
//! photo to a millidegree grid cell ([`quantize`]), projects the
//! user–location relation onto locations ([`build`]), stores the result as an
//! immutable compact graph ([`graph`]), and computes degree, weight and
//! degree-correlation statistics ([`metrics`], [`powerlaw`]). [`export`] writes
//! plot-ready tables, the summary report and the binary snapshot.
//!
//! Statistics are generic over the floating-point type through [`Scalar`];
//! the `*64` aliases below fix it to `f64`, which is what the CLI uses.

pub mod build;
pub mod export;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod powerlaw;
pub mod quantize;
pub mod report;
pub mod snapshot;
pub mod synth;
pub mod unionfind;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use build::{build_graph, BuildConfig, BuildError, BuildStats, UserVisitSet, WeightedEdge};
pub use graph::{CoVisGraph, ComponentReport, GraphError};
pub use ingest::{BoundingBox, ColumnLayout, IngestError, IngestStats, PhotoRecord};
pub use metrics::{Histogram, KnnAveraging};
pub use powerlaw::FitMethod;
pub use quantize::{cell_center, quantize, LocationId};

/// Floating-point type the statistics are computed in.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an integer count.
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("every count is representable as a float")
    }

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal is representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type KnnCurve64 = metrics::KnnCurve<f64>;
pub type WeightStats64 = metrics::WeightStats<f64>;
pub type Assortativity64 = metrics::AssortativityResult<f64>;
pub type PowerLawFit64 = powerlaw::PowerLawFit<f64>;
pub type Summary64 = report::Summary<f64>;

pub type KnnCurve32 = metrics::KnnCurve<f32>;
pub type Assortativity32 = metrics::AssortativityResult<f32>;
pub type PowerLawFit32 = powerlaw::PowerLawFit<f32>;
