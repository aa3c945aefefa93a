//! One-shot analysis of a built graph and the summary report it produces.
//!
//! The summary is a single JSON document:
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "N": <vertices>, "M": <edges>,
//!   "components": {"count", "giant_size", "giant_fraction", "size_histogram": [[size, count], ...]},
//!   "weight_stats": {"min", "max", "mean"} | null,
//!   "theta_fit": <fit> | null,        degree distribution, log-binned regression
//!   "gamma_fit": <fit> | null,        weight distribution, log-binned regression
//!   "theta_fit_mle": <fit> | null,    degree distribution, discrete MLE
//!   "gamma_fit_mle": <fit> | null,    weight distribution, discrete MLE
//!   "knn_averaging": "per-vertex" | "pooled",
//!   "r": <number> | "undefined" | null
//! }
//! ```
//!
//! `null` marks a metric that does not exist for this graph (no vertices, no
//! edges, or too few distinct values to fit).

use serde::{Deserialize, Serialize};

use crate::graph::{CoVisGraph, ComponentReport};
use crate::metrics::{
    self, assortativity, degree_histogram, knn_curve, weight_histogram, AssortativityResult, Histogram, KnnAveraging,
    KnnCurve, WeightStats,
};
use crate::powerlaw::{fit_power_law, FitMethod, PowerLawFit};
use crate::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

/// Reference values for the full European network built from the complete
/// YFCC100M metadata. They are not reproducible without the full dataset and
/// the original region boundary; they are listed for comparison only.
pub mod reference {
    pub const N: u64 = 178_661;
    pub const M: u64 = 32_753_756;
    pub const GIANT_SIZE: u64 = 174_699;
    pub const GIANT_FRACTION: f64 = 0.978;
    pub const SMALL_COMPONENTS: u64 = 1_575;
    pub const DEGREE_EXPONENT: f64 = 1.34;
    pub const WEIGHT_EXPONENT: f64 = 2.89;
    pub const WEIGHT_MIN: u32 = 2;
    pub const WEIGHT_MAX: u32 = 944;
    pub const WEIGHT_MEAN: f64 = 303.78;
    pub const ASSORTATIVITY: f64 = -2.36e-6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub knn_averaging: KnnAveraging,
    /// Fixed lower cutoffs; `None` uses the smallest value (regression) or a KS scan (MLE).
    pub degree_x_min: Option<u64>,
    pub weight_x_min: Option<u64>,
}

/// Every statistic computed for one graph.
#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub n: usize,
    pub m: usize,
    pub components: ComponentReport,
    pub degree_hist: Option<Histogram>,
    pub weight_hist: Option<Histogram>,
    pub weight_stats: Option<WeightStats<T>>,
    pub theta_fit: Option<PowerLawFit<T>>,
    pub gamma_fit: Option<PowerLawFit<T>>,
    pub theta_fit_mle: Option<PowerLawFit<T>>,
    pub gamma_fit_mle: Option<PowerLawFit<T>>,
    pub knn: Option<KnnCurve<T>>,
    pub assortativity: Option<AssortativityResult<T>>,
    pub knn_averaging: KnnAveraging,
}

pub fn analyze<T: Scalar>(g: &CoVisGraph, opts: &AnalysisOptions) -> Analysis<T> {
    let degree_hist = degree_histogram(g).ok();
    let weights = weight_histogram::<T>(g).ok();
    let (weight_hist, weight_stats) = match weights {
        Some((h, s)) => (Some(h), Some(s)),
        None => (None, None),
    };
    let fit = |h: &Option<Histogram>, method, x_min| h.as_ref().and_then(|h| fit_power_law(h, method, x_min).ok());

    Analysis {
        n: g.n(),
        m: g.m(),
        components: g.components(),
        theta_fit: fit(&degree_hist, FitMethod::LogBinnedRegression, opts.degree_x_min),
        gamma_fit: fit(&weight_hist, FitMethod::LogBinnedRegression, opts.weight_x_min),
        theta_fit_mle: fit(&degree_hist, FitMethod::DiscreteMle, opts.degree_x_min),
        gamma_fit_mle: fit(&weight_hist, FitMethod::DiscreteMle, opts.weight_x_min),
        knn: knn_curve(g, opts.knn_averaging).ok(),
        assortativity: assortativity(g).ok(),
        degree_hist,
        weight_hist,
        weight_stats,
        knn_averaging: opts.knn_averaging,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub count: usize,
    pub giant_size: usize,
    pub giant_fraction: f64,
    pub size_histogram: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<T> {
    pub schema_version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub components: ComponentSummary,
    pub weight_stats: Option<WeightStats<T>>,
    pub theta_fit: Option<PowerLawFit<T>>,
    pub gamma_fit: Option<PowerLawFit<T>>,
    pub theta_fit_mle: Option<PowerLawFit<T>>,
    pub gamma_fit_mle: Option<PowerLawFit<T>>,
    pub knn_averaging: KnnAveraging,
    pub r: Option<AssortativityResult<T>>,
}

impl<T: Scalar> Analysis<T> {
    pub fn summary(&self) -> Summary<T> {
        Summary {
            schema_version: SCHEMA_VERSION,
            n: self.n,
            m: self.m,
            components: ComponentSummary {
                count: self.components.component_count,
                giant_size: self.components.giant_size,
                giant_fraction: self.components.giant_fraction,
                size_histogram: self.components.size_histogram(),
            },
            weight_stats: self.weight_stats,
            theta_fit: self.theta_fit.clone(),
            gamma_fit: self.gamma_fit.clone(),
            theta_fit_mle: self.theta_fit_mle.clone(),
            gamma_fit_mle: self.gamma_fit_mle.clone(),
            knn_averaging: self.knn_averaging,
            r: self.assortativity,
        }
    }

    /// Remaining-degree distribution `q_k` of this graph, if it has vertices.
    pub fn remaining_degrees(&self) -> Option<std::collections::BTreeMap<u64, T>> {
        self.degree_hist.as_ref().map(metrics::remaining_degree_distribution)
    }
}
