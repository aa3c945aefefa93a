//! Degree and weight distributions and degree–degree correlations.
//!
//! All degree-based quantities are unweighted. Correlations are computed over
//! the `2M` directed endpoint pairs of the undirected edges, so every edge
//! contributes `(deg u, deg v)` and `(deg v, deg u)`.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::graph::CoVisGraph;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("graph has no edges")]
    NoEdges,
}

/// Empirical distribution over non-negative integers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Histogram {
    entries: BTreeMap<u64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: u64, count: u64) {
        if count == 0 {
            return;
        }
        *self.entries.entry(value).or_insert(0) += count;
        self.total += count;
    }

    pub fn from_values(values: impl IntoIterator<Item = u64>) -> Self {
        let mut h = Histogram::new();
        for v in values {
            h.add(v, 1);
        }
        h
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut h = Histogram::new();
        for (v, c) in counts {
            h.add(v, c);
        }
        h
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, value: u64) -> u64 {
        self.entries.get(&value).copied().unwrap_or(0)
    }

    /// `(value, count)` in ascending value order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.entries.iter().map(|(&v, &c)| (v, c))
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn min_value(&self) -> Option<u64> {
        self.entries.keys().next().copied()
    }

    pub fn max_value(&self) -> Option<u64> {
        self.entries.keys().next_back().copied()
    }

    /// `(value, count, count / total)` in ascending value order.
    pub fn probabilities<T: Scalar>(&self) -> Vec<(u64, u64, T)> {
        let total = T::from_count(self.total);
        self.iter().map(|(v, c)| (v, c, T::from_count(c) / total)).collect()
    }

    pub fn mean<T: Scalar>(&self) -> Option<T> {
        if self.total == 0 {
            return None;
        }
        let sum: u128 = self.iter().map(|(v, c)| u128::from(v) * u128::from(c)).sum();
        Some(T::from_u128(sum).unwrap() / T::from_count(self.total))
    }

    pub fn merge(mut self, other: &Histogram) -> Histogram {
        self += other;
        self
    }
}

impl AddAssign<&Histogram> for Histogram {
    fn add_assign(&mut self, other: &Histogram) {
        for (v, c) in other.iter() {
            self.add(v, c);
        }
    }
}

/// `entries[k]` = number of vertices with degree `k`.
pub fn degree_histogram(g: &CoVisGraph) -> Result<Histogram, MetricsError> {
    if g.is_empty() {
        return Err(MetricsError::EmptyGraph);
    }
    Ok(Histogram::from_values(g.degrees()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightStats<T> {
    pub min: u32,
    pub max: u32,
    pub mean: T,
}

/// `entries[w]` = number of undirected edges with weight `w`.
pub fn weight_histogram<T: Scalar>(g: &CoVisGraph) -> Result<(Histogram, WeightStats<T>), MetricsError> {
    if g.m() == 0 {
        return Err(MetricsError::NoEdges);
    }
    let h = Histogram::from_values(g.edge_indices().map(|(_, _, w)| u64::from(w)));
    let stats = WeightStats {
        min: h.min_value().unwrap() as u32,
        max: h.max_value().unwrap() as u32,
        mean: h.mean().unwrap(),
    };
    Ok((h, stats))
}

/// Distribution of the remaining degree (degree minus one) at the end of a
/// randomly chosen edge: `q_k = (k + 1) p_{k+1} / Σ_j j p_j`.
pub fn remaining_degree_distribution<T: Scalar>(degrees: &Histogram) -> BTreeMap<u64, T> {
    let norm: u128 = degrees.iter().map(|(k, c)| u128::from(k) * u128::from(c)).sum();
    let norm = T::from_u128(norm).unwrap();
    degrees
        .iter()
        .filter(|&(k, _)| k >= 1)
        .map(|(k, c)| (k - 1, T::from_count(k) * T::from_count(c) / norm))
        .collect()
}

/// How per-degree-class neighbour degrees are averaged.
///
/// For unweighted degrees both give the same value, since every vertex of
/// degree `k` has exactly `k` neighbours; they differ only in summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnAveraging {
    /// Mean over degree-`k` vertices of each vertex's mean neighbour degree.
    #[default]
    PerVertex,
    /// Total neighbour degree over all edge ends at degree-`k` vertices, divided by their number.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnCurve<T> {
    pub averaging: KnnAveraging,
    /// Degree `k` → average neighbour degree.
    pub points: BTreeMap<u64, T>,
}

/// Average neighbour degree as a function of degree.
pub fn knn_curve<T: Scalar>(g: &CoVisGraph, averaging: KnnAveraging) -> Result<KnnCurve<T>, MetricsError> {
    if g.m() == 0 {
        return Err(MetricsError::NoEdges);
    }
    let deg = g.degrees();
    // degree -> (accumulator, count)
    let mut acc: BTreeMap<u64, (T, u64)> = BTreeMap::new();
    for (i, &k) in deg.iter().enumerate() {
        let nbrs = g.neighbors(i).expect("index in range");
        let nbr_sum: u64 = nbrs.iter().map(|&j| deg[j as usize]).sum();
        let slot = acc.entry(k).or_insert((T::zero(), 0));
        match averaging {
            KnnAveraging::PerVertex => {
                slot.0 = slot.0 + T::from_count(nbr_sum) / T::from_count(k);
                slot.1 += 1;
            }
            KnnAveraging::Pooled => {
                slot.0 = slot.0 + T::from_count(nbr_sum);
                slot.1 += k;
            }
        }
    }
    Ok(KnnCurve {
        averaging,
        points: acc
            .into_iter()
            .map(|(k, (sum, n))| (k, sum / T::from_count(n)))
            .collect(),
    })
}

/// Degree assortativity coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssortativityResult<T> {
    Defined(T),
    /// Every edge end has the same degree, so the correlation has zero variance.
    Undefined,
}

impl<T: Copy> AssortativityResult<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            AssortativityResult::Defined(r) => Some(*r),
            AssortativityResult::Undefined => None,
        }
    }
}

impl<T: Serialize> Serialize for AssortativityResult<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AssortativityResult::Defined(r) => r.serialize(s),
            AssortativityResult::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Pearson correlation of `(deg(u) - shift, deg(v) - shift)` over all directed endpoint pairs.
///
/// The shift does not change the result; `shift = 1` gives the correlation of
/// remaining degrees.
pub fn endpoint_degree_correlation<T: Scalar>(
    g: &CoVisGraph,
    shift: u64,
) -> Result<AssortativityResult<T>, MetricsError> {
    if g.m() == 0 {
        return Err(MetricsError::NoEdges);
    }
    let deg = g.degrees();
    let x = |i: u32| -> i128 { i128::from(deg[i as usize]) - i128::from(shift) };

    // Both coordinates share one marginal: each vertex appears deg(i) times as
    // the near end and deg(i) times as the far end.
    let ends = 2 * g.m() as u64;
    let sum: i128 = deg.iter().map(|&k| i128::from(k) * (i128::from(k) - i128::from(shift))).sum();
    let mean = T::from_i128(sum).unwrap() / T::from_count(ends);

    let mut cov = T::zero();
    let mut var = T::zero();
    for (i, j, _) in g.edge_indices() {
        let a = T::from_i128(x(i)).unwrap() - mean;
        let b = T::from_i128(x(j)).unwrap() - mean;
        cov = cov + a * b + b * a;
        var = var + a * a + b * b;
    }
    if var == T::zero() {
        return Ok(AssortativityResult::Undefined);
    }
    let r = cov / var;
    Ok(AssortativityResult::Defined(r.max(-T::one()).min(T::one())))
}

/// Degree assortativity as the Pearson correlation of endpoint degrees.
pub fn assortativity<T: Scalar>(g: &CoVisGraph) -> Result<AssortativityResult<T>, MetricsError> {
    endpoint_degree_correlation(g, 0)
}

/// Degree assortativity from the joint remaining-degree distribution `e_jk`
/// and its marginal `q_k`: `r = Σ_jk jk (e_jk − q_j q_k) / σ_q²`.
///
/// An independent route to [`assortativity`]; both agree up to rounding.
pub fn assortativity_from_joint<T: Scalar>(g: &CoVisGraph) -> Result<AssortativityResult<T>, MetricsError> {
    if g.m() == 0 {
        return Err(MetricsError::NoEdges);
    }
    let deg = g.degrees();
    let mut joint: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (i, j, _) in g.edge_indices() {
        let (a, b) = (deg[i as usize] - 1, deg[j as usize] - 1);
        *joint.entry((a, b)).or_insert(0) += 1;
        *joint.entry((b, a)).or_insert(0) += 1;
    }
    let ends = T::from_count(2 * g.m() as u64);
    let q: BTreeMap<u64, T> = remaining_degree_distribution(&degree_histogram(g)?);

    let mean_q = q.iter().fold(T::zero(), |s, (&k, &p)| s + T::from_count(k) * p);
    let second_q = q
        .iter()
        .fold(T::zero(), |s, (&k, &p)| s + T::from_count(k) * T::from_count(k) * p);
    let var_q = second_q - mean_q * mean_q;

    // Σ_jk jk q_j q_k factors into (Σ_k k q_k)², leaving Σ_jk jk e_jk − mean_q².
    let mixed = joint.iter().fold(T::zero(), |s, (&(j, k), &c)| {
        s + T::from_count(j) * T::from_count(k) * (T::from_count(c) / ends)
    });
    let num = mixed - mean_q * mean_q;

    let scale = second_q.max(T::one());
    if var_q <= T::epsilon() * scale * T::lit(16.0) {
        return Ok(AssortativityResult::Undefined);
    }
    let r = num / var_q;
    Ok(AssortativityResult::Defined(r.max(-T::one()).min(T::one())))
}
