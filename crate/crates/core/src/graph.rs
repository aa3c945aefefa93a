//! Immutable weighted location graph in compressed sparse row form.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::WeightedEdge;
use crate::quantize::LocationId;
use crate::unionfind::DisjointSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({u}, {v}) is not in canonical u < v form")]
    NonCanonicalEdge { u: LocationId, v: LocationId },
    #[error("edge ({u}, {v}) appears more than once")]
    DuplicateEdge { u: LocationId, v: LocationId },
    #[error("edge ({u}, {v}) is out of order")]
    UnsortedEdges { u: LocationId, v: LocationId },
    #[error("edge ({u}, {v}) has weight 0")]
    ZeroWeight { u: LocationId, v: LocationId },
    #[error("vertex index {index} out of range for graph with {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("graph has more than 2^32 - 1 vertices")]
    TooManyVertices,
}

/// Undirected weighted graph over grid cells.
///
/// Vertices are numbered densely in [`LocationId`] order. Each vertex's
/// neighbor list is sorted ascending with a parallel list of weights, and
/// every edge is stored once per direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoVisGraph {
    pub(crate) vertices: Vec<LocationId>,
    pub(crate) offsets: Vec<u64>,
    pub(crate) neighbors: Vec<u32>,
    pub(crate) weights: Vec<u32>,
}

impl Default for CoVisGraph {
    fn default() -> Self {
        CoVisGraph {
            vertices: Vec::new(),
            offsets: vec![0],
            neighbors: Vec::new(),
            weights: Vec::new(),
        }
    }
}

impl CoVisGraph {
    /// Builds the graph from canonical (`u < v`), strictly sorted edges with nonzero weights.
    pub fn from_edges<I>(edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = WeightedEdge>,
    {
        let edges: Vec<WeightedEdge> = edges.into_iter().collect();
        for (i, e) in edges.iter().enumerate() {
            if e.u >= e.v {
                return Err(GraphError::NonCanonicalEdge { u: e.u, v: e.v });
            }
            if e.weight == 0 {
                return Err(GraphError::ZeroWeight { u: e.u, v: e.v });
            }
            if i > 0 {
                let prev = &edges[i - 1];
                match (prev.u, prev.v).cmp(&(e.u, e.v)) {
                    std::cmp::Ordering::Equal => return Err(GraphError::DuplicateEdge { u: e.u, v: e.v }),
                    std::cmp::Ordering::Greater => return Err(GraphError::UnsortedEdges { u: e.u, v: e.v }),
                    std::cmp::Ordering::Less => {}
                }
            }
        }

        let mut vertices: Vec<LocationId> = edges.iter().flat_map(|e| [e.u, e.v]).collect();
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.len() > u32::MAX as usize {
            return Err(GraphError::TooManyVertices);
        }
        let index = |id: LocationId| vertices.binary_search(&id).expect("endpoint is a vertex") as u32;

        let endpoints: Vec<(u32, u32)> = edges.iter().map(|e| (index(e.u), index(e.v))).collect();
        let n = vertices.len();
        let mut offsets = vec![0u64; n + 1];
        for &(a, b) in &endpoints {
            offsets[a as usize + 1] += 1;
            offsets[b as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }

        // Edges are sorted by (u, v), so every vertex receives its lower
        // neighbors (as the mirror side) before its higher ones, each in
        // ascending order: the lists come out sorted without a second pass.
        let total = offsets[n] as usize;
        let mut neighbors = vec![0u32; total];
        let mut weights = vec![0u32; total];
        let mut cursor: Vec<u64> = offsets[..n].to_vec();
        for (&(a, b), e) in endpoints.iter().zip(&edges) {
            let ca = &mut cursor[a as usize];
            neighbors[*ca as usize] = b;
            weights[*ca as usize] = e.weight;
            *ca += 1;
            let cb = &mut cursor[b as usize];
            neighbors[*cb as usize] = a;
            weights[*cb as usize] = e.weight;
            *cb += 1;
        }

        Ok(CoVisGraph {
            vertices,
            offsets,
            neighbors,
            weights,
        })
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[LocationId] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Result<LocationId, GraphError> {
        self.check(i)?;
        Ok(self.vertices[i])
    }

    pub fn index_of(&self, id: LocationId) -> Option<usize> {
        self.vertices.binary_search(&id).ok()
    }

    #[inline]
    fn check(&self, i: usize) -> Result<(), GraphError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(GraphError::VertexOutOfRange { index: i, n: self.n() })
        }
    }

    #[inline]
    fn span(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i] as usize..self.offsets[i + 1] as usize
    }

    /// Unweighted degree.
    pub fn degree(&self, i: usize) -> Result<usize, GraphError> {
        self.check(i)?;
        Ok(self.degree_unchecked(i))
    }

    #[inline]
    pub(crate) fn degree_unchecked(&self, i: usize) -> usize {
        (self.offsets[i + 1] - self.offsets[i]) as usize
    }

    /// All degrees, indexed by vertex.
    pub fn degrees(&self) -> Vec<u64> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn neighbors(&self, i: usize) -> Result<&[u32], GraphError> {
        self.check(i)?;
        Ok(&self.neighbors[self.span(i)])
    }

    pub fn neighbor_weights(&self, i: usize) -> Result<&[u32], GraphError> {
        self.check(i)?;
        Ok(&self.weights[self.span(i)])
    }

    /// Sum of incident edge weights.
    pub fn strength(&self, i: usize) -> Result<u64, GraphError> {
        Ok(self.neighbor_weights(i)?.iter().map(|&w| u64::from(w)).sum())
    }

    /// Weight of edge `{i, j}`, if present. Symmetric in its arguments.
    pub fn weight(&self, i: usize, j: usize) -> Option<u32> {
        if i >= self.n() || j >= self.n() {
            return None;
        }
        let span = self.span(i);
        let nbrs = &self.neighbors[span.clone()];
        nbrs.binary_search(&(j as u32))
            .ok()
            .map(|k| self.weights[span.start + k])
    }

    pub fn weight_between(&self, u: LocationId, v: LocationId) -> Option<u32> {
        self.weight(self.index_of(u)?, self.index_of(v)?)
    }

    /// Every undirected edge once, in canonical sorted order.
    pub fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
        (0..self.n()).flat_map(move |i| {
            let span = self.span(i);
            let start = span.start;
            self.neighbors[span]
                .iter()
                .enumerate()
                .filter(move |&(_, &j)| j as usize > i)
                .map(move |(k, &j)| WeightedEdge {
                    u: self.vertices[i],
                    v: self.vertices[j as usize],
                    weight: self.weights[start + k],
                })
        })
    }

    /// Vertex index pairs `(i, j)` with `i < j` and the weight.
    pub fn edge_indices(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.n()).flat_map(move |i| {
            let span = self.span(i);
            let start = span.start;
            self.neighbors[span]
                .iter()
                .enumerate()
                .filter(move |&(_, &j)| j as usize > i)
                .map(move |(k, &j)| (i as u32, j, self.weights[start + k]))
        })
    }

    /// Connected components via union-find.
    pub fn components(&self) -> ComponentReport {
        let mut ds = DisjointSet::new(self.n());
        for (i, j, _) in self.edge_indices() {
            ds.union(i, j);
        }
        ComponentReport::from_sizes(ds.set_sizes().into_iter().map(|s| s as usize).collect())
    }

    /// Connected components via breadth-first search; agrees with [`CoVisGraph::components`].
    pub fn components_bfs(&self) -> ComponentReport {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            queue.push_back(s);
            let mut size = 0;
            while let Some(x) = queue.pop_front() {
                size += 1;
                for &y in &self.neighbors[self.span(x)] {
                    if !seen[y as usize] {
                        seen[y as usize] = true;
                        queue.push_back(y as usize);
                    }
                }
            }
            sizes.push(size);
        }
        ComponentReport::from_sizes(sizes)
    }

    /// Checks the structural invariants; used when loading untrusted snapshots.
    pub(crate) fn validate(&self) -> Result<(), String> {
        let n = self.n();
        if self.offsets.len() != n + 1 || self.offsets[0] != 0 {
            return Err("offset table has the wrong length or start".into());
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err("offsets are not monotone".into());
        }
        if self.offsets[n] as usize != self.neighbors.len() || self.neighbors.len() != self.weights.len() {
            return Err("offset table does not match adjacency length".into());
        }
        if !self.neighbors.len().is_multiple_of(2) {
            return Err("odd number of adjacency entries".into());
        }
        if self.vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err("vertex table is not strictly sorted".into());
        }
        for i in 0..n {
            let span = self.span(i);
            let nbrs = &self.neighbors[span.clone()];
            if nbrs.is_empty() {
                return Err(format!("vertex {i} is isolated"));
            }
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("neighbors of vertex {i} are not strictly sorted"));
            }
            for (k, &j) in nbrs.iter().enumerate() {
                let w = self.weights[span.start + k];
                if j as usize >= n || j as usize == i {
                    return Err(format!("vertex {i} has invalid neighbor {j}"));
                }
                if w == 0 {
                    return Err(format!("edge ({i}, {j}) has weight 0"));
                }
                if self.weight(j as usize, i) != Some(w) {
                    return Err(format!("edge ({i}, {j}) is not mirrored"));
                }
            }
        }
        Ok(())
    }
}

/// Component census of a graph. `sizes` is sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component_count: usize,
    pub sizes: Vec<usize>,
    pub giant_size: usize,
    /// `giant_size / N`, or 0 for the empty graph.
    pub giant_fraction: f64,
}

impl ComponentReport {
    pub fn from_sizes(mut sizes: Vec<usize>) -> Self {
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let n: usize = sizes.iter().sum();
        let giant = sizes.first().copied().unwrap_or(0);
        ComponentReport {
            component_count: sizes.len(),
            giant_fraction: if n == 0 { 0.0 } else { giant as f64 / n as f64 },
            giant_size: giant,
            sizes,
        }
    }

    /// `(size, how many components have it)`, largest size first.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &s in &self.sizes {
            match out.last_mut() {
                Some((size, count)) if *size == s => *count += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}
