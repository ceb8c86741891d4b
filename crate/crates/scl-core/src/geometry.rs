//! Interaction geometry: bounded-degree graphs and lightcones.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::SclError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometrySpec {
    Line { length: usize },
    Lattice { dims: Vec<usize> },
    Custom { vertex_count: usize, edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometryGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
    degree_bound: usize,
    spec: GeometrySpec,
}

impl GeometryGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().cloned()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Maximum vertex degree actually present in the graph.
    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(a, b))
    }

    pub fn spec(&self) -> &GeometrySpec {
        &self.spec
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out
    }

    /// Graph distance between two vertex sets (0 if they intersect).
    pub fn distance(&self, from: &BTreeSet<usize>, to: &BTreeSet<usize>) -> Option<usize> {
        if from.is_empty() || to.is_empty() {
            return None;
        }
        let mut dist = vec![usize::MAX; self.vertex_count];
        let mut queue = VecDeque::new();
        for &s in from {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            if to.contains(&v) {
                return Some(dist[v]);
            }
            for w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        None
    }
}

pub fn build_geometry(spec: &GeometrySpec) -> Result<GeometryGraph, SclError> {
    let (vertex_count, edges): (usize, BTreeSet<(usize, usize)>) = match spec {
        GeometrySpec::Line { length } => {
            if *length == 0 {
                return Err(SclError::invalid("line length must be positive"));
            }
            (*length, (0..length.saturating_sub(1)).map(|i| (i, i + 1)).collect())
        }
        GeometrySpec::Lattice { dims } => {
            if dims.is_empty() || dims.iter().any(|&d| d == 0) {
                return Err(SclError::invalid("lattice dims must be positive"));
            }
            let n: usize = dims.iter().product();
            let mut edges = BTreeSet::new();
            let strides: Vec<usize> = {
                // Row-major: last dimension varies fastest.
                let mut s = vec![1usize; dims.len()];
                for i in (0..dims.len().saturating_sub(1)).rev() {
                    s[i] = s[i + 1] * dims[i + 1];
                }
                s
            };
            for v in 0..n {
                let mut rem = v;
                let coord: Vec<usize> = strides
                    .iter()
                    .zip(dims)
                    .map(|(s, d)| {
                        let x = (rem / s) % d;
                        rem %= s;
                        x
                    })
                    .collect();
                for axis in 0..dims.len() {
                    if coord[axis] + 1 < dims[axis] {
                        edges.insert((v, v + strides[axis]));
                    }
                }
            }
            (n, edges)
        }
        GeometrySpec::Custom { vertex_count, edges } => {
            let mut set = BTreeSet::new();
            for &(a, b) in edges {
                if a == b {
                    return Err(SclError::invalid("self-loop edge"));
                }
                if a >= *vertex_count || b >= *vertex_count {
                    return Err(SclError::invalid("edge endpoint out of range"));
                }
                let e = if a < b { (a, b) } else { (b, a) };
                if !set.insert(e) {
                    return Err(SclError::invalid("duplicate edge"));
                }
            }
            (*vertex_count, set)
        }
    };
    let mut degree = vec![0usize; vertex_count];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let degree_bound = degree.iter().cloned().max().unwrap_or(0);
    Ok(GeometryGraph { vertex_count, edges, degree_bound, spec: spec.clone() })
}

pub fn line(n: usize) -> GeometryGraph {
    build_geometry(&GeometrySpec::Line { length: n }).expect("line geometry")
}

pub fn lattice(dims: &[usize]) -> GeometryGraph {
    build_geometry(&GeometrySpec::Lattice { dims: dims.to_vec() }).expect("lattice geometry")
}

/// All vertices within graph distance `d` of the seed set (includes seeds).
pub fn lightcone(graph: &GeometryGraph, seeds: &BTreeSet<usize>, d: usize) -> BTreeSet<usize> {
    let mut dist = vec![usize::MAX; graph.vertex_count()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        assert!(s < graph.vertex_count(), "seed out of range");
        dist[s] = 0;
        queue.push_back(s);
    }
    let mut out = BTreeSet::new();
    while let Some(v) = queue.pop_front() {
        out.insert(v);
        if dist[v] == d {
            continue;
        }
        for w in graph.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    out
}
