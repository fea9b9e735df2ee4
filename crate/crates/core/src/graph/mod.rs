//! Directed mixed graphs (DMGs) and the separation machinery built on them.
//!
//! A DMG carries directed edges `from -> to` (direct causal effects) and
//! bidirected edges `a <-> b` (hidden confounding). Graphs may be cyclic but
//! never carry self-loops. Node sets are stored as `u64` bitmasks, so a graph
//! has at most [`MAX_NODES`] nodes.

mod acyclic;
mod separation;
mod walk;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use acyclic::{acyclify, has_directed_cycle, strongly_connected_components};
pub use separation::{d_separated, sigma_separated, SeparationQuery};
pub use walk::{connecting_walk_within, is_collider, StepKind, Walk, WalkStep};

pub(crate) use separation::connected_from;

/// Largest supported node count (node sets are `u64` bitmasks).
pub const MAX_NODES: usize = 64;

#[inline]
pub(crate) fn bit(v: usize) -> u64 {
    1u64 << v
}

/// Iterate over the indices of the set bits of `mask`, lowest first.
pub(crate) fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(v)
        }
    })
}

/// Mask of all node indices strictly greater than `v`.
#[inline]
pub(crate) fn above(v: usize) -> u64 {
    u64::MAX.checked_shl(v as u32 + 1).unwrap_or(0)
}

pub(crate) fn mask_of(nodes: &[usize]) -> u64 {
    nodes.iter().fold(0, |m, &v| m | bit(v))
}

/// Read-only adjacency view shared by the separation kernels.
pub(crate) trait Adjacency {
    fn children(&self, v: usize) -> u64;
    fn parents(&self, v: usize) -> u64;
    fn spouses(&self, v: usize) -> u64;
}

/// A directed mixed graph over nodes `0..n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DirectedMixedGraph {
    n: usize,
    children: Vec<u64>,
    parents: Vec<u64>,
    spouses: Vec<u64>,
}

impl DirectedMixedGraph {
    /// Edgeless graph on `n` nodes.
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "{n} nodes exceeds the supported maximum of {MAX_NODES}"
            )));
        }
        Ok(Self {
            n,
            children: vec![0; n],
            parents: vec![0; n],
            spouses: vec![0; n],
        })
    }

    pub fn from_edges(
        n: usize,
        directed: &[(usize, usize)],
        bidirected: &[(usize, usize)],
    ) -> Result<Self> {
        let mut g = Self::new(n)?;
        for &(from, to) in directed {
            g.add_directed(from, to)?;
        }
        for &(a, b) in bidirected {
            g.add_bidirected(a, b)?;
        }
        Ok(g)
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        if a >= self.n || b >= self.n {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) out of range for {} nodes",
                self.n
            )));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
        }
        Ok(())
    }

    pub fn add_directed(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_pair(from, to)?;
        self.children[from] |= bit(to);
        self.parents[to] |= bit(from);
        Ok(())
    }

    pub fn add_bidirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        self.spouses[a] |= bit(b);
        self.spouses[b] |= bit(a);
        Ok(())
    }

    pub fn remove_directed(&mut self, from: usize, to: usize) {
        if from < self.n && to < self.n {
            self.children[from] &= !bit(to);
            self.parents[to] &= !bit(from);
        }
    }

    pub fn remove_bidirected(&mut self, a: usize, b: usize) {
        if a < self.n && b < self.n {
            self.spouses[a] &= !bit(b);
            self.spouses[b] &= !bit(a);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_directed(&self, from: usize, to: usize) -> bool {
        from < self.n && to < self.n && self.children[from] & bit(to) != 0
    }

    pub fn has_bidirected(&self, a: usize, b: usize) -> bool {
        a < self.n && b < self.n && self.spouses[a] & bit(b) != 0
    }

    pub fn children_mask(&self, v: usize) -> u64 {
        self.children[v]
    }

    pub fn parents_mask(&self, v: usize) -> u64 {
        self.parents[v]
    }

    pub fn spouses_mask(&self, v: usize) -> u64 {
        self.spouses[v]
    }

    /// Directed edges as `(from, to)`, sorted lexicographically.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|from| bits(self.children[from]).map(move |to| (from, to)))
            .collect()
    }

    /// Bidirected edges as `(a, b)` with `a < b`, sorted lexicographically.
    pub fn bidirected_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| {
                bits(self.spouses[a] & above(a)).map(move |b| (a, b))
            })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        let directed: u32 = self.children.iter().map(|m| m.count_ones()).sum();
        let bidirected: u32 = self.spouses.iter().map(|m| m.count_ones()).sum();
        (directed + bidirected / 2) as usize
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.parents[v].count_ones() as usize
    }

    /// Graph of the manipulated system: every directed edge into an intervened
    /// node and every bidirected edge touching one is removed.
    pub fn intervene(&self, intervened: &[usize]) -> Self {
        intervene_graph(self, intervened)
    }
}

/// Free-function form of [`DirectedMixedGraph::intervene`].
pub fn intervene_graph(g: &DirectedMixedGraph, intervened: &[usize]) -> DirectedMixedGraph {
    let j = mask_of(intervened);
    let mut out = g.clone();
    for v in 0..g.n {
        out.children[v] &= !j;
        out.spouses[v] &= !j;
        if j & bit(v) != 0 {
            out.parents[v] = 0;
            out.spouses[v] = 0;
        }
    }
    out
}

impl Adjacency for DirectedMixedGraph {
    #[inline]
    fn children(&self, v: usize) -> u64 {
        self.children[v]
    }
    #[inline]
    fn parents(&self, v: usize) -> u64 {
        self.parents[v]
    }
    #[inline]
    fn spouses(&self, v: usize) -> u64 {
        self.spouses[v]
    }
}

impl fmt::Debug for DirectedMixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DMG(n={}; ", self.n)?;
        let mut first = true;
        for (a, b) in self.directed_edges() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{a}->{b}")?;
            first = false;
        }
        for (a, b) in self.bidirected_edges() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{a}<->{b}")?;
            first = false;
        }
        write!(f, ")")
    }
}

/// On-disk JSON shape of a graph.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    directed: Vec<[usize; 2]>,
    bidirected: Vec<[usize; 2]>,
}

impl Serialize for DirectedMixedGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile {
            n: self.n,
            directed: self.directed_edges().into_iter().map(|(a, b)| [a, b]).collect(),
            bidirected: self
                .bidirected_edges()
                .into_iter()
                .map(|(a, b)| [a, b])
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectedMixedGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = GraphFile::deserialize(d)?;
        let directed: Vec<_> = file.directed.iter().map(|e| (e[0], e[1])).collect();
        let bidirected: Vec<_> = file.bidirected.iter().map(|e| (e[0], e[1])).collect();
        DirectedMixedGraph::from_edges(file.n, &directed, &bidirected)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        let mut g = DirectedMixedGraph::new(3).unwrap();
        assert!(g.add_directed(1, 1).is_err());
        assert!(g.add_bidirected(2, 2).is_err());
        assert!(g.add_directed(0, 3).is_err());
        assert!(DirectedMixedGraph::new(65).is_err());
    }

    #[test]
    fn bidirected_edges_are_canonical() {
        let g = DirectedMixedGraph::from_edges(4, &[], &[(3, 1), (1, 3), (2, 0)]).unwrap();
        assert_eq!(g.bidirected_edges(), vec![(0, 2), (1, 3)]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn intervention_removes_incoming_and_confounding() {
        let g = DirectedMixedGraph::from_edges(2, &[(0, 1)], &[(0, 1)]).unwrap();
        assert_eq!(g.intervene(&[1]).edge_count(), 0);

        let chain = DirectedMixedGraph::from_edges(3, &[(0, 1), (1, 2)], &[]).unwrap();
        assert_eq!(chain.intervene(&[]), chain);

        let g = DirectedMixedGraph::from_edges(3, &[(0, 1), (1, 0)], &[(0, 2)]).unwrap();
        let expected = DirectedMixedGraph::from_edges(3, &[(0, 1)], &[]).unwrap();
        assert_eq!(g.intervene(&[0]), expected);
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let g = DirectedMixedGraph::from_edges(3, &[(2, 0), (0, 1)], &[(2, 1)]).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"n":3,"directed":[[0,1],[2,0]],"bidirected":[[1,2]]}"#);
        let back: DirectedMixedGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<DirectedMixedGraph>(r#"{"n":2,"directed":[[0,0]],"bidirected":[]}"#).is_err());
    }
}
