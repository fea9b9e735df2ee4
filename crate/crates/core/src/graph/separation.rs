use crate::error::{Error, Result};

use super::{acyclify, bit, bits, mask_of, Adjacency, DirectedMixedGraph};

/// A query "is `x` separated from `y` given `cond`?".
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeparationQuery {
    x: usize,
    y: usize,
    cond: Vec<usize>,
}

impl SeparationQuery {
    pub fn new(x: usize, y: usize, mut cond: Vec<usize>) -> Result<Self> {
        if x == y {
            return Err(Error::Usage(format!("separation query needs x != y (got {x})")));
        }
        cond.sort_unstable();
        cond.dedup();
        if cond.contains(&x) || cond.contains(&y) {
            return Err(Error::Usage(format!(
                "conditioning set {cond:?} must exclude {x} and {y}"
            )));
        }
        Ok(Self { x, y, cond })
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn cond(&self) -> &[usize] {
        &self.cond
    }

    fn check_range(&self, n: usize) {
        let max = self.cond.iter().copied().chain([self.x, self.y]).max().unwrap_or(0);
        assert!(max < n, "query {self:?} refers to node {max} of a {n}-node graph");
    }
}

/// Nodes `y` for which some walk from `x` is connecting given `cond`.
///
/// Reachability over (node, arrived-with-arrowhead) states. A state reached
/// with an arrowhead may continue through a collider only if the node is
/// conditioned on, and through a non-collider only if it is not. Termination
/// is structural: each of the `2n` states is expanded at most once.
pub(crate) fn connected_from<G: Adjacency>(g: &G, x: usize, cond: u64) -> u64 {
    // Nodes reached with an arrowhead at them / with a tail at them.
    let mut head = g.children(x) | g.spouses(x);
    let mut tail = g.parents(x);
    let mut done_head = 0u64;
    let mut done_tail = 0u64;
    loop {
        let fresh_head = head & !done_head;
        let fresh_tail = tail & !done_tail;
        if fresh_head == 0 && fresh_tail == 0 {
            break;
        }
        done_head |= fresh_head;
        done_tail |= fresh_tail;
        for v in bits(fresh_head) {
            if cond & bit(v) != 0 {
                // collider: leave through another arrowhead at v
                tail |= g.parents(v);
                head |= g.spouses(v);
            } else {
                head |= g.children(v);
            }
        }
        for v in bits(fresh_tail & !cond) {
            head |= g.children(v) | g.spouses(v);
            tail |= g.parents(v);
        }
    }
    head | tail
}

/// d-separation of `q.x` and `q.y` given `q.cond` in `g`.
///
/// Walk-based: connected iff some walk has all colliders in the conditioning
/// set and all non-colliders outside it.
///
/// # Panics
/// If the query mentions a node outside the graph.
pub fn d_separated(g: &DirectedMixedGraph, q: &SeparationQuery) -> bool {
    q.check_range(g.n());
    connected_from(g, q.x, mask_of(&q.cond)) & bit(q.y) == 0
}

/// σ-separation, computed as d-separation in the acyclification of `g`.
pub fn sigma_separated(g: &DirectedMixedGraph, q: &SeparationQuery) -> bool {
    d_separated(&acyclify(g), q)
}
