use super::{bit, bits, Adjacency, DirectedMixedGraph};

/// For each node, the set of nodes reachable through one or more directed edges.
fn directed_reach<G: Adjacency>(g: &G, n: usize) -> Vec<u64> {
    let mut reach: Vec<u64> = (0..n).map(|v| g.children(v)).collect();
    loop {
        let mut changed = false;
        for v in 0..n {
            let extended = bits(reach[v]).fold(reach[v], |acc, w| acc | g.children(w));
            if extended != reach[v] {
                reach[v] = extended;
                changed = true;
            }
        }
        if !changed {
            return reach;
        }
    }
}

/// SCC membership mask per node (always contains the node itself).
pub(crate) fn scc_masks<G: Adjacency>(g: &G, n: usize) -> Vec<u64> {
    let reach = directed_reach(g, n);
    (0..n)
        .map(|v| {
            bit(v) | bits(reach[v]).filter(|&w| reach[w] & bit(v) != 0).fold(0, |m, w| m | bit(w))
        })
        .collect()
}

/// Partition of the nodes into strongly connected components with respect to
/// directed edges. Components are listed by their smallest member, members in
/// ascending order.
pub fn strongly_connected_components(g: &DirectedMixedGraph) -> Vec<Vec<usize>> {
    let masks = scc_masks(g, g.n());
    let mut seen = 0u64;
    let mut out = Vec::new();
    for v in 0..g.n() {
        if seen & bit(v) == 0 {
            seen |= masks[v];
            out.push(bits(masks[v]).collect());
        }
    }
    out
}

/// True iff some directed cycle exists (an SCC with two or more nodes).
pub fn has_directed_cycle(g: &DirectedMixedGraph) -> bool {
    scc_masks(g, g.n()).iter().any(|m| m.count_ones() >= 2)
}

/// Replace every directed loop by a fully connected cluster.
///
/// `v -> w` is kept iff `v` lies outside the SCC of `w` and points into some
/// member of it; `v <-> w` is present iff both share a non-trivial SCC or some
/// members of their SCCs are confounded in `g`.
pub fn acyclify(g: &DirectedMixedGraph) -> DirectedMixedGraph {
    let n = g.n();
    let scc = scc_masks(g, n);
    let mut out = DirectedMixedGraph::new(n).expect("same node count");
    for w in 0..n {
        let into_scc = bits(scc[w]).fold(0, |m, w2| m | g.parents_mask(w2));
        for v in bits(into_scc & !scc[w]) {
            out.add_directed(v, w).expect("valid edge");
        }
    }
    for v in 0..n {
        let confounded = bits(scc[v]).fold(0, |m, v2| m | g.spouses_mask(v2));
        let clusters = bits(confounded).fold(0, |m, u| m | scc[u]);
        let partners = (clusters | scc[v]) & !bit(v);
        for w in bits(partners) {
            out.add_bidirected(v, w).expect("valid edge");
        }
    }
    out
}
