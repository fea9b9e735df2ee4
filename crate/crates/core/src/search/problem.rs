//! Constraint sets compiled against the feature bitmask encoding of graphs.

use std::collections::BTreeMap;

use crate::ci::{CiKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::features::{feature_count, features, Feature};
use crate::graph::{bit, bits, connected_from, mask_of, Adjacency, DirectedMixedGraph};
use crate::scm::Experiment;

use super::SeparationMode;

/// Largest node count whose feature space fits in a `u64`.
pub const MAX_SEARCH_NODES: usize = 7;

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Adj {
    ch: [u64; MAX_SEARCH_NODES],
    pa: [u64; MAX_SEARCH_NODES],
    sp: [u64; MAX_SEARCH_NODES],
}

impl Adjacency for Adj {
    #[inline]
    fn children(&self, v: usize) -> u64 {
        self.ch[v]
    }
    #[inline]
    fn parents(&self, v: usize) -> u64 {
        self.pa[v]
    }
    #[inline]
    fn spouses(&self, v: usize) -> u64 {
        self.sp[v]
    }
}

#[derive(Clone, Copy, Debug)]
struct Group {
    exp: usize,
    x: usize,
    cond: u64,
}

#[derive(Clone, Copy, Debug)]
struct Target {
    group: u32,
    y: u64,
    independent: bool,
    weight: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub n: usize,
    pub nf: usize,
    mode: SeparationMode,
    edges: Vec<(bool, usize, usize)>,
    exps: Vec<u64>,
    groups: Vec<Group>,
    targets: Vec<Target>,
}

impl Problem {
    pub fn compile(k: &ConstraintSet, setup: &[Experiment], mode: SeparationMode) -> Result<Self> {
        let n = setup
            .first()
            .map(Experiment::n)
            .ok_or_else(|| Error::Usage("the setup has no experiments".into()))?;
        if n > MAX_SEARCH_NODES {
            return Err(Error::Usage(format!(
                "graph search supports at most {MAX_SEARCH_NODES} nodes, got {n}"
            )));
        }
        if setup.iter().any(|e| e.n() != n) {
            return Err(Error::Usage("experiments disagree on the node count".into()));
        }
        let mut keyed: BTreeMap<(usize, usize, u64), Vec<Target>> = BTreeMap::new();
        for c in k.constraints() {
            if c.experiment >= setup.len() {
                return Err(Error::Usage(format!(
                    "constraint refers to experiment {} but the setup has {}",
                    c.experiment,
                    setup.len()
                )));
            }
            if c.j >= n || c.s.iter().any(|&v| v >= n) {
                return Err(Error::Usage(format!("constraint mentions a node outside 0..{n}")));
            }
            keyed.entry((c.experiment, c.i, mask_of(&c.s))).or_default().push(Target {
                group: 0,
                y: bit(c.j),
                independent: c.kind == CiKind::Independent,
                weight: c.weight,
            });
        }
        let mut groups = Vec::with_capacity(keyed.len());
        let mut targets = Vec::with_capacity(k.len());
        for ((exp, x, cond), ts) in keyed {
            let g = groups.len() as u32;
            groups.push(Group { exp, x, cond });
            targets.extend(ts.into_iter().map(|t| Target { group: g, ..t }));
        }
        let edges = features(n)
            .into_iter()
            .map(|f| match f {
                Feature::Directed { from, to } => (true, from, to),
                Feature::Bidirected { a, b } => (false, a, b),
            })
            .collect();
        Ok(Self {
            n,
            nf: feature_count(n),
            mode,
            edges,
            exps: setup.iter().map(|e| mask_of(e.intervened())).collect(),
            groups,
            targets,
        })
    }

    pub fn all_features(&self) -> u64 {
        if self.nf == 64 {
            u64::MAX
        } else {
            (1u64 << self.nf) - 1
        }
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    pub fn graph(&self, mask: u64) -> DirectedMixedGraph {
        let mut g = DirectedMixedGraph::new(self.n).expect("valid size");
        for f in bits(mask) {
            let (directed, a, b) = self.edges[f];
            if directed {
                g.add_directed(a, b).expect("valid edge");
            } else {
                g.add_bidirected(a, b).expect("valid edge");
            }
        }
        g
    }

    #[cfg(test)]
    pub fn mask_of_graph(&self, g: &DirectedMixedGraph) -> u64 {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &(directed, a, b))| {
                if directed {
                    g.has_directed(a, b)
                } else {
                    g.has_bidirected(a, b)
                }
            })
            .fold(0, |m, (f, _)| m | bit(f))
    }

    fn base(&self, mask: u64) -> Adj {
        let mut adj = Adj::default();
        for f in bits(mask) {
            let (directed, a, b) = self.edges[f];
            if directed {
                adj.ch[a] |= bit(b);
                adj.pa[b] |= bit(a);
            } else {
                adj.sp[a] |= bit(b);
                adj.sp[b] |= bit(a);
            }
        }
        adj
    }

    /// The manipulated graph of every experiment, acyclified in sigma mode.
    pub fn views(&self, mask: u64) -> Vec<Adj> {
        let base = self.base(mask);
        self.exps
            .iter()
            .map(|&j| {
                let g = intervene(&base, j, self.n);
                match self.mode {
                    SeparationMode::D => g,
                    SeparationMode::Sigma => acyclify(&g, self.n),
                }
            })
            .collect()
    }

    /// Total weight of constraints the graph does not entail, in target order.
    pub fn loss(&self, mask: u64) -> f64 {
        let views = self.views(mask);
        let mut loss = 0.0;
        let mut cache = (u32::MAX, 0u64);
        for t in &self.targets {
            let reach = self.reach(&views, t.group, &mut cache);
            if (reach & t.y != 0) == t.independent {
                loss += t.weight;
            }
        }
        loss
    }

    #[inline]
    fn reach(&self, views: &[Adj], group: u32, cache: &mut (u32, u64)) -> u64 {
        if cache.0 != group {
            let g = self.groups[group as usize];
            *cache = (group, connected_from(&views[g.exp], g.x, g.cond));
        }
        cache.1
    }

    /// Classify the undetermined targets `undet` against the smallest
    /// (`present`) and largest (`maximal`) graphs of a search node. Targets
    /// decided either way are dropped; the weight of those violated in every
    /// completion is returned. `which` selects the graphs that changed.
    pub fn refine(
        &self,
        present: Option<&[Adj]>,
        maximal: Option<&[Adj]>,
        undet: &[u32],
        keep: &mut Vec<u32>,
    ) -> f64 {
        keep.clear();
        let mut violated = 0.0;
        let mut cp = (u32::MAX, 0u64);
        let mut cm = (u32::MAX, 0u64);
        for &ti in undet {
            let t = &self.targets[ti as usize];
            if let Some(views) = present {
                if self.reach(views, t.group, &mut cp) & t.y != 0 {
                    // connected in every completion
                    if t.independent {
                        violated += t.weight;
                    }
                    continue;
                }
            }
            if let Some(views) = maximal {
                if self.reach(views, t.group, &mut cm) & t.y == 0 {
                    // separated in every completion
                    if !t.independent {
                        violated += t.weight;
                    }
                    continue;
                }
            }
            keep.push(ti);
        }
        violated
    }

    /// Disjoint one-feature lookahead at a search node. Each undetermined
    /// target is charged to at most one open feature: an independence target
    /// to a feature whose addition alone connects it, a dependence target to
    /// a feature whose removal alone separates it. Returns the per-feature
    /// charges for turning the feature on and off.
    pub fn lookahead(&self, present: u64, open: u64, undet: &[u32], on: &mut [f64], off: &mut [f64]) {
        let mut used = vec![false; undet.len()];
        for f in bits(open) {
            on[f] = 0.0;
            off[f] = 0.0;
            let lo = self.views(present | bit(f));
            let hi = self.views((present | open) & !bit(f));
            let mut cp = (u32::MAX, 0u64);
            let mut cm = (u32::MAX, 0u64);
            for (u, &ti) in used.iter_mut().zip(undet) {
                if *u {
                    continue;
                }
                let t = &self.targets[ti as usize];
                if t.independent {
                    if self.reach(&lo, t.group, &mut cp) & t.y != 0 {
                        on[f] += t.weight;
                        *u = true;
                    }
                } else if self.reach(&hi, t.group, &mut cm) & t.y == 0 {
                    off[f] += t.weight;
                    *u = true;
                }
            }
        }
    }

    /// Per-feature weight of constraints on the feature's endpoints, used to
    /// order branching.
    pub fn pair_weights(&self) -> Vec<f64> {
        let mut pair = vec![0.0; self.n * self.n];
        for t in &self.targets {
            let g = self.groups[t.group as usize];
            let y = t.y.trailing_zeros() as usize;
            pair[g.x * self.n + y] += t.weight;
            pair[y * self.n + g.x] += t.weight;
        }
        self.edges.iter().map(|&(_, a, b)| pair[a * self.n + b]).collect()
    }
}

fn intervene(g: &Adj, j: u64, n: usize) -> Adj {
    if j == 0 {
        return *g;
    }
    let mut out = *g;
    for v in 0..n {
        out.ch[v] &= !j;
        if j & bit(v) != 0 {
            out.pa[v] = 0;
            out.sp[v] = 0;
        } else {
            out.sp[v] &= !j;
        }
    }
    out
}

fn acyclify(g: &Adj, n: usize) -> Adj {
    // transitive closure of the directed part
    let mut reach = g.ch;
    loop {
        let mut changed = false;
        for v in 0..n {
            let r = bits(reach[v]).fold(reach[v], |acc, w| acc | reach[w]);
            if r != reach[v] {
                reach[v] = r;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut scc = [0u64; MAX_SEARCH_NODES];
    for v in 0..n {
        scc[v] = bit(v) | bits(reach[v]).filter(|&w| reach[w] & bit(v) != 0).fold(0, |m, w| m | bit(w));
    }
    if scc[..n].iter().all(|m| m.count_ones() == 1) {
        return *g;
    }
    let mut out = Adj::default();
    for w in 0..n {
        let into = bits(scc[w]).fold(0, |m, w2| m | g.pa[w2]) & !scc[w];
        out.pa[w] = into;
        for v in bits(into) {
            out.ch[v] |= bit(w);
        }
    }
    for v in 0..n {
        let confounded = bits(scc[v]).fold(0, |m, v2| m | g.sp[v2]);
        let clusters = bits(confounded).fold(0, |m, u| m | scc[u]);
        out.sp[v] = (clusters | scc[v]) & !bit(v);
    }
    out
}
