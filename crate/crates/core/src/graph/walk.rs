use crate::error::{Error, Result};

use super::DirectedMixedGraph;

/// How a walk traverses one edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Along a directed edge `from -> to`.
    Forward,
    /// Against a directed edge, i.e. the graph holds `to -> from`.
    Backward,
    /// Along a bidirected edge `from <-> to`.
    Bidirected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WalkStep {
    pub from: usize,
    pub to: usize,
    pub kind: StepKind,
}

impl WalkStep {
    pub fn new(from: usize, to: usize, kind: StepKind) -> Self {
        Self { from, to, kind }
    }

    /// Whether the traversed edge has an arrowhead at the step's start node.
    pub fn head_at_start(&self) -> bool {
        matches!(self.kind, StepKind::Backward | StepKind::Bidirected)
    }

    /// Whether the traversed edge has an arrowhead at the step's end node.
    pub fn head_at_end(&self) -> bool {
        matches!(self.kind, StepKind::Forward | StepKind::Bidirected)
    }

    /// Whether this step uses an edge that exists in `g`.
    pub fn exists_in(&self, g: &DirectedMixedGraph) -> bool {
        match self.kind {
            StepKind::Forward => g.has_directed(self.from, self.to),
            StepKind::Backward => g.has_directed(self.to, self.from),
            StepKind::Bidirected => g.has_bidirected(self.from, self.to),
        }
    }
}

/// A sequence of edge traversals in which consecutive steps share a node.
/// Edges and nodes may repeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    steps: Vec<WalkStep>,
}

impl Walk {
    pub fn new(steps: Vec<WalkStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Usage("a walk needs at least one step".into()));
        }
        for pair in steps.windows(2) {
            if pair[0].to != pair[1].from {
                return Err(Error::Usage(format!(
                    "walk steps do not chain: {:?} then {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(s) = steps.iter().find(|s| s.from == s.to) {
            return Err(Error::Usage(format!("walk step {s:?} is a self-loop")));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[WalkStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Node sequence visited by the walk (`len() + 1` entries).
    pub fn nodes(&self) -> Vec<usize> {
        std::iter::once(self.steps[0].from)
            .chain(self.steps.iter().map(|s| s.to))
            .collect()
    }

    pub fn start(&self) -> usize {
        self.steps[0].from
    }

    pub fn end(&self) -> usize {
        self.steps[self.steps.len() - 1].to
    }

    /// Whether the walk is connecting given `cond`: every collider lies in
    /// `cond` and every interior non-collider lies outside it.
    pub fn is_connecting(&self, cond: &[usize]) -> bool {
        let nodes = self.nodes();
        (1..self.steps.len()).all(|p| {
            let collider = self.steps[p - 1].head_at_end() && self.steps[p].head_at_start();
            collider == cond.contains(&nodes[p])
        })
    }
}

/// Whether the interior node at `position` (1..walk.len()) is a collider,
/// i.e. both adjacent steps carry an arrowhead into it.
pub fn is_collider(walk: &Walk, position: usize) -> Result<bool> {
    if position == 0 || position >= walk.len() {
        return Err(Error::Usage(format!(
            "position {position} is not an interior node of a walk with {} steps",
            walk.len()
        )));
    }
    let steps = walk.steps();
    Ok(steps[position - 1].head_at_end() && steps[position].head_at_start())
}

fn steps_from(g: &DirectedMixedGraph, v: usize) -> Vec<WalkStep> {
    let mut out = Vec::new();
    for w in (0..g.n()).filter(|&w| w != v) {
        if g.has_directed(v, w) {
            out.push(WalkStep::new(v, w, StepKind::Forward));
        }
        if g.has_directed(w, v) {
            out.push(WalkStep::new(v, w, StepKind::Backward));
        }
        if g.has_bidirected(v, w) {
            out.push(WalkStep::new(v, w, StepKind::Bidirected));
        }
    }
    out
}

/// A walk of at most `max_len` steps from `x` to `y` that is connecting given
/// `cond`, found by extending walks one step at a time. Walks ending in the
/// same step extend identically, so one per final step is kept.
pub fn connecting_walk_within(
    g: &DirectedMixedGraph,
    x: usize,
    y: usize,
    cond: &[usize],
    max_len: usize,
) -> Option<Walk> {
    let mut layer: Vec<Vec<WalkStep>> = steps_from(g, x).into_iter().map(|s| vec![s]).collect();
    let mut seen: std::collections::HashSet<WalkStep> = layer.iter().map(|w| w[0]).collect();
    for _ in 0..max_len {
        if let Some(w) = layer.iter().find(|w| w[w.len() - 1].to == y) {
            return Walk::new(w.clone()).ok();
        }
        let mut next = Vec::new();
        for w in &layer {
            let last = w[w.len() - 1];
            let v = last.to;
            for s in steps_from(g, v) {
                let collider = last.head_at_end() && s.head_at_start();
                if collider != cond.contains(&v) || !seen.insert(s) {
                    continue;
                }
                let mut longer = w.clone();
                longer.push(s);
                next.push(longer);
            }
        }
        layer = next;
    }
    None
}
