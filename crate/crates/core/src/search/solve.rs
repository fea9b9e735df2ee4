//! Exact branch-and-bound over feature assignments, with local search for the
//! initial incumbent and simulated annealing when the node budget runs out.

use rand::Rng;
use serde::Serialize;

use super::problem::Problem;
use super::SearchConfig;
use crate::graph::bit;

/// Losses closer than this are treated as equal.
pub(crate) const LOSS_EPS: f64 = 1e-9;

/// Progress record for the optional solver trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub nodes: u64,
    pub incumbent: f64,
    pub bound: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Solution {
    pub mask: u64,
    pub loss: f64,
    pub certified: bool,
    pub nodes: u64,
}

/// `(loss, edges)` lexicographically better than `(best_loss, best_edges)`.
fn better(loss: f64, edges: u32, best_loss: f64, best_edges: u32) -> bool {
    loss < best_loss - LOSS_EPS || (loss <= best_loss + LOSS_EPS && edges < best_edges)
}

/// Steepest single-flip descent on `(loss, edges)` from `start`.
fn descend(p: &Problem, start: u64, free: u64) -> (u64, f64) {
    let mut mask = start;
    let mut loss = p.loss(mask);
    loop {
        let mut step = None;
        let (mut bl, mut be) = (loss, mask.count_ones());
        for f in crate::graph::bits(free) {
            let m = mask ^ bit(f);
            let l = p.loss(m);
            if better(l, m.count_ones(), bl, be) {
                step = Some(m);
                bl = l;
                be = m.count_ones();
            }
        }
        match step {
            Some(m) => {
                mask = m;
                loss = bl;
            }
            None => return (mask, loss),
        }
    }
}

struct Bnb<'a, 'b> {
    p: &'a Problem,
    order: Vec<usize>,
    best_mask: u64,
    best_loss: f64,
    best_edges: u32,
    nodes: u64,
    budget: u64,
    exhausted: bool,
    tie_break: bool,
    trace: Option<&'b mut dyn FnMut(&TraceEvent)>,
}

impl Bnb<'_, '_> {
    fn emit(&mut self, bound: f64) {
        if let Some(t) = self.trace.as_mut() {
            t(&TraceEvent {
                nodes: self.nodes,
                incumbent: self.best_loss,
                bound,
            });
        }
    }

    fn pruned(&self, lb: f64, present: u64) -> bool {
        if self.tie_break {
            lb > self.best_loss + LOSS_EPS
                || (lb >= self.best_loss - LOSS_EPS && present.count_ones() >= self.best_edges)
        } else {
            lb >= self.best_loss - LOSS_EPS
        }
    }

    /// `present`: decided-present features; `open`: undecided features;
    /// `undet`: constraints not yet decided for every completion.
    fn visit(&mut self, present: u64, open: u64, lb: f64, undet: &[u32]) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        if self.nodes % 100_000 == 0 {
            self.emit(lb);
        }
        if self.pruned(lb, present) {
            return;
        }
        if undet.is_empty() {
            // remaining features are irrelevant; leave them absent
            if better(lb, present.count_ones(), self.best_loss, self.best_edges) {
                self.best_mask = present;
                self.best_loss = lb;
                self.best_edges = present.count_ones();
                self.emit(lb);
            }
            return;
        }
        let mut on = [0.0; 64];
        let mut off = [0.0; 64];
        self.p.lookahead(present, open, undet, &mut on, &mut off);
        let mut base = lb;
        let mut pick: Option<(usize, f64, f64)> = None;
        for f in crate::graph::bits(open) {
            let m = on[f].min(off[f]);
            base += m;
            if pick.is_none_or(|(_, a, b)| m > a || (m == a && on[f] + off[f] > b)) {
                pick = Some((f, m, on[f] + off[f]));
            }
        }
        if self.pruned(base, present) {
            return;
        }
        let f = match pick {
            Some((f, _, s)) if s > 0.0 => bit(f),
            _ => {
                let k = self.order.iter().find(|&&k| open & bit(k) != 0);
                bit(*k.expect("undetermined constraints with every feature decided"))
            }
        };
        let open = open & !f;
        let mut keep = Vec::with_capacity(undet.len());
        let absent_first = self.best_mask & f == 0;
        for take in [!absent_first, absent_first] {
            if take {
                let views = self.p.views(present | f);
                let add = self.p.refine(Some(&views), None, undet, &mut keep);
                self.visit(present | f, open, lb + add, &keep.clone());
            } else {
                let views = self.p.views(present | open);
                let add = self.p.refine(None, Some(&views), undet, &mut keep);
                self.visit(present, open, lb + add, &keep.clone());
            }
            if self.exhausted {
                return;
            }
        }
    }
}

/// Minimise over graphs with `fixed_on` present and `fixed_off` absent.
/// With `tie_break` the result is also edge-minimal among optimal graphs;
/// without it only the loss is guaranteed optimal.
pub(crate) fn solve(
    p: &Problem,
    cfg: &SearchConfig,
    fixed_on: u64,
    fixed_off: u64,
    hint: Option<u64>,
    tie_break: bool,
    trace: Option<&mut dyn FnMut(&TraceEvent)>,
) -> Solution {
    let all = p.all_features();
    let free = all & !fixed_on & !fixed_off;
    let mut start = vec![fixed_on];
    if let Some(h) = hint {
        start.push((h | fixed_on) & !fixed_off);
    }
    let (mut inc_mask, mut inc_loss) = (0u64, f64::INFINITY);
    for s in start {
        let (m, l) = descend(p, s, free);
        if better(l, m.count_ones(), inc_loss, inc_mask.count_ones()) {
            inc_mask = m;
            inc_loss = l;
        }
    }
    if p.n > cfg.exact_node_limit {
        return anneal(p, cfg, inc_mask, free, fixed_on ^ fixed_off);
    }
    let weights = p.pair_weights();
    let mut order: Vec<usize> = crate::graph::bits(free).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut bnb = Bnb {
        p,
        order,
        best_mask: inc_mask,
        best_loss: inc_loss,
        best_edges: inc_mask.count_ones(),
        nodes: 0,
        budget: cfg.node_budget,
        exhausted: false,
        tie_break,
        trace,
    };
    let undet: Vec<u32> = (0..p.target_count() as u32).collect();
    let mut keep = Vec::new();
    let lo = p.views(fixed_on);
    let hi = p.views(fixed_on | free);
    let lb = p.refine(Some(&lo), Some(&hi), &undet, &mut keep);
    bnb.visit(fixed_on, free, lb, &keep);
    bnb.emit(bnb.best_loss);
    if bnb.exhausted {
        log::debug!("node budget exhausted after {} nodes; annealing", bnb.nodes);
        let mut out = anneal(p, cfg, bnb.best_mask, free, fixed_on ^ fixed_off);
        out.nodes += bnb.nodes;
        return out;
    }
    Solution {
        mask: bnb.best_mask,
        // canonical summation order
        loss: p.loss(bnb.best_mask),
        certified: true,
        nodes: bnb.nodes,
    }
}

/// Simulated annealing over single-feature flips with geometric cooling.
fn anneal(p: &Problem, cfg: &SearchConfig, start: u64, free: u64, salt: u64) -> Solution {
    let flips: Vec<usize> = crate::graph::bits(free).collect();
    let mut rng = crate::rng::stream(cfg.anneal_seed, &[start, salt]);
    let mut mask = start;
    let mut loss = p.loss(mask);
    let (mut best, mut best_loss) = (mask, loss);
    if !flips.is_empty() && cfg.anneal_steps > 0 {
        let cooling = (cfg.anneal_end_temp / cfg.anneal_start_temp).powf(1.0 / cfg.anneal_steps as f64);
        let mut temp = cfg.anneal_start_temp;
        for _ in 0..cfg.anneal_steps {
            let m = mask ^ bit(flips[rng.random_range(0..flips.len())]);
            let l = p.loss(m);
            let delta = l - loss;
            if delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp() {
                mask = m;
                loss = l;
                if better(l, m.count_ones(), best_loss, best.count_ones()) {
                    best = m;
                    best_loss = l;
                }
            }
            temp *= cooling;
        }
    }
    let (mask, loss) = descend(p, best, free);
    Solution {
        mask,
        loss,
        certified: false,
        nodes: 0,
    }
}

/// Optimal loss with each feature forced present and forced absent.
#[derive(Clone, Debug)]
pub(crate) struct Sides {
    pub on: Vec<f64>,
    pub off: Vec<f64>,
    pub certified: bool,
    pub nodes: u64,
}

/// One search that keeps an incumbent for both sides of every feature. A
/// subtree is cut only when no incumbent it could still improve remains.
struct Multi<'a> {
    p: &'a Problem,
    order: Vec<usize>,
    hint: u64,
    on: Vec<f64>,
    off: Vec<f64>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Multi<'_> {
    /// Whether some incumbent could still improve below this node, given the
    /// node bound `base` and the lookahead charges.
    fn hopeless(&self, base: f64, present: u64, open: u64, on: &[f64], off: &[f64]) -> bool {
        for f in 0..self.p.nf {
            let b = bit(f);
            let live = if open & b != 0 {
                let m = on[f].min(off[f]);
                base - m + on[f] < self.on[f] - LOSS_EPS || base - m + off[f] < self.off[f] - LOSS_EPS
            } else if present & b != 0 {
                base < self.on[f] - LOSS_EPS
            } else {
                base < self.off[f] - LOSS_EPS
            };
            if live {
                return false;
            }
        }
        true
    }

    fn settle(&mut self, loss: f64, present: u64, open: u64) {
        for f in 0..self.p.nf {
            let b = bit(f);
            if present & b != 0 || open & b != 0 {
                self.on[f] = self.on[f].min(loss);
            }
            if present & b == 0 {
                self.off[f] = self.off[f].min(loss);
            }
        }
    }

    fn visit(&mut self, present: u64, open: u64, lb: f64, undet: &[u32]) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        if undet.is_empty() {
            self.settle(lb, present, open);
            return;
        }
        let zero = [0.0; 64];
        if self.hopeless(lb, present, open, &zero, &zero) {
            return;
        }
        let mut on = [0.0; 64];
        let mut off = [0.0; 64];
        self.p.lookahead(present, open, undet, &mut on, &mut off);
        let mut base = lb;
        let mut pick: Option<(usize, f64, f64)> = None;
        for f in crate::graph::bits(open) {
            let m = on[f].min(off[f]);
            base += m;
            let key = (m, on[f] + off[f]);
            if pick.is_none_or(|(_, a, b)| key.0 > a || (key.0 == a && key.1 > b)) {
                pick = Some((f, key.0, key.1));
            }
        }
        if self.hopeless(base, present, open, &on, &off) {
            return;
        }
        let f = match pick {
            Some((f, _, s)) if s > 0.0 => f,
            _ => *self
                .order
                .iter()
                .find(|&&k| open & bit(k) != 0)
                .expect("undetermined constraints with every feature decided"),
        };
        let f = bit(f);
        let open = open & !f;
        let mut keep = Vec::with_capacity(undet.len());
        let absent_first = self.hint & f == 0;
        for take in [!absent_first, absent_first] {
            if take {
                let views = self.p.views(present | f);
                let add = self.p.refine(Some(&views), None, undet, &mut keep);
                self.visit(present | f, open, lb + add, &keep.clone());
            } else {
                let views = self.p.views(present | open);
                let add = self.p.refine(None, Some(&views), undet, &mut keep);
                self.visit(present, open, lb + add, &keep.clone());
            }
            if self.exhausted {
                return;
            }
        }
    }
}

/// Both pinned optima of every feature, seeded from the optimum `best`.
pub(crate) fn solve_sides(p: &Problem, cfg: &SearchConfig, best: &Solution) -> Sides {
    let all = p.all_features();
    let mut on = vec![f64::INFINITY; p.nf];
    let mut off = vec![f64::INFINITY; p.nf];
    for f in 0..p.nf {
        let b = bit(f);
        let (m, l) = descend(p, best.mask ^ b, all & !b);
        let (with, without) = if best.mask & b != 0 { (best.loss, l) } else { (l, best.loss) };
        on[f] = with;
        off[f] = without;
        // the descent's end point also bounds the other features
        for g in 0..p.nf {
            if m & bit(g) != 0 {
                on[g] = on[g].min(l);
            } else {
                off[g] = off[g].min(l);
            }
        }
    }
    if p.n > cfg.exact_node_limit || !best.certified {
        return Sides {
            on,
            off,
            certified: false,
            nodes: 0,
        };
    }
    let weights = p.pair_weights();
    let mut order: Vec<usize> = (0..p.nf).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut m = Multi {
        p,
        order,
        hint: best.mask,
        on,
        off,
        nodes: 0,
        budget: cfg.node_budget,
        exhausted: false,
    };
    let undet: Vec<u32> = (0..p.target_count() as u32).collect();
    let mut keep = Vec::new();
    let lo = p.views(0);
    let hi = p.views(all);
    let lb = p.refine(Some(&lo), Some(&hi), &undet, &mut keep);
    m.visit(0, all, lb, &keep);
    Sides {
        certified: !m.exhausted,
        nodes: m.nodes,
        on: m.on,
        off: m.off,
    }
}
