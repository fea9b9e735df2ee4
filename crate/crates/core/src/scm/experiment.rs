use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One data-generating condition: the set of surgically intervened nodes.
/// The unintervened complement is derived on demand.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Experiment {
    n: usize,
    intervened: Vec<usize>,
}

impl Experiment {
    pub fn new(n: usize, mut intervened: Vec<usize>) -> Result<Self> {
        intervened.sort_unstable();
        intervened.dedup();
        if let Some(&bad) = intervened.iter().find(|&&v| v >= n) {
            return Err(Error::Usage(format!(
                "intervened node {bad} out of range for {n} nodes"
            )));
        }
        Ok(Self { n, intervened })
    }

    /// The null (purely observational) experiment.
    pub fn observational(n: usize) -> Self {
        Self {
            n,
            intervened: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn intervened(&self) -> &[usize] {
        &self.intervened
    }

    pub fn unintervened(&self) -> Vec<usize> {
        (0..self.n).filter(|v| !self.is_intervened(*v)).collect()
    }

    pub fn is_intervened(&self, v: usize) -> bool {
        self.intervened.binary_search(&v).is_ok()
    }

    pub fn is_observational(&self) -> bool {
        self.intervened.is_empty()
    }
}

/// All setup ids of the evaluation grid, in table order.
pub const SETUP_IDS: [u32; 21] = [
    0, 11, 12, 13, 14, 15, 21, 22, 23, 24, 25, 31, 32, 33, 34, 35, 41, 42, 43, 44, 45,
];

/// Experiments of a setup from the evaluation grid.
///
/// Id `0` is observational only. Id `sc` (intervention size `s` in 1..=4,
/// count `c` in 1..=5) is the null experiment followed by `c` interventions
/// on the cyclic windows `{k, k+1, .., k+s-1} mod n` for `k = 0..c`.
pub fn experiment_setup(setup_id: u32, n_nodes: usize) -> Result<Vec<Experiment>> {
    if !SETUP_IDS.contains(&setup_id) {
        return Err(Error::UnknownSetup { id: setup_id });
    }
    if n_nodes < 5 {
        return Err(Error::Usage(format!(
            "setup {setup_id} is defined for at least 5 nodes, got {n_nodes}"
        )));
    }
    let mut out = vec![Experiment::observational(n_nodes)];
    if setup_id == 0 {
        return Ok(out);
    }
    let size = (setup_id / 10) as usize;
    let count = (setup_id % 10) as usize;
    for k in 0..count {
        let set = (0..size).map(|t| (k + t) % n_nodes).collect();
        out.push(Experiment::new(n_nodes, set)?);
    }
    Ok(out)
}

/// Intervention group of a setup id: 0 for observational, else the size digit.
pub fn setup_group(setup_id: u32) -> u32 {
    setup_id / 10
}

/// Every distinct experiment used anywhere in the evaluation grid.
pub(crate) fn grid_experiments(n_nodes: usize) -> Vec<Experiment> {
    let mut all: Vec<Experiment> = SETUP_IDS
        .iter()
        .flat_map(|&id| experiment_setup(id, n_nodes).expect("grid setup"))
        .collect();
    all.sort();
    all.dedup();
    all
}
