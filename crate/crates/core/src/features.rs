//! The binary feature space (every possible directed and bidirected edge) and
//! per-feature score tables shared by all discovery methods.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedMixedGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Directed { from: usize, to: usize },
    /// Stored with `a < b`.
    Bidirected { a: usize, b: usize },
}

impl Feature {
    pub fn bidirected(a: usize, b: usize) -> Self {
        Feature::Bidirected {
            a: a.min(b),
            b: a.max(b),
        }
    }

    pub fn is_present_in(&self, g: &DirectedMixedGraph) -> bool {
        match *self {
            Feature::Directed { from, to } => g.has_directed(from, to),
            Feature::Bidirected { a, b } => g.has_bidirected(a, b),
        }
    }

    fn parts(&self) -> (&'static str, usize, usize) {
        match *self {
            Feature::Directed { from, to } => ("dir", from, to),
            Feature::Bidirected { a, b } => ("bidir", a, b),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Feature::Directed { from, to } => write!(f, "{from}->{to}"),
            Feature::Bidirected { a, b } => write!(f, "{a}<->{b}"),
        }
    }
}

pub fn feature_count(n: usize) -> usize {
    n * (n.saturating_sub(1)) * 3 / 2
}

/// Canonical feature order: directed edges lexicographically by `(from, to)`,
/// then bidirected edges lexicographically by `(a, b)`.
pub fn features(n: usize) -> Vec<Feature> {
    let directed = (0..n).flat_map(|from| {
        (0..n)
            .filter(move |&to| to != from)
            .map(move |to| Feature::Directed { from, to })
    });
    let bidirected =
        (0..n).flat_map(|a| (a + 1..n).map(move |b| Feature::Bidirected { a, b }));
    directed.chain(bidirected).collect()
}

/// Presence of every feature in `g`, in canonical order.
pub fn feature_labels(g: &DirectedMixedGraph) -> Vec<bool> {
    features(g.n()).iter().map(|f| f.is_present_in(g)).collect()
}

/// Graph whose present features are exactly the `true` entries.
pub fn graph_from_labels(n: usize, labels: &[bool]) -> Result<DirectedMixedGraph> {
    let fs = features(n);
    if fs.len() != labels.len() {
        return Err(Error::Usage(format!(
            "expected {} feature labels, got {}",
            fs.len(),
            labels.len()
        )));
    }
    let mut g = DirectedMixedGraph::new(n)?;
    for (f, &on) in fs.iter().zip(labels) {
        if on {
            match *f {
                Feature::Directed { from, to } => g.add_directed(from, to)?,
                Feature::Bidirected { a, b } => g.add_bidirected(a, b)?,
            }
        }
    }
    Ok(g)
}

/// One real-valued confidence per feature; larger means "more likely present".
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScoreTable {
    n: usize,
    method: String,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    feature_type: String,
    from: usize,
    to: usize,
    score: f64,
    method: String,
}

impl FeatureScoreTable {
    pub fn new(n: usize, method: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != feature_count(n) {
            return Err(Error::Usage(format!(
                "score table for {n} nodes needs {} scores, got {}",
                feature_count(n),
                scores.len()
            )));
        }
        Ok(Self {
            n,
            method: method.into(),
            scores,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, f: Feature) -> f64 {
        let idx = features(self.n)
            .iter()
            .position(|g| *g == f)
            .expect("feature belongs to this table's node count");
        self.scores[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, f64)> + '_ {
        features(self.n).into_iter().zip(self.scores.iter().copied())
    }

    /// Binary predictions: present iff `score > threshold`.
    pub fn predict(&self, threshold: f64) -> Vec<bool> {
        self.scores.iter().map(|&s| s > threshold).collect()
    }

    /// CSV with header `feature_type,from,to,score,method`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (f, score) in self.iter() {
            let (kind, from, to) = f.parts();
            out.serialize(ScoreRow {
                feature_type: kind.into(),
                from,
                to,
                score,
                method: self.method.clone(),
            })?;
        }
        out.flush().map_err(|e| Error::io("<scores>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, n: usize) -> Result<Self> {
        let fs = features(n);
        let mut scores = vec![f64::NAN; fs.len()];
        let mut method = None;
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: ScoreRow = row?;
            let f = match row.feature_type.as_str() {
                "dir" => Feature::Directed {
                    from: row.from,
                    to: row.to,
                },
                "bidir" => Feature::bidirected(row.from, row.to),
                other => return Err(Error::Usage(format!("unknown feature type {other:?}"))),
            };
            let idx = fs
                .iter()
                .position(|g| *g == f)
                .ok_or_else(|| Error::Usage(format!("feature {f} outside a {n}-node space")))?;
            scores[idx] = row.score;
            method.get_or_insert(row.method);
        }
        if let Some(missing) = fs.iter().zip(&scores).find(|(_, s)| s.is_nan()) {
            return Err(Error::Usage(format!("score table lacks feature {}", missing.0)));
        }
        Self::new(n, method.unwrap_or_default(), scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_space_layout() {
        let fs = features(5);
        assert_eq!(fs.len(), 30);
        assert_eq!(feature_count(5), 30);
        assert_eq!(fs[0], Feature::Directed { from: 0, to: 1 });
        assert_eq!(fs[4], Feature::Directed { from: 1, to: 0 });
        assert_eq!(fs[20], Feature::Bidirected { a: 0, b: 1 });
        assert_eq!(fs[29], Feature::Bidirected { a: 3, b: 4 });
        assert_eq!(feature_count(3), 9);
    }

    #[test]
    fn labels_round_trip() {
        let g = DirectedMixedGraph::from_edges(4, &[(0, 1), (3, 2)], &[(1, 3)]).unwrap();
        let labels = feature_labels(&g);
        assert_eq!(labels.iter().filter(|&&b| b).count(), 3);
        assert_eq!(graph_from_labels(4, &labels).unwrap(), g);
    }

    #[test]
    fn csv_round_trip() {
        let scores: Vec<f64> = (0..9).map(|k| k as f64 * 0.5).collect();
        let table = FeatureScoreTable::new(3, "llc_nf", scores).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("feature_type,from,to,score,method\ndir,0,1,0.0,llc_nf\n"));
        assert!(text.contains("bidir,1,2,4.0,llc_nf"));
        assert_eq!(FeatureScoreTable::read_csv(&buf[..], 3).unwrap(), table);
    }

    #[test]
    fn thresholded_prediction() {
        let mut scores = vec![0.0; 30];
        scores[0] = 3.2;
        let t = FeatureScoreTable::new(5, "asp_d", scores).unwrap();
        let p = t.predict(0.0);
        assert_eq!(p.iter().filter(|&&b| b).count(), 1);
        assert!(p[0]);
        assert!(FeatureScoreTable::new(5, "x", vec![0.0; 29]).is_err());
    }
}
