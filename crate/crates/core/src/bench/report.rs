//! Result tables, pooled AUC, grouped summaries and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::metrics::{auc_roc, label_accuracy};
use super::{CellResult, Method};
use crate::error::{Error, Result};
use crate::features::features;
use crate::scm::{setup_group, DatasetSize};

/// `x` rounded to 10 significant digits, in the shortest form that reads
/// back as the rounded value.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-4..1e15).contains(&mag) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

/// Pooled AUC of one (setup, size, method) combination; `None` when every
/// pooled label agrees.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AucRow {
    pub setup_id: u32,
    pub size: DatasetSize,
    pub method: Method,
    pub auc: Option<f64>,
}

type Key = (u32, DatasetSize, Method);

fn by_key(cells: &[CellResult]) -> BTreeMap<Key, Vec<&CellResult>> {
    let mut out: BTreeMap<Key, Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        out.entry((c.setup_id, c.size, c.method)).or_default().push(c);
    }
    out
}

/// AUC over the scores of all non-failed cells sharing a setup, size and
/// method.
pub fn pooled_auc(cells: &[CellResult]) -> Vec<AucRow> {
    by_key(cells)
        .into_iter()
        .map(|((setup_id, size, method), group)| {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for c in group.iter().filter(|c| !c.failed()) {
                scores.extend_from_slice(&c.scores);
                labels.extend_from_slice(&c.truth);
            }
            AucRow {
                setup_id,
                size,
                method,
                auc: auc_roc(&scores, &labels).ok(),
            }
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

fn round(x: Option<f64>) -> Option<f64> {
    x.map(|v| fmt_sig(v).parse().expect("formatted float parses"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub setup_id: u32,
    pub size: DatasetSize,
    pub method: Method,
    pub n: usize,
    pub n_failed: usize,
    pub n_uncertified: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: u32,
    pub label: String,
    pub rows: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeSummary {
    pub size: DatasetSize,
    pub method: Method,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub mean_auc: Option<f64>,
}

/// Means and standard deviations (sample, n - 1) of per-SCM accuracies,
/// grouped by intervention-set size as in the evaluation figures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n_scms: usize,
    pub n_cells: usize,
    pub weak_baseline: Option<f64>,
    pub error_bars: &'static str,
    pub groups: Vec<GroupSummary>,
    pub by_size: Vec<SizeSummary>,
}

impl Summary {
    pub fn row(&self, setup_id: u32, size: DatasetSize, method: Method) -> Option<&SummaryRow> {
        self.groups
            .iter()
            .flat_map(|g| &g.rows)
            .find(|r| r.setup_id == setup_id && r.size == size && r.method == method)
    }
}

fn summarize(cells: &[CellResult], auc: &[AucRow]) -> Summary {
    let mut truths: BTreeMap<usize, &[bool]> = BTreeMap::new();
    for c in cells {
        truths.entry(c.scm_id).or_insert(&c.truth);
    }
    let baseline: Vec<f64> = truths
        .values()
        .map(|t| label_accuracy(&vec![false; t.len()], t))
        .collect();
    let mut groups: BTreeMap<u32, Vec<SummaryRow>> = BTreeMap::new();
    for ((setup_id, size, method), group) in by_key(cells) {
        let acc: Vec<f64> = group.iter().filter(|c| !c.failed()).map(|c| c.accuracy).collect();
        let (mean, std) = mean_std(&acc);
        let a = auc
            .iter()
            .find(|r| (r.setup_id, r.size, r.method) == (setup_id, size, method))
            .and_then(|r| r.auc);
        groups.entry(setup_group(setup_id)).or_default().push(SummaryRow {
            setup_id,
            size,
            method,
            n: group.len(),
            n_failed: group.iter().filter(|c| c.failed()).count(),
            n_uncertified: group.iter().filter(|c| !c.failed() && !c.certified).count(),
            mean_accuracy: round(mean),
            std_accuracy: round(std),
            auc: round(a),
        });
    }
    let mut sizes: BTreeMap<(DatasetSize, Method), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for c in cells.iter().filter(|c| !c.failed()) {
        sizes.entry((c.size, c.method)).or_default().0.push(c.accuracy);
    }
    for r in auc {
        if let Some(a) = r.auc {
            sizes.entry((r.size, r.method)).or_default().1.push(a);
        }
    }
    Summary {
        n_scms: truths.len(),
        n_cells: cells.len(),
        weak_baseline: round(mean_std(&baseline).0),
        error_bars: "std",
        groups: groups
            .into_iter()
            .map(|(group, rows)| GroupSummary {
                group,
                label: if group == 0 { "0".into() } else { format!("{group}x") },
                rows,
            })
            .collect(),
        by_size: sizes
            .into_iter()
            .map(|((size, method), (acc, aucs))| {
                let (mean, std) = mean_std(&acc);
                SizeSummary {
                    size,
                    method,
                    mean_accuracy: round(mean),
                    std_accuracy: round(std),
                    mean_auc: round(mean_std(&aucs).0),
                }
            })
            .collect(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_else(|| "NaN".into())
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn feature_parts(n_features: usize) -> Vec<(&'static str, usize, usize)> {
    let n = (1..).find(|&n| n * (n - 1) * 3 / 2 >= n_features).unwrap_or(0);
    features(n)
        .into_iter()
        .map(|f| match f {
            crate::features::Feature::Directed { from, to } => ("dir", from, to),
            crate::features::Feature::Bidirected { a, b } => ("bidir", a, b),
        })
        .collect()
}

/// Writes `results.csv`, `scores.csv`, `auc.csv`, `summary.json` and
/// `plotdata/*.csv` under `out_dir` and returns the summary.
pub fn emit_report(cells: &[CellResult], out_dir: &Path) -> Result<Summary> {
    if cells.is_empty() {
        return Err(Error::Usage("no results to report".into()));
    }
    let plot = out_dir.join("plotdata");
    fs::create_dir_all(&plot).map_err(|e| Error::io(&plot, e))?;

    write_rows(
        &out_dir.join("results.csv"),
        &["scm_id", "setup_id", "size", "method", "accuracy", "runtime_s", "certified", "n_failed_features"],
        cells.iter().map(|c| {
            vec![
                c.scm_id.to_string(),
                c.setup_id.to_string(),
                c.size.to_string(),
                c.method.to_string(),
                fmt_sig(c.accuracy),
                fmt_sig(c.runtime_s),
                c.certified.to_string(),
                c.n_failed_features.to_string(),
            ]
        }),
    )?;

    // full precision so that `report` can rebuild the pooled AUC exactly
    let parts = feature_parts(cells[0].truth.len());
    write_rows(
        &out_dir.join("scores.csv"),
        &["scm_id", "setup_id", "size", "method", "feature_type", "from", "to", "score", "truth", "predicted"],
        cells.iter().flat_map(|c| {
            let parts = &parts;
            c.scores.iter().enumerate().map(move |(f, s)| {
                let (kind, from, to) = parts[f];
                vec![
                    c.scm_id.to_string(),
                    c.setup_id.to_string(),
                    c.size.to_string(),
                    c.method.to_string(),
                    kind.to_string(),
                    from.to_string(),
                    to.to_string(),
                    format!("{s}"),
                    u8::from(c.truth[f]).to_string(),
                    u8::from(c.predictions[f]).to_string(),
                ]
            })
        }),
    )?;
    write_truths(&out_dir.join("truth.csv"), cells, &parts)?;

    let auc = pooled_auc(cells);
    write_rows(
        &out_dir.join("auc.csv"),
        &["setup_id", "size", "method", "auc"],
        auc.iter().map(|r| vec![r.setup_id.to_string(), r.size.to_string(), r.method.to_string(), opt(r.auc)]),
    )?;

    let summary = summarize(cells, &auc);
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

    let mut sizes: Vec<DatasetSize> = summary.groups.iter().flat_map(|g| g.rows.iter().map(|r| r.size)).collect();
    sizes.sort();
    sizes.dedup();
    for size in sizes {
        let rows: Vec<(u32, &SummaryRow)> = summary
            .groups
            .iter()
            .flat_map(|g| g.rows.iter().filter(|r| r.size == size).map(move |r| (g.group, r)))
            .collect();
        write_rows(
            &plot.join(format!("accuracy_{size}.csv")),
            &["group", "setup_id", "method", "mean", "std", "n", "weak_baseline"],
            rows.iter().map(|(g, r)| {
                vec![
                    g.to_string(),
                    r.setup_id.to_string(),
                    r.method.to_string(),
                    opt(r.mean_accuracy),
                    opt(r.std_accuracy),
                    (r.n - r.n_failed).to_string(),
                    opt(summary.weak_baseline),
                ]
            }),
        )?;
        write_rows(
            &plot.join(format!("auc_{size}.csv")),
            &["group", "setup_id", "method", "auc"],
            rows.iter()
                .map(|(g, r)| vec![g.to_string(), r.setup_id.to_string(), r.method.to_string(), opt(r.auc)]),
        )?;
    }
    write_rows(
        &plot.join("by_size.csv"),
        &["size", "method", "mean_accuracy", "std_accuracy", "mean_auc"],
        summary.by_size.iter().map(|r| {
            vec![
                r.size.to_string(),
                r.method.to_string(),
                opt(r.mean_accuracy),
                opt(r.std_accuracy),
                opt(r.mean_auc),
            ]
        }),
    )?;
    Ok(summary)
}

fn write_truths(path: &Path, cells: &[CellResult], parts: &[(&str, usize, usize)]) -> Result<()> {
    let mut truths: BTreeMap<usize, &[bool]> = BTreeMap::new();
    for c in cells {
        truths.entry(c.scm_id).or_insert(&c.truth);
    }
    write_rows(
        path,
        &["scm_id", "feature_type", "from", "to", "present"],
        truths.into_iter().flat_map(|(id, t)| {
            t.iter().zip(parts).map(move |(&p, &(kind, from, to))| {
                vec![id.to_string(), kind.into(), from.to_string(), to.to_string(), u8::from(p).to_string()]
            })
        }),
    )
}

fn read_table(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.records().map(|rec| rec.map_err(|e| csv_io(path, e))).collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, k: usize) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad field {k} in row {:?}", rec.iter().collect::<Vec<_>>())))
}

/// Rebuilds cell results from a directory written by [`emit_report`].
/// Failed cells come back with a generic error message.
pub fn read_results(dir: &Path) -> Result<Vec<CellResult>> {
    let results = dir.join("results.csv");
    let scores = dir.join("scores.csv");
    let truth_path = dir.join("truth.csv");
    let mut truths: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for rec in read_table(&truth_path)? {
        let id: usize = field(&truth_path, &rec, 0)?;
        let p: u8 = field(&truth_path, &rec, 4)?;
        truths.entry(id).or_default().push(p == 1);
    }
    let mut per_cell: BTreeMap<(usize, u32, DatasetSize, Method), (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for rec in read_table(&scores)? {
        let key = (
            field(&scores, &rec, 0)?,
            field(&scores, &rec, 1)?,
            field(&scores, &rec, 2)?,
            field(&scores, &rec, 3)?,
        );
        let entry = per_cell.entry(key).or_default();
        entry.0.push(field(&scores, &rec, 7)?);
        entry.1.push(field::<u8>(&scores, &rec, 9)? == 1);
    }
    let mut cells = Vec::new();
    for rec in read_table(&results)? {
        let scm_id: usize = field(&results, &rec, 0)?;
        let setup_id: u32 = field(&results, &rec, 1)?;
        let size: DatasetSize = field(&results, &rec, 2)?;
        let method: Method = field(&results, &rec, 3)?;
        let written: f64 = field(&results, &rec, 4)?;
        let truth = truths
            .get(&scm_id)
            .cloned()
            .ok_or_else(|| Error::format(&truth_path, format!("no ground truth for scm {scm_id}")))?;
        let (scores_v, predictions) = per_cell.remove(&(scm_id, setup_id, size, method)).unwrap_or_default();
        let failed = written.is_nan();
        // the written value is rounded; recompute it from the predictions
        let accuracy = if failed {
            f64::NAN
        } else {
            label_accuracy(&predictions, &truth)
        };
        cells.push(CellResult {
            scm_id,
            setup_id,
            size,
            method,
            scores: scores_v,
            predictions,
            truth,
            accuracy,
            runtime_s: field(&results, &rec, 5)?,
            certified: field(&results, &rec, 6)?,
            n_failed_features: field(&results, &rec, 7)?,
            error: failed.then(|| "failed in the original run".to_string()),
        });
    }
    Ok(cells)
}
