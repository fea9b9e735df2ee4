//! On-disk formats: SCM cohorts as JSON, datasets as CSV with a JSON sidecar.
//!
//! A dataset `exp3` is stored as `exp3.csv` (header `x0..x{n-1}`, one row
//! per sample) and `exp3.json` (`{"intervened": [...], "size": m}`). In the
//! infinite regime the sidecar says `"size": "inf"` and the CSV holds the
//! exact covariance matrix instead of samples.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{Dataset, DatasetSize, Experiment, LinearScm};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// A cohort file is a JSON array of SCMs.
pub fn write_cohort(path: &Path, scms: &[LinearScm]) -> Result<()> {
    write_json(path, scms)
}

/// Reads either a cohort array or a single SCM object.
pub fn read_cohort(path: &Path) -> Result<Vec<LinearScm>> {
    let value: serde_json::Value = read_json(path)?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s: LinearScm| vec![s])
    };
    parsed.map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    intervened: Vec<usize>,
    size: DatasetSize,
}

fn matrix_rows(path: &Path, n: usize, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header: Vec<String> = (0..n).map(|v| format!("x{v}")).collect();
    w.write_record(&header).map_err(|e| Error::format(path, e.to_string()))?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x}")).collect();
        w.write_record(&row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let n = r.headers().map_err(|e| Error::format(path, e.to_string()))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if rec.len() != n {
            return Err(Error::format(path, format!("row {rows} has {} fields, expected {n}", rec.len())));
        }
        for field in rec.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("row {rows}: {field:?} is not a number")))?;
            values.push(x);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, n, &values))
}

/// Writes `dir/{stem}.csv` and `dir/{stem}.json`.
pub fn write_dataset(dir: &Path, stem: &str, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    match ds.samples() {
        Some(s) => matrix_rows(&csv_path, ds.n(), s)?,
        None => matrix_rows(&csv_path, ds.n(), &ds.covariance())?,
    }
    write_json(
        &dir.join(format!("{stem}.json")),
        &Sidecar {
            intervened: ds.experiment().intervened().to_vec(),
            size: ds.size(),
        },
    )
}

/// Reads the dataset whose sidecar is `sidecar` (the CSV shares its stem).
pub fn read_dataset(sidecar: &Path) -> Result<Dataset> {
    let meta: Sidecar = read_json(sidecar)?;
    let csv_path = sidecar.with_extension("csv");
    let m = read_matrix(&csv_path)?;
    let e = Experiment::new(m.ncols(), meta.intervened)?;
    match meta.size {
        DatasetSize::Infinite => Dataset::exact(e, m),
        DatasetSize::Finite(rows) if rows == m.nrows() => Dataset::from_samples(e, m),
        DatasetSize::Finite(rows) => Err(Error::format(
            &csv_path,
            format!("sidecar promises {rows} rows, file has {}", m.nrows()),
        )),
    }
}

fn dataset_stem(k: usize) -> String {
    format!("exp{k}")
}

/// Writes one dataset per experiment as `exp0`, `exp1`, ...
pub fn write_datasets(dir: &Path, datasets: &[Dataset]) -> Result<()> {
    datasets
        .iter()
        .enumerate()
        .try_for_each(|(k, ds)| write_dataset(dir, &dataset_stem(k), ds))
}

/// Reads `exp0`, `exp1`, ... from `dir` until the next sidecar is missing.
pub fn read_datasets(dir: &Path) -> Result<Vec<Dataset>> {
    let mut out = Vec::new();
    loop {
        let sidecar: PathBuf = dir.join(format!("{}.json", dataset_stem(out.len())));
        if !sidecar.exists() {
            break;
        }
        out.push(read_dataset(&sidecar)?);
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("no datasets (exp0.json, exp0.csv, ...) in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{analytic_covariance, experiment_setup, sample_data, sample_random_scm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn datasets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scm = sample_random_scm(&Default::default(), &mut rng).unwrap();
        let setup = experiment_setup(12, 5).unwrap();
        let finite: Vec<Dataset> = setup.iter().map(|e| sample_data(&scm, e, 50, &mut rng).unwrap()).collect();
        write_datasets(dir.path(), &finite).unwrap();
        assert_eq!(read_datasets(dir.path()).unwrap(), finite);

        let exact: Vec<Dataset> = setup
            .iter()
            .map(|e| Dataset::exact(e.clone(), analytic_covariance(&scm, e).unwrap()).unwrap())
            .collect();
        let inf = dir.path().join("inf");
        write_datasets(&inf, &exact).unwrap();
        assert_eq!(read_datasets(&inf).unwrap(), exact);
        let side = fs::read_to_string(inf.join("exp1.json")).unwrap();
        assert!(side.contains("\"inf\""));
    }

    #[test]
    fn size_mismatch_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_datasets(dir.path()).is_err());
        fs::write(dir.path().join("exp0.csv"), "x0,x1\n1,2\n3,4\n").unwrap();
        fs::write(dir.path().join("exp0.json"), r#"{"intervened": [1], "size": 3}"#).unwrap();
        assert!(matches!(read_datasets(dir.path()), Err(Error::Format { .. })));
        fs::write(dir.path().join("exp0.json"), r#"{"intervened": [1], "size": 2}"#).unwrap();
        let ds = read_datasets(dir.path()).unwrap();
        assert_eq!(ds[0].experiment().intervened(), &[1]);
    }

    #[test]
    fn cohort_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scms: Vec<LinearScm> = (0..3).map(|_| sample_random_scm(&Default::default(), &mut rng).unwrap()).collect();
        let path = dir.path().join("cohort.json");
        write_cohort(&path, &scms).unwrap();
        assert_eq!(read_cohort(&path).unwrap(), scms);
        write_json(&path, &scms[1]).unwrap();
        assert_eq!(read_cohort(&path).unwrap(), vec![scms[1].clone()]);
    }
}
