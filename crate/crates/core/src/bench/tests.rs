use super::*;

fn small() -> BenchConfig {
    let mut cfg = BenchConfig::desk();
    cfg.n_scms = 2;
    cfg.setup_ids = vec![0, 15];
    cfg.seed = 7;
    cfg.llc.bootstrap_reps = 10;
    cfg
}

fn same_files(a: &std::path::Path, b: &std::path::Path) {
    let (fa, fb) = (files(a), files(b));
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        if x != y {
            let (x, y) = (String::from_utf8_lossy(x), String::from_utf8_lossy(y));
            let line = x.lines().zip(y.lines()).find(|(p, q)| p != q);
            panic!("{name} differs: {line:?}");
        }
    }
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.push((rel, std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
    }
    assert!("asp".parse::<Method>().is_err());
}

#[test]
fn profiles_and_validation() {
    let desk = BenchConfig::profile("desk").unwrap();
    assert_eq!(desk.n_scms, 30);
    assert_eq!(desk.setup_ids, vec![0, 11, 15, 21, 25]);
    assert_eq!(desk.sizes, vec![DatasetSize::Finite(1000)]);
    let paper = BenchConfig::profile("paper").unwrap();
    assert_eq!((paper.n_scms, paper.setup_ids.len(), paper.sizes.len(), paper.methods.len()), (150, 21, 4, 4));
    assert!(BenchConfig::profile("laptop").is_err());

    let mut bad = BenchConfig::desk();
    bad.setup_ids = vec![16];
    assert!(matches!(bad.validate(), Err(Error::UnknownSetup { id: 16 })));
    bad.setup_ids.clear();
    assert!(bad.validate().is_err());

    let cfg: BenchConfig = serde_json::from_str(r#"{"n_scms": 3, "sizes": [1000, "inf"]}"#).unwrap();
    assert_eq!(cfg.sizes, vec![DatasetSize::Finite(1000), DatasetSize::Infinite]);
    assert!(serde_json::from_str::<BenchConfig>(r#"{"n_scm": 3}"#).is_err());
}

#[test]
fn setup_fifteen_has_six_thousand_rows() {
    let scm = &sample_cohort(&ScmSamplerConfig::default(), 1, 1).unwrap()[0];
    let ds = simulate_setup(scm, 15, DatasetSize::Finite(1000), &[1], 1).unwrap();
    let rows: usize = ds.iter().map(|d| d.samples().unwrap().nrows()).sum();
    assert_eq!(rows, 6000);
}

#[test]
fn sigfig_formatting() {
    assert_eq!(fmt_sig(22.0 / 30.0), "0.7333333333");
    assert_eq!(fmt_sig(1.0), "1");
    assert_eq!(fmt_sig(0.0), "0");
    assert_eq!(fmt_sig(123456.789012345), "123456.789");
    assert_eq!(fmt_sig(f64::NAN), "NaN");
    assert_eq!(fmt_sig(-1.5e-12), "-1.5e-12");
}

#[test]
fn small_grid_end_to_end() {
    let cfg = small();
    let run = run_benchmark(&cfg).unwrap();
    assert_eq!(run.cells.len(), 16);
    for c in &run.cells {
        assert!(!c.failed(), "{:?}", c.error);
        assert_eq!(c.scores.len(), 30);
        assert!((0.0..=1.0).contains(&c.accuracy));
        assert_eq!(c.accuracy, metrics::label_accuracy(&c.predictions, &c.truth));
        assert_eq!(c.runtime_s, 0.0);
    }
    assert_eq!(run.auc.len(), 8);
    assert!(run.auc.iter().all(|r| r.auc.is_some_and(|a| (0.0..=1.0).contains(&a))));

    let a = tempfile::tempdir().unwrap();
    let summary = emit_report(&run.cells, a.path()).unwrap();
    let results = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 17);
    assert!(results.starts_with("scm_id,setup_id,size,method,accuracy,runtime_s,certified,n_failed_features\n"));
    let auc = std::fs::read_to_string(a.path().join("auc.csv")).unwrap();
    assert!(auc.starts_with("setup_id,size,method,auc\n"));
    assert_eq!(summary.groups.iter().map(|g| g.label.as_str()).collect::<Vec<_>>(), ["0", "1x"]);
    assert_eq!(summary.n_scms, 2);
    let truths: Vec<_> = run.scms.iter().map(|s| graph_of(s, 0.0)).collect();
    assert!((summary.weak_baseline.unwrap() - weak_baseline(&truths)).abs() < 1e-9);

    // a rerun on a different thread count writes identical bytes
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| run_benchmark(&cfg)).unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&again.cells, b.path()).unwrap();
    same_files(a.path(), b.path());

    // the report can be rebuilt from the written tables alone
    let back = read_results(a.path()).unwrap();
    assert_eq!(pooled_auc(&back), run.auc);
    let c = tempfile::tempdir().unwrap();
    emit_report(&back, c.path()).unwrap();
    same_files(a.path(), c.path());
}

#[test]
fn infinite_cells_use_exact_inputs() {
    let mut cfg = small();
    cfg.n_scms = 1;
    cfg.setup_ids = vec![25];
    cfg.sizes = vec![DatasetSize::Infinite];
    cfg.methods = vec![Method::AspD, Method::LlcNf];
    let run = run_benchmark(&cfg).unwrap();
    let truth = graph_of(&run.scms[0], 0.0);
    for c in &run.cells {
        assert!(c.certified);
        // the oracle constraint set is consistent with the truth
        if c.method == Method::AspD {
            assert!(c.accuracy >= weak_baseline(std::slice::from_ref(&truth)));
        }
    }
}

#[test]
fn failures_are_recorded_not_fatal() {
    let mut cfg = small();
    cfg.n_scms = 1;
    cfg.setup_ids = vec![0];
    cfg.methods = vec![Method::LlcNf, Method::AspD];
    // a singular ridge system is impossible, but an empty iteration budget is not
    cfg.llc.solver.max_iterations = 0;
    let run = run_benchmark(&cfg).unwrap();
    let llc = &run.cells[0];
    assert!(llc.failed());
    assert!(llc.accuracy.is_nan());
    assert_eq!(llc.n_failed_features, 30);
    assert!(!run.cells[1].failed());
    let dir = tempfile::tempdir().unwrap();
    let summary = emit_report(&run.cells, dir.path()).unwrap();
    let row = summary.row(0, DatasetSize::Finite(1000), Method::LlcNf).unwrap();
    assert_eq!((row.n, row.n_failed, row.mean_accuracy), (1, 1, None));
    assert!(emit_report(&[], dir.path()).is_err());
}
