//! A small evaluation grid written to a temporary directory.
use cyclic_discovery::bench::{emit_report, run_benchmark, BenchConfig, Method};

fn main() -> cyclic_discovery::Result<()> {
    let mut cfg = BenchConfig::desk();
    cfg.n_scms = 4;
    cfg.setup_ids = vec![0, 15];
    cfg.methods = vec![Method::LlcNf, Method::AspD];
    cfg.llc.bootstrap_reps = 20;
    let run = run_benchmark(&cfg)?;
    let out = std::env::temp_dir().join("cyclic-discovery-mini");
    let summary = emit_report(&run.cells, &out)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!("weak baseline {}", show(summary.weak_baseline));
    for group in &summary.groups {
        for row in &group.rows {
            println!(
                "setup {:>2} {:>7}  accuracy {} +- {}  auc {}",
                row.setup_id,
                row.method,
                show(row.mean_accuracy),
                show(row.std_accuracy),
                show(row.auc)
            );
        }
    }
    println!("report in {}", out.display());
    Ok(())
}
