//! Command-line interface: `gen-scms`, `simulate`, `discover`, `bench` and
//! `report`.
//!
//! Configuration is layered: the named profile, then the JSON file given by
//! `--config`, then individual flags. Exit status is 0 on success, 1 for
//! usage errors and 2 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{dataset_stream, emit_report, read_results, run_benchmark, sample_cohort, simulate_setup, BenchConfig, Method};
use crate::error::{Error, Result};
use crate::features::FeatureScoreTable;
use crate::graph::DirectedMixedGraph;
use crate::io;
use crate::llc::llc_discover;
use crate::scm::{experiment_setup, graph_of, DatasetSize};
use crate::search::{asp_discover, SeparationMode};

#[derive(Debug, Parser)]
#[command(name = "cyclic-discovery", version, about = "Causal discovery for linear cyclic models with hidden confounders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named bench profile used as the configuration base.
    #[arg(long, value_parser = ["desk", "paper"])]
    profile: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a cohort of random SCMs and write scms.json and graphs.json.
    GenScms {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Cohort size; defaults to the profile's SCM count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Simulate the datasets of one setup for one SCM.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// SCM file or cohort written by gen-scms.
        #[arg(long, value_name = "PATH")]
        scm: PathBuf,
        /// Position of the SCM within the cohort.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        setup: u32,
        /// Rows per experiment, or `inf`.
        #[arg(long)]
        size: DatasetSize,
    },
    /// Score every feature from a directory of datasets.
    Discover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Expected setup id; checked against the datasets' interventions.
        #[arg(long)]
        setup: Option<u32>,
        /// Bootstrap seed for the LLC methods.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Score CSV path; standard output when absent.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the evaluation grid and write its report.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Output directory; falls back to the configuration's `out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Restrict to these methods (repeatable or comma separated).
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long, value_delimiter = ',')]
        setup: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        size: Vec<DatasetSize>,
    },
    /// Rebuild auc.csv, summary.json and plot data from a bench directory.
    Report {
        #[arg(long, value_name = "DIR")]
        results: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// The JSON configuration file. Section contents are checked when merged
/// into the typed configurations, which reject unknown keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Option<String>,
    pub out: Option<PathBuf>,
    pub sampler: Option<Value>,
    pub llc: Option<Value>,
    pub search: Option<Value>,
    pub bench: Option<Value>,
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path).map_err(|e| Error::Usage(e.to_string()))
    }

    /// The bench configuration for `profile` (flag first, then file, then
    /// `paper`) with this file's sections laid over it.
    pub fn resolve(&self, profile: Option<&str>) -> Result<BenchConfig> {
        let name = profile.or(self.profile.as_deref()).unwrap_or("paper");
        let mut value = serde_json::to_value(BenchConfig::profile(name)?)?;
        if let Some(b) = &self.bench {
            merge(&mut value, b);
        }
        for (key, section) in [("sampler", &self.sampler), ("llc", &self.llc), ("search", &self.search)] {
            if let Some(s) = section {
                merge(&mut value, &serde_json::json!({ key: s }));
            }
        }
        let cfg: BenchConfig = serde_json::from_value(value).map_err(|e| Error::Usage(format!("configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_config(common: &Common) -> Result<(RunConfig, BenchConfig)> {
    let run = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = run.resolve(common.profile.as_deref())?;
    Ok((run, cfg))
}

fn usage_or_runtime(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::UnknownSetup { .. } | Error::Condition(_) => 1,
        _ => 2,
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            usage_or_runtime(&e)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenScms { common, seed, out, count } => {
            let (_, cfg) = load_config(&common)?;
            let n = count.unwrap_or(cfg.n_scms);
            if n == 0 {
                return Err(Error::Usage("--count must be positive".into()));
            }
            let scms = sample_cohort(&cfg.sampler, n, seed)?;
            create_dir(&out)?;
            io::write_cohort(&out.join("scms.json"), &scms)?;
            let graphs: Vec<DirectedMixedGraph> = scms.iter().map(|s| graph_of(s, 0.0)).collect();
            io::write_json(&out.join("graphs.json"), &graphs)?;
            log::info!("wrote {n} SCMs to {}", out.display());
            Ok(())
        }
        Command::Simulate {
            common,
            seed,
            out,
            scm,
            index,
            setup,
            size,
        } => {
            load_config(&common)?;
            let cohort = io::read_cohort(&scm).map_err(|e| Error::Usage(e.to_string()))?;
            let model = cohort.get(index).ok_or_else(|| {
                Error::Usage(format!("--index {index} but {} holds {} SCMs", scm.display(), cohort.len()))
            })?;
            let datasets = simulate_setup(model, setup, size, &dataset_stream(index, setup, size), seed)?;
            io::write_datasets(&out, &datasets)
        }
        Command::Discover {
            common,
            method,
            data,
            setup,
            seed,
            out,
        } => {
            let (_, cfg) = load_config(&common)?;
            let datasets = io::read_datasets(&data)?;
            if let Some(id) = setup {
                let want = experiment_setup(id, datasets[0].n())?;
                let got: Vec<_> = datasets.iter().map(|d| d.experiment().clone()).collect();
                if want != got {
                    return Err(Error::Usage(format!(
                        "datasets in {} do not match setup {id}",
                        data.display()
                    )));
                }
            }
            let table: FeatureScoreTable = match method {
                Method::LlcNf | Method::LlcF => {
                    llc_discover(&datasets, &cfg.llc.clone().with_faithfulness(method == Method::LlcF), seed)?
                }
                Method::AspD | Method::AspS => {
                    let mode = if method == Method::AspD {
                        SeparationMode::D
                    } else {
                        SeparationMode::Sigma
                    };
                    let scores = asp_discover(&datasets, &cfg.search.clone().with_mode(mode))?;
                    if scores.uncertified_features > 0 {
                        log::warn!("{} feature scores are not certified optimal", scores.uncertified_features);
                    }
                    scores.table
                }
            };
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    table.write_csv(file)
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    table.write_csv(&mut lock)?;
                    lock.flush().map_err(|e| Error::io("<stdout>", e))
                }
            }
        }
        Command::Bench {
            common,
            seed,
            out,
            jobs,
            method,
            setup,
            size,
        } => {
            let (run_cfg, mut cfg) = load_config(&common)?;
            cfg.seed = seed;
            if !method.is_empty() {
                cfg.methods = method;
            }
            if !setup.is_empty() {
                cfg.setup_ids = setup;
            }
            if !size.is_empty() {
                cfg.sizes = size;
            }
            cfg.validate()?;
            let out = out
                .or(run_cfg.out)
                .ok_or_else(|| Error::Usage("bench needs --out or an `out` entry in the configuration".into()))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::Usage(format!("--jobs: {e}")))?;
            let result = pool.install(|| run_benchmark(&cfg))?;
            create_dir(&out)?;
            io::write_json(&out.join("config.json"), &cfg)?;
            io::write_cohort(&out.join("scms.json"), &result.scms)?;
            let summary = emit_report(&result.cells, &out)?;
            let failed: usize = summary.groups.iter().flat_map(|g| &g.rows).map(|r| r.n_failed).sum();
            if failed > 0 {
                log::warn!("{failed} cells failed; see results.csv");
            }
            Ok(())
        }
        Command::Report { results, out } => {
            let cells = read_results(&results)?;
            emit_report(&cells, out.as_deref().unwrap_or(&results)).map(|_| ())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_order() {
        let run: RunConfig = serde_json::from_str(
            r#"{"profile": "desk", "bench": {"n_scms": 4, "llc": {"lambda": 0.2}}, "llc": {"bootstrap_reps": 7}}"#,
        )
        .unwrap();
        let cfg = run.resolve(None).unwrap();
        assert_eq!(cfg.n_scms, 4);
        assert_eq!(cfg.setup_ids, vec![0, 11, 15, 21, 25]);
        assert_eq!(cfg.llc.lambda, 0.2);
        assert_eq!(cfg.llc.bootstrap_reps, 7);
        assert_eq!(run.resolve(Some("paper")).unwrap().setup_ids.len(), 21);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sampler": {}, "extra": 1}"#).is_err());
        let run: RunConfig = serde_json::from_str(r#"{"llc": {"lamda": 0.1}}"#).unwrap();
        assert!(matches!(run.resolve(None), Err(Error::Usage(_))));
        let run: RunConfig = serde_json::from_str(r#"{"bench": {"setup_ids": [16]}}"#).unwrap();
        assert!(matches!(run.resolve(None), Err(Error::UnknownSetup { id: 16 })));
    }

    #[test]
    fn defaults_are_the_paper_settings() {
        let cfg = RunConfig::default().resolve(None).unwrap();
        assert_eq!(cfg, BenchConfig::paper());
        assert_eq!(cfg.llc.lambda, 0.05);
        assert_eq!(cfg.search.t_asp, 0.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main(["cyclic-discovery", "--help"]), 0);
        assert_eq!(main(["cyclic-discovery", "frobnicate"]), 1);
        // --seed is mandatory for generating commands
        assert_eq!(main(["cyclic-discovery", "gen-scms", "--out", "/tmp/never"]), 1);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main(["cyclic-discovery", "bench", "--seed", "1", "--setup", "16", "--out", out]), 1);
        assert_eq!(main(["cyclic-discovery", "discover", "--method", "asp_d", "--data", out]), 1);
        assert_eq!(main(["cyclic-discovery", "report", "--results", out]), 2);
    }
}
