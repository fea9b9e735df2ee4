//! Constraint-loss search with run-twice confidences on oracle constraints.
use cyclic_discovery::ci::oracle_constraints;
use cyclic_discovery::features::feature_labels;
use cyclic_discovery::rng::stream;
use cyclic_discovery::scm::{experiment_setup, graph_of, sample_random_scm, ScmSamplerConfig};
use cyclic_discovery::search::{confidence_table, ensemble_predict, graph_loss, SearchConfig, SeparationMode};

fn main() -> cyclic_discovery::Result<()> {
    let scm = sample_random_scm(&ScmSamplerConfig::default(), &mut stream(5, &[0]))?;
    let setup = experiment_setup(15, scm.n())?;
    let truth = graph_of(&scm, 0.0);
    let k = oracle_constraints(&scm, &setup, 3);

    for mode in [SeparationMode::D, SeparationMode::Sigma] {
        let cfg = SearchConfig::default().with_mode(mode);
        let scores = confidence_table(&k, &setup, &cfg)?;
        let pred = ensemble_predict(&scores.table, cfg.t_asp);
        let hits = pred.iter().zip(feature_labels(&truth)).filter(|(p, t)| **p == *t).count();
        println!(
            "{}: optimum loss {}, truth loss {}, {hits}/{} features right, {} uncertified",
            mode.method_name(),
            scores.optimum.loss,
            graph_loss(&truth, &k, &setup, mode)?,
            pred.len(),
            scores.uncertified_features
        );
    }
    Ok(())
}
