//! Independence constraints from data next to the ones the true graph implies.
use cyclic_discovery::ci::{enumerate_constraints, oracle_constraints, CiKind};
use cyclic_discovery::rng::stream;
use cyclic_discovery::scm::{experiment_setup, sample_data, sample_random_scm, ScmSamplerConfig};

fn main() -> cyclic_discovery::Result<()> {
    let scm = sample_random_scm(&ScmSamplerConfig::default(), &mut stream(3, &[0]))?;
    let setup = experiment_setup(11, scm.n())?;
    let mut rng = stream(3, &[1]);
    let data: Vec<_> = setup.iter().map(|e| sample_data(&scm, e, 10_000, &mut rng)).collect::<Result<_, _>>()?;

    let found = enumerate_constraints(&data, 0.05, 3);
    let truth = oracle_constraints(&scm, &setup, 3);
    let agree = found
        .constraints()
        .iter()
        .zip(truth.constraints())
        .filter(|(a, b)| a.kind == b.kind)
        .count();
    println!("{} constraints, {agree} agree with the true graph", found.len());
    for c in found.constraints().iter().filter(|c| c.kind == CiKind::Independent).take(8) {
        println!("exp {} : {} _|_ {} | {:?}  p = {:.3}  w = {:.3}", c.experiment, c.i, c.j, c.s, c.p_value.unwrap_or(f64::NAN), c.weight);
    }
    Ok(())
}
