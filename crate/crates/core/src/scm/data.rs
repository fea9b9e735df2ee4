use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{analytic_covariance, Experiment, LinearScm};
use crate::error::{Error, Result};

/// Rows per experiment, or the asymptotic "infinite" regime in which the
/// exact population covariance stands in for data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetSize {
    Finite(usize),
    Infinite,
}

impl DatasetSize {
    pub fn is_infinite(&self) -> bool {
        matches!(self, DatasetSize::Infinite)
    }
}

impl fmt::Display for DatasetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSize::Finite(m) => write!(f, "{m}"),
            DatasetSize::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for DatasetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" => Ok(DatasetSize::Infinite),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|&m| m > 0)
                .map(DatasetSize::Finite)
                .ok_or_else(|| Error::Usage(format!("invalid dataset size {s:?}; use a positive integer or inf"))),
        }
    }
}

impl serde::Serialize for DatasetSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DatasetSize::Finite(m) => s.serialize_u64(*m as u64),
            DatasetSize::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for DatasetSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("dataset size must be positive")),
            Raw::Count(m) => Ok(DatasetSize::Finite(m)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Content {
    Samples(DMatrix<f64>),
    Exact(DMatrix<f64>),
}

/// Data from one experiment: either an `m x n` sample matrix or, in the
/// infinite regime, the exact `n x n` covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    experiment: Experiment,
    content: Content,
}

impl Dataset {
    pub fn from_samples(experiment: Experiment, samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() != experiment.n() {
            return Err(Error::Usage(format!(
                "sample matrix has {} columns, experiment has {} nodes",
                samples.ncols(),
                experiment.n()
            )));
        }
        if samples.nrows() == 0 {
            return Err(Error::Usage("dataset needs at least one row".into()));
        }
        Ok(Self {
            experiment,
            content: Content::Samples(samples),
        })
    }

    pub fn exact(experiment: Experiment, covariance: DMatrix<f64>) -> Result<Self> {
        let n = experiment.n();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Usage(format!("exact covariance must be {n}x{n}")));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-9 {
            return Err(Error::Usage("exact covariance is not symmetric".into()));
        }
        Ok(Self {
            experiment,
            content: Content::Exact(covariance),
        })
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn n(&self) -> usize {
        self.experiment.n()
    }

    pub fn size(&self) -> DatasetSize {
        match &self.content {
            Content::Samples(s) => DatasetSize::Finite(s.nrows()),
            Content::Exact(_) => DatasetSize::Infinite,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.content, Content::Exact(_))
    }

    pub fn samples(&self) -> Option<&DMatrix<f64>> {
        match &self.content {
            Content::Samples(s) => Some(s),
            Content::Exact(_) => None,
        }
    }

    /// Mean-centred sample covariance (divisor `m - 1`), or the exact covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.content {
            Content::Exact(c) => c.clone(),
            Content::Samples(s) => sample_covariance(s),
        }
    }

    /// Bootstrap resample: `m` rows drawn with replacement. Exact datasets are
    /// returned unchanged.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        match &self.content {
            Content::Exact(_) => self.clone(),
            Content::Samples(s) => {
                let m = s.nrows();
                let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
                let rows = DMatrix::from_fn(m, s.ncols(), |r, c| s[(picks[r], c)]);
                Dataset {
                    experiment: self.experiment.clone(),
                    content: Content::Samples(rows),
                }
            }
        }
    }
}

pub(crate) fn sample_covariance(s: &DMatrix<f64>) -> DMatrix<f64> {
    let m = s.nrows();
    let n = s.ncols();
    let means: Vec<f64> = (0..n).map(|c| s.column(c).mean()).collect();
    let centred = DMatrix::from_fn(m, n, |r, c| s[(r, c)] - means[c]);
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
    (centred.transpose() * &centred) / denom
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Draw `m` i.i.d. samples of the manipulated system: noise from `N(0, Σe)`,
/// intervened values i.i.d. standard normal, then `x = (I - U B)^-1 (U e + c)`.
pub fn sample_data<R: Rng + ?Sized>(
    scm: &LinearScm,
    e: &Experiment,
    m: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    // validates weak stability for this experiment
    analytic_covariance(scm, e)?;
    let n = scm.n();
    let solve = scm
        .manipulated_system(e)
        .try_inverse()
        .ok_or_else(|| Error::WeakStability {
            intervened: e.intervened().to_vec(),
        })?;
    let noise_factor = psd_sqrt(scm.sigma_e());
    let mut out = DMatrix::zeros(m, n);
    let mut z = nalgebra::DVector::zeros(n);
    for r in 0..m {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut drive = &noise_factor * &z;
        for &j in e.intervened() {
            drive[j] = rng.sample(StandardNormal);
        }
        let x = &solve * drive;
        out.row_mut(r).copy_from(&x.transpose());
    }
    Dataset::from_samples(e.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scm() -> LinearScm {
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.5;
        b[(0, 1)] = 0.3;
        b[(2, 1)] = -0.8;
        let mut s = DMatrix::identity(3, 3);
        s[(0, 2)] = 0.4;
        s[(2, 0)] = 0.4;
        LinearScm::new(b, s).unwrap()
    }

    #[test]
    fn sample_covariance_converges() {
        let scm = scm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for j in [vec![], vec![1]] {
            let e = Experiment::new(3, j).unwrap();
            let ds = sample_data(&scm, &e, 100_000, &mut rng).unwrap();
            let diff = (ds.covariance() - analytic_covariance(&scm, &e).unwrap()).amax();
            assert!(diff < 0.05, "max deviation {diff}");
        }
    }

    #[test]
    fn shape_and_determinism() {
        let scm = scm();
        let e = Experiment::observational(3);
        let one = sample_data(&scm, &e, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(one.samples().unwrap().shape(), (1, 3));
        let a = sample_data(&scm, &e, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_data(&scm, &e, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_data(&scm, &e, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn size_parsing() {
        assert_eq!("inf".parse::<DatasetSize>().unwrap(), DatasetSize::Infinite);
        assert_eq!("1000".parse::<DatasetSize>().unwrap(), DatasetSize::Finite(1000));
        assert!("0".parse::<DatasetSize>().is_err());
        assert!("lots".parse::<DatasetSize>().is_err());
        let sizes: Vec<DatasetSize> = serde_json::from_str(r#"[1000, "inf"]"#).unwrap();
        assert_eq!(sizes, vec![DatasetSize::Finite(1000), DatasetSize::Infinite]);
    }

    #[test]
    fn resample_keeps_shape() {
        let scm = scm();
        let e = Experiment::observational(3);
        let ds = sample_data(&scm, &e, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let rs = ds.resample(&mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(rs.size(), DatasetSize::Finite(20));
        let exact = Dataset::exact(e.clone(), analytic_covariance(&scm, &e).unwrap()).unwrap();
        assert_eq!(exact.resample(&mut ChaCha8Rng::seed_from_u64(4)), exact);
    }
}
