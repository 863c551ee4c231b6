use std::path::Path;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::data::dataset::write_matrix_csv;
use crate::linalg;
use crate::lmm::GrmMatrix;
use crate::{DataMatrix, Error, Result};

/// Parameters of the additive-genetics simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub n_samples: usize,
    pub n_snps: usize,
    pub h2_true: f64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(n_samples: usize, n_snps: usize, h2_true: f64, seed: u64) -> Result<Self> {
        let spec = Self { n_samples, n_snps, h2_true, seed };
        spec.validate()?;
    linalg::single_threaded();
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::input("simulation needs at least two samples"));
        }
        if self.n_snps < 1 {
            return Err(Error::input("simulation needs at least one SNP"));
        }
        if !(0.0..=1.0).contains(&self.h2_true) {
            return Err(Error::input(format!("h2 = {} outside [0, 1]", self.h2_true)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub y: Vec<f64>,
    /// Standardized genotypes, `n × p`.
    pub genotypes: DataMatrix,
    /// Per-SNP effects.
    pub effects: Vec<f64>,
    /// `Z·λ`, the genetic part of `y`.
    pub genetic_values: Vec<f64>,
    pub grm: GrmMatrix,
}

impl SimulatedData {
    /// Checksum of the phenotype and relatedness matrix.
    pub fn checksum(&self) -> u64 {
        linalg::checksum(
            self.y
                .iter()
                .copied()
                .chain(std::iter::once(linalg::mat_checksum(self.grm.matrix()) as f64)),
        )
    }
}

/// Draw genotypes `Binomial(2, ½)`, standardize each SNP to mean 0 and
/// variance 1 (monomorphic SNPs become zero), draw effects with standard
/// deviation `√(h²/p)` and noise with standard deviation `√(1 − h²)`, and
/// form `G = Z·Zᵀ / p`.
pub fn simulate_heritability_data(spec: &SimulationSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let (n, p) = (spec.n_samples, spec.n_snps);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let binom = Binomial::new(2, 0.5).expect("valid binomial");
    let mut z = Mat::<f64>::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            z[(i, j)] = binom.sample(&mut rng) as f64;
        }
    }
    let mut polymorphic = 0;
    for j in 0..p {
        let mean = (0..n).map(|i| z[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (z[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            polymorphic += 1;
            let sd = var.sqrt();
            for i in 0..n {
                z[(i, j)] = (z[(i, j)] - mean) / sd;
            }
        } else {
            for i in 0..n {
                z[(i, j)] = 0.0;
            }
        }
    }
    if polymorphic == 0 {
        return Err(Error::Simulation("every SNP is monomorphic".into()));
    }

    let effect = Normal::new(0.0, (spec.h2_true / p as f64).sqrt()).expect("finite sd");
    let effects: Vec<f64> = (0..p).map(|_| effect.sample(&mut rng)).collect();
    let genetic = &z * linalg::column(&effects);
    let noise = Normal::new(0.0, (1.0 - spec.h2_true).sqrt()).expect("finite sd");
    let genetic_values: Vec<f64> = (0..n).map(|i| genetic[(i, 0)]).collect();
    let y = genetic_values.iter().map(|g| g + noise.sample(&mut rng)).collect();

    let g = linalg::symmetrize((&z * z.transpose() * (1.0 / p as f64)).as_ref());
    Ok(SimulatedData { y, genotypes: z, effects, genetic_values, grm: GrmMatrix::new(g)? })
}

/// Writes `phenotype.csv`, `genotype.csv` and `grm.csv` into `dir`.
pub fn write_simulation(data: &SimulatedData, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join("phenotype.csv"), &["y".to_string()], linalg::column(&data.y).as_ref())?;
    let snp_names: Vec<String> = (0..data.genotypes.ncols()).map(|j| format!("snp{j}")).collect();
    write_matrix_csv(dir.join("genotype.csv"), &snp_names, data.genotypes.as_ref())?;
    let sample_names: Vec<String> = (0..data.grm.n_samples()).map(|j| format!("s{j}")).collect();
    write_matrix_csv(dir.join("grm.csv"), &sample_names, data.grm.matrix())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_specs_give_identical_draws() {
        let spec = SimulationSpec::new(50, 20, 0.5, 9).unwrap();
        let a = simulate_heritability_data(&spec).unwrap();
        let b = simulate_heritability_data(&spec).unwrap();
        assert_eq!(a.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(linalg::mat_checksum(a.grm.matrix()), linalg::mat_checksum(b.grm.matrix()));
        let c = simulate_heritability_data(&spec.with_seed(10)).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn genotypes_are_standardized() {
        let spec = SimulationSpec::new(200, 30, 0.5, 1).unwrap();
        let d = simulate_heritability_data(&spec).unwrap();
        for j in 0..30 {
            let col: Vec<f64> = (0..200).map(|i| d.genotypes[(i, j)]).collect();
            let mean = col.iter().sum::<f64>() / 200.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 200.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grm_diagonal_averages_to_one() {
        let spec = SimulationSpec::new(1000, 100, 0.5, 3).unwrap();
        let d = simulate_heritability_data(&spec).unwrap();
        let mean_diag = linalg::trace(d.grm.matrix()) / 1000.0;
        assert!((mean_diag - 1.0).abs() < 0.05, "{mean_diag}");
    }

    #[test]
    fn monomorphic_snps_are_zeroed_and_all_monomorphic_fails() {
        // two samples: a SNP is monomorphic with probability 3/8
        let mut saw_zero = false;
        for seed in 0..20 {
            let spec = SimulationSpec::new(2, 4, 0.5, seed).unwrap();
            match simulate_heritability_data(&spec) {
                Ok(d) => {
                    for j in 0..4 {
                        if d.genotypes[(0, j)] == 0.0 && d.genotypes[(1, j)] == 0.0 {
                            saw_zero = true;
                        }
                    }
                }
                Err(e) => assert!(matches!(e, Error::Simulation(_))),
            }
        }
        assert!(saw_zero);
        let all_fail = (0..200).any(|seed| {
            matches!(
                simulate_heritability_data(&SimulationSpec::new(2, 1, 0.5, seed).unwrap()),
                Err(Error::Simulation(_))
            )
        });
        assert!(all_fail);
    }

    #[test]
    fn spec_validation() {
        assert!(SimulationSpec::new(1, 10, 0.5, 0).is_err());
        assert!(SimulationSpec::new(10, 0, 0.5, 0).is_err());
        assert!(SimulationSpec::new(10, 10, 1.5, 0).is_err());
    }

    #[test]
    fn writes_csv_triplet() {
        let dir = tempfile::tempdir().unwrap();
        let d = simulate_heritability_data(&SimulationSpec::new(6, 3, 0.5, 4).unwrap()).unwrap();
        write_simulation(&d, dir.path()).unwrap();
        let y = crate::data::read_matrix_csv(dir.path().join("phenotype.csv")).unwrap();
        assert_eq!((y.nrows(), y.ncols()), (6, 1));
        assert_eq!(y[(3, 0)], d.y[3]);
        let g = crate::data::read_matrix_csv(dir.path().join("grm.csv")).unwrap();
        assert_eq!(linalg::max_abs_diff(g.as_ref(), d.grm.matrix()), 0.0);
    }
}
