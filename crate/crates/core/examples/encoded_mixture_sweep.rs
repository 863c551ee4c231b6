//! Accuracy of mixtures fitted in an r-dimensional principal subspace of
//! the olive oil data, r = 2..8, with single-restart runs so the spread
//! over initializations is visible.

use encinfo::bench::Stats;
use encinfo::data::{clustering_accuracy, load_olive_oil};
use encinfo::encoding::fit_feature_encoder;
use encinfo::mixture::{cluster_assign, em_fit_gmm, encoded_mixture_fit, EmConfig, Family};

const RUNS: u64 = 20;

fn main() -> encinfo::Result<()> {
    let olive = load_olive_oil(true)?;
    let k = olive.n_classes;
    let cfg = |seed| EmConfig { seed, n_restarts: 1, ..Default::default() };

    let mut baseline = Vec::new();
    for seed in 0..RUNS {
        let model = em_fit_gmm(&olive.x, k, &cfg(seed))?;
        baseline.push(clustering_accuracy(&cluster_assign(&model, olive.x.as_ref())?, &olive.labels)?);
    }
    let s = Stats::from_values(&baseline).expect("non-empty");
    println!("baseline p = 8  mean {:.3}  median {:.3}  sd {:.3}", s.mean, s.median, s.sd);

    for r in 2..=8 {
        let b = fit_feature_encoder(&olive.x, r)?;
        let mut acc = Vec::new();
        for seed in 0..RUNS {
            let fit = encoded_mixture_fit(&olive.x, &b, k, Family::FullCovariance, &cfg(seed))?;
            acc.push(clustering_accuracy(&fit.assign(olive.x.as_ref())?, &olive.labels)?);
        }
        let s = Stats::from_values(&acc).expect("non-empty");
        println!("encoded  r = {r}  mean {:.3}  median {:.3}  sd {:.3}", s.mean, s.median, s.sd);
    }
    Ok(())
}
