//! Three-component Gaussian mixture on the standardized olive oil data,
//! scored against the growing region.

use encinfo::data::{adjusted_rand_index, clustering_accuracy, load_olive_oil};
use encinfo::mixture::{cluster_assign, em_fit_gmm, EmConfig};

fn main() -> encinfo::Result<()> {
    let olive = load_olive_oil(true)?;
    let cfg = EmConfig { seed: 2024, ..Default::default() };
    let model = em_fit_gmm(&olive.x, olive.n_classes, &cfg)?;
    let labels = cluster_assign(&model, olive.x.as_ref())?;

    println!(
        "log-likelihood {:.2} after {} iterations (converged: {})",
        model.loglik(),
        model.n_iterations,
        model.converged
    );
    println!("weights {:?}", model.weights.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());
    println!("accuracy {:.3}", clustering_accuracy(&labels, &olive.labels)?);
    println!("ARI      {:.3}", adjusted_rand_index(&labels, &olive.labels)?);
    println!("classes: {}", olive.class_names.join(", "));
    Ok(())
}
