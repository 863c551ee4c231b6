//! Simulated GWAS data, labeled CSV datasets and clustering metrics.

pub mod dataset;
pub mod metrics;
pub mod simulate;

pub use dataset::{
    load_labeled_csv, load_olive_oil, read_labeled_csv, read_matrix_csv, write_matrix_csv,
    LabeledDataset, OLIVE_OIL_CSV,
};
pub use metrics::{adjusted_rand_index, clustering_accuracy};
pub use simulate::{simulate_heritability_data, write_simulation, SimulatedData, SimulationSpec};
