//! Small versions of both benchmark sweeps, written to disk as CSV, JSON
//! and SVG box plots.
//!
//! ```text
//! cargo run --release --example benchmark_report -- target/bench-demo
//! ```

use std::path::PathBuf;

use encinfo::bench::{emit_report, run_lmm_benchmark, run_mixture_benchmark, LmmBenchOptions, MixtureBenchOptions};
use encinfo::data::{load_olive_oil, SimulationSpec};
use encinfo::mixture::Family;

fn main() -> encinfo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("encinfo-bench"));

    let spec = SimulationSpec::new(300, 100, 0.5, 0)?;
    let lmm = run_lmm_benchmark(&spec, &[75, 150], 10, 100, &LmmBenchOptions::default())?;
    for path in emit_report(&lmm, out.join("lmm"))? {
        println!("wrote {}", path.display());
    }
    for g in &lmm.summary {
        println!("  {:>7} {:4}: h2 {:.3} ± {:.3}, {:.4}s", g.method, g.reduction_param, g.estimate.mean, g.estimate.sd, g.runtime_seconds.median);
    }

    let olive = load_olive_oil(true)?;
    let mix = run_mixture_benchmark(&olive, &[2, 4, 8], 3, 10, Family::FullCovariance, 0, &MixtureBenchOptions::default())?;
    for path in emit_report(&mix, out.join("mixture"))? {
        println!("wrote {}", path.display());
    }
    for g in &mix.summary {
        println!("  {:>8} {}: accuracy {:.3} ± {:.3}", g.method, g.reduction_param, g.estimate.mean, g.estimate.sd);
    }
    Ok(())
}
