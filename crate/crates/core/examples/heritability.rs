//! Simulate a polygenic trait and recover its heritability with AI-REML.

use encinfo::data::{simulate_heritability_data, SimulationSpec};
use encinfo::lmm::{reml_fit, FitConfig, LmmInputs};

fn main() -> encinfo::Result<()> {
    for h2 in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let sim = simulate_heritability_data(&SimulationSpec::new(500, 100, h2, 11)?)?;
        let fit = reml_fit(&LmmInputs::with_intercept(sim.y, sim.grm)?, &FitConfig::default())?;
        println!("true {h2:.2}  estimated {:.3}  ({} iterations)", fit.h2, fit.n_iterations);
    }

    let sim = simulate_heritability_data(&SimulationSpec::new(300, 50, 0.5, 3)?)?;
    let fit = reml_fit(&LmmInputs::with_intercept(sim.y, sim.grm)?, &FitConfig::default())?;
    println!("{}", fit.to_json());
    Ok(())
}
