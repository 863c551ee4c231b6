//! Full vs. sample-encoded REML on one simulated draw, with a timing
//! breakdown of the encoded path.
//!
//! ```text
//! cargo run --release --example encoded_heritability -- 1000 500
//! ```

use std::time::Instant;

use encinfo::data::{simulate_heritability_data, SimulationSpec};
use encinfo::encoding::fit_sample_encoder;
use encinfo::lmm::{encode_inputs, encoded_reml_fit, reml_fit, FitConfig, LmmInputs};

fn main() -> encinfo::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let n = args.next().unwrap_or(1000);
    let m = args.next().unwrap_or(n / 2);

    let sim = simulate_heritability_data(&SimulationSpec::new(n, 100, 0.5, 7)?)?;
    let inputs = LmmInputs::with_intercept(sim.y, sim.grm)?;

    let full = reml_fit(&inputs, &FitConfig::default())?;
    println!("full     n = {n:5}  h2 = {:.4}  iterations = {:2}  {:.3}s", full.h2, full.n_iterations, full.runtime_seconds);

    let a = fit_sample_encoder(inputs.grm(), m)?;
    let t = Instant::now();
    let encoded_inputs = encode_inputs(&inputs, &a)?;
    let apply = t.elapsed().as_secs_f64();
    let inner = reml_fit(&encoded_inputs, &FitConfig::default())?;

    let cfg = FitConfig { include_encoder_construction: true, ..Default::default() };
    let enc = encoded_reml_fit(&inputs, &a, &cfg)?;
    println!("encoded  m = {m:5}  h2 = {:.4}  iterations = {:2}  {:.3}s", enc.h2, enc.n_iterations, enc.runtime_seconds);
    println!(
        "  learn encoder {:.3}s, apply {:.3}s, fit {:.3}s",
        a.construction_seconds(),
        apply,
        inner.runtime_seconds
    );
    println!("encoded / full runtime: {:.2}", enc.runtime_seconds / full.runtime_seconds);
    Ok(())
}
