//! Learn a sample encoder from a relatedness matrix and look at what it
//! does to the matrix.

use encinfo::data::{simulate_heritability_data, SimulationSpec};
use encinfo::encoding::{encode_samples, fit_sample_encoder, Encoder};
use encinfo::linalg;

fn main() -> encinfo::Result<()> {
    let sim = simulate_heritability_data(&SimulationSpec::new(200, 40, 0.5, 1)?)?;
    let a = fit_sample_encoder(&sim.grm, 60)?;
    println!("encoder {} × {}, learned in {:.4}s", a.target_rank(), a.source_rank(), a.construction_seconds());

    let am = a.matrix();
    let gram = am * am.transpose();
    println!("max |A·Aᵀ − I| = {:.2e}", linalg::identity_defect(gram.as_ref()));

    // Encoding G with its own eigenvectors leaves only the spectrum.
    let ag = encode_samples(&a, sim.grm.matrix())?;
    let g_enc = &ag * am.transpose();
    let off_diag = (0..60)
        .flat_map(|i| (0..60).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| g_enc[(i, j)].abs())
        .fold(0.0, f64::max);
    let diag: Vec<String> = (0..8).map(|i| format!("{:.3}", g_enc[(i, i)])).collect();
    println!("A·G·Aᵀ diagonal starts {} …; largest off-diagonal {off_diag:.2e}", diag.join(" "));
    // G has rank ≤ 40, so rows past 40 span its null space.
    println!("A·G·Aᵀ[50, 50] = {:.2e}", g_enc[(50, 50)]);

    let path = std::env::temp_dir().join("sample_encoder.csv");
    Encoder::Sample(a).save(&path)?;
    match Encoder::load(&path)? {
        Encoder::Sample(b) => println!("reloaded {} × {} from {}", b.target_rank(), b.source_rank(), path.display()),
        Encoder::Feature(_) => unreachable!(),
    }
    Ok(())
}
