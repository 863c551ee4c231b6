//! Principal-subspace feature encoders on the olive oil table: how much of
//! the standardized data each encoding size keeps.

use encinfo::data::load_olive_oil;
use encinfo::encoding::{decode_features, encode_features, fit_feature_encoder};
use encinfo::linalg;

fn main() -> encinfo::Result<()> {
    let olive = load_olive_oil(true)?;
    let (n, p) = (olive.x.nrows(), olive.x.ncols());
    println!("{} rows, features: {}", n, olive.feature_names.join(", "));

    let centered = linalg::center_columns(olive.x.as_ref());
    let total: f64 = centered.squared_norm_l2();
    for r in 1..=p {
        let b = fit_feature_encoder(&olive.x, r)?;
        let z = encode_features(&b, centered.as_ref())?;
        let back = decode_features(&b, z.as_ref())?;
        let kept = 1.0 - (&centered - &back).squared_norm_l2() / total;
        println!("r = {r}  variance kept {:6.2}%", 100.0 * kept);
    }

    let b = fit_feature_encoder(&olive.x, 2)?;
    println!("\nloadings of the first two directions:");
    for (j, name) in olive.feature_names.iter().enumerate() {
        println!("  {name:>12} {:+.3} {:+.3}", b.matrix()[(j, 0)], b.matrix()[(j, 1)]);
    }
    Ok(())
}
