//! Counter-addressed Q-Wiener increments and the stochastic convolution.

use neutral_spde::spectral::SpectralModel;
use neutral_spde::stochastics::{
    convolution_increment, lambda_hs_norm, normal_at, sample_increments, uniform_grid, DiffusionValue, NoiseSpec,
    WienerIncrements,
};

fn main() -> neutral_spde::Result<()> {
    let noise = NoiseSpec::new((1..=4).map(|j| 1.0 / (j * j) as f64).collect(), 42)?;
    println!("J = {}, tr Q = {:.4}", noise.noise_dim(), noise.trace());

    let grid = uniform_grid(0.01, 100);
    let inc = sample_increments(&noise, &grid, 7)?;
    let z = normal_at(42, 7, 30, 2, 4);
    println!("increment (step 30, mode 3) = {:.6}, sqrt(dt) * normal_at = {:.6}", inc.row(30)[2], 0.1 * z);

    let mut buf = Vec::new();
    inc.write_to(&mut buf)?;
    let back = WienerIncrements::read_from(buf.as_slice(), grid.clone())?;
    println!("binary dump: {} bytes, roundtrip equal: {}", buf.len(), back == inc);

    let a = SpectralModel::laplacian(3)?;
    let b = DiffusionValue::diagonal(3, 4, |_| 0.5);
    println!("|b|_lambda = {:.4}", lambda_hs_norm(&b, &noise)?);
    let t = 1.0;
    let mut conv = vec![0.0; 3];
    for (i, w) in grid.windows(2).enumerate() {
        let piece = convolution_increment(&a, t, w[0], &b, &noise, inc.row(i))?;
        for (c, p) in conv.iter_mut().zip(piece.iter()) {
            *c += p;
        }
    }
    println!("int_0^1 S(1-s) b dw(s) = {conv:?}");
    Ok(())
}
