//! Resolvent and semigroup gaps of the Yosida, Galerkin and shifted families.

use neutral_spde::approximants::{gap_table_csv, GapRow, GeneratorFamily, MemberIndex};
use neutral_spde::spectral::{HVector, SpectralModel};
use neutral_spde::stochastics::uniform_grid;

fn main() -> neutral_spde::Result<()> {
    let base = SpectralModel::laplacian(16)?;
    let v = HVector::unit(16, 0);
    let grid = uniform_grid(1e-3, 1000);

    let yosida = GeneratorFamily::yosida(base.clone());
    let mut rows = Vec::new();
    for n in [1, 4, 16, 64, 256] {
        let ix = MemberIndex::Order(n);
        rows.push(GapRow {
            index: n as f64,
            lambda_or_t: 1.0,
            gap: yosida.resolvent_gap(ix, 1.0, &v)?,
        });
        println!("n = {n:>3}: sup_t |S_n(t)v - S(t)v| = {:.3e}", yosida.semigroup_gap(ix, &grid, &v)?);
    }
    print!("{}", gap_table_csv(&rows));

    let spread = HVector::from_fn(16, |k| 1.0 / (k + 1) as f64);
    let galerkin = GeneratorFamily::galerkin(base.clone());
    for n in [2, 8, 16] {
        let gap = galerkin.semigroup_gap(MemberIndex::Order(n), &grid, &spread)?;
        println!("galerkin n = {n:>2}: semigroup gap {gap:.3e}");
    }
    let shifted = GeneratorFamily::shifted(base);
    for eps in [0.1, 0.01, 0.001] {
        let gap = shifted.resolvent_gap(MemberIndex::Eps(eps), 1.0, &spread)?;
        println!("shifted eps = {eps}: resolvent gap {gap:.3e}");
    }
    Ok(())
}
