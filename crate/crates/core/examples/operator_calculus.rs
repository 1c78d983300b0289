//! Diagonal operator calculus on the Dirichlet Laplacian.

use neutral_spde::spectral::{HVector, PowerSign, SpectralModel};

fn main() -> neutral_spde::Result<()> {
    let a = SpectralModel::laplacian(6)?;
    let v = HVector::from_fn(6, |k| 1.0 / (k + 1) as f64);

    let s = a.semigroup_apply(0.1, &a.semigroup_apply(0.2, &v)?)?;
    let direct = a.semigroup_apply(0.3, &v)?;
    println!("S(0.1)S(0.2)v vs S(0.3)v: {:.2e}", s.distance(&direct));

    let half = a.fractional_apply(0.5, PowerSign::Negative, &v)?;
    let back = a.fractional_apply(0.5, PowerSign::Positive, &half)?;
    println!("(-A)^1/2 (-A)^-1/2 v - v: {:.2e}", back.distance(&v));
    println!("|(-A)^-0.75| = {}", a.inverse_fractional_norm(0.75));

    let (l, m) = (1.0, 3.0);
    let lhs = &a.resolvent_apply(l, &v)? - &a.resolvent_apply(m, &v)?;
    let rhs = a.resolvent_apply(l, &a.resolvent_apply(m, &v)?)?.scaled(m - l);
    println!("resolvent identity residual: {:.2e}", lhs.distance(&rhs));

    for t in [0.01, 0.1, 1.0] {
        println!("t = {t}: |S(t)| = {:.4}, t|AS(t)| = {:.4}", a.semigroup_norm(t), t * a.analytic_norm(t));
    }
    let samples = [0.5, 1.0, 10.0, 100.0];
    println!("sectorial with M = 1, delta = 0: {}", a.sectorial_check(1.0, 0.0, &samples)?);
    Ok(())
}
