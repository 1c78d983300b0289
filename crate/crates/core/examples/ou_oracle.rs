//! Scalar Ornstein-Uhlenbeck mode against its exact second moment.

use neutral_spde::model::{CoefficientSet, DiffusionField, ImpulseSchedule, InitialPath, ModelSpec};
use neutral_spde::solver::{solve_mild, SolverConfig};
use neutral_spde::spectral::SpectralModel;
use neutral_spde::stochastics::{sample_increments, uniform_grid, NoiseSpec};

fn main() -> neutral_spde::Result<()> {
    let space = SpectralModel::new(vec![1.0], "ou")?;
    let mut coeffs = CoefficientSet::zero(0.75);
    coeffs.diffusion = DiffusionField::additive(1.0);
    let spec = ModelSpec::new(space.clone(), coeffs, ImpulseSchedule::none(), InitialPath::Constant(vec![0.0].into()), 0.0, 2.0, 1.0)?;
    let noise = NoiseSpec::new(vec![1.0], 7)?;
    let cfg = SolverConfig::new(1e-3);
    let grid = uniform_grid(cfg.dt, 1000);

    let paths = 10_000;
    let mut squares = Vec::with_capacity(paths);
    for j in 0..paths {
        let inc = sample_increments(&noise, &grid, j as u64)?;
        squares.push(solve_mild(&spec, &space, &noise, &inc, &cfg)?.final_value()[0].powi(2));
    }
    let n = paths as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let exact = (1.0 - (-2f64).exp()) / 2.0;
    println!("E x(1)^2 = {mean:.4} +- {:.4} (exact {exact:.4})", (var / n).sqrt());
    Ok(())
}
