//! The existence gate and the Lipschitz probe on a family of impulse sizes.

use neutral_spde::model::{
    diagonal_gate, lipschitz_probe, CoefficientSet, DiffusionField, ImpulseMap, ImpulseSchedule,
    InitialPath, ModelSpec, VectorField,
};
use neutral_spde::spectral::SpectralModel;
use neutral_spde::stochastics::NoiseSpec;

fn main() -> neutral_spde::Result<()> {
    let space = SpectralModel::laplacian(4)?;
    let noise = NoiseSpec::new(vec![1.0, 0.25, 0.11, 0.06], 1)?;
    let mut coeffs = CoefficientSet::zero(0.75);
    coeffs.drift = VectorField::BoundedNonlinear { scale: 0.5, delayed_scale: 0.3 };
    coeffs.neutral = VectorField::BoundedNonlinear { scale: 0.4, delayed_scale: 0.0 };
    coeffs.diffusion = DiffusionField::Diagonal { additive: 0.5, sigma: 0.2 };
    coeffs.constants = coeffs.derived_constants(2.0, 4, &noise).unwrap_or_default();
    println!("derived constants: {:?}", coeffs.constants);

    for h in [0.2, 0.5, 0.6, 0.7] {
        let imp = ImpulseSchedule::new(vec![0.5], vec![ImpulseMap::Saturating(h)])?;
        let spec = ModelSpec::new(space.clone(), coeffs.clone(), imp, InitialPath::Constant(vec![1.0; 4].into()), 0.1, 2.0, 1.0)?;
        let gate = diagonal_gate(&spec);
        println!("h = {h}: gate {:.3} -> {}", gate.value(), if gate.passed() { "pass" } else { "fail" });
        if h == 0.2 {
            let probe = lipschitz_probe(&spec, &noise, 2000, 3)?;
            print!("{}", probe.to_csv());
        }
    }
    Ok(())
}
