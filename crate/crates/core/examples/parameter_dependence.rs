//! Dependence on a drift parameter, plus a custom family varying the impulse.

use std::path::Path;

use neutral_spde::config::{load, Overrides};
use neutral_spde::experiments::{drift_perturbation, parameter_family_experiment};
use neutral_spde::model::{ImpulseMap, ImpulseSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml");
    let cfg = load(&path, &Overrides::default())?;
    let spec = cfg.model()?;
    let noise = cfg.noise();
    let mc = cfg.monte_carlo();

    let drift = drift_perturbation(&spec, spec.space(), cfg.param_direction.build(), cfg.theta0);
    let rep = parameter_family_experiment(&drift, &cfg.theta_grid(), cfg.theta0, &noise, &mc)?;
    print!("{}", rep.to_plot_data());

    // impulse strength h_theta = 0.3 + theta
    let impulses = |theta: f64| {
        let imp = ImpulseSchedule::new(vec![0.5], vec![ImpulseMap::Saturating(0.3 + theta)])?;
        Ok((spec.with_impulses(imp)?, spec.space().clone()))
    };
    let rep = parameter_family_experiment(&impulses, &[0.2, 0.1, 0.05, 0.0], 0.0, &noise, &mc)?;
    print!("{}", rep.to_plot_data());
    Ok(())
}
