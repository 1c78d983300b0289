//! Small-noise limit on the linear submodel: the error follows eps^2.

use std::path::Path;

use neutral_spde::approximants::GeneratorFamily;
use neutral_spde::config::{load, Overrides};
use neutral_spde::experiments::zeroth_order_experiment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/linear.toml");
    let cfg = load(&path, &Overrides::default())?;
    let spec = cfg.model()?;
    let eps = [0.4, 0.2, 0.1, 0.05];
    let rep = zeroth_order_experiment(&spec, None, &eps, &cfg.noise(), &cfg.monte_carlo())?;
    for r in &rep.rows {
        let e = r.estimate().expect("row succeeded");
        println!("eps = {:<5} error = {:.4e} +- {:.1e}  error/eps^2 = {:.5}", r.index_value, e.value, e.stderr, e.value / r.index_value.powi(2));
    }
    let shifted = GeneratorFamily::shifted(spec.space().clone());
    let rep = zeroth_order_experiment(&spec, Some(&shifted), &eps, &cfg.noise(), &cfg.monte_carlo())?;
    println!("with A_eps = (1 + eps) A:");
    print!("{}", rep.to_plot_data());
    Ok(())
}
