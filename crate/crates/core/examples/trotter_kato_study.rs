//! Generator approximation on the reference model under common noise.

use std::path::Path;

use neutral_spde::config::{load, Overrides};
use neutral_spde::experiments::trotter_kato_experiment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml");
    let cfg = load(&path, &Overrides::default())?;
    let spec = cfg.model()?;
    let rep = trotter_kato_experiment(&spec, &cfg.family(), &cfg.family_indices, &cfg.noise(), &cfg.monte_carlo())?
        .with_config_hash(cfg.hash());
    print!("{}", rep.to_csv());
    println!("last/first = {:.4}", rep.decay_ratio().unwrap_or(f64::NAN));
    Ok(())
}
