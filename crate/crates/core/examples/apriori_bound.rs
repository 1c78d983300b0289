//! Moment bound sup_t E|x(t)|^p and its stability under doubling the paths.

use std::path::Path;

use neutral_spde::config::{load, Overrides};
use neutral_spde::experiments::{apriori_bound_check, MonteCarlo};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["ou.toml", "impulsive.toml", "reference.toml"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
        let cfg = load(&path, &Overrides::default())?;
        let spec = cfg.model()?;
        let rep = apriori_bound_check(&spec, spec.space(), &cfg.noise(), &MonteCarlo::new(2000, cfg.solver()))?;
        println!(
            "{name:<15} sup_t E|x|^p: {:.4} ({} paths) -> {:.4} ({} paths), change {:.2}%, stable: {}",
            rep.half.value,
            rep.half.paths,
            rep.full.value,
            rep.full.paths,
            100.0 * rep.relative_change,
            rep.stable()
        );
    }
    Ok(())
}
