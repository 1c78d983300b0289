//! One path of the shipped impulsive neutral model, with its jumps.

use std::path::Path;

use neutral_spde::config::{load, Overrides};
use neutral_spde::solver::solve_mild;
use neutral_spde::stochastics::{sample_increments, uniform_grid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/impulsive.toml");
    let cfg = load(&path, &Overrides::default())?;
    let spec = cfg.model()?;
    let noise = cfg.noise();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let inc = sample_increments(&noise, &uniform_grid(cfg.dt, steps), 0)?;
    let x = solve_mild(&spec, spec.space(), &noise, &inc, &cfg.solver())?;

    for (k, (&pos, jump)) in x.jumps().iter().enumerate() {
        let left = x.value(pos);
        let right = x.right_value(pos);
        println!(
            "t_{} = {:.3}: |x(t-)| = {:.4}, |x(t+)| = {:.4}, |jump| = {:.4}, exact: {}",
            k + 1,
            x.time(pos),
            left.norm(),
            right.norm(),
            jump.norm(),
            *right == left + &spec.impulses().map(k).apply(left)
        );
    }
    let csv = x.to_csv();
    println!("{} csv lines; head:", csv.lines().count());
    for line in csv.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
