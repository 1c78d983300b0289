use neutral_spde::config::{self, Overrides, RunConfig};
use neutral_spde::experiments::{apriori_bound_check, MonteCarlo};
use neutral_spde::model::{segment_view, CoefficientSet, DiffusionField, ImpulseSchedule, InitialPath, ModelSpec};
use neutral_spde::solver::{solve_deterministic, solve_mild, SolverConfig};
use neutral_spde::spectral::SpectralModel;
use neutral_spde::stochastics::{sample_increments, uniform_grid, NoiseSpec};

fn shipped(name: &str) -> RunConfig {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    config::load(&path, &Overrides::default()).unwrap()
}

#[test]
fn ou_second_moment_matches_closed_form() {
    let sigma = 0.7;
    let mut c = CoefficientSet::zero(0.75);
    c.diffusion = DiffusionField::additive(sigma);
    let space = SpectralModel::new(vec![1.0], "ou").unwrap();
    let spec = ModelSpec::new(space.clone(), c, ImpulseSchedule::none(), InitialPath::Constant(vec![0.0].into()), 0.0, 2.0, 1.0).unwrap();
    let noise = NoiseSpec::new(vec![1.0], 17).unwrap();
    let grid = uniform_grid(1e-3, 1000);
    let n = 10_000;
    let xs: Vec<f64> = (0..n)
        .map(|j| {
            let inc = sample_increments(&noise, &grid, j).unwrap();
            solve_mild(&spec, &space, &noise, &inc, &SolverConfig::new(1e-3)).unwrap().final_value()[0].powi(2)
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let stderr = (var / n as f64).sqrt();
    let exact = sigma * sigma * (1.0 - (-2f64).exp()) / 2.0;
    assert!((mean - exact).abs() <= 3.0 * stderr, "{mean} +- {stderr} vs {exact}");
}

#[test]
fn future_noise_does_not_change_the_past() {
    let cfg = shipped("reference.toml");
    let spec = cfg.model().unwrap();
    let noise = cfg.noise();
    let steps = 400;
    let inc = sample_increments(&noise, &uniform_grid(cfg.dt, steps), 0).unwrap();
    let base = solve_mild(&spec, spec.space(), &noise, &inc, &cfg.solver()).unwrap();
    for k in [1, 150, 200, 399] {
        let mut bumped = inc.clone();
        for i in k..steps {
            for d in bumped.row_mut(i) {
                *d += 0.5;
            }
        }
        let x = solve_mild(&spec, spec.space(), &noise, &bumped, &cfg.solver()).unwrap();
        let pos = base.position(k);
        assert_eq!(&base.values()[..=pos], &x.values()[..=pos], "prefix up to step {k}");
        assert_ne!(base.final_value(), x.final_value());
    }
}

#[test]
fn halving_dt_halves_the_deterministic_error() {
    let cfg = shipped("reference.toml");
    let spec = cfg.model().unwrap();
    let at_t = |dt: f64| solve_deterministic(&spec, spec.space(), &SolverConfig::new(dt)).unwrap().final_value().clone();
    let steps = [0.01, 0.005, 0.0025];
    let reference = at_t(0.0025 / 16.0);
    let errs: Vec<f64> = steps.iter().map(|&dt| at_t(dt).distance(&reference)).collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((1.7..=2.6).contains(&r), "ratio {r} from {errs:?}");
    }
}

#[test]
fn segments_read_right_limits_after_impulses() {
    let cfg = shipped("impulsive.toml");
    let spec = cfg.model().unwrap();
    let x = solve_deterministic(&spec, spec.space(), &cfg.solver()).unwrap();
    let pos = x.position(50);
    let at = segment_view(&x, 0.25, cfg.delay).unwrap();
    assert_eq!(at.current(), x.value(pos));
    let after = segment_view(&x, 0.26, cfg.delay).unwrap();
    assert_eq!(after.at_step(after.len() - 3), x.right_value(pos));
    assert_ne!(x.right_value(pos), x.value(pos));
}

#[test]
fn moment_bound_is_stable_for_shipped_models() {
    for (name, paths) in [("ou.toml", 5000), ("impulsive.toml", 2000), ("reference.toml", 2000), ("linear.toml", 2000)] {
        let cfg = shipped(name);
        let spec = cfg.model().unwrap();
        let rep = apriori_bound_check(&spec, spec.space(), &cfg.noise(), &MonteCarlo::new(paths, cfg.solver())).unwrap();
        assert!(rep.stable(), "{name}: {rep:?}");
        if name == "ou.toml" {
            let exact = (1.0 - (-2.0 * rep.full.argmax_t).exp()) / 2.0;
            assert!((rep.full.value - exact).abs() <= 3.0 * rep.full.stderr, "{rep:?}");
        }
    }
}
