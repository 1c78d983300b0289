//! Time stepping of the mild solution.
//!
//! One step from `t` to `t + dt` between impulses reads
//!
//! ```text
//! x(t+dt) = S(dt)[x(t) + f(t, π_t x)] - f(t+dt, π_{t+dt} x)
//!         + ∫_0^dt S(u) du · a(t, π_t x)
//!         + S(dt) b(t, π_t x) Δω_t
//! ```
//!
//! The singular term `-∫ A S(t-s) f ds` is integrated exactly through the
//! telescoping identity `∫_t^{t+dt} A S(t+dt-s) f ds = S(dt) f - f` for `f`
//! frozen over the step. `f(t+dt, ·)` depends on `x(t+dt)` itself through the
//! segment endpoint and is resolved by Picard iteration. At an impulse time
//! the stored value is the left limit `x(t_k^-)`, the jump is
//! `I_k(x(t_k^-))`, and stepping resumes from the right limit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::model::{diagonal_gate, grid_steps, GateOutcome, ModelSpec, Segment};
use crate::spectral::{HVector, SpectralModel};
use crate::stochastics::{NoiseSpec, WienerIncrements};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        SolverConfig {
            dt,
            picard_tol: 1e-10,
            picard_max_iter: 50,
        }
    }
}

/// Grid-indexed solution on `[-r, T]` with recorded one-sided limits at the
/// impulse times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    history_steps: usize,
    values: Vec<HVector>,
    post_jump: BTreeMap<usize, HVector>,
    jumps: BTreeMap<usize, HVector>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid points, history included.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Steps on `[0, T]`.
    pub fn steps(&self) -> usize {
        self.values.len() - 1 - self.history_steps
    }

    pub fn history_steps(&self) -> usize {
        self.history_steps
    }

    /// `r` as stored on the grid.
    pub fn history_time(&self) -> f64 {
        self.history_steps as f64 * self.dt
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Time of grid position `pos` (position 0 is `t = -r`).
    pub fn time(&self, pos: usize) -> f64 {
        (pos as f64 - self.history_steps as f64) * self.dt
    }

    /// Position of the grid time `i dt`, `i >= 0`.
    pub fn position(&self, step: usize) -> usize {
        self.history_steps + step
    }

    /// Stored value; at impulse times this is the left limit.
    pub fn value(&self, pos: usize) -> &HVector {
        &self.values[pos]
    }

    /// Right limit (equal to the stored value away from impulses).
    pub fn right_value(&self, pos: usize) -> &HVector {
        self.post_jump.get(&pos).unwrap_or(&self.values[pos])
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    /// Values on `[0, T]`, one per step.
    pub fn forward_values(&self) -> &[HVector] {
        &self.values[self.history_steps..]
    }

    pub fn final_value(&self) -> &HVector {
        self.values.last().expect("trajectory is nonempty")
    }

    pub fn post_jump(&self) -> &BTreeMap<usize, HVector> {
        &self.post_jump
    }

    /// Recorded jumps `Δx(t_k) = I_k(x(t_k^-))`, keyed by grid position.
    pub fn jumps(&self) -> &BTreeMap<usize, HVector> {
        &self.jumps
    }

    #[cfg(test)]
    pub(crate) fn shifted_for_test(&self, c: &HVector) -> Trajectory {
        let mut t = self.clone();
        for v in t.values.iter_mut().chain(t.post_jump.values_mut()) {
            v.add_assign(c);
        }
        t
    }

    /// CSV with columns `t, mode_1..mode_N, is_post_jump`; each impulse time
    /// has a second row holding the right limit.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for k in 1..=n {
            let _ = write!(out, ",mode_{k}");
        }
        out.push_str(",is_post_jump\n");
        let row = |out: &mut String, t: f64, v: &HVector, flag: u8| {
            let _ = write!(out, "{t}");
            for x in v.iter() {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{flag}");
        };
        for (pos, v) in self.values.iter().enumerate() {
            let t = self.time(pos);
            row(&mut out, t, v, 0);
            if let Some(post) = self.post_jump.get(&pos) {
                row(&mut out, t, post, 1);
            }
        }
        out
    }
}

/// Result of one neutral fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub value: HVector,
    pub iterations: usize,
}

/// Solves `y = explicit - f(target_time, segment with endpoint y)`.
///
/// `segment` supplies the window at `target_time`; its endpoint is
/// overwritten by the iterates. Stops once an update is below
/// `picard_tol * max(1, |explicit|)`.
pub fn neutral_picard(
    spec: &ModelSpec,
    target_time: f64,
    explicit: &HVector,
    segment: &mut Segment,
    cfg: &SolverConfig,
) -> Result<PicardOutcome> {
    check_dim(spec.dim(), explicit.len())?;
    check_dim(spec.dim(), segment.dim())?;
    let scale = explicit.norm().max(1.0);
    let mut y = explicit.clone();
    let mut update = f64::INFINITY;
    for iter in 1..=cfg.picard_max_iter {
        *segment.current_mut() = y.clone();
        let f = spec.neutral_value(target_time, segment);
        let mut next = explicit.clone();
        next.sub_assign(&f);
        update = next.distance(&y);
        y = next;
        if !update.is_finite() {
            break;
        }
        if update <= cfg.picard_tol * scale {
            *segment.current_mut() = y.clone();
            return Ok(PicardOutcome {
                value: y,
                iterations: iter,
            });
        }
    }
    Err(Error::PicardDivergence {
        time: target_time,
        iterations: cfg.picard_max_iter,
        residual: update,
    })
}

struct Noise<'a> {
    spec: &'a NoiseSpec,
    increments: &'a WienerIncrements,
    scale: f64,
}

/// Discrete mild solution driven by one path of Brownian increments.
pub fn solve_mild(
    spec: &ModelSpec,
    generator: &SpectralModel,
    noise: &NoiseSpec,
    increments: &WienerIncrements,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve_mild_scaled(spec, generator, noise, increments, cfg, 1.0)
}

/// As [`solve_mild`] with the diffusion multiplied by `diffusion_scale`
/// (the small-noise system uses `eps * b`).
pub fn solve_mild_scaled(
    spec: &ModelSpec,
    generator: &SpectralModel,
    noise: &NoiseSpec,
    increments: &WienerIncrements,
    cfg: &SolverConfig,
    diffusion_scale: f64,
) -> Result<Trajectory> {
    integrate(
        spec,
        generator,
        cfg,
        Some(Noise {
            spec: noise,
            increments,
            scale: diffusion_scale,
        }),
    )
}

/// Deterministic system (`b ≡ 0`); consumes no noise.
pub fn solve_deterministic(spec: &ModelSpec, generator: &SpectralModel, cfg: &SolverConfig) -> Result<Trajectory> {
    integrate(spec, generator, cfg, None)
}

/// Grid layout shared by every solve of a model: `(history_steps, steps,
/// impulse positions)`.
pub fn grid_layout(spec: &ModelSpec, dt: f64) -> Result<(usize, usize, Vec<usize>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("step dt = {dt} must be > 0")));
    }
    let steps = grid_steps(spec.horizon(), dt).ok_or_else(|| {
        Error::GridAlignment(format!("T = {} is not a multiple of dt = {dt}", spec.horizon()))
    })?;
    let history = grid_steps(spec.delay(), dt).ok_or_else(|| {
        Error::GridAlignment(format!("r = {} is not a multiple of dt = {dt}", spec.delay()))
    })?;
    let impulses = spec
        .impulses()
        .times()
        .iter()
        .map(|&t| {
            grid_steps(t, dt).ok_or_else(|| {
                Error::GridAlignment(format!("impulse time {t} is not a multiple of dt = {dt}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((history, steps, impulses))
}

fn window(values: &[HVector], post_jump: &BTreeMap<usize, HVector>, end: usize, r_steps: usize, dt: f64, endpoint: HVector) -> Segment {
    let mut pts: Vec<HVector> = (end - r_steps..end)
        .map(|pos| post_jump.get(&pos).unwrap_or(&values[pos]).clone())
        .collect();
    pts.push(endpoint);
    Segment::new(pts, dt).expect("window points share the state dimension")
}

fn integrate(spec: &ModelSpec, generator: &SpectralModel, cfg: &SolverConfig, noise: Option<Noise<'_>>) -> Result<Trajectory> {
    check_dim(spec.dim(), generator.dim())?;
    if let GateOutcome::Fail { value, .. } = diagonal_gate(spec) {
        return Err(Error::Wellposedness { value });
    }
    let dt = cfg.dt;
    let (r_steps, steps, impulse_steps) = grid_layout(spec, dt)?;
    let noise = match noise {
        Some(nz) if !spec.coeffs().diffusion.is_zero() && nz.scale != 0.0 => {
            check_noise_grid(nz.increments, steps, dt)?;
            check_dim(nz.spec.noise_dim(), nz.increments.noise_dim())?;
            Some(nz)
        }
        _ => None,
    };
    let impulse_at: BTreeMap<usize, usize> = impulse_steps
        .iter()
        .enumerate()
        .map(|(k, &i)| (r_steps + i, k))
        .collect();

    let n = spec.dim();
    let decay = generator.decay_factors(dt);
    let drift_weight = generator.integrated_decay(dt);
    let neutral_free = spec.coeffs().neutral.is_zero();
    let drift_free = spec.coeffs().drift.is_zero();

    let mut values: Vec<HVector> = Vec::with_capacity(r_steps + steps + 1);
    for pos in 0..=r_steps {
        let v = spec.initial().at((pos as f64 - r_steps as f64) * dt);
        check_dim(n, v.len())?;
        values.push(v);
    }
    let mut post_jump = BTreeMap::new();
    let mut jumps = BTreeMap::new();

    for i in 0..steps {
        let pos = r_steps + i;
        let t = i as f64 * dt;
        let x_left = values[pos].clone();
        let x_right = post_jump.get(&pos).unwrap_or(&x_left).clone();
        let seg_now = window(&values, &post_jump, pos, r_steps, dt, x_left);

        let mut explicit = x_right;
        if !neutral_free {
            explicit.add_assign(&spec.neutral_value(t, &seg_now));
        }
        let ex = explicit.as_mut_slice();
        for (e, d) in ex.iter_mut().zip(&decay) {
            *e *= d;
        }
        if !drift_free {
            let a = spec.drift_value(t, &seg_now);
            for ((e, w), a) in ex.iter_mut().zip(&drift_weight).zip(a.iter()) {
                *e += w * a;
            }
        }
        if let Some(nz) = &noise {
            let b = spec.diffusion_value(t, &seg_now, nz.spec.noise_dim());
            let dw: Vec<f64> = nz
                .increments
                .row(i)
                .iter()
                .zip(nz.spec.sqrt_q())
                .map(|(d, s)| nz.scale * s * d)
                .collect();
            let kick = b.apply(&dw);
            for ((e, d), k) in ex.iter_mut().zip(&decay).zip(kick.iter()) {
                *e += d * k;
            }
        }

        let t_next = t + dt;
        let next = if neutral_free {
            explicit
        } else {
            let mut seg_next = window(&values, &post_jump, pos + 1, r_steps, dt, explicit.clone());
            neutral_picard(spec, t_next, &explicit, &mut seg_next, cfg)?.value
        };
        if !next.is_finite() {
            return Err(Error::NonFinite {
                step: i + 1,
                time: t_next,
            });
        }
        if let Some(&k) = impulse_at.get(&(pos + 1)) {
            let jump = spec.impulses().map(k).apply(&next);
            let post = &next + &jump;
            if !post.is_finite() {
                return Err(Error::NonFinite {
                    step: i + 1,
                    time: t_next,
                });
            }
            post_jump.insert(pos + 1, post);
            jumps.insert(pos + 1, jump);
        }
        values.push(next);
    }

    Ok(Trajectory {
        dt,
        history_steps: r_steps,
        values,
        post_jump,
        jumps,
    })
}

fn check_noise_grid(inc: &WienerIncrements, steps: usize, dt: f64) -> Result<()> {
    if inc.steps() != steps {
        return Err(Error::invalid(format!(
            "noise grid has {} steps, solver grid has {steps}",
            inc.steps()
        )));
    }
    let tol = 1e-9 * dt;
    if let Some((i, t)) = inc
        .grid()
        .iter()
        .enumerate()
        .find(|(i, &t)| (t - *i as f64 * dt).abs() > tol * (*i as f64).max(1.0))
    {
        return Err(Error::invalid(format!(
            "noise grid point {i} is {t}, solver grid expects {}",
            i as f64 * dt
        )));
    }
    Ok(())
}
