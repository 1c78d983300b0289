//! Problem definition: coefficients on delay segments, impulse schedule,
//! initial path, the well-posedness gate and an empirical Lipschitz probe.
//!
//! Coefficients act on `(t, π_t x)` where `π_t x = {x(t - r + s): 0 <= s <= r}`
//! is sampled on the solver grid. The neutral coefficient is supplied as a
//! generating map `g` and composed as `f := (-A)^{-alpha} g`, so `f` always
//! ranges in `D((-A)^alpha)` and `(-A)^alpha f = g`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::solver::Trajectory;
use crate::spectral::{check_alpha, HVector, SpectralModel};
use crate::stochastics::{lambda_hs_norm, DiffusionValue, NoiseSpec, PathStream};

/// Delay window `{x(t - r), x(t - r + dt), ..., x(t)}`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    values: Vec<HVector>,
    dt: f64,
}

impl Segment {
    pub fn new(values: Vec<HVector>, dt: f64) -> Result<Self> {
        let dim = values
            .first()
            .ok_or_else(|| Error::invalid("segment needs at least one point"))?
            .len();
        for v in &values {
            check_dim(dim, v.len())?;
        }
        Ok(Segment { values, dt })
    }

    /// Single-point window (`r = 0`).
    pub fn point(x: HVector) -> Self {
        Segment {
            values: vec![x],
            dt: 0.0,
        }
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Grid spacing of the window (0 for a single point).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `x(t)`.
    pub fn current(&self) -> &HVector {
        self.values.last().expect("segment is nonempty")
    }

    /// `x(t - r)`.
    pub fn delayed(&self) -> &HVector {
        &self.values[0]
    }

    /// `x(t - r + offset)` for a grid offset `offset = k dt`.
    pub fn at_step(&self, k: usize) -> &HVector {
        &self.values[k]
    }

    pub(crate) fn current_mut(&mut self) -> &mut HVector {
        self.values.last_mut().expect("segment is nonempty")
    }

    /// `‖π‖_c = max_s |x(t - r + s)|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(HVector::norm).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Segment) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max)
    }
}

/// Dense `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            check_dim(n, r.len())?;
            data.extend(r);
        }
        Ok(Matrix { n, data })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (k, d) in diag.iter().enumerate() {
            data[k * n + k] = *d;
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, x: &HVector) -> HVector {
        HVector::from_fn(self.n, |k| {
            self.data[k * self.n..(k + 1) * self.n]
                .iter()
                .zip(x.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Frobenius norm, an upper bound on the operator norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

type VectorFn = dyn Fn(f64, &Segment) -> HVector + Send + Sync;
type DiffusionFn = dyn Fn(f64, &Segment) -> DiffusionValue + Send + Sync;
type JumpFn = dyn Fn(&HVector) -> HVector + Send + Sync;
type PathFn = dyn Fn(f64) -> HVector + Send + Sync;

/// X-valued coefficient on segments (drift `a`, or the generator `g` of the
/// neutral term).
#[derive(Clone)]
pub enum VectorField {
    Zero,
    Constant(HVector),
    /// `M x(t) + D x(t - r)`.
    Linear {
        current: Matrix,
        delayed: Option<Matrix>,
    },
    /// Componentwise `scale sin(x_k(t)) + delayed_scale tanh(x_k(t - r))`.
    BoundedNonlinear { scale: f64, delayed_scale: f64 },
    /// `base + weight * direction`.
    Perturbed {
        base: Box<VectorField>,
        direction: Box<VectorField>,
        weight: f64,
    },
    /// User callback; must be a pure function of its arguments.
    Custom(Arc<VectorFn>),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Zero => write!(f, "Zero"),
            VectorField::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            VectorField::Linear { current, delayed } => f
                .debug_struct("Linear")
                .field("current", current)
                .field("delayed", delayed)
                .finish(),
            VectorField::BoundedNonlinear {
                scale,
                delayed_scale,
            } => f
                .debug_struct("BoundedNonlinear")
                .field("scale", scale)
                .field("delayed_scale", delayed_scale)
                .finish(),
            VectorField::Perturbed {
                base,
                direction,
                weight,
            } => f
                .debug_struct("Perturbed")
                .field("base", base)
                .field("direction", direction)
                .field("weight", weight)
                .finish(),
            VectorField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl VectorField {
    pub fn custom(f: impl Fn(f64, &Segment) -> HVector + Send + Sync + 'static) -> Self {
        VectorField::Custom(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorField::Zero)
    }

    pub fn eval(&self, t: f64, seg: &Segment) -> HVector {
        match self {
            VectorField::Zero => HVector::zeros(seg.dim()),
            VectorField::Constant(c) => c.clone(),
            VectorField::Linear { current, delayed } => {
                let mut y = current.apply(seg.current());
                if let Some(d) = delayed {
                    y.add_assign(&d.apply(seg.delayed()));
                }
                y
            }
            VectorField::BoundedNonlinear {
                scale,
                delayed_scale,
            } => {
                let (x, xd) = (seg.current(), seg.delayed());
                HVector::from_fn(seg.dim(), |k| scale * x[k].sin() + delayed_scale * xd[k].tanh())
            }
            VectorField::Perturbed {
                base,
                direction,
                weight,
            } => {
                let mut y = base.eval(t, seg);
                if *weight != 0.0 {
                    y.axpy(*weight, &direction.eval(t, seg));
                }
                y
            }
            VectorField::Custom(f) => f(t, seg),
        }
    }

    /// Lipschitz constant with respect to `‖·‖_c`, when known in closed form.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            VectorField::Zero | VectorField::Constant(_) => Some(0.0),
            VectorField::Linear { current, delayed } => {
                Some(current.frobenius() + delayed.as_ref().map_or(0.0, Matrix::frobenius))
            }
            VectorField::BoundedNonlinear {
                scale,
                delayed_scale,
            } => Some(scale.abs() + delayed_scale.abs()),
            VectorField::Perturbed {
                base,
                direction,
                weight,
            } => Some(base.lipschitz()? + weight.abs() * direction.lipschitz()?),
            VectorField::Custom(_) => None,
        }
    }

    /// `(c0, c1)` with `|F(t, π)| <= c0 + c1 ‖π‖_c`, when known.
    pub fn growth(&self) -> Option<(f64, f64)> {
        match self {
            VectorField::Zero => Some((0.0, 0.0)),
            VectorField::Constant(c) => Some((c.norm(), 0.0)),
            VectorField::Linear { .. } | VectorField::BoundedNonlinear { .. } => {
                Some((0.0, self.lipschitz()?))
            }
            VectorField::Perturbed {
                base,
                direction,
                weight,
            } => {
                let (b0, b1) = base.growth()?;
                let (d0, d1) = direction.growth()?;
                Some((b0 + weight.abs() * d0, b1 + weight.abs() * d1))
            }
            VectorField::Custom(_) => None,
        }
    }
}

/// `L(Y, X)`-valued diffusion coefficient.
#[derive(Clone)]
pub enum DiffusionField {
    Zero,
    Constant(DiffusionValue),
    /// `h_{kk} = additive + sigma sin(x_k(t))` on `k < min(N, J)`.
    Diagonal { additive: f64, sigma: f64 },
    /// User callback; must be a pure function of its arguments.
    Custom(Arc<DiffusionFn>),
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionField::Zero => write!(f, "Zero"),
            DiffusionField::Constant(h) => f.debug_tuple("Constant").field(h).finish(),
            DiffusionField::Diagonal { additive, sigma } => f
                .debug_struct("Diagonal")
                .field("additive", additive)
                .field("sigma", sigma)
                .finish(),
            DiffusionField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl DiffusionField {
    pub fn custom(f: impl Fn(f64, &Segment) -> DiffusionValue + Send + Sync + 'static) -> Self {
        DiffusionField::Custom(Arc::new(f))
    }

    /// Additive diagonal noise `b ≡ sigma I`.
    pub fn additive(sigma: f64) -> Self {
        DiffusionField::Diagonal {
            additive: sigma,
            sigma: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DiffusionField::Zero)
    }

    pub fn eval(&self, t: f64, seg: &Segment, noise_dim: usize) -> DiffusionValue {
        let n = seg.dim();
        match self {
            DiffusionField::Zero => DiffusionValue::zeros(n, noise_dim),
            DiffusionField::Constant(h) => h.clone(),
            DiffusionField::Diagonal { additive, sigma } => {
                let x = seg.current();
                DiffusionValue::diagonal(n, noise_dim, |k| additive + sigma * x[k].sin())
            }
            DiffusionField::Custom(f) => f(t, seg),
        }
    }

    /// Lipschitz constant of `π -> b(t, π)` in the λ-HS norm, when known.
    pub fn lipschitz(&self, noise: &NoiseSpec) -> Option<f64> {
        match self {
            DiffusionField::Zero | DiffusionField::Constant(_) => Some(0.0),
            DiffusionField::Diagonal { sigma, .. } => {
                let qmax = noise.q_eigs().iter().copied().fold(0.0, f64::max);
                Some(sigma.abs() * qmax.sqrt())
            }
            DiffusionField::Custom(_) => None,
        }
    }

    /// `(c0, c1)` with `|b(t, π)|_λ <= c0 + c1 ‖π‖_c`, when known.
    pub fn growth(&self, state_dim: usize, noise: &NoiseSpec) -> Option<(f64, f64)> {
        match self {
            DiffusionField::Zero => Some((0.0, 0.0)),
            DiffusionField::Constant(h) => Some((lambda_hs_norm(h, noise).ok()?, 0.0)),
            DiffusionField::Diagonal { additive, .. } => {
                let q: f64 = noise.q_eigs().iter().take(state_dim).sum();
                Some((additive.abs() * q.sqrt(), self.lipschitz(noise)?))
            }
            DiffusionField::Custom(_) => None,
        }
    }
}

/// Jump map `I_k`.
#[derive(Clone)]
pub enum ImpulseMap {
    /// `I(x) = h x`.
    Linear(f64),
    /// `I(x) = h x / (1 + |x|)`.
    Saturating(f64),
    Custom(Arc<JumpFn>),
}

impl fmt::Debug for ImpulseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImpulseMap::Linear(h) => f.debug_tuple("Linear").field(h).finish(),
            ImpulseMap::Saturating(h) => f.debug_tuple("Saturating").field(h).finish(),
            ImpulseMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ImpulseMap {
    pub fn custom(f: impl Fn(&HVector) -> HVector + Send + Sync + 'static) -> Self {
        ImpulseMap::Custom(Arc::new(f))
    }

    pub fn apply(&self, x: &HVector) -> HVector {
        match self {
            ImpulseMap::Linear(h) => x.scaled(*h),
            ImpulseMap::Saturating(h) => x.scaled(h / (1.0 + x.norm())),
            ImpulseMap::Custom(f) => f(x),
        }
    }

    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            ImpulseMap::Linear(h) | ImpulseMap::Saturating(h) => Some(h.abs()),
            ImpulseMap::Custom(_) => None,
        }
    }
}

/// Fixed impulse times `0 < t_1 < ... < t_m < T` with their jump maps and
/// declared constants `h_k`, `h_0`.
#[derive(Debug, Clone, Default)]
pub struct ImpulseSchedule {
    times: Vec<f64>,
    maps: Vec<ImpulseMap>,
    h: Vec<f64>,
    h0: f64,
}

impl ImpulseSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    /// Declared constants default to the maps' closed-form Lipschitz
    /// constants; custom maps need [`with_constants`](Self::with_constants).
    pub fn new(times: Vec<f64>, maps: Vec<ImpulseMap>) -> Result<Self> {
        check_dim(times.len(), maps.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("impulse times must be strictly increasing"));
        }
        let h = maps.iter().map(|m| m.lipschitz().unwrap_or(0.0)).collect();
        Ok(ImpulseSchedule {
            times,
            maps,
            h,
            h0: 0.0,
        })
    }

    pub fn with_constants(mut self, h: Vec<f64>, h0: f64) -> Result<Self> {
        check_dim(self.times.len(), h.len())?;
        if h.iter().chain([&h0]).any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("impulse constants must be finite and >= 0"));
        }
        self.h = h;
        self.h0 = h0;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn maps(&self) -> &[ImpulseMap] {
        &self.maps
    }

    pub fn map(&self, k: usize) -> &ImpulseMap {
        &self.maps[k]
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn h_sum(&self) -> f64 {
        self.h.iter().sum()
    }
}

/// Declared constants of the Lipschitz and growth conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

/// Coefficients `a`, `b` and the neutral generator `g` (`f = (-A)^{-alpha} g`).
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub drift: VectorField,
    pub neutral: VectorField,
    pub diffusion: DiffusionField,
    pub constants: Constants,
    pub alpha: f64,
}

impl CoefficientSet {
    pub fn zero(alpha: f64) -> Self {
        CoefficientSet {
            drift: VectorField::Zero,
            neutral: VectorField::Zero,
            diffusion: DiffusionField::Zero,
            constants: Constants::default(),
            alpha,
        }
    }

    /// Constants implied by the closed-form bounds of builtin coefficients,
    /// for exponent `p`. `None` if any coefficient is a custom callback.
    pub fn derived_constants(&self, p: f64, state_dim: usize, noise: &NoiseSpec) -> Option<Constants> {
        let la = self.drift.lipschitz()?;
        let lb = self.diffusion.lipschitz(noise)?;
        let lg = self.neutral.lipschitz()?;
        let (a0, a1) = self.drift.growth()?;
        let (b0, b1) = self.diffusion.growth(state_dim, noise)?;
        let (g0, g1) = self.neutral.growth()?;
        // (c0 + c1 s)^p <= 2^{p-1} (c0^p + c1^p s^p) <= 2^{p-1} max(c0^p, c1^p)(1 + s^p)
        let grow = |c0: f64, c1: f64| {
            if c0 == 0.0 || c1 == 0.0 {
                c0.max(c1).powf(p)
            } else {
                2f64.powf(p - 1.0) * c0.max(c1).powf(p)
            }
        };
        Some(Constants {
            c1: la.powf(p),
            c2: lb.powf(p),
            c3: grow(a0, a1) + grow(b0, b1),
            c4: lg,
            c5: g0.max(g1),
        })
    }
}

/// Initial path `φ` on `[-r, 0]`.
#[derive(Clone)]
pub enum InitialPath {
    Constant(HVector),
    Function(Arc<PathFn>),
}

impl fmt::Debug for InitialPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialPath::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            InitialPath::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl InitialPath {
    pub fn function(f: impl Fn(f64) -> HVector + Send + Sync + 'static) -> Self {
        InitialPath::Function(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> HVector {
        match self {
            InitialPath::Constant(v) => v.clone(),
            InitialPath::Function(f) => f(t),
        }
    }
}

/// Validated problem: space, coefficients, impulses, `φ`, delay `r`,
/// exponent `p >= 2` and horizon `T`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    space: SpectralModel,
    coeffs: CoefficientSet,
    impulses: ImpulseSchedule,
    initial: InitialPath,
    delay: f64,
    p: f64,
    horizon: f64,
    neutral_weights: Vec<f64>,
}

impl ModelSpec {
    pub fn new(
        space: SpectralModel,
        coeffs: CoefficientSet,
        impulses: ImpulseSchedule,
        initial: InitialPath,
        delay: f64,
        p: f64,
        horizon: f64,
    ) -> Result<Self> {
        check_alpha(coeffs.alpha)?;
        if !space.is_invertible() {
            return Err(Error::invalid("base space must have all mu_k > 0"));
        }
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::invalid(format!("delay r = {delay} must be finite and >= 0")));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::invalid(format!("exponent p = {p} must be >= 2")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon T = {horizon} must be > 0")));
        }
        if let Some(t) = impulses.times().iter().find(|&&t| !(t > 0.0 && t < horizon)) {
            return Err(Error::invalid(format!("impulse time {t} must lie in (0, T)")));
        }
        let c = &coeffs.constants;
        if [c.c1, c.c2, c.c3, c.c4, c.c5]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(Error::invalid("declared constants C1..C5 must be finite and >= 0"));
        }
        check_dim(space.dim(), initial.at(0.0).len())?;
        let neutral_weights = space.mu().iter().map(|m| m.powf(-coeffs.alpha)).collect();
        Ok(ModelSpec {
            space,
            coeffs,
            impulses,
            initial,
            delay,
            p,
            horizon,
            neutral_weights,
        })
    }

    pub fn space(&self) -> &SpectralModel {
        &self.space
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn impulses(&self) -> &ImpulseSchedule {
        &self.impulses
    }

    pub fn initial(&self) -> &InitialPath {
        &self.initial
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn with_coeffs(&self, coeffs: CoefficientSet) -> Result<Self> {
        Self::new(
            self.space.clone(),
            coeffs,
            self.impulses.clone(),
            self.initial.clone(),
            self.delay,
            self.p,
            self.horizon,
        )
    }

    pub fn with_impulses(&self, impulses: ImpulseSchedule) -> Result<Self> {
        Self::new(
            self.space.clone(),
            self.coeffs.clone(),
            impulses,
            self.initial.clone(),
            self.delay,
            self.p,
            self.horizon,
        )
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(
            self.space.clone(),
            self.coeffs.clone(),
            self.impulses.clone(),
            self.initial.clone(),
            self.delay,
            self.p,
            horizon,
        )
    }

    /// `f(t, π) = (-A)^{-alpha} g(t, π)`.
    pub fn neutral_value(&self, t: f64, seg: &Segment) -> HVector {
        let mut g = self.coeffs.neutral.eval(t, seg);
        for (x, w) in g.as_mut_slice().iter_mut().zip(&self.neutral_weights) {
            *x *= w;
        }
        g
    }

    pub fn drift_value(&self, t: f64, seg: &Segment) -> HVector {
        self.coeffs.drift.eval(t, seg)
    }

    pub fn diffusion_value(&self, t: f64, seg: &Segment, noise_dim: usize) -> DiffusionValue {
        self.coeffs.diffusion.eval(t, seg, noise_dim)
    }

    /// Contraction factor of the neutral fixed-point map, `C4 mu_min^{-alpha}`.
    pub fn neutral_contraction(&self) -> f64 {
        self.coeffs.constants.c4 * self.space.inverse_fractional_norm(self.coeffs.alpha)
    }
}

/// Number of grid steps in `x`, if `x` is a multiple of `dt`.
pub fn grid_steps(x: f64, dt: f64) -> Option<usize> {
    if !(dt > 0.0) || !(x >= 0.0) {
        return None;
    }
    let q = x / dt;
    let n = q.round();
    if (q - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// Delay window of `traj` at grid time `t`.
///
/// The endpoint `x(t)` is the stored (left-limit) value; every earlier grid
/// point that carries an impulse is read at its right limit.
pub fn segment_view(traj: &Trajectory, t: f64, r: f64) -> Result<Segment> {
    let dt = traj.dt();
    let r_steps = grid_steps(r, dt)
        .ok_or_else(|| Error::GridAlignment(format!("delay {r} is not a multiple of dt = {dt}")))?;
    let shifted = t + traj.history_time();
    let end = grid_steps(shifted, dt)
        .ok_or_else(|| Error::GridAlignment(format!("time {t} is not a grid point")))?;
    if end >= traj.len() || r_steps > end {
        return Err(Error::invalid(format!(
            "window [{}, {t}] is outside the stored trajectory",
            t - r
        )));
    }
    let values = (end - r_steps..=end)
        .map(|pos| {
            if pos == end {
                traj.value(pos).clone()
            } else {
                traj.right_value(pos).clone()
            }
        })
        .collect();
    Segment::new(values, dt)
}

/// Outcome of the gate `L ‖(-A)^{-alpha}‖ + M e^{delta T} Σ h_k < 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    Pass { value: f64 },
    Fail { reason: String, value: f64 },
}

impl GateOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, GateOutcome::Pass { .. })
    }

    pub fn value(&self) -> f64 {
        match self {
            GateOutcome::Pass { value } | GateOutcome::Fail { value, .. } => *value,
        }
    }
}

/// Evaluates the existence/uniqueness gate with `L = max(C4, C5)`.
pub fn wellposedness_check(spec: &ModelSpec, m_bound: f64, delta: f64) -> GateOutcome {
    let c = &spec.coeffs.constants;
    let l = c.c4.max(c.c5);
    let value = l * spec.space.inverse_fractional_norm(spec.coeffs.alpha)
        + m_bound * (delta * spec.horizon).exp() * spec.impulses.h_sum();
    if value < 1.0 {
        GateOutcome::Pass { value }
    } else {
        GateOutcome::Fail {
            reason: format!(
                "L ||A^-alpha|| + M e^(delta T) sum h_k = {value} must be < 1 (L = {l})"
            ),
            value,
        }
    }
}

/// Gate for the diagonal class implemented here (`M = 1`, `delta = 0`).
pub fn diagonal_gate(spec: &ModelSpec) -> GateOutcome {
    wellposedness_check(spec, 1.0, 0.0)
}

/// One row of a Lipschitz/growth probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLine {
    pub quantity: String,
    pub declared: f64,
    pub observed: f64,
}

impl ProbeLine {
    /// Relative slack of `1e-9` absorbs rounding in the difference quotients.
    pub fn violated(&self) -> bool {
        self.observed > self.declared * (1.0 + 1e-9) + 1e-300
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub lines: Vec<ProbeLine>,
}

impl ProbeReport {
    pub fn violations(&self) -> Vec<&ProbeLine> {
        self.lines.iter().filter(|l| l.violated()).collect()
    }

    pub fn line(&self, quantity: &str) -> Option<&ProbeLine> {
        self.lines.iter().find(|l| l.quantity == quantity)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,declared,observed,violated\n");
        for l in &self.lines {
            out.push_str(&format!(
                "{},{},{},{}\n",
                l.quantity,
                l.declared,
                l.observed,
                l.violated()
            ));
        }
        out
    }
}

/// Random segment pairs at magnitudes spread over several decades; reports
/// the largest observed ratios against the declared constants.
pub fn lipschitz_probe(spec: &ModelSpec, noise: &NoiseSpec, n_samples: usize, seed: u64) -> Result<ProbeReport> {
    if n_samples == 0 {
        return Err(Error::invalid("probe needs at least one sample"));
    }
    let p = spec.p;
    let n = spec.dim();
    let jdim = noise.noise_dim();
    let points = if spec.delay > 0.0 { 5 } else { 1 };
    let seg_dt = if points > 1 { spec.delay / (points - 1) as f64 } else { 0.0 };
    let mut rng = PathStream::new(seed, 0);
    let uniform = |rng: &mut PathStream| rng.next_uniform();
    let gaussian_vec = |rng: &mut PathStream, scale: f64| HVector::from_fn(n, |_| scale * rng.next_normal());

    let (mut c1, mut c2, mut c3, mut c4, mut c5) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let m = spec.impulses.len();
    let mut hk = vec![0.0f64; m];
    let mut h0 = 0.0f64;
    for map in spec.impulses.maps() {
        h0 = h0.max(map.apply(&HVector::zeros(n)).norm());
    }

    for _ in 0..n_samples {
        let t = uniform(&mut rng) * spec.horizon;
        let big = 10f64.powf(-2.0 + 4.0 * uniform(&mut rng));
        let small = 10f64.powf(-3.0 + 4.0 * uniform(&mut rng));
        let xs: Vec<HVector> = (0..points).map(|_| gaussian_vec(&mut rng, big)).collect();
        let ys: Vec<HVector> = xs
            .iter()
            .map(|x| x + &gaussian_vec(&mut rng, small))
            .collect();
        let sx = Segment::new(xs, seg_dt)?;
        let sy = Segment::new(ys, seg_dt)?;
        let d = sx.sup_distance(&sy);
        if d == 0.0 {
            continue;
        }
        let ax = spec.drift_value(t, &sx);
        let ay = spec.drift_value(t, &sy);
        c1 = c1.max((ax.distance(&ay) / d).powf(p));
        let bx = spec.diffusion_value(t, &sx, jdim);
        let by = spec.diffusion_value(t, &sy, jdim);
        c2 = c2.max((lambda_hs_norm(&bx.sub(&by), noise)? / d).powf(p));
        let norm_x = sx.sup_norm();
        c3 = c3.max((ax.norm().powf(p) + lambda_hs_norm(&bx, noise)?.powf(p)) / (1.0 + norm_x.powf(p)));
        let gx = spec.coeffs.neutral.eval(t, &sx);
        let gy = spec.coeffs.neutral.eval(t, &sy);
        c4 = c4.max(gx.distance(&gy) / d);
        c5 = c5.max(gx.norm() / (1.0 + norm_x));
        for (k, map) in spec.impulses.maps().iter().enumerate() {
            let (x, y) = (sx.current(), sy.current());
            let dx = x.distance(y);
            if dx > 0.0 {
                hk[k] = hk[k].max(map.apply(x).distance(&map.apply(y)) / dx);
            }
        }
    }

    let c = &spec.coeffs.constants;
    let mut lines = vec![
        ProbeLine { quantity: "C1".into(), declared: c.c1, observed: c1 },
        ProbeLine { quantity: "C2".into(), declared: c.c2, observed: c2 },
        ProbeLine { quantity: "C3".into(), declared: c.c3, observed: c3 },
        ProbeLine { quantity: "C4".into(), declared: c.c4, observed: c4 },
        ProbeLine { quantity: "C5".into(), declared: c.c5, observed: c5 },
    ];
    for (k, obs) in hk.into_iter().enumerate() {
        lines.push(ProbeLine {
            quantity: format!("h_{}", k + 1),
            declared: spec.impulses.h()[k],
            observed: obs,
        });
    }
    if m > 0 {
        lines.push(ProbeLine { quantity: "h_0".into(), declared: spec.impulses.h0(), observed: h0 });
    }
    Ok(ProbeReport { samples: n_samples, lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec(constants: Constants, alpha: f64, h: &[f64]) -> ModelSpec {
        let space = SpectralModel::new(vec![1.0], "s").unwrap();
        let mut coeffs = CoefficientSet::zero(alpha);
        coeffs.constants = constants;
        let times: Vec<f64> = (0..h.len()).map(|k| 0.1 * (k + 1) as f64).collect();
        let maps = h.iter().map(|&h| ImpulseMap::Linear(h)).collect();
        let imp = ImpulseSchedule::new(times, maps).unwrap();
        ModelSpec::new(space, coeffs, imp, InitialPath::Constant(vec![1.0].into()), 0.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn gate_examples() {
        let c = Constants { c4: 0.1, c5: 0.1, ..Default::default() };
        let pass = diagonal_gate(&scalar_spec(c, 0.5, &[0.25, 0.25]));
        assert!(pass.passed());
        assert!((pass.value() - 0.6).abs() < 1e-15);
        let fail = diagonal_gate(&scalar_spec(c, 0.5, &[0.5, 0.5]));
        assert!(!fail.passed());
        assert!((fail.value() - 1.1).abs() < 1e-15);
        let zero = diagonal_gate(&scalar_spec(Constants::default(), 0.5, &[]));
        assert_eq!(zero, GateOutcome::Pass { value: 0.0 });
    }

    #[test]
    fn gate_boundary_is_strict() {
        let c = Constants { c4: 1.0 - 1e-9, c5: 1.0 - 1e-9, ..Default::default() };
        assert!(diagonal_gate(&scalar_spec(c, 0.75, &[])).passed());
        let c = Constants { c4: 1.0, c5: 0.0, ..Default::default() };
        assert!(!diagonal_gate(&scalar_spec(c, 0.75, &[])).passed());
    }

    #[test]
    fn gate_is_monotone_in_constants_and_horizon() {
        let base = Constants { c4: 0.2, c5: 0.3, ..Default::default() };
        let mut last = diagonal_gate(&scalar_spec(base, 0.5, &[0.3])).value();
        for bump in 1..20 {
            let s = 0.05 * bump as f64;
            let c = Constants { c4: 0.2 + s, c5: 0.3 + s, ..Default::default() };
            let v = diagonal_gate(&scalar_spec(c, 0.5, &[0.3 + s])).value();
            assert!(v >= last);
            last = v;
        }
        let spec = scalar_spec(base, 0.5, &[0.69]);
        let mut was_fail = false;
        for t in [1.0, 2.0, 4.0] {
            let g = wellposedness_check(&spec.with_horizon(t).unwrap(), 1.0, 0.1);
            if was_fail {
                assert!(!g.passed());
            }
            was_fail = !g.passed();
        }
        assert!(was_fail);
    }

    #[test]
    fn model_rejects_bad_inputs() {
        let space = SpectralModel::new(vec![1.0], "s").unwrap();
        let phi = InitialPath::Constant(vec![0.0].into());
        let coeffs = CoefficientSet::zero(0.5);
        let imp = ImpulseSchedule::new(vec![1.5], vec![ImpulseMap::Linear(0.1)]).unwrap();
        assert!(ModelSpec::new(space.clone(), coeffs.clone(), imp, phi.clone(), 0.0, 2.0, 1.0).is_err());
        let none = ImpulseSchedule::none();
        assert!(ModelSpec::new(space.clone(), coeffs.clone(), none.clone(), phi.clone(), 0.0, 1.5, 1.0).is_err());
        assert!(ModelSpec::new(space.clone(), CoefficientSet::zero(0.0), none.clone(), phi.clone(), 0.0, 2.0, 1.0).is_err());
        assert!(ModelSpec::new(space, coeffs, none, InitialPath::Constant(HVector::zeros(2)), 0.0, 2.0, 1.0).is_err());
        assert!(ImpulseSchedule::new(vec![0.5, 0.5], vec![ImpulseMap::Linear(0.1), ImpulseMap::Linear(0.1)]).is_err());
    }

    #[test]
    fn grid_steps_alignment() {
        assert_eq!(grid_steps(0.1, 0.0025), Some(40));
        assert_eq!(grid_steps(0.0, 0.01), Some(0));
        assert_eq!(grid_steps(0.5, 0.3), None);
        assert_eq!(grid_steps(1.0, 1e-3), Some(1000));
    }

    #[test]
    fn neutral_term_lands_in_fractional_domain() {
        let space = SpectralModel::laplacian(3).unwrap();
        let mut coeffs = CoefficientSet::zero(0.5);
        coeffs.neutral = VectorField::Constant(vec![1.0, 1.0, 1.0].into());
        let spec = ModelSpec::new(
            space,
            coeffs,
            ImpulseSchedule::none(),
            InitialPath::Constant(HVector::zeros(3)),
            0.0,
            2.0,
            1.0,
        )
        .unwrap();
        let f = spec.neutral_value(0.0, &Segment::point(HVector::zeros(3)));
        assert_eq!(f.as_slice(), &[1.0, 0.5, 1.0 / 3.0]);
    }

    fn probe_spec(drift: VectorField, neutral: VectorField, constants: Constants) -> ModelSpec {
        let space = SpectralModel::laplacian(3).unwrap();
        let coeffs = CoefficientSet {
            drift,
            neutral,
            diffusion: DiffusionField::Diagonal { additive: 0.5, sigma: 0.2 },
            constants,
            alpha: 0.75,
        };
        let imp = ImpulseSchedule::new(vec![0.5], vec![ImpulseMap::Saturating(0.3)]).unwrap();
        ModelSpec::new(space, coeffs, imp, InitialPath::Constant(HVector::zeros(3)), 0.1, 2.0, 1.0).unwrap()
    }

    fn noise() -> NoiseSpec {
        NoiseSpec::new(vec![1.0, 0.25, 1.0 / 9.0], 1).unwrap()
    }

    #[test]
    fn probe_accepts_linear_map_at_its_norm() {
        let a = VectorField::Linear { current: Matrix::diagonal(&[0.3, -0.3, 0.3]), delayed: None };
        let c = Constants { c1: 0.09, c2: 0.04, c3: 10.0, c4: 0.0, c5: 1.0 };
        let spec = probe_spec(a, VectorField::Constant(vec![1.0, 0.0, 0.0].into()), c);
        let report = lipschitz_probe(&spec, &noise(), 2000, 3).unwrap();
        assert!(report.violations().is_empty(), "{report:?}");
        assert_eq!(report.line("C4").unwrap().observed, 0.0);
        assert!(report.line("C1").unwrap().observed > 0.08);
    }

    #[test]
    fn probe_flags_quadratic_drift() {
        // Pair x = 10, y = 10.1 (one mode): |x^2 - y^2| / |x - y| = 20.1, far above sqrt(C1) = 0.1.
        let quad = VectorField::custom(|_, seg| HVector::from_fn(seg.dim(), |k| seg.current()[k].powi(2)));
        let c = Constants { c1: 0.01, c2: 1.0, c3: 1e6, c4: 0.0, c5: 0.0 };
        let spec = probe_spec(quad, VectorField::Zero, c);
        let report = lipschitz_probe(&spec, &noise(), 500, 9).unwrap();
        let line = report.line("C1").unwrap();
        assert!(line.violated() && line.observed > 100.0, "{line:?}");
    }

    #[test]
    fn derived_constants_are_honest() {
        let spec = probe_spec(
            VectorField::BoundedNonlinear { scale: 0.5, delayed_scale: 0.3 },
            VectorField::BoundedNonlinear { scale: 0.2, delayed_scale: 0.0 },
            Constants::default(),
        );
        let c = spec.coeffs().derived_constants(2.0, 3, &noise()).unwrap();
        let mut coeffs = spec.coeffs().clone();
        coeffs.constants = c;
        let spec = spec.with_coeffs(coeffs).unwrap();
        let report = lipschitz_probe(&spec, &noise(), 10_000, 5).unwrap();
        assert!(report.violations().is_empty(), "{report:?}");
        assert_eq!(report.line("h_1").unwrap().declared, 0.3);
    }

    #[test]
    fn saturating_impulse_is_contractive() {
        let map = ImpulseMap::Saturating(1.0);
        let x: HVector = vec![3.0, -1.0].into();
        let y: HVector = vec![2.5, 0.5].into();
        assert!(map.apply(&x).distance(&map.apply(&y)) <= x.distance(&y));
        assert_eq!(map.apply(&HVector::zeros(2)), HVector::zeros(2));
    }
}
