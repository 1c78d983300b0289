//! Truncated Q-Wiener noise, λ-Hilbert–Schmidt norms and the stochastic
//! convolution cell used by the time stepper.
//!
//! `omega(t) = Σ_j sqrt(lambda_j) beta_j(t) e_j` is truncated at `J` modes.
//! Brownian increments are counter-based: the standard normal feeding
//! `beta_j` on step `i` of path `p` is a pure function of
//! `(seed, p, i, j)`, taken from the ChaCha stream `p` of the key derived
//! from `seed` at word position `4 (i J + j)`. Two systems consuming the
//! same `(seed, path_index)` therefore see identical noise.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{check_dim, Error, Result};
use crate::spectral::{HVector, SpectralModel};

/// Covariance spectrum of the truncated Q-Wiener process plus the root seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    q_eigs: Vec<f64>,
    sqrt_q: Vec<f64>,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(q_eigs: Vec<f64>, seed: u64) -> Result<Self> {
        if q_eigs.is_empty() {
            return Err(Error::invalid("noise needs at least one Q-mode"));
        }
        if let Some(q) = q_eigs.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(Error::invalid(format!(
                "Q eigenvalue {q} must be finite and nonnegative"
            )));
        }
        let sqrt_q = q_eigs.iter().map(|q| q.sqrt()).collect();
        Ok(NoiseSpec {
            q_eigs,
            sqrt_q,
            seed,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.q_eigs.len()
    }

    pub fn q_eigs(&self) -> &[f64] {
        &self.q_eigs
    }

    pub fn sqrt_q(&self) -> &[f64] {
        &self.sqrt_q
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        NoiseSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn trace(&self) -> f64 {
        self.q_eigs.iter().sum()
    }
}

/// Uniform grid `0, dt, ..., steps * dt`.
pub fn uniform_grid(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 * dt).collect()
}

/// Counter-based standard normal stream for one Monte Carlo path.
pub struct PathStream {
    rng: ChaCha8Rng,
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        PathStream { rng }
    }

    /// Jump to draw number `counter` of this path.
    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(u128::from(counter) * 4);
    }

    /// Next uniform on `[0, 1)` (one 64-bit draw).
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next standard normal (Box–Muller on two 53-bit uniforms).
    pub fn next_normal(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Standard normal at counter position `(step, mode)` of `path_index`.
pub fn normal_at(seed: u64, path_index: u64, step: usize, mode: usize, noise_dim: usize) -> f64 {
    let mut s = PathStream::new(seed, path_index);
    s.seek((step * noise_dim + mode) as u64);
    s.next_normal()
}

/// Brownian increments `beta_j(s_{i+1}) - beta_j(s_i)` for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    grid: Vec<f64>,
    noise_dim: usize,
    deltas: Vec<f64>,
    seed: u64,
}

impl WienerIncrements {
    /// Wraps raw increments. `deltas` is row-major `steps x noise_dim`.
    pub fn from_parts(grid: Vec<f64>, noise_dim: usize, deltas: Vec<f64>, seed: u64) -> Result<Self> {
        check_time_grid(&grid)?;
        check_dim((grid.len() - 1) * noise_dim, deltas.len())?;
        Ok(WienerIncrements {
            grid,
            noise_dim,
            deltas,
            seed,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increments of all `J` Brownian motions over step `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.deltas[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Mutable access, for perturbation experiments.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.deltas[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    /// Coordinates of `omega(s_{i+1}) - omega(s_i)` in the Q-eigenbasis.
    pub fn omega_increment(&self, i: usize, spec: &NoiseSpec) -> Vec<f64> {
        self.row(i)
            .iter()
            .zip(spec.sqrt_q())
            .map(|(d, s)| d * s)
            .collect()
    }

    /// Binary dump: little-endian `u64` header `(L, J, seed)` then the
    /// `L x J` increments as row-major `f64`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.steps() as u64).to_le_bytes())?;
        w.write_all(&(self.noise_dim as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for d in &self.deltas {
            w.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_to`](Self::write_to); the time grid is
    /// not stored and must be supplied.
    pub fn read_from(mut r: impl Read, grid: Vec<f64>) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let noise_dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        check_dim(steps + 1, grid.len())?;
        let mut deltas = Vec::with_capacity(steps * noise_dim);
        for _ in 0..steps * noise_dim {
            deltas.push(f64::from_le_bytes(next(&mut r)?));
        }
        Self::from_parts(grid, noise_dim, deltas, seed)
    }
}

fn check_time_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::invalid("time grid must start at 0 and have >= 2 points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Draws the increments of path `path_index` on `grid`.
pub fn sample_increments(spec: &NoiseSpec, grid: &[f64], path_index: u64) -> Result<WienerIncrements> {
    check_time_grid(grid)?;
    let j = spec.noise_dim();
    let mut stream = PathStream::new(spec.seed(), path_index);
    let mut deltas = Vec::with_capacity((grid.len() - 1) * j);
    for w in grid.windows(2) {
        let sd = (w[1] - w[0]).sqrt();
        for _ in 0..j {
            deltas.push(sd * stream.next_normal());
        }
    }
    Ok(WienerIncrements {
        grid: grid.to_vec(),
        noise_dim: j,
        deltas,
        seed: spec.seed(),
    })
}

/// Coordinate matrix (`N x J`, row-major) of an operator in `L(Y, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionValue {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DiffusionValue {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DiffusionValue {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        if n == 0 || j == 0 {
            return Err(Error::invalid("diffusion matrix must be nonempty"));
        }
        let mut data = Vec::with_capacity(n * j);
        for r in rows {
            check_dim(j, r.len())?;
            data.extend(r);
        }
        Ok(DiffusionValue {
            rows: n,
            cols: j,
            data,
        })
    }

    /// `h_{kk} = diag[k]` for `k < min(N, J)`, zero elsewhere.
    pub fn diagonal(rows: usize, cols: usize, diag: impl Fn(usize) -> f64) -> Self {
        let mut h = Self::zeros(rows, cols);
        for k in 0..rows.min(cols) {
            h.data[k * cols + k] = diag(k);
        }
        h
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.cols + j]
    }

    pub fn set(&mut self, k: usize, j: usize, value: f64) {
        self.data[k * self.cols + j] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sub(&self, other: &DiffusionValue) -> DiffusionValue {
        DiffusionValue {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `h · w` for a `J`-vector `w`.
    pub fn apply(&self, w: &[f64]) -> HVector {
        HVector::from_fn(self.rows, |k| {
            self.data[k * self.cols..(k + 1) * self.cols]
                .iter()
                .zip(w)
                .map(|(h, x)| h * x)
                .sum()
        })
    }

    fn lambda_hs_sq(&self, q: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.rows {
            for (j, &lam) in q.iter().enumerate() {
                let h = self.data[k * self.cols + j];
                s += lam * h * h;
            }
        }
        s
    }
}

/// `|h|_λ = (Σ_j lambda_j ‖h e_j‖²)^{1/2}`.
pub fn lambda_hs_norm(h: &DiffusionValue, spec: &NoiseSpec) -> Result<f64> {
    check_dim(spec.noise_dim(), h.cols())?;
    Ok(h.lambda_hs_sq(spec.q_eigs()).sqrt())
}

/// Left-point cell `S(t - s_i) b (Σ_j sqrt(lambda_j) dbeta_j e_j)` of the
/// stochastic convolution.
pub fn convolution_increment(
    m: &SpectralModel,
    t: f64,
    s_i: f64,
    b_val: &DiffusionValue,
    spec: &NoiseSpec,
    d_beta: &[f64],
) -> Result<HVector> {
    check_dim(m.dim(), b_val.rows())?;
    check_dim(spec.noise_dim(), b_val.cols())?;
    check_dim(spec.noise_dim(), d_beta.len())?;
    if !(s_i >= 0.0 && s_i <= t) {
        return Err(Error::invalid(format!(
            "convolution cell needs 0 <= s_i <= t (got s_i = {s_i}, t = {t})"
        )));
    }
    let weighted: Vec<f64> = d_beta.iter().zip(spec.sqrt_q()).map(|(d, s)| d * s).collect();
    m.semigroup_apply(t - s_i, &b_val.apply(&weighted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn increments_are_deterministic_and_counter_addressed() {
        let spec = NoiseSpec::new(vec![1.0, 0.25, 0.1], 7).unwrap();
        let grid = uniform_grid(0.01, 50);
        let a = sample_increments(&spec, &grid, 3).unwrap();
        let b = sample_increments(&spec, &grid, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_increments(&spec, &grid, 4).unwrap();
        assert_ne!(a, c);
        for (i, j) in [(0, 0), (17, 2), (49, 1)] {
            let z = normal_at(7, 3, i, j, 3);
            assert_eq!(a.row(i)[j], (grid[i + 1] - grid[i]).sqrt() * z);
        }
    }

    #[test]
    fn grid_is_validated() {
        let spec = NoiseSpec::new(vec![1.0], 1).unwrap();
        assert!(sample_increments(&spec, &[0.0, 0.1, 0.1], 0).is_err());
        assert!(sample_increments(&spec, &[0.1, 0.2], 0).is_err());
        assert!(sample_increments(&spec, &[0.0], 0).is_err());
        assert!(NoiseSpec::new(vec![-1.0], 0).is_err());
    }

    #[test]
    fn increment_moments_match_brownian_law() {
        // 1e5 paths of one step; mean within 3 sd/sqrt(n), variance within
        // 3 standard errors of the variance estimator (sd of s^2 ~ ds sqrt(2/n)).
        let ds = 0.01;
        let spec = NoiseSpec::new(vec![1.0, 1.0], 2024).unwrap();
        let grid = [0.0, ds];
        let n = 100_000;
        for j in 0..2 {
            let xs: Vec<f64> = (0..n)
                .map(|p| sample_increments(&spec, &grid, p).unwrap().row(0)[j])
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() <= 3.0 * (ds / n as f64).sqrt(), "mean {mean}");
            assert!((var - ds).abs() <= 3.0 * ds * (2.0 / n as f64).sqrt(), "var {var}");
        }
    }

    #[test]
    fn distinct_paths_are_uncorrelated() {
        let spec = NoiseSpec::new(vec![1.0], 99).unwrap();
        let grid = [0.0, 1.0];
        let n = 10_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|p| {
                (
                    sample_increments(&spec, &grid, 2 * p).unwrap().row(0)[0],
                    sample_increments(&spec, &grid, 2 * p + 1).unwrap().row(0)[0],
                )
            })
            .collect();
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, (a, b)| (acc.0 + a, acc.1 + b));
        let (ma, mb) = (ma / n as f64, mb / n as f64);
        let cov: f64 = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum();
        let va: f64 = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum();
        let vb: f64 = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn lambda_hs_examples() {
        let one = NoiseSpec::new(vec![1.0], 0).unwrap();
        let h = DiffusionValue::from_rows(vec![vec![1.0]]).unwrap();
        assert_eq!(lambda_hs_norm(&h, &one).unwrap(), 1.0);
        let zero = NoiseSpec::new(vec![0.0, 0.0], 0).unwrap();
        let h = DiffusionValue::from_rows(vec![vec![3.0, -2.0], vec![1.0, 5.0]]).unwrap();
        assert_eq!(lambda_hs_norm(&h, &zero).unwrap(), 0.0);
        let q = NoiseSpec::new(vec![1.0, 4.0], 0).unwrap();
        let h = DiffusionValue::from_rows(vec![vec![1.0, 1.0]]).unwrap();
        assert_relative_eq!(lambda_hs_norm(&h, &q).unwrap(), 5f64.sqrt());
        assert!(lambda_hs_norm(&h, &one).is_err());
    }

    #[test]
    fn convolution_examples() {
        let m = SpectralModel::new(vec![1.0], "s").unwrap();
        let q = NoiseSpec::new(vec![1.0], 0).unwrap();
        let sigma = 0.7;
        let b = DiffusionValue::from_rows(vec![vec![sigma]]).unwrap();
        assert_eq!(convolution_increment(&m, 1.0, 0.5, &b, &q, &[0.0]).unwrap(), HVector::zeros(1));
        let w = 0.3;
        assert_eq!(convolution_increment(&m, 0.4, 0.4, &b, &q, &[w]).unwrap()[0], sigma * w);
        let one = DiffusionValue::from_rows(vec![vec![1.0]]).unwrap();
        let r = convolution_increment(&m, 2f64.ln(), 0.0, &one, &q, &[1.0]).unwrap();
        assert_relative_eq!(r[0], 0.5, max_relative = 1e-15);
        assert!(convolution_increment(&m, 0.1, 0.2, &one, &q, &[1.0]).is_err());
    }

    #[test]
    fn ito_isometry_scalar() {
        // Σ_i S(t - s_i) b dω_i has second moment ≈ |b|_λ² (1 - e^{-2 mu t}) / (2 mu).
        let mu = 2.0;
        let m = SpectralModel::new(vec![mu], "s").unwrap();
        let q = NoiseSpec::new(vec![0.5], 11).unwrap();
        let b = DiffusionValue::from_rows(vec![vec![1.5]]).unwrap();
        let t = 1.0;
        let steps = 200;
        let grid = uniform_grid(t / steps as f64, steps);
        let n = 10_000u64;
        let samples: Vec<f64> = (0..n)
            .map(|p| {
                let inc = sample_increments(&q, &grid, p).unwrap();
                (0..steps)
                    .map(|i| convolution_increment(&m, t, grid[i], &b, &q, inc.row(i)).unwrap()[0])
                    .sum::<f64>()
                    .powi(2)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let hs2 = lambda_hs_norm(&b, &q).unwrap().powi(2);
        let exact = hs2 * (1.0 - (-2.0 * mu * t).exp()) / (2.0 * mu);
        assert!((mean - exact).abs() <= 3.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn binary_dump_roundtrip() {
        let spec = NoiseSpec::new(vec![1.0, 0.5], 5).unwrap();
        let grid = uniform_grid(0.1, 10);
        let inc = sample_increments(&spec, &grid, 1).unwrap();
        let mut buf = Vec::new();
        inc.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * 20);
        assert_eq!(&buf[0..8], &10u64.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &5u64.to_le_bytes());
        let back = WienerIncrements::read_from(buf.as_slice(), grid.clone()).unwrap();
        assert_eq!(back, inc);
        assert!(WienerIncrements::read_from(buf.as_slice(), uniform_grid(0.1, 9)).is_err());
    }
}
