//! Finite spectral truncation of the state space and the operator calculus
//! of a diagonal generator.
//!
//! A [`SpectralModel`] stores the eigenvalues `mu_k > 0` of `-A` on an
//! orthonormal eigenbasis, so `A e_k = -mu_k e_k`. Every operator function
//! (semigroup, resolvent, fractional powers) is then a componentwise map on
//! the coefficient vector. Fractional powers are those of the positive
//! operator `-A`: `(-A)^alpha e_k = mu_k^alpha e_k`.

use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Element of the truncated state space, in eigenbasis coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HVector(Vec<f64>);

impl HVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        HVector(coeffs)
    }

    pub fn zeros(dim: usize) -> Self {
        HVector(vec![0.0; dim])
    }

    /// The `k`-th basis vector (zero-based).
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = 1.0;
        v
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        HVector((0..dim).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    /// Hilbert norm; by Parseval this is the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, c: f64) -> HVector {
        HVector(self.0.iter().map(|x| c * x).collect())
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &HVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn add_assign(&mut self, other: &HVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &HVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a -= b;
        }
    }

    pub fn distance(&self, other: &HVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for HVector {
    fn from(v: Vec<f64>) -> Self {
        HVector(v)
    }
}

impl Index<usize> for HVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &HVector {
    type Output = HVector;
    fn add(self, rhs: &HVector) -> HVector {
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &HVector {
    type Output = HVector;
    fn sub(self, rhs: &HVector) -> HVector {
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

/// Sign of the exponent in `(-A)^{±alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerSign {
    Positive,
    Negative,
}

impl PowerSign {
    fn as_f64(self) -> f64 {
        match self {
            PowerSign::Positive => 1.0,
            PowerSign::Negative => -1.0,
        }
    }
}

/// Diagonal generator on `dim` retained modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    mu: Vec<f64>,
    label: String,
}

impl SpectralModel {
    /// Builds a base model. Eigenvalues must be finite, positive and sorted
    /// ascending.
    pub fn new(mu: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("spectral model needs at least one mode"));
        }
        if let Some((k, m)) = mu
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::invalid(format!(
                "eigenvalue mu_{} = {m} must be finite and positive",
                k + 1
            )));
        }
        if mu.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues must be sorted ascending"));
        }
        Ok(SpectralModel {
            mu,
            label: label.into(),
        })
    }

    /// Dirichlet Laplacian on `(0, pi)`: `mu_k = k^2`, `k = 1..=modes`.
    pub fn laplacian(modes: usize) -> Result<Self> {
        Self::new(
            (1..=modes).map(|k| (k * k) as f64).collect(),
            format!("laplacian-{modes}"),
        )
    }

    /// Approximating-family member. Mode order follows the base model and
    /// frozen modes (zero action) are allowed, so neither positivity nor
    /// sorting is enforced.
    pub(crate) fn member(mu: Vec<f64>, label: String) -> Self {
        debug_assert!(mu.iter().all(|m| m.is_finite() && *m >= 0.0));
        SpectralModel { mu, label }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `0 ∈ ρ(A)`, i.e. no frozen modes.
    pub fn is_invertible(&self) -> bool {
        self.mu_min() > 0.0
    }

    fn conform(&self, v: &HVector) -> Result<()> {
        check_dim(self.dim(), v.len())
    }

    /// `A v`.
    pub fn apply_generator(&self, v: &HVector) -> Result<HVector> {
        self.conform(v)?;
        Ok(self.map(v, |m, x| -m * x))
    }

    /// `S(t) v = e^{tA} v`.
    pub fn semigroup_apply(&self, t: f64, v: &HVector) -> Result<HVector> {
        self.conform(v)?;
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("semigroup time {t} must be >= 0")));
        }
        Ok(self.map(v, |m, x| (-m * t).exp() * x))
    }

    /// `(-A)^{±alpha} v` for `alpha ∈ (0, 1]`.
    pub fn fractional_apply(&self, alpha: f64, sign: PowerSign, v: &HVector) -> Result<HVector> {
        self.conform(v)?;
        check_alpha(alpha)?;
        if !self.is_invertible() {
            return Err(Error::invalid(
                "fractional powers need 0 in the resolvent set (all mu_k > 0)",
            ));
        }
        let e = sign.as_f64() * alpha;
        Ok(self.map(v, |m, x| m.powf(e) * x))
    }

    /// `R(lambda, A) v = (lambda I - A)^{-1} v`.
    pub fn resolvent_apply(&self, lambda: f64, v: &HVector) -> Result<HVector> {
        self.conform(v)?;
        self.check_resolvent(lambda)?;
        Ok(self.map(v, |m, x| x / (lambda + m)))
    }

    fn check_resolvent(&self, lambda: f64) -> Result<()> {
        match self.mu.iter().position(|m| lambda + m == 0.0) {
            Some(mode) => Err(Error::SingularResolvent {
                lambda,
                mode: mode + 1,
            }),
            None => Ok(()),
        }
    }

    /// `‖R(lambda, A)‖ = max_k 1/|lambda + mu_k|`.
    pub fn resolvent_norm(&self, lambda: f64) -> Result<f64> {
        self.check_resolvent(lambda)?;
        Ok(self
            .mu
            .iter()
            .map(|m| 1.0 / (lambda + m).abs())
            .fold(0.0, f64::max))
    }

    /// `‖S(t)‖ = max_k e^{-mu_k t}`.
    pub fn semigroup_norm(&self, t: f64) -> f64 {
        self.mu.iter().map(|m| (-m * t).exp()).fold(0.0, f64::max)
    }

    /// `‖A S(t)‖ = max_k mu_k e^{-mu_k t}`.
    pub fn analytic_norm(&self, t: f64) -> f64 {
        self.mu
            .iter()
            .map(|m| m * (-m * t).exp())
            .fold(0.0, f64::max)
    }

    /// `‖(-A)^{-alpha}‖ = mu_min^{-alpha}`.
    pub fn inverse_fractional_norm(&self, alpha: f64) -> f64 {
        self.mu_min().powf(-alpha)
    }

    /// Checks `(lambda - delta) ‖R(lambda, A)‖ <= m_bound` on the sample grid.
    pub fn sectorial_check(&self, m_bound: f64, delta: f64, lambda_samples: &[f64]) -> Result<bool> {
        if lambda_samples.is_empty() {
            return Err(Error::invalid("sectoriality check needs at least one sample"));
        }
        let mut worst = 0.0_f64;
        for &lambda in lambda_samples {
            if !(lambda > delta) {
                return Err(Error::invalid(format!(
                    "sample lambda = {lambda} must exceed delta = {delta}"
                )));
            }
            worst = worst.max((lambda - delta) * self.resolvent_norm(lambda)?);
        }
        Ok(worst <= m_bound)
    }

    /// Per-mode `e^{-mu_k dt}`.
    pub(crate) fn decay_factors(&self, dt: f64) -> Vec<f64> {
        self.mu.iter().map(|m| (-m * dt).exp()).collect()
    }

    /// Per-mode `int_0^dt e^{-mu_k u} du`, equal to `dt` on frozen modes.
    pub(crate) fn integrated_decay(&self, dt: f64) -> Vec<f64> {
        self.mu
            .iter()
            .map(|&m| if m == 0.0 { dt } else { -(-m * dt).exp_m1() / m })
            .collect()
    }

    fn map(&self, v: &HVector, f: impl Fn(f64, f64) -> f64) -> HVector {
        HVector(self.mu.iter().zip(v.iter()).map(|(&m, &x)| f(m, x)).collect())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha = {alpha} must lie in (0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(mu: &[f64]) -> SpectralModel {
        SpectralModel::new(mu.to_vec(), "t").unwrap()
    }

    #[test]
    fn generator_is_diagonal() {
        let m = model(&[1.0]);
        assert_eq!(m.apply_generator(&vec![1.0].into()).unwrap(), vec![-1.0].into());
        let m = model(&[1.0, 4.0]);
        assert_eq!(m.apply_generator(&HVector::zeros(2)).unwrap(), HVector::zeros(2));
        assert_eq!(
            m.apply_generator(&vec![2.0, 3.0].into()).unwrap(),
            vec![-2.0, -12.0].into()
        );
    }

    #[test]
    fn generator_rejects_wrong_dimension() {
        let m = model(&[1.0, 4.0]);
        assert!(matches!(
            m.apply_generator(&HVector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn semigroup_examples() {
        let m = model(&[1.0, 4.0]);
        let v: HVector = vec![0.3, -2.0].into();
        assert_eq!(m.semigroup_apply(0.0, &v).unwrap(), v);
        let half = model(&[1.0])
            .semigroup_apply(2f64.ln(), &vec![1.0].into())
            .unwrap();
        assert_relative_eq!(half[0], 0.5, max_relative = 1e-15);
        let w = m.semigroup_apply(1.0, &vec![1.0, 1.0].into()).unwrap();
        assert_relative_eq!(w[0], (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(w[1], (-4f64).exp(), max_relative = 1e-15);
        assert!(m.semigroup_apply(-0.1, &v).is_err());
    }

    #[test]
    fn fractional_examples() {
        let m = model(&[4.0]);
        let one: HVector = vec![1.0].into();
        assert_relative_eq!(m.fractional_apply(0.5, PowerSign::Positive, &one).unwrap()[0], 2.0);
        assert_relative_eq!(m.fractional_apply(0.5, PowerSign::Negative, &one).unwrap()[0], 0.5);
        let m = model(&[1.0, 4.0, 9.0]);
        let v: HVector = vec![1.0, -2.0, 0.5].into();
        let pos = m.fractional_apply(1.0, PowerSign::Positive, &v).unwrap();
        assert_eq!(pos, m.apply_generator(&v).unwrap().scaled(-1.0));
        assert!(m.fractional_apply(0.0, PowerSign::Positive, &v).is_err());
        assert!(m.fractional_apply(1.5, PowerSign::Negative, &v).is_err());
        assert_relative_eq!(m.inverse_fractional_norm(0.5), 1.0);
    }

    #[test]
    fn resolvent_examples() {
        let r = model(&[1.0]).resolvent_apply(2.0, &vec![1.0].into()).unwrap();
        assert_relative_eq!(r[0], 1.0 / 3.0);
        let m = model(&[1.0, 4.0]);
        let r = m.resolvent_apply(0.0, &vec![1.0, 1.0].into()).unwrap();
        assert_eq!(r, vec![1.0, 0.25].into());
        // (lambda I - A) R(lambda, A) v = v
        let v: HVector = vec![2.0, 5.0].into();
        let r = m.resolvent_apply(3.0, &v).unwrap();
        let back = &r.scaled(3.0) - &m.apply_generator(&r).unwrap();
        assert_relative_eq!(back[0], 2.0, max_relative = 1e-15);
        assert_relative_eq!(back[1], 5.0, max_relative = 1e-15);
        assert!(matches!(
            m.resolvent_apply(-4.0, &v),
            Err(Error::SingularResolvent { mode: 2, .. })
        ));
    }

    #[test]
    fn sectorial_examples() {
        let m = model(&[1.0, 4.0]);
        assert!(m.sectorial_check(1.0, 0.0, &[0.1, 1.0, 10.0, 100.0]).unwrap());
        assert!(!model(&[1.0]).sectorial_check(0.5, 0.0, &[100.0]).unwrap());
        // (1 + 0.5) / (1 + 1) = 0.75
        assert!(model(&[1.0]).sectorial_check(1.0, -0.5, &[1.0]).unwrap());
        assert!(!model(&[1.0]).sectorial_check(0.74, -0.5, &[1.0]).unwrap());
        assert!(m.sectorial_check(1.0, 0.0, &[]).is_err());
        assert!(m.sectorial_check(1.0, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(SpectralModel::new(vec![], "e").is_err());
        assert!(SpectralModel::new(vec![1.0, 0.0], "e").is_err());
        assert!(SpectralModel::new(vec![4.0, 1.0], "e").is_err());
        assert!(SpectralModel::new(vec![1.0, f64::NAN], "e").is_err());
        assert_eq!(SpectralModel::laplacian(3).unwrap().mu(), &[1.0, 4.0, 9.0]);
    }

    #[test]
    fn analytic_bound_holds_on_reference_model() {
        let m = SpectralModel::laplacian(16).unwrap();
        for i in 1..=1000 {
            let t = i as f64 / 1000.0;
            assert!(m.semigroup_norm(t) <= 1.0);
            assert!(t * m.analytic_norm(t) <= (-1f64).exp() + 1e-12);
        }
    }

    fn arb_model() -> impl Strategy<Value = (SpectralModel, HVector)> {
        (1usize..=32).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..500.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
                .prop_map(|(mut mu, v)| {
                    mu.sort_by(f64::total_cmp);
                    (SpectralModel::new(mu, "arb").unwrap(), HVector::new(v))
                })
        })
    }

    fn close(a: &HVector, b: &HVector, tol: f64) -> bool {
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
    }

    proptest! {
        #[test]
        fn semigroup_property((m, v) in arb_model(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let lhs = m.semigroup_apply(s, &m.semigroup_apply(t, &v).unwrap()).unwrap();
            let rhs = m.semigroup_apply(s + t, &v).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
            prop_assert!(m.semigroup_apply(t, &v).unwrap().norm() <= v.norm() * (1.0 + 1e-15));
        }

        #[test]
        fn fractional_inversion((m, v) in arb_model(), alpha in 0.01f64..=1.0) {
            let down = m.fractional_apply(alpha, PowerSign::Negative, &v).unwrap();
            let back = m.fractional_apply(alpha, PowerSign::Positive, &down).unwrap();
            prop_assert!(close(&back, &v, 1e-12));
        }

        #[test]
        fn resolvent_identity((m, v) in arb_model(), lambda in 0.01f64..50.0, nu in 0.01f64..50.0) {
            let lhs = &m.resolvent_apply(lambda, &v).unwrap() - &m.resolvent_apply(nu, &v).unwrap();
            let rhs = m
                .resolvent_apply(lambda, &m.resolvent_apply(nu, &v).unwrap())
                .unwrap()
                .scaled(nu - lambda);
            let scale = m.resolvent_apply(lambda, &v).unwrap().norm() + m.resolvent_apply(nu, &v).unwrap().norm();
            prop_assert!(lhs.distance(&rhs) <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }
    }
}
