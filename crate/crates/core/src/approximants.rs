//! Approximating generator families `A_n -> A` and their convergence gaps.
//!
//! Three families are provided, all diagonal in the eigenbasis of the base
//! model:
//!
//! * **Yosida**: `A_n = n A R(n, A)`, eigenvalues `n mu_k / (n + mu_k)`.
//! * **Galerkin**: keeps modes `k <= n` and freezes the rest (zero action),
//!   so every member shares the base state dimension.
//! * **Shifted**: eigenvalues `mu_k (1 + eps)`, converging as `eps -> 0`.
//!
//! Gaps are measured in the Hilbert norm of spectral coefficients.

use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::spectral::{HVector, SpectralModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Yosida,
    Galerkin,
    Shifted,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Yosida => "yosida",
            FamilyKind::Galerkin => "galerkin",
            FamilyKind::Shifted => "shifted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "yosida" => Some(FamilyKind::Yosida),
            "galerkin" => Some(FamilyKind::Galerkin),
            "shifted" => Some(FamilyKind::Shifted),
            _ => None,
        }
    }
}

/// Index of a family member: an order `n >= 1` or a perturbation `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemberIndex {
    Order(u64),
    Eps(f64),
}

impl MemberIndex {
    pub fn value(self) -> f64 {
        match self {
            MemberIndex::Order(n) => n as f64,
            MemberIndex::Eps(e) => e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorFamily {
    base: SpectralModel,
    kind: FamilyKind,
}

impl GeneratorFamily {
    pub fn new(base: SpectralModel, kind: FamilyKind) -> Self {
        GeneratorFamily { base, kind }
    }

    pub fn yosida(base: SpectralModel) -> Self {
        Self::new(base, FamilyKind::Yosida)
    }

    pub fn galerkin(base: SpectralModel) -> Self {
        Self::new(base, FamilyKind::Galerkin)
    }

    pub fn shifted(base: SpectralModel) -> Self {
        Self::new(base, FamilyKind::Shifted)
    }

    pub fn base(&self) -> &SpectralModel {
        &self.base
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Index from a raw config value, validated for this family's kind.
    pub fn index_from(&self, raw: f64) -> Result<MemberIndex> {
        match self.kind {
            FamilyKind::Yosida | FamilyKind::Galerkin => {
                if raw >= 1.0 && raw.fract() == 0.0 && raw < u64::MAX as f64 {
                    Ok(MemberIndex::Order(raw as u64))
                } else {
                    Err(Error::invalid(format!(
                        "{} index {raw} must be an integer >= 1",
                        self.kind.name()
                    )))
                }
            }
            FamilyKind::Shifted => Ok(MemberIndex::Eps(raw)),
        }
    }

    pub fn member(&self, index: MemberIndex) -> Result<SpectralModel> {
        let base = self.base.mu();
        let mu: Vec<f64> = match (self.kind, index) {
            (FamilyKind::Yosida, MemberIndex::Order(n)) if n >= 1 => {
                let n = n as f64;
                base.iter().map(|&m| n * m / (n + m)).collect()
            }
            (FamilyKind::Galerkin, MemberIndex::Order(n)) if n >= 1 => base
                .iter()
                .enumerate()
                .map(|(k, &m)| if (k as u64) < n { m } else { 0.0 })
                .collect(),
            (FamilyKind::Shifted, MemberIndex::Eps(eps)) if eps > 0.0 && eps.is_finite() => {
                base.iter().map(|&m| m * (1.0 + eps)).collect()
            }
            _ => {
                return Err(Error::invalid(format!(
                    "index {index:?} is not valid for the {} family",
                    self.kind.name()
                )))
            }
        };
        let label = format!("{}-{}-{}", self.base.label(), self.kind.name(), index.value());
        Ok(SpectralModel::member(mu, label))
    }

    /// `‖R(lambda, A_n) v - R(lambda, A) v‖` for `lambda > 0`.
    pub fn resolvent_gap(&self, index: MemberIndex, lambda: f64, v: &HVector) -> Result<f64> {
        check_dim(self.base.dim(), v.len())?;
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("lambda = {lambda} must be > 0")));
        }
        let member = self.member(index)?;
        Ok(mode_gap(&member, &self.base, v, |m| 1.0 / (lambda + m)))
    }

    /// `max_t ‖S_n(t) v - S(t) v‖` over the grid.
    pub fn semigroup_gap(&self, index: MemberIndex, t_grid: &[f64], v: &HVector) -> Result<f64> {
        check_dim(self.base.dim(), v.len())?;
        check_grid(t_grid, false)?;
        let member = self.member(index)?;
        Ok(t_grid
            .iter()
            .map(|&t| mode_gap(&member, &self.base, v, |m| (-m * t).exp()))
            .fold(0.0, f64::max))
    }

    /// `max_t ‖A_n S_n(t) v - A S(t) v‖` over a grid bounded away from 0.
    pub fn generator_semigroup_gap(
        &self,
        index: MemberIndex,
        t_grid: &[f64],
        v: &HVector,
    ) -> Result<f64> {
        check_dim(self.base.dim(), v.len())?;
        check_grid(t_grid, true)?;
        let member = self.member(index)?;
        Ok(t_grid
            .iter()
            .map(|&t| mode_gap(&member, &self.base, v, |m| m * (-m * t).exp()))
            .fold(0.0, f64::max))
    }
}

fn check_grid(t_grid: &[f64], strictly_positive: bool) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("time grid must be nonempty"));
    }
    for &t in t_grid {
        let ok = if strictly_positive { t > 0.0 } else { t >= 0.0 };
        if !ok || !t.is_finite() {
            let need = if strictly_positive { "> 0" } else { ">= 0" };
            return Err(Error::invalid(format!("grid time {t} must be finite and {need}")));
        }
    }
    Ok(())
}

/// `(Σ_k [g(mu'_k) - g(mu_k)]^2 v_k^2)^{1/2}` for a spectral function `g`.
fn mode_gap(member: &SpectralModel, base: &SpectralModel, v: &HVector, g: impl Fn(f64) -> f64) -> f64 {
    member
        .mu()
        .iter()
        .zip(base.mu())
        .zip(v.iter())
        .map(|((&mn, &m), &x)| {
            let d = (g(mn) - g(m)) * x;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// One row of a gap table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub index: f64,
    pub lambda_or_t: f64,
    pub gap: f64,
}

/// CSV with columns `index,lambda_or_t,gap`.
pub fn gap_table_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("index,lambda_or_t,gap\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.index, r.lambda_or_t, r.gap);
    }
    out
}
