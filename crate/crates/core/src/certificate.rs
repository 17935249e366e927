//! Existence and uniqueness conditions for CP models, evaluated with margins.
//!
//! Every check is a sufficient condition only. The coherence-based bounds are
//! strict inequalities and the Kruskal sum and sparse-recovery bounds are
//! non-strict; no slack is added, callers can apply their own to `margin`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coherence::{coherence_of_columns, krank, ColumnSet, Spark, MAX_SPARK_COLUMNS};
use crate::error::{Error, Result};
use crate::tensor::CpModel;

/// Default threshold below which a weight counts as zero.
pub const DEFAULT_LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Kruskal,
    CoherenceKruskal,
    ExistenceBound,
    CorollaryBound,
    SparkRecovery,
    CoherenceRecovery,
}

impl CheckName {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Kruskal => "kruskal",
            CheckName::CoherenceKruskal => "coherence_kruskal",
            CheckName::ExistenceBound => "existence_bound",
            CheckName::CorollaryBound => "corollary_bound",
            CheckName::SparkRecovery => "spark_recovery",
            CheckName::CoherenceRecovery => "coherence_recovery",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction of the inequality a check evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// lhs ≥ rhs
    AtLeast,
    /// lhs > rhs
    Greater,
    /// lhs < rhs
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: CheckName,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub holds: bool,
    /// `lhs − rhs` for lower-bound checks, `rhs − lhs` for upper-bound checks.
    pub margin: f64,
}

impl Check {
    fn new(name: CheckName, lhs: f64, rhs: f64, relation: Relation) -> Self {
        let (holds, margin) = match relation {
            Relation::AtLeast => (lhs >= rhs, lhs - rhs),
            Relation::Greater => (lhs > rhs, lhs - rhs),
            Relation::Less => (lhs < rhs, rhs - lhs),
        };
        Self {
            name,
            lhs,
            rhs,
            relation,
            holds,
            margin,
        }
    }
}

/// `krank(U) + krank(V) + krank(W) ≥ 2r + 2`.
pub fn check_kruskal(krank_u: usize, krank_v: usize, krank_w: usize, r: usize) -> Check {
    Check::new(
        CheckName::Kruskal,
        (krank_u + krank_v + krank_w) as f64,
        (2 * r + 2) as f64,
        Relation::AtLeast,
    )
}

fn check_mu(mu: f64, upper: Option<f64>) -> Result<()> {
    let ok = mu >= 0.0 && upper.map_or(mu.is_finite(), |hi| mu <= hi);
    if !ok {
        return Err(Error::Domain(format!("coherence {mu} outside its admissible range")));
    }
    Ok(())
}

/// `½ [1/μ(U) + 1/μ(V) + 1/μ(W)] > r`. A zero coherence gives an infinite
/// left-hand side.
pub fn check_coherence_kruskal(mu_u: f64, mu_v: f64, mu_w: f64, r: usize) -> Result<Check> {
    for mu in [mu_u, mu_v, mu_w] {
        check_mu(mu, Some(1.0))?;
    }
    let lhs = 0.5 * (1.0 / mu_u + 1.0 / mu_v + 1.0 / mu_w);
    Ok(Check::new(CheckName::CoherenceKruskal, lhs, r as f64, Relation::Greater))
}

/// `μ₁ μ₂ μ₃ < 1/r`.
pub fn check_existence_bound(mu_u: f64, mu_v: f64, mu_w: f64, r: usize) -> Result<Check> {
    for mu in [mu_u, mu_v, mu_w] {
        check_mu(mu, Some(1.0))?;
    }
    Ok(Check::new(
        CheckName::ExistenceBound,
        mu_u * mu_v * mu_w,
        1.0 / r as f64,
        Relation::Less,
    ))
}

fn corollary(mu_u: f64, mu_v: f64, mu_w: f64, r: usize) -> Check {
    let lhs = 1.0 / (mu_u * mu_v * mu_w).cbrt();
    Check::new(CheckName::CorollaryBound, lhs, 2.0 * r as f64 / 3.0, Relation::Greater)
}

/// `1 / ∛(μ₁ μ₂ μ₃) > 2r/3`; coherences must be positive.
pub fn check_corollary(mu_u: f64, mu_v: f64, mu_w: f64, r: usize) -> Result<Check> {
    for mu in [mu_u, mu_v, mu_w] {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("corollary bound needs μ > 0, got {mu}")));
        }
    }
    Ok(corollary(mu_u, mu_v, mu_w, r))
}

/// Which quantity a sparse-recovery bound is evaluated from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityWitness {
    Spark(Spark),
    Coherence(f64),
}

/// `½ spark(X) ≥ k` or its coherence relaxation `½ (1 + 1/μ(X)) ≥ k`.
pub fn check_sparse_recovery_bounds(witness: SparsityWitness, k: usize) -> Check {
    match witness {
        SparsityWitness::Spark(s) => Check::new(
            CheckName::SparkRecovery,
            0.5 * s.as_f64(),
            k as f64,
            Relation::AtLeast,
        ),
        SparsityWitness::Coherence(mu) => Check::new(
            CheckName::CoherenceRecovery,
            0.5 * (1.0 + 1.0 / mu),
            k as f64,
            Relation::AtLeast,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub r: usize,
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu_w: f64,
    pub krank_u: Option<usize>,
    pub krank_v: Option<usize>,
    pub krank_w: Option<usize>,
    /// False when kranks were replaced by `⌈1/μ⌉` lower bounds.
    pub krank_exact: bool,
    /// Every weight exceeds the floor in modulus.
    pub lambda_nonzero: bool,
    /// `Some(r)` when the coherence condition and Kruskal's condition on the
    /// (exact or bounded) kranks both hold and no weight vanishes.
    pub certified_rank: Option<usize>,
    pub checks: Vec<Check>,
}

impl Certificate {
    pub fn check(&self, name: CheckName) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn holds(&self, name: CheckName) -> bool {
        self.check(name).is_some_and(|c| c.holds)
    }
}

fn krank_lower_bound(mu: f64, r: usize) -> usize {
    if mu <= 0.0 {
        r
    } else {
        ((1.0 / mu).ceil() as usize).clamp(1, r)
    }
}

/// Runs every applicable check on a model's factor coherences and kranks.
pub fn certify_model(model: &CpModel, tol: f64, lambda_floor: f64) -> Result<Certificate> {
    let r = model.rank();
    let mus: Vec<f64> = model.factors().iter().map(coherence_of_columns).collect();
    let krank_exact = r <= MAX_SPARK_COLUMNS;
    let kranks: Vec<Option<usize>> = if krank_exact {
        model
            .factors()
            .iter()
            .map(|f| ColumnSet::new(f.clone()).and_then(|s| krank(&s, tol)).map(Some))
            .collect::<Result<_>>()?
    } else {
        vec![None; 3]
    };
    let effective: Vec<usize> = kranks
        .iter()
        .zip(&mus)
        .map(|(k, &mu)| k.unwrap_or_else(|| krank_lower_bound(mu, r)))
        .collect();

    let coherence_kruskal = check_coherence_kruskal(mus[0], mus[1], mus[2], r)?;
    // ½Σ1/μ > r only forces Σ krank ≥ 2r+1, one short of Kruskal's bound,
    // so the rank claim also needs the krank sum itself
    let kruskal = check_kruskal(effective[0], effective[1], effective[2], r);
    let certified = coherence_kruskal.holds && kruskal.holds;
    let checks = vec![
        kruskal,
        coherence_kruskal,
        check_existence_bound(mus[0], mus[1], mus[2], r)?,
        corollary(mus[0], mus[1], mus[2], r),
    ];
    let lambda_nonzero = model.lambda().iter().all(|z| z.norm() > lambda_floor);
    Ok(Certificate {
        r,
        mu_u: mus[0],
        mu_v: mus[1],
        mu_w: mus[2],
        krank_u: kranks[0],
        krank_v: kranks[1],
        krank_w: kranks[2],
        krank_exact,
        lambda_nonzero,
        certified_rank: (certified && lambda_nonzero).then_some(r),
        checks,
    })
}
