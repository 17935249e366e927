//! The rank-3 tensor `A = u₁⊗u₂⊗v₃ + u₁⊗v₂⊗u₃ + v₁⊗u₂⊗u₃`, which is the limit
//! of the rank-2 tensors
//! `Aₙ = n(u₁ + v₁/n)⊗(u₂ + v₂/n)⊗(u₃ + v₃/n) − n u₁⊗u₂⊗u₃`
//! and therefore has no best rank-2 approximation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::coherence_of_columns;
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::solver::{als_decompose, constrained_decompose, SolveTrace, SolverOptions};
use crate::tensor::{frobenius_norm, outer3, CpModel, Tensor3, C64};

/// Pairs `(uᵢ, vᵢ)` whose normalized smallest singular value is at or below
/// this are treated as dependent.
pub const INDEPENDENCE_TOL: f64 = 1e-9;
/// Above this `n` the sequence is built from its expansion around `A`.
pub const DIRECT_SEQUENCE_LIMIT: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DslInstance {
    u: [Vec<C64>; 3],
    v: [Vec<C64>; 3],
}

impl DslInstance {
    pub fn new(u: [Vec<C64>; 3], v: [Vec<C64>; 3]) -> Result<Self> {
        let m = u[0].len();
        if m == 0 || u.iter().chain(&v).any(|x| x.len() != m) {
            return Err(Error::Dimension("all six vectors must share one nonzero length".into()));
        }
        for i in 0..3 {
            let (nu, nv) = (norm(&u[i]), norm(&v[i]));
            if !(nu > 0.0 && nv > 0.0) {
                return Err(Error::Domain(format!("pair {} contains a zero vector", i + 1)));
            }
            let pair = DMatrix::from_fn(m, 2, |r, c| if c == 0 { u[i][r] / nu } else { v[i][r] / nv });
            let s = singular_values(&pair);
            if s.len() < 2 || s[1] <= INDEPENDENCE_TOL {
                return Err(Error::Domain(format!(
                    "u{0} and v{0} are linearly dependent; the limit would not have rank 3",
                    i + 1
                )));
            }
        }
        Ok(Self { u, v })
    }

    /// `uᵢ = e₁`, `vᵢ = e₂` in `ℂᵐ`.
    pub fn orthonormal(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Domain(format!("orthonormal pairs need m ≥ 2, got {m}")));
        }
        let e = |k: usize| (0..m).map(|i| C64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect::<Vec<_>>();
        Self::new([e(0), e(0), e(0)], [e(1), e(1), e(1)])
    }

    pub fn len(&self) -> usize {
        self.u[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u(&self, i: usize) -> &[C64] {
        &self.u[i]
    }

    pub fn v(&self, i: usize) -> &[C64] {
        &self.v[i]
    }

    fn term(&self, pick: [bool; 3]) -> Tensor3 {
        let f = |i: usize| if pick[i] { &self.v[i] } else { &self.u[i] };
        outer3(f(0), f(1), f(2)).expect("instance vectors are nonempty")
    }
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn sum(terms: impl IntoIterator<Item = Tensor3>) -> Tensor3 {
    terms
        .into_iter()
        .reduce(|a, b| a.add(&b).expect("terms share dims"))
        .expect("at least one term")
}

pub fn dsl_limit(inst: &DslInstance) -> Tensor3 {
    sum([
        inst.term([false, false, true]),
        inst.term([false, true, false]),
        inst.term([true, false, false]),
    ])
}

fn shifted(inst: &DslInstance, i: usize, n: f64) -> Vec<C64> {
    inst.u[i].iter().zip(&inst.v[i]).map(|(a, b)| a + b / n).collect()
}

/// `Aₙ`, computed directly up to [`DIRECT_SEQUENCE_LIMIT`] and as
/// `A + (u₁⊗v₂⊗v₃ + v₁⊗u₂⊗v₃ + v₁⊗v₂⊗u₃)/n + v₁⊗v₂⊗v₃/n²` beyond.
pub fn dsl_sequence(inst: &DslInstance, n: u64) -> Result<Tensor3> {
    if n == 0 {
        return Err(Error::Domain("sequence index n must be at least 1".into()));
    }
    let nf = n as f64;
    if n <= DIRECT_SEQUENCE_LIMIT {
        let big = outer3(&shifted(inst, 0, nf), &shifted(inst, 1, nf), &shifted(inst, 2, nf))?;
        return big.scale(C64::new(nf, 0.0)).sub(&inst.term([false; 3]).scale(C64::new(nf, 0.0)));
    }
    let first = sum([
        inst.term([false, true, true]),
        inst.term([true, false, true]),
        inst.term([true, true, false]),
    ]);
    dsl_limit(inst)
        .add(&first.scale(C64::new(1.0 / nf, 0.0)))?
        .add(&inst.term([true; 3]).scale(C64::new(1.0 / (nf * nf), 0.0)))
}

/// `‖Aₙ − A‖_F`.
pub fn dist_to_limit(inst: &DslInstance, n: u64) -> Result<f64> {
    Ok(frobenius_norm(&dsl_sequence(inst, n)?.sub(&dsl_limit(inst))?))
}

/// The two-term model `n(u₁+v₁/n)⊗… − n u₁⊗u₂⊗u₃` with normalized columns.
pub fn explicit_model(inst: &DslInstance, n: u64) -> Result<CpModel> {
    if n == 0 {
        return Err(Error::Domain("sequence index n must be at least 1".into()));
    }
    let nf = n as f64;
    let m = inst.len();
    let factor = |i: usize| {
        let s = shifted(inst, i, nf);
        DMatrix::from_fn(m, 2, |r, c| if c == 0 { s[r] } else { inst.u[i][r] })
    };
    CpModel::new(vec![C64::new(nf, 0.0), C64::new(-nf, 0.0)], factor(0), factor(1), factor(2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub n: u64,
    pub dist_to_limit: f64,
    pub lambda_max_explicit: f64,
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu_w: f64,
}

pub fn demo_row(inst: &DslInstance, n: u64) -> Result<DemoRow> {
    let model = explicit_model(inst, n)?;
    Ok(DemoRow {
        n,
        dist_to_limit: dist_to_limit(inst, n)?,
        lambda_max_explicit: model.max_abs_lambda(),
        mu_u: coherence_of_columns(model.u()),
        mu_v: coherence_of_columns(model.v()),
        mu_w: coherence_of_columns(model.w()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub rows: Vec<DemoRow>,
    pub norm_limit: f64,
    pub unconstrained: (CpModel, SolveTrace),
    pub constrained: Option<(CpModel, SolveTrace)>,
}

/// Tabulates the sequence and fits `A` at rank 2, without caps and, when
/// `caps` is given, with them. `opts.rank` and `opts.mu_caps` are overridden.
pub fn demo_degeneracy(
    inst: &DslInstance,
    n_list: &[u64],
    opts: &SolverOptions,
    caps: Option<[f64; 3]>,
) -> Result<DegeneracyReport> {
    let rows = n_list
        .par_iter()
        .map(|&n| demo_row(inst, n))
        .collect::<Result<Vec<_>>>()?;
    let a = dsl_limit(inst);
    let base = SolverOptions {
        rank: 2,
        mu_caps: None,
        ..opts.clone()
    };
    let unconstrained = als_decompose(&a, &base)?;
    let constrained = caps
        .map(|caps| constrained_decompose(&a, &base.clone().with_caps(caps)))
        .transpose()?;
    Ok(DegeneracyReport {
        rows,
        norm_limit: frobenius_norm(&a),
        unconstrained,
        constrained,
    })
}
