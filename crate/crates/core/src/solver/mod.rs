//! Rank-r CP fitting by alternating least squares, with optional per-mode
//! coherence caps enforced by a hinge penalty.

mod align;
mod engine;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use align::{align_models, Alignment};

use crate::error::{Error, Result};
use crate::linalg::derive_seed;
use crate::tensor::{frobenius_norm, CpModel, Tensor3};

/// Slack allowed on the coherence caps of a returned constrained model.
pub const CAP_FEASIBILITY_TOL: f64 = 1e-6;

/// Window, growth factor and residual-stall threshold that classify a run
/// as having diverging weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRule {
    pub window: usize,
    pub growth: f64,
    pub stall: f64,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self {
            window: 500,
            growth: 10.0,
            stall: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rank: usize,
    pub mu_caps: Option<[f64; 3]>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    pub restarts: usize,
    pub seed: u64,
    pub divergence: DivergenceRule,
}

impl SolverOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            mu_caps: None,
            max_iter: 2000,
            rel_tol: 1e-8,
            penalty_weight: 1.0,
            penalty_growth: 2.0,
            restarts: 5,
            seed: 0,
            divergence: DivergenceRule::default(),
        }
    }

    pub fn with_caps(mut self, caps: [f64; 3]) -> Self {
        self.mu_caps = Some(caps);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    fn validate(&self, a: &Tensor3) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Domain("rank must be at least 1".into()));
        }
        if self.max_iter == 0 || self.restarts == 0 {
            return Err(Error::Domain("max_iter and restarts must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) || !(self.penalty_weight > 0.0) || !(self.penalty_growth >= 1.0) {
            return Err(Error::Domain("invalid tolerance or penalty parameters".into()));
        }
        if let Some(caps) = self.mu_caps {
            if caps.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
                return Err(Error::Domain(format!("coherence caps must lie in (0, 1], got {caps:?}")));
            }
        }
        let (l, m, n) = a.dims();
        let limit = (m * n).min(l * n).min(l * m);
        if self.rank > limit {
            return Err(Error::Domain(format!(
                "rank {} exceeds the solvable limit {limit} for a {l}x{m}x{n} tensor",
                self.rank
            )));
        }
        if a.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("tensor has non-finite entries".into()));
        }
        if a.is_zero() {
            return Err(Error::DegenerateInput("cannot decompose the zero tensor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub residual: f64,
    pub lambda_max: f64,
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu_w: f64,
}

impl TraceRecord {
    pub fn mus(&self) -> [f64; 3] {
        [self.mu_u, self.mu_v, self.mu_w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    DivergingWeights,
}

/// Per-iteration history of the returned run. Record 0 is the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
    /// Index of the restart that produced this trace.
    pub restart: usize,
    pub seed: u64,
    /// Whether the final model meets the caps; `None` for unconstrained runs.
    pub feasible: Option<bool>,
    pub warnings: Vec<String>,
}

impl SolveTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    pub fn final_residual(&self) -> f64 {
        self.last().residual
    }

    /// `max|λ|` after iteration `iter`, if the run got that far.
    pub fn lambda_max_at(&self, iter: usize) -> Option<f64> {
        self.records.iter().find(|r| r.iter == iter).map(|r| r.lambda_max)
    }
}

/// Unconstrained best-of-restarts ALS fit.
pub fn als_decompose(a: &Tensor3, opts: &SolverOptions) -> Result<(CpModel, SolveTrace)> {
    if opts.mu_caps.is_some() {
        return Err(Error::Domain(
            "als_decompose takes no coherence caps; use constrained_decompose".into(),
        ));
    }
    opts.validate(a)?;
    let runs = run_restarts(a, opts)?;
    let best = runs
        .into_iter()
        .min_by(|x, y| x.1.final_residual().total_cmp(&y.1.final_residual()))
        .expect("at least one restart");
    Ok(best)
}

/// Coherence-capped fit. Runs whose final model violates a cap by more than
/// [`CAP_FEASIBILITY_TOL`] are discarded.
pub fn constrained_decompose(a: &Tensor3, opts: &SolverOptions) -> Result<(CpModel, SolveTrace)> {
    let caps = opts
        .mu_caps
        .ok_or_else(|| Error::Domain("constrained_decompose needs coherence caps".into()))?;
    opts.validate(a)?;
    let r = opts.rank as f64;
    let warning = (caps[0] * caps[1] * caps[2] >= 1.0 / r).then(|| {
        format!(
            "cap product {:.6} is not below 1/r = {:.6}; a best approximation is not guaranteed to exist",
            caps[0] * caps[1] * caps[2],
            1.0 / r
        )
    });
    let runs = run_restarts(a, opts)?;
    let (feasible, infeasible): (Vec<_>, Vec<_>) =
        runs.into_iter().partition(|(_, t)| t.feasible == Some(true));
    let mut best = match feasible
        .into_iter()
        .min_by(|x, y| x.1.final_residual().total_cmp(&y.1.final_residual()))
    {
        Some(b) => b,
        None => {
            let violation = |t: &SolveTrace| {
                t.last()
                    .mus()
                    .iter()
                    .zip(caps)
                    .map(|(mu, cap)| mu - cap)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let (_, trace) = infeasible
                .into_iter()
                .min_by(|x, y| violation(&x.1).total_cmp(&violation(&y.1)))
                .expect("at least one restart");
            return Err(Error::Infeasible {
                restarts: opts.restarts,
                residual: trace.final_residual(),
                trace: Box::new(trace),
            });
        }
    };
    best.1.warnings.extend(warning);
    Ok(best)
}

fn run_restarts(a: &Tensor3, opts: &SolverOptions) -> Result<Vec<(CpModel, SolveTrace)>> {
    let norm = frobenius_norm(a);
    (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(opts.seed, k as u64);
            let (model, mut trace) = engine::run(a, norm, opts, seed)?;
            trace.restart = k;
            Ok((model, trace))
        })
        .collect()
}
