use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::column_inner;
use crate::tensor::CpModel;

/// Correspondence between the terms of a model and a reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `permutation[q]` is the model term matched to reference term `q`.
    pub permutation: Vec<usize>,
    /// Per reference term, phases `(θ₁, θ₂, θ₃)` with `θ₁ + θ₂ + θ₃ ≡ 0`
    /// such that `e^{iθ_k}` times the reference column best matches the
    /// model column in each mode.
    pub phases: Vec<[f64; 3]>,
    /// Phase left over after enforcing the zero-sum constraint; it belongs
    /// to the weights.
    pub weight_phases: Vec<f64>,
    /// Per mode, the smallest `|⟨model column, reference column⟩|` over
    /// matched pairs.
    pub match_score: [f64; 3],
}

impl Alignment {
    pub fn score(&self) -> f64 {
        self.match_score.iter().copied().fold(1.0, f64::min)
    }
}

/// Greedy maximum matching on `Π_modes |⟨m_p, ref_q⟩|`. Ties go to the
/// smallest reference index, then the smallest model index.
pub fn align_models(model: &CpModel, reference: &CpModel) -> Result<Alignment> {
    let r = reference.rank();
    if model.rank() != r {
        return Err(Error::RankMismatch {
            model: model.rank(),
            reference: r,
        });
    }
    if model.dims() != reference.dims() {
        return Err(Error::Dimension(format!(
            "model dims {:?} differ from reference dims {:?}",
            model.dims(),
            reference.dims()
        )));
    }
    let abs_inner = |mode: usize, p: usize, q: usize| {
        column_inner(model.factor(mode), p, reference.factor(mode), q)
    };
    let mut score = vec![vec![0.0; r]; r];
    for (q, row) in score.iter_mut().enumerate() {
        for (p, s) in row.iter_mut().enumerate() {
            *s = (0..3).map(|mode| abs_inner(mode, p, q).norm()).product();
        }
    }

    let mut permutation = vec![usize::MAX; r];
    let mut model_taken = vec![false; r];
    for _ in 0..r {
        let mut best: Option<(usize, usize, f64)> = None;
        for q in (0..r).filter(|&q| permutation[q] == usize::MAX) {
            for p in (0..r).filter(|&p| !model_taken[p]) {
                if best.is_none_or(|(_, _, s)| score[q][p] > s) {
                    best = Some((q, p, score[q][p]));
                }
            }
        }
        let (q, p, _) = best.expect("unmatched pair remains");
        permutation[q] = p;
        model_taken[p] = true;
    }

    let mut phases = Vec::with_capacity(r);
    let mut weight_phases = Vec::with_capacity(r);
    let mut match_score = [1.0f64; 3];
    for (q, &p) in permutation.iter().enumerate() {
        let z: Vec<_> = (0..3).map(|mode| abs_inner(mode, p, q)).collect();
        for mode in 0..3 {
            match_score[mode] = match_score[mode].min(z[mode].norm().min(1.0));
        }
        let (t1, t2, t3) = (z[0].arg(), z[1].arg(), z[2].arg());
        phases.push([t1, t2, -t1 - t2]);
        weight_phases.push(wrap(t3 + t1 + t2));
    }
    Ok(Alignment {
        permutation,
        phases,
        weight_phases,
        match_score,
    })
}

fn wrap(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}
