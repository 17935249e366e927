//! Source directions and waveforms from an identified CP model.
//!
//! The subarray factor `v_p` carries `exp(i ω/c Δ_jᵀd_p)` up to a common
//! phase, so referencing every entry to the first (untranslated) subarray
//! gives phases that are linear in `d_p`. The temporal factor scaled by its
//! weight is the waveform estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::array::{dot, norm3, GroundTruth, Vec3};
use crate::error::{Error, Result};
use crate::solver::align_models;
use crate::tensor::{CpModel, C64};

/// Relative singular-value threshold deciding the span of the translations.
const SPAN_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DirectionFlag {
    /// Translations span fewer than three dimensions.
    Unresolved,
    /// Some translation is long enough to wrap the phase.
    Aliased,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionEstimate {
    /// Unit direction, present only when the translations span 3D.
    pub direction: Option<Vec3>,
    /// Minimum-norm least-squares solution of `Δᵀd = phase·c/ω`; it lies in
    /// the span of the translations.
    pub in_span: Vec3,
    pub span_rank: usize,
    pub flags: Vec<DirectionFlag>,
}

/// Per-term direction estimates from the subarray factor `V`.
pub fn estimate_directions(
    model: &CpModel,
    translations: &[Vec3],
    omega: f64,
    celerity: f64,
) -> Result<Vec<DirectionEstimate>> {
    if !(omega > 0.0 && omega.is_finite() && celerity > 0.0 && celerity.is_finite()) {
        return Err(Error::Domain(format!(
            "pulsation and celerity must be positive, got ω = {omega}, c = {celerity}"
        )));
    }
    let m = translations.len();
    if m != model.v().nrows() {
        return Err(Error::Dimension(format!(
            "{m} translations for a subarray factor with {} rows",
            model.v().nrows()
        )));
    }
    if m == 0 || norm3(&translations[0]) > 1e-12 {
        return Err(Error::Domain("the first translation must be zero (reference subarray)".into()));
    }
    let k = omega / celerity;
    let delta = DMatrix::from_fn(m, 3, |j, c| translations[j][c]);
    let svd = delta.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let span_rank = svd.singular_values.iter().filter(|&&s| s > SPAN_RTOL * smax).count();
    let pinv = if smax > 0.0 {
        svd.pseudo_inverse(SPAN_RTOL * smax).map_err(|e| Error::Invariant(e.to_string()))?
    } else {
        DMatrix::zeros(3, m)
    };
    let aliased = translations.iter().any(|t| norm3(t) * k >= std::f64::consts::PI);

    let v = model.v();
    Ok((0..model.rank())
        .map(|p| {
            let reference = v[(0, p)].conj();
            let y = nalgebra::DVector::from_fn(m, |j, _| (v[(j, p)] * reference).arg() / k);
            let x = &pinv * y;
            let in_span = [x[0], x[1], x[2]];
            let len = norm3(&in_span);
            let mut flags = Vec::new();
            let direction = if span_rank == 3 && len > 0.0 {
                Some(in_span.map(|c| c / len))
            } else {
                flags.push(DirectionFlag::Unresolved);
                None
            };
            if aliased {
                flags.push(DirectionFlag::Aliased);
            }
            DirectionEstimate {
                direction,
                in_span,
                span_rank,
                flags,
            }
        })
        .collect())
}

/// Angle between two unit vectors in degrees.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos().to_degrees()
}

fn l2(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn pairs<S: Serializer>(z: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(z.iter().map(|c| [c.re, c.im]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceEstimate {
    /// Model term this source was read from.
    pub term: usize,
    pub direction: Option<Vec3>,
    pub direction_error_deg: Option<f64>,
    pub flags: Vec<DirectionFlag>,
    #[serde(serialize_with = "pairs")]
    pub waveform: Vec<C64>,
    /// `|⟨σ̂, σ⟩| / (‖σ̂‖‖σ‖)` against the matched true envelope.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub sources: Vec<SourceEstimate>,
    /// `permutation[q]` is the model term matched to true source `q`.
    pub permutation: Option<Vec<usize>>,
}

/// Waveforms `λ_p w_p`, ordered and phase-matched to `truth` when given.
pub fn extract_waveforms(model: &CpModel, truth: Option<&GroundTruth>) -> Result<RecoveryResult> {
    let r = model.rank();
    let permutation = truth.map(|t| align_models(model, &t.model)).transpose()?.map(|a| a.permutation);
    let order: Vec<usize> = permutation.clone().unwrap_or_else(|| (0..r).collect());
    let w = model.w();
    let sources = order
        .iter()
        .enumerate()
        .map(|(q, &p)| {
            let mut waveform: Vec<C64> = w.column(p).iter().map(|z| z * model.lambda()[p]).collect();
            let rho = truth.map(|t| {
                let sigma: Vec<C64> = t.model.w().column(q).iter().map(|z| z * t.model.lambda()[q]).collect();
                // ⟨σ̂, σ⟩ = Σ σ̂ conj(σ)
                let inner: C64 = waveform.iter().zip(&sigma).map(|(a, b)| a * b.conj()).sum();
                let denom = l2(&waveform) * l2(&sigma);
                if inner.norm() > 0.0 {
                    let rot = (inner / inner.norm()).conj();
                    waveform.iter_mut().for_each(|z| *z *= rot);
                }
                if denom > 0.0 {
                    (inner.norm() / denom).min(1.0)
                } else {
                    0.0
                }
            });
            SourceEstimate {
                term: p,
                direction: None,
                direction_error_deg: None,
                flags: Vec::new(),
                waveform,
                rho,
            }
        })
        .collect();
    Ok(RecoveryResult { sources, permutation })
}

/// Directions and waveforms together; direction errors need `truth`.
pub fn localize(
    model: &CpModel,
    translations: &[Vec3],
    omega: f64,
    celerity: f64,
    truth: Option<&GroundTruth>,
) -> Result<RecoveryResult> {
    let dirs = estimate_directions(model, translations, omega, celerity)?;
    let mut result = extract_waveforms(model, truth)?;
    for (q, src) in result.sources.iter_mut().enumerate() {
        let est = &dirs[src.term];
        src.direction = est.direction;
        src.flags = est.flags.clone();
        src.direction_error_deg = match (truth, est.direction) {
            (Some(t), Some(d)) => Some(angle_deg(&d, &t.directions[q])),
            _ => None,
        };
    }
    Ok(result)
}
