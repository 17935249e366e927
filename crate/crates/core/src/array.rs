//! Narrowband multiarray signal model.
//!
//! A reference subarray of `l` sensors at positions `b_i` is replicated by
//! `m` translations `Δ_j` (with `Δ_1 = 0`). Each of `r` sources has a
//! direction `d_p`, a range `R_p` (or far field) and a complex envelope
//! `σ_p(k)` over `n` snapshots. The measurement is
//!
//! ```text
//! s_ij(k) = Σ_p ε_i(θ_p) · φ(j, p) · σ_p(k)
//! ε_i(θ_p) = exp(i ω/c (b_iᵀd_p − ‖b_i ∧ d_p‖² / 2R_p))
//! φ(j, p)  = exp(i ω/c Δ_jᵀd_p)
//! ```
//!
//! which is exactly a rank-r CP model once the three factors are normalized.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::coherence::coherence_of_columns;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, derive_seed};
use crate::tensor::{frobenius_norm, CpModel, Tensor3, C64};
use nalgebra::DMatrix;

pub type Vec3 = [f64; 3];

const UNIT_DIRECTION_TOL: f64 = 1e-12;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500;

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Source distance from the origin, or far field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    FarField,
    Finite(f64),
}

impl Serialize for Range {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Range::FarField => s.serialize_str("farfield"),
            Range::Finite(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Range {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(Range::Finite(r)),
            Raw::Str(s) if s.eq_ignore_ascii_case("farfield") => Ok(Range::FarField),
            Raw::Str(s) => Err(de::Error::custom(format!("range must be a number or \"farfield\", got {s:?}"))),
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::FarField => f.write_str("farfield"),
            Range::Finite(r) => write!(f, "{r}"),
        }
    }
}

/// Sensor response `exp(i ω/c (bᵀd − ‖b ∧ d‖² / 2R))`; the curvature term
/// is dropped in the far field.
pub fn steering(b: &Vec3, d: &Vec3, range: Range, omega: f64, celerity: f64) -> Result<C64> {
    check_wave(omega, celerity)?;
    let k = omega / celerity;
    let curvature = match range {
        Range::FarField => 0.0,
        Range::Finite(r) if r > 0.0 && r.is_finite() => {
            let w = cross(b, d);
            dot(&w, &w) / (2.0 * r)
        }
        Range::Finite(r) => return Err(Error::Domain(format!("source range must be positive, got {r}"))),
    };
    Ok(C64::from_polar(1.0, k * (dot(b, d) - curvature)))
}

/// Gain `exp(i ω/c Δᵀd)` of the subarray translated by `Δ`.
pub fn subarray_gain(delta: &Vec3, d: &Vec3, omega: f64, celerity: f64) -> Result<C64> {
    check_wave(omega, celerity)?;
    Ok(C64::from_polar(1.0, omega / celerity * dot(delta, d)))
}

fn check_wave(omega: f64, celerity: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite() && celerity > 0.0 && celerity.is_finite()) {
        return Err(Error::Domain(format!(
            "pulsation and celerity must be positive, got ω = {omega}, c = {celerity}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub direction: Vec3,
    pub range: Range,
    pub envelope: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayScenario {
    pub sensors: Vec<Vec3>,
    pub translations: Vec<Vec3>,
    pub omega: f64,
    pub celerity: f64,
    pub sources: Vec<Source>,
}

impl ArrayScenario {
    /// `(l, m, n)`: sensors per subarray, subarrays, snapshots.
    pub fn dims(&self) -> (usize, usize, usize) {
        let n = self.sources.first().map_or(0, |s| s.envelope.len());
        (self.sensors.len(), self.translations.len(), n)
    }

    pub fn validate(&self) -> Result<()> {
        check_wave(self.omega, self.celerity)?;
        let (l, m, n) = self.dims();
        if l == 0 || m == 0 || n == 0 || self.sources.is_empty() {
            return Err(Error::Domain(format!(
                "scenario needs sensors, translations, sources and snapshots (got l={l}, m={m}, n={n}, r={})",
                self.sources.len()
            )));
        }
        if norm3(&self.translations[0]) > UNIT_DIRECTION_TOL {
            return Err(Error::Domain("the first translation must be zero (reference subarray)".into()));
        }
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !self.sensors.iter().chain(&self.translations).all(finite) {
            return Err(Error::Domain("sensor positions and translations must be finite".into()));
        }
        for (p, s) in self.sources.iter().enumerate() {
            if !((norm3(&s.direction) - 1.0).abs() <= UNIT_DIRECTION_TOL) {
                return Err(Error::Domain(format!("direction of source {p} is not a unit vector")));
            }
            if let Range::Finite(r) = s.range {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::Domain(format!("range of source {p} must be positive, got {r}")));
                }
            }
            if s.envelope.len() != n {
                return Err(Error::Domain(format!(
                    "source {p} has {} snapshots, source 0 has {n}",
                    s.envelope.len()
                )));
            }
            if s.envelope.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain(format!("envelope of source {p} is not finite")));
            }
            if s.envelope.iter().all(|z| z.norm_sqr() == 0.0) {
                return Err(Error::Domain(format!("envelope of source {p} is identically zero")));
            }
        }
        Ok(())
    }
}

/// Noiseless CP description of a synthesized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub model: CpModel,
    /// `[μ(U), μ(V), μ(W)]` of the normalized factors.
    pub mu: [f64; 3],
    pub directions: Vec<Vec3>,
}

/// Builds the measurement tensor and its ground-truth model. With
/// `snr_db`, circular white Gaussian noise is added and rescaled so the
/// realized signal-to-noise ratio is exactly `snr_db`.
pub fn synthesize(scn: &ArrayScenario, snr_db: Option<f64>, seed: u64) -> Result<(Tensor3, GroundTruth)> {
    scn.validate()?;
    let (l, m, n) = scn.dims();
    let r = scn.sources.len();
    let mut u = DMatrix::zeros(l, r);
    let mut v = DMatrix::zeros(m, r);
    let mut w = DMatrix::zeros(n, r);
    for (p, s) in scn.sources.iter().enumerate() {
        for (i, b) in scn.sensors.iter().enumerate() {
            u[(i, p)] = steering(b, &s.direction, s.range, scn.omega, scn.celerity)?;
        }
        for (j, delta) in scn.translations.iter().enumerate() {
            v[(j, p)] = subarray_gain(delta, &s.direction, scn.omega, scn.celerity)?;
        }
        for (k, z) in s.envelope.iter().enumerate() {
            w[(k, p)] = *z;
        }
    }
    let model = CpModel::new(vec![C64::new(1.0, 0.0); r], u, v, w)?;
    let clean = crate::tensor::cp_evaluate(&model, (l, m, n))?;
    let tensor = match snr_db {
        None => clean,
        Some(snr) => {
            if !snr.is_finite() {
                return Err(Error::Domain(format!("SNR must be finite, got {snr}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM));
            let noise = Tensor3::from_fn((l, m, n), |_, _, _| complex_gaussian(&mut rng))?;
            let target = frobenius_norm(&clean) * 10f64.powf(-snr / 20.0);
            let scale = target / frobenius_norm(&noise);
            clean.add(&noise.scale(C64::new(scale, 0.0)))?
        }
    };
    let mu = [
        coherence_of_columns(model.u()),
        coherence_of_columns(model.v()),
        coherence_of_columns(model.w()),
    ];
    Ok((
        tensor,
        GroundTruth {
            model,
            mu,
            directions: scn.sources.iter().map(|s| s.direction).collect(),
        },
    ))
}

/// Unit-variance circular Gaussian envelope.
pub fn gaussian_envelope(seed: u64, n: usize, amplitude: f64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| complex_gaussian(&mut rng) * amplitude).collect()
}

/// `amplitude · exp(i (2π f k + phase))`, `f` in cycles per snapshot.
pub fn sinusoid_envelope(n: usize, amplitude: f64, frequency: f64, phase: f64) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(amplitude, std::f64::consts::TAU * frequency * k as f64 + phase))
        .collect()
}

fn one() -> f64 {
    1.0
}

/// How a source envelope is produced from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeSpec {
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Sinusoid {
        #[serde(default = "one")]
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Explicit {
        samples: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub direction: Vec3,
    pub range: Range,
    pub envelope: EnvelopeSpec,
}

/// Scenario file contents; gaussian envelopes are drawn when realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sensors: Vec<Vec3>,
    pub translations: Vec<Vec3>,
    pub omega: f64,
    pub celerity: f64,
    pub sources: Vec<SourceConfig>,
    pub snapshots: usize,
}

impl ScenarioConfig {
    /// Materializes envelopes; source `p` draws from its own seeded stream.
    pub fn realize(&self, seed: u64) -> Result<ArrayScenario> {
        let n = self.snapshots;
        let sources = self
            .sources
            .iter()
            .enumerate()
            .map(|(p, s)| {
                let envelope = match &s.envelope {
                    EnvelopeSpec::Gaussian { amplitude } => {
                        gaussian_envelope(derive_seed(seed, p as u64), n, *amplitude)
                    }
                    EnvelopeSpec::Sinusoid { amplitude, frequency, phase } => {
                        sinusoid_envelope(n, *amplitude, *frequency, *phase)
                    }
                    EnvelopeSpec::Explicit { samples } => {
                        if samples.len() != n {
                            return Err(Error::Domain(format!(
                                "explicit envelope of source {p} has {} samples, snapshots = {n}",
                                samples.len()
                            )));
                        }
                        samples.iter().map(|[re, im]| C64::new(*re, *im)).collect()
                    }
                };
                Ok(Source {
                    direction: s.direction,
                    range: s.range,
                    envelope,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scn = ArrayScenario {
            sensors: self.sensors.clone(),
            translations: self.translations.clone(),
            omega: self.omega,
            celerity: self.celerity,
            sources,
        };
        scn.validate()?;
        Ok(scn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cp_evaluate, frobenius_norm};
    use std::f64::consts::PI;

    const X: Vec3 = [1.0, 0.0, 0.0];
    const Y: Vec3 = [0.0, 1.0, 0.0];

    #[test]
    fn steering_examples() {
        let z = steering(&Y, &X, Range::FarField, 1.0, 1.0).unwrap();
        assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);

        let z = steering(&X, &X, Range::FarField, 2.0, 2.0).unwrap();
        assert!((z.re - 1f64.cos()).abs() < 1e-15 && (z.im - 1f64.sin()).abs() < 1e-15);
        assert!((z.re - 0.5403).abs() < 1e-4 && (z.im - 0.8415).abs() < 1e-4);

        let z = steering(&Y, &X, Range::Finite(1.0), 1.0, 1.0).unwrap();
        assert!((z - C64::from_polar(1.0, -0.5)).norm() < 1e-15);
        assert!((z.re - 0.8776).abs() < 1e-4 && (z.im + 0.4794).abs() < 1e-4);

        assert!(steering(&Y, &X, Range::Finite(0.0), 1.0, 1.0).is_err());
        assert!(steering(&Y, &X, Range::FarField, 0.0, 1.0).is_err());
    }

    #[test]
    fn subarray_gain_examples() {
        assert_eq!(subarray_gain(&[0.0; 3], &X, 3.0, 1.0).unwrap(), C64::new(1.0, 0.0));
        assert!((subarray_gain(&Y, &X, 3.0, 1.0).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
        let z = subarray_gain(&X, &X, PI, 1.0).unwrap();
        assert!((z - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn far_field_is_the_large_range_limit() {
        let b = [0.3, -0.7, 0.2];
        let d = [0.6, 0.0, 0.8];
        let far = steering(&b, &d, Range::FarField, 1.0, 1.0).unwrap();
        let near = steering(&b, &d, Range::Finite(1e12), 1.0, 1.0).unwrap();
        assert!((far.arg() - near.arg()).abs() < 1e-9);
    }

    #[test]
    fn single_sensor_all_ones() {
        let scn = ArrayScenario {
            sensors: vec![[0.0; 3]],
            translations: vec![[0.0; 3]],
            omega: 1.0,
            celerity: 1.0,
            sources: vec![Source {
                direction: X,
                range: Range::FarField,
                envelope: vec![C64::new(1.0, 0.0); 3],
            }],
        };
        let (t, truth) = synthesize(&scn, None, 0).unwrap();
        assert_eq!(t.dims(), (1, 1, 3));
        assert!(t.as_slice().iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert!((truth.model.lambda()[0].re - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_envelope_rejected() {
        let scn = ArrayScenario {
            sensors: vec![[0.0; 3]],
            translations: vec![[0.0; 3]],
            omega: 1.0,
            celerity: 1.0,
            sources: vec![Source {
                direction: X,
                range: Range::FarField,
                envelope: vec![C64::new(0.0, 0.0); 3],
            }],
        };
        assert!(matches!(synthesize(&scn, None, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn nonzero_reference_translation_rejected() {
        let scn = ArrayScenario {
            sensors: vec![[0.0; 3]],
            translations: vec![[0.1, 0.0, 0.0]],
            omega: 1.0,
            celerity: 1.0,
            sources: vec![Source {
                direction: X,
                range: Range::FarField,
                envelope: vec![C64::new(1.0, 0.0)],
            }],
        };
        assert!(scn.validate().is_err());
    }

    #[test]
    fn noise_hits_requested_snr() {
        let scn = ArrayScenario {
            sensors: (0..4).map(|i| [0.5 * i as f64, 0.0, 0.0]).collect(),
            translations: vec![[0.0; 3], [0.0, 0.25, 0.0], [0.0, 0.0, 0.25]],
            omega: 2.0 * PI,
            celerity: 1.0,
            sources: vec![
                Source { direction: X, range: Range::FarField, envelope: gaussian_envelope(1, 8, 1.0) },
                Source { direction: Y, range: Range::FarField, envelope: gaussian_envelope(2, 8, 1.0) },
            ],
        };
        let (clean, truth) = synthesize(&scn, None, 5).unwrap();
        let (noisy, _) = synthesize(&scn, Some(40.0), 5).unwrap();
        let rel = frobenius_norm(&noisy.sub(&clean).unwrap()) / frobenius_norm(&clean);
        assert!((rel - 0.01).abs() < 0.2 * 0.01, "relative noise {rel}");
        let rebuilt = cp_evaluate(&truth.model, clean.dims()).unwrap();
        assert!(frobenius_norm(&rebuilt.sub(&clean).unwrap()) < 1e-12);
    }

    #[test]
    fn config_round_trip_and_range_parsing() {
        let json = r#"{
            "sensors": [[0,0,0],[0.5,0,0]],
            "translations": [[0,0,0],[0,0.25,0]],
            "omega": 6.283185307179586, "celerity": 1.0,
            "sources": [
                {"direction": [1,0,0], "range": "farfield", "envelope": {"kind": "gaussian"}},
                {"direction": [0,1,0], "range": 40.0,
                 "envelope": {"kind": "sinusoid", "frequency": 0.25}},
                {"direction": [0,0,1], "range": "farfield",
                 "envelope": {"kind": "explicit", "samples": [[1,0],[0,1],[1,1],[0,0]]}}
            ],
            "snapshots": 4
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.sources[1].range, Range::Finite(40.0));
        let scn = cfg.realize(11).unwrap();
        assert_eq!(scn.dims(), (2, 2, 4));
        assert_eq!(scn, cfg.realize(11).unwrap());
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<Range>("\"near\"").is_err());
    }
}
