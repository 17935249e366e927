//! Coherence-constrained CP decomposition of multiarray sensor tensors.
//!
//! The crate covers the whole path from a physical array scenario to
//! recovered sources:
//!
//! * [`array`] synthesizes measurement tensors `s_ij(k)` from sensors,
//!   translated subarrays and narrowband sources;
//! * [`solver`] fits rank-r CP models by alternating least squares, with
//!   optional per-mode coherence caps;
//! * [`coherence`] and [`certificate`] evaluate coherence, spark, Kruskal
//!   rank and the existence/uniqueness conditions built on them;
//! * [`recovery`] turns factors back into directions and waveforms;
//! * [`degeneracy`] builds the classic rank-3 tensor with border rank 2 and
//!   shows how coherence caps restore a best approximation.

pub mod array;
pub mod certificate;
pub mod coherence;
pub mod degeneracy;
pub mod error;
pub mod io;
pub mod recovery;
mod linalg;
pub mod solver;
pub mod tensor;

pub use certificate::{certify_model, Certificate, Check, CheckName};
pub use coherence::{coherence, krank, spark, ColumnSet, CoherenceReport, Spark};
pub use error::{Error, Result};
pub use solver::{
    align_models, als_decompose, constrained_decompose, Alignment, SolveStatus, SolveTrace,
    SolverOptions,
};
pub use tensor::{cp_evaluate, frobenius_inner, frobenius_norm, outer3, residual, CpModel, Tensor3, C64};
pub use array::{synthesize, ArrayScenario, GroundTruth, Range, ScenarioConfig, Source};
pub use degeneracy::{demo_degeneracy, dsl_limit, dsl_sequence, DslInstance};
pub use recovery::{estimate_directions, extract_waveforms, localize, RecoveryResult};
