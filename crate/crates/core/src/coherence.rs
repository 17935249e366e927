//! Coherence, spark, Kruskal rank and girth of finite collections of unit
//! vectors.
//!
//! Coherence is a cheap pairwise maximum. Spark is computed by exhaustive
//! subset search in order of increasing subset size, so it is limited to
//! [`MAX_SPARK_COLUMNS`] columns; [`spark_coherence_bounds`] gives a lower
//! bound usable at any size.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_inner, singular_values};
use crate::tensor::{C64, UNIT_TOL};

/// Largest collection accepted by the exhaustive spark search.
pub const MAX_SPARK_COLUMNS: usize = 24;

/// Default relative singular-value threshold for calling a subset dependent.
pub const DEFAULT_DEPENDENCE_TOL: f64 = 1e-9;

/// Cardinality of the smallest dependent subset, or `Infinite` when the
/// whole collection is independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Spark {
    Finite(usize),
    Infinite,
}

impl Spark {
    pub fn is_infinite(self) -> bool {
        matches!(self, Spark::Infinite)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Spark::Finite(s) => s as f64,
            Spark::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Spark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spark::Finite(s) => write!(f, "{s}"),
            Spark::Infinite => f.write_str("INFINITE"),
        }
    }
}

/// `r` unit vectors of length `m`, stored as the columns of an `m × r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSet {
    cols: DMatrix<C64>,
}

impl ColumnSet {
    /// Wraps `cols`, requiring every column to have unit norm.
    pub fn new(cols: DMatrix<C64>) -> Result<Self> {
        if cols.nrows() == 0 || cols.ncols() == 0 {
            return Err(Error::Dimension("column set must be nonempty".into()));
        }
        for (p, c) in cols.column_iter().enumerate() {
            let n = c.norm();
            if !((n - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::Invariant(format!(
                    "column {p} has norm {n:.17}, expected 1"
                )));
            }
        }
        Ok(Self { cols })
    }

    /// Rescales every column to unit norm; zero columns are rejected.
    pub fn normalized(mut cols: DMatrix<C64>) -> Result<Self> {
        for (p, mut c) in cols.column_iter_mut().enumerate() {
            let n = c.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Domain(format!("column {p} cannot be normalized (norm {n})")));
            }
            c.unscale_mut(n);
        }
        Self::new(cols)
    }

    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let m = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::Dimension("columns have different lengths".into()));
        }
        Self::new(DMatrix::from_fn(m, columns.len(), |i, p| columns[p][i]))
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn count(&self) -> usize {
        self.cols.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.cols
    }

    fn subset(&self, mask: u32) -> DMatrix<C64> {
        let idx: Vec<usize> = (0..self.count()).filter(|p| mask >> p & 1 == 1).collect();
        self.cols.select_columns(&idx)
    }
}

/// `μ(V) = max_{p≠q} |⟨v_p, v_q⟩|`, zero for a single column.
pub fn coherence(v: &ColumnSet) -> f64 {
    coherence_of_columns(v.matrix())
}

/// Coherence of the columns of `m`, which are assumed to be unit vectors.
pub fn coherence_of_columns(m: &DMatrix<C64>) -> f64 {
    let r = m.ncols();
    let mut mu: f64 = 0.0;
    for p in 0..r {
        for q in p + 1..r {
            mu = mu.max(column_inner(m, p, m, q).norm());
        }
    }
    mu.min(1.0)
}

fn is_dependent(sub: &DMatrix<C64>, tol: f64) -> bool {
    if sub.ncols() > sub.nrows() {
        return true;
    }
    let s = singular_values(sub);
    let (max, min) = (s[0], *s.last().unwrap());
    min <= tol * max
}

fn check_capacity(v: &ColumnSet) -> Result<()> {
    if v.count() > MAX_SPARK_COLUMNS {
        return Err(Error::Capacity(format!(
            "exhaustive spark search is limited to {MAX_SPARK_COLUMNS} columns, got {}; \
             use spark_coherence_bounds, which lower-bounds krank by 1/μ",
            v.count()
        )));
    }
    Ok(())
}

/// All `width`-bit masks with exactly `k` bits set, in increasing order.
fn masks_with_popcount(width: usize, k: usize) -> Vec<u32> {
    let mut out = Vec::new();
    if k == 0 || k > width {
        return out;
    }
    let limit: u64 = 1 << width;
    let mut x: u64 = (1 << k) - 1;
    while x < limit {
        out.push(x as u32);
        // Gosper's hack: next integer with the same popcount.
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

/// Spark together with the lexicographically first smallest dependent
/// subset (column indices), if any.
pub fn spark_with_witness(v: &ColumnSet, tol: f64) -> Result<(Spark, Option<Vec<usize>>)> {
    check_capacity(v)?;
    let (m, r) = (v.dim(), v.count());
    let full: u32 = if r == 32 { u32::MAX } else { (1u32 << r) - 1 };
    if r <= m && !is_dependent(v.matrix(), tol) {
        return Ok((Spark::Infinite, None));
    }
    let to_indices = |mask: u32| (0..r).filter(|p| mask >> p & 1 == 1).collect::<Vec<_>>();
    // Unit vectors are nonzero, so the smallest possible circuit has two elements.
    for s in 2..=r.min(m) {
        let masks = masks_with_popcount(r, s);
        if let Some(mask) = masks
            .par_iter()
            .copied()
            .find_first(|&mask| is_dependent(&v.subset(mask), tol))
        {
            return Ok((Spark::Finite(s), Some(to_indices(mask))));
        }
    }
    // Every (m+1)-subset of C^m is dependent.
    debug_assert!(r > m);
    let first = full & ((1u32 << (m + 1)) - 1);
    Ok((Spark::Finite(m + 1), Some(to_indices(first))))
}

pub fn spark(v: &ColumnSet, tol: f64) -> Result<Spark> {
    spark_with_witness(v, tol).map(|(s, _)| s)
}

/// Largest `k` such that every `k`-subset is independent.
pub fn krank(v: &ColumnSet, tol: f64) -> Result<usize> {
    Ok(match spark(v, tol)? {
        Spark::Finite(s) => s - 1,
        Spark::Infinite => v.count(),
    })
}

/// Lower bounds `spark ≥ 1 + 1/μ` and `krank ≥ 1/μ`; both infinite when μ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceBounds {
    pub spark_lb: f64,
    pub krank_lb: f64,
}

pub fn spark_coherence_bounds(v: &ColumnSet) -> CoherenceBounds {
    bounds_from_mu(coherence(v))
}

pub fn bounds_from_mu(mu: f64) -> CoherenceBounds {
    if mu <= 0.0 {
        return CoherenceBounds {
            spark_lb: f64::INFINITY,
            krank_lb: f64::INFINITY,
        };
    }
    CoherenceBounds {
        spark_lb: 1.0 + 1.0 / mu,
        krank_lb: 1.0 / mu,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mu: f64,
    pub spark: Spark,
    pub krank: usize,
    /// Girth of the vector matroid; always equal to `spark`.
    pub girth: Spark,
    pub witness: Option<Vec<usize>>,
}

pub fn coherence_report(v: &ColumnSet, tol: f64) -> Result<CoherenceReport> {
    let (spark, witness) = spark_with_witness(v, tol)?;
    let krank = match spark {
        Spark::Finite(s) => s - 1,
        Spark::Infinite => v.count(),
    };
    Ok(CoherenceReport {
        mu: coherence(v),
        spark,
        krank,
        girth: spark,
        witness,
    })
}
