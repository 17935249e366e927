//! Dense complex order-3 tensors and CP models.
//!
//! Entries are stored row-major with `i` slowest and `k` fastest, which is
//! also the on-disk order of the `.ct3` format.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Columns with norm below this are rejected when building a [`CpModel`].
pub const MIN_COLUMN_NORM: f64 = 1e-300;

/// Tolerance on the unit-norm invariant of model columns.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![C64::new(0.0, 0.0); dims.0 * dims.1 * dims.2],
        })
    }

    /// Builds a tensor from entries in storage order.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<C64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{}x{}x{} tensor needs {expected} entries, got {}",
                dims.0,
                dims.1,
                dims.2,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {pos} is {}", data[pos])));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Result<Self> {
        check_dims(dims)?;
        let (l, m, n) = dims;
        let mut data = Vec::with_capacity(l * m * n);
        for i in 0..l {
            for j in 0..m {
                for k in 0..n {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_vec(dims, data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[self.index(i, j, k)]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scale(&self, s: C64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        same_dims(self, other)?;
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        same_dims(self, other)?;
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Applies `perm` to the indices of one mode: entry `(.., p, ..)` of the
    /// result is entry `(.., perm[p], ..)` of `self`.
    pub fn permute_mode(&self, mode: usize, perm: &[usize]) -> Result<Tensor3> {
        let (l, m, n) = self.dims;
        let len = [l, m, n][mode.min(2)];
        if mode > 2 || perm.len() != len {
            return Err(Error::Dimension(format!(
                "permutation of length {} does not fit mode {mode}",
                perm.len()
            )));
        }
        Tensor3::from_fn(self.dims, |i, j, k| match mode {
            0 => self.get(perm[i], j, k),
            1 => self.get(i, perm[j], k),
            _ => self.get(i, j, perm[k]),
        })
    }
}

fn check_dims(dims: (usize, usize, usize)) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::Dimension(format!(
            "tensor dimensions must be positive, got {}x{}x{}",
            dims.0, dims.1, dims.2
        )));
    }
    Ok(())
}

fn same_dims(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::Dimension(format!(
            "tensor dims differ: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// Rank-one tensor `u ⊗ v ⊗ w` with entries `u_i v_j w_k`.
pub fn outer3(u: &[C64], v: &[C64], w: &[C64]) -> Result<Tensor3> {
    if u.is_empty() || v.is_empty() || w.is_empty() {
        return Err(Error::Dimension(format!(
            "outer product needs nonempty vectors, got lengths {}, {}, {}",
            u.len(),
            v.len(),
            w.len()
        )));
    }
    Tensor3::from_fn((u.len(), v.len(), w.len()), |i, j, k| u[i] * v[j] * w[k])
}

pub fn frobenius_norm(a: &Tensor3) -> f64 {
    a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨A, B⟩ = Σ a_ijk · conj(b_ijk)`; conjugate-linear in the second argument.
pub fn frobenius_inner(a: &Tensor3, b: &Tensor3) -> Result<C64> {
    same_dims(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y.conj()).sum())
}

/// Weights and unit-column factor matrices of `Σ_p λ_p u_p ⊗ v_p ⊗ w_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    lambda: Vec<C64>,
    factors: [DMatrix<C64>; 3],
}

impl CpModel {
    /// Builds a model, rescaling every factor column to unit norm and
    /// folding the norms into the corresponding weight.
    pub fn new(
        lambda: Vec<C64>,
        u: DMatrix<C64>,
        v: DMatrix<C64>,
        w: DMatrix<C64>,
    ) -> Result<Self> {
        let r = lambda.len();
        if r == 0 {
            return Err(Error::Dimension("a CP model needs at least one term".into()));
        }
        for (name, f) in [("U", &u), ("V", &v), ("W", &w)] {
            if f.ncols() != r {
                return Err(Error::Dimension(format!(
                    "factor {name} has {} columns, expected {r}",
                    f.ncols()
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::Dimension(format!("factor {name} has no rows")));
            }
            if f.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(format!("factor {name} has non-finite entries")));
            }
        }
        if lambda.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("model weights".into()));
        }
        let mut lambda = lambda;
        let mut factors = [u, v, w];
        for (mode, f) in factors.iter_mut().enumerate() {
            for p in 0..r {
                let norm = f.column(p).norm();
                if !(norm >= MIN_COLUMN_NORM) {
                    return Err(Error::Domain(format!(
                        "column {p} of mode {mode} has norm {norm:e}, cannot normalize"
                    )));
                }
                // columns already unit to rounding are kept bit-for-bit so
                // that write-then-read is a fixed point
                if (norm - 1.0).abs() > 8.0 * f64::EPSILON {
                    f.column_mut(p).unscale_mut(norm);
                    lambda[p] *= norm;
                }
            }
        }
        Ok(Self { lambda, factors })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        )
    }

    pub fn lambda(&self) -> &[C64] {
        &self.lambda
    }

    pub fn u(&self) -> &DMatrix<C64> {
        &self.factors[0]
    }

    pub fn v(&self) -> &DMatrix<C64> {
        &self.factors[1]
    }

    pub fn w(&self) -> &DMatrix<C64> {
        &self.factors[2]
    }

    pub fn factor(&self, mode: usize) -> &DMatrix<C64> {
        &self.factors[mode]
    }

    pub fn factors(&self) -> &[DMatrix<C64>; 3] {
        &self.factors
    }

    pub fn max_abs_lambda(&self) -> f64 {
        self.lambda.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Same model with weights replaced.
    pub fn with_lambda(&self, lambda: Vec<C64>) -> Result<Self> {
        if lambda.len() != self.rank() {
            return Err(Error::Dimension(format!(
                "expected {} weights, got {}",
                self.rank(),
                lambda.len()
            )));
        }
        Ok(Self {
            lambda,
            factors: self.factors.clone(),
        })
    }

    /// Reorders the terms: term `p` of the result is term `order[p]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if order.len() != r || order.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Domain(format!("{order:?} is not a permutation of 0..{r}")));
        }
        let pick = |f: &DMatrix<C64>| DMatrix::from_fn(f.nrows(), r, |i, p| f[(i, order[p])]);
        Ok(Self {
            lambda: order.iter().map(|&p| self.lambda[p]).collect(),
            factors: [
                pick(&self.factors[0]),
                pick(&self.factors[1]),
                pick(&self.factors[2]),
            ],
        })
    }

    /// Multiplies term `p`'s columns by unit phases; the weight is left alone.
    pub fn with_phases(&self, p: usize, phases: [f64; 3]) -> Self {
        let mut out = self.clone();
        for (mode, theta) in phases.iter().enumerate() {
            let z = C64::from_polar(1.0, *theta);
            for x in out.factors[mode].column_mut(p).iter_mut() {
                *x *= z;
            }
        }
        out
    }
}

/// `Σ_p λ_p u_p ⊗ v_p ⊗ w_p` as a dense tensor of the given dims.
pub fn cp_evaluate(model: &CpModel, dims: (usize, usize, usize)) -> Result<Tensor3> {
    if model.dims() != dims {
        return Err(Error::Dimension(format!(
            "model factors have row dims {:?}, tensor dims are {:?}",
            model.dims(),
            dims
        )));
    }
    let (u, v, w) = (model.u(), model.v(), model.w());
    let r = model.rank();
    let (l, m, n) = dims;
    let mut data = vec![C64::new(0.0, 0.0); l * m * n];
    for p in 0..r {
        let lam = model.lambda[p];
        for i in 0..l {
            let a = lam * u[(i, p)];
            for j in 0..m {
                let b = a * v[(j, p)];
                let row = (i * m + j) * n;
                for k in 0..n {
                    data[row + k] += b * w[(k, p)];
                }
            }
        }
    }
    Tensor3::from_vec(dims, data)
}

/// `‖A − cp_evaluate(M)‖_F`.
pub fn residual(a: &Tensor3, model: &CpModel) -> Result<f64> {
    let approx = cp_evaluate(model, a.dims())?;
    Ok(a
        .data
        .iter()
        .zip(&approx.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}
