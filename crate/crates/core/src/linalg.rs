//! Small dense helpers shared by the solver and the metrics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::C64;

/// `⟨a, b⟩ = Σ a_i conj(b_i)`.
pub(crate) fn inner<'a>(
    a: impl IntoIterator<Item = &'a C64>,
    b: impl IntoIterator<Item = &'a C64>,
) -> C64 {
    a.into_iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub(crate) fn column_inner(a: &DMatrix<C64>, p: usize, b: &DMatrix<C64>, q: usize) -> C64 {
    inner(a.column(p).iter(), b.column(q).iter())
}

/// Singular values, largest first.
pub(crate) fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Moore–Penrose pseudo-inverse, discarding singular values below
/// `rel_tol · σ_max`.
pub(crate) fn pinv(m: &DMatrix<C64>, rel_tol: f64) -> DMatrix<C64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Circular complex Gaussian with unit variance, `E|z|² = 1`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Columns drawn uniformly on the complex unit sphere.
pub(crate) fn random_unit_columns<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> DMatrix<C64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng));
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c.unscale_mut(n);
        } else {
            c[0] = C64::new(1.0, 0.0);
        }
    }
    m
}

/// Independent per-stream seed derived from a master seed (splitmix64).
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
