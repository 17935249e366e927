//! One seeded ALS run. Each mode update solves the Khatri–Rao least-squares
//! problem through the pseudo-inverse of its Hadamard-product Gram matrix;
//! with coherence caps, the update is followed by descent steps on the fit
//! plus a quadratic hinge penalty on pairwise column inner products.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SolveStatus, SolveTrace, SolverOptions, TraceRecord, CAP_FEASIBILITY_TOL};
use crate::coherence::coherence_of_columns;
use crate::error::Result;
use crate::linalg::{pinv, random_unit_columns};
use crate::tensor::{residual, CpModel, Tensor3, C64};

const PINV_RTOL: f64 = 1e-12;
/// Residuals this far below ‖A‖ are an exact fit.
const EXACT_FIT: f64 = 1e-14;
/// The hinge starts this far below the cap so the penalized optimum lands
/// inside the feasible set.
const CAP_MARGIN: f64 = 1e-4;
const MAX_PENALTY_WEIGHT: f64 = 1e12;
const INNER_STEPS: usize = 25;

/// `M = A_(mode) · conj(K)`, the matricized tensor times Khatri–Rao product
/// of the other two factors.
fn mttkrp(a: &Tensor3, f: &[DMatrix<C64>; 3], mode: usize) -> DMatrix<C64> {
    let (l, m, n) = a.dims();
    let r = f[0].ncols();
    let rows = [l, m, n][mode];
    let mut out = DMatrix::zeros(rows, r);
    let data = a.as_slice();
    for p in 0..r {
        for i in 0..l {
            for j in 0..m {
                let base = (i * m + j) * n;
                for k in 0..n {
                    let x = data[base + k];
                    match mode {
                        0 => out[(i, p)] += x * (f[1][(j, p)] * f[2][(k, p)]).conj(),
                        1 => out[(j, p)] += x * (f[0][(i, p)] * f[2][(k, p)]).conj(),
                        _ => out[(k, p)] += x * (f[0][(i, p)] * f[1][(j, p)]).conj(),
                    }
                }
            }
        }
    }
    out
}

/// `H[p, q] = Σ_i f_ip · conj(f_iq)`.
fn gram(f: &DMatrix<C64>) -> DMatrix<C64> {
    f.transpose() * f.map(|z| z.conj())
}

fn mode_gram(f: &[DMatrix<C64>; 3], mode: usize) -> DMatrix<C64> {
    let (a, b) = match mode {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    gram(&f[a]).component_mul(&gram(&f[b]))
}

/// Least-squares weights for fixed unit factors.
fn fit_lambda(a: &Tensor3, f: &[DMatrix<C64>; 3]) -> Vec<C64> {
    let g = gram(&f[0]).component_mul(&gram(&f[1])).component_mul(&gram(&f[2]));
    // ⟨A, u_p⊗v_p⊗w_p⟩ is the mode-0 MTTKRP contracted with conj(u_p).
    let m = mttkrp(a, f, 0);
    let r = f[0].ncols();
    let b = nalgebra::DVector::from_fn(r, |p, _| {
        (0..f[0].nrows()).map(|i| m[(i, p)] * f[0][(i, p)].conj()).sum::<C64>()
    });
    let lam = pinv(&g.transpose(), PINV_RTOL) * b;
    lam.iter().copied().collect()
}

/// Splits `x` into unit columns and weights; a vanishing column keeps its
/// previous direction with zero weight.
fn normalize_into(x: &DMatrix<C64>, factor: &mut DMatrix<C64>, lambda: &mut [C64]) {
    for p in 0..x.ncols() {
        let norm = x.column(p).norm();
        if norm > 1e-300 && norm.is_finite() {
            factor.set_column(p, &(x.column(p) / C64::new(norm, 0.0)));
            lambda[p] = C64::new(norm, 0.0);
        } else {
            lambda[p] = C64::new(0.0, 0.0);
        }
    }
}

/// Hinge penalty `Σ_{p≠q} max(0, |⟨u_p,u_q⟩| − τ)²` on the normalized
/// columns of `x`, and its Wirtinger gradient with respect to `conj(x)`.
fn penalty(x: &DMatrix<C64>, tau: f64, with_grad: bool) -> (f64, Option<DMatrix<C64>>) {
    let r = x.ncols();
    let norms: Vec<f64> = (0..r).map(|p| x.column(p).norm().max(1e-300)).collect();
    let u = DMatrix::from_fn(x.nrows(), r, |i, p| x[(i, p)] / norms[p]);
    let mut value = 0.0;
    let mut gu = with_grad.then(|| DMatrix::<C64>::zeros(x.nrows(), r));
    for p in 0..r {
        for q in p + 1..r {
            // g = ⟨u_p, u_q⟩ = u_q^H u_p
            let g: C64 = u.column(q).dotc(&u.column(p));
            let mag = g.norm();
            let h = mag - tau;
            if h <= 0.0 {
                continue;
            }
            value += 2.0 * h * h;
            if let Some(gu) = gu.as_mut() {
                let phase = g / mag;
                let cp = u.column(q) * C64::new(2.0 * h, 0.0) * phase;
                let cq = u.column(p) * C64::new(2.0 * h, 0.0) * phase.conj();
                let mut col = gu.column_mut(p);
                col += cp;
                let mut col = gu.column_mut(q);
                col += cq;
            }
        }
    }
    let grad = gu.map(|gu| {
        // chain rule through u = x/‖x‖: project out the radial part
        let mut gx = DMatrix::zeros(x.nrows(), r);
        for p in 0..r {
            let up = u.column(p);
            let gp = gu.column(p);
            let radial = up.dotc(&gp);
            gx.set_column(p, &((gp - up * radial) / C64::new(norms[p], 0.0)));
        }
        gx
    });
    (value, grad)
}

struct ModeProblem<'a> {
    m: &'a DMatrix<C64>,
    g: &'a DMatrix<C64>,
    norm_sq: f64,
    tau: f64,
    weight: f64,
}

impl ModeProblem<'_> {
    /// ‖A_(mode) − X Kᵀ‖² expanded through `M` and the Gram matrix.
    fn fit(&self, x: &DMatrix<C64>) -> f64 {
        let cross: f64 = x.iter().zip(self.m.iter()).map(|(a, b)| (a * b.conj()).re).sum();
        let quad = (x.adjoint() * x * self.g).trace().re;
        self.norm_sq - 2.0 * cross + quad
    }

    fn objective(&self, x: &DMatrix<C64>) -> f64 {
        self.fit(x) + self.weight * penalty(x, self.tau, false).0
    }

    fn gradient(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut grad = x * self.g - self.m;
        if let (_, Some(pg)) = penalty(x, self.tau, true) {
            grad += pg * C64::new(self.weight, 0.0);
        }
        grad
    }

    /// Armijo-backtracked gradient descent from `x`.
    fn descend(&self, mut x: DMatrix<C64>, step: &mut f64) -> DMatrix<C64> {
        let mut fx = self.objective(&x);
        for _ in 0..INNER_STEPS {
            let grad = self.gradient(&x);
            let gnorm_sq = grad.norm_squared();
            if gnorm_sq <= 1e-30 * (1.0 + fx.abs()) {
                break;
            }
            let mut eta = *step * 2.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = &x - &grad * C64::new(eta, 0.0);
                let fc = self.objective(&cand);
                if fc <= fx - 1e-4 * 2.0 * eta * gnorm_sq {
                    accepted = Some((cand, fc));
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    *step = eta;
                    let done = fx - fc <= 1e-15 * fx.abs().max(1e-300);
                    x = cand;
                    fx = fc;
                    if done {
                        break;
                    }
                }
                None => break,
            }
        }
        x
    }
}

fn record(iter: usize, a: &Tensor3, f: &[DMatrix<C64>; 3], lambda: &[C64]) -> Result<(TraceRecord, CpModel)> {
    let model = CpModel::new(lambda.to_vec(), f[0].clone(), f[1].clone(), f[2].clone())
        .or_else(|_| {
            // a zero weight leaves its column untouched, so rebuilding with
            // unit weights and restoring λ keeps the invariant
            CpModel::new(vec![C64::new(1.0, 0.0); lambda.len()], f[0].clone(), f[1].clone(), f[2].clone())
                .and_then(|m| m.with_lambda(lambda.to_vec()))
        })?;
    let res = residual(a, &model)?;
    let rec = TraceRecord {
        iter,
        residual: res,
        lambda_max: model.max_abs_lambda(),
        mu_u: coherence_of_columns(model.u()),
        mu_v: coherence_of_columns(model.v()),
        mu_w: coherence_of_columns(model.w()),
    };
    Ok((rec, model))
}

pub(super) fn diverging(records: &[TraceRecord], opts: &SolverOptions) -> bool {
    let rule = opts.divergence;
    let t = records.len() - 1;
    if rule.window == 0 || t < rule.window {
        return false;
    }
    let (start, end) = (&records[t - rule.window], &records[t]);
    if start.lambda_max <= 0.0 || start.residual <= 0.0 {
        return false;
    }
    let growth = end.lambda_max / start.lambda_max;
    let decrease = (start.residual - end.residual) / start.residual / rule.window as f64;
    growth >= rule.growth && decrease >= 0.0 && decrease < rule.stall
}

pub(super) fn run(
    a: &Tensor3,
    norm: f64,
    opts: &SolverOptions,
    seed: u64,
) -> Result<(CpModel, SolveTrace)> {
    let (l, m, n) = a.dims();
    let r = opts.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = [
        random_unit_columns(&mut rng, l, r),
        random_unit_columns(&mut rng, m, r),
        random_unit_columns(&mut rng, n, r),
    ];
    let mut lambda = fit_lambda(a, &f);
    let norm_sq = norm * norm;
    let caps = opts.mu_caps;
    let mut weight = opts.penalty_weight * norm_sq;
    let mut steps = [1.0 / norm_sq.max(1e-300); 3];

    let (rec0, mut model) = record(0, a, &f, &lambda)?;
    let mut records = vec![rec0];
    let mut status = SolveStatus::MaxIter;

    for iter in 1..=opts.max_iter {
        for mode in 0..3 {
            let mk = mttkrp(a, &f, mode);
            let g = mode_gram(&f, mode);
            let x_ls = &mk * pinv(&g, PINV_RTOL);
            let x = match caps {
                Some(caps) if r > 1 => {
                    let prob = ModeProblem {
                        m: &mk,
                        g: &g,
                        norm_sq,
                        tau: (caps[mode] - CAP_MARGIN).max(0.0),
                        weight,
                    };
                    let x_prev = DMatrix::from_fn(f[mode].nrows(), r, |i, p| f[mode][(i, p)] * lambda[p]);
                    let start = if prob.objective(&x_ls) <= prob.objective(&x_prev) {
                        x_ls
                    } else {
                        x_prev
                    };
                    prob.descend(start, &mut steps[mode])
                }
                _ => x_ls,
            };
            normalize_into(&x, &mut f[mode], &mut lambda);
        }

        let prev = *records.last().unwrap();
        let (rec, next) = record(iter, a, &f, &lambda)?;
        model = next;
        records.push(rec);

        let mut grew = false;
        if let Some(caps) = caps {
            if rec.mus().iter().zip(caps).any(|(mu, cap)| *mu > cap) {
                weight = (weight * opts.penalty_growth).min(MAX_PENALTY_WEIGHT);
                grew = true;
            }
        }
        if diverging(&records, opts) {
            status = SolveStatus::DivergingWeights;
            break;
        }
        let exact = rec.residual <= EXACT_FIT * norm;
        let small_change = (prev.residual - rec.residual).abs() <= opts.rel_tol * prev.residual;
        if !grew && (exact || small_change) {
            status = SolveStatus::Converged;
            break;
        }
    }

    let feasible = caps.map(|caps| {
        records
            .last()
            .unwrap()
            .mus()
            .iter()
            .zip(caps)
            .all(|(mu, cap)| *mu <= cap + CAP_FEASIBILITY_TOL)
    });
    Ok((
        model,
        SolveTrace {
            records,
            status,
            restart: 0,
            seed,
            feasible,
            warnings: Vec::new(),
        },
    ))
}
