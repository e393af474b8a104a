//! Proximal operators and the non-negative lasso solver shared by the
//! per-pixel fit and the full-BRDF dictionary projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::normals::{nnls_gram, GramWorkspace};

/// `S_τ(x) = sgn(x)·max(|x| − τ, 0)`, elementwise.
pub fn soft_threshold(x: &[f64], tau: f64) -> Vec<f64> {
    x.iter().map(|&v| shrink(v, tau)).collect()
}

#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// `max(S_τ(x), 0)`: proximal map of `τ‖·‖₁` plus the non-negativity constraint.
#[inline]
pub fn nonneg_shrink(v: f64, tau: f64) -> f64 {
    (v - tau).max(0.0)
}

/// Singular value thresholding `U·S_β(σ)·Vᵀ`.
pub fn svt(x: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    if !(beta >= 0.0) {
        return invalid("svt threshold must be >= 0");
    }
    if x.is_empty() {
        return Ok(x.clone());
    }
    let svd = x
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let shrunk = svd.singular_values.map(|s| (s - beta).max(0.0));
    Ok(u * DMatrix::from_diagonal(&shrunk) * v_t)
}

pub fn singular_values(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = x
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Count of singular values above `1e-8 · σ_max`.
pub fn numerical_rank(x: &DMatrix<f64>) -> Result<usize> {
    Ok(rank_of(&singular_values(x)?))
}

pub fn rank_of(sorted_desc: &[f64]) -> usize {
    match sorted_desc.first() {
        Some(&max) if max > 0.0 => sorted_desc.iter().filter(|&&s| s > 1e-8 * max).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone)]
pub struct LassoOptions {
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Try to finish with an exact solve on the detected support.
    pub polish: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, rel_tol: 1e-10, polish: true }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `xᵀGx − 2bᵀx + λ·1ᵀx` per accepted iterate (non-increasing).
    pub objective: Vec<f64>,
}

/// `xᵀGx − 2bᵀx + λ·Σx`; equals `‖y − Bx‖² + λ‖x‖₁ − ‖y‖²` for `G = BᵀB`, `b = Bᵀy`.
pub fn lasso_objective(gram: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    (gram * x).dot(x) - 2.0 * rhs.dot(x) + lambda * x.sum()
}

/// KKT violation of the non-negative lasso at `x`, with gradient
/// `g = 2(Gx − b) + λ`: `|g_i|` on the support, `max(0, −g_i)` elsewhere.
pub fn lasso_kkt_residual(gram: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    let g = (gram * x - rhs) * 2.0;
    g.iter()
        .zip(x.iter())
        .map(|(&gi, &xi)| {
            let gi = gi + lambda;
            if xi > 0.0 {
                gi.abs()
            } else {
                (-gi).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a symmetric PSD matrix.
pub fn max_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    if gram.is_empty() {
        return 0.0;
    }
    gram.clone().symmetric_eigenvalues().iter().copied().fold(0.0, f64::max)
}

/// Minimizes `xᵀGx − 2bᵀx + λ‖x‖₁` over `x ≥ 0` by accelerated proximal
/// gradient with objective-based restarts, then optionally polishes the
/// support with an exact equality-constrained solve.
pub fn nonneg_lasso_gram(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    let m = rhs.len();
    if gram.nrows() != m || gram.ncols() != m {
        return invalid("gram/rhs dimension mismatch");
    }
    if !(lambda >= 0.0) || gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return invalid("non-finite input or negative lambda");
    }
    let lipschitz = 2.0 * max_eigenvalue(gram);
    let mut x = DVector::zeros(m);
    let mut objective = vec![0.0];
    if lipschitz <= 0.0 {
        return Ok(LassoSolution { x, iterations: 0, objective });
    }
    let step = 1.0 / lipschitz;
    let prox_step = |point: &DVector<f64>| -> DVector<f64> {
        let grad = (gram * point - rhs) * 2.0;
        (point - grad * step).map(|v| nonneg_shrink(v, lambda * step))
    };

    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut f_old = 0.0;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let mut x_new = prox_step(&y);
        let mut f_new = lasso_objective(gram, rhs, lambda, &x_new);
        if f_new > f_old {
            // Momentum overshoot: restart from the last accepted iterate.
            theta = 1.0;
            x_new = prox_step(&x);
            f_new = lasso_objective(gram, rhs, lambda, &x_new);
            if f_new > f_old {
                break;
            }
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        y = &x_new + (&x_new - &x) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        let change = (f_old - f_new).abs();
        x = x_new;
        objective.push(f_new);
        let scale = f_new.abs().max(f_old.abs()).max(f64::MIN_POSITIVE);
        f_old = f_new;
        if change <= opts.rel_tol * scale {
            break;
        }
    }

    if opts.polish {
        let p = polish_support(gram, rhs, lambda);
        let fp = lasso_objective(gram, rhs, lambda, &p);
        if fp <= f_old {
            objective.push(fp);
            x = p;
        }
    }
    Ok(LassoSolution { x, iterations, objective })
}

/// Exact active-set solve of the same problem: it is NNLS in normal-equation
/// form with right-hand side `b − λ/2`.
fn polish_support(gram: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let shifted: Vec<f64> = rhs.iter().map(|v| v - 0.5 * lambda).collect();
    let x = nnls_gram(gram.as_slice(), &shifted, None, &mut GramWorkspace::default());
    DVector::from_vec(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[1.5, -5.0, 0.0], 0.0), vec![1.5, -5.0, 0.0]);
        assert_eq!(soft_threshold(&[1.5, -5.0], 2.0), vec![0.0, -3.0]);
    }

    #[test]
    fn soft_threshold_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let tau = rng.gen_range(0.0..3.0);
            let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(inf(&soft_threshold(&x, tau)) <= inf(&x));
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn svt_identity_and_annihilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 6, 9);
        let same = svt(&x, 0.0).unwrap();
        assert!((&same - &x).norm() <= 1e-10 * x.norm());
        let smax = singular_values(&x).unwrap()[0];
        assert!(svt(&x, smax).unwrap().norm() < 1e-12);
    }

    #[test]
    fn svt_rank_matches_threshold_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 8, 15);
            let sv = singular_values(&x).unwrap();
            let beta = 0.5 * (sv[2] + sv[3]);
            let expected = sv.iter().filter(|&&s| s > beta).count();
            assert_eq!(numerical_rank(&svt(&x, beta).unwrap()).unwrap(), expected);
        }
    }

    #[test]
    fn svt_is_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let x = random_matrix(&mut rng, 5, 12);
            let y = random_matrix(&mut rng, 5, 12);
            let beta = rng.gen_range(0.0..2.0);
            let lhs = (svt(&x, beta).unwrap() - svt(&y, beta).unwrap()).norm();
            assert!(lhs <= (&x - &y).norm() + 1e-12);
        }
    }

    #[test]
    fn lasso_satisfies_kkt_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let b = random_matrix(&mut rng, 25, 8);
            let y = DVector::from_fn(25, |_, _| rng.gen_range(-1.0..2.0));
            let gram = b.transpose() * &b;
            let rhs = b.transpose() * &y;
            let lambda = rng.gen_range(0.0..1.0);
            let sol = nonneg_lasso_gram(&gram, &rhs, lambda, &LassoOptions::default()).unwrap();
            assert!(sol.x.iter().all(|&v| v >= 0.0));
            let kkt = lasso_kkt_residual(&gram, &rhs, lambda, &sol.x);
            assert!(kkt <= 1e-6 * (2.0 * rhs.amax()), "kkt {kkt}");
            assert!(sol.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let b = random_matrix(&mut rng, 12, 5);
        let y = DVector::from_fn(12, |_, _| rng.gen_range(0.0..1.0));
        let gram = b.transpose() * &b;
        let rhs = b.transpose() * &y;
        let lambda = 2.0 * rhs.amax();
        let sol = nonneg_lasso_gram(&gram, &rhs, lambda, &LassoOptions::default()).unwrap();
        assert!(sol.x.iter().all(|&v| v == 0.0));
    }
}
