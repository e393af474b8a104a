//! Lawson–Hanson active-set NNLS.
//!
//! Two entry points share one driver: [`nnls`] solves the passive-set least
//! squares by QR of the selected columns; [`nnls_gram`] works from the normal
//! equations `BᵀB`, `BᵀI` and is what the candidate scans use.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `‖I − Bx‖₂`.
    pub residual: f64,
}

/// Active-set driver. `solve` returns the unconstrained least-squares
/// solution restricted to the passive columns (or `None` when they are
/// numerically dependent); `dual` returns `w = Bᵀ(I − Bx)`.
fn lawson_hanson(
    m: usize,
    allowed: Option<&[bool]>,
    tol: f64,
    mut solve: impl FnMut(&[usize]) -> Option<Vec<f64>>,
    mut dual: impl FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut passive: Vec<usize> = Vec::with_capacity(m);
    let mut blocked = vec![false; m];
    if let Some(a) = allowed {
        for (b, &ok) in blocked.iter_mut().zip(a) {
            *b = !ok;
        }
    }
    let never = blocked.clone();
    dual(&x, &mut w);
    for _ in 0..3 * m + 3 {
        let mut best = None;
        let mut best_w = tol;
        for j in 0..m {
            if !blocked[j] && x[j] == 0.0 && !passive.contains(&j) && w[j] > best_w {
                best_w = w[j];
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive.push(j);
        let mut first = true;
        let mut changed = false;
        loop {
            let z = match solve(&passive) {
                Some(z) => z,
                None => {
                    passive.retain(|&k| k != j);
                    blocked[j] = true;
                    break;
                }
            };
            if first && z[passive.len() - 1] <= 0.0 {
                // The entering coordinate cannot move; numerically degenerate.
                passive.pop();
                blocked[j] = true;
                break;
            }
            first = false;
            changed = true;
            if z.iter().all(|&v| v > 0.0) {
                for (&k, &v) in passive.iter().zip(&z) {
                    x[k] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&k, &v) in passive.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(x[k] / (x[k] - v));
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (&k, &v) in passive.iter().zip(&z) {
                x[k] += alpha * (v - x[k]);
            }
            let before = passive.len();
            passive.retain(|&k| {
                if x[k] <= 0.0 {
                    x[k] = 0.0;
                    false
                } else {
                    true
                }
            });
            if passive.len() == before {
                // Rounding left every coordinate positive; drop the smallest.
                let (pos, _) = passive
                    .iter()
                    .enumerate()
                    .min_by(|a, b| x[*a.1].total_cmp(&x[*b.1]))
                    .expect("passive set non-empty");
                x[passive[pos]] = 0.0;
                passive.remove(pos);
            }
            if passive.is_empty() {
                break;
            }
        }
        dual(&x, &mut w);
        if changed {
            // Coordinates blocked as degenerate get another chance once x moves.
            for k in 0..m {
                if blocked[k] && !never[k] && k != j {
                    blocked[k] = false;
                }
            }
        }
    }
    x
}

fn check_finite<'a>(vals: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if vals.into_iter().any(|v| !v.is_finite()) {
        return invalid("non-finite input to NNLS");
    }
    Ok(())
}

/// `min ‖I − Bc‖₂ s.t. c ≥ 0`.
pub fn nnls(b: &DMatrix<f64>, i: &DVector<f64>) -> Result<NnlsSolution> {
    nnls_masked(b, i, None)
}

/// [`nnls`] with columns outside `allowed` pinned to zero.
pub fn nnls_masked(b: &DMatrix<f64>, i: &DVector<f64>, allowed: Option<&[bool]>) -> Result<NnlsSolution> {
    nnls_l1(b, i, 0.0, allowed)
}

/// `min ‖I − Bc‖₂² + λ·Σc s.t. c ≥ 0` by the same active-set driver, with the
/// passive solves done by QR of the selected columns.
pub fn nnls_l1(b: &DMatrix<f64>, i: &DVector<f64>, lambda: f64, allowed: Option<&[bool]>) -> Result<NnlsSolution> {
    let (q, m) = b.shape();
    if q == 0 || m == 0 {
        return invalid("NNLS needs a non-empty matrix");
    }
    if i.len() != q || allowed.is_some_and(|a| a.len() != m) {
        return invalid("NNLS dimension mismatch");
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid("lambda must be finite and non-negative");
    }
    check_finite(b.iter().chain(i.iter()))?;
    let half = 0.5 * lambda;
    let bt_i = b.transpose() * i;
    let tol = 1e-15 * bt_i.amax().max(f64::MIN_POSITIVE) * (m as f64);
    let col_norm = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let x = lawson_hanson(
        m,
        allowed,
        tol,
        |passive| {
            let sub = b.select_columns(passive);
            let qr = sub.qr();
            let r = qr.r();
            if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * col_norm) {
                return None;
            }
            // R z = Qᵀ I − R⁻ᵀ (λ/2)·1
            let mut rhs = qr.q().transpose() * i;
            if half > 0.0 {
                let shift = r.transpose().solve_lower_triangular(&DVector::from_element(passive.len(), half))?;
                rhs -= shift;
            }
            r.solve_upper_triangular(&rhs).map(|z| z.iter().copied().collect())
        },
        |x, w| {
            let r = i - b * DVector::from_column_slice(x);
            let g = b.transpose() * r;
            for (wk, gk) in w.iter_mut().zip(g.iter()) {
                *wk = gk - half;
            }
        },
    );
    let x = DVector::from_vec(x);
    let residual = (i - b * &x).norm();
    Ok(NnlsSolution { x, residual })
}

/// Reusable buffers for [`nnls_gram`].
#[derive(Debug, Default, Clone)]
pub struct GramWorkspace {
    chol: Vec<f64>,
    tmp: Vec<f64>,
}

/// Lawson–Hanson on the normal equations. `gram` is `M × M` (column-major,
/// symmetric), `rhs = BᵀI`. Returns `c ≥ 0`.
pub fn nnls_gram(gram: &[f64], rhs: &[f64], allowed: Option<&[bool]>, ws: &mut GramWorkspace) -> Vec<f64> {
    let m = rhs.len();
    debug_assert_eq!(gram.len(), m * m);
    let tol = 1e-12 * rhs.iter().fold(f64::MIN_POSITIVE, |a, v| a.max(v.abs())) * (m as f64);
    let diag_max = (0..m).map(|k| gram[k * m + k]).fold(0.0, f64::max);
    let GramWorkspace { chol, tmp } = ws;
    lawson_hanson(
        m,
        allowed,
        tol,
        |passive| {
            let k = passive.len();
            chol.clear();
            chol.resize(k * k, 0.0);
            // Cholesky of G_PP, lower triangle row-major.
            for a in 0..k {
                for b in 0..=a {
                    let mut s = gram[passive[a] * m + passive[b]];
                    for t in 0..b {
                        s -= chol[a * k + t] * chol[b * k + t];
                    }
                    if a == b {
                        if s <= 1e-13 * diag_max {
                            return None;
                        }
                        chol[a * k + a] = s.sqrt();
                    } else {
                        chol[a * k + b] = s / chol[b * k + b];
                    }
                }
            }
            tmp.clear();
            tmp.extend(passive.iter().map(|&p| rhs[p]));
            for a in 0..k {
                let mut s = tmp[a];
                for t in 0..a {
                    s -= chol[a * k + t] * tmp[t];
                }
                tmp[a] = s / chol[a * k + a];
            }
            for a in (0..k).rev() {
                let mut s = tmp[a];
                for t in a + 1..k {
                    s -= chol[t * k + a] * tmp[t];
                }
                tmp[a] = s / chol[a * k + a];
            }
            Some(tmp.clone())
        },
        |x, w| {
            for (r, wr) in w.iter_mut().enumerate() {
                let mut s = rhs[r];
                for (c, &xc) in x.iter().enumerate() {
                    if xc != 0.0 {
                        s -= gram[c * m + r] * xc;
                    }
                }
                *wr = s;
            }
        },
    )
}

/// Largest KKT violation of `c` for `min ‖I − Bc‖²`, `c ≥ 0`, with
/// `g = 2Bᵀ(Bc − I)`: `|g_i|` on the support, `max(0, −g_i)` elsewhere.
pub fn nnls_kkt_residual(b: &DMatrix<f64>, i: &DVector<f64>, c: &DVector<f64>) -> f64 {
    let g = b.transpose() * (b * c - i) * 2.0;
    g.iter()
        .zip(c.iter())
        .map(|(&gi, &ci)| if ci > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

/// Channel-blocked NNLS: `b` is `Q × C·M`, `profile` holds `C` blocks of `Q`.
pub fn nnls_blocks(
    b: &DMatrix<f64>,
    channels: usize,
    profile: &[f64],
    allowed: Option<&[bool]>,
) -> Result<NnlsSolution> {
    let (q, cols) = b.shape();
    let m = cols / channels;
    if profile.len() != q * channels || m * channels != cols {
        return invalid("profile length does not match exemplar matrix");
    }
    let mut x = Vec::with_capacity(cols);
    let mut res2 = 0.0;
    for ch in 0..channels {
        let block = b.columns(ch * m, m).into_owned();
        let i = DVector::from_column_slice(&profile[ch * q..(ch + 1) * q]);
        let s = nnls_masked(&block, &i, allowed)?;
        res2 += s.residual * s.residual;
        x.extend(s.x.iter());
    }
    Ok(NnlsSolution { x: DVector::from_vec(x), residual: res2.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let b = DMatrix::identity(3, 3);
        let s = nnls(&b, &DVector::from_vec(vec![1.0, 0.0, 2.5])).unwrap();
        assert!((&s.x - DVector::from_vec(vec![1.0, 0.0, 2.5])).amax() < 1e-12);
        assert!(s.residual < 1e-12);
        let b = DMatrix::identity(2, 2);
        let s = nnls(&b, &DVector::from_vec(vec![-1.0, 2.0])).unwrap();
        assert!((&s.x - DVector::from_vec(vec![0.0, 2.0])).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let b = DMatrix::from_element(2, 2, f64::NAN);
        assert!(nnls(&b, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn random_instances_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ws = GramWorkspace::default();
        for _ in 0..200 {
            let b = DMatrix::from_fn(20, 8, |_, _| rng.gen_range(-1.0..1.0));
            let i = DVector::from_fn(20, |_, _| rng.gen_range(-1.0..1.0));
            let s = nnls(&b, &i).unwrap();
            let scale = (b.transpose() * &i).amax();
            assert!(s.x.iter().all(|&v| v >= 0.0));
            assert!(nnls_kkt_residual(&b, &i, &s.x) <= 1e-8 * scale);
            let gram = b.transpose() * &b;
            let rhs = b.transpose() * &i;
            let xg = DVector::from_vec(nnls_gram(gram.as_slice(), rhs.as_slice(), None, &mut ws));
            assert!(nnls_kkt_residual(&b, &i, &xg) <= 1e-8 * scale);
            assert!(((&i - &b * &xg).norm() - s.residual).abs() <= 1e-9 * (1.0 + s.residual));
        }
    }

    #[test]
    fn agrees_with_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let b = DMatrix::from_fn(15, 5, |_, _| rng.gen_range(0.0..1.0));
            let i = DVector::from_fn(15, |_, _| rng.gen_range(-0.5..1.0));
            let s = nnls(&b, &i).unwrap();
            let gram = b.transpose() * &b;
            let step = 1.0 / gram.clone().symmetric_eigenvalues().max();
            let mut x = DVector::zeros(5);
            for _ in 0..200_000 {
                let g = &gram * &x - b.transpose() * &i;
                x = (&x - g * step).map(|v| v.max(0.0));
            }
            assert!((&x - &s.x).amax() <= 1e-6, "{} vs {}", x, s.x);
        }
    }

    #[test]
    fn mask_pins_columns() {
        let b = DMatrix::identity(3, 3);
        let i = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = nnls_masked(&b, &i, Some(&[true, false, true])).unwrap();
        assert!((&s.x - DVector::from_vec(vec![1.0, 0.0, 3.0])).amax() < 1e-12);
        assert_eq!(s.x[1], 0.0);
        let mut ws = GramWorkspace::default();
        let x = nnls_gram(b.as_slice(), i.as_slice(), Some(&[false, true, true]), &mut ws);
        assert_eq!(x, vec![0.0, 2.0, 3.0]);
    }

    #[test]
    fn dependent_columns_handled() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let i = DVector::from_vec(vec![2.0, 1.0, 2.0]);
        let s = nnls(&b, &i).unwrap();
        assert!(s.residual < 1e-12);
        let mut ws = GramWorkspace::default();
        let gram = b.transpose() * &b;
        let rhs = b.transpose() * &i;
        let x = DVector::from_vec(nnls_gram(gram.as_slice(), rhs.as_slice(), None, &mut ws));
        assert!((&i - &b * x).norm() < 1e-9);
    }
}
