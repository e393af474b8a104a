//! Per-pixel sparse non-negative fit: `min ‖I − Bc‖² + λ‖c‖₁, c ≥ 0`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::brdf::BrdfDictionary;
use crate::error::{invalid, Result};
use crate::render::{render_exemplar, ExemplarMatrix, ImageStack, LightingRig, NormalMap};

use super::abundance::AbundanceMatrix;
use super::prox::{lasso_kkt_residual, lasso_objective, nonneg_lasso_gram, LassoOptions, LassoSolution};
use crate::normals::nnls_l1;

/// Single-channel fit.
pub fn fit_sparse(b: &DMatrix<f64>, i: &DVector<f64>, lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    if b.nrows() != i.len() {
        return invalid("profile length does not match matrix rows");
    }
    let gram = b.transpose() * b;
    let rhs = b.transpose() * i;
    let mut sol = nonneg_lasso_gram(&gram, &rhs, lambda, &LassoOptions { polish: false, ..*opts })?;
    if opts.polish {
        // Active-set finish on B itself (QR), better conditioned than the Gram route.
        let exact = nnls_l1(b, i, lambda, None)?.x;
        let f_old = *sol.objective.last().expect("objective starts at 0");
        let fp = lasso_objective(&gram, &rhs, lambda, &exact);
        let slack = 1e-12 * f_old.abs().max(fp.abs());
        if fp <= f_old + slack && lasso_kkt_residual(&gram, &rhs, lambda, &exact) <= lasso_kkt_residual(&gram, &rhs, lambda, &sol.x) {
            sol.objective.push(fp);
            sol.x = exact;
        }
    }
    Ok(sol)
}

/// Channel-blocked fit of one pixel; returns `C·M` coefficients.
pub fn fit_pixel_sparse(profile: &[f64], b: &ExemplarMatrix, lambda: f64, opts: &LassoOptions) -> Result<Vec<f64>> {
    let (q, m, ch) = (b.values.nrows(), b.atoms(), b.channels);
    if profile.len() != q * ch {
        return invalid("profile length does not match exemplar matrix");
    }
    let mut out = Vec::with_capacity(ch * m);
    for k in 0..ch {
        let block = b.values.columns(k * m, m).into_owned();
        let i = DVector::from_column_slice(&profile[k * q..(k + 1) * q]);
        out.extend(fit_sparse(&block, &i, lambda, opts)?.x.iter());
    }
    Ok(out)
}

pub(crate) fn check_inputs(stack: &ImageStack, normals: &NormalMap, dict: &BrdfDictionary, rig: &LightingRig) -> Result<Vec<usize>> {
    if normals.width != stack.width() || normals.height != stack.height() {
        return invalid("normal map and image stack dimensions differ");
    }
    if stack.rig().fingerprint() != rig.fingerprint() {
        return invalid("stack was captured with a different rig");
    }
    if stack.channels() != dict.channels() {
        return invalid("stack and dictionary channel counts differ");
    }
    Ok(stack.valid_pixels().into_iter().filter(|&p| normals.normals[p].is_some()).collect())
}

/// Independent sparse fits at every pixel with both a mask bit and a normal.
pub fn fit_svbrdf_sparse(
    stack: &ImageStack,
    normals: &NormalMap,
    dict: &BrdfDictionary,
    rig: &LightingRig,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<AbundanceMatrix> {
    let pixels = check_inputs(stack, normals, dict, rig)?;
    let cols: Vec<Vec<f64>> = pixels
        .par_iter()
        .map(|&p| {
            let b = render_exemplar(dict, &normals.normals[p].expect("filtered"), rig)?;
            fit_pixel_sparse(stack.profile(p), &b, lambda, opts)
        })
        .collect::<Result<_>>()?;
    let w = stack.width();
    AbundanceMatrix::from_columns(&cols, pixels.iter().map(|&p| ((p % w) as u32, (p / w) as u32)).collect())
}
