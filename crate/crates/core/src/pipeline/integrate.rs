//! Depth from a normal map by least-squares gradient integration.

use crate::error::{invalid, Result};
use crate::io::Raster;
use crate::render::NormalMap;

/// Normals with `n_z` below this are treated as masked.
pub const MIN_NZ: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `None` where masked. Units are pixels; `z` grows toward the viewer.
    pub depth: Vec<Option<f64>>,
}

impl DepthMap {
    /// Single-channel raster with zeros at masked pixels.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.depth.iter().map(|d| d.unwrap_or(0.0) as f32).collect(),
        }
    }
}

/// Sparse Poisson solve for `z` with `∂z/∂x = −n_x/n_z` and `∂z/∂y = −n_y/n_z`
/// (`y` pointing up the image). Each connected region is fixed by zero mean.
pub fn integrate_normals(normals: &NormalMap, mask: Option<&[bool]>) -> Result<DepthMap> {
    let (w, h) = (normals.width, normals.height);
    if mask.is_some_and(|m| m.len() != w * h) {
        return invalid("mask size does not match the normal map");
    }
    // Per-pixel slopes along +x and along +row.
    let slopes: Vec<Option<(f64, f64)>> = (0..w * h)
        .map(|p| {
            let n = normals.normals[p]?;
            if mask.is_some_and(|m| !m[p]) || n.z < MIN_NZ {
                return None;
            }
            Some((-n.x / n.z, n.y / n.z))
        })
        .collect();
    let mut index = vec![usize::MAX; w * h];
    let mut pixels = Vec::new();
    for p in 0..w * h {
        if slopes[p].is_some() {
            index[p] = pixels.len();
            pixels.push(p);
        }
    }
    let k = pixels.len();
    // Edges (i, j, target of z_j − z_i).
    let mut edges = Vec::new();
    for &p in &pixels {
        let (x, y) = (p % w, p / w);
        let (px, py) = slopes[p].expect("valid");
        if x + 1 < w {
            if let Some((qx, _)) = slopes[p + 1] {
                edges.push((index[p], index[p + 1], 0.5 * (px + qx)));
            }
        }
        if y + 1 < h {
            if let Some((_, qy)) = slopes[p + w] {
                edges.push((index[p], index[p + w], 0.5 * (py + qy)));
            }
        }
    }
    let mut rhs = vec![0.0; k];
    for &(i, j, g) in &edges {
        rhs[j] += g;
        rhs[i] -= g;
    }
    let apply = |z: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, _) in &edges {
            let d = z[j] - z[i];
            out[j] += d;
            out[i] -= d;
        }
    };
    let z = conjugate_gradient(apply, &rhs, 1e-12, 20 * k + 100);

    let labels = components(&pixels, &index, w, h);
    let n_comp = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![(0.0, 0usize); n_comp];
    for (i, &c) in labels.iter().enumerate() {
        sums[c].0 += z[i];
        sums[c].1 += 1;
    }
    let mut depth = vec![None; w * h];
    for (i, &p) in pixels.iter().enumerate() {
        let (s, n) = sums[labels[i]];
        depth[p] = Some(z[i] - s / n as f64);
    }
    Ok(DepthMap { width: w, height: h, depth })
}

fn conjugate_gradient(apply: impl Fn(&[f64], &mut [f64]), b: &[f64], tol: f64, max_iters: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol * b_norm.max(1e-300) {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// 4-connected component label of every unknown.
fn components(pixels: &[usize], index: &[usize], w: usize, h: usize) -> Vec<usize> {
    let mut label = vec![usize::MAX; pixels.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..pixels.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let p = pixels[i];
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                let j = index[q];
                if j != usize::MAX && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        next += 1;
    }
    label
}
