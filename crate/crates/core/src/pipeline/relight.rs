//! Point-light relighting from recovered normals and abundances.

use rayon::prelude::*;

use crate::brdf::{BrdfDictionary, Vec3};
use crate::error::{invalid, Result};
use crate::io::Raster;
use crate::reflectance::AbundanceMatrix;
use crate::render::{exemplar_row, NormalMap};

/// Renders every fitted pixel under one point light; other pixels are black.
pub fn relight(
    normals: &NormalMap,
    abundances: &AbundanceMatrix,
    dict: &BrdfDictionary,
    light: &Vec3,
    intensity: f64,
    view: &Vec3,
) -> Result<Raster> {
    let ch = dict.channels();
    let rows = abundances.rows();
    if rows != dict.len() && rows != ch * dict.len() {
        return invalid("abundance rows do not match the dictionary");
    }
    if !(intensity >= 0.0) || (light.norm() - 1.0).abs() > 1e-6 || (view.norm() - 1.0).abs() > 1e-6 {
        return invalid("light and view must be unit vectors with intensity >= 0");
    }
    let (w, h) = (normals.width, normals.height);
    let m = dict.len();
    let pixels: Vec<(usize, Vec<f64>)> = abundances
        .pixel_index()
        .par_iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let (x, y) = (x as usize, y as usize);
            if x >= w || y >= h {
                return invalid("abundance pixel outside the normal map");
            }
            let p = y * w + x;
            let Some(n) = normals.normals[p] else {
                return invalid("abundance pixel has no normal");
            };
            let row = exemplar_row(dict, &n, light, intensity, view)?;
            let c = abundances.column(k);
            let value = (0..ch)
                .map(|c_i| {
                    let block = if rows == m { &c[..] } else { &c[c_i * m..(c_i + 1) * m] };
                    row[c_i * m..(c_i + 1) * m].iter().zip(block).map(|(a, b)| a * b).sum()
                })
                .collect();
            Ok((p, value))
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0f32; w * h * ch];
    for (p, v) in pixels {
        for (c_i, x) in v.into_iter().enumerate() {
            data[p * ch + c_i] = x as f32;
        }
    }
    Ok(Raster { width: w, height: h, channels: ch, data })
}

/// `‖a − b‖ / ‖b‖` over all samples.
pub fn relative_image_error(a: &Raster, b: &Raster) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return invalid("image sizes differ");
    }
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (x, y) in a.data.iter().zip(&b.data) {
        num += (*x as f64 - *y as f64).powi(2);
        den += (*y as f64).powi(2);
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}
